#include "maskforge/neural.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge::neural {

namespace {

constexpr int kFormatVersion = 1;

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return ((-z.array()).exp() + 1.0).inverse().matrix();
}

void check_cost_spec(const CostSpec& spec, Eigen::Index width) {
  if (spec.kind != CostKind::Discriminative) return;
  if (spec.lambda < 0.0 || spec.lambda >= 1.0)
    throw InvalidConfig("discriminative lambda must lie in [0,1)");
  if (spec.source_dims.size() < 2)
    throw InvalidConfig("discriminative cost needs at least two source blocks");
  Eigen::Index total = 0;
  for (int d : spec.source_dims) {
    if (d <= 0) throw InvalidConfig("source_dims entries must be positive");
    if (d != spec.source_dims.front())
      throw InvalidConfig("source blocks must share one width");
    total += d;
  }
  if (total != width)
    throw InvalidConfig("source_dims do not sum to the output width");
}

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* who) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(who) + ": prediction and target shapes differ");
}

std::vector<Eigen::Index> block_offsets(const std::vector<int>& dims) {
  std::vector<Eigen::Index> offs(dims.size());
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    offs[i] = at;
    at += dims[i];
  }
  return offs;
}

/// Forward pass that keeps every layer activation for reverse accumulation.
std::vector<Eigen::MatrixXd> forward_all(const Mlp& net, const Eigen::MatrixXd& batch) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(net.layer_count() + 1);
  acts.push_back(batch);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Eigen::MatrixXd z = acts.back() * net.weights[l].transpose();
    z.rowwise() += net.biases[l].transpose();
    acts.push_back(sigmoid(z));
  }
  return acts;
}

/// Reverse accumulation from stored activations. delta = dC/dz per layer;
/// a(1-a) is the sigmoid derivative.
Gradients backward_from(const Mlp& net, const std::vector<Eigen::MatrixXd>& acts,
                        const Eigen::MatrixXd& batch_target, const CostSpec& spec) {
  Gradients grads;
  grads.weights.resize(net.layer_count());
  grads.biases.resize(net.layer_count());

  const Eigen::MatrixXd& out = acts.back();
  Eigen::MatrixXd delta = cost_gradient(out, batch_target, spec)
                              .cwiseProduct(out)
                              .cwiseProduct((1.0 - out.array()).matrix());
  for (std::size_t l = net.layer_count(); l-- > 0;) {
    grads.weights[l] = delta.transpose() * acts[l];
    grads.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * net.weights[l])
                  .cwiseProduct(acts[l])
                  .cwiseProduct((1.0 - acts[l].array()).matrix());
    }
  }
  return grads;
}

}  // namespace

Mlp init_mlp(const std::vector<int>& layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2)
    throw InvalidConfig("init_mlp: need at least an input and an output layer");
  for (int d : layer_dims)
    if (d <= 0) throw InvalidConfig("init_mlp: layer widths must be positive");

  Mlp net;
  net.layer_dims = layer_dims;
  net.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double r = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i)      // fill order pinned for
      for (Eigen::Index j = 0; j < w.cols(); ++j)    // seed reproducibility
        w(i, j) = rng.uniform(-r, r);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& batch) {
  if (batch.cols() != net.input_dim())
    throw ShapeError("forward: batch width does not match the input layer");
  Eigen::MatrixXd a = batch;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Eigen::MatrixXd z = a * net.weights[l].transpose();
    z.rowwise() += net.biases[l].transpose();
    a = sigmoid(z);
  }
  return a;
}

double cost_mask_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  check_same_shape(pred, target, "cost_mask_mse");
  return (pred - target).squaredNorm();
}

double cost_discriminative(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                           const CostSpec& spec) {
  check_same_shape(pred, target, "cost_discriminative");
  if (spec.kind != CostKind::Discriminative)
    throw InvalidConfig("cost_discriminative: spec.kind is not Discriminative");
  check_cost_spec(spec, pred.cols());

  const double fit = cost_mask_mse(pred, target);
  if (spec.lambda == 0.0) return fit;

  // Dissimilarity term over all ordered source pairs (i, j), j != i:
  // predicted block i against reference block j.
  const auto offs = block_offsets(spec.source_dims);
  double dissim = 0.0;
  for (std::size_t i = 0; i < spec.source_dims.size(); ++i) {
    for (std::size_t j = 0; j < spec.source_dims.size(); ++j) {
      if (i == j) continue;
      dissim += (pred.middleCols(offs[i], spec.source_dims[i]) -
                 target.middleCols(offs[j], spec.source_dims[j]))
                    .squaredNorm();
    }
  }
  return fit - spec.lambda * dissim;
}

double cost_value(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                  const CostSpec& spec) {
  return spec.kind == CostKind::MaskMse ? cost_mask_mse(pred, target)
                                        : cost_discriminative(pred, target, spec);
}

Eigen::MatrixXd cost_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                              const CostSpec& spec) {
  check_same_shape(pred, target, "cost_gradient");
  Eigen::MatrixXd grad = 2.0 * (pred - target);
  if (spec.kind == CostKind::MaskMse) return grad;

  check_cost_spec(spec, pred.cols());
  if (spec.lambda == 0.0) return grad;

  const auto offs = block_offsets(spec.source_dims);
  for (std::size_t i = 0; i < spec.source_dims.size(); ++i) {
    auto block = grad.middleCols(offs[i], spec.source_dims[i]);
    for (std::size_t j = 0; j < spec.source_dims.size(); ++j) {
      if (i == j) continue;
      block -= 2.0 * spec.lambda *
               (pred.middleCols(offs[i], spec.source_dims[i]) -
                target.middleCols(offs[j], spec.source_dims[j]));
    }
  }
  return grad;
}

Gradients backprop(const Mlp& net, const Eigen::MatrixXd& batch_in,
                   const Eigen::MatrixXd& batch_target, const CostSpec& spec) {
  if (batch_target.cols() != net.output_dim())
    throw ShapeError("backprop: target width does not match the output layer");
  if (batch_in.rows() != batch_target.rows())
    throw ShapeError("backprop: input and target row counts differ");

  return backward_from(net, forward_all(net, batch_in), batch_target, spec);
}

TrainResult train(Mlp net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const CostSpec& spec, const TrainConfig& cfg) {
  if (inputs.rows() == 0) throw InvalidInput("train: empty dataset");
  if (inputs.rows() != targets.rows())
    throw ShapeError("train: inputs and targets are not row-aligned");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate < 0.0)
    throw InvalidConfig("train: epochs and batch_size must be >= 1, learning_rate >= 0");
  check_cost_spec(spec, net.output_dim());

  const Eigen::Index total = inputs.rows();
  std::vector<Eigen::Index> order(total);
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Rng rng(cfg.seed);
  net.cost = spec;
  net.seed = cfg.seed;

  TrainResult result;
  result.epoch_costs.reserve(cfg.epochs);

  Eigen::MatrixXd batch_in, batch_tg;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (Eigen::Index i = total - 1; i > 0; --i) {  // Fisher-Yates
        const Eigen::Index j = static_cast<Eigen::Index>(rng.below(i + 1));
        std::swap(order[i], order[j]);
      }
    }

    double epoch_cost_sum = 0.0;
    for (Eigen::Index start = 0; start < total; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, total - start);
      batch_in.resize(b, inputs.cols());
      batch_tg.resize(b, targets.cols());
      for (Eigen::Index r = 0; r < b; ++r) {
        batch_in.row(r) = inputs.row(order[start + r]);
        batch_tg.row(r) = targets.row(order[start + r]);
      }

      const auto acts = forward_all(net, batch_in);
      epoch_cost_sum += cost_value(acts.back(), batch_tg, spec);
      const Gradients grads = backward_from(net, acts, batch_tg, spec);

      const double step = cfg.learning_rate / static_cast<double>(b);
      for (std::size_t l = 0; l < net.layer_count(); ++l) {
        net.weights[l] -= step * grads.weights[l];
        net.biases[l] -= step * grads.biases[l];
      }
    }
    result.epoch_costs.push_back(epoch_cost_sum / static_cast<double>(total));
  }

  result.net = std::move(net);
  return result;
}

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_mlp: cannot open " + path.string());
  out << std::setprecision(17);

  out << "maskforge-mlp " << kFormatVersion << "\n";
  out << "dims";
  for (int d : net.layer_dims) out << ' ' << d;
  out << "\n";
  out << "cost " << (net.cost.kind == CostKind::MaskMse ? "mask_mse" : "discriminative") << "\n";
  out << "lambda " << net.cost.lambda << "\n";
  out << "source_dims";
  for (int d : net.cost.source_dims) out << ' ' << d;
  out << "\n";
  out << "seed " << net.seed << "\n";
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    out << "weights " << l << ' ' << net.weights[l].rows() << ' ' << net.weights[l].cols() << "\n";
    for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
        out << (j ? " " : "") << net.weights[l](i, j);
      out << "\n";
    }
    out << "biases " << l << ' ' << net.biases[l].size() << "\n";
    for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
      out << (i ? " " : "") << net.biases[l](i);
    out << "\n";
  }
  if (!out) throw IoError("save_mlp: write failed for " + path.string());
}

namespace {

[[noreturn]] void malformed(const std::string& field) {
  throw FormatError("load_mlp: malformed or missing field '" + field + "'");
}

void expect_tag(std::istream& in, const std::string& tag) {
  std::string got;
  if (!(in >> got) || got != tag) malformed(tag);
}

}  // namespace

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_mlp: cannot open " + path.string());

  std::string magic;
  int version = -1;
  if (!(in >> magic >> version)) malformed("header");
  if (magic != "maskforge-mlp") malformed("header");
  if (version != kFormatVersion) {
    std::ostringstream msg;
    msg << "load_mlp: format version mismatch: expected " << kFormatVersion << ", got " << version;
    throw FormatError(msg.str());
  }

  Mlp net;
  expect_tag(in, "dims");
  {
    std::string rest;
    std::getline(in, rest);
    std::istringstream line(rest);
    int d;
    while (line >> d) net.layer_dims.push_back(d);
    if (net.layer_dims.size() < 2) malformed("dims");
  }

  std::string cost_kind;
  expect_tag(in, "cost");
  if (!(in >> cost_kind)) malformed("cost");
  if (cost_kind == "mask_mse")
    net.cost.kind = CostKind::MaskMse;
  else if (cost_kind == "discriminative")
    net.cost.kind = CostKind::Discriminative;
  else
    malformed("cost");

  expect_tag(in, "lambda");
  if (!(in >> net.cost.lambda)) malformed("lambda");

  expect_tag(in, "source_dims");
  {
    std::string rest;
    std::getline(in, rest);
    std::istringstream line(rest);
    int d;
    while (line >> d) net.cost.source_dims.push_back(d);
  }

  expect_tag(in, "seed");
  if (!(in >> net.seed)) malformed("seed");

  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    std::size_t idx;
    Eigen::Index rows, cols;
    expect_tag(in, "weights");
    if (!(in >> idx >> rows >> cols) || idx != l) malformed("weights");
    if (rows != net.layer_dims[l + 1] || cols != net.layer_dims[l]) malformed("weights shape");
    Eigen::MatrixXd w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        if (!(in >> w(i, j))) malformed("weights values");
    if (!w.allFinite()) malformed("weights values (non-finite)");
    net.weights.push_back(std::move(w));

    Eigen::Index n;
    expect_tag(in, "biases");
    if (!(in >> idx >> n) || idx != l || n != net.layer_dims[l + 1]) malformed("biases");
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (!(in >> b(i))) malformed("biases values");
    if (!b.allFinite()) malformed("biases values (non-finite)");
    net.biases.push_back(std::move(b));
  }
  return net;
}

}  // namespace maskforge::neural
