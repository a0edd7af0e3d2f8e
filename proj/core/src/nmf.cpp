#include "maskforge/nmf.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "maskforge/errors.hpp"
#include "maskforge/rng.hpp"

namespace maskforge::nmf {

namespace {

constexpr double kFloor = 1e-12;
constexpr int kFormatVersion = 1;

Eigen::MatrixXd positive_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = 1.0 - rng.uniform();  // (0,1]: multiplicative updates need strict positivity
  return m;
}

Eigen::MatrixXd floored_product(const Eigen::MatrixXd& w, const Eigen::MatrixXd& h) {
  return ((w * h).array().max(kFloor)).matrix();
}

void update_activations(const Eigen::MatrixXd& s, const Eigen::MatrixXd& w, Eigen::MatrixXd& h) {
  const Eigen::MatrixXd ratio = s.cwiseQuotient(floored_product(w, h));
  const Eigen::VectorXd denom = w.colwise().sum().cwiseMax(kFloor);
  h = h.cwiseProduct(w.transpose() * ratio);
  h = denom.cwiseInverse().asDiagonal() * h;
}

void update_basis(const Eigen::MatrixXd& s, Eigen::MatrixXd& w, Eigen::MatrixXd& h) {
  const Eigen::MatrixXd ratio = s.cwiseQuotient(floored_product(w, h));
  const Eigen::VectorXd denom = h.rowwise().sum().cwiseMax(kFloor);
  w = w.cwiseProduct(ratio * h.transpose());
  w = w * denom.cwiseInverse().asDiagonal();

  // L1-normalize columns and absorb the scale into H; WH is unchanged.
  const Eigen::VectorXd col_sums = w.colwise().sum().cwiseMax(kFloor);
  w = w * col_sums.cwiseInverse().asDiagonal();
  h = col_sums.asDiagonal() * h;
}

void check_nonnegative(const Eigen::MatrixXd& s, const char* who) {
  if ((s.array() < 0.0).any() || !s.allFinite())
    throw InvalidInput(std::string(who) + ": input must be nonnegative and finite");
}

}  // namespace

double generalized_kl(const Eigen::MatrixXd& s, const Eigen::MatrixXd& wh) {
  if (s.rows() != wh.rows() || s.cols() != wh.cols())
    throw ShapeError("generalized_kl: shapes differ");
  double d = 0.0;
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double x = s(i, j);
      const double y = std::max(wh(i, j), kFloor);
      if (x > 0.0) d += x * std::log(x / y) - x + y;
      else d += y;
    }
  }
  return d;
}

NmfModel train_nmf(const dsp::MagSpectrogram& s, int basis_count, int iters, std::uint64_t seed) {
  if (basis_count < 1 || iters < 1)
    throw InvalidConfig("train_nmf: basis_count and iters must be >= 1");
  check_nonnegative(s.values, "train_nmf");

  const Eigen::MatrixXd v = s.values.transpose();  // F x N, NMF convention
  Rng rng(seed);
  Eigen::MatrixXd w = positive_uniform(v.rows(), basis_count, rng);
  Eigen::MatrixXd h = positive_uniform(basis_count, v.cols(), rng);

  NmfModel model;
  model.kl_trace.reserve(iters);
  for (int it = 0; it < iters; ++it) {
    update_activations(v, w, h);
    update_basis(v, w, h);
    model.kl_trace.push_back(generalized_kl(v, w * h));
  }
  model.basis.w = std::move(w);
  model.activations.h = std::move(h);
  return model;
}

DecodeResult decode_nmf(const dsp::MagSpectrogram& s_sep, const NmfBasis& basis, int iters,
                        std::uint64_t seed) {
  if (iters < 1) throw InvalidConfig("decode_nmf: iters must be >= 1");
  check_nonnegative(s_sep.values, "decode_nmf");
  if (s_sep.values.cols() != basis.bin_count())
    throw ShapeError("decode_nmf: spectrogram bin count does not match the basis");

  const Eigen::MatrixXd v = s_sep.values.transpose();
  Rng rng(seed);
  Eigen::MatrixXd h = positive_uniform(basis.basis_count(), v.cols(), rng);

  DecodeResult result;
  result.kl_trace.reserve(iters);
  for (int it = 0; it < iters; ++it) {
    update_activations(v, basis.w, h);
    result.kl_trace.push_back(generalized_kl(v, basis.w * h));
  }
  result.activations.h = std::move(h);
  return result;
}

Eigen::MatrixXd reconstruct(const NmfBasis& basis, const NmfActivations& activations) {
  if (basis.basis_count() != activations.h.rows())
    throw ShapeError("reconstruct: basis count does not match activation rows");
  return basis.w * activations.h;
}

std::pair<masks::Mask, masks::Mask> nmf_masks(const Eigen::MatrixXd& recon_1,
                                              const Eigen::MatrixXd& recon_2) {
  if (recon_1.rows() != recon_2.rows() || recon_1.cols() != recon_2.cols())
    throw ShapeError("nmf_masks: reconstruction shapes differ");

  masks::Mask m1;
  m1.values.resize(recon_1.cols(), recon_1.rows());  // back to frames x bins
  for (Eigen::Index f = 0; f < recon_1.rows(); ++f) {
    for (Eigen::Index n = 0; n < recon_1.cols(); ++n) {
      const double d = recon_1(f, n) + recon_2(f, n);
      m1.values(n, f) = d == 0.0 ? 0.5 : recon_1(f, n) / std::max(d, kFloor);
    }
  }
  masks::Mask m2 = masks::complement_mask(m1);
  return {std::move(m1), std::move(m2)};
}

void save_basis(const NmfBasis& basis, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_basis: cannot open " + path.string());
  out << std::setprecision(17);
  out << "maskforge-nmf " << kFormatVersion << "\n";
  out << "shape " << basis.w.rows() << ' ' << basis.w.cols() << "\n";
  for (Eigen::Index i = 0; i < basis.w.rows(); ++i) {
    for (Eigen::Index j = 0; j < basis.w.cols(); ++j)
      out << (j ? " " : "") << basis.w(i, j);
    out << "\n";
  }
  if (!out) throw IoError("save_basis: write failed for " + path.string());
}

NmfBasis load_basis(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_basis: cannot open " + path.string());

  std::string magic, tag;
  int version = -1;
  if (!(in >> magic >> version) || magic != "maskforge-nmf")
    throw FormatError("load_basis: malformed header");
  if (version != kFormatVersion) {
    std::ostringstream msg;
    msg << "load_basis: format version mismatch: expected " << kFormatVersion << ", got "
        << version;
    throw FormatError(msg.str());
  }

  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> rows >> cols) || tag != "shape" || rows <= 0 || cols <= 0)
    throw FormatError("load_basis: malformed or missing field 'shape'");

  NmfBasis basis;
  basis.w.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (!(in >> basis.w(i, j)))
        throw FormatError("load_basis: truncated matrix payload");
  if (!basis.w.allFinite() || (basis.w.array() < 0.0).any())
    throw FormatError("load_basis: matrix entries must be nonnegative and finite");
  return basis;
}

}  // namespace maskforge::nmf
