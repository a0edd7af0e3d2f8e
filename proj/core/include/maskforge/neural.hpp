#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace maskforge::neural {

enum class CostKind { MaskMse, Discriminative };

/**
 * Cost selector. MaskMse is the plain squared error over all entries.
 * Discriminative subtracts lambda times the squared distances between each
 * predicted source block and every *other* source's reference block, which
 * pushes the predictions apart. lambda must lie in [0,1): at lambda >= 1 the
 * quadratic form is unbounded below.
 */
struct CostSpec {
  CostKind kind = CostKind::MaskMse;
  double lambda = 0.0;
  std::vector<int> source_dims;  // Discriminative only; must sum to the output width
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

/// Fully connected net, sigmoid at every layer including the output.
/// weights[l] is d_{l+1} x d_l; biases[l] has d_{l+1} entries.
struct Mlp {
  std::vector<int> layer_dims;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  // Provenance carried into the model file.
  CostSpec cost;
  std::uint64_t seed = 0;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct TrainResult {
  Mlp net;
  std::vector<double> epoch_costs;
};

/// Glorot-uniform weights (r = sqrt(6/(fan_in+fan_out))), zero biases.
/// Deterministic for a given seed.
Mlp init_mlp(const std::vector<int>& layer_dims, std::uint64_t seed);

/// batch is B x d_0, one example per row; returns B x d_L in (0,1).
Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& batch);

/// Sum of squared differences over all entries (no averaging).
double cost_mask_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

double cost_discriminative(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                           const CostSpec& spec);

double cost_value(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                  const CostSpec& spec);

/// dC/dpred for the matching cost, same shape as pred.
Eigen::MatrixXd cost_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target,
                              const CostSpec& spec);

/// Exact reverse-mode gradients of the summed batch cost for every weight and
/// bias.
Gradients backprop(const Mlp& net, const Eigen::MatrixXd& batch_in,
                   const Eigen::MatrixXd& batch_target, const CostSpec& spec);

/**
 * Minibatch SGD. Each epoch shuffles the rows (seeded Fisher-Yates), then
 * steps theta <- theta - lr * grad with gradients averaged over the batch
 * dimension, so the learning rate is batch-size independent. The returned
 * per-epoch costs follow the same convention: per-frame cost summed over
 * features, averaged over frames.
 */
TrainResult train(Mlp net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const CostSpec& spec, const TrainConfig& cfg);

/// Versioned text format; numbers carry 17 significant digits so the round
/// trip is bit exact.
void save_mlp(const Mlp& net, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace maskforge::neural
