#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kinerec {

/// Result of the 2D spatial normalization: coords lie in [-1, 1], the root
/// keypoint maps to (0, 0), and (center, scale) invert the mapping exactly.
struct NormalizedKeypoints {
  Eigen::MatrixX2d coords;
  Eigen::Vector2d center{0.0, 0.0};  ///< the subtracted root pixel
  double scale = 1.0;                ///< max |coordinate| after centering, pixels
};

/// Zero-center on the root keypoint, then divide by the max absolute
/// coordinate. Throws when all keypoints coincide (scale would be 0).
NormalizedKeypoints normalize_2d(const Eigen::MatrixX2d& pixel_2d, int root_index);

/// Row-major flattening used for every network input: [u0, v0, u1, v1, ...].
Eigen::VectorXd flatten_2d(const Eigen::MatrixX2d& coords);

/// Row-major flattening used for every network target: [x0, y0, z0, x1, ...].
Eigen::VectorXd flatten_3d(const Eigen::MatrixX3d& points);

Eigen::MatrixX2d denormalize_2d(const NormalizedKeypoints& normalized);

struct LifterLayer {
  Eigen::MatrixXd weights;  ///< rows = outputs, cols = inputs
  Eigen::VectorXd bias;
};

/// Fully connected 2D-to-3D lifter [2N, hidden, hidden, 3N] with
/// leaky-rectifier (slope 0.01) hidden activations and identity output. The
/// forward pass subtracts the predicted root row, so the root output is
/// exactly (0,0,0).
struct LifterNetwork {
  int n = 0;  ///< keypoint count
  int root_index = 0;
  std::vector<LifterLayer> layers;
};

/// He-initialized network from a seed (weights ~ N(0, 2/fan_in), zero biases).
LifterNetwork make_lifter(int n, int root_index, int hidden, std::uint64_t seed);

/// input: flattened normalized coords (2N, keypoint-major). Output: N x 3
/// root-relative camera-frame meters, root row exactly zero.
Eigen::MatrixX3d lifter_forward(const LifterNetwork& net, const Eigen::VectorXd& input);

enum class Optimizer {
  kSgdMomentum,  ///< classic momentum SGD; `momentum` is the decay factor
  kAdam,         ///< adaptive moments (betas 0.9/0.999, epsilon 1e-8); ignores `momentum`
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 500;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  Optimizer optimizer = Optimizer::kSgdMomentum;
};

struct TrainHistory {
  std::vector<double> train_loss;  ///< epochs + 1 entries; [0] is the freshly initialized loss
  std::vector<double> val_loss;
};

/// Mini-batch training on mean squared error with the configured optimizer
/// (momentum SGD by default, Adam optional). inputs: S x 2N rows of
/// flattened normalized coords; targets: S x 3N rows of flattened
/// root-relative 3D. Single-threaded and bit-deterministic given the seed.
TrainHistory lifter_train(LifterNetwork& net, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& targets, const TrainConfig& config);

/// Max relative error between analytic gradients and central finite
/// differences (h = 1e-5) on `param_count` randomly chosen parameters.
double lifter_gradient_check(const LifterNetwork& net, const Eigen::VectorXd& input,
                             const Eigen::VectorXd& target, int param_count, std::uint64_t seed);

std::string serialize_lifter(const LifterNetwork& net, const std::string& provenance = "");
LifterNetwork parse_lifter(const std::string& json_text);
LifterNetwork load_lifter(const std::string& path);

/// Least-squares affine baseline y = W^T [x; 1] fitted in closed form; the
/// reference the trained lifter must beat.
struct LinearLifter {
  int n = 0;
  int root_index = 0;
  Eigen::MatrixXd weights;  ///< (2N + 1) x 3N, last row is the bias
};

LinearLifter fit_linear_baseline(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                 int n, int root_index);
Eigen::MatrixX3d linear_forward(const LinearLifter& baseline, const Eigen::VectorXd& input);

}  // namespace kinerec
