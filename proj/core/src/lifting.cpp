#include "kinerec/lifting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "kinerec/errors.hpp"
#include "kinerec/rng.hpp"
#include "kinerec/serialization.hpp"

namespace kinerec {
namespace {

constexpr double kLeakySlope = 0.01;

void validate_network(const LifterNetwork& net) {
  if (net.n < 2) throw ValidationError("lifter needs at least 2 keypoints");
  if (net.root_index < 0 || net.root_index >= net.n) {
    throw ValidationError("lifter root index out of range");
  }
  if (net.layers.empty()) throw ValidationError("lifter has no layers");
  Eigen::Index in = 2 * net.n;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const LifterLayer& layer = net.layers[l];
    if (layer.weights.cols() != in || layer.bias.size() != layer.weights.rows()) {
      throw ValidationError("lifter layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
      throw ValidationError("lifter layer " + std::to_string(l) + " has non-finite parameters");
    }
    in = layer.weights.rows();
  }
  if (in != 3 * net.n) throw ValidationError("lifter output width must be 3N");
}

/// Activations for a batch (rows = samples): acts[0] is the input, acts[l+1]
/// the post-activation output of layer l (identity on the last layer, before
/// root subtraction).
std::vector<Eigen::MatrixXd> forward_batch(const LifterNetwork& net, const Eigen::MatrixXd& x) {
  std::vector<Eigen::MatrixXd> acts;
  acts.reserve(net.layers.size() + 1);
  acts.push_back(x);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Eigen::MatrixXd z = acts.back() * net.layers[l].weights.transpose();
    z.rowwise() += net.layers[l].bias.transpose();
    if (l + 1 < net.layers.size()) {
      z = z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Root-row post-subtraction on a batch of flattened (keypoint-major) outputs.
void subtract_root_rows(Eigen::MatrixXd& raw, int n, int root_index) {
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd root_col = raw.col(3 * root_index + c);
    for (int k = 0; k < n; ++k) raw.col(3 * k + c) -= root_col;
  }
}

/// Gradient of the root subtraction: g_raw = g_out - e_root * sum_k g_out_k,
/// applied per coordinate.
void backprop_root_rows(Eigen::MatrixXd& grad, int n, int root_index) {
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd column_sum = Eigen::VectorXd::Zero(grad.rows());
    for (int k = 0; k < n; ++k) column_sum += grad.col(3 * k + c);
    grad.col(3 * root_index + c) -= column_sum;
  }
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;
};

/// MSE loss over the batch plus parameter gradients. Loss normalization is
/// 1 / (batch * 3N), matching lifter_train's reported losses.
double backward_batch(const LifterNetwork& net, const std::vector<Eigen::MatrixXd>& acts,
                      const Eigen::MatrixXd& targets, Gradients& grads) {
  const Eigen::Index batch = targets.rows();
  const double norm = 1.0 / (static_cast<double>(batch) * static_cast<double>(targets.cols()));

  Eigen::MatrixXd out = acts.back();
  subtract_root_rows(out, net.n, net.root_index);
  const Eigen::MatrixXd diff = out - targets;
  const double loss = norm * diff.squaredNorm();

  Eigen::MatrixXd delta = 2.0 * norm * diff;  // dL/d(out)
  backprop_root_rows(delta, net.n, net.root_index);
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    grads.weights[l].noalias() = delta.transpose() * acts[l];
    grads.bias[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd upstream = delta * net.layers[l].weights;
      // Leaky-rectifier derivative uses the pre-activation sign, recovered
      // from the stored post-activation (the map is sign-preserving).
      delta = upstream.binaryExpr(acts[l], [](double g, double a) {
        return a > 0.0 ? g : kLeakySlope * g;
      });
    }
  }
  return loss;
}

double evaluate_loss(const LifterNetwork& net, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& targets) {
  const std::vector<Eigen::MatrixXd> acts = forward_batch(net, inputs);
  Eigen::MatrixXd out = acts.back();
  subtract_root_rows(out, net.n, net.root_index);
  return (out - targets).squaredNorm() /
         (static_cast<double>(inputs.rows()) * static_cast<double>(targets.cols()));
}

}  // namespace

NormalizedKeypoints normalize_2d(const Eigen::MatrixX2d& pixel_2d, int root_index) {
  if (pixel_2d.rows() < 2) throw ValidationError("normalization needs at least 2 keypoints");
  if (root_index < 0 || root_index >= pixel_2d.rows()) {
    throw ValidationError("root index out of range");
  }
  NormalizedKeypoints out;
  out.center = pixel_2d.row(root_index).transpose();
  out.coords = pixel_2d;
  out.coords.rowwise() -= out.center.transpose();
  out.scale = out.coords.cwiseAbs().maxCoeff();
  if (out.scale <= 0.0) {
    throw ValidationError("degenerate input: all keypoints coincide, scale is zero");
  }
  out.coords /= out.scale;
  out.coords.row(root_index).setZero();
  return out;
}

Eigen::VectorXd flatten_2d(const Eigen::MatrixX2d& coords) {
  Eigen::VectorXd out(2 * coords.rows());
  for (Eigen::Index k = 0; k < coords.rows(); ++k) {
    out[2 * k] = coords(k, 0);
    out[2 * k + 1] = coords(k, 1);
  }
  return out;
}

Eigen::VectorXd flatten_3d(const Eigen::MatrixX3d& points) {
  Eigen::VectorXd out(3 * points.rows());
  for (Eigen::Index k = 0; k < points.rows(); ++k) {
    out[3 * k] = points(k, 0);
    out[3 * k + 1] = points(k, 1);
    out[3 * k + 2] = points(k, 2);
  }
  return out;
}

Eigen::MatrixX2d denormalize_2d(const NormalizedKeypoints& normalized) {
  Eigen::MatrixX2d out = normalized.coords * normalized.scale;
  out.rowwise() += normalized.center.transpose();
  return out;
}

LifterNetwork make_lifter(int n, int root_index, int hidden, std::uint64_t seed) {
  if (n < 2) throw ValidationError("lifter needs at least 2 keypoints");
  if (root_index < 0 || root_index >= n) throw ValidationError("lifter root index out of range");
  if (hidden < 1) throw ValidationError("hidden width must be positive");
  LifterNetwork net;
  net.n = n;
  net.root_index = root_index;
  DeterministicRng rng(splitmix64(seed ^ 0x6c69667465724e65ull));
  const std::vector<int> widths = {2 * n, hidden, hidden, 3 * n};
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LifterLayer layer;
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double stddev = std::sqrt(2.0 / fan_in);
    layer.weights.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = stddev * rng.normal();
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Eigen::MatrixX3d lifter_forward(const LifterNetwork& net, const Eigen::VectorXd& input) {
  validate_network(net);
  if (input.size() != 2 * net.n) {
    throw ValidationError("lifter input must have length 2N = " + std::to_string(2 * net.n));
  }
  const std::vector<Eigen::MatrixXd> acts = forward_batch(net, input.transpose());
  Eigen::MatrixXd out = acts.back();
  subtract_root_rows(out, net.n, net.root_index);
  Eigen::MatrixX3d points(net.n, 3);
  for (int k = 0; k < net.n; ++k) {
    for (int c = 0; c < 3; ++c) points(k, c) = out(0, 3 * k + c);
  }
  points.row(net.root_index).setZero();
  return points;
}

TrainHistory lifter_train(LifterNetwork& net, const Eigen::MatrixXd& inputs,
                          const Eigen::MatrixXd& targets, const TrainConfig& config) {
  validate_network(net);
  const Eigen::Index s = inputs.rows();
  if (targets.rows() != s) throw ValidationError("inputs and targets disagree on sample count");
  if (inputs.cols() != 2 * net.n || targets.cols() != 3 * net.n) {
    throw ValidationError("training data width does not match the network");
  }
  if (config.learning_rate <= 0.0) throw ValidationError("learning_rate must be positive");
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw ValidationError("momentum must be in [0, 1)");
  }
  if (config.validation_fraction <= 0.0 || config.validation_fraction > 0.5) {
    throw ValidationError("validation_fraction must be in (0, 0.5]");
  }
  if (config.batch_size < 1) throw ValidationError("batch_size must be positive");
  const Eigen::Index val_count = std::llround(config.validation_fraction * static_cast<double>(s));
  if (s - val_count < config.batch_size) {
    throw ValidationError("not enough training samples for one batch after the validation split");
  }

  DeterministicRng rng(splitmix64(config.seed ^ 0x747261696e4c6674ull));
  std::vector<Eigen::Index> order(s);
  std::iota(order.begin(), order.end(), 0);
  for (Eigen::Index i = s - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(static_cast<int>(i) + 1)]);
  }
  const std::vector<Eigen::Index> val_idx(order.begin(), order.begin() + val_count);
  std::vector<Eigen::Index> train_idx(order.begin() + val_count, order.end());

  auto gather = [](const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
    return out;
  };
  const Eigen::MatrixXd train_x = gather(inputs, train_idx);
  const Eigen::MatrixXd train_y = gather(targets, train_idx);
  const Eigen::MatrixXd val_x = gather(inputs, val_idx);
  const Eigen::MatrixXd val_y = gather(targets, val_idx);

  Gradients grads, velocity;
  // Adam second moments reuse the Gradients layout; `velocity` doubles as the
  // first moment. Only the branches below distinguish the two optimizers.
  Gradients second_moment;
  for (const LifterLayer& layer : net.layers) {
    grads.weights.emplace_back(layer.weights.rows(), layer.weights.cols());
    grads.bias.emplace_back(layer.bias.size());
    velocity.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    velocity.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
    second_moment.weights.push_back(
        Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    second_moment.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  constexpr double kAdamBeta1 = 0.9;
  constexpr double kAdamBeta2 = 0.999;
  constexpr double kAdamEpsilon = 1e-8;
  long long adam_step = 0;

  TrainHistory history;
  history.train_loss.push_back(evaluate_loss(net, train_x, train_y));
  if (val_count > 0) history.val_loss.push_back(evaluate_loss(net, val_x, val_y));

  const Eigen::Index train_count = train_x.rows();
  std::vector<Eigen::Index> batch_order(train_count);
  std::iota(batch_order.begin(), batch_order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (Eigen::Index i = train_count - 1; i > 0; --i) {
      std::swap(batch_order[i], batch_order[rng.uniform_int(static_cast<int>(i) + 1)]);
    }
    for (Eigen::Index start = 0; start + config.batch_size <= train_count;
         start += config.batch_size) {
      Eigen::MatrixXd bx(config.batch_size, train_x.cols());
      Eigen::MatrixXd by(config.batch_size, train_y.cols());
      for (int i = 0; i < config.batch_size; ++i) {
        bx.row(i) = train_x.row(batch_order[start + i]);
        by.row(i) = train_y.row(batch_order[start + i]);
      }
      const std::vector<Eigen::MatrixXd> acts = forward_batch(net, bx);
      const double loss = backward_batch(net, acts, by, grads);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(start / config.batch_size));
      }
      if (config.optimizer == Optimizer::kAdam) {
        ++adam_step;
        const double bias1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(adam_step));
        const double bias2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(adam_step));
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
          velocity.weights[l] =
              kAdamBeta1 * velocity.weights[l] + (1.0 - kAdamBeta1) * grads.weights[l];
          velocity.bias[l] = kAdamBeta1 * velocity.bias[l] + (1.0 - kAdamBeta1) * grads.bias[l];
          second_moment.weights[l] =
              kAdamBeta2 * second_moment.weights[l] +
              (1.0 - kAdamBeta2) * grads.weights[l].array().square().matrix();
          second_moment.bias[l] = kAdamBeta2 * second_moment.bias[l] +
                                  (1.0 - kAdamBeta2) * grads.bias[l].array().square().matrix();
          net.layers[l].weights.array() -=
              config.learning_rate * (velocity.weights[l].array() / bias1) /
              ((second_moment.weights[l].array() / bias2).sqrt() + kAdamEpsilon);
          net.layers[l].bias.array() -= config.learning_rate *
                                        (velocity.bias[l].array() / bias1) /
                                        ((second_moment.bias[l].array() / bias2).sqrt() +
                                         kAdamEpsilon);
        }
      } else {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
          velocity.weights[l] = config.momentum * velocity.weights[l] -
                                config.learning_rate * grads.weights[l];
          velocity.bias[l] = config.momentum * velocity.bias[l] -
                             config.learning_rate * grads.bias[l];
          net.layers[l].weights += velocity.weights[l];
          net.layers[l].bias += velocity.bias[l];
        }
      }
    }
    history.train_loss.push_back(evaluate_loss(net, train_x, train_y));
    if (val_count > 0) history.val_loss.push_back(evaluate_loss(net, val_x, val_y));
  }
  return history;
}

double lifter_gradient_check(const LifterNetwork& net, const Eigen::VectorXd& input,
                             const Eigen::VectorXd& target, int param_count, std::uint64_t seed) {
  validate_network(net);
  if (input.size() != 2 * net.n || target.size() != 3 * net.n) {
    throw ValidationError("gradient check sample has the wrong shape");
  }
  LifterNetwork work = net;
  const Eigen::MatrixXd x = input.transpose();
  const Eigen::MatrixXd y = target.transpose();

  Gradients grads;
  for (const LifterLayer& layer : work.layers) {
    grads.weights.emplace_back(layer.weights.rows(), layer.weights.cols());
    grads.bias.emplace_back(layer.bias.size());
  }
  backward_batch(work, forward_batch(work, x), y, grads);

  DeterministicRng rng(splitmix64(seed ^ 0x6772616443686b30ull));
  const double h = 1e-5;
  double max_rel = 0.0;
  for (int trial = 0; trial < param_count; ++trial) {
    const int l = rng.uniform_int(static_cast<int>(work.layers.size()));
    LifterLayer& layer = work.layers[l];
    const bool pick_bias = rng.uniform() < 0.1;
    double* param;
    double analytic;
    if (pick_bias) {
      const int i = rng.uniform_int(static_cast<int>(layer.bias.size()));
      param = &layer.bias[i];
      analytic = grads.bias[l][i];
    } else {
      const int r = rng.uniform_int(static_cast<int>(layer.weights.rows()));
      const int c = rng.uniform_int(static_cast<int>(layer.weights.cols()));
      param = &layer.weights(r, c);
      analytic = grads.weights[l](r, c);
    }
    const double saved = *param;
    *param = saved + h;
    const double loss_plus = evaluate_loss(work, x, y);
    *param = saved - h;
    const double loss_minus = evaluate_loss(work, x, y);
    *param = saved;
    const double numeric = (loss_plus - loss_minus) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) / std::max(std::abs(analytic) +
                                                               std::abs(numeric), 1e-8);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

std::string serialize_lifter(const LifterNetwork& net, const std::string& provenance) {
  validate_network(net);
  JsonWriter w;
  w.begin_object();
  w.key("n").value(net.n);
  w.key("root_index").value(net.root_index);
  w.key("layers").begin_array();
  for (const LifterLayer& layer : net.layers) {
    w.begin_object();
    w.key("rows").value(static_cast<int>(layer.weights.rows()));
    w.key("cols").value(static_cast<int>(layer.weights.cols()));
    w.key("weights").begin_array();
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.value(layer.weights(r, c));
    }
    w.end_array();
    w.key("bias").value(layer.bias);
    w.end_object();
  }
  w.end_array();
  if (!provenance.empty()) w.key("provenance").value(provenance);
  w.end_object();
  return w.str() + "\n";
}

LifterNetwork parse_lifter(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("malformed lifter JSON: ") + e.what());
  }
  try {
    LifterNetwork net;
    net.n = doc.at("n").get<int>();
    net.root_index = doc.at("root_index").get<int>();
    for (const auto& l : doc.at("layers")) {
      LifterLayer layer;
      const int rows = l.at("rows").get<int>();
      const int cols = l.at("cols").get<int>();
      if (rows < 1 || cols < 1) throw ValidationError("lifter layer has non-positive shape");
      const auto& weights = l.at("weights");
      if (static_cast<int>(weights.size()) != rows * cols) {
        throw ValidationError("lifter layer weight count does not match rows*cols");
      }
      layer.weights.resize(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) layer.weights(r, c) = weights[r * cols + c].get<double>();
      }
      const auto& bias = l.at("bias");
      if (static_cast<int>(bias.size()) != rows) {
        throw ValidationError("lifter layer bias count does not match rows");
      }
      layer.bias.resize(rows);
      for (int r = 0; r < rows; ++r) layer.bias[r] = bias[r].get<double>();
      net.layers.push_back(std::move(layer));
    }
    validate_network(net);
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid lifter JSON: ") + e.what());
  }
}

LifterNetwork load_lifter(const std::string& path) { return parse_lifter(read_text_file(path)); }

LinearLifter fit_linear_baseline(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                                 int n, int root_index) {
  if (inputs.rows() != targets.rows() || inputs.rows() < 1) {
    throw ValidationError("baseline needs matching, nonempty inputs and targets");
  }
  if (inputs.cols() != 2 * n || targets.cols() != 3 * n) {
    throw ValidationError("baseline data width does not match the keypoint count");
  }
  LinearLifter baseline;
  baseline.n = n;
  baseline.root_index = root_index;
  Eigen::MatrixXd design(inputs.rows(), inputs.cols() + 1);
  design.leftCols(inputs.cols()) = inputs;
  design.col(inputs.cols()).setOnes();
  baseline.weights = design.colPivHouseholderQr().solve(targets);
  return baseline;
}

Eigen::MatrixX3d linear_forward(const LinearLifter& baseline, const Eigen::VectorXd& input) {
  if (input.size() + 1 != baseline.weights.rows()) {
    throw ValidationError("baseline input has the wrong length");
  }
  Eigen::VectorXd design(input.size() + 1);
  design.head(input.size()) = input;
  design[input.size()] = 1.0;
  const Eigen::VectorXd flat = baseline.weights.transpose() * design;
  Eigen::MatrixX3d points(baseline.n, 3);
  for (int k = 0; k < baseline.n; ++k) {
    for (int c = 0; c < 3; ++c) points(k, c) = flat[3 * k + c];
  }
  points.rowwise() -= points.row(baseline.root_index).eval();
  return points;
}

}  // namespace kinerec
