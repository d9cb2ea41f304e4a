#pragma once

#include "hedonic/core_types.hpp"
#include "hedonic/random.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_set>

namespace hedonic {

/// Hidden layer widths of every price network.
inline constexpr std::array<Index, 3> kHiddenWidths = {128, 64, 32};

enum class Activation { relu, tanh };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  throw ArgumentError("unknown activation '" + std::string(text) + "'");
}

struct Layer {
  Eigen::MatrixXd weights;  // fan_in x fan_out
  Eigen::VectorXd bias;

  bool operator==(const Layer& other) const {
    return weights == other.weights && bias == other.bias;
  }
};

/// Fully connected network input -> 128 -> 64 -> 32 -> 1 with a linear output.
struct Network {
  std::vector<Index> widths;
  std::vector<Layer> layers;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  Index input_dim() const { return widths.front(); }

  Index parameter_count() const {
    Index total = 0;
    for (const auto& l : layers) total += l.weights.size() + l.bias.size();
    return total;
  }

  bool operator==(const Network&) const = default;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Weights ~ U(-a, a) with a = sqrt(6 / fan_in), i.e. variance 2 / fan_in;
/// biases zero.
inline Network init_network(Index input_dim, std::uint64_t seed, Activation activation = Activation::relu) {
  if (input_dim < 1) throw ArgumentError("network input dimension must be >= 1");
  Network net;
  net.widths = {input_dim, kHiddenWidths[0], kHiddenWidths[1], kHiddenWidths[2], 1};
  net.activation = activation;
  net.seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const Index fan_in = net.widths[l];
    const Index fan_out = net.widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in));
    Layer layer;
    layer.weights.resize(fan_in, fan_out);
    for (Index j = 0; j < fan_out; ++j)
      for (Index i = 0; i < fan_in; ++i) layer.weights(i, j) = a * (2.0 * uniform01(rng) - 1.0);
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace detail {

inline void activate(Activation a, Eigen::MatrixXd& z) {
  if (a == Activation::relu)
    z = z.cwiseMax(0.0);
  else
    z = z.array().tanh().matrix();
}

/// Multiplies `delta` in place by the activation derivative, given the
/// activated values.
inline void activation_backward(Activation a, const Eigen::MatrixXd& activated, Eigen::MatrixXd& delta) {
  if (a == Activation::relu)
    delta = (activated.array() > 0.0).select(delta, 0.0);
  else
    delta.array() *= 1.0 - activated.array().square();
}

/// Test-only fault injection for backpropagation.
struct BackpropFault {
  int flip_sign_layer = -1;
};

}  // namespace detail

/// Network output for each row.
inline Eigen::VectorXd forward(const Network& net, const Eigen::MatrixXd& rows) {
  if (rows.cols() != net.input_dim())
    throw ArgumentError("network expects " + std::to_string(net.input_dim()) + " inputs, got " +
                        std::to_string(rows.cols()));
  Eigen::MatrixXd a = rows;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Eigen::MatrixXd z = a * net.layers[l].weights;
    z.rowwise() += net.layers[l].bias.transpose();
    if (l + 1 < net.layers.size()) detail::activate(net.activation, z);
    a = std::move(z);
  }
  return a.col(0);
}

struct Gradients {
  std::vector<Layer> layers;
};

/// Mean squared error over `rows` and its gradient with respect to every
/// parameter.
inline double loss_and_gradient(const Network& net, const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets,
                                Gradients& grad, const detail::BackpropFault* fault = nullptr) {
  const std::size_t L = net.layers.size();
  std::vector<Eigen::MatrixXd> acts(L + 1);
  acts[0] = rows;
  for (std::size_t l = 0; l < L; ++l) {
    acts[l + 1].noalias() = acts[l] * net.layers[l].weights;
    acts[l + 1].rowwise() += net.layers[l].bias.transpose();
    if (l + 1 < L) detail::activate(net.activation, acts[l + 1]);
  }
  const double m = static_cast<double>(rows.rows());
  const Eigen::VectorXd err = acts[L].col(0) - targets;
  const double loss = err.squaredNorm() / m;

  grad.layers.resize(L);
  Eigen::MatrixXd delta = (2.0 / m) * err;
  for (std::size_t l = L; l-- > 0;) {
    auto& g = grad.layers[l];
    g.weights.noalias() = acts[l].transpose() * delta;
    g.bias = delta.colwise().sum().transpose();
    if (fault && fault->flip_sign_layer == static_cast<int>(l)) {
      g.weights = -g.weights;
      g.bias = -g.bias;
    }
    if (l > 0) {
      Eigen::MatrixXd next = delta * net.layers[l].weights.transpose();
      detail::activation_backward(net.activation, acts[l], next);
      delta = std::move(next);
    }
  }
  return loss;
}

inline double mse_loss(const Network& net, const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets) {
  return (forward(net, rows) - targets).squaredNorm() / static_cast<double>(rows.rows());
}

enum class Optimizer { adam, sgd };

struct TrainConfig {
  int epochs = 500;
  int batch_size = 32;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int patience = 25;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Train against standardized targets and fold the inverse transform
  /// into the output layer afterwards.
  bool standardize_target = false;

  void validate() const {
    if (epochs < 1) throw ArgumentError("epochs must be >= 1");
    if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be > 0");
    if (patience < 1) throw ArgumentError("patience must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
      throw ArgumentError("validation fraction must be in (0, 0.5)");
  }
};

struct EpochLoss {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainHistory {
  std::vector<EpochLoss> epochs;
  int best_epoch = 0;
  double best_val_mse = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  Network network;
  TrainHistory history;
  RowIndices train_rows;       // positions within the design matrix
  RowIndices validation_rows;
};

namespace detail {

struct AdamState {
  std::vector<Layer> m, v;
  long step = 0;

  explicit AdamState(const Network& net) {
    for (const auto& l : net.layers) {
      m.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
      v.push_back(m.back());
    }
  }
};

inline void apply_update(Network& net, const Gradients& grad, const TrainConfig& cfg, AdamState& state) {
  if (cfg.optimizer == Optimizer::sgd) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      net.layers[l].weights.noalias() -= cfg.learning_rate * grad.layers[l].weights;
      net.layers[l].bias.noalias() -= cfg.learning_rate * grad.layers[l].bias;
    }
    return;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double rate = cfg.learning_rate * std::sqrt(c2) / c1;
  const double eps = cfg.adam_epsilon * std::sqrt(c2);
  const auto step = [&](auto& param, const auto& g, auto& m, auto& v) {
    m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * g.array();
    v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
    param.array() -= rate * m.array() / (v.array().sqrt() + eps);
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    step(net.layers[l].weights, grad.layers[l].weights, state.m[l].weights, state.v[l].weights);
    step(net.layers[l].bias, grad.layers[l].bias, state.m[l].bias, state.v[l].bias);
  }
}

inline Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& X, const RowIndices& rows, std::size_t begin,
                                   std::size_t end) {
  Eigen::MatrixXd out(static_cast<Index>(end - begin), X.cols());
  for (std::size_t i = begin; i < end; ++i) out.row(static_cast<Index>(i - begin)) = X.row(rows[i]);
  return out;
}

}  // namespace detail

/// Mini-batch training on mean squared error with early stopping on a
/// held-out validation slice. The returned network carries the parameters
/// of the best validation epoch and predicts in the units of `y`.
inline TrainResult train(Network net, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const TrainConfig& cfg) {
  cfg.validate();
  const Index n = X.rows();
  if (n < 10) throw ArgumentError("training needs at least 10 rows");
  if (X.cols() != net.input_dim()) throw ArgumentError("training matrix width does not match network input");
  if (y.size() != n) throw ArgumentError("target length does not match rows");

  TrainResult result;
  Rng rng(cfg.seed);
  RowIndices order = iota_rows(n);
  shuffle_rows(order, rng);
  const auto n_val = static_cast<std::size_t>(
      std::max<Index>(1, static_cast<Index>(std::llround(cfg.validation_fraction * static_cast<double>(n)))));
  result.validation_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  result.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  double target_mean = 0.0;
  double target_scale = 1.0;
  {
    double sum = 0.0;
    for (auto r : result.train_rows) sum += y(r);
    target_mean = sum / static_cast<double>(result.train_rows.size());
    if (cfg.standardize_target) {
      double ss = 0.0;
      for (auto r : result.train_rows) ss += (y(r) - target_mean) * (y(r) - target_mean);
      target_scale = std::sqrt(ss / static_cast<double>(result.train_rows.size()));
      if (!(target_scale > 0.0)) target_scale = 1.0;
    }
  }
  Eigen::VectorXd targets = y;
  if (cfg.standardize_target)
    targets = (y.array() - target_mean) / target_scale;
  else
    net.layers.back().bias(0) = target_mean;

  const Eigen::MatrixXd X_val = detail::gather_rows(X, result.validation_rows, 0, n_val);
  Eigen::VectorXd y_val(static_cast<Index>(n_val));
  for (std::size_t i = 0; i < n_val; ++i) y_val(static_cast<Index>(i)) = targets(result.validation_rows[i]);
  const double unit = target_scale * target_scale;

  detail::AdamState adam(net);
  Gradients grad;
  Network best = net;
  int since_best = 0;
  RowIndices epoch_order = result.train_rows;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rows(epoch_order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < epoch_order.size(); start += batch) {
      const std::size_t end = std::min(epoch_order.size(), start + batch);
      const Eigen::MatrixXd xb = detail::gather_rows(X, epoch_order, start, end);
      Eigen::VectorXd yb(static_cast<Index>(end - start));
      for (std::size_t i = start; i < end; ++i) yb(static_cast<Index>(i - start)) = targets(epoch_order[i]);
      const double loss = loss_and_gradient(net, xb, yb, grad);
      if (!std::isfinite(loss)) throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
      loss_sum += loss * static_cast<double>(end - start);
      detail::apply_update(net, grad, cfg, adam);
    }
    const double val = mse_loss(net, X_val, y_val);
    if (!std::isfinite(val)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.epochs.push_back(
        {epoch, unit * loss_sum / static_cast<double>(epoch_order.size()), unit * val});
    if (unit * val < result.history.best_val_mse) {
      result.history.best_val_mse = unit * val;
      result.history.best_epoch = epoch;
      best = net;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  if (cfg.standardize_target) {
    auto& out = best.layers.back();
    out.weights *= target_scale;
    out.bias = out.bias.array() * target_scale + target_mean;
  }
  result.network = std::move(best);
  return result;
}

inline TrainResult train(Network net, const DesignMatrix& dm, const TrainConfig& cfg) {
  return train(std::move(net), dm.X, dm.y, cfg);
}

namespace detail {

inline double& parameter_at(Network& net, Index flat) {
  for (auto& l : net.layers) {
    if (flat < l.weights.size()) return l.weights.data()[flat];
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias(flat);
    flat -= l.bias.size();
  }
  throw ArgumentError("parameter index out of range");
}

inline double gradient_at(const Gradients& g, Index flat) {
  for (const auto& l : g.layers) {
    if (flat < l.weights.size()) return l.weights.data()[flat];
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias(flat);
    flat -= l.bias.size();
  }
  throw ArgumentError("parameter index out of range");
}

}  // namespace detail

struct GradientCheckOptions {
  Index samples = 256;
  std::uint64_t seed = 0;
  const detail::BackpropFault* fault = nullptr;
};

/// Largest relative difference between backpropagated gradients and
/// central finite differences over a random subset of parameters.
inline double gradient_check(const Network& net, const Eigen::MatrixXd& rows, const Eigen::VectorXd& targets,
                             double epsilon, const GradientCheckOptions& opts = {}) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3)) throw ArgumentError("epsilon must be in [1e-7, 1e-3]");
  Gradients analytic;
  loss_and_gradient(net, rows, targets, analytic, opts.fault);

  const Index total = net.parameter_count();
  RowIndices chosen = iota_rows(total);
  Rng rng(opts.seed);
  shuffle_rows(chosen, rng);
  chosen.resize(static_cast<std::size_t>(std::min(total, opts.samples)));

  Network probe = net;
  double worst = 0.0;
  for (Index flat : chosen) {
    double& param = detail::parameter_at(probe, flat);
    const double original = param;
    param = original + epsilon;
    const double up = mse_loss(probe, rows, targets);
    param = original - epsilon;
    const double down = mse_loss(probe, rows, targets);
    param = original;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = detail::gradient_at(analytic, flat);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace hedonic
