#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace fredse {

enum class Activation { Tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/*
 * Fully connected feed-forward architecture: `depth` hidden layers of
 * `width` units with the chosen activation, followed by an affine output
 * layer (no activation). Depth counts hidden layers only.
 */
class NetworkArch {
 public:
  NetworkArch(int input_dim, int output_dim, int width, int depth, Activation activation = Activation::Tanh);

  int input_dim() const noexcept { return input_dim_; }
  int output_dim() const noexcept { return output_dim_; }
  int width() const noexcept { return width_; }
  int depth() const noexcept { return depth_; }
  Activation activation() const noexcept { return activation_; }

  /// Number of affine layers (depth + 1).
  int layer_count() const noexcept { return depth_ + 1; }
  int fan_in(int layer) const;
  int fan_out(int layer) const;
  /// Offset of layer `layer` inside the flat parameter vector.
  std::size_t layer_offset(int layer) const;
  /// Sum over layers of (fan_in + 1) * fan_out.
  std::size_t parameter_count() const;

  bool operator==(const NetworkArch&) const = default;

 private:
  int input_dim_;
  int output_dim_;
  int width_;
  int depth_;
  Activation activation_;
};

void to_json(nlohmann::json& j, const NetworkArch& a);
NetworkArch arch_from_json(const nlohmann::json& j);

/*
 * All weights and biases of a network, stored in one flat buffer.
 *
 * Layer order is input->hidden_1, hidden_1->hidden_2, ..., hidden_depth->output.
 * Within a layer the (fan_out x fan_in) weight matrix comes first in
 * column-major order, followed by the fan_out biases. A gradient has the same
 * type and layout.
 */
class NetworkWeights {
 public:
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;

  /// Zero-initialised weights for `arch`.
  explicit NetworkWeights(NetworkArch arch);
  /// Unflatten; throws ShapeError if the size does not match the architecture.
  NetworkWeights(NetworkArch arch, Eigen::VectorXd flat);

  const NetworkArch& arch() const noexcept { return arch_; }
  const Eigen::VectorXd& flat() const noexcept { return flat_; }
  Eigen::VectorXd& flat() noexcept { return flat_; }

  ConstMatrixMap weight(int layer) const;
  MatrixMap weight(int layer);
  ConstVectorMap bias(int layer) const;
  VectorMap bias(int layer);

  bool operator==(const NetworkWeights& other) const { return arch_ == other.arch_ && flat_ == other.flat_; }

 private:
  NetworkArch arch_;
  Eigen::VectorXd flat_;
};

using NetworkGradient = NetworkWeights;

Eigen::VectorXd flatten(const NetworkWeights& w);
NetworkWeights unflatten(const NetworkArch& arch, const Eigen::VectorXd& flat);

/// Weights ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases zero.
NetworkWeights init_weights(const NetworkArch& arch, std::uint64_t seed);

/// Single-point evaluation.
Eigen::VectorXd forward(const NetworkWeights& w, std::span<const double> x);

/// Batched evaluation; `inputs` is input_dim x P, the result output_dim x P.
Eigen::MatrixXd forward_batch(const NetworkWeights& w, const Eigen::MatrixXd& inputs);

/// Hidden-layer activations of one batch, kept for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> hidden;  // depth entries, each width x P
  Eigen::MatrixXd output;               // output_dim x P
};

ForwardCache forward_cached(const NetworkWeights& w, const Eigen::MatrixXd& inputs);

/// Sum over the columns p of d(upstream.col(p) . forward(inputs.col(p))) / d(weights).
NetworkGradient backprop(const NetworkWeights& w, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream);
NetworkGradient backprop(const NetworkWeights& w, const ForwardCache& cache, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& upstream);

/// Per-example (x, upstream gradient) form.
NetworkGradient backprop(const NetworkWeights& w,
                         const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& batch);

/*
 * Bias-corrected Adam on a flat parameter vector. The same state type drives
 * the network weights and the low-dimensional parameter of interest.
 */
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index size) : m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size)) {}
};

/// In-place update. Throws NumericError on a non-finite gradient coordinate.
void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& st, double lr);

/// Value-returning form over network weights; the error names the layer.
std::pair<NetworkWeights, AdamState> adam_step(const NetworkWeights& w, const NetworkGradient& g, AdamState st,
                                               double lr);

/// {"arch": {...}, "flat_weights": [...]}
nlohmann::json weights_to_json(const NetworkWeights& w);
NetworkWeights weights_from_json(const nlohmann::json& j);

}  // namespace fredse
