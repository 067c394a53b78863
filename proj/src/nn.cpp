#include "fredse/nn.hpp"

#include <cmath>

#include "fredse/error.hpp"
#include "fredse/rng.hpp"

namespace fredse {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh:
      return "tanh";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("activation", "unsupported activation '" + name + "'");
}

NetworkArch::NetworkArch(int input_dim, int output_dim, int width, int depth, Activation activation)
    : input_dim_(input_dim), output_dim_(output_dim), width_(width), depth_(depth), activation_(activation) {
  if (input_dim < 1) throw ConfigError("input_dim", "must be >= 1");
  if (output_dim < 1) throw ConfigError("output_dim", "must be >= 1");
  if (width < 1) throw ConfigError("width", "must be >= 1");
  if (depth < 1) throw ConfigError("depth", "must be >= 1");
}

int NetworkArch::fan_in(int layer) const { return layer == 0 ? input_dim_ : width_; }

int NetworkArch::fan_out(int layer) const { return layer == depth_ ? output_dim_ : width_; }

std::size_t NetworkArch::layer_offset(int layer) const {
  std::size_t off = 0;
  for (int k = 0; k < layer; ++k) off += static_cast<std::size_t>(fan_in(k) + 1) * fan_out(k);
  return off;
}

std::size_t NetworkArch::parameter_count() const { return layer_offset(layer_count()); }

void to_json(nlohmann::json& j, const NetworkArch& a) {
  j = nlohmann::json{{"input_dim", a.input_dim()},
                     {"output_dim", a.output_dim()},
                     {"width", a.width()},
                     {"depth", a.depth()},
                     {"activation", to_string(a.activation())}};
}

NetworkArch arch_from_json(const nlohmann::json& j) {
  try {
    return NetworkArch(j.at("input_dim").get<int>(), j.at("output_dim").get<int>(), j.at("width").get<int>(),
                       j.at("depth").get<int>(), activation_from_string(j.value("activation", std::string("tanh"))));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("arch", e.what());
  }
}

NetworkWeights::NetworkWeights(NetworkArch arch)
    : arch_(arch), flat_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch.parameter_count()))) {}

NetworkWeights::NetworkWeights(NetworkArch arch, Eigen::VectorXd flat) : arch_(arch), flat_(std::move(flat)) {
  if (static_cast<std::size_t>(flat_.size()) != arch_.parameter_count()) {
    throw ShapeError("flat weight vector has " + std::to_string(flat_.size()) + " entries, architecture needs " +
                     std::to_string(arch_.parameter_count()));
  }
}

NetworkWeights::ConstMatrixMap NetworkWeights::weight(int layer) const {
  return ConstMatrixMap(flat_.data() + arch_.layer_offset(layer), arch_.fan_out(layer), arch_.fan_in(layer));
}

NetworkWeights::MatrixMap NetworkWeights::weight(int layer) {
  return MatrixMap(flat_.data() + arch_.layer_offset(layer), arch_.fan_out(layer), arch_.fan_in(layer));
}

NetworkWeights::ConstVectorMap NetworkWeights::bias(int layer) const {
  const auto off = arch_.layer_offset(layer) + static_cast<std::size_t>(arch_.fan_out(layer)) * arch_.fan_in(layer);
  return ConstVectorMap(flat_.data() + off, arch_.fan_out(layer));
}

NetworkWeights::VectorMap NetworkWeights::bias(int layer) {
  const auto off = arch_.layer_offset(layer) + static_cast<std::size_t>(arch_.fan_out(layer)) * arch_.fan_in(layer);
  return VectorMap(flat_.data() + off, arch_.fan_out(layer));
}

Eigen::VectorXd flatten(const NetworkWeights& w) { return w.flat(); }

NetworkWeights unflatten(const NetworkArch& arch, const Eigen::VectorXd& flat) { return NetworkWeights(arch, flat); }

NetworkWeights init_weights(const NetworkArch& arch, std::uint64_t seed) {
  NetworkWeights w(arch);
  Rng rng(seed);
  for (int k = 0; k < arch.layer_count(); ++k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.fan_in(k)));
    auto W = w.weight(k);
    for (Eigen::Index c = 0; c < W.cols(); ++c)
      for (Eigen::Index r = 0; r < W.rows(); ++r) W(r, c) = rng.uniform(-bound, bound);
  }
  return w;
}

namespace {

void check_inputs(const NetworkArch& arch, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != arch.input_dim()) {
    throw ShapeError("network expects input dimension " + std::to_string(arch.input_dim()) + ", got " +
                     std::to_string(inputs.rows()));
  }
}

}  // namespace

ForwardCache forward_cached(const NetworkWeights& w, const Eigen::MatrixXd& inputs) {
  const auto& arch = w.arch();
  check_inputs(arch, inputs);
  ForwardCache cache;
  cache.hidden.reserve(static_cast<std::size_t>(arch.depth()));
  const Eigen::MatrixXd* prev = &inputs;
  for (int k = 0; k < arch.depth(); ++k) {
    Eigen::MatrixXd z = w.weight(k) * (*prev);
    z.colwise() += w.bias(k);
    cache.hidden.push_back(z.array().tanh().matrix());
    prev = &cache.hidden.back();
  }
  const int out = arch.depth();
  cache.output = w.weight(out) * (*prev);
  cache.output.colwise() += w.bias(out);
  return cache;
}

Eigen::MatrixXd forward_batch(const NetworkWeights& w, const Eigen::MatrixXd& inputs) {
  const auto& arch = w.arch();
  check_inputs(arch, inputs);
  Eigen::MatrixXd h = inputs;
  for (int k = 0; k < arch.depth(); ++k) {
    Eigen::MatrixXd z = w.weight(k) * h;
    z.colwise() += w.bias(k);
    h = z.array().tanh().matrix();
  }
  Eigen::MatrixXd out = w.weight(arch.depth()) * h;
  out.colwise() += w.bias(arch.depth());
  return out;
}

Eigen::VectorXd forward(const NetworkWeights& w, std::span<const double> x) {
  if (static_cast<int>(x.size()) != w.arch().input_dim()) {
    throw ShapeError("network expects input dimension " + std::to_string(w.arch().input_dim()) + ", got " +
                     std::to_string(x.size()));
  }
  Eigen::MatrixXd in = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return forward_batch(w, in).col(0);
}

NetworkGradient backprop(const NetworkWeights& w, const ForwardCache& cache, const Eigen::MatrixXd& inputs,
                         const Eigen::MatrixXd& upstream) {
  const auto& arch = w.arch();
  if (upstream.rows() != arch.output_dim() || upstream.cols() != inputs.cols()) {
    throw ShapeError("upstream gradient must be " + std::to_string(arch.output_dim()) + " x " +
                     std::to_string(inputs.cols()));
  }
  NetworkGradient g(arch);
  const int out = arch.depth();
  const Eigen::MatrixXd& last_hidden = cache.hidden.back();
  g.weight(out).noalias() = upstream * last_hidden.transpose();
  g.bias(out) = upstream.rowwise().sum();
  Eigen::MatrixXd delta = w.weight(out).transpose() * upstream;
  for (int k = arch.depth() - 1; k >= 0; --k) {
    const Eigen::MatrixXd& h = cache.hidden[static_cast<std::size_t>(k)];
    delta.array() *= (1.0 - h.array().square());
    const Eigen::MatrixXd& below = k == 0 ? inputs : cache.hidden[static_cast<std::size_t>(k - 1)];
    g.weight(k).noalias() = delta * below.transpose();
    g.bias(k) = delta.rowwise().sum();
    if (k > 0) delta = w.weight(k).transpose() * delta;
  }
  return g;
}

NetworkGradient backprop(const NetworkWeights& w, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream) {
  return backprop(w, forward_cached(w, inputs), inputs, upstream);
}

NetworkGradient backprop(const NetworkWeights& w,
                         const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& batch) {
  const auto& arch = w.arch();
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd inputs(arch.input_dim(), n);
  Eigen::MatrixXd upstream(arch.output_dim(), n);
  for (Eigen::Index p = 0; p < n; ++p) {
    const auto& [x, g] = batch[static_cast<std::size_t>(p)];
    if (x.size() != arch.input_dim()) throw ShapeError("batch entry " + std::to_string(p) + ": input dimension");
    if (g.size() != arch.output_dim()) throw ShapeError("batch entry " + std::to_string(p) + ": upstream dimension");
    inputs.col(p) = x;
    upstream.col(p) = g;
  }
  if (n == 0) return NetworkGradient(arch);
  return backprop(w, inputs, upstream);
}

void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& st, double lr) {
  if (grad.size() != params.size()) throw ShapeError("gradient and parameters differ in size");
  if (st.m.size() != params.size()) {
    if (st.step != 0) throw ShapeError("Adam state does not match the parameter vector");
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
  }
  if (!(lr >= 0.0)) throw ConfigError("lr", "learning rate must be non-negative");
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    if (!std::isfinite(grad[k])) throw NumericError("non-finite gradient coordinate " + std::to_string(k));
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + st.eps);
}

std::pair<NetworkWeights, AdamState> adam_step(const NetworkWeights& w, const NetworkGradient& g, AdamState st,
                                               double lr) {
  if (!(w.arch() == g.arch())) throw ShapeError("gradient architecture differs from the weights");
  const auto& arch = w.arch();
  for (int k = 0; k < arch.layer_count(); ++k) {
    const bool finite = g.weight(k).allFinite() && g.bias(k).allFinite();
    if (!finite) throw NumericError("non-finite gradient in layer " + std::to_string(k));
  }
  NetworkWeights next = w;
  adam_update(next.flat(), g.flat(), st, lr);
  return {std::move(next), std::move(st)};
}

nlohmann::json weights_to_json(const NetworkWeights& w) {
  nlohmann::json j;
  j["arch"] = w.arch();
  j["flat_weights"] = std::vector<double>(w.flat().data(), w.flat().data() + w.flat().size());
  return j;
}

NetworkWeights weights_from_json(const nlohmann::json& j) {
  auto arch = arch_from_json(j.at("arch"));
  std::vector<double> flat;
  try {
    flat = j.at("flat_weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("flat_weights", e.what());
  }
  return NetworkWeights(arch, Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size())));
}

}  // namespace fredse
