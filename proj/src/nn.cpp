#include "emcomm/nn.hpp"

#include <algorithm>
#include <cmath>

#include "emcomm/errors.hpp"

namespace emcomm {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr double kMeanSquareFloor = 1e-200;

// Ascending indices of non-zero entries; inputs here are mostly one-hot.
void nonzero_indices(std::span<const double> v, std::vector<int>& out) {
  out.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) out.push_back(static_cast<int>(i));
  }
}

void layer_forward(const DenseLayer& layer, std::span<const double> input, std::vector<double>& out,
                   std::vector<int>& active) {
  out.assign(layer.bias.begin(), layer.bias.end());
  nonzero_indices(input, active);
  for (int o = 0; o < layer.outputs; ++o) {
    const double* row = layer.weights.data() + static_cast<std::ptrdiff_t>(o) * layer.inputs;
    double sum = out[static_cast<std::size_t>(o)];
    for (const int i : active) sum += row[i] * input[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(o)] = sum;
  }
  if (layer.activation == Activation::Relu) {
    for (double& v : out) v = v > 0.0 ? v : 0.0;
  }
}

void check_input(const DenseNet& net, std::span<const double> input) {
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw UsageError("network expects input of length " + std::to_string(net.input_dim()) +
                     ", got " + std::to_string(input.size()));
  }
}

}  // namespace

std::string_view activation_name(Activation a) {
  return a == Activation::Relu ? "relu" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    if (layer.inputs <= 0 || layer.outputs <= 0) throw ConfigError("layer dimensions must be positive");
    if (layer.weights.size() != static_cast<std::size_t>(layer.inputs) * static_cast<std::size_t>(layer.outputs) ||
        layer.bias.size() != static_cast<std::size_t>(layer.outputs)) {
      throw ConfigError("layer " + std::to_string(l) + " parameter arrays do not match its shape");
    }
    if (l > 0 && layers_[l - 1].outputs != layer.inputs) {
      throw ConfigError("layer " + std::to_string(l) + " input width does not chain");
    }
  }
  if (layers_.back().activation != Activation::Identity) {
    throw ConfigError("output layer must be linear");
  }
}

int DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().inputs; }
int DenseNet::output_dim() const { return layers_.empty() ? 0 : layers_.back().outputs; }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
  return n;
}

std::vector<int> DenseNet::dims() const {
  std::vector<int> out;
  if (layers_.empty()) return out;
  out.push_back(layers_.front().inputs);
  for (const auto& layer : layers_) out.push_back(layer.outputs);
  return out;
}

DenseNet init_net(std::span<const int> dims, Rng& rng, double scale) {
  if (dims.size() < 2) throw ConfigError("network needs an input and an output width");
  if (scale < 0.0) throw ConfigError("initialization scale must be non-negative");
  for (const int d : dims) {
    if (d <= 0) throw ConfigError("layer widths must be positive");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    layer.activation = l + 2 == dims.size() ? Activation::Identity : Activation::Relu;
    layer.weights.resize(static_cast<std::size_t>(layer.inputs) * static_cast<std::size_t>(layer.outputs));
    for (double& w : layer.weights) w = scale == 0.0 ? 0.0 : rng.uniform(-scale, scale);
    layer.bias.assign(static_cast<std::size_t>(layer.outputs), 0.0);
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

std::vector<double> forward(const DenseNet& net, std::span<const double> input) {
  ForwardCache cache;
  const auto out = forward(net, input, cache);
  return {out.begin(), out.end()};
}

std::span<const double> forward(const DenseNet& net, std::span<const double> input, ForwardCache& cache) {
  check_input(net, input);
  const auto& layers = net.layers();
  cache.outputs.resize(layers.size());
  std::vector<int> active;
  std::span<const double> x = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layer_forward(layers[l], x, cache.outputs[l], active);
    x = cache.outputs[l];
  }
  return x;
}

GradientSet GradientSet::zeros_like(const DenseNet& net) {
  GradientSet g;
  for (const auto& layer : net.layers()) {
    g.layers.push_back({std::vector<double>(layer.weights.size(), 0.0),
                        std::vector<double>(layer.bias.size(), 0.0)});
  }
  return g;
}

bool GradientSet::congruent(const DenseNet& net) const {
  if (layers.size() != net.layers().size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weights.size() != net.layers()[l].weights.size() ||
        layers[l].bias.size() != net.layers()[l].bias.size()) {
      return false;
    }
  }
  return true;
}

void GradientSet::set_zero() {
  for (auto& layer : layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

void GradientSet::add(const GradientSet& other, double scale) {
  if (other.layers.size() != layers.size()) throw UsageError("gradient sets are not congruent");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& dst = layers[l];
    const auto& src = other.layers[l];
    if (dst.weights.size() != src.weights.size() || dst.bias.size() != src.bias.size()) {
      throw UsageError("gradient sets are not congruent");
    }
    for (std::size_t i = 0; i < dst.weights.size(); ++i) dst.weights[i] += scale * src.weights[i];
    for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += scale * src.bias[i];
  }
}

double GradientSet::max_abs() const {
  double m = 0.0;
  for (const auto& layer : layers) {
    for (const double v : layer.weights) m = std::max(m, std::abs(v));
    for (const double v : layer.bias) m = std::max(m, std::abs(v));
  }
  return m;
}

GradientSet backward(const DenseNet& net, std::span<const double> input, std::span<const double> output_grad) {
  ForwardCache cache;
  forward(net, input, cache);
  GradientSet grads = GradientSet::zeros_like(net);
  backward_into(net, input, cache, output_grad, grads);
  return grads;
}

void backward_into(const DenseNet& net, std::span<const double> input, const ForwardCache& cache,
                   std::span<const double> output_grad, GradientSet& into) {
  check_input(net, input);
  if (static_cast<int>(output_grad.size()) != net.output_dim()) {
    throw UsageError("output gradient has length " + std::to_string(output_grad.size()) +
                     ", network output is " + std::to_string(net.output_dim()));
  }
  if (!into.congruent(net)) throw UsageError("gradient set does not match the network");
  const auto& layers = net.layers();
  if (cache.outputs.size() != layers.size()) throw UsageError("forward cache does not match the network");

  std::vector<double> delta(output_grad.begin(), output_grad.end());
  std::vector<double> prev_delta;
  std::vector<int> active;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    const std::span<const double> x = l == 0 ? input : std::span<const double>(cache.outputs[l - 1]);
    LayerGradient& g = into.layers[l];
    nonzero_indices(x, active);
    if (l > 0) prev_delta.assign(static_cast<std::size_t>(layer.inputs), 0.0);
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      if (d == 0.0) continue;
      g.bias[static_cast<std::size_t>(o)] += d;
      double* grow = g.weights.data() + static_cast<std::ptrdiff_t>(o) * layer.inputs;
      for (const int i : active) grow[i] += d * x[static_cast<std::size_t>(i)];
      if (l > 0) {
        const double* wrow = layer.weights.data() + static_cast<std::ptrdiff_t>(o) * layer.inputs;
        for (int i = 0; i < layer.inputs; ++i) prev_delta[static_cast<std::size_t>(i)] += wrow[i] * d;
      }
    }
    if (l > 0) {
      // Rectifier derivative: 1 where the unit was active, 0 otherwise (including at 0).
      const DenseLayer& below = layers[l - 1];
      if (below.activation == Activation::Relu) {
        for (std::size_t i = 0; i < prev_delta.size(); ++i) {
          if (x[i] <= 0.0) prev_delta[i] = 0.0;
        }
      }
      delta.swap(prev_delta);
    }
  }
}

RmsProp::RmsProp(const DenseNet& net, RmsPropConfig config)
    : config_(config), mean_square_(GradientSet::zeros_like(net)), pending_(GradientSet::zeros_like(net)) {
  if (config_.batch_size < 1) throw ConfigError("minibatch size must be at least 1");
  if (!(config_.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(config_.decay >= 0.0 && config_.decay < 1.0)) throw ConfigError("RMSProp decay must lie in [0, 1)");
  if (!(config_.epsilon > 0.0)) throw ConfigError("RMSProp epsilon must be positive");
}

bool RmsProp::step(DenseNet& net, const GradientSet& grads) {
  if (!grads.congruent(net) || !pending_.congruent(net)) {
    throw UsageError("gradient set does not match the network");
  }
  pending_.add(grads);
  return commit(net);
}

bool RmsProp::commit(DenseNet& net) {
  if (!pending_.congruent(net)) throw UsageError("optimizer state does not match the network");
  ++count_;
  if (count_ < config_.batch_size) return false;
  apply(net);
  return true;
}

void RmsProp::apply(DenseNet& net) {
  const double inv_count = 1.0 / static_cast<double>(count_);
  const double rho = config_.decay;
  auto update = [&](std::vector<double>& params, std::vector<double>& ms, std::vector<double>& acc) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = acc[i] * inv_count;
      ms[i] = rho * ms[i] + (1.0 - rho) * g * g;
      // Flush decayed averages before they turn subnormal; subnormal arithmetic is very slow.
      if (ms[i] < kMeanSquareFloor) ms[i] = 0.0;
      if (g != 0.0) params[i] -= config_.learning_rate * g / std::sqrt(ms[i] + config_.epsilon);
      acc[i] = 0.0;
    }
  };
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& layer = net.layers()[l];
    update(layer.weights, mean_square_.layers[l].weights, pending_.layers[l].weights);
    update(layer.bias, mean_square_.layers[l].bias, pending_.layers[l].bias);
  }
  count_ = 0;
}

void to_json(nlohmann::json& j, const DenseNet& net) {
  j = nlohmann::json::object();
  j["dims"] = net.dims();
  auto layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({{"activation", activation_name(layer.activation)},
                      {"weights", layer.weights},
                      {"bias", layer.bias}});
  }
  j["layers"] = std::move(layers);
}

void from_json(const nlohmann::json& j, DenseNet& net) {
  const auto dims = j.at("dims").get<std::vector<int>>();
  const auto& jl = j.at("layers");
  if (dims.size() != jl.size() + 1) throw ConfigError("checkpoint dims do not match layer count");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < jl.size(); ++l) {
    DenseLayer layer;
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    layer.activation = parse_activation(jl[l].at("activation").get<std::string>());
    layer.weights = jl[l].at("weights").get<std::vector<double>>();
    layer.bias = jl[l].at("bias").get<std::vector<double>>();
    layers.push_back(std::move(layer));
  }
  net = DenseNet(std::move(layers));
}

namespace {

nlohmann::json gradient_json(const GradientSet& g) {
  auto out = nlohmann::json::array();
  for (const auto& layer : g.layers) out.push_back({{"weights", layer.weights}, {"bias", layer.bias}});
  return out;
}

GradientSet gradient_from_json(const nlohmann::json& j) {
  GradientSet g;
  for (const auto& layer : j) {
    g.layers.push_back({layer.at("weights").get<std::vector<double>>(), layer.at("bias").get<std::vector<double>>()});
  }
  return g;
}

}  // namespace

void to_json(nlohmann::json& j, const RmsProp& opt) {
  j = {{"version", kCheckpointVersion},
       {"learning_rate", opt.config_.learning_rate},
       {"decay", opt.config_.decay},
       {"epsilon", opt.config_.epsilon},
       {"batch_size", opt.config_.batch_size},
       {"count", opt.count_},
       {"mean_square", gradient_json(opt.mean_square_)},
       {"pending", gradient_json(opt.pending_)}};
}

void from_json(const nlohmann::json& j, RmsProp& opt) {
  if (j.at("version").get<int>() != kCheckpointVersion) throw ConfigError("unsupported optimizer checkpoint version");
  opt.config_.learning_rate = j.at("learning_rate").get<double>();
  opt.config_.decay = j.at("decay").get<double>();
  opt.config_.epsilon = j.at("epsilon").get<double>();
  opt.config_.batch_size = j.at("batch_size").get<int>();
  opt.count_ = j.at("count").get<int>();
  opt.mean_square_ = gradient_from_json(j.at("mean_square"));
  opt.pending_ = gradient_from_json(j.at("pending"));
  if (opt.count_ < 0 || opt.count_ >= opt.config_.batch_size) {
    throw ConfigError("optimizer checkpoint has an invalid accumulation count");
  }
}

}  // namespace emcomm
