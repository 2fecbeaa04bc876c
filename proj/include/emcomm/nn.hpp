#pragma once

// Small feed-forward networks with hand-written backpropagation and an
// RMSProp optimizer that applies the mean of a fixed-size minibatch.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "emcomm/rng.hpp"

namespace emcomm {

enum class Activation { Identity, Relu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  Activation activation = Activation::Identity;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;     // outputs

  double& weight(int out, int in) { return weights[static_cast<std::size_t>(out * inputs + in)]; }
  double weight(int out, int in) const { return weights[static_cast<std::size_t>(out * inputs + in)]; }

  bool operator==(const DenseLayer&) const = default;
};

class DenseNet {
 public:
  DenseNet() = default;
  /// Throws ConfigError if layer shapes do not chain or the last layer is not linear.
  explicit DenseNet(std::vector<DenseLayer> layers);

  int input_dim() const;
  int output_dim() const;
  std::size_t parameter_count() const;
  /// Layer widths, input first.
  std::vector<int> dims() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  bool operator==(const DenseNet&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

/// Hidden layers use the rectifier, the output layer is linear. Weights are
/// i.i.d. uniform in [-scale, scale]; biases start at zero.
DenseNet init_net(std::span<const int> dims, Rng& rng, double scale);

/// Per-layer outputs of the last forward pass, kept for backpropagation.
struct ForwardCache {
  std::vector<std::vector<double>> outputs;
};

std::vector<double> forward(const DenseNet& net, std::span<const double> input);
std::span<const double> forward(const DenseNet& net, std::span<const double> input, ForwardCache& cache);

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

struct GradientSet {
  std::vector<LayerGradient> layers;

  static GradientSet zeros_like(const DenseNet& net);
  bool congruent(const DenseNet& net) const;
  void set_zero();
  void add(const GradientSet& other, double scale = 1.0);
  double max_abs() const;
};

/// Gradient of dot(forward(input), output_grad) with respect to every parameter.
GradientSet backward(const DenseNet& net, std::span<const double> input, std::span<const double> output_grad);

/// Adds the gradient into `into`, reusing activations from a forward pass on the same input.
void backward_into(const DenseNet& net, std::span<const double> input, const ForwardCache& cache,
                   std::span<const double> output_grad, GradientSet& into);

struct RmsPropConfig {
  double learning_rate = 1e-3;
  double decay = 0.9;
  double epsilon = 1e-8;
  int batch_size = 10;
};

class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(const DenseNet& net, RmsPropConfig config);

  /// Adds one gradient contribution; applies the update when the batch is full.
  /// Returns true if the parameters changed.
  bool step(DenseNet& net, const GradientSet& grads);

  /// For callers that backpropagate directly into the pending sum:
  /// registers one contribution already added to pending().
  bool commit(DenseNet& net);

  GradientSet& pending() { return pending_; }
  const GradientSet& pending() const { return pending_; }
  const GradientSet& mean_square() const { return mean_square_; }
  const RmsPropConfig& config() const { return config_; }
  int count() const { return count_; }

  friend void to_json(nlohmann::json& j, const RmsProp& opt);
  friend void from_json(const nlohmann::json& j, RmsProp& opt);

 private:
  void apply(DenseNet& net);

  RmsPropConfig config_;
  GradientSet mean_square_;
  GradientSet pending_;
  int count_ = 0;
};

void to_json(nlohmann::json& j, const DenseNet& net);
void from_json(const nlohmann::json& j, DenseNet& net);

}  // namespace emcomm
