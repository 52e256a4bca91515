#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ultrasnn/autodiff.hpp"
#include "ultrasnn/neurons.hpp"

namespace ultrasnn {

struct NetworkSpec {
  std::size_t inputs = 784;
  std::vector<std::size_t> hidden{64};
  std::size_t classes = 10;
  std::size_t timesteps = 1;
  NeuronConfig neuron;
  double lambda = 0.0;

  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Feedforward spiking network: hidden neuron layers followed by a linear readout.
///
/// Parameter order is fixed: for each hidden layer `hidden<l>.weight`, `hidden<l>.bias`,
/// then that layer's neuron scalars (`hidden<l>.log_eps`, `.tau_param`, `.theta_param`,
/// `.k` as the kind requires); finally `readout.weight` and `readout.bias`.
class Network {
 public:
  /// All weights and biases zero, neuron scalars at their initial values.
  explicit Network(NetworkSpec spec);
  /// Weights and biases drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static Network initialized(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }

  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;

  /// exp(log_eps) of an ultra hidden layer.
  double epsilon(std::size_t layer) const;
  /// Sets the layer temperature; `learnable = false` freezes it.
  void set_epsilon(std::size_t layer, double eps, bool learnable = true);
  /// Clamps every log_eps into [ln eps_lo, ln eps_hi].
  void project_epsilon();

 private:
  NetworkSpec spec_;
  std::vector<Parameter> params_;
};

enum class ForwardMode { Train, EvalSoft, EvalHard };

std::string_view to_string(ForwardMode mode);

struct ForwardRecord {
  Var logits;                             // [batch, classes]
  Var spike_rate;                         // scalar mean over hidden layers, time, batch, units
  std::vector<Var> params;                // bound in Network::parameters() order
  std::vector<std::vector<Var>> spikes;   // [timestep][layer], filled when retained
};

/// Unrolls the network over `input` of shape [T, batch, inputs].
/// Train needs a recording tape; EvalHard needs a non-recording tape and an ultra kind.
ForwardRecord forward(const Network& net, Tape& tape, const Tensor& input, ForwardMode mode,
                      bool keep_spikes = false);

/// Mean softmax cross-entropy of the logits plus lambda times the hidden spike rate.
Var loss(const ForwardRecord& record, std::span<const int> labels, double lambda);

/// Relative synaptic-operation count: timesteps times mean spike rate.
double energy(double spike_rate, std::size_t timesteps);

}  // namespace ultrasnn
