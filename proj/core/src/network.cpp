#include "ultrasnn/network.hpp"

#include <algorithm>
#include <cmath>

#include "ultrasnn/error.hpp"
#include "ultrasnn/random.hpp"

namespace ultrasnn {

void NetworkSpec::validate() const {
  if (inputs == 0) throw ConfigError("network needs at least one input");
  if (hidden.empty()) throw ConfigError("network needs at least one hidden layer");
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be >= 1");
  }
  if (classes == 0) throw ConfigError("network needs at least one class");
  if (timesteps == 0) throw ConfigError("timesteps must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be finite and >= 0");
  neuron.validate();
}

namespace {

std::string layer_prefix(std::size_t l) { return "hidden" + std::to_string(l) + "."; }

}  // namespace

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t fan_in = spec_.inputs;
  for (std::size_t l = 0; l < spec_.hidden.size(); ++l) {
    const std::size_t width = spec_.hidden[l];
    params_.push_back({layer_prefix(l) + "weight", Tensor({width, fan_in}), true});
    params_.push_back({layer_prefix(l) + "bias", Tensor({width}), true});
    for (const NeuronParamInit& init : neuron_parameter_inits(spec_.neuron)) {
      params_.push_back({layer_prefix(l) + init.name, Tensor::scalar(init.value), true});
    }
    fan_in = width;
  }
  params_.push_back({"readout.weight", Tensor({spec_.classes, fan_in}), true});
  params_.push_back({"readout.bias", Tensor({spec_.classes}), true});
}

Network Network::initialized(NetworkSpec spec, std::uint64_t seed) {
  Network net(std::move(spec));
  Rng rng(seed, {static_cast<std::uint64_t>(Stream::Init)});
  for (Parameter& p : net.params_) {
    const bool is_weight = p.name.ends_with(".weight");
    if (!is_weight && !p.name.ends_with(".bias")) continue;
    // Bias bounds use the fan-in of the matching weight, which precedes it.
    const std::size_t fan_in =
        is_weight ? p.value.dim(1) : net.parameter(p.name.substr(0, p.name.size() - 4) + "weight").value.dim(1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& x : p.value.data()) x = rng.uniform(-bound, bound);
  }
  return net;
}

Parameter& Network::parameter(std::string_view name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

const Parameter& Network::parameter(std::string_view name) const {
  return const_cast<Network*>(this)->parameter(name);
}

bool Network::has_parameter(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

double Network::epsilon(std::size_t layer) const {
  return std::exp(parameter(layer_prefix(layer) + "log_eps").value.item());
}

void Network::set_epsilon(std::size_t layer, double eps, bool learnable) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("temperature must be positive");
  Parameter& p = parameter(layer_prefix(layer) + "log_eps");
  p.value[0] = std::log(eps);
  p.trainable = learnable;
}

void Network::project_epsilon() {
  const double lo = std::log(spec_.neuron.eps_lo);
  const double hi = std::log(spec_.neuron.eps_hi);
  for (Parameter& p : params_) {
    if (p.name.ends_with(".log_eps")) p.value[0] = std::clamp(p.value[0], lo, hi);
  }
}

std::string_view to_string(ForwardMode mode) {
  switch (mode) {
    case ForwardMode::Train: return "train";
    case ForwardMode::EvalSoft: return "eval-soft";
    case ForwardMode::EvalHard: return "eval-hard";
  }
  return "unknown";
}

ForwardRecord forward(const Network& net, Tape& tape, const Tensor& input, ForwardMode mode,
                      bool keep_spikes) {
  const NetworkSpec& spec = net.spec();
  const NeuronConfig& cfg = spec.neuron;
  if (input.rank() != 3 || input.dim(0) != spec.timesteps || input.dim(2) != spec.inputs) {
    throw ShapeError("network input " + shape_string(input.shape()) + " does not match [" +
                     std::to_string(spec.timesteps) + ", batch, " + std::to_string(spec.inputs) + "]");
  }
  if (mode == ForwardMode::Train && !tape.recording()) {
    throw ContractError("training forward needs a recording tape");
  }
  if (mode == ForwardMode::EvalHard) {
    if (!is_ultra(cfg.kind)) throw ConfigError("eval-hard applies to ultradiscretized kinds only");
    if (tape.recording()) throw ContractError("eval-hard needs a non-recording tape");
  }

  const std::size_t T = spec.timesteps;
  const std::size_t batch = input.dim(1);

  ForwardRecord rec;
  const auto& params = net.parameters();
  rec.params.reserve(params.size());
  for (const Parameter& p : params) rec.params.push_back(tape.leaf(p.value, p.trainable));

  struct Layer {
    Var weight, bias;
    NeuronParams neuron;
    NeuronState state;
  };
  std::vector<Layer> layers;
  std::size_t idx = 0;
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
    Layer layer;
    layer.weight = rec.params[idx++];
    layer.bias = rec.params[idx++];
    for (const NeuronParamInit& init : neuron_parameter_inits(cfg)) {
      Var v = rec.params[idx++];
      if (init.name == "log_eps") layer.neuron.log_eps = v;
      else if (init.name == "tau_param") layer.neuron.tau_param = v;
      else if (init.name == "theta_param") layer.neuron.theta_param = v;
      else layer.neuron.k = v;
    }
    layer.state = initial_state(tape, cfg, batch, spec.hidden[l]);
    layers.push_back(layer);
  }
  Var w_out = rec.params[idx++];
  Var b_out = rec.params[idx++];

  const std::size_t frame = batch * spec.inputs;
  std::vector<Var> readouts;
  std::vector<Var> spike_sums;
  double spike_count = 0.0;
  readouts.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> slice(input.data().begin() + static_cast<std::ptrdiff_t>(t * frame),
                              input.data().begin() + static_cast<std::ptrdiff_t>((t + 1) * frame));
    Var x = tape.constant(Tensor({batch, spec.inputs}, std::move(slice)));
    std::vector<Var> step_spikes;
    for (Layer& layer : layers) {
      Var current = ad::linear(x, layer.weight, layer.bias);
      StepOutput out = mode == ForwardMode::EvalHard
                           ? hard_inference_step(cfg, layer.neuron, layer.state, current)
                           : neuron_step(cfg, layer.neuron, layer.state, current);
      layer.state = out.next;
      spike_sums.push_back(ad::sum(out.spikes));
      spike_count += static_cast<double>(out.spikes.value().size());
      if (keep_spikes) step_spikes.push_back(out.spikes);
      x = out.spikes;
    }
    readouts.push_back(ad::linear(x, w_out, b_out));
    if (keep_spikes) rec.spikes.push_back(std::move(step_spikes));
  }

  Var logits = readouts[0];
  for (std::size_t t = 1; t < T; ++t) logits = ad::add(logits, readouts[t]);
  rec.logits = T == 1 ? logits : ad::scale(logits, 1.0 / static_cast<double>(T));

  Var total = spike_sums[0];
  for (std::size_t i = 1; i < spike_sums.size(); ++i) total = ad::add(total, spike_sums[i]);
  rec.spike_rate = ad::scale(total, 1.0 / spike_count);
  return rec;
}

Var loss(const ForwardRecord& record, std::span<const int> labels, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  Var ce = ad::softmax_cross_entropy(record.logits, labels);
  if (lambda == 0.0) return ce;
  return ad::add(ce, ad::scale(record.spike_rate, lambda));
}

double energy(double spike_rate, std::size_t timesteps) {
  return static_cast<double>(timesteps) * spike_rate;
}

}  // namespace ultrasnn
