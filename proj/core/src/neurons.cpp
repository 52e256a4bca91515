#include "ultrasnn/neurons.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ultrasnn/error.hpp"

namespace ultrasnn {

std::string_view to_string(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::UltraLIF: return "ultralif";
    case NeuronKind::UltraPLIF: return "ultraplif";
    case NeuronKind::UltraDLIF: return "ultradlif";
    case NeuronKind::UltraDPLIF: return "ultradplif";
    case NeuronKind::LIF: return "lif";
    case NeuronKind::PLIF: return "plif";
    case NeuronKind::AdaLIF: return "adalif";
    case NeuronKind::FullPLIF: return "fullplif";
    case NeuronKind::DSpike: return "dspike";
    case NeuronKind::DSpikePlus: return "dspike+";
  }
  return "unknown";
}

NeuronKind parse_neuron_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "dspikeplus") return NeuronKind::DSpikePlus;
  for (NeuronKind k : kAllNeuronKinds) {
    if (lower == to_string(k)) return k;
  }
  throw ConfigError("unknown neuron kind '" + std::string(name) + "'");
}

bool is_ultra(NeuronKind kind) {
  return kind == NeuronKind::UltraLIF || kind == NeuronKind::UltraPLIF ||
         kind == NeuronKind::UltraDLIF || kind == NeuronKind::UltraDPLIF;
}

bool is_spatial(NeuronKind kind) {
  return kind == NeuronKind::UltraDLIF || kind == NeuronKind::UltraDPLIF;
}

bool learns_tau(NeuronKind kind) {
  return kind == NeuronKind::UltraPLIF || kind == NeuronKind::UltraDPLIF || kind == NeuronKind::PLIF ||
         kind == NeuronKind::FullPLIF || kind == NeuronKind::DSpikePlus;
}

bool learns_theta(NeuronKind kind) { return kind == NeuronKind::FullPLIF; }

bool learns_sharpness(NeuronKind kind) {
  return kind == NeuronKind::DSpike || kind == NeuronKind::DSpikePlus;
}

void NeuronConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("neuron config: " + msg); };
  if (!(theta > 0.0) || !std::isfinite(theta)) fail("theta must be positive");
  if (learns_theta(kind) && !(theta < 1.0)) fail("a learned threshold needs theta in (0,1)");
  if (!(tau0 > 0.0 && tau0 < 1.0)) fail("tau0 must lie in (0,1)");
  if (!std::isfinite(v_reset)) fail("v_reset must be finite");
  if (!(eps_lo > 0.0) || !(eps_lo < eps_hi) || !std::isfinite(eps_hi)) {
    fail("eps clamp must satisfy 0 < lo < hi");
  }
  if (!(eps0 >= eps_lo && eps0 <= eps_hi)) fail("eps0 must lie inside the clamp");
  if (!(beta_surrogate > 0.0)) fail("beta_surrogate must be positive");
  if (!(beta_adapt >= 0.0)) fail("beta_adapt must be non-negative");
  if (!(tau_adapt >= 0.0 && tau_adapt <= 1.0)) fail("tau_adapt must lie in [0,1]");
  if (!(dspike_k0 > 0.0)) fail("dspike_k0 must be positive");
}

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

void require_input(const NeuronState& state, Var input) {
  if (state.v.shape() != input.shape()) {
    throw ShapeError("neuron input " + shape_string(input.shape()) + " does not match state " +
                     shape_string(state.v.shape()));
  }
  if (!input.value().all_finite()) throw InputError("non-finite neuron input");
}

// ln(tau) as a tape scalar: learned through sigmoid or fixed at tau0.
Var log_leak(const NeuronConfig& cfg, const NeuronParams& params, Tape& tape) {
  if (learns_tau(cfg.kind)) return ad::log_sigmoid(params.tau_param);
  return tape.constant(std::log(cfg.tau0));
}

Var leak(const NeuronConfig& cfg, const NeuronParams& params, Tape& tape) {
  if (learns_tau(cfg.kind)) return ad::sigmoid(params.tau_param);
  return tape.constant(cfg.tau0);
}

// Membrane before spiking for the ultra kinds.
Var ultra_membrane(const NeuronConfig& cfg, const NeuronParams& params, const NeuronState& state,
                   Var input, Var eps) {
  Tape& tape = *state.v.tape();
  if (is_spatial(cfg.kind)) {
    Var v = state.v;
    if (cfg.kind == NeuronKind::UltraDPLIF) v = ad::add_scalar(v, log_leak(cfg, params, tape));
    Var mixed = ad::lse({ad::roll(v, 1), v, ad::roll(v, -1)}, eps);
    return ad::add(mixed, input);
  }
  Var leaked = ad::add_scalar(state.v, log_leak(cfg, params, tape));
  return ad::lse({leaked, input}, eps);
}

StepOutput ultra_step(const NeuronConfig& cfg, const NeuronParams& params, const NeuronState& state,
                      Var input) {
  if (!is_ultra(cfg.kind)) {
    throw ConfigError(std::string(to_string(cfg.kind)) + " is not an ultradiscretized kind");
  }
  require_input(state, input);
  Var eps = temperature(params);
  Var membrane = ultra_membrane(cfg, params, state, input, eps);
  Var spikes = ad::sigmoid(ad::div_scalar(ad::add_scalar(membrane, -cfg.theta), eps));
  Var next = ad::add(ad::mul(membrane, ad::one_minus(spikes)), ad::scale(spikes, cfg.v_reset));
  return {spikes, NeuronState{next, std::nullopt}, membrane};
}

}  // namespace

std::vector<NeuronParamInit> neuron_parameter_inits(const NeuronConfig& cfg) {
  std::vector<NeuronParamInit> out;
  if (is_ultra(cfg.kind)) out.push_back({"log_eps", std::log(cfg.eps0)});
  if (learns_tau(cfg.kind)) out.push_back({"tau_param", logit(cfg.tau0)});
  if (learns_theta(cfg.kind)) out.push_back({"theta_param", logit(cfg.theta)});
  if (learns_sharpness(cfg.kind)) out.push_back({"k", cfg.dspike_k0});
  return out;
}

NeuronState initial_state(Tape& tape, const NeuronConfig& cfg, std::size_t batch, std::size_t width) {
  NeuronState state{tape.constant(Tensor({batch, width})), std::nullopt};
  if (cfg.kind == NeuronKind::AdaLIF) state.b_adapt = tape.constant(Tensor({batch, width}));
  return state;
}

Var temperature(const NeuronParams& params) {
  if (!params.log_eps.valid()) throw ContractError("ultra neuron without a temperature parameter");
  return ad::exp(params.log_eps);
}

StepOutput ultralif_step(const NeuronConfig& cfg, const NeuronParams& params,
                         const NeuronState& state, Var input) {
  if (is_spatial(cfg.kind)) throw ConfigError("ultralif_step called with a spatial kind");
  return ultra_step(cfg, params, state, input);
}

StepOutput ultradlif_step(const NeuronConfig& cfg, const NeuronParams& params,
                          const NeuronState& state, Var input) {
  if (!is_spatial(cfg.kind)) throw ConfigError("ultradlif_step called with a non-spatial kind");
  return ultra_step(cfg, params, state, input);
}

StepOutput baseline_step(const NeuronConfig& cfg, const NeuronParams& params,
                         const NeuronState& state, Var input) {
  if (is_ultra(cfg.kind)) {
    throw ConfigError(std::string(to_string(cfg.kind)) + " is not a surrogate-gradient baseline");
  }
  require_input(state, input);
  Tape& tape = *state.v.tape();

  Var v_new = learns_tau(cfg.kind) ? ad::add(ad::mul_scalar(state.v, leak(cfg, params, tape)), input)
                                   : ad::add(ad::scale(state.v, cfg.tau0), input);

  Var spikes;
  std::optional<Var> b_next;
  switch (cfg.kind) {
    case NeuronKind::LIF:
    case NeuronKind::PLIF:
      spikes = ad::surrogate_spike(ad::add_scalar(v_new, -cfg.theta), cfg.beta_surrogate);
      break;
    case NeuronKind::FullPLIF: {
      Var theta = ad::sigmoid(params.theta_param);
      spikes = ad::surrogate_spike(ad::add_scalar(v_new, ad::scale(theta, -1.0)), cfg.beta_surrogate);
      break;
    }
    case NeuronKind::AdaLIF: {
      if (!state.b_adapt) throw ContractError("AdaLIF state without an adaptation variable");
      Var b = *state.b_adapt;
      Var u = ad::sub(ad::add_scalar(v_new, -cfg.theta), ad::scale(b, cfg.beta_adapt));
      spikes = ad::surrogate_spike(u, cfg.beta_surrogate);
      b_next = ad::add(ad::scale(b, cfg.tau_adapt), ad::scale(spikes, 1.0 - cfg.tau_adapt));
      break;
    }
    case NeuronKind::DSpike:
    case NeuronKind::DSpikePlus:
      spikes = ad::dspike_spike(v_new, cfg.theta, params.k);
      break;
    default:
      throw ConfigError("unhandled baseline kind");
  }
  Var next = ad::mul(v_new, ad::one_minus(spikes));
  return {spikes, NeuronState{next, b_next}, v_new};
}

StepOutput neuron_step(const NeuronConfig& cfg, const NeuronParams& params,
                       const NeuronState& state, Var input) {
  if (is_ultra(cfg.kind)) return ultra_step(cfg, params, state, input);
  return baseline_step(cfg, params, state, input);
}

StepOutput hard_inference_step(const NeuronConfig& cfg, const NeuronParams& params,
                               const NeuronState& state, Var input) {
  if (!is_ultra(cfg.kind)) {
    throw ConfigError("hard inference applies to ultradiscretized kinds only");
  }
  if (state.v.tape()->recording()) {
    throw ContractError("hard_inference_step needs a non-recording tape");
  }
  require_input(state, input);
  Var eps = temperature(params);
  Var membrane = ultra_membrane(cfg, params, state, input, eps);
  Var spikes = ad::heaviside(ad::add_scalar(membrane, -cfg.theta));
  Var next = ad::add(ad::mul(membrane, ad::one_minus(spikes)), ad::scale(spikes, cfg.v_reset));
  return {spikes, NeuronState{next, std::nullopt}, membrane};
}

OracleStep maxplus_lif_oracle(double v, double input, const NeuronConfig& cfg) {
  const double pre = std::max(v + std::log(cfg.tau0), input);
  const bool spike = pre - cfg.theta > 0.0;
  return {spike ? cfg.v_reset : pre, spike, pre, std::abs(pre - cfg.theta)};
}

OracleLayerStep maxplus_dlif_oracle(std::span<const double> v, std::span<const double> input,
                                    const NeuronConfig& cfg) {
  if (v.size() != input.size()) throw ShapeError("maxplus_dlif_oracle: state/input size mismatch");
  const std::size_t n = v.size();
  OracleLayerStep out;
  out.v_next.resize(n);
  out.spikes.resize(n);
  out.pre_reset.resize(n);
  out.margin.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double left = v[(i + n - 1) % n];
    const double right = v[(i + 1) % n];
    const double pre = std::max({left, v[i], right}) + input[i];
    const bool spike = pre - cfg.theta > 0.0;
    out.pre_reset[i] = pre;
    out.spikes[i] = spike;
    out.v_next[i] = spike ? cfg.v_reset : pre;
    out.margin[i] = std::abs(pre - cfg.theta);
  }
  return out;
}

std::vector<double> diffusion_average_step(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (v[(i + n - 1) % n] + v[i] + v[(i + 1) % n]) / 3.0;
  }
  return out;
}

}  // namespace ultrasnn
