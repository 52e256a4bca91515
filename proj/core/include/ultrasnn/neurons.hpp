#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ultrasnn/autodiff.hpp"

namespace ultrasnn {

enum class NeuronKind {
  UltraLIF,
  UltraPLIF,
  UltraDLIF,
  UltraDPLIF,
  LIF,
  PLIF,
  AdaLIF,
  FullPLIF,
  DSpike,
  DSpikePlus,
};

inline constexpr NeuronKind kAllNeuronKinds[] = {
    NeuronKind::UltraLIF, NeuronKind::UltraPLIF, NeuronKind::UltraDLIF, NeuronKind::UltraDPLIF,
    NeuronKind::LIF,      NeuronKind::PLIF,      NeuronKind::AdaLIF,    NeuronKind::FullPLIF,
    NeuronKind::DSpike,   NeuronKind::DSpikePlus,
};

/// Lower-case name, e.g. "ultradlif", "dspike+".
std::string_view to_string(NeuronKind kind);
/// Case-insensitive inverse of to_string; also accepts "dspikeplus". Throws ConfigError.
NeuronKind parse_neuron_kind(std::string_view name);

/// Soft-spiking kinds built on the log-sum-exp membrane update.
bool is_ultra(NeuronKind kind);
/// Kinds whose membrane couples each unit to its two circular neighbours.
bool is_spatial(NeuronKind kind);
bool learns_tau(NeuronKind kind);
bool learns_theta(NeuronKind kind);
bool learns_sharpness(NeuronKind kind);

struct NeuronConfig {
  NeuronKind kind = NeuronKind::UltraLIF;
  double theta = 0.5;
  double tau0 = 0.9;
  double v_reset = 0.0;
  double eps0 = 1.0;
  double eps_lo = 0.1;
  double eps_hi = 20.0;
  double beta_surrogate = 10.0;
  double beta_adapt = 0.1;
  double tau_adapt = 0.9;
  double dspike_k0 = 4.0;

  /// Throws ConfigError on theta <= 0, tau0 outside (0,1), a bad clamp interval, ...
  void validate() const;
};

/// Name suffix and initial value of one learnable scalar of a neuron layer.
struct NeuronParamInit {
  std::string name;
  double value;
};

/// Learnable scalars for `cfg.kind` in a fixed order:
/// log_eps (ultra), tau_param (learned leak), theta_param (FullPLIF), k (DSpike kinds).
std::vector<NeuronParamInit> neuron_parameter_inits(const NeuronConfig& cfg);

/// Scalar parameters bound to a tape. Unused members stay invalid.
struct NeuronParams {
  Var log_eps;
  Var tau_param;
  Var theta_param;
  Var k;
};

struct NeuronState {
  Var v;                          // [batch, width]
  std::optional<Var> b_adapt;     // AdaLIF only
};

struct StepOutput {
  Var spikes;     // soft in (0,1) for ultra kinds, exactly {0,1} otherwise
  NeuronState next;
  Var pre_reset;  // membrane before the reset (V-tilde, or v' for baselines)
};

/// Zero membrane (and adaptation) of shape [batch, width] as tape constants.
NeuronState initial_state(Tape& tape, const NeuronConfig& cfg, std::size_t batch, std::size_t width);

/// Temperature exp(log_eps) as a tape value.
Var temperature(const NeuronParams& params);

StepOutput ultralif_step(const NeuronConfig& cfg, const NeuronParams& params,
                         const NeuronState& state, Var input);
StepOutput ultradlif_step(const NeuronConfig& cfg, const NeuronParams& params,
                          const NeuronState& state, Var input);
StepOutput baseline_step(const NeuronConfig& cfg, const NeuronParams& params,
                         const NeuronState& state, Var input);
/// Routes to the update for cfg.kind.
StepOutput neuron_step(const NeuronConfig& cfg, const NeuronParams& params,
                       const NeuronState& state, Var input);

/// Ultra membrane update with a Heaviside spike and hard reset. Rejects recording tapes.
StepOutput hard_inference_step(const NeuronConfig& cfg, const NeuronParams& params,
                               const NeuronState& state, Var input);

// Max-plus reference dynamics (the zero-temperature limits), plain doubles.

struct OracleStep {
  double v_next;
  bool spike;
  double pre_reset;
  double margin;  // |pre_reset - theta|
};

OracleStep maxplus_lif_oracle(double v, double input, const NeuronConfig& cfg);

struct OracleLayerStep {
  std::vector<double> v_next;
  std::vector<bool> spikes;
  std::vector<double> pre_reset;
  std::vector<double> margin;
};

OracleLayerStep maxplus_dlif_oracle(std::span<const double> v, std::span<const double> input,
                                    const NeuronConfig& cfg);

/// One step of uniform three-neighbour averaging on a ring.
std::vector<double> diffusion_average_step(std::span<const double> v);

}  // namespace ultrasnn
