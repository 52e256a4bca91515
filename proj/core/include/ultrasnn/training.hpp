#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ultrasnn/encoding.hpp"
#include "ultrasnn/network.hpp"

namespace ultrasnn {

enum class EpsMode { Learned, Fixed };
enum class Schedule { Cosine, Constant };

struct TrainConfig {
  double lr0 = 1e-3;
  std::size_t batch = 128;
  std::size_t epochs = 15;
  std::uint64_t seed = 42;
  Schedule schedule = Schedule::Cosine;
  double lambda = 0.0;
  EpsMode eps_mode = EpsMode::Learned;
  double eps_fixed = 1.0;  // used when eps_mode == Fixed
  InputMode input = InputMode::Rate;
  double gain = 0.5;

  void validate() const;
};

/// Parses "key = value" lines; blank lines and text after '#' are ignored.
/// Duplicate keys and lines without '=' raise ConfigError.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Applies recognised keys (lr0, batch, epochs, seed, schedule, lambda, eps_mode, eps_fixed,
/// input, gain) on top of `base`. Unknown keys raise ConfigError.
TrainConfig train_config_from(const std::map<std::string, std::string>& kv, TrainConfig base = {});
/// Inverse of train_config_from, one key per line in a fixed order.
std::string format_train_config(const TrainConfig& cfg);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update of every trainable parameter. Frozen parameters are skipped.
void adam_step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, AdamState& state, double lr);

/// 0.5 * lr0 * (1 + cos(pi * epoch / epochs)), never negative.
double cosine_lr(std::size_t epoch, std::size_t epochs, double lr0);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;        // mean training loss (cross-entropy plus penalty)
  double acc = 0.0;         // test accuracy, soft spikes for ultra kinds
  double acc_hard = 0.0;    // test accuracy with Heaviside spikes (equals acc for baselines)
  double spike_soft = 0.0;  // mean hidden spike rate on the test set
  double spike_hard = 0.0;
  double energy = 0.0;      // timesteps * spike_soft
  std::vector<double> eps;  // per hidden layer, empty for baselines
  double lr = 0.0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;

  /// Columns: epoch, loss, acc, spike_soft, spike_hard, energy, eps_layer0.., lr, acc_hard.
  std::string to_csv() const;
  std::string to_json() const;
};

struct EvalResult {
  double loss = 0.0;
  double acc = 0.0;
  double acc_hard = 0.0;
  double spike_soft = 0.0;
  double spike_hard = 0.0;
};

/// Test-set evaluation. Rate-coded inputs come from a stream keyed on (seed, batch index) only,
/// so every epoch sees the same spikes.
EvalResult evaluate(const Network& net, const Dataset& data, const TrainConfig& cfg);

struct TrainResult {
  Network final_net;
  Network best_net;
  RunMetrics metrics;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Deterministic given (spec, data, cfg). Throws ConfigError if the data width or label range
/// does not fit the NetworkSpec.
TrainResult train(const NetworkSpec& spec, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct AblationRow {
  std::string setting;  // "fixed=0.5", "learned"
  bool learned = false;
  double eps_init = 1.0;
  double acc = 0.0;
  double spike_rate = 0.0;
  std::vector<double> final_eps;
  RunMetrics metrics;
};

/// One run per fixed temperature plus an optional learned run, all on the same seed.
std::vector<AblationRow> ablate_epsilon(const NetworkSpec& spec, const Dataset& train_data,
                                        const Dataset& test_data, const TrainConfig& cfg,
                                        const std::vector<double>& fixed, bool learned,
                                        const EpochCallback& on_epoch = {});

}  // namespace ultrasnn
