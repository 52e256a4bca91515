#include "ultrasnn/training.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ultrasnn/error.hpp"
#include "ultrasnn/random.hpp"

namespace ultrasnn {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
  if (batch == 0) throw ConfigError("batch must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (eps_mode == EpsMode::Fixed && !(eps_fixed > 0.0)) throw ConfigError("eps_fixed must be positive");
  if (!(gain >= 0.0 && gain <= 1.0)) throw ConfigError("gain must lie in [0, 1]");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

std::uint64_t to_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::string number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::size_t argmax_row(const Tensor& logits, std::size_t r) {
  const std::size_t c = logits.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (logits(r, j) > logits(r, best)) best = j;
  }
  return best;
}

std::size_t correct_count(const Tensor& logits, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    hits += argmax_row(logits, r) == static_cast<std::size_t>(labels[r]) ? 1 : 0;
  }
  return hits;
}

void check_fit(const NetworkSpec& spec, const Dataset& data, const char* which) {
  if (data.size() == 0) throw ConfigError(std::string(which) + " set is empty");
  if (data.width() != spec.inputs) {
    throw ConfigError(std::string(which) + " set has width " + std::to_string(data.width()) +
                      " but the network expects " + std::to_string(spec.inputs));
  }
  if (data.classes() > spec.classes) {
    throw ConfigError(std::string(which) + " set has labels up to " + std::to_string(data.classes() - 1) +
                      " but the network has " + std::to_string(spec.classes) + " classes");
  }
}

std::vector<double> layer_eps(const Network& net) {
  std::vector<double> out;
  if (!is_ultra(net.spec().neuron.kind)) return out;
  for (std::size_t l = 0; l < net.spec().hidden.size(); ++l) out.push_back(net.epsilon(l));
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) throw ConfigError("duplicate config key '" + key + "'");
  }
  return out;
}

TrainConfig train_config_from(const std::map<std::string, std::string>& kv, TrainConfig cfg) {
  for (const auto& [key, value] : kv) {
    if (key == "lr0") cfg.lr0 = to_double(key, value);
    else if (key == "batch") cfg.batch = to_unsigned(key, value);
    else if (key == "epochs") cfg.epochs = to_unsigned(key, value);
    else if (key == "seed") cfg.seed = to_unsigned(key, value);
    else if (key == "lambda") cfg.lambda = to_double(key, value);
    else if (key == "eps_fixed") cfg.eps_fixed = to_double(key, value);
    else if (key == "gain") cfg.gain = to_double(key, value);
    else if (key == "input") cfg.input = parse_input_mode(value);
    else if (key == "schedule") {
      if (value == "cosine") cfg.schedule = Schedule::Cosine;
      else if (value == "constant") cfg.schedule = Schedule::Constant;
      else throw ConfigError("schedule must be cosine or constant, got '" + value + "'");
    } else if (key == "eps_mode") {
      if (value == "learned") cfg.eps_mode = EpsMode::Learned;
      else if (value == "fixed") cfg.eps_mode = EpsMode::Fixed;
      else throw ConfigError("eps_mode must be learned or fixed, got '" + value + "'");
    } else {
      throw ConfigError("unknown training config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  out += "lr0 = " + number(cfg.lr0) + "\n";
  out += "batch = " + std::to_string(cfg.batch) + "\n";
  out += "epochs = " + std::to_string(cfg.epochs) + "\n";
  out += "seed = " + std::to_string(cfg.seed) + "\n";
  out += std::string("schedule = ") + (cfg.schedule == Schedule::Cosine ? "cosine" : "constant") + "\n";
  out += "lambda = " + number(cfg.lambda) + "\n";
  out += std::string("eps_mode = ") + (cfg.eps_mode == EpsMode::Learned ? "learned" : "fixed") + "\n";
  out += "eps_fixed = " + number(cfg.eps_fixed) + "\n";
  out += "input = " + std::string(to_string(cfg.input)) + "\n";
  out += "gain = " + number(cfg.gain) + "\n";
  return out;
}

void adam_step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, AdamState& state, double lr) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: one gradient per parameter required");
  if (state.m.empty()) {
    for (const Parameter& p : params) {
      state.m.emplace_back(p.value.shape());
      state.v.emplace_back(p.value.shape());
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params[i].name);
    }
    if (!params[i].trainable) continue;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    Tensor& w = params[i].value;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t epochs, double lr0) {
  if (epochs == 0) throw ConfigError("cosine_lr needs epochs >= 1");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs);
  return std::max(0.0, 0.5 * lr0 * (1.0 + std::cos(phase)));
}

std::string RunMetrics::to_csv() const {
  const std::size_t layers = epochs.empty() ? 0 : epochs.front().eps.size();
  std::string out = "epoch,loss,acc,spike_soft,spike_hard,energy";
  for (std::size_t l = 0; l < layers; ++l) out += ",eps_layer" + std::to_string(l);
  out += ",lr,acc_hard\n";
  for (const EpochMetrics& e : epochs) {
    out += std::to_string(e.epoch) + "," + number(e.loss) + "," + number(e.acc) + "," + number(e.spike_soft) +
           "," + number(e.spike_hard) + "," + number(e.energy);
    for (double x : e.eps) out += "," + number(x);
    out += "," + number(e.lr) + "," + number(e.acc_hard) + "\n";
  }
  return out;
}

std::string RunMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs.size();
  j["best_epoch"] = best_epoch;
  if (!epochs.empty()) {
    const EpochMetrics& best = epochs.at(best_epoch);
    const EpochMetrics& last = epochs.back();
    auto row = [](const EpochMetrics& e) {
      return nlohmann::ordered_json{{"epoch", e.epoch},           {"loss", e.loss},
                                    {"acc", e.acc},               {"acc_hard", e.acc_hard},
                                    {"spike_rate_soft", e.spike_soft}, {"spike_rate_hard", e.spike_hard},
                                    {"energy", e.energy},         {"eps", e.eps},
                                    {"lr", e.lr}};
    };
    j["best"] = row(best);
    j["final"] = row(last);
  }
  return j.dump(2) + "\n";
}

EvalResult evaluate(const Network& net, const Dataset& data, const TrainConfig& cfg) {
  check_fit(net.spec(), data, "evaluation");
  const bool ultra = is_ultra(net.spec().neuron.kind);
  const std::size_t T = net.spec().timesteps;
  EvalResult res;
  std::size_t hits = 0, hits_hard = 0;
  double loss_sum = 0.0, soft_sum = 0.0, hard_sum = 0.0;
  std::vector<std::size_t> rows;
  for (std::size_t first = 0, b = 0; first < data.size(); first += cfg.batch, ++b) {
    const std::size_t count = std::min(cfg.batch, data.size() - first);
    rows.resize(count);
    std::iota(rows.begin(), rows.end(), first);
    Rng rng(cfg.seed, {static_cast<std::uint64_t>(Stream::TestEncoding), b});
    EncodedBatch batch = encode_batch(data, rows, T, cfg.input, cfg.gain, rng);

    Tape tape(false);
    ForwardRecord soft = forward(net, tape, batch.spikes, ForwardMode::EvalSoft);
    const double w = static_cast<double>(count);
    loss_sum += ad::softmax_cross_entropy(soft.logits, batch.labels).item() * w;
    hits += correct_count(soft.logits.value(), batch.labels);
    soft_sum += soft.spike_rate.item() * w;
    if (ultra) {
      Tape hard_tape(false);
      ForwardRecord hard = forward(net, hard_tape, batch.spikes, ForwardMode::EvalHard);
      hits_hard += correct_count(hard.logits.value(), batch.labels);
      hard_sum += hard.spike_rate.item() * w;
    }
  }
  const double n = static_cast<double>(data.size());
  res.loss = loss_sum / n;
  res.acc = static_cast<double>(hits) / n;
  res.spike_soft = soft_sum / n;
  res.acc_hard = ultra ? static_cast<double>(hits_hard) / n : res.acc;
  res.spike_hard = ultra ? hard_sum / n : res.spike_soft;
  return res;
}

TrainResult train(const NetworkSpec& spec_in, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  NetworkSpec spec = spec_in;
  spec.lambda = cfg.lambda;
  spec.validate();
  check_fit(spec, train_data, "training");
  check_fit(spec, test_data, "test");

  Network net = Network::initialized(spec, cfg.seed);
  if (cfg.eps_mode == EpsMode::Fixed) {
    if (!is_ultra(spec.neuron.kind)) throw ConfigError("fixed temperature needs an ultradiscretized kind");
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) net.set_epsilon(l, cfg.eps_fixed, false);
  }

  TrainResult result{net, net, {}};
  AdamState adam;
  double best_acc = -1.0;
  std::vector<std::size_t> order(train_data.size());
  std::vector<Tensor> grads;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.schedule == Schedule::Cosine ? cosine_lr(epoch, cfg.epochs, cfg.lr0) : cfg.lr0;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(cfg.seed, {static_cast<std::uint64_t>(Stream::Shuffle), epoch});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t first = 0, b = 0; first < order.size(); first += cfg.batch, ++b) {
      const std::size_t count = std::min(cfg.batch, order.size() - first);
      std::span<const std::size_t> rows(order.data() + first, count);
      Rng rng(cfg.seed, {static_cast<std::uint64_t>(Stream::TrainEncoding), epoch, b});
      EncodedBatch batch = encode_batch(train_data, rows, spec.timesteps, cfg.input, cfg.gain, rng);

      Tape tape;
      ForwardRecord rec = forward(net, tape, batch.spikes, ForwardMode::Train);
      Var objective = loss(rec, batch.labels, cfg.lambda);
      if (!std::isfinite(objective.item())) {
        throw InputError("training loss became non-finite at epoch " + std::to_string(epoch));
      }
      tape.backward(objective);
      grads.clear();
      for (const Var& p : rec.params) grads.push_back(tape.grad(p));
      adam_step(net.parameters(), grads, adam, lr);
      net.project_epsilon();
      loss_sum += objective.item() * static_cast<double>(count);
    }

    const EvalResult ev = evaluate(net, test_data, cfg);
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(order.size());
    m.acc = ev.acc;
    m.acc_hard = ev.acc_hard;
    m.spike_soft = ev.spike_soft;
    m.spike_hard = ev.spike_hard;
    m.energy = energy(ev.spike_soft, spec.timesteps);
    m.eps = layer_eps(net);
    m.lr = lr;
    result.metrics.epochs.push_back(m);
    if (ev.acc > best_acc) {
      best_acc = ev.acc;
      result.metrics.best_epoch = epoch;
      result.best_net = net;
    }
    if (on_epoch) on_epoch(m);
  }
  result.final_net = net;
  return result;
}

std::vector<AblationRow> ablate_epsilon(const NetworkSpec& spec, const Dataset& train_data,
                                        const Dataset& test_data, const TrainConfig& cfg,
                                        const std::vector<double>& fixed, bool learned,
                                        const EpochCallback& on_epoch) {
  if (!is_ultra(spec.neuron.kind)) throw ConfigError("temperature ablation needs an ultradiscretized kind");
  std::vector<AblationRow> rows;
  auto run = [&](TrainConfig c, std::string setting, double init) {
    NetworkSpec s = spec;
    if (c.eps_mode == EpsMode::Learned) s.neuron.eps0 = init;
    TrainResult r = train(s, train_data, test_data, c, on_epoch);
    AblationRow row;
    row.setting = std::move(setting);
    row.learned = c.eps_mode == EpsMode::Learned;
    row.eps_init = init;
    row.acc = r.metrics.epochs.back().acc;
    row.spike_rate = r.metrics.epochs.back().spike_soft;
    row.final_eps = r.metrics.epochs.back().eps;
    row.metrics = std::move(r.metrics);
    rows.push_back(std::move(row));
  };
  for (double eps : fixed) {
    TrainConfig c = cfg;
    c.eps_mode = EpsMode::Fixed;
    c.eps_fixed = eps;
    run(c, "fixed=" + number(eps), eps);
  }
  if (learned) {
    TrainConfig c = cfg;
    c.eps_mode = EpsMode::Learned;
    run(c, "learned", spec.neuron.eps0);
  }
  return rows;
}

}  // namespace ultrasnn
