#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ultrasnn/checkpoint.hpp"
#include "ultrasnn/encoding.hpp"
#include "ultrasnn/error.hpp"
#include "ultrasnn/gradcheck.hpp"
#include "ultrasnn/network.hpp"
#include "ultrasnn/random.hpp"
#include "ultrasnn/training.hpp"
#include "ultrasnn/tropical.hpp"

#ifndef ULTRASNN_DEFAULT_DATA_DIR
#define ULTRASNN_DEFAULT_DATA_DIR "data/mnist"
#endif

namespace ultrasnn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "0.3.0";

// ---------------------------------------------------------------------------
// Small helpers

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path prepare_out(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
  return dir;
}

std::string resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ULTRASNN_DATA"); env && *env) return env;
  return ULTRASNN_DEFAULT_DATA_DIR;
}

// Shortest text that parses back to the same double.
std::string num(double x) {
  std::ostringstream ss;
  ss.precision(17);
  ss << x;
  return ss.str();
}

template <class T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) out += num(xs[i]);
    else out += std::to_string(xs[i]);
  }
  return out;
}

ordered_json big_to_json(const BigInt& v) {
  if (v <= BigInt(std::numeric_limits<std::uint64_t>::max())) return v.convert_to<std::uint64_t>();
  return v.str();
}

// Expands `--config FILE` into explicit --key=value arguments for every key not already
// present on the command line, so flags always override the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      out.push_back(args[i]);
    }
  }
  if (!config) return out;
  const auto kv = parse_key_values(read_text(*config));
  for (const auto& [key, value] : kv) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    bool given = false;
    for (const std::string& a : out) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (!given) out.push_back(flag + "=" + value);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DataOptions {
  std::string dataset = "mnist";
  std::string data_dir;
  std::size_t subset = 8000;
  std::size_t test_subset = 2000;
  std::size_t blob_classes = 2;
  std::size_t blob_per_class = 100;
  std::size_t blob_dim = 2;

  void add(CLI::App* app) {
    app->add_option("--dataset", dataset, "mnist | blobs")->check(CLI::IsMember({"mnist", "blobs"}));
    app->add_option("--data-dir", data_dir, "MNIST IDX directory (default: $ULTRASNN_DATA or the bundled subset)");
    app->add_option("--subset", subset, "training rows to use (0 = all)");
    app->add_option("--test-subset", test_subset, "test rows to use (0 = all)");
    app->add_option("--blob-classes", blob_classes, "blobs: number of classes");
    app->add_option("--blob-per-class", blob_per_class, "blobs: samples per class");
    app->add_option("--blob-dim", blob_dim, "blobs: input dimension");
  }

  std::vector<std::string> canonical() const {
    if (dataset == "blobs") {
      return {"--dataset", "blobs", "--blob-classes", std::to_string(blob_classes), "--blob-per-class",
              std::to_string(blob_per_class), "--blob-dim", std::to_string(blob_dim)};
    }
    return {"--dataset", "mnist", "--data-dir", fs::absolute(resolve_data_dir(data_dir)).string(),
            "--subset", std::to_string(subset), "--test-subset", std::to_string(test_subset)};
  }

  std::pair<Dataset, Dataset> load(std::uint64_t seed) const {
    if (dataset == "blobs") {
      return {make_blobs(blob_classes, blob_per_class, blob_dim, seed),
              make_blobs(blob_classes, blob_per_class, blob_dim, seed + 1)};
    }
    const fs::path dir = resolve_data_dir(data_dir);
    return {load_mnist(dir, Split::Train, subset), load_mnist(dir, Split::Test, test_subset)};
  }

  Dataset load_test(std::uint64_t seed) const {
    if (dataset == "blobs") return make_blobs(blob_classes, blob_per_class, blob_dim, seed + 1);
    return load_mnist(resolve_data_dir(data_dir), Split::Test, test_subset);
  }

  std::size_t classes(const Dataset& d) const { return dataset == "blobs" ? blob_classes : std::max<std::size_t>(10, d.classes()); }
};

struct ModelOptions {
  std::string model = "ultralif";
  std::vector<std::size_t> hidden{64};
  std::size_t timesteps = 1;
  double eps0 = 1.0;

  void add(CLI::App* app) {
    app->add_option("--model", model, "neuron kind (ultralif, ultraplif, ultradlif, ultradplif, lif, plif, adalif, fullplif, dspike, dspike+)");
    app->add_option("--hidden", hidden, "hidden widths, comma separated")->delimiter(',');
    app->add_option("--timesteps", timesteps, "simulation steps T");
    app->add_option("--eps0", eps0, "initial temperature for learned runs");
  }

  std::vector<std::string> canonical() const {
    return {"--model", std::string(to_string(parse_neuron_kind(model))), "--hidden", join(hidden),
            "--timesteps", std::to_string(timesteps), "--eps0", num(eps0)};
  }

  NetworkSpec spec(std::size_t inputs, std::size_t classes) const {
    NetworkSpec s;
    s.inputs = inputs;
    s.hidden = hidden;
    s.classes = classes;
    s.timesteps = timesteps;
    s.neuron.kind = parse_neuron_kind(model);
    s.neuron.eps0 = eps0;
    return s;
  }
};

struct OptimOptions {
  double lr0 = 1e-3;
  std::size_t batch = 128;
  std::size_t epochs = 15;
  std::uint64_t seed = 42;
  std::string schedule = "cosine";
  double lambda = 0.0;
  std::string input = "rate";
  double gain = 0.5;

  void add(CLI::App* app) {
    app->add_option("--lr0,--lr", lr0, "initial learning rate");
    app->add_option("--batch", batch, "minibatch size");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--schedule", schedule, "cosine | constant")->check(CLI::IsMember({"cosine", "constant"}));
    app->add_option("--lambda", lambda, "spike-rate penalty weight");
    app->add_option("--input", input, "rate | analog")->check(CLI::IsMember({"rate", "analog"}));
    app->add_option("--gain", gain, "rate-coding gain");
  }

  std::vector<std::string> canonical() const {
    return {"--lr0", num(lr0), "--batch", std::to_string(batch), "--epochs", std::to_string(epochs),
            "--seed", std::to_string(seed), "--schedule", schedule, "--lambda", num(lambda),
            "--input", input, "--gain", num(gain)};
  }

  TrainConfig config() const {
    TrainConfig c;
    c.lr0 = lr0;
    c.batch = batch;
    c.epochs = epochs;
    c.seed = seed;
    c.schedule = schedule == "cosine" ? Schedule::Cosine : Schedule::Constant;
    c.lambda = lambda;
    c.input = parse_input_mode(input);
    c.gain = gain;
    c.validate();
    return c;
  }
};

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& canonical,
                    std::uint64_t seed) {
  ordered_json m;
  m["tool"] = "ultrasnn";
  m["version"] = kVersion;
  m["command"] = command;
  m["seed"] = seed;
  m["args"] = canonical;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

ordered_json epoch_json(const EpochMetrics& e) {
  return {{"epoch", e.epoch},
          {"loss", e.loss},
          {"acc", e.acc},
          {"acc_hard", e.acc_hard},
          {"spike_rate_soft", e.spike_soft},
          {"spike_rate_hard", e.spike_hard},
          {"energy", e.energy},
          {"eps", e.eps},
          {"lr", e.lr}};
}

void print_epoch(std::ostream& out, const std::string& tag, const EpochMetrics& e) {
  out << tag << "epoch " << e.epoch << "  loss " << num(e.loss) << "  acc " << num(e.acc) << "  spike "
      << num(e.spike_soft);
  for (std::size_t l = 0; l < e.eps.size(); ++l) out << "  eps" << l << " " << num(e.eps[l]);
  out << "\n";
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_train(const DataOptions& data, const ModelOptions& model, const OptimOptions& optim,
              std::optional<double> eps_fixed, const std::string& out_dir, std::ostream& out) {
  TrainConfig cfg = optim.config();
  if (eps_fixed) {
    cfg.eps_mode = EpsMode::Fixed;
    cfg.eps_fixed = *eps_fixed;
  }
  const fs::path dir = prepare_out(out_dir);
  auto [train_set, test_set] = data.load(cfg.seed);
  NetworkSpec spec = model.spec(train_set.width(), data.classes(train_set));
  TrainResult res = train(spec, train_set, test_set, cfg, [&](const EpochMetrics& e) { print_epoch(out, "", e); });

  write_text(dir / "metrics.csv", res.metrics.to_csv());
  save_checkpoint(dir / "checkpoint.bin", make_checkpoint(res.best_net, cfg.seed, res.metrics.best_epoch));
  save_checkpoint(dir / "checkpoint_final.bin",
                  make_checkpoint(res.final_net, cfg.seed, res.metrics.epochs.back().epoch));

  ordered_json summary;
  summary["command"] = "train";
  summary["spec"] = ordered_json::parse(spec_to_json(res.final_net.spec()));
  summary["config"] = format_train_config(cfg);
  summary["train_rows"] = train_set.size();
  summary["test_rows"] = test_set.size();
  summary["best_epoch"] = res.metrics.best_epoch;
  summary["best"] = epoch_json(res.metrics.epochs[res.metrics.best_epoch]);
  summary["final"] = epoch_json(res.metrics.epochs.back());
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::vector<std::string> canonical = concat({{"train"}, data.canonical(), model.canonical(), optim.canonical()});
  if (eps_fixed) {
    canonical.push_back("--eps-fixed");
    canonical.push_back(num(*eps_fixed));
  }
  write_manifest(dir, "train", canonical, cfg.seed);
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

int cmd_eval(const DataOptions& data, const std::string& checkpoint, bool hard, const OptimOptions& optim,
             const std::string& out_dir, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Network net = restore_network(ckpt);
  if (hard && !is_ultra(net.spec().neuron.kind)) {
    throw ConfigError("--hard-spikes applies to ultradiscretized models only");
  }
  TrainConfig cfg = optim.config();
  const Dataset test_set = data.load_test(cfg.seed);
  const EvalResult ev = evaluate(net, test_set, cfg);
  const double rate = hard ? ev.spike_hard : ev.spike_soft;
  ordered_json j;
  j["command"] = "eval";
  j["model"] = std::string(to_string(net.spec().neuron.kind));
  j["mode"] = hard ? "hard" : "soft";
  j["rows"] = test_set.size();
  j["acc"] = hard ? ev.acc_hard : ev.acc;
  j["loss"] = ev.loss;
  j["spike_rate"] = rate;
  j["spike_rate_soft"] = ev.spike_soft;
  j["spike_rate_hard"] = ev.spike_hard;
  j["energy"] = energy(rate, net.spec().timesteps);
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!out_dir.empty()) {
    const fs::path dir = prepare_out(out_dir);
    write_text(dir / "summary.json", text);
    std::vector<std::string> canonical =
        concat({{"eval", "--checkpoint", fs::absolute(checkpoint).string()}, data.canonical(), optim.canonical()});
    if (hard) canonical.push_back("--hard-spikes");
    write_manifest(dir, "eval", canonical, cfg.seed);
  }
  return kOk;
}

int cmd_gradcheck(const std::string& model, double step, std::uint64_t seed, double lambda, double tolerance,
                  const std::string& out_dir, std::ostream& out) {
  const NeuronKind kind = parse_neuron_kind(model);
  MicroNet m = make_micro_net(kind, seed, lambda);
  const auto analytic = autodiff_gradients(m.net, m.input, m.labels, m.lambda);
  const auto numeric = finite_difference_gradients(m.net, m.input, m.labels, m.lambda, step);
  const GradcheckReport rep = compare_gradients(m.net, analytic, numeric);
  const bool pass = rep.max_rel_error < tolerance;
  ordered_json j;
  j["command"] = "gradcheck";
  j["model"] = std::string(to_string(kind));
  j["fd_step"] = step;
  j["seed"] = seed;
  j["entries"] = rep.entries;
  j["max_rel_error"] = rep.max_rel_error;
  j["max_abs_error"] = rep.max_abs_error;
  j["worst"] = rep.worst_parameter;
  j["tolerance"] = tolerance;
  j["pass"] = pass;
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!out_dir.empty()) {
    const fs::path dir = prepare_out(out_dir);
    write_text(dir / "summary.json", text);
    write_manifest(dir, "gradcheck",
                   {"gradcheck", "--model", std::string(to_string(kind)), "--fd-step", num(step), "--seed",
                    std::to_string(seed), "--lambda", num(lambda), "--tolerance", num(tolerance)},
                   seed);
  }
  return pass ? kOk : kCheckFailed;
}

int cmd_ablate(const DataOptions& data, const ModelOptions& model, const OptimOptions& optim,
               const std::vector<double>& fixed, bool learned, const std::string& out_dir, std::ostream& out) {
  TrainConfig cfg = optim.config();
  if (fixed.empty() && !learned) throw ConfigError("ablate-eps needs --fixed values and/or --learned");
  const fs::path dir = prepare_out(out_dir);
  auto [train_set, test_set] = data.load(cfg.seed);
  NetworkSpec spec = model.spec(train_set.width(), data.classes(train_set));
  std::size_t run_index = 0;
  std::vector<std::string> labels;
  for (double e : fixed) labels.push_back("fixed=" + num(e));
  if (learned) labels.push_back("learned");
  auto rows = ablate_epsilon(spec, train_set, test_set, cfg, fixed, learned, [&](const EpochMetrics& e) {
    if (e.epoch == 0 && run_index < labels.size()) out << "# " << labels[run_index++] << "\n";
    print_epoch(out, "  ", e);
  });

  std::string csv = "setting,learned,eps_init,acc,spike_rate";
  for (std::size_t l = 0; l < spec.hidden.size(); ++l) csv += ",final_eps_layer" + std::to_string(l);
  csv += "\n";
  ordered_json runs = ordered_json::array();
  for (const AblationRow& r : rows) {
    csv += r.setting + "," + (r.learned ? "1" : "0") + "," + num(r.eps_init) + "," + num(r.acc) + "," +
           num(r.spike_rate);
    for (double e : r.final_eps) csv += "," + num(e);
    csv += "\n";
    std::string safe = r.setting;
    std::replace(safe.begin(), safe.end(), '=', '_');
    write_text(dir / ("metrics_" + safe + ".csv"), r.metrics.to_csv());
    runs.push_back({{"setting", r.setting},
                    {"learned", r.learned},
                    {"eps_init", r.eps_init},
                    {"acc", r.acc},
                    {"spike_rate", r.spike_rate},
                    {"final_eps", r.final_eps}});
  }
  write_text(dir / "ablation.csv", csv);
  ordered_json summary;
  summary["command"] = "ablate-eps";
  summary["spec"] = ordered_json::parse(spec_to_json(spec));
  summary["config"] = format_train_config(cfg);
  summary["runs"] = runs;
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  std::vector<std::string> canonical = concat({{"ablate-eps"}, data.canonical(), model.canonical(), optim.canonical()});
  if (!fixed.empty()) {
    canonical.push_back("--fixed");
    canonical.push_back(join(fixed));
  }
  if (learned) canonical.push_back("--learned");
  write_manifest(dir, "ablate-eps", canonical, cfg.seed);
  out << "wrote " << dir.string() << "\n";
  return kOk;
}

struct AnalyzeOptions {
  std::size_t hidden = 3;
  std::size_t inputs = 2;
  std::uint64_t seed = 7;
  std::size_t resolution = 0;  // 0 picks a per-command default
  std::size_t timesteps = 2;
  std::string method = "auto";
  std::string boundary = "membrane";
  std::string checkpoint;
  double tau0 = 0.9;
  double theta = 0.5;
};

Tensor gaussian_weights(std::size_t h, std::size_t n, std::uint64_t seed) {
  Rng rng(seed, {static_cast<std::uint64_t>(Stream::Analysis)});
  Tensor w({h, n});
  for (double& x : w.data()) x = rng.normal();
  return w;
}

std::optional<Network> analysis_network(const AnalyzeOptions& o) {
  if (o.checkpoint.empty()) return std::nullopt;
  return restore_network(load_checkpoint(o.checkpoint));
}

std::vector<std::string> analyze_canonical(const std::string& what, const AnalyzeOptions& o) {
  std::vector<std::string> c = {"analyze", what};
  if (!o.checkpoint.empty()) {
    c.insert(c.end(), {"--checkpoint", fs::absolute(o.checkpoint).string()});
  } else {
    c.insert(c.end(), {"--hidden", std::to_string(o.hidden), "--inputs", std::to_string(o.inputs), "--seed",
                       std::to_string(o.seed), "--tau0", num(o.tau0), "--theta", num(o.theta)});
  }
  c.insert(c.end(), {"--resolution", std::to_string(o.resolution), "--timesteps", std::to_string(o.timesteps),
                     "--method", o.method, "--boundary", o.boundary});
  return c;
}

ordered_json analyze_regions(const AnalyzeOptions& o) {
  Arrangement arr;
  if (auto net = analysis_network(o)) {
    arr = Arrangement::from_network(*net, o.boundary == "spike" ? Boundary::Spike : Boundary::Membrane);
  } else {
    if (o.hidden == 0 || o.inputs == 0) throw ConfigError("--hidden and --inputs must be >= 1");
    const double level = o.boundary == "spike" ? o.theta : std::log(o.tau0);
    arr = Arrangement::uniform(gaussian_weights(o.hidden, o.inputs, o.seed), level);
  }
  const bool exact = o.method == "exact" || (o.method == "auto" && arr.dims() == 2);
  const std::size_t res = o.resolution ? o.resolution : (arr.dims() == 3 ? 200 : 1000);
  const RegionReport rep = exact ? count_regions_exact(arr) : count_regions_grid(arr, res);
  ordered_json j;
  j["command"] = "analyze regions";
  j["hidden"] = arr.hyperplanes();
  j["inputs"] = arr.dims();
  j["boundary"] = o.boundary;
  j["method"] = exact ? "exact" : "grid";
  if (!exact) {
    j["resolution"] = rep.resolution;
    j["box"] = rep.box;
  }
  j["formula"] = big_to_json(rep.formula);
  j["empirical"] = rep.empirical;
  j["within_bound"] = BigInt(rep.empirical) <= rep.formula;
  return j;
}

ordered_json analyze_zonotope(const AnalyzeOptions& o) {
  Arrangement arr;
  if (auto net = analysis_network(o)) {
    arr = Arrangement::from_network(*net, Boundary::Membrane);
  } else {
    arr = Arrangement::uniform(gaussian_weights(o.hidden, o.inputs, o.seed), std::log(o.tau0));
  }
  const ZonotopeReport z = zonotope_volume(arr.weights);
  ordered_json j;
  j["command"] = "analyze zonotope";
  j["hidden"] = arr.hyperplanes();
  j["inputs"] = arr.dims();
  j["volume"] = z.volume;
  j["rank"] = z.rank;
  j["rank_deficient"] = z.rank_deficient;
  if (arr.dims() <= 3 && arr.hyperplanes() <= 20) {
    const GeneralPositionReport g = general_position_check(arr, o.resolution ? o.resolution : 200);
    j["min_abs_det"] = g.min_abs_det;
    j["near_parallel_pairs"] = g.near_parallel.size();
    j["concurrent"] = g.concurrent;
    j["degenerate"] = g.degenerate;
    if (g.regions) j["regions"] = *g.regions;
    j["capacity_checked"] = g.capacity_checked;
    j["capacity_ok"] = g.capacity_ok;
  }
  return j;
}

ordered_json analyze_temporal(const AnalyzeOptions& o) {
  TropicalLayer layer;
  if (auto net = analysis_network(o)) {
    layer = TropicalLayer::from_network(*net);
  } else {
    layer.weights = gaussian_weights(o.hidden, o.inputs, o.seed);
    layer.bias.assign(o.hidden, 0.0);
    layer.neuron.tau0 = o.tau0;
    layer.neuron.theta = o.theta;
  }
  const std::size_t n = layer.weights.dim(1);
  const std::size_t res = o.resolution ? o.resolution : (n == 3 ? 120 : 600);
  const TemporalReport t = temporal_region_count(layer, o.timesteps, res);
  ordered_json j;
  j["command"] = "analyze temporal";
  j["hidden"] = layer.weights.dim(0);
  j["inputs"] = n;
  j["timesteps"] = t.timesteps;
  j["resolution"] = res;
  j["bound"] = big_to_json(t.bound);
  j["empirical"] = t.empirical;
  j["within_bound"] = BigInt(t.empirical) <= t.bound;
  return j;
}

ordered_json analyze_energy(std::optional<double> rate, const std::string& metrics, std::size_t timesteps) {
  ordered_json j;
  j["command"] = "analyze energy";
  j["timesteps"] = timesteps;
  if (rate) {
    if (!(*rate >= 0.0 && *rate <= 1.0)) throw DomainError("--rate must lie in [0, 1]");
    j["spike_rate"] = *rate;
    j["energy"] = energy(*rate, timesteps);
    return j;
  }
  if (metrics.empty()) throw ConfigError("analyze energy needs --rate or --metrics");
  std::istringstream csv(read_text(metrics));
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  const auto col = std::find(header.begin(), header.end(), "spike_soft");
  if (col == header.end()) throw FormatError("metrics file has no spike_soft column");
  const auto idx = static_cast<std::size_t>(col - header.begin());
  ordered_json rows = ordered_json::array();
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() <= idx) throw FormatError("short metrics row");
    const double r = std::stod(cells[idx]);
    rows.push_back({{"epoch", std::stoul(cells[0])}, {"spike_rate", r}, {"energy", energy(r, timesteps)}});
  }
  j["rows"] = rows;
  return j;
}

int emit_analysis(const ordered_json& j, const std::string& out_dir, const std::vector<std::string>& canonical,
                  std::uint64_t seed, std::ostream& out) {
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!out_dir.empty()) {
    const fs::path dir = prepare_out(out_dir);
    write_text(dir / "summary.json", text);
    write_manifest(dir, canonical.at(0) + " " + canonical.at(1), canonical, seed);
  }
  if (j.contains("within_bound") && !j["within_bound"].get<bool>()) return kCheckFailed;
  return kOk;
}

int cmd_replay(const std::string& manifest, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  ordered_json m;
  try {
    m = ordered_json::parse(read_text(manifest));
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }
  if (!m.contains("args") || !m["args"].is_array()) throw FormatError("manifest has no argument list");
  std::vector<std::string> args = m["args"].get<std::vector<std::string>>();
  const fs::path target = out_dir.empty() ? fs::path(manifest).parent_path() : fs::path(out_dir);
  args.push_back("--out");
  args.push_back(target.string());
  return run(args, out, err);
}

int category_exit(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Config: return kConfigError;
    case ErrorCategory::Io: return kIoError;
    case ErrorCategory::Numeric: return kNumericError;
  }
  return kConfigError;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ultradiscretized spiking networks: training, evaluation and tropical analysis", "ultrasnn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  DataOptions data;
  ModelOptions model;
  OptimOptions optim;
  std::string out_dir;

  auto* train_cmd = app.add_subcommand("train", "train a network and write metrics, checkpoints and a manifest");
  data.add(train_cmd);
  model.add(train_cmd);
  optim.add(train_cmd);
  std::optional<double> eps_fixed;
  train_cmd->add_option("--eps-fixed", eps_fixed, "freeze the temperature at this value");
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--config", "key = value file; explicit flags take precedence");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string checkpoint;
  bool hard = false;
  DataOptions eval_data;
  OptimOptions eval_optim;
  eval_data.add(eval_cmd);
  eval_optim.add(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_flag("--hard-spikes", hard, "Heaviside spikes with hard reset");
  eval_cmd->add_option("--out", out_dir, "optional output directory");

  auto* grad_cmd = app.add_subcommand("gradcheck", "compare reverse-mode and finite-difference gradients on a micro-net");
  std::string grad_model = "ultralif";
  double fd_step = 1e-5, grad_lambda = 0.1, tolerance = 1e-4;
  std::uint64_t grad_seed = 7;
  grad_cmd->add_option("--model", grad_model, "neuron kind");
  grad_cmd->add_option("--fd-step", fd_step, "central-difference step");
  grad_cmd->add_option("--seed", grad_seed, "micro-net seed");
  grad_cmd->add_option("--lambda", grad_lambda, "spike-rate penalty in the checked loss");
  grad_cmd->add_option("--tolerance", tolerance, "fail when the max relative error reaches this");
  grad_cmd->add_option("--out", out_dir, "optional output directory");

  auto* ablate_cmd = app.add_subcommand("ablate-eps", "train once per fixed temperature and once with a learned one");
  DataOptions ablate_data;
  ModelOptions ablate_model;
  OptimOptions ablate_optim;
  ablate_model.model = "ultradlif";
  ablate_data.add(ablate_cmd);
  ablate_model.add(ablate_cmd);
  ablate_optim.add(ablate_cmd);
  std::vector<double> fixed;
  bool learned = false;
  ablate_cmd->add_option("--fixed", fixed, "fixed temperatures, comma separated")->delimiter(',');
  ablate_cmd->add_flag("--learned", learned, "include a learned-temperature run");
  ablate_cmd->add_option("--out", out_dir, "output directory")->required();
  ablate_cmd->add_option("--config", "key = value file; explicit flags take precedence");

  auto* analyze_cmd = app.add_subcommand("analyze", "tropical-limit geometry and energy reports");
  analyze_cmd->require_subcommand(1);
  AnalyzeOptions ao;
  auto add_geometry = [&](CLI::App* c) {
    c->add_option("--hidden", ao.hidden, "hyperplanes h");
    c->add_option("--inputs", ao.inputs, "input dimension n");
    c->add_option("--seed", ao.seed, "seed for Gaussian weights");
    c->add_option("--resolution", ao.resolution, "grid points per axis");
    c->add_option("--checkpoint", ao.checkpoint, "use the first hidden layer of a checkpoint");
    c->add_option("--tau0", ao.tau0, "leak factor");
    c->add_option("--theta", ao.theta, "threshold");
    c->add_option("--out", out_dir, "optional output directory");
  };
  auto* regions_cmd = analyze_cmd->add_subcommand("regions", "count linear regions against the binomial bound");
  add_geometry(regions_cmd);
  regions_cmd->add_option("--method", ao.method, "auto | exact | grid")->check(CLI::IsMember({"auto", "exact", "grid"}));
  regions_cmd->add_option("--boundary", ao.boundary, "membrane | spike")->check(CLI::IsMember({"membrane", "spike"}));
  auto* zono_cmd = analyze_cmd->add_subcommand("zonotope", "zonotope volume and general-position diagnostics");
  add_geometry(zono_cmd);
  auto* temporal_cmd = analyze_cmd->add_subcommand("temporal", "count T-step spike-pattern sequences");
  add_geometry(temporal_cmd);
  temporal_cmd->add_option("--timesteps", ao.timesteps, "unrolled steps T");
  auto* energy_cmd = analyze_cmd->add_subcommand("energy", "relative synaptic-operation count T * rate");
  std::optional<double> rate;
  std::string metrics_path;
  std::size_t energy_T = 1;
  energy_cmd->add_option("--rate", rate, "mean hidden spike rate");
  energy_cmd->add_option("--metrics", metrics_path, "metrics.csv from a training run");
  energy_cmd->add_option("--timesteps", energy_T, "timesteps T");
  energy_cmd->add_option("--out", out_dir, "optional output directory");

  auto* replay_cmd = app.add_subcommand("replay", "rerun the command recorded in a manifest");
  std::string manifest;
  replay_cmd->add_option("--manifest", manifest, "manifest.json")->required();
  replay_cmd->add_option("--out", out_dir, "output directory (default: the manifest's directory)");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::vector<const char*> argv{"ultrasnn"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kConfigError;
    }

    if (*train_cmd) return cmd_train(data, model, optim, eps_fixed, out_dir, out);
    if (*eval_cmd) return cmd_eval(eval_data, checkpoint, hard, eval_optim, out_dir, out);
    if (*grad_cmd) return cmd_gradcheck(grad_model, fd_step, grad_seed, grad_lambda, tolerance, out_dir, out);
    if (*ablate_cmd) return cmd_ablate(ablate_data, ablate_model, ablate_optim, fixed, learned, out_dir, out);
    if (*regions_cmd) return emit_analysis(analyze_regions(ao), out_dir, analyze_canonical("regions", ao), ao.seed, out);
    if (*zono_cmd) return emit_analysis(analyze_zonotope(ao), out_dir, analyze_canonical("zonotope", ao), ao.seed, out);
    if (*temporal_cmd) {
      return emit_analysis(analyze_temporal(ao), out_dir, analyze_canonical("temporal", ao), ao.seed, out);
    }
    if (*energy_cmd) {
      std::vector<std::string> canonical = {"analyze", "energy", "--timesteps", std::to_string(energy_T)};
      if (rate) canonical.insert(canonical.end(), {"--rate", num(*rate)});
      else canonical.insert(canonical.end(), {"--metrics", fs::absolute(metrics_path).string()});
      return emit_analysis(analyze_energy(rate, metrics_path, energy_T), out_dir, canonical, 0, out);
    }
    if (*replay_cmd) return cmd_replay(manifest, out_dir, out, err);
    return kConfigError;
  } catch (const Error& e) {
    err << "error (" << to_string(e.category()) << "): " << e.what() << "\n";
    return category_exit(e);
  } catch (const std::exception& e) {
    err << "error (numeric): " << e.what() << "\n";
    return kNumericError;
  }
}

}  // namespace ultrasnn::cli
