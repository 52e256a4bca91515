#include "ultrasnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ultrasnn/error.hpp"

namespace ultrasnn {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'U', 'S', 'N', 'N', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw IoError("checkpoint truncated while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::string get_string(std::istream& is, std::uint64_t length, const std::string& what) {
  if (length > (std::uint64_t{1} << 32)) throw FormatError("implausible " + what + " length");
  std::string s(length, '\0');
  if (length && !is.read(s.data(), static_cast<std::streamsize>(length))) {
    throw IoError("checkpoint truncated while reading " + what);
  }
  return s;
}

json neuron_to_json(const NeuronConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"theta", c.theta},
          {"tau0", c.tau0},
          {"v_reset", c.v_reset},
          {"eps0", c.eps0},
          {"eps_lo", c.eps_lo},
          {"eps_hi", c.eps_hi},
          {"beta_surrogate", c.beta_surrogate},
          {"beta_adapt", c.beta_adapt},
          {"tau_adapt", c.tau_adapt},
          {"dspike_k0", c.dspike_k0}};
}

NeuronConfig neuron_from_json(const json& j) {
  NeuronConfig c;
  c.kind = parse_neuron_kind(j.at("kind").get<std::string>());
  c.theta = j.value("theta", c.theta);
  c.tau0 = j.value("tau0", c.tau0);
  c.v_reset = j.value("v_reset", c.v_reset);
  c.eps0 = j.value("eps0", c.eps0);
  c.eps_lo = j.value("eps_lo", c.eps_lo);
  c.eps_hi = j.value("eps_hi", c.eps_hi);
  c.beta_surrogate = j.value("beta_surrogate", c.beta_surrogate);
  c.beta_adapt = j.value("beta_adapt", c.beta_adapt);
  c.tau_adapt = j.value("tau_adapt", c.tau_adapt);
  c.dspike_k0 = j.value("dspike_k0", c.dspike_k0);
  return c;
}

json spec_json(const NetworkSpec& s) {
  return {{"inputs", s.inputs},       {"hidden", s.hidden}, {"classes", s.classes},
          {"timesteps", s.timesteps}, {"lambda", s.lambda}, {"neuron", neuron_to_json(s.neuron)}};
}

NetworkSpec spec_parse(const json& j) {
  NetworkSpec s;
  s.inputs = j.at("inputs").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.classes = j.at("classes").get<std::size_t>();
  s.timesteps = j.at("timesteps").get<std::size_t>();
  s.lambda = j.value("lambda", 0.0);
  s.neuron = neuron_from_json(j.at("neuron"));
  return s;
}

}  // namespace

std::string spec_to_json(const NetworkSpec& spec) { return spec_json(spec).dump(); }

NetworkSpec spec_from_json(const std::string& text) {
  try {
    return spec_parse(json::parse(text));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad network spec JSON: ") + e.what());
  }
}

Checkpoint make_checkpoint(const Network& net, std::uint64_t seed, std::size_t epoch) {
  return {net.spec(), seed, epoch, net.parameters()};
}

Network restore_network(const Checkpoint& ckpt) {
  Network net(ckpt.spec);
  auto& params = net.parameters();
  if (params.size() != ckpt.params.size()) {
    throw FormatError("checkpoint has " + std::to_string(ckpt.params.size()) + " arrays, spec needs " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& src = ckpt.params[i];
    if (src.name != params[i].name || src.value.shape() != params[i].value.shape()) {
      throw FormatError("checkpoint array '" + src.name + "' " + shape_string(src.value.shape()) +
                        " does not match expected '" + params[i].name + "' " +
                        shape_string(params[i].value.shape()));
    }
    params[i] = src;
  }
  return net;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json manifest = {{"format", "ultrasnn-checkpoint"},
                   {"spec", spec_json(ckpt.spec)},
                   {"seed", ckpt.seed},
                   {"epoch", ckpt.epoch}};
  json trainable = json::object();
  for (const Parameter& p : ckpt.params) trainable[p.name] = p.trainable;
  manifest["trainable"] = trainable;
  const std::string text = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<std::uint64_t>(os, ckpt.params.size());
  for (const Parameter& p : ckpt.params) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(os, d);
    for (double x : p.value.data()) put<double>(os, x);
  }
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  if (!is.read(magic, sizeof magic)) throw IoError("checkpoint truncated in header");
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::string text = get_string(is, get<std::uint64_t>(is, "manifest length"), "manifest");

  Checkpoint ckpt;
  json trainable;
  try {
    json manifest = json::parse(text);
    ckpt.spec = spec_parse(manifest.at("spec"));
    ckpt.seed = manifest.at("seed").get<std::uint64_t>();
    ckpt.epoch = manifest.at("epoch").get<std::size_t>();
    trainable = manifest.value("trainable", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }

  const auto count = get<std::uint64_t>(is, "array count");
  for (std::uint64_t i = 0; i < count; ++i) {
    Parameter p;
    p.name = get_string(is, get<std::uint32_t>(is, "name length"), "array name");
    const auto rank = get<std::uint32_t>(is, "rank");
    if (rank > 8) throw FormatError("implausible rank " + std::to_string(rank) + " for " + p.name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, "dimension"));
    if (element_count(shape) > (std::size_t{1} << 31)) throw FormatError("implausible size for " + p.name);
    std::vector<double> data(element_count(shape));
    std::vector<unsigned char> raw(data.size() * sizeof(double));
    if (!raw.empty() && !is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw IoError("checkpoint truncated in values of " + p.name);
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      unsigned char* b = raw.data() + k * sizeof(double);
      if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(double));
      std::memcpy(&data[k], b, sizeof(double));
    }
    p.value = Tensor(std::move(shape), std::move(data));
    p.trainable = trainable.value(p.name, true);
    ckpt.params.push_back(std::move(p));
  }
  return ckpt;
}

}  // namespace ultrasnn
