#pragma once

// Checkpoint container, all integers little-endian:
//
//   "USNNCKPT"                      8-byte magic
//   u32 version                     currently 1
//   u64 manifest length, bytes      UTF-8 JSON manifest
//   u64 array count
//   per array:
//     u32 name length, bytes        parameter name
//     u32 rank, rank x u64 dims
//     product(dims) x f64           IEEE-754 binary64 values
//
// The manifest records the network spec, the neuron configuration, the seed,
// the epoch and whether each parameter is trainable.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ultrasnn/network.hpp"

namespace ultrasnn {

struct Checkpoint {
  NetworkSpec spec;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::vector<Parameter> params;
};

Checkpoint make_checkpoint(const Network& net, std::uint64_t seed, std::size_t epoch);
/// Rebuilds the network; parameter names and shapes must match the stored NetworkSpec.
Network restore_network(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws FormatError on a bad magic or version, IoError on missing or truncated files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Compact JSON object describing a spec (also used inside run manifests).
std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& json);

}  // namespace ultrasnn
