#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "ultrasnn/checkpoint.hpp"
#include "ultrasnn/error.hpp"

using namespace ultrasnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ultrasnn_checkpoint_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

NetworkSpec spec_for(NeuronKind kind) {
  NetworkSpec s;
  s.inputs = 5;
  s.hidden = {4, 3};
  s.classes = 3;
  s.timesteps = 2;
  s.neuron.kind = kind;
  s.neuron.theta = 0.4;
  s.lambda = 0.1;
  return s;
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesEverything) {
  for (NeuronKind kind : kAllNeuronKinds) {
    Network net = Network::initialized(spec_for(kind), 17);
    if (is_ultra(kind)) net.set_epsilon(1, 0.37, false);
    const fs::path p = scratch(std::string(to_string(kind)) + ".bin");
    save_checkpoint(p, make_checkpoint(net, 17, 4));
    const Checkpoint back = load_checkpoint(p);
    EXPECT_EQ(back.seed, 17u);
    EXPECT_EQ(back.epoch, 4u);
    const Network restored = restore_network(back);
    EXPECT_EQ(restored.spec().neuron.kind, kind);
    EXPECT_EQ(restored.spec().hidden, net.spec().hidden);
    EXPECT_DOUBLE_EQ(restored.spec().neuron.theta, 0.4);
    ASSERT_EQ(restored.parameters().size(), net.parameters().size());
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
      EXPECT_EQ(restored.parameters()[i].name, net.parameters()[i].name);
      EXPECT_EQ(restored.parameters()[i].value, net.parameters()[i].value);
      EXPECT_EQ(restored.parameters()[i].trainable, net.parameters()[i].trainable);
    }
  }
}

TEST(Checkpoint, SavingIsByteStable) {
  const Network net = Network::initialized(spec_for(NeuronKind::UltraDLIF), 3);
  save_checkpoint(scratch("a.bin"), make_checkpoint(net, 3, 1));
  save_checkpoint(scratch("b.bin"), make_checkpoint(net, 3, 1));
  EXPECT_EQ(bytes_of(scratch("a.bin")), bytes_of(scratch("b.bin")));
}

TEST(Checkpoint, HeaderLayout) {
  const Network net = Network::initialized(spec_for(NeuronKind::LIF), 3);
  save_checkpoint(scratch("h.bin"), make_checkpoint(net, 3, 0));
  const auto b = bytes_of(scratch("h.bin"));
  ASSERT_GT(b.size(), 12u);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "USNNCKPT");
  EXPECT_EQ(b[8], 1);
  EXPECT_EQ(b[9], 0);
}

TEST(Checkpoint, RejectsBadMagicAndTruncation) {
  const Network net = Network::initialized(spec_for(NeuronKind::UltraLIF), 3);
  save_checkpoint(scratch("good.bin"), make_checkpoint(net, 3, 0));
  auto b = bytes_of(scratch("good.bin"));

  auto write = [](const fs::path& p, const std::vector<char>& data) {
    std::ofstream os(p, std::ios::binary);
    os.write(data.data(), static_cast<std::streamsize>(data.size()));
  };
  auto bad = b;
  bad[0] = 'X';
  write(scratch("bad.bin"), bad);
  EXPECT_THROW(load_checkpoint(scratch("bad.bin")), FormatError);
  write(scratch("short.bin"), std::vector<char>(b.begin(), b.end() - 7));
  EXPECT_THROW(load_checkpoint(scratch("short.bin")), IoError);
  EXPECT_THROW(load_checkpoint(scratch("absent.bin")), IoError);
  auto version = b;
  version[8] = 9;
  write(scratch("version.bin"), version);
  EXPECT_THROW(load_checkpoint(scratch("version.bin")), FormatError);
}

TEST(Checkpoint, SpecJsonRoundTrip) {
  const NetworkSpec s = spec_for(NeuronKind::DSpikePlus);
  const NetworkSpec back = spec_from_json(spec_to_json(s));
  EXPECT_EQ(back.inputs, s.inputs);
  EXPECT_EQ(back.hidden, s.hidden);
  EXPECT_EQ(back.timesteps, s.timesteps);
  EXPECT_EQ(back.neuron.kind, s.neuron.kind);
  EXPECT_DOUBLE_EQ(back.lambda, s.lambda);
  EXPECT_THROW(spec_from_json("{not json"), FormatError);
}

TEST(Checkpoint, RestoreRejectsMismatchedArrays) {
  Checkpoint c = make_checkpoint(Network::initialized(spec_for(NeuronKind::UltraLIF), 1), 1, 0);
  c.params.pop_back();
  EXPECT_THROW(restore_network(c), FormatError);
}
