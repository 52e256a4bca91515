#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "oracles.hpp"
#include "ultrasnn/error.hpp"
#include "ultrasnn/network.hpp"

using namespace ultrasnn;

namespace {

NetworkSpec small_spec(NeuronKind kind, std::size_t T = 2) {
  NetworkSpec s;
  s.inputs = 4;
  s.hidden = {3};
  s.classes = 2;
  s.timesteps = T;
  s.neuron.kind = kind;
  return s;
}

Tensor random_input(std::size_t T, std::size_t batch, std::size_t n, std::uint64_t seed) {
  gen::Source src(seed);
  Tensor x({T, batch, n});
  for (double& v : x.data()) v = src.uniform(0, 1);
  return x;
}

}  // namespace

TEST(Network, ParameterLayout) {
  NetworkSpec s = small_spec(NeuronKind::UltraPLIF);
  s.hidden = {3, 2};
  Network net(s);
  std::vector<std::string> names;
  for (const auto& p : net.parameters()) names.push_back(p.name);
  EXPECT_EQ(names, (std::vector<std::string>{"hidden0.weight", "hidden0.bias", "hidden0.log_eps", "hidden0.tau_param",
                                             "hidden1.weight", "hidden1.bias", "hidden1.log_eps", "hidden1.tau_param",
                                             "readout.weight", "readout.bias"}));
  EXPECT_EQ(net.parameter("hidden1.weight").value.shape(), (Shape{2, 3}));
  EXPECT_EQ(net.parameter("readout.weight").value.shape(), (Shape{2, 2}));
  EXPECT_THROW(net.parameter("nope"), ConfigError);
}

TEST(Network, InitializationRangeAndDeterminism) {
  NetworkSpec s = small_spec(NeuronKind::LIF);
  s.inputs = 100;
  const Network a = Network::initialized(s, 9), b = Network::initialized(s, 9), c = Network::initialized(s, 10);
  const double bound = 1.0 / std::sqrt(100.0);
  for (double w : a.parameter("hidden0.weight").value.data()) EXPECT_LE(std::abs(w), bound);
  for (double w : a.parameter("hidden0.bias").value.data()) EXPECT_LE(std::abs(w), bound);
  for (double w : a.parameter("readout.weight").value.data()) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(3.0));
  EXPECT_EQ(a.parameter("hidden0.weight").value, b.parameter("hidden0.weight").value);
  EXPECT_NE(a.parameter("hidden0.weight").value, c.parameter("hidden0.weight").value);
}

TEST(Network, SpecValidation) {
  NetworkSpec s = small_spec(NeuronKind::UltraLIF);
  s.hidden = {};
  EXPECT_THROW(Network{s}, ConfigError);
  s = small_spec(NeuronKind::UltraLIF);
  s.timesteps = 0;
  EXPECT_THROW(Network{s}, ConfigError);
}

TEST(Network, EpsilonAccessAndProjection) {
  Network net(small_spec(NeuronKind::UltraLIF));
  EXPECT_NEAR(net.epsilon(0), 1.0, 1e-15);
  net.set_epsilon(0, 0.5, false);
  EXPECT_NEAR(net.epsilon(0), 0.5, 1e-15);
  EXPECT_FALSE(net.parameter("hidden0.log_eps").trainable);
  net.parameter("hidden0.log_eps").value[0] = std::log(100.0);
  net.project_epsilon();
  EXPECT_NEAR(net.epsilon(0), 20.0, 1e-12);
  net.parameter("hidden0.log_eps").value[0] = std::log(1e-3);
  net.project_epsilon();
  EXPECT_NEAR(net.epsilon(0), 0.1, 1e-15);
  EXPECT_THROW(net.set_epsilon(0, 0.0), DomainError);
}

// A plain-double forward pass of a one-layer UltraLIF network.
TEST(Network, ForwardMatchesReferenceImplementation) {
  const NetworkSpec s = small_spec(NeuronKind::UltraLIF, 3);
  const Network net = Network::initialized(s, 5);
  const Tensor x = random_input(3, 2, 4, 6);
  Tape tape(false);
  ForwardRecord rec = forward(net, tape, x, ForwardMode::EvalSoft);

  const Tensor& W = net.parameter("hidden0.weight").value;
  const Tensor& b = net.parameter("hidden0.bias").value;
  const Tensor& R = net.parameter("readout.weight").value;
  const Tensor& c = net.parameter("readout.bias").value;
  const double eps = net.epsilon(0);
  double spike_total = 0;
  for (std::size_t row = 0; row < 2; ++row) {
    std::vector<double> v(3, 0.0), logits(2, 0.0);
    for (std::size_t t = 0; t < 3; ++t) {
      std::vector<double> spk(3);
      for (std::size_t j = 0; j < 3; ++j) {
        double cur = b[j];
        for (std::size_t i = 0; i < 4; ++i) cur += W(j, i) * x[(t * 2 + row) * 4 + i];
        const auto st = oracle::ultralif(v[j], cur, s.neuron.tau0, s.neuron.theta, s.neuron.v_reset, eps);
        v[j] = st.v_next;
        spk[j] = st.spike;
        spike_total += st.spike;
      }
      for (std::size_t k = 0; k < 2; ++k) {
        double z = c[k];
        for (std::size_t j = 0; j < 3; ++j) z += R(k, j) * spk[j];
        logits[k] += z / 3.0;
      }
    }
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(rec.logits.value()(row, k), logits[k], 1e-12);
  }
  EXPECT_NEAR(rec.spike_rate.item(), spike_total / (2 * 3 * 3), 1e-12);
}

TEST(Network, LossAddsWeightedSpikeRate) {
  const Network net = Network::initialized(small_spec(NeuronKind::UltraDLIF), 3);
  Tape tape(false);
  ForwardRecord rec = forward(net, tape, random_input(2, 3, 4, 8), ForwardMode::EvalSoft);
  const std::vector<int> y{0, 1, 1};
  const double ce = loss(rec, y, 0.0).item();
  EXPECT_NEAR(loss(rec, y, 0.25).item(), ce + 0.25 * rec.spike_rate.item(), 1e-15);
  EXPECT_THROW(loss(rec, y, -1.0), ConfigError);
}

TEST(Network, ForwardModeContracts) {
  const Network ultra = Network::initialized(small_spec(NeuronKind::UltraLIF), 1);
  const Network lif = Network::initialized(small_spec(NeuronKind::LIF), 1);
  const Tensor x = random_input(2, 1, 4, 2);
  Tape frozen(false), live(true);
  EXPECT_THROW(forward(ultra, frozen, x, ForwardMode::Train), ContractError);
  EXPECT_THROW(forward(ultra, live, x, ForwardMode::EvalHard), ContractError);
  EXPECT_THROW(forward(lif, frozen, x, ForwardMode::EvalHard), ConfigError);
  EXPECT_THROW(forward(ultra, frozen, random_input(2, 1, 5, 2), ForwardMode::EvalSoft), ShapeError);
}

TEST(Network, HardModeEmitsBinarySpikes) {
  const Network net = Network::initialized(small_spec(NeuronKind::UltraDLIF), 4);
  Tape tape(false);
  ForwardRecord rec = forward(net, tape, random_input(2, 3, 4, 5), ForwardMode::EvalHard, true);
  ASSERT_EQ(rec.spikes.size(), 2u);
  for (const auto& step : rec.spikes)
    for (double s : step[0].value().data()) EXPECT_TRUE(s == 0.0 || s == 1.0);
}

TEST(Network, EnergyIsTimestepsTimesRate) {
  EXPECT_DOUBLE_EQ(energy(0.25, 4), 1.0);
  EXPECT_DOUBLE_EQ(energy(0.0, 30), 0.0);
}
