#include <gtest/gtest.h>

#include <cmath>

#include "ultrasnn/error.hpp"
#include "ultrasnn/gradcheck.hpp"

using namespace ultrasnn;

TEST(Gradcheck, UltraKindsAgreeWithFiniteDifferences) {
  for (NeuronKind kind : {NeuronKind::UltraLIF, NeuronKind::UltraPLIF, NeuronKind::UltraDLIF, NeuronKind::UltraDPLIF}) {
    for (std::uint64_t seed : {7u, 8u}) {
      MicroNet m = make_micro_net(kind, seed);
      const auto a = autodiff_gradients(m.net, m.input, m.labels, m.lambda);
      const auto f = finite_difference_gradients(m.net, m.input, m.labels, m.lambda, 1e-5);
      const GradcheckReport r = compare_gradients(m.net, a, f);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(kind) << " worst " << r.worst_parameter;
      EXPECT_GT(r.entries, 50u);
    }
  }
}

// Hard spikes make the loss piecewise constant in anything upstream of the threshold, so
// finite differences vanish there while the surrogate reports a gradient.
TEST(Gradcheck, SurrogateBaselinesDisagree) {
  for (NeuronKind kind : {NeuronKind::LIF, NeuronKind::PLIF, NeuronKind::DSpike}) {
    MicroNet m = make_micro_net(kind, 7);
    const auto a = autodiff_gradients(m.net, m.input, m.labels, m.lambda);
    const auto f = finite_difference_gradients(m.net, m.input, m.labels, m.lambda, 1e-5);
    const GradcheckReport r = compare_gradients(m.net, a, f);
    EXPECT_GT(r.max_rel_error, 1e-2) << to_string(kind);
    const Tensor& fd_w = f[0];
    const Tensor& ad_w = a[0];
    bool mismatch = false;
    for (std::size_t k = 0; k < fd_w.size(); ++k) mismatch = mismatch || (fd_w[k] == 0.0 && std::abs(ad_w[k]) > 1e-3);
    EXPECT_TRUE(mismatch) << to_string(kind);
  }
}

TEST(Gradcheck, ReadoutGradientsAgreeEvenForBaselines) {
  MicroNet m = make_micro_net(NeuronKind::LIF, 7);
  const auto a = autodiff_gradients(m.net, m.input, m.labels, m.lambda);
  const auto f = finite_difference_gradients(m.net, m.input, m.labels, m.lambda, 1e-5);
  const std::size_t last = m.net.parameters().size() - 1;
  for (std::size_t i : {last - 1, last})
    for (std::size_t k = 0; k < a[i].size(); ++k) EXPECT_NEAR(a[i][k], f[i][k], 1e-8);
}

TEST(Gradcheck, RelativeErrorMetric) {
  MicroNet m = make_micro_net(NeuronKind::UltraLIF, 1);
  std::vector<Tensor> zeros, shifted;
  for (const Parameter& p : m.net.parameters()) {
    zeros.emplace_back(p.value.shape());
    shifted.emplace_back(p.value.shape(), 1e-7);
  }
  const GradcheckReport same = compare_gradients(m.net, zeros, zeros);
  EXPECT_EQ(same.max_rel_error, 0.0);
  const GradcheckReport tiny = compare_gradients(m.net, zeros, shifted);
  EXPECT_NEAR(tiny.max_rel_error, 0.1, 1e-12);
  EXPECT_THROW(compare_gradients(m.net, zeros, {}), ShapeError);
  EXPECT_THROW(finite_difference_gradients(m.net, m.input, m.labels, 0.1, 0.0), DomainError);
}

TEST(Gradcheck, MicroNetIsSeeded) {
  MicroNet a = make_micro_net(NeuronKind::UltraDLIF, 3), b = make_micro_net(NeuronKind::UltraDLIF, 3);
  EXPECT_EQ(a.input, b.input);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.input.shape(), (Shape{3, 2, 6}));
  EXPECT_DOUBLE_EQ(batch_loss(a.net, a.input, a.labels, 0.1), batch_loss(b.net, b.input, b.labels, 0.1));
}
