#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ultrasnn/network.hpp"

namespace ultrasnn {

/// Loss of `net` on a fixed batch, evaluated without recording.
double batch_loss(const Network& net, const Tensor& input, const std::vector<int>& labels, double lambda);

/// Reverse-mode gradient of batch_loss, one tensor per parameter.
std::vector<Tensor> autodiff_gradients(const Network& net, const Tensor& input, const std::vector<int>& labels,
                                       double lambda);

/// Central differences (f(p + h) - f(p - h)) / 2h for every parameter entry.
std::vector<Tensor> finite_difference_gradients(const Network& net, const Tensor& input,
                                                const std::vector<int>& labels, double lambda, double step);

struct GradcheckReport {
  std::string worst_parameter;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries = 0;
};

/// Entrywise |a - f| / max(|a|, |f|, floor), maximised over all parameters.
GradcheckReport compare_gradients(const Network& net, const std::vector<Tensor>& analytic,
                                  const std::vector<Tensor>& numeric, double floor = 1e-6);

struct MicroNet {
  Network net;
  Tensor input;  // [T, batch, n]
  std::vector<int> labels;
  double lambda;
};

/// Random micro-network (n=6, h=5, C=3, T=3, batch=2) with Gaussian inputs, seeded.
MicroNet make_micro_net(NeuronKind kind, std::uint64_t seed, double lambda = 0.1);

}  // namespace ultrasnn
