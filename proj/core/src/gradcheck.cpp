#include "ultrasnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ultrasnn/error.hpp"
#include "ultrasnn/random.hpp"

namespace ultrasnn {

double batch_loss(const Network& net, const Tensor& input, const std::vector<int>& labels, double lambda) {
  Tape tape(false);
  ForwardRecord rec = forward(net, tape, input, ForwardMode::EvalSoft);
  return loss(rec, labels, lambda).item();
}

std::vector<Tensor> autodiff_gradients(const Network& net, const Tensor& input, const std::vector<int>& labels,
                                       double lambda) {
  Tape tape;
  ForwardRecord rec = forward(net, tape, input, ForwardMode::Train);
  tape.backward(loss(rec, labels, lambda));
  std::vector<Tensor> grads;
  for (const Var& p : rec.params) grads.push_back(tape.grad(p));
  return grads;
}

std::vector<Tensor> finite_difference_gradients(const Network& net, const Tensor& input,
                                                const std::vector<int>& labels, double lambda, double step) {
  if (!(step > 0.0)) throw DomainError("finite-difference step must be positive");
  Network probe = net;
  std::vector<Tensor> grads;
  for (Parameter& p : probe.parameters()) {
    Tensor g(p.value.shape());
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + step;
      const double up = batch_loss(probe, input, labels, lambda);
      p.value[k] = saved - step;
      const double down = batch_loss(probe, input, labels, lambda);
      p.value[k] = saved;
      g[k] = (up - down) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

GradcheckReport compare_gradients(const Network& net, const std::vector<Tensor>& analytic,
                                  const std::vector<Tensor>& numeric, double floor) {
  const auto& params = net.parameters();
  if (analytic.size() != params.size() || numeric.size() != params.size()) {
    throw ShapeError("gradient lists do not match the parameter list");
  }
  GradcheckReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    for (std::size_t k = 0; k < params[i].value.size(); ++k) {
      const double a = analytic[i][k], f = numeric[i][k];
      const double abs_err = std::abs(a - f);
      const double rel = abs_err / std::max({std::abs(a), std::abs(f), floor});
      ++rep.entries;
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      if (rel > rep.max_rel_error || rep.worst_parameter.empty()) {
        rep.max_rel_error = rel;
        rep.worst_parameter = params[i].name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return rep;
}

MicroNet make_micro_net(NeuronKind kind, std::uint64_t seed, double lambda) {
  NetworkSpec spec;
  spec.inputs = 6;
  spec.hidden = {5};
  spec.classes = 3;
  spec.timesteps = 3;
  spec.neuron.kind = kind;
  spec.lambda = lambda;
  const std::size_t batch = 2;
  Network net = Network::initialized(spec, seed);
  Rng rng(seed, {static_cast<std::uint64_t>(Stream::Analysis)});
  Tensor input({spec.timesteps, batch, spec.inputs});
  for (double& x : input.data()) x = rng.normal();
  std::vector<int> labels(batch);
  for (int& y : labels) y = static_cast<int>(rng.below(spec.classes));
  return {std::move(net), std::move(input), std::move(labels), lambda};
}

}  // namespace ultrasnn
