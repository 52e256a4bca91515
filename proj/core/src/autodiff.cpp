#include "ultrasnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "ultrasnn/error.hpp"

namespace ultrasnn {

double stable_sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string_view to_string(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::AddScalarVar: return "add_scalar_var";
    case OpKind::MulScalarVar: return "mul_scalar";
    case OpKind::DivScalarVar: return "div_scalar";
    case OpKind::Matmul: return "matmul";
    case OpKind::Linear: return "linear";
    case OpKind::AddRow: return "add_row";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Reshape: return "reshape";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LogSigmoid: return "log_sigmoid";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::LseStack: return "lse";
    case OpKind::LseLast: return "lse_last";
    case OpKind::Roll: return "roll";
    case OpKind::Heaviside: return "heaviside";
    case OpKind::SurrogateSpike: return "surrogate_spike";
    case OpKind::DSpikeSpike: return "dspike_spike";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  NodeId id = nodes_.size();
  Node node;
  node.op = OpKind::Leaf;
  node.value = std::move(value);
  node.requires_grad = recording_ && requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Var Tape::constant(Tensor value) {
  NodeId id = nodes_.size();
  Node node;
  node.op = OpKind::Constant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Var Tape::record(OpKind op, Tensor value, std::initializer_list<Var> parents, BackwardFn backward) {
  return push(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(backward));
}

Var Tape::record(OpKind op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
  return push(op, std::move(value), parents, std::move(backward));
}

Var Tape::push(OpKind op, Tensor value, std::span<const Var> parents, BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.parents.reserve(parents.size());
  bool any = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError("operands recorded on different tapes");
    node.parents.push_back(p.id());
    any = any || nodes_[p.id()].requires_grad;
  }
  node.requires_grad = recording_ && any;
  if (node.requires_grad) node.backward = std::move(backward);
  NodeId id = nodes_.size();
  nodes_.push_back(std::move(node));
  return Var(this, id);
}

Tensor& Tape::grad_buffer(NodeId id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (!recording_) throw ContractError("backward() on a non-recording tape");
  if (root.tape() != this) throw ContractError("backward() root belongs to another tape");
  if (nodes_[root.id()].value.size() != 1) {
    throw ContractError("backward() needs a scalar root, got shape " +
                        shape_string(nodes_[root.id()].value.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id()).fill(1.0);
  for (NodeId id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, id);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

namespace ad {
namespace {

void require_same_shape(const Var& a, const Var& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_scalar(const Var& s, std::string_view op) {
  if (s.value().size() != 1) {
    throw ShapeError(std::string(op) + ": expected a scalar, got " + shape_string(s.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, std::string_view op) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
  }
}

// Applies f elementwise and records an op whose local derivative is dfdx(x, y).
template <class F, class DF>
Var unary(Var a, OpKind op, F f, DF dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const NodeId pa = a.id();
  return a.tape()->record(op, std::move(y), {a}, [pa, dfdx](Tape& t, NodeId self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& xv = t.value(pa);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  const Tensor& x0 = a.value();
  const Tensor& x1 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x0[i] + x1[i];
  const NodeId pa = a.id(), pb = b.id();
  return a.tape()->record(OpKind::Add, std::move(y), {a, b}, [pa, pb](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    for (NodeId p : {pa, pb}) {
      if (!t.requires_grad(p)) continue;
      Tensor& gp = t.grad_buffer(p);
      for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y(a.shape());
  const Tensor& x0 = a.value();
  const Tensor& x1 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x0[i] - x1[i];
  const NodeId pa = a.id(), pb = b.id();
  return a.tape()->record(OpKind::Sub, std::move(y), {a, b}, [pa, pb](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(pb)) {
      Tensor& gb = t.grad_buffer(pb);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor y(a.shape());
  const Tensor& x0 = a.value();
  const Tensor& x1 = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x0[i] * x1[i];
  const NodeId pa = a.id(), pb = b.id();
  return a.tape()->record(OpKind::Mul, std::move(y), {a, b}, [pa, pb](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      const Tensor& vb = t.value(pb);
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.requires_grad(pb)) {
      const Tensor& va = t.value(pa);
      Tensor& gb = t.grad_buffer(pb);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(
      a, OpKind::Scale, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      a, OpKind::AddScalar, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

Var add_scalar(Var a, Var s) {
  require_scalar(s, "add_scalar");
  const double sv = s.item();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + sv;
  const NodeId pa = a.id(), ps = s.id();
  return a.tape()->record(OpKind::AddScalarVar, std::move(y), {a, s}, [pa, ps](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ps)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
      t.grad_buffer(ps)[0] += acc;
    }
  });
}

Var mul_scalar(Var a, Var s) {
  require_scalar(s, "mul_scalar");
  const double sv = s.item();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sv;
  const NodeId pa = a.id(), ps = s.id();
  return a.tape()->record(OpKind::MulScalarVar, std::move(y), {a, s}, [pa, ps](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    const double s_val = t.value(ps)[0];
    if (t.requires_grad(pa)) {
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s_val;
    }
    if (t.requires_grad(ps)) {
      const Tensor& xv = t.value(pa);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      t.grad_buffer(ps)[0] += acc;
    }
  });
}

Var div_scalar(Var a, Var s) {
  require_scalar(s, "div_scalar");
  const double sv = s.item();
  if (sv == 0.0) throw DomainError("div_scalar: division by zero");
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] / sv;
  const NodeId pa = a.id(), ps = s.id();
  return a.tape()->record(OpKind::DivScalarVar, std::move(y), {a, s}, [pa, ps](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    const double s_val = t.value(ps)[0];
    if (t.requires_grad(pa)) {
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / s_val;
    }
    if (t.requires_grad(ps)) {
      const Tensor& yv = t.value(self);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * yv[i];
      t.grad_buffer(ps)[0] -= acc / s_val;
    }
  });
}

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) y[i * n + j] += aip * bv[p * n + j];
    }
  }
  const NodeId pa = a.id(), pb = b.id();
  return a.tape()->record(OpKind::Matmul, std::move(y), {a, b}, [pa, pb, m, k, n](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      const Tensor& bv2 = t.value(pb);
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv2[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (t.requires_grad(pb)) {
      const Tensor& av2 = t.value(pa);
      Tensor& gb = t.grad_buffer(pb);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av2[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  require_rank(bias, 1, "linear");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out = weight.shape()[0];
  if (weight.shape()[1] != in || bias.shape()[0] != out) {
    throw ShapeError("linear: x " + shape_string(x.shape()) + ", weight " +
                     shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  Tensor y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = xv.data().data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = wv.data().data() + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      y[r * out + o] = acc + bv[o];
    }
  }
  const NodeId px = x.id(), pw = weight.id(), pb = bias.id();
  return x.tape()->record(
      OpKind::Linear, std::move(y), {x, weight, bias},
      [px, pw, pb, batch, in, out](Tape& t, NodeId self) {
        const Tensor& g = t.grad_buffer(self);
        if (t.requires_grad(px)) {
          const Tensor& w = t.value(pw);
          Tensor& gx = t.grad_buffer(px);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t o = 0; o < out; ++o) {
              const double go = g[r * out + o];
              if (go == 0.0) continue;
              for (std::size_t i = 0; i < in; ++i) gx[r * in + i] += go * w[o * in + i];
            }
        }
        if (t.requires_grad(pw)) {
          const Tensor& xin = t.value(px);
          Tensor& gw = t.grad_buffer(pw);
          for (std::size_t r = 0; r < batch; ++r) {
            const double* xr = xin.data().data() + r * in;
            for (std::size_t o = 0; o < out; ++o) {
              const double go = g[r * out + o];
              if (go == 0.0) continue;
              double* gwo = &gw[o * in];
              for (std::size_t i = 0; i < in; ++i) gwo[i] += go * xr[i];
            }
          }
        }
        if (t.requires_grad(pb)) {
          Tensor& gb = t.grad_buffer(pb);
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
        }
      });
}

Var add_row(Var a, Var row) {
  require_rank(a, 2, "add_row");
  require_rank(row, 1, "add_row");
  const std::size_t rows = a.shape()[0], n = a.shape()[1];
  if (row.shape()[0] != n) {
    throw ShapeError("add_row: " + shape_string(a.shape()) + " + " + shape_string(row.shape()));
  }
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  Tensor y(a.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = av[r * n + j] + rv[j];
  const NodeId pa = a.id(), pr = row.id();
  return a.tape()->record(OpKind::AddRow, std::move(y), {a, row}, [pa, pr, rows, n](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.requires_grad(pa)) {
      Tensor& ga = t.grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(pr)) {
      Tensor& gr = t.grad_buffer(pr);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[r * n + j];
    }
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  const NodeId pa = a.id();
  return a.tape()->record(OpKind::Sum, Tensor::scalar(acc), {a}, [pa](Tape& t, NodeId self) {
    if (!t.requires_grad(pa)) return;
    const double g = t.grad_buffer(self)[0];
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
  const double n = static_cast<double>(x.size());
  const NodeId pa = a.id();
  return a.tape()->record(OpKind::Mean, Tensor::scalar(acc / n), {a}, [pa, n](Tape& t, NodeId self) {
    if (!t.requires_grad(pa)) return;
    const double g = t.grad_buffer(self)[0] / n;
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const NodeId pa = a.id();
  return a.tape()->record(OpKind::Reshape, std::move(y), {a}, [pa](Tape& t, NodeId self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sigmoid(Var a) {
  return unary(
      a, OpKind::Sigmoid, [](double x) { return stable_sigmoid(x); },
      // sigma(x) * sigma(-x) avoids the cancellation in 1 - y, keeping far tails positive.
      [](double x, double) { return stable_sigmoid(x) * stable_sigmoid(-x); });
}

Var log_sigmoid(Var a) {
  return unary(
      a, OpKind::LogSigmoid,
      [](double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Var exp(Var a) {
  return unary(
      a, OpKind::Exp, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw DomainError("log of a non-positive value");
  }
  return unary(
      a, OpKind::Log, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

namespace {

double checked_temperature(const Var& eps, std::string_view op) {
  require_scalar(eps, op);
  const double e = eps.item();
  if (!(e > 0.0) || !std::isfinite(e)) {
    throw DomainError(std::string(op) + ": temperature must be positive and finite, got " +
                      std::to_string(e));
  }
  return e;
}

// Shared kernel: `terms` holds n values of one LSE; writes softmax weights into `weights`
// and returns {value, d value / d eps}.
struct LseResult {
  double value;
  double d_eps;
};

LseResult lse_kernel(const double* terms, std::size_t stride, std::size_t n, double eps,
                     double* weights, std::size_t wstride) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, terms[i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp((terms[i * stride] - m) / eps);
    weights[i * wstride] = e;
    s += e;
  }
  const double log_s = std::log(s);
  double mean_shift = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weights[i * wstride] /= s;
    mean_shift += weights[i * wstride] * (terms[i * stride] - m);
  }
  return {m + eps * log_s, log_s - mean_shift / eps};
}

void check_not_nan(const Tensor& x, std::string_view op) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i])) throw InputError(std::string(op) + ": NaN input");
  }
}

}  // namespace

Var lse(std::span<const Var> terms, Var eps) {
  if (terms.empty()) throw ShapeError("lse: needs at least one term");
  const double e = checked_temperature(eps, "lse");
  const Shape& shape = terms[0].shape();
  for (const Var& term : terms) {
    require_same_shape(terms[0], term, "lse");
    check_not_nan(term.value(), "lse");
  }
  const std::size_t n = terms.size();
  const std::size_t count = element_count(shape);
  // Gather into [count, n] so each LSE reads contiguous memory.
  std::vector<double> stacked(count * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& v = terms[i].value();
    for (std::size_t j = 0; j < count; ++j) stacked[j * n + i] = v[j];
  }
  auto weights = std::make_shared<std::vector<double>>(count * n);
  auto d_eps = std::make_shared<std::vector<double>>(count);
  Tensor y(shape);
  for (std::size_t j = 0; j < count; ++j) {
    LseResult r = lse_kernel(&stacked[j * n], 1, n, e, &(*weights)[j * n], 1);
    y[j] = r.value;
    (*d_eps)[j] = r.d_eps;
  }
  std::vector<Var> parents(terms.begin(), terms.end());
  parents.push_back(eps);
  std::vector<NodeId> ids;
  for (const Var& p : parents) ids.push_back(p.id());
  return terms[0].tape()->record(
      OpKind::LseStack, std::move(y), std::span<const Var>(parents),
      [ids, weights, d_eps, n, count](Tape& t, NodeId self) {
        const Tensor& g = t.grad_buffer(self);
        for (std::size_t i = 0; i < n; ++i) {
          if (!t.requires_grad(ids[i])) continue;
          Tensor& gi = t.grad_buffer(ids[i]);
          for (std::size_t j = 0; j < count; ++j) gi[j] += g[j] * (*weights)[j * n + i];
        }
        const NodeId pe = ids[n];
        if (t.requires_grad(pe)) {
          double acc = 0.0;
          for (std::size_t j = 0; j < count; ++j) acc += g[j] * (*d_eps)[j];
          t.grad_buffer(pe)[0] += acc;
        }
      });
}

Var lse(std::initializer_list<Var> terms, Var eps) {
  return lse(std::span<const Var>(terms.begin(), terms.size()), eps);
}

Var lse_last(Var x, Var eps) {
  const double e = checked_temperature(eps, "lse_last");
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || xv.shape().back() == 0) {
    throw ShapeError("lse_last: reduce axis must have length >= 1");
  }
  check_not_nan(xv, "lse_last");
  const std::size_t n = xv.shape().back();
  const std::size_t rows = xv.size() / n;
  Shape out_shape(xv.shape().begin(), xv.shape().end() - 1);
  auto weights = std::make_shared<std::vector<double>>(xv.size());
  auto d_eps = std::make_shared<std::vector<double>>(rows);
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    LseResult res = lse_kernel(xv.data().data() + r * n, 1, n, e, &(*weights)[r * n], 1);
    y[r] = res.value;
    (*d_eps)[r] = res.d_eps;
  }
  const NodeId px = x.id(), pe = eps.id();
  return x.tape()->record(OpKind::LseLast, std::move(y), {x, eps},
                          [px, pe, weights, d_eps, n, rows](Tape& t, NodeId self) {
                            const Tensor& g = t.grad_buffer(self);
                            if (t.requires_grad(px)) {
                              Tensor& gx = t.grad_buffer(px);
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t i = 0; i < n; ++i)
                                  gx[r * n + i] += g[r] * (*weights)[r * n + i];
                            }
                            if (t.requires_grad(pe)) {
                              double acc = 0.0;
                              for (std::size_t r = 0; r < rows; ++r) acc += g[r] * (*d_eps)[r];
                              t.grad_buffer(pe)[0] += acc;
                            }
                          });
}

Var roll(Var a, long shift) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("roll: needs a non-empty last axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  const long nn = static_cast<long>(n);
  // source index for each destination column
  std::vector<std::size_t> src(n);
  for (long i = 0; i < nn; ++i) src[static_cast<std::size_t>(i)] = static_cast<std::size_t>(((i - shift) % nn + nn) % nn);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) y[r * n + i] = x[r * n + src[i]];
  const NodeId pa = a.id();
  return a.tape()->record(OpKind::Roll, std::move(y), {a}, [pa, src, n, rows](Tape& t, NodeId self) {
    if (!t.requires_grad(pa)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(pa);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) ga[r * n + src[i]] += g[r * n + i];
  });
}

Var heaviside(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? 1.0 : 0.0;
  return a.tape()->record(OpKind::Heaviside, std::move(y), {a}, [](Tape&, NodeId) {});
}

Var surrogate_spike(Var u, double beta) {
  return unary(
      u, OpKind::SurrogateSpike, [](double x) { return x > 0.0 ? 1.0 : 0.0; },
      [beta](double x, double) {
        const double s = stable_sigmoid(beta * x);
        return beta * s * (1.0 - s);
      });
}

Var dspike_spike(Var v, double theta, Var k) {
  require_scalar(k, "dspike_spike");
  if (!(theta > 0.0)) throw DomainError("dspike_spike: threshold must be positive");
  const Tensor& x = v.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - theta > 0.0 ? 1.0 : 0.0;
  const NodeId pv = v.id(), pk = k.id();
  return v.tape()->record(OpKind::DSpikeSpike, std::move(y), {v, k}, [pv, pk, theta](Tape& t, NodeId self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& xv = t.value(pv);
    const double kv = t.value(pk)[0];
    const double half = std::tanh(kv / 2.0);
    if (half == 0.0) return;
    double gk_acc = 0.0;
    const bool want_v = t.requires_grad(pv);
    Tensor* gv = want_v ? &t.grad_buffer(pv) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double a = xv[i] / (2.0 * theta) - 0.5;
      const double f = std::tanh(kv * a);
      if (want_v) (*gv)[i] += g[i] * kv * (1.0 - f * f) / (2.0 * half) / (2.0 * theta);
      gk_acc += g[i] * (a * (1.0 - f * f) * half - f * (1.0 - half * half) / 2.0) / (2.0 * half * half);
    }
    if (t.requires_grad(pk)) t.grad_buffer(pk)[0] += gk_acc;
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t batch = logits.shape()[0], classes = logits.shape()[1];
  if (labels.size() != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(batch));
  }
  if (batch == 0 || classes == 0) throw ShapeError("softmax_cross_entropy: empty logits");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  const Tensor& z = logits.value();
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    LseResult res = lse_kernel(z.data().data() + r * classes, 1, classes, 1.0, &(*probs)[r * classes], 1);
    total += res.value - z[r * classes + static_cast<std::size_t>(labels[r])];
  }
  std::vector<int> targets(labels.begin(), labels.end());
  const NodeId pz = logits.id();
  return logits.tape()->record(
      OpKind::SoftmaxCrossEntropy, Tensor::scalar(total / static_cast<double>(batch)), {logits},
      [pz, probs, targets, batch, classes](Tape& t, NodeId self) {
        if (!t.requires_grad(pz)) return;
        const double g = t.grad_buffer(self)[0] / static_cast<double>(batch);
        Tensor& gz = t.grad_buffer(pz);
        for (std::size_t r = 0; r < batch; ++r)
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = static_cast<std::size_t>(targets[r]) == c ? 1.0 : 0.0;
            gz[r * classes + c] += g * ((*probs)[r * classes + c] - onehot);
          }
      });
}

}  // namespace ad
}  // namespace ultrasnn
