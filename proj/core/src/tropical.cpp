#include "ultrasnn/tropical.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <unordered_set>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include "ultrasnn/error.hpp"

namespace ultrasnn {

using Rational = boost::multiprecision::cpp_rational;

BigInt region_formula(std::uint64_t h, std::uint64_t n) {
  BigInt total = 0;
  BigInt binom = 1;  // C(h, k)
  const std::uint64_t top = std::min(h, n);
  for (std::uint64_t k = 0; k <= top; ++k) {
    total += binom;
    binom = binom * (h - k) / (k + 1);
  }
  return total;
}

Arrangement::Arrangement(Tensor w, std::vector<double> off) : weights(std::move(w)), offsets(std::move(off)) {
  if (weights.rank() != 2) throw ShapeError("arrangement weights must be [h, n]");
  if (weights.dim(0) == 0 || weights.dim(1) == 0) throw ShapeError("arrangement needs h >= 1 and n >= 1");
  if (offsets.size() != weights.dim(0)) throw ShapeError("one offset per hyperplane required");
}

Arrangement Arrangement::uniform(Tensor w, double offset) {
  const std::size_t h = w.rank() == 2 ? w.dim(0) : 0;
  return Arrangement(std::move(w), std::vector<double>(h, offset));
}

Arrangement Arrangement::from_network(const Network& net, Boundary boundary) {
  const NeuronConfig& cfg = net.spec().neuron;
  const double level = boundary == Boundary::Membrane ? std::log(cfg.tau0) : cfg.theta;
  const Tensor& w = net.parameter("hidden0.weight").value;
  const Tensor& b = net.parameter("hidden0.bias").value;
  std::vector<double> off(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) off[j] = level - b[j];
  return Arrangement(w, std::move(off));
}

std::uint64_t Arrangement::pattern(std::span<const double> x) const {
  const std::size_t h = hyperplanes(), n = dims();
  if (h > 64) throw ConfigError("pattern keys support at most 64 hyperplanes");
  std::uint64_t key = 0;
  for (std::size_t j = 0; j < h; ++j) {
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += weights(j, i) * x[i];
    if (dot - offsets[j] > 0.0) key |= std::uint64_t{1} << j;
  }
  return key;
}

namespace {

// Calls f(indices) for every k-subset of {0..n-1} in lexicographic order.
void for_each_subset(std::size_t n, std::size_t k, const std::function<void(const std::vector<std::size_t>&)>& f) {
  if (k > n) return;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  for (;;) {
    f(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

Eigen::MatrixXd rows_of(const Tensor& w, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(w.dim(1)));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < w.dim(1); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(rows[r], c);
  return m;
}

std::size_t matrix_rank(const Tensor& w) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(w.dim(0)), static_cast<Eigen::Index>(w.dim(1)));
  for (std::size_t r = 0; r < w.dim(0); ++r)
    for (std::size_t c = 0; c < w.dim(1); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(r, c);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-10);
  return static_cast<std::size_t>(lu.rank());
}

// Visits the centre of every cell of a res^n grid on [-box, box]^n.
template <class F>
void for_each_grid_point(std::size_t n, std::size_t res, double box, F&& f) {
  if (n == 0 || n > 3) throw ConfigError("grid enumeration supports 1 <= n <= 3");
  if (res < 2) throw ConfigError("grid resolution must be >= 2");
  if (!(box > 0.0) || !std::isfinite(box)) throw DomainError("grid box must be positive");
  const double step = 2.0 * box / static_cast<double>(res);
  auto coord = [&](std::size_t i) { return -box + (static_cast<double>(i) + 0.5) * step; };
  double x[3] = {0.0, 0.0, 0.0};
  const std::size_t r1 = n > 1 ? res : 1, r2 = n > 2 ? res : 1;
  for (std::size_t k = 0; k < r2; ++k) {
    if (n > 2) x[2] = coord(k);
    for (std::size_t j = 0; j < r1; ++j) {
      if (n > 1) x[1] = coord(j);
      for (std::size_t i = 0; i < res; ++i) {
        x[0] = coord(i);
        f(std::span<const double>(x, n));
      }
    }
  }
}

}  // namespace

double default_box(const Arrangement& arr) {
  const std::size_t h = arr.hyperplanes(), n = arr.dims();
  double max_norm = 0.0, max_offset = 0.0;
  for (std::size_t j = 0; j < h; ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += arr.weights(j, i) * arr.weights(j, i);
    max_norm = std::max(max_norm, std::sqrt(sq));
    max_offset = std::max(max_offset, std::abs(arr.offsets[j]));
  }
  double box = max_norm > 0.0 ? 3.0 * max_offset / max_norm + 3.0 : 3.0;
  // Every vertex of the arrangement must sit well inside the cube, otherwise
  // bounded cells near it can be missed.
  for_each_subset(h, n, [&](const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd a = rows_of(arr.weights, rows);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) return;
    Eigen::VectorXd c(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) c(static_cast<Eigen::Index>(r)) = arr.offsets[rows[r]];
    const double reach = lu.solve(c).cwiseAbs().maxCoeff();
    if (std::isfinite(reach)) box = std::max(box, 1.5 * reach + 1.0);
  });
  return box;
}

RegionReport count_regions_grid(const Arrangement& arr, std::size_t resolution, std::optional<double> box) {
  if (arr.hyperplanes() > 64) throw ConfigError("grid counting supports at most 64 hyperplanes");
  RegionReport rep;
  rep.formula = region_formula(arr.hyperplanes(), arr.dims());
  rep.method = CountMethod::Grid;
  rep.resolution = resolution;
  rep.box = box.value_or(default_box(arr));
  std::unordered_set<std::uint64_t> seen;
  for_each_grid_point(arr.dims(), resolution, rep.box,
                      [&](std::span<const double> x) { seen.insert(arr.pattern(x)); });
  rep.empirical = seen.size();
  return rep;
}

RegionReport count_regions_exact(const Arrangement& arr) {
  if (arr.dims() != 2) throw ConfigError("exact region counting is implemented for n = 2");
  struct Line {
    Rational a, b, c;  // a x + b y = c
  };
  std::vector<Line> lines;
  std::uint64_t regions = 1;
  for (std::size_t j = 0; j < arr.hyperplanes(); ++j) {
    Line cur{Rational(arr.weights(j, 0)), Rational(arr.weights(j, 1)), Rational(arr.offsets[j])};
    if (cur.a == 0 && cur.b == 0) continue;  // constant sign everywhere, cuts nothing
    bool repeated = false;
    std::set<std::pair<Rational, Rational>> crossings;
    for (const Line& prev : lines) {
      const Rational det = cur.a * prev.b - cur.b * prev.a;
      if (det == 0) {
        if (cur.a * prev.c == prev.a * cur.c && cur.b * prev.c == prev.b * cur.c) repeated = true;
        continue;
      }
      crossings.emplace((cur.c * prev.b - cur.b * prev.c) / det, (cur.a * prev.c - cur.c * prev.a) / det);
    }
    if (repeated) continue;
    regions += 1 + crossings.size();
    lines.push_back(std::move(cur));
  }
  RegionReport rep;
  rep.formula = region_formula(arr.hyperplanes(), 2);
  rep.empirical = regions;
  rep.method = CountMethod::Exact;
  return rep;
}

RegionReport count_regions_bruteforce(const Arrangement& arr, CountMethod method, std::size_t resolution) {
  return method == CountMethod::Exact ? count_regions_exact(arr) : count_regions_grid(arr, resolution);
}

TropicalLayer TropicalLayer::from_network(const Network& net) {
  TropicalLayer layer;
  layer.weights = net.parameter("hidden0.weight").value;
  const Tensor& b = net.parameter("hidden0.bias").value;
  layer.bias.assign(b.data().begin(), b.data().end());
  layer.neuron = net.spec().neuron;
  return layer;
}

std::vector<std::uint64_t> TropicalLayer::spike_sequence(std::span<const double> x, std::size_t timesteps) const {
  const std::size_t h = weights.dim(0), n = weights.dim(1);
  if (x.size() != n) throw ShapeError("input width does not match the layer");
  if (h > 64) throw ConfigError("spike sequences support at most 64 units");
  std::vector<double> current(h), v(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    double dot = bias.empty() ? 0.0 : bias[j];
    for (std::size_t i = 0; i < n; ++i) dot += weights(j, i) * x[i];
    current[j] = dot;
  }
  std::vector<std::uint64_t> out(timesteps, 0);
  for (std::size_t t = 0; t < timesteps; ++t) {
    for (std::size_t j = 0; j < h; ++j) {
      const OracleStep step = maxplus_lif_oracle(v[j], current[j], neuron);
      v[j] = step.v_next;
      if (step.spike) out[t] |= std::uint64_t{1} << j;
    }
  }
  return out;
}

TemporalReport temporal_region_count(const TropicalLayer& layer, std::size_t timesteps, std::size_t resolution,
                                     std::optional<double> box) {
  const std::size_t h = layer.weights.dim(0), n = layer.weights.dim(1);
  if (timesteps == 0) throw ConfigError("timesteps must be >= 1");
  if (h * timesteps > 64) throw ConfigError("temporal counting needs h * T <= 64");
  TemporalReport rep;
  rep.timesteps = timesteps;
  rep.bound = boost::multiprecision::pow(region_formula(h, n), static_cast<unsigned>(timesteps));
  double half = 0.0;
  if (box) {
    half = *box;
  } else {
    std::vector<double> off(h);
    for (std::size_t j = 0; j < h; ++j) off[j] = layer.neuron.theta - (layer.bias.empty() ? 0.0 : layer.bias[j]);
    half = default_box(Arrangement(layer.weights, off));
  }
  std::unordered_set<std::uint64_t> seen;
  for_each_grid_point(n, resolution, half, [&](std::span<const double> x) {
    std::uint64_t key = 0;
    const auto seq = layer.spike_sequence(x, timesteps);
    for (std::size_t t = 0; t < timesteps; ++t) key |= seq[t] << (t * h);
    seen.insert(key);
  });
  rep.empirical = seen.size();
  return rep;
}

ZonotopeReport zonotope_volume(const Tensor& weights) {
  if (weights.rank() != 2 || weights.dim(1) == 0) throw ShapeError("zonotope generators must be [h, n]");
  const std::size_t h = weights.dim(0), n = weights.dim(1);
  ZonotopeReport rep;
  rep.rank = h == 0 ? 0 : matrix_rank(weights);
  rep.rank_deficient = rep.rank < n;
  if (rep.rank_deficient) return rep;
  double volume = 0.0;
  for_each_subset(h, n, [&](const std::vector<std::size_t>& rows) {
    volume += std::abs(rows_of(weights, rows).determinant());
  });
  rep.volume = volume;
  return rep;
}

GeneralPositionReport general_position_check(const Arrangement& arr, std::size_t resolution) {
  const std::size_t h = arr.hyperplanes(), n = arr.dims();
  GeneralPositionReport rep;
  rep.rank = matrix_rank(arr.weights);

  double min_det = h >= n ? std::numeric_limits<double>::infinity() : 0.0;
  for_each_subset(h, n, [&](const std::vector<std::size_t>& rows) {
    min_det = std::min(min_det, std::abs(rows_of(arr.weights, rows).determinant()));
  });
  rep.min_abs_det = min_det;

  std::vector<double> norms(h);
  for (std::size_t j = 0; j < h; ++j) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += arr.weights(j, i) * arr.weights(j, i);
    norms[j] = std::sqrt(sq);
  }
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = a + 1; b < h; ++b) {
      if (norms[a] == 0.0 || norms[b] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += arr.weights(a, i) * arr.weights(b, i);
      if (std::abs(dot) / (norms[a] * norms[b]) > 1.0 - 1e-6) rep.near_parallel.emplace_back(a, b);
    }
  }

  // n + 1 hyperplanes through one point: solve n of them and test the last.
  for_each_subset(h, n + 1, [&](const std::vector<std::size_t>& rows) {
    if (rep.concurrent) return;
    std::vector<std::size_t> head(rows.begin(), rows.end() - 1);
    Eigen::MatrixXd a = rows_of(arr.weights, head);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) return;
    Eigen::VectorXd c(static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) c(static_cast<Eigen::Index>(r)) = arr.offsets[head[r]];
    const Eigen::VectorXd x = lu.solve(c);
    const std::size_t last = rows.back();
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += arr.weights(last, i) * x(static_cast<Eigen::Index>(i));
    const double scale = 1.0 + std::abs(arr.offsets[last]) + norms[last] * x.cwiseAbs().maxCoeff();
    if (std::abs(dot - arr.offsets[last]) <= 1e-9 * scale) rep.concurrent = true;
  });

  rep.volume = zonotope_volume(arr.weights).volume;
  rep.degenerate = rep.rank < std::min(h, n) || (h >= n && !(rep.min_abs_det > 1e-12)) ||
                   !rep.near_parallel.empty() || rep.concurrent;

  if (n == 2) {
    rep.regions = count_regions_exact(arr).empirical;
  } else if (n <= 3 && h <= 64) {
    rep.regions = count_regions_grid(arr, resolution).empirical;
  }
  if (rep.volume > 0.0 && h >= n && rep.regions) {
    rep.capacity_checked = true;
    rep.capacity_ok = *rep.regions >= (std::uint64_t{1} << n);
  }
  return rep;
}

}  // namespace ultrasnn
