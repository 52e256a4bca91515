#pragma once

// Linear-region analysis of single-hidden-layer networks in the zero-temperature limit.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "ultrasnn/network.hpp"

namespace ultrasnn {

using BigInt = boost::multiprecision::cpp_int;

/// sum_{k=0}^{min(n,h)} C(h, k), the maximum number of cells cut out by h hyperplanes in R^n.
BigInt region_formula(std::uint64_t h, std::uint64_t n);

/// Which switching surface of a hidden unit the hyperplanes describe.
/// Membrane: w.x + b = ln tau0, where the leak and the input branch of the max swap.
/// Spike:    w.x + b = theta, where the unit starts to fire.
enum class Boundary { Membrane, Spike };

/// Hyperplanes {x : w_j . x = offset_j}; unit j is "on" when w_j . x > offset_j.
struct Arrangement {
  Tensor weights{Shape{0, 0}};  // [h, n]
  std::vector<double> offsets;  // [h]

  Arrangement() = default;
  Arrangement(Tensor w, std::vector<double> off);

  /// First hidden layer of `net`; offsets are (ln tau0 or theta) minus the bias.
  static Arrangement from_network(const Network& net, Boundary boundary = Boundary::Membrane);
  /// Bias-free offsets: every hyperplane shares `offset`.
  static Arrangement uniform(Tensor w, double offset);

  std::size_t hyperplanes() const { return weights.dim(0); }
  std::size_t dims() const { return weights.dim(1); }

  /// Bit j set when unit j is on at x. Requires h <= 64.
  std::uint64_t pattern(std::span<const double> x) const;
};

enum class CountMethod { Grid, Exact };

struct RegionReport {
  BigInt formula;
  std::uint64_t empirical = 0;
  CountMethod method = CountMethod::Grid;
  std::size_t resolution = 0;  // grid points per axis (grid method)
  double box = 0.0;            // half-width of the sampled cube (grid method)
};

/// Half-width of the cube used by grid counting: 3 |offset|_max / (max row norm) + 3, widened
/// so that every intersection point of n hyperplanes lies inside with margin.
double default_box(const Arrangement& arr);

/// Distinct on/off patterns over a regular grid on [-box, box]^n (n <= 3, h <= 64).
RegionReport count_regions_grid(const Arrangement& arr, std::size_t resolution,
                                std::optional<double> box = std::nullopt);
/// Exact cell count for n = 2 by incremental line insertion in rational arithmetic.
/// Zero-normal rows and repeated lines are dropped; parallel lines add no crossings.
RegionReport count_regions_exact(const Arrangement& arr);
/// Exact for n = 2 when `method` is Exact, grid otherwise.
RegionReport count_regions_bruteforce(const Arrangement& arr, CountMethod method,
                                      std::size_t resolution = 1000);

/// Hard max-plus dynamics of one hidden layer with a static input x over T steps.
struct TropicalLayer {
  Tensor weights{Shape{0, 0}};  // [h, n]
  std::vector<double> bias;     // [h]
  NeuronConfig neuron;

  static TropicalLayer from_network(const Network& net);
  /// Spike pattern of each step starting from a zero membrane; bit j of entry t is s_j(t).
  std::vector<std::uint64_t> spike_sequence(std::span<const double> x, std::size_t timesteps) const;
};

struct TemporalReport {
  BigInt bound;  // R(h, n)^T
  std::uint64_t empirical = 0;
  std::size_t timesteps = 0;
};

/// Distinct T-step spike-pattern sequences over a grid (n <= 3, h * T <= 64).
TemporalReport temporal_region_count(const TropicalLayer& layer, std::size_t timesteps, std::size_t resolution,
                                     std::optional<double> box = std::nullopt);

struct ZonotopeReport {
  double volume = 0.0;
  std::size_t rank = 0;
  bool rank_deficient = false;
};

/// Volume of the zonotope sum_i [0,1] w_i as the sum of |det| over all n-row subsets.
/// Exactly 0 when rank(W) < n (including h < n).
ZonotopeReport zonotope_volume(const Tensor& weights);

struct GeneralPositionReport {
  std::size_t rank = 0;
  double min_abs_det = 0.0;                                // over n-row subsets (0 when h < n)
  std::vector<std::pair<std::size_t, std::size_t>> near_parallel;  // |cos| > 1 - 1e-6
  bool concurrent = false;  // some n + 1 hyperplanes share a point
  double volume = 0.0;
  bool degenerate = false;
  std::optional<std::uint64_t> regions;  // counted when n <= 3
  bool capacity_checked = false;         // volume > 0 and h >= n
  bool capacity_ok = false;              // regions >= 2^n
};

GeneralPositionReport general_position_check(const Arrangement& arr, std::size_t resolution = 400);

}  // namespace ultrasnn
