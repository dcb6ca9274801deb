#ifndef SMGSBR_DYNAMICS_HPP
#define SMGSBR_DYNAMICS_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "smgsbr/errors.hpp"
#include "smgsbr/stochastics.hpp"

namespace smgsbr {

// Conventions used throughout:
//  * A planar delay state is the pair (u, v) of two consecutive series
//    values with u the OLDER one: (u, v) = (x_{i-1}, x_i). Plots and all
//    manifold objects use these (x_{i-1}, x_i) axes.
//  * A lag vector is ordered newest first: lags = (x_{i-1}, x_{i-2}, ...).
//  * The planar delay map is F(u, v) = (v, g(v, u)) where g consumes a lag
//    vector.

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;  // row-major

struct Rect {
  double xlo = 0.0, xhi = 0.0, ylo = 0.0, yhi = 0.0;
  bool contains(double x, double y) const noexcept {
    return x >= xlo && x <= xhi && y >= ylo && y <= yhi;
  }
  bool contains(const Vec2& p) const noexcept { return contains(p[0], p[1]); }
  Rect expanded(double margin) const noexcept {
    return {xlo - margin, xhi + margin, ylo - margin, yhi + margin};
  }
};

// Complete polynomial basis in d variables of degree p. For d=2 the ordering
// is fixed as
//   degree 2: (1, x_{i-1}, x_{i-2}, x_{i-1}x_{i-2}, x_{i-1}^2, x_{i-2}^2)
//   degree 3: the above followed by the graded-lexicographic cubics
//             (x_{i-1}^3, x_{i-1}^2 x_{i-2}, x_{i-1} x_{i-2}^2, x_{i-2}^3).
// Only d=2 with p in {2,3} is supported.
std::size_t poly_basis_size(int delay, int degree);
void poly_features(std::span<const double> lags, int degree,
                   std::span<double> out);
std::vector<double> poly_features(std::span<const double> lags, int degree);

// Exponent table for the basis: entry (a, b) is the monomial
// lags[0]^a * lags[1]^b.
std::span<const std::array<int, 2>> poly_exponents(int degree);

// Delay-d polynomial map x_i = g(theta, x_{i-d:i-1}).
struct MapSpec {
  int delay = 2;
  int degree = 2;
  std::vector<double> coeffs;
  std::string preset_name;

  void validate() const;
  // Closed-form preimages exist iff g depends on the oldest lag only through
  // a nonzero linear term.
  bool invertible() const;

  // "henon", "dual-henon", "noninv-quad"
  static MapSpec preset(std::string_view name);
};

double map_eval(const MapSpec& map, std::span<const double> lags);

struct SeriesMeta {
  MapSpec map;
  NoiseSpec noise;
  std::vector<double> x0;
  std::uint64_t seed = 0;
  double escape_bound = 1e6;
};

struct TimeSeries {
  std::vector<double> values;  // x_1..x_n
  SeriesMeta meta;

  std::size_t n() const noexcept { return values.size(); }
};

TimeSeries simulate(const MapSpec& map, const NoiseSpec& noise,
                    std::span<const double> x0, long n, std::uint64_t seed,
                    double escape_bound = 1e6);

struct SaddlePoint {
  Vec2 location{};            // delay-coordinate fixed point (x*, x*)
  double lambda_s = 0.0;
  double lambda_u = 0.0;
  Vec2 stable_dir{};          // unit vectors, oriented into [0, 180) degrees
  Vec2 unstable_dir{};
};

// Jacobian of F(u,v) = (v, g(v,u)) at the given state, columns ordered
// (d/du, d/dv); first row is always (0, 1).
Mat2 jacobian_delay(const MapSpec& map, const Vec2& point);

Vec2 forward_step(const MapSpec& map, const Vec2& point);
std::vector<Vec2> forward_orbit(const MapSpec& map, const Vec2& point,
                                int steps);

// All saddle fixed points with x* in [lo, hi], refined to 1e-12 by sign scan
// over 1e4 subintervals plus bisection.
std::vector<SaddlePoint> find_saddle(const MapSpec& map, double lo, double hi);

// Local stable direction at orbit.front(), obtained by pulling a random unit
// vector backward through the inverse Jacobians evaluated along the supplied
// forward orbit, renormalizing each step.
Vec2 stable_direction(const MapSpec& map, const Vec2& orbit_point,
                      std::span<const Vec2> orbit, RngStream& rng);

// Exact preimage under F for invertible presets: map-step o inverse_step = id.
Vec2 inverse_step(const MapSpec& map, const Vec2& point);

struct Polyline {
  struct Vertex {
    double x = 0.0;
    double y = 0.0;
    int depth = 0;  // backward-iteration depth of the point
  };
  std::vector<Vertex> points;
  bool truncated = false;  // point budget exhausted

  bool empty() const noexcept { return points.empty(); }
};

struct TraceParams {
  double eps = 1e-4;               // seed segment half-length
  int n_back = 12;                 // backward iterations
  Rect window{-3.0, 3.0, -3.0, 3.0};
  std::size_t max_points = 500000; // in-window point budget
  double refine_resolution = 0.01; // gap between consecutive images that
                                   // triggers seed-segment refinement
  int seed_count = 65;             // initial seed parameters
};

// Grows the global stable manifold of an invertible preset from a seed
// segment saddle + t*stable_dir, t in [-eps, eps], by backward iteration
// with adaptive seed refinement. Output vertices are ordered by
// (depth, seed parameter); retained points all lie inside `window`.
Polyline trace_stable_manifold(const MapSpec& map, const SaddlePoint& saddle,
                               const TraceParams& params);

}  // namespace smgsbr

#endif  // SMGSBR_DYNAMICS_HPP
