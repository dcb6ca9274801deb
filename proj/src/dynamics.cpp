#include "smgsbr/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace smgsbr {

namespace {

// Exponent tables for d=2; entry (a, b) is lags[0]^a * lags[1]^b.
constexpr std::array<std::array<int, 2>, 6> kExpDeg2 = {{
    {0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2},
}};
constexpr std::array<std::array<int, 2>, 10> kExpDeg3 = {{
    {0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2},
    {3, 0}, {2, 1}, {1, 2}, {0, 3},
}};

void require_supported(int delay, int degree) {
  if (delay != 2 || (degree != 2 && degree != 3)) {
    fail(ErrorCode::unsupported_model,
         "only delay 2 with degree 2 or 3 is supported");
  }
}

double ipow(double x, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= x;
  return r;
}

}  // namespace

std::span<const std::array<int, 2>> poly_exponents(int degree) {
  require_supported(2, degree);
  if (degree == 2) return {kExpDeg2.data(), kExpDeg2.size()};
  return {kExpDeg3.data(), kExpDeg3.size()};
}

std::size_t poly_basis_size(int delay, int degree) {
  require_supported(delay, degree);
  return degree == 2 ? 6 : 10;
}

void poly_features(std::span<const double> lags, int degree,
                   std::span<double> out) {
  require_supported(static_cast<int>(lags.size()), degree);
  for (double l : lags) {
    if (!std::isfinite(l)) {
      fail(ErrorCode::parameter, "poly_features: lags must be finite");
    }
  }
  const auto exps = poly_exponents(degree);
  if (out.size() != exps.size()) {
    fail(ErrorCode::parameter, "poly_features: output span has wrong size");
  }
  const double v = lags[0];  // x_{i-1}
  const double u = lags[1];  // x_{i-2}
  out[0] = 1.0;
  out[1] = v;
  out[2] = u;
  out[3] = v * u;
  out[4] = v * v;
  out[5] = u * u;
  if (degree == 3) {
    out[6] = v * v * v;
    out[7] = v * v * u;
    out[8] = v * u * u;
    out[9] = u * u * u;
  }
}

std::vector<double> poly_features(std::span<const double> lags, int degree) {
  std::vector<double> out(poly_basis_size(static_cast<int>(lags.size()), degree));
  poly_features(lags, degree, out);
  return out;
}

void MapSpec::validate() const {
  require_supported(delay, degree);
  if (coeffs.size() != poly_basis_size(delay, degree)) {
    fail(ErrorCode::parameter, "map: coefficient vector has wrong length");
  }
  for (double c : coeffs) {
    if (!std::isfinite(c)) fail(ErrorCode::parameter, "map: non-finite coefficient");
  }
}

bool MapSpec::invertible() const {
  const auto exps = poly_exponents(degree);
  if (coeffs.size() != exps.size()) return false;
  if (coeffs[2] == 0.0) return false;  // linear oldest-lag term
  for (std::size_t j = 0; j < exps.size(); ++j) {
    if (j == 2) continue;
    if (exps[j][1] > 0 && coeffs[j] != 0.0) return false;
  }
  return true;
}

MapSpec MapSpec::preset(std::string_view name) {
  MapSpec m;
  if (name == "henon") {
    m.degree = 2;
    m.coeffs = {1.0, 0.0, 0.3, 0.0, -1.4, 0.0};
  } else if (name == "dual-henon") {
    m.degree = 3;
    m.coeffs = {0.0, 2.0, 0.3, 0.0, 0.0, 0.0, -0.1, 0.0, 0.0, 0.0};
  } else if (name == "noninv-quad") {
    m.degree = 2;
    m.coeffs = {1.38, 0.0, 0.0, 0.0, -1.0, 0.211};
  } else {
    fail(ErrorCode::parameter, "unknown map preset: " + std::string(name));
  }
  m.preset_name = std::string(name);
  m.validate();
  return m;
}

double map_eval(const MapSpec& map, std::span<const double> lags) {
  if (lags.size() != static_cast<std::size_t>(map.delay)) {
    fail(ErrorCode::parameter, "map_eval: lag vector length must equal delay");
  }
  std::array<double, 10> phi{};
  const std::size_t k = poly_basis_size(map.delay, map.degree);
  poly_features(lags, map.degree, std::span<double>(phi.data(), k));
  double out = 0.0;
  for (std::size_t j = 0; j < k; ++j) out += map.coeffs[j] * phi[j];
  if (!std::isfinite(out)) {
    fail(ErrorCode::numeric_overflow, "map_eval: orbit escaped to non-finite value");
  }
  return out;
}

TimeSeries simulate(const MapSpec& map, const NoiseSpec& noise,
                    std::span<const double> x0, long n, std::uint64_t seed,
                    double escape_bound) {
  map.validate();
  noise.validate();
  if (n < 1) fail(ErrorCode::parameter, "simulate: n must be >= 1");
  if (x0.size() != static_cast<std::size_t>(map.delay)) {
    fail(ErrorCode::parameter, "simulate: x0 must have length delay");
  }
  for (double v : x0) {
    if (!std::isfinite(v)) fail(ErrorCode::parameter, "simulate: x0 must be finite");
  }

  TimeSeries ts;
  ts.meta.map = map;
  ts.meta.noise = noise;
  ts.meta.x0.assign(x0.begin(), x0.end());
  ts.meta.seed = seed;
  ts.meta.escape_bound = escape_bound;
  ts.values.reserve(static_cast<std::size_t>(n));

  RngStream rng(seed);
  const int d = map.delay;
  // history, newest first
  std::vector<double> lags(x0.rbegin(), x0.rend());
  for (long i = 1; i <= n; ++i) {
    const double det = map_eval(map, lags);
    const double e = sample_mixture_noise(noise, rng);
    const double xi = det + e;
    if (!std::isfinite(xi) || std::abs(xi) > escape_bound) {
      fail(ErrorCode::escape,
           "simulate: orbit escaped bound at index " + std::to_string(i));
    }
    ts.values.push_back(xi);
    for (int j = d - 1; j > 0; --j) lags[j] = lags[j - 1];
    lags[0] = xi;
  }
  return ts;
}

Mat2 jacobian_delay(const MapSpec& map, const Vec2& point) {
  map.validate();
  const auto exps = poly_exponents(map.degree);
  const double u = point[0];
  const double v = point[1];
  // state (u, v) feeds g as lags (v, u); differentiate each monomial
  // v^a u^b exactly.
  double gu = 0.0, gv = 0.0;
  for (std::size_t j = 0; j < exps.size(); ++j) {
    const int a = exps[j][0];
    const int b = exps[j][1];
    const double c = map.coeffs[j];
    if (c == 0.0) continue;
    if (a > 0) gv += c * a * ipow(v, a - 1) * ipow(u, b);
    if (b > 0) gu += c * b * ipow(v, a) * ipow(u, b - 1);
  }
  return Mat2{{{0.0, 1.0}, {gu, gv}}};
}

Vec2 forward_step(const MapSpec& map, const Vec2& point) {
  const std::array<double, 2> lags = {point[1], point[0]};
  return {point[1], map_eval(map, lags)};
}

std::vector<Vec2> forward_orbit(const MapSpec& map, const Vec2& point,
                                int steps) {
  std::vector<Vec2> orbit;
  orbit.reserve(static_cast<std::size_t>(steps) + 1);
  orbit.push_back(point);
  for (int i = 0; i < steps; ++i) orbit.push_back(forward_step(map, orbit.back()));
  return orbit;
}

namespace {

// Eigenvector of [[0,1],[gu,gv]] for eigenvalue lambda is (1, lambda).
Vec2 oriented_unit(double x, double y) {
  const double norm = std::hypot(x, y);
  x /= norm;
  y /= norm;
  if (y < 0.0 || (y == 0.0 && x < 0.0)) {
    x = -x;
    y = -y;
  }
  return {x, y};
}

std::optional<SaddlePoint> classify_fixed_point(const MapSpec& map, double xs) {
  const Mat2 J = jacobian_delay(map, {xs, xs});
  const double tr = J[0][0] + J[1][1];
  const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
  const double disc = tr * tr - 4.0 * det;
  if (disc <= 0.0) return std::nullopt;  // complex or defective: not a saddle
  const double sq = std::sqrt(disc);
  const double l1 = 0.5 * (tr + sq);
  const double l2 = 0.5 * (tr - sq);
  double ls, lu;
  if (std::abs(l1) < std::abs(l2)) {
    ls = l1;
    lu = l2;
  } else {
    ls = l2;
    lu = l1;
  }
  if (!(std::abs(ls) < 1.0 && std::abs(lu) > 1.0)) return std::nullopt;
  SaddlePoint s;
  s.location = {xs, xs};
  s.lambda_s = ls;
  s.lambda_u = lu;
  s.stable_dir = oriented_unit(1.0, ls);
  s.unstable_dir = oriented_unit(1.0, lu);
  return s;
}

}  // namespace

std::vector<SaddlePoint> find_saddle(const MapSpec& map, double lo, double hi) {
  map.validate();
  if (!(lo < hi)) fail(ErrorCode::parameter, "find_saddle: empty search interval");

  const auto h = [&](double x) {
    const std::array<double, 2> lags = {x, x};
    return map_eval(map, lags) - x;
  };

  constexpr int kScan = 10000;
  const double step = (hi - lo) / kScan;
  std::vector<double> roots;
  double xa = lo;
  double ha = h(xa);
  for (int i = 1; i <= kScan; ++i) {
    const double xb = lo + i * step;
    const double hb = h(xb);
    if (ha == 0.0) {
      roots.push_back(xa);
    } else if (ha * hb < 0.0) {
      double a = xa, b = xb, fa = ha;
      while (b - a > 1e-12) {
        const double m = 0.5 * (a + b);
        const double fm = h(m);
        if (fm == 0.0) {
          a = b = m;
          break;
        }
        if (fa * fm < 0.0) {
          b = m;
        } else {
          a = m;
          fa = fm;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    xa = xb;
    ha = hb;
  }
  if (h(hi) == 0.0) roots.push_back(hi);

  std::sort(roots.begin(), roots.end());
  std::vector<SaddlePoint> saddles;
  for (double r : roots) {
    if (!saddles.empty() && std::abs(r - saddles.back().location[0]) < 1e-9) continue;
    if (auto s = classify_fixed_point(map, r)) saddles.push_back(*s);
  }
  return saddles;
}

Vec2 stable_direction(const MapSpec& map, const Vec2& orbit_point,
                      std::span<const Vec2> orbit, RngStream& rng) {
  if (orbit.empty()) fail(ErrorCode::parameter, "stable_direction: empty orbit");
  if (std::abs(orbit.front()[0] - orbit_point[0]) > 1e-9 ||
      std::abs(orbit.front()[1] - orbit_point[1]) > 1e-9) {
    fail(ErrorCode::parameter,
         "stable_direction: orbit must start at orbit_point");
  }
  const double phi = rng.uniform01() * 6.283185307179586476925286766559;
  double wx = std::cos(phi);
  double wy = std::sin(phi);
  // Pull the vector backward: w <- J(p_k)^{-1} w for k = m-1 .. 0. The
  // backward dynamics expand the stable direction of the forward map, so the
  // normalized vector converges onto it at orbit.front().
  for (std::size_t k = orbit.size() - 1; k-- > 0;) {
    const Mat2 J = jacobian_delay(map, orbit[k]);
    const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    if (std::abs(det) < 1e-300) {
      fail(ErrorCode::singularity,
           "stable_direction: singular Jacobian at orbit index " +
               std::to_string(k));
    }
    const double ix = (J[1][1] * wx - J[0][1] * wy) / det;
    const double iy = (-J[1][0] * wx + J[0][0] * wy) / det;
    const double norm = std::hypot(ix, iy);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      fail(ErrorCode::singularity, "stable_direction: vector collapsed");
    }
    wx = ix / norm;
    wy = iy / norm;
  }
  return oriented_unit(wx, wy);
}

Vec2 inverse_step(const MapSpec& map, const Vec2& point) {
  if (!map.invertible()) {
    fail(ErrorCode::invertibility,
         "inverse_step: map has no closed-form preimage");
  }
  // F(u,v) = (v, g(v,u)) with g(v,u) = c*u + h(v); given (p,q) = F(u,v):
  // v = p, u = (q - h(p)) / c.
  const double p = point[0];
  const double q = point[1];
  const auto exps = poly_exponents(map.degree);
  double hp = 0.0;
  for (std::size_t j = 0; j < exps.size(); ++j) {
    if (exps[j][1] != 0) continue;
    if (map.coeffs[j] == 0.0) continue;
    hp += map.coeffs[j] * ipow(p, exps[j][0]);
  }
  const double u = (q - hp) / map.coeffs[2];
  return {u, p};
}

namespace {

struct SeedOrbit {
  double t = 0.0;
  std::vector<Vec2> pts;  // pts[k] = F^{-k}(seed(t)); may stop early at prune
};

}  // namespace

Polyline trace_stable_manifold(const MapSpec& map, const SaddlePoint& saddle,
                               const TraceParams& params) {
  if (!map.invertible()) {
    fail(ErrorCode::invertibility,
         "trace_stable_manifold: preset is not invertible");
  }
  if (!(params.eps > 0.0)) {
    fail(ErrorCode::parameter, "trace_stable_manifold: eps must be positive");
  }
  if (params.n_back < 0) {
    fail(ErrorCode::parameter, "trace_stable_manifold: n_back must be >= 0");
  }

  const double span_mag =
      std::max({1.0, std::abs(params.window.xlo), std::abs(params.window.xhi),
                std::abs(params.window.ylo), std::abs(params.window.yhi)});
  const double prune = 100.0 * span_mag;
  const Rect near_window = params.window.expanded(params.refine_resolution);
  // Seed parameters below this spacing cannot be distinguished in double
  // precision; deeper strands simply stay at the budgeted resolution.
  const double t_min = 8.0 * params.eps * std::numeric_limits<double>::epsilon();

  const auto make_orbit = [&](double t) {
    SeedOrbit o;
    o.t = t;
    o.pts.reserve(static_cast<std::size_t>(params.n_back) + 1);
    Vec2 p = {saddle.location[0] + t * saddle.stable_dir[0],
              saddle.location[1] + t * saddle.stable_dir[1]};
    o.pts.push_back(p);
    for (int k = 1; k <= params.n_back; ++k) {
      p = inverse_step(map, p);
      if (!std::isfinite(p[0]) || !std::isfinite(p[1]) ||
          std::abs(p[0]) > prune || std::abs(p[1]) > prune) {
        break;
      }
      o.pts.push_back(p);
    }
    return o;
  };

  std::size_t in_window = 0;
  const auto count_in_window = [&](const SeedOrbit& o) {
    for (const Vec2& p : o.pts) {
      if (params.window.contains(p)) ++in_window;
    }
  };

  const auto needs_split = [&](const SeedOrbit& a, const SeedOrbit& b) {
    if (b.t - a.t <= t_min) return false;
    const std::size_t kmax = std::max(a.pts.size(), b.pts.size());
    for (std::size_t k = 0; k < kmax; ++k) {
      const bool ha = k < a.pts.size();
      const bool hb = k < b.pts.size();
      if (ha && hb) {
        const bool care = near_window.contains(a.pts[k]) ||
                          near_window.contains(b.pts[k]);
        if (!care) continue;
        const double dx = a.pts[k][0] - b.pts[k][0];
        const double dy = a.pts[k][1] - b.pts[k][1];
        if (dx * dx + dy * dy >
            params.refine_resolution * params.refine_resolution) {
          return true;
        }
      } else if (ha != hb) {
        // one side pruned: refine while the surviving side is near the window
        const Vec2& p = ha ? a.pts[k] : b.pts[k];
        if (near_window.contains(p)) return true;
      }
    }
    return false;
  };

  // Work items hold seed parameters only; orbits are cheap to recompute,
  // which keeps memory flat however hard a strand refines.
  std::vector<double> ts;
  std::deque<std::pair<double, double>> work;
  const int n0 = std::max(3, params.seed_count);
  for (int i = 0; i < n0; ++i) {
    const double t = -params.eps + 2.0 * params.eps * i / (n0 - 1);
    ts.push_back(t);
    count_in_window(make_orbit(t));
    if (i > 0) work.emplace_back(ts[ts.size() - 2], t);
  }

  bool truncated = false;
  const std::size_t split_cap = 64 * params.max_points + 1024;
  std::size_t splits = 0;
  // Breadth-first so the point budget spreads over the whole seed segment
  // instead of one flank.
  while (!work.empty()) {
    const auto [ta, tb] = work.front();
    work.pop_front();
    const SeedOrbit a = make_orbit(ta);
    const SeedOrbit b = make_orbit(tb);
    if (!needs_split(a, b)) continue;
    if (in_window >= params.max_points || splits >= split_cap) {
      truncated = true;
      continue;
    }
    ++splits;
    const double tm = 0.5 * (ta + tb);
    SeedOrbit mid = make_orbit(tm);
    count_in_window(mid);
    ts.push_back(tm);
    work.emplace_back(ta, tm);
    work.emplace_back(tm, tb);
  }

  std::sort(ts.begin(), ts.end());

  struct Emit {
    int depth;
    double t;
    Vec2 p;
  };
  std::vector<Emit> emitted;
  emitted.reserve(std::min<std::size_t>(in_window + 16, params.max_points + 16));
  for (double t : ts) {
    const SeedOrbit o = make_orbit(t);
    for (std::size_t k = 0; k < o.pts.size(); ++k) {
      if (params.window.contains(o.pts[k])) {
        emitted.push_back({static_cast<int>(k), t, o.pts[k]});
      }
    }
  }
  std::sort(emitted.begin(), emitted.end(), [](const Emit& a, const Emit& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.t < b.t;
  });
  if (emitted.size() > params.max_points) {
    emitted.resize(params.max_points);
    truncated = true;
  }

  Polyline line;
  line.truncated = truncated;
  line.points.reserve(emitted.size());
  for (const Emit& e : emitted) {
    line.points.push_back({e.p[0], e.p[1], e.depth});
  }
  return line;
}

}  // namespace smgsbr
