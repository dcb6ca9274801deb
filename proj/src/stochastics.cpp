#include "smgsbr/stochastics.hpp"

#include <cmath>
#include <limits>

namespace smgsbr {

namespace {

constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;  // 2^64 / golden ratio

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream_id) {
  return mix64(mix64(seed + kWeyl) + kWeyl * (stream_id + 1));
}

constexpr double kMinNormalDouble = 2.2250738585072014e-308;

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      key_(derive_key(seed, stream_id)),
      counter_(0) {}

RngStream RngStream::restore(std::uint64_t seed, std::uint64_t stream_id,
                             std::uint64_t counter) {
  RngStream s(seed, stream_id);
  s.counter_ = counter;
  return s;
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64((counter_ * kWeyl) ^ key_);
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform01_pos() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::standard_normal() {
  // Box-Muller, cosine branch only: fixed draw count per call keeps streams
  // trivially replayable (no cached second variate in the state).
  const double u1 = uniform01_pos();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(6.283185307179586476925286766559 * u2);
}

double RngStream::normal(double mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    fail(ErrorCode::parameter, "normal: variance must be strictly positive");
  }
  return mean + std::sqrt(variance) * standard_normal();
}

double RngStream::gamma_shape_ge1(double shape) {
  // Marsaglia-Tsang squeeze method, rate 1.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = standard_normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01_pos();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) ||
      !std::isfinite(rate)) {
    fail(ErrorCode::parameter, "gamma: shape and rate must be strictly positive");
  }
  if (shape >= 1.0) {
    return gamma_shape_ge1(shape) / rate;
  }
  // Small-shape boost: G(a) = G(a+1) * U^(1/a). Evaluated in log space since
  // U^(1/a) underflows double range for tiny shapes; floored at the smallest
  // positive normal so downstream 1/tau and log(tau) stay finite.
  const double g = gamma_shape_ge1(shape + 1.0);
  const double u = uniform01_pos();
  const double lg = std::log(g) + std::log(u) / shape - std::log(rate);
  if (lg < -707.0) return kMinNormalDouble;
  const double out = std::exp(lg);
  return out < kMinNormalDouble ? kMinNormalDouble : out;
}

double RngStream::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    fail(ErrorCode::parameter, "beta: shapes must be strictly positive");
  }
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

std::int64_t sample_truncated_geometric(double lambda, std::int64_t min_n,
                                        RngStream& rng) {
  if (!(lambda > 0.0) || !(lambda < 1.0)) {
    fail(ErrorCode::parameter, "truncated geometric: lambda must lie in (0,1)");
  }
  if (min_n < 1) {
    fail(ErrorCode::parameter, "truncated geometric: min_n must be >= 1");
  }
  const double u = rng.uniform01();  // 1-u in (0,1]
  const double g = std::floor(std::log1p(-u) / std::log1p(-lambda));
  if (!(g >= 0.0)) return min_n;
  if (g > 9.0e18) return min_n + 9000000000000000000LL;
  return min_n + static_cast<std::int64_t>(g);
}

std::size_t sample_categorical(std::span<const double> weights, RngStream& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) {
      fail(ErrorCode::parameter, "categorical: weights must be finite and nonnegative");
    }
    total += w;
  }
  if (!(total > 0.0)) {
    fail(ErrorCode::parameter, "categorical: at least one weight must be positive");
  }
  const double target = rng.uniform01() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    acc += weights[i];
    if (target < acc) return i;
  }
  return weights.size() - 1;
}

std::size_t sample_categorical_log(std::span<const double> log_weights,
                                   RngStream& rng) {
  if (log_weights.empty()) {
    fail(ErrorCode::parameter, "categorical: empty weight vector");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) mx = std::max(mx, lw);
  if (!std::isfinite(mx)) {
    fail(ErrorCode::parameter, "categorical: no finite log weight");
  }
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - mx);
  const double target = rng.uniform01() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < log_weights.size(); ++i) {
    acc += std::exp(log_weights[i] - mx);
    if (target < acc) return i;
  }
  return log_weights.size() - 1;
}

double NoiseSpec::variance() const noexcept {
  double v = 0.0;
  for (const auto& c : components) v += c.weight * c.variance;
  return v;
}

void NoiseSpec::validate() const {
  if (components.empty()) return;  // zero-noise limit
  double wsum = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0) || c.weight > 1.0) {
      fail(ErrorCode::parameter, "noise: component weights must lie in (0,1]");
    }
    if (!(c.variance > 0.0)) {
      fail(ErrorCode::parameter, "noise: component variances must be strictly positive");
    }
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12) {
    fail(ErrorCode::parameter, "noise: component weights must sum to 1");
  }
}

NoiseSpec NoiseSpec::gaussian(double variance) {
  NoiseSpec s;
  s.components.push_back({1.0, variance});
  s.validate();
  return s;
}

NoiseSpec NoiseSpec::mixture(std::initializer_list<Component> comps) {
  NoiseSpec s;
  s.components.assign(comps);
  s.validate();
  return s;
}

double sample_mixture_noise(const NoiseSpec& noise, RngStream& rng) {
  if (noise.zero_noise()) return 0.0;
  noise.validate();
  if (noise.components.size() == 1) {
    return rng.normal(0.0, noise.components[0].variance);
  }
  std::vector<double> w;
  w.reserve(noise.components.size());
  for (const auto& c : noise.components) w.push_back(c.weight);
  const std::size_t k = sample_categorical(w, rng);
  return rng.normal(0.0, noise.components[k].variance);
}

}  // namespace smgsbr
