#ifndef SMGSBR_STOCHASTICS_HPP
#define SMGSBR_STOCHASTICS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "smgsbr/errors.hpp"

namespace smgsbr {

// Counter-based random stream. Draw i of stream (seed, stream_id) is a pure
// function of (seed, stream_id, i): out = mix64(counter * WEYL ^ key), with
// the key derived from (seed, stream_id) by avalanche mixing. Distinct
// stream_ids therefore index unrelated permutations of the counter sequence,
// which is what lets every sliding-window chain own an independent,
// replayable stream. State is (key implied by seed/stream_id, counter), so a
// stream serializes to three integers and restores bit-exactly.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  static RngStream restore(std::uint64_t seed, std::uint64_t stream_id,
                           std::uint64_t counter);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01();
  // Uniform on (0, 1]; safe under log().
  double uniform01_pos();

  double normal(double mean, double variance);
  // Gamma parameterized by shape and RATE. Valid down to very small shapes
  // (vague priors use shape 1e-3); draws that underflow double range are
  // floored at the smallest positive normal double.
  double gamma(double shape, double rate);
  double beta(double a, double b);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  std::uint64_t counter() const noexcept { return counter_; }

private:
  double standard_normal();
  double gamma_shape_ge1(double shape);

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_;
};

// One draw from P(N) proportional to (1-lambda)^(N-1) on N >= min_n,
// i.e. N = min_n + G with G geometric (failure count, success prob lambda).
std::int64_t sample_truncated_geometric(double lambda, std::int64_t min_n,
                                        RngStream& rng);

// Index i (0-based) with probability weights[i] / sum(weights).
std::size_t sample_categorical(std::span<const double> weights, RngStream& rng);

// Same, from unnormalized log weights (normalized internally by the max).
std::size_t sample_categorical_log(std::span<const double> log_weights,
                                   RngStream& rng);

// Finite mixture of zero-mean Gaussian components. The empty component list
// is the zero-noise limit and samples exactly 0.
struct NoiseSpec {
  struct Component {
    double weight = 0.0;
    double variance = 0.0;
  };
  std::vector<Component> components;

  bool zero_noise() const noexcept { return components.empty(); }
  double variance() const noexcept;
  void validate() const;

  static NoiseSpec none() { return NoiseSpec{}; }
  static NoiseSpec gaussian(double variance);
  static NoiseSpec mixture(std::initializer_list<Component> comps);
};

double sample_mixture_noise(const NoiseSpec& noise, RngStream& rng);

}  // namespace smgsbr

#endif  // SMGSBR_STOCHASTICS_HPP
