#ifndef SMGSBR_GSBR_HPP
#define SMGSBR_GSBR_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smgsbr/dynamics.hpp"
#include "smgsbr/errors.hpp"
#include "smgsbr/stochastics.hpp"

namespace smgsbr {

struct Interval {
  double lo = -3.0;
  double hi = 3.0;
  bool contains(double x) const noexcept { return x > lo && x < hi; }
  double width() const noexcept { return hi - lo; }
};

// Sampler configuration. Defaults are the noninformative specification and
// the full-length run schedule; desk_profile() switches to the reduced
// CI-scale schedule (20000 / 5000 / 15).
struct GsbrConfig {
  int T = 3;                  // backward prediction horizon
  int delay = 2;              // d (only 2 supported)
  int degree = 2;             // model basis degree p (2 or 3)
  Interval trunc{-3.0, 3.0};  // restriction interval X for latent coordinates
  double alpha = 0.5;
  double beta = 0.5;
  double b1 = 1e-3;           // tau prior shape
  double b2 = 1e-3;           // tau prior rate
  long iters = 200000;
  long burn_in = 50000;
  long thin = 150;
  double proposal_scale0 = 0.1;
  bool adapt = true;

  std::size_t basis_size() const { return poly_basis_size(delay, degree); }
  long retained_count() const { return (iters - burn_in) / thin; }
  void validate() const;
  GsbrConfig with_desk_profile() const {
    GsbrConfig c = *this;
    c.iters = 20000;
    c.burn_in = 5000;
    c.thin = 15;
    return c;
  }
};

// Full Gibbs state over the augmented posterior. Pair index j = 0..M-1 maps
// to time index i = j - T + 1 (i runs -T+1 .. n, M = n + T). Latent slot
// j = 0..T+d-1 maps to time index i = j - T - d + 1 (i runs -T-d+1 .. 0).
struct ChainState {
  int T = 0;
  int d = 2;
  double lambda = 0.5;
  std::vector<double> tau;       // realized prefix of tau_{1:inf}
  std::vector<int> alloc_d;      // d_i, 1-based component indices
  std::vector<int> slice_N;      // N_i
  std::vector<double> theta;
  std::vector<double> latent_x;  // x_{-T-d+1 .. 0}
  std::vector<double> obs_x;     // x_1 .. x_n, frozen
  std::string init_warning;      // nonempty if init fell back (e.g. theta=0)

  long n() const noexcept { return static_cast<long>(obs_x.size()); }
  long M() const noexcept { return n() + T; }

  // Value of x_i for i in [-T-d+1, n].
  double x_at(long i) const {
    return i >= 1 ? obs_x[static_cast<std::size_t>(i - 1)]
                  : latent_x[static_cast<std::size_t>(i + T + d - 1)];
  }
  void set_x(long i, double v) {
    if (i >= 1) {
      obs_x[static_cast<std::size_t>(i - 1)] = v;
    } else {
      latent_x[static_cast<std::size_t>(i + T + d - 1)] = v;
    }
  }
  // Lags for x_i, newest first: (x_{i-1}, ..., x_{i-d}).
  void lags_at(long i, std::span<double> out) const {
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = x_at(i - 1 - j);
  }
  long pair_time(std::size_t j) const { return static_cast<long>(j) - T + 1; }
  std::size_t pair_index(long i) const { return static_cast<std::size_t>(i + T - 1); }

  // Throws on any violated structural invariant (used heavily in tests).
  void check_invariants(const GsbrConfig& config) const;
};

struct PosteriorSample {
  std::vector<double> theta;
  double lambda = 0.0;
  std::array<double, 2> initial_point{};  // (x_{-T-d+1}, x_{-T-d+2})
  std::vector<double> intermediates;      // x_{-T+1 .. 0}
  long sweep_index = 0;
};

// Random-walk Metropolis bookkeeping for the latent coordinates. Scales
// adapt toward acceptance 0.44 during burn-in and freeze afterwards.
struct AdaptState {
  std::vector<double> scales;
  std::vector<long> proposed;        // lifetime counters (diagnostics)
  std::vector<long> accepted;
  std::vector<long> batch_proposed;  // adaptation window counters
  std::vector<long> batch_accepted;
  std::vector<long> batch_index;

  static AdaptState init(std::size_t n_coords, double scale0);
};

struct ChainDiagnostics {
  std::vector<double> acceptance_rates;  // per latent coordinate
  std::vector<double> final_scales;
  int n_star_max = 0;
  double lambda_mean = 0.0;
  double lambda_sd = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  long retained = 0;
};

struct RunResult {
  std::vector<PosteriorSample> samples;
  ChainDiagnostics diagnostics;
};

// Everything needed to continue a run bit-exactly.
struct ChainCheckpoint {
  GsbrConfig config;
  std::vector<double> series;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_stream = 0;
  std::uint64_t rng_counter = 0;
  long sweep_index = 0;  // sweeps completed
  ChainState state;
  AdaptState adapt;
  std::vector<PosteriorSample> samples;
  int n_star_max = 0;
};

// Log of the unnormalized augmented posterior; -inf encodes a latent
// coordinate outside the restriction interval.
double log_joint(const ChainState& state, const GsbrConfig& config);

ChainState init_chain(const GsbrConfig& config, std::span<const double> series,
                      RngStream& rng);

double update_lambda(ChainState& state, const GsbrConfig& config, RngStream& rng);
void update_tau(ChainState& state, const GsbrConfig& config, RngStream& rng);
void update_alloc_pairs(ChainState& state, const GsbrConfig& config, RngStream& rng);
void update_theta(ChainState& state, const GsbrConfig& config, RngStream& rng);
void update_latent(ChainState& state, const GsbrConfig& config, RngStream& rng,
                   AdaptState& adapt, bool adapting);

void gibbs_sweep(ChainState& state, const GsbrConfig& config, RngStream& rng,
                 AdaptState& adapt, bool adapting);

// Closed-form parameters of the conjugate conditionals; exposed so tests can
// compare them against numeric integration of exp(log_joint).
struct BetaParams {
  double a = 0.0, b = 0.0;
};
struct GammaParams {
  double shape = 0.0, rate = 0.0;
};
BetaParams lambda_conditional(const ChainState& state, const GsbrConfig& config);
GammaParams tau_conditional(const ChainState& state, const GsbrConfig& config,
                            std::size_t component);  // 0-based
// Unnormalized log conditional of latent coordinate `slot` (0-based into
// latent_x) evaluated at x; the FC1/FC2 finite sums.
double latent_log_conditional(const ChainState& state, const GsbrConfig& config,
                              std::size_t slot, double x);

using CheckpointSink = std::function<void(const ChainCheckpoint&)>;

RunResult run_chain(const GsbrConfig& config, std::span<const double> series,
                    RngStream& rng, const CheckpointSink& sink = {},
                    long checkpoint_every = 0);

// Continues a checkpointed run to config.iters.
RunResult resume_chain(const ChainCheckpoint& checkpoint,
                       const CheckpointSink& sink = {},
                       long checkpoint_every = 0);

struct Predictive {
  double noise_draw = 0.0;          // e_{n+1}
  std::vector<double> path;         // optional forward path x_{n+1..n+horizon}
};

// Posterior predictive: allocation k from the geometric weights, noise from
// component k (fresh prior draw beyond the realized prefix), plus an optional
// forward path iterated with per-step predictive noise.
Predictive posterior_predict(const ChainState& state, const GsbrConfig& config,
                             RngStream& rng, int horizon);

}  // namespace smgsbr

#endif  // SMGSBR_GSBR_HPP
