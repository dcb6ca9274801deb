#include "smgsbr/gsbr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace smgsbr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLambdaClamp = 1e-16;
// Guard on slice counts: (1-lambda)^N mass beyond this is immeasurable for
// any lambda the clamp admits in practice, and it bounds tau growth.
constexpr long kMaxSliceN = 2000000;

double clamp_lambda(double lam) {
  return std::min(1.0 - kLambdaClamp, std::max(kLambdaClamp, lam));
}

double model_eval(std::span<const double> theta, std::span<const double> lags,
                  int degree) {
  std::array<double, 10> phi{};
  const std::size_t k = poly_basis_size(2, degree);
  poly_features(lags, degree, std::span<double>(phi.data(), k));
  double out = 0.0;
  for (std::size_t j = 0; j < k; ++j) out += theta[j] * phi[j];
  return out;
}

double residual_at(const ChainState& state, const GsbrConfig& config, long i) {
  std::array<double, 2> lags;
  state.lags_at(i, lags);
  return state.x_at(i) - model_eval(state.theta, lags, config.degree);
}

double lgamma_term(double b1, double b2) {
  return b1 * std::log(b2) - std::lgamma(b1);
}

}  // namespace

void GsbrConfig::validate() const {
  if (delay != 2) fail(ErrorCode::unsupported_model, "config: delay must be 2");
  if (degree != 2 && degree != 3) {
    fail(ErrorCode::unsupported_model, "config: degree must be 2 or 3");
  }
  if (T < 0) fail(ErrorCode::config, "config: T must be >= 0");
  if (!(trunc.lo < trunc.hi) || !std::isfinite(trunc.lo) || !std::isfinite(trunc.hi)) {
    fail(ErrorCode::config, "config: trunc must be a bounded nonempty interval");
  }
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    fail(ErrorCode::config, "config: alpha and beta must be positive");
  }
  if (!(b1 > 0.0) || !(b2 > 0.0)) {
    fail(ErrorCode::config, "config: b1 and b2 must be positive");
  }
  if (iters < 1) fail(ErrorCode::config, "config: iters must be positive");
  if (burn_in < 0 || burn_in >= iters) {
    fail(ErrorCode::config, "config: burn_in must satisfy 0 <= burn_in < iters");
  }
  if (thin < 1) fail(ErrorCode::config, "config: thin must be >= 1");
  if (!(proposal_scale0 > 0.0)) {
    fail(ErrorCode::config, "config: proposal_scale0 must be positive");
  }
}

void ChainState::check_invariants(const GsbrConfig& config) const {
  const std::size_t m = static_cast<std::size_t>(M());
  if (alloc_d.size() != m || slice_N.size() != m) {
    fail(ErrorCode::chain_failure, "state: allocation arrays have wrong length");
  }
  if (latent_x.size() != static_cast<std::size_t>(T + d)) {
    fail(ErrorCode::chain_failure, "state: latent vector has wrong length");
  }
  if (theta.size() != config.basis_size()) {
    fail(ErrorCode::chain_failure, "state: theta has wrong length");
  }
  if (!(lambda > 0.0 && lambda < 1.0)) {
    fail(ErrorCode::chain_failure, "state: lambda outside (0,1)");
  }
  int n_star = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (alloc_d[j] < 1 || alloc_d[j] > slice_N[j]) {
      fail(ErrorCode::chain_failure, "state: allocation pair violates 1 <= d <= N");
    }
    n_star = std::max(n_star, slice_N[j]);
  }
  if (tau.size() < static_cast<std::size_t>(n_star)) {
    fail(ErrorCode::chain_failure, "state: tau shorter than max slice count");
  }
  for (double t : tau) {
    if (!(t > 0.0)) fail(ErrorCode::chain_failure, "state: nonpositive tau entry");
  }
  for (double v : latent_x) {
    if (!config.trunc.contains(v)) {
      fail(ErrorCode::chain_failure, "state: latent coordinate outside trunc interval");
    }
  }
}

double log_joint(const ChainState& state, const GsbrConfig& config) {
  for (double v : state.latent_x) {
    if (!config.trunc.contains(v)) return kNegInf;
  }
  const double lam = state.lambda;
  if (!(lam > 0.0 && lam < 1.0)) return kNegInf;

  double lp = (config.alpha - 1.0) * std::log(lam) +
              (config.beta - 1.0) * std::log1p(-lam);
  for (double t : state.tau) {
    if (!(t > 0.0)) return kNegInf;
    lp += (config.b1 - 1.0) * std::log(t) - config.b2 * t +
          lgamma_term(config.b1, config.b2);
  }

  const long m = state.M();
  const double log_lam = std::log(lam);
  const double log_1mlam = std::log1p(-lam);
  for (long j = 0; j < m; ++j) {
    const std::size_t js = static_cast<std::size_t>(j);
    const int dj = state.alloc_d[js];
    const int Nj = state.slice_N[js];
    if (dj < 1 || dj > Nj) return kNegInf;
    if (static_cast<std::size_t>(dj) > state.tau.size()) return kNegInf;
    const double tau_j = state.tau[static_cast<std::size_t>(dj - 1)];
    const double r = residual_at(state, config, state.pair_time(js));
    lp += 2.0 * log_lam + (Nj - 1) * log_1mlam;
    lp += 0.5 * (std::log(tau_j) - kLog2Pi) - 0.5 * tau_j * r * r;
  }
  return lp;
}

ChainState init_chain(const GsbrConfig& config, std::span<const double> series,
                      RngStream& rng) {
  config.validate();
  const std::size_t k = config.basis_size();
  if (series.size() < k + 1) {
    fail(ErrorCode::parameter,
         "init_chain: series must have at least basis_size + 1 observations");
  }
  for (double v : series) {
    if (!std::isfinite(v)) fail(ErrorCode::parameter, "init_chain: non-finite observation");
  }

  ChainState state;
  state.T = config.T;
  state.d = config.delay;
  state.obs_x.assign(series.begin(), series.end());

  state.lambda = clamp_lambda(rng.beta(config.alpha, config.beta));
  const std::size_t m = static_cast<std::size_t>(state.M());
  state.alloc_d.assign(m, 1);
  state.slice_N.assign(m, 1);
  state.tau = {rng.gamma(config.b1, config.b2)};

  // OLS fit on the fully observed rows i = d+1 .. n.
  const long n = state.n();
  const long rows = n - config.delay;
  Eigen::MatrixXd phi(rows, static_cast<long>(k));
  Eigen::VectorXd y(rows);
  std::array<double, 10> feat{};
  for (long r = 0; r < rows; ++r) {
    const long i = config.delay + 1 + r;
    std::array<double, 2> lags;
    state.lags_at(i, lags);
    poly_features(lags, config.degree, std::span<double>(feat.data(), k));
    for (std::size_t c = 0; c < k; ++c) phi(r, static_cast<long>(c)) = feat[c];
    y(r) = state.x_at(i);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<long>(k)) {
    state.theta.assign(k, 0.0);
    state.init_warning = "degenerate design matrix; theta initialized to zero";
  } else {
    const Eigen::VectorXd sol = qr.solve(y);
    state.theta.assign(sol.data(), sol.data() + k);
  }

  state.latent_x.resize(static_cast<std::size_t>(config.T + config.delay));
  for (double& v : state.latent_x) {
    do {
      v = config.trunc.lo + rng.uniform01() * config.trunc.width();
    } while (!config.trunc.contains(v));
  }
  return state;
}

BetaParams lambda_conditional(const ChainState& state, const GsbrConfig& config) {
  double sum_nm1 = 0.0;
  for (int N : state.slice_N) sum_nm1 += N - 1;
  return {config.alpha + 2.0 * static_cast<double>(state.M()),
          config.beta + sum_nm1};
}

double update_lambda(ChainState& state, const GsbrConfig& config, RngStream& rng) {
  const BetaParams p = lambda_conditional(state, config);
  state.lambda = clamp_lambda(rng.beta(p.a, p.b));
  return state.lambda;
}

GammaParams tau_conditional(const ChainState& state, const GsbrConfig& config,
                            std::size_t component) {
  double count = 0.0;
  double ssq = 0.0;
  const long m = state.M();
  for (long j = 0; j < m; ++j) {
    if (state.alloc_d[static_cast<std::size_t>(j)] !=
        static_cast<int>(component) + 1) {
      continue;
    }
    const double r = residual_at(state, config, state.pair_time(static_cast<std::size_t>(j)));
    count += 1.0;
    ssq += r * r;
  }
  return {config.b1 + 0.5 * count, config.b2 + 0.5 * ssq};
}

void update_tau(ChainState& state, const GsbrConfig& config, RngStream& rng) {
  const std::size_t K = state.tau.size();
  std::vector<double> count(K, 0.0);
  std::vector<double> ssq(K, 0.0);
  const long m = state.M();
  for (long j = 0; j < m; ++j) {
    const std::size_t js = static_cast<std::size_t>(j);
    const std::size_t comp = static_cast<std::size_t>(state.alloc_d[js] - 1);
    const double r = residual_at(state, config, state.pair_time(js));
    count[comp] += 1.0;
    ssq[comp] += r * r;
  }
  for (std::size_t c = 0; c < K; ++c) {
    state.tau[c] = rng.gamma(config.b1 + 0.5 * count[c], config.b2 + 0.5 * ssq[c]);
  }
}

void update_alloc_pairs(ChainState& state, const GsbrConfig& config,
                        RngStream& rng) {
  const long m = state.M();
  std::vector<double> logw;
  for (long j = 0; j < m; ++j) {
    const std::size_t js = static_cast<std::size_t>(j);
    const double r = residual_at(state, config, state.pair_time(js));
    const double r2h = 0.5 * r * r;

    std::int64_t N = sample_truncated_geometric(state.lambda,
                                                state.alloc_d[js], rng);
    if (N > kMaxSliceN) N = kMaxSliceN;
    while (state.tau.size() < static_cast<std::size_t>(N)) {
      state.tau.push_back(rng.gamma(config.b1, config.b2));
    }
    state.slice_N[js] = static_cast<int>(N);

    if (N == 1) {
      state.alloc_d[js] = 1;
      continue;
    }
    logw.resize(static_cast<std::size_t>(N));
    for (std::int64_t c = 0; c < N; ++c) {
      const double tau_c = state.tau[static_cast<std::size_t>(c)];
      logw[static_cast<std::size_t>(c)] = 0.5 * std::log(tau_c) - tau_c * r2h;
    }
    state.alloc_d[js] = static_cast<int>(sample_categorical_log(logw, rng)) + 1;
  }
}

void update_theta(ChainState& state, const GsbrConfig& config, RngStream& rng) {
  const std::size_t k = config.basis_size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<long>(k), static_cast<long>(k));
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<long>(k));
  std::array<double, 10> feat{};
  const long m = state.M();
  for (long j = 0; j < m; ++j) {
    const std::size_t js = static_cast<std::size_t>(j);
    const long i = state.pair_time(js);
    std::array<double, 2> lags;
    state.lags_at(i, lags);
    poly_features(lags, config.degree, std::span<double>(feat.data(), k));
    const double w = state.tau[static_cast<std::size_t>(state.alloc_d[js] - 1)];
    const double wy = w * state.x_at(i);
    for (std::size_t a = 0; a < k; ++a) {
      b(static_cast<long>(a)) += wy * feat[a];
      const double wfa = w * feat[a];
      for (std::size_t c = a; c < k; ++c) {
        A(static_cast<long>(a), static_cast<long>(c)) += wfa * feat[c];
      }
    }
  }
  for (std::size_t a = 0; a < k; ++a) {
    A(static_cast<long>(a), static_cast<long>(a)) += 1e-10;  // jitter
    for (std::size_t c = a + 1; c < k; ++c) {
      A(static_cast<long>(c), static_cast<long>(a)) = A(static_cast<long>(a), static_cast<long>(c));
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCode::singular_model,
         "update_theta: weighted design is rank deficient after jitter");
  }
  const Eigen::VectorXd mean = llt.solve(b);
  Eigen::VectorXd z(static_cast<long>(k));
  for (std::size_t a = 0; a < k; ++a) z(static_cast<long>(a)) = rng.normal(0.0, 1.0);
  const Eigen::VectorXd draw =
      mean + llt.matrixU().solve(z);  // A = U^T U, cov = A^{-1}
  if (!draw.allFinite()) {
    fail(ErrorCode::singular_model, "update_theta: non-finite coefficient draw");
  }
  state.theta.assign(draw.data(), draw.data() + k);
}

double latent_log_conditional(const ChainState& state, const GsbrConfig& config,
                              std::size_t slot, double x) {
  if (!config.trunc.contains(x)) return kNegInf;
  const long T = state.T;
  const int d = state.d;
  const long mtime = static_cast<long>(slot) - T - d + 1;  // time index of slot
  const long i_lo = std::max(mtime, -T + 1);
  const long i_hi = std::min(mtime + d, state.n());

  const auto xv = [&](long i) {
    return i == mtime ? x : state.x_at(i);
  };

  double sum = 0.0;
  std::array<double, 2> lags;
  for (long i = i_lo; i <= i_hi; ++i) {
    for (int l = 0; l < d; ++l) lags[static_cast<std::size_t>(l)] = xv(i - 1 - l);
    const double r = xv(i) - model_eval(state.theta, lags, config.degree);
    const double tau_i =
        state.tau[static_cast<std::size_t>(state.alloc_d[state.pair_index(i)] - 1)];
    sum += 0.5 * (std::log(tau_i) - kLog2Pi) - 0.5 * tau_i * r * r;
  }
  return sum;
}

AdaptState AdaptState::init(std::size_t n_coords, double scale0) {
  AdaptState a;
  a.scales.assign(n_coords, scale0);
  a.proposed.assign(n_coords, 0);
  a.accepted.assign(n_coords, 0);
  a.batch_proposed.assign(n_coords, 0);
  a.batch_accepted.assign(n_coords, 0);
  a.batch_index.assign(n_coords, 1);
  return a;
}

void update_latent(ChainState& state, const GsbrConfig& config, RngStream& rng,
                   AdaptState& adapt, bool adapting) {
  constexpr long kBatch = 50;
  const std::size_t n_coords = state.latent_x.size();
  for (std::size_t slot = 0; slot < n_coords; ++slot) {
    const double x_old = state.latent_x[slot];
    const double x_new = x_old + adapt.scales[slot] * rng.normal(0.0, 1.0);
    ++adapt.proposed[slot];
    ++adapt.batch_proposed[slot];
    bool accepted = false;
    if (config.trunc.contains(x_new)) {
      const double lp_old = latent_log_conditional(state, config, slot, x_old);
      const double lp_new = latent_log_conditional(state, config, slot, x_new);
      const double delta = lp_new - lp_old;
      if (delta >= 0.0 || std::log(rng.uniform01_pos()) < delta) {
        state.latent_x[slot] = x_new;
        accepted = true;
      }
    }
    if (accepted) {
      ++adapt.accepted[slot];
      ++adapt.batch_accepted[slot];
    }
    if (adapting && adapt.batch_proposed[slot] >= kBatch) {
      const double rate = static_cast<double>(adapt.batch_accepted[slot]) /
                          static_cast<double>(adapt.batch_proposed[slot]);
      const double step =
          std::min(0.25, 1.0 / std::sqrt(static_cast<double>(adapt.batch_index[slot])));
      double s = adapt.scales[slot] * std::exp(step * (rate - 0.44));
      s = std::min(std::max(s, 1e-10), config.trunc.width());
      adapt.scales[slot] = s;
      ++adapt.batch_index[slot];
      adapt.batch_proposed[slot] = 0;
      adapt.batch_accepted[slot] = 0;
    }
  }
}

void gibbs_sweep(ChainState& state, const GsbrConfig& config, RngStream& rng,
                 AdaptState& adapt, bool adapting) {
  update_alloc_pairs(state, config, rng);
  update_tau(state, config, rng);
  update_lambda(state, config, rng);
  update_theta(state, config, rng);
  update_latent(state, config, rng, adapt, adapting);
}

namespace {

PosteriorSample make_sample(const ChainState& state, long sweep_index) {
  PosteriorSample s;
  s.theta = state.theta;
  s.lambda = state.lambda;
  s.initial_point = {state.latent_x[0], state.latent_x[1]};
  s.intermediates.assign(state.latent_x.begin() + state.d, state.latent_x.end());
  s.sweep_index = sweep_index;
  return s;
}

ChainDiagnostics finalize_diagnostics(const AdaptState& adapt,
                                      const std::vector<PosteriorSample>& samples,
                                      int n_star_max) {
  ChainDiagnostics diag;
  diag.acceptance_rates.resize(adapt.scales.size());
  for (std::size_t i = 0; i < adapt.scales.size(); ++i) {
    diag.acceptance_rates[i] =
        adapt.proposed[i] > 0
            ? static_cast<double>(adapt.accepted[i]) / static_cast<double>(adapt.proposed[i])
            : 0.0;
  }
  diag.final_scales = adapt.scales;
  diag.n_star_max = n_star_max;
  diag.retained = static_cast<long>(samples.size());
  if (!samples.empty()) {
    double mn = samples[0].lambda, mx = samples[0].lambda, sum = 0.0, sum2 = 0.0;
    for (const auto& s : samples) {
      mn = std::min(mn, s.lambda);
      mx = std::max(mx, s.lambda);
      sum += s.lambda;
      sum2 += s.lambda * s.lambda;
    }
    const double n = static_cast<double>(samples.size());
    diag.lambda_mean = sum / n;
    const double var = std::max(0.0, sum2 / n - diag.lambda_mean * diag.lambda_mean);
    diag.lambda_sd = std::sqrt(var);
    diag.lambda_min = mn;
    diag.lambda_max = mx;
  }
  return diag;
}

RunResult run_loop(const GsbrConfig& config, std::span<const double> series,
                   ChainState& state, AdaptState& adapt, RngStream& rng,
                   long start_sweep, std::vector<PosteriorSample> samples,
                   int n_star_max, const CheckpointSink& sink,
                   long checkpoint_every) {
  for (long it = start_sweep + 1; it <= config.iters; ++it) {
    const bool adapting = config.adapt && it <= config.burn_in;
    gibbs_sweep(state, config, rng, adapt, adapting);
    for (int N : state.slice_N) n_star_max = std::max(n_star_max, N);
    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) {
      samples.push_back(make_sample(state, it));
    }
    if (sink && checkpoint_every > 0 &&
        (it % checkpoint_every == 0 || it == config.iters)) {
      ChainCheckpoint cp;
      cp.config = config;
      cp.series.assign(series.begin(), series.end());
      cp.rng_seed = rng.seed();
      cp.rng_stream = rng.stream_id();
      cp.rng_counter = rng.counter();
      cp.sweep_index = it;
      cp.state = state;
      cp.adapt = adapt;
      cp.samples = samples;
      cp.n_star_max = n_star_max;
      sink(cp);
    }
  }
  RunResult result;
  result.samples = std::move(samples);
  result.diagnostics = finalize_diagnostics(adapt, result.samples, n_star_max);
  return result;
}

}  // namespace

RunResult run_chain(const GsbrConfig& config, std::span<const double> series,
                    RngStream& rng, const CheckpointSink& sink,
                    long checkpoint_every) {
  config.validate();
  ChainState state = init_chain(config, series, rng);
  AdaptState adapt = AdaptState::init(state.latent_x.size(), config.proposal_scale0);
  return run_loop(config, series, state, adapt, rng, 0, {}, 1, sink,
                  checkpoint_every);
}

RunResult resume_chain(const ChainCheckpoint& checkpoint,
                       const CheckpointSink& sink, long checkpoint_every) {
  checkpoint.config.validate();
  ChainState state = checkpoint.state;
  AdaptState adapt = checkpoint.adapt;
  RngStream rng = RngStream::restore(checkpoint.rng_seed, checkpoint.rng_stream,
                                     checkpoint.rng_counter);
  return run_loop(checkpoint.config, checkpoint.series, state, adapt, rng,
                  checkpoint.sweep_index, checkpoint.samples,
                  checkpoint.n_star_max, sink, checkpoint_every);
}

Predictive posterior_predict(const ChainState& state, const GsbrConfig& config,
                             RngStream& rng, int horizon) {
  if (horizon < 0) {
    fail(ErrorCode::parameter, "posterior_predict: horizon must be >= 0");
  }
  const auto draw_noise = [&]() {
    std::int64_t k = sample_truncated_geometric(state.lambda, 1, rng);
    if (k > kMaxSliceN) k = kMaxSliceN;
    const double tau_k = static_cast<std::size_t>(k) <= state.tau.size()
                             ? state.tau[static_cast<std::size_t>(k - 1)]
                             : rng.gamma(config.b1, config.b2);
    return rng.normal(0.0, 1.0 / tau_k);
  };

  Predictive pred;
  pred.noise_draw = draw_noise();
  if (horizon == 0) return pred;

  std::array<double, 2> lags;
  state.lags_at(state.n() + 1, lags);
  pred.path.reserve(static_cast<std::size_t>(horizon));
  for (int j = 1; j <= horizon; ++j) {
    const double e = j == 1 ? pred.noise_draw : draw_noise();
    const double x = model_eval(state.theta, lags, config.degree) + e;
    pred.path.push_back(x);
    lags[1] = lags[0];
    lags[0] = x;
  }
  return pred;
}

}  // namespace smgsbr
