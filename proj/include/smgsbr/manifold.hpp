#ifndef SMGSBR_MANIFOLD_HPP
#define SMGSBR_MANIFOLD_HPP

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smgsbr/dynamics.hpp"
#include "smgsbr/gsbr.hpp"

namespace smgsbr {

// k stride-1 windows x_{j : n-k+j}, j = 1..k, each of length n-k+1.
struct WindowPlan {
  int k = 1;
  long window_len = 0;
  std::vector<long> offsets;  // 0-based start index of window j
};

WindowPlan sliding_windows(const TimeSeries& series, int k,
                           const GsbrConfig& config);

enum class CloudMode { sliding, multi };

struct CloudPoint {
  double x = 0.0;
  double y = 0.0;
  int source_id = 0;  // window index (sliding) or series index (multi), 1-based
  long sweep_index = 0;
};

// Union of posterior draws of the T-shifted initial point across sources.
struct ManifoldCloud {
  std::vector<CloudPoint> points;
  CloudMode mode = CloudMode::sliding;
  GsbrConfig config;
  std::uint64_t master_seed = 0;
  int n_sources = 0;
  std::vector<int> failed_sources;
  std::vector<std::string> failure_messages;
};

struct ParallelOptions {
  int jobs = 0;  // 0 = hardware concurrency
};

// One chain per window, stream_id = window index; failures are recorded and
// skipped unless they exceed 10% of the sources.
ManifoldCloud approximate_manifold_sliding(const TimeSeries& series, int k,
                                           const GsbrConfig& config,
                                           std::uint64_t master_seed,
                                           const ParallelOptions& par = {});

ManifoldCloud approximate_manifold_multi(std::span<const TimeSeries> series_list,
                                         const GsbrConfig& config,
                                         std::uint64_t master_seed,
                                         const ParallelOptions& par = {});

// Occupancy grid of a cloud over `bounds`. counts is row-major with row 0 at
// ylo (rows index y upward, columns index x rightward); `total` counts every
// cloud point, in or out of bounds.
struct HpdrGrid {
  Rect bounds;
  int cols = 0;
  int rows = 0;
  std::vector<long> counts;
  long total = 0;

  long in_bounds() const noexcept {
    long s = 0;
    for (long c : counts) s += c;
    return s;
  }
};

HpdrGrid hpdr_grid(const ManifoldCloud& cloud, const Rect& bounds, int cols,
                   int rows);

struct CloudMetrics {
  double median_dist = 0.0;
  double p95_dist = 0.0;
  double max_dist = 0.0;
  double coverage = 0.0;      // share of cloud points within tol of the truth
  double truth_recall = 0.0;  // share of truth vertices within tol of the cloud
  std::size_t n_cloud = 0;
  std::size_t n_truth = 0;
  double tol = 0.0;
};

// Distances are point-to-segment against the polyline; consecutive vertices
// are joined into a segment only when they share a depth tag and are no
// farther apart than max_segment_gap (strand breaks from window clipping
// would otherwise bridge unrelated pieces of the manifold).
CloudMetrics cloud_metrics(std::span<const CloudPoint> cloud,
                           const Polyline& truth, double tol,
                           double max_segment_gap = 0.05);

struct PrincipalDirection {
  Vec2 direction{};      // unit vector, oriented into [0, 180) degrees
  double angle_deg = 0.0;
};

// Major axis of the sample covariance. Degenerate clouds (zero covariance or
// eigenvalue gap below 1e-12 relative to total variance) are rejected.
PrincipalDirection principal_direction(std::span<const Vec2> points);

// Helpers over clouds.
std::vector<Vec2> cloud_source_points(const ManifoldCloud& cloud, int source_id);
// Mean over sources of the major-axis standard deviation of that source's
// posterior initial points (sources with < 3 points are skipped).
double mean_major_axis_spread(const ManifoldCloud& cloud);

}  // namespace smgsbr

#endif  // SMGSBR_MANIFOLD_HPP
