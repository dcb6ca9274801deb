#include "smgsbr/manifold.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace smgsbr {

WindowPlan sliding_windows(const TimeSeries& series, int k,
                           const GsbrConfig& config) {
  if (k < 1) fail(ErrorCode::parameter, "sliding_windows: k must be >= 1");
  const long n = static_cast<long>(series.n());
  const long window_len = n - k + 1;
  const long min_len = static_cast<long>(config.basis_size()) + 1;
  if (window_len < min_len) {
    fail(ErrorCode::window_length,
         "sliding_windows: window length " + std::to_string(window_len) +
             " is below the minimum " + std::to_string(min_len));
  }
  WindowPlan plan;
  plan.k = k;
  plan.window_len = window_len;
  plan.offsets.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) plan.offsets[static_cast<std::size_t>(j)] = j;
  return plan;
}

namespace {

struct SourceResult {
  std::vector<PosteriorSample> samples;
  bool failed = false;
  std::string message;
};

// Runs one chain per source on a bounded pool; the merge is ordered by
// source index, so the cloud is independent of scheduling.
ManifoldCloud run_sources(
    int n_sources, CloudMode mode, const GsbrConfig& config,
    std::uint64_t master_seed, const ParallelOptions& par,
    const std::function<std::span<const double>(int)>& source_series) {
  std::vector<SourceResult> results(static_cast<std::size_t>(n_sources));
  std::atomic<int> next{0};
  int jobs = par.jobs > 0 ? par.jobs
                          : static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min(jobs, n_sources);

  const auto worker = [&]() {
    for (;;) {
      const int j = next.fetch_add(1);
      if (j >= n_sources) return;
      SourceResult& out = results[static_cast<std::size_t>(j)];
      try {
        RngStream rng(master_seed, static_cast<std::uint64_t>(j + 1));
        RunResult run = run_chain(config, source_series(j), rng);
        out.samples = std::move(run.samples);
      } catch (const std::exception& e) {
        out.failed = true;
        out.message = e.what();
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ManifoldCloud cloud;
  cloud.mode = mode;
  cloud.config = config;
  cloud.master_seed = master_seed;
  cloud.n_sources = n_sources;
  int failures = 0;
  for (int j = 0; j < n_sources; ++j) {
    const SourceResult& r = results[static_cast<std::size_t>(j)];
    if (r.failed) {
      ++failures;
      cloud.failed_sources.push_back(j + 1);
      cloud.failure_messages.push_back(r.message);
      continue;
    }
    for (const PosteriorSample& s : r.samples) {
      cloud.points.push_back(
          {s.initial_point[0], s.initial_point[1], j + 1, s.sweep_index});
    }
  }
  if (failures * 10 > n_sources) {
    fail(ErrorCode::chain_failure,
         "manifold: " + std::to_string(failures) + " of " +
             std::to_string(n_sources) + " source chains failed");
  }
  return cloud;
}

}  // namespace

ManifoldCloud approximate_manifold_sliding(const TimeSeries& series, int k,
                                           const GsbrConfig& config,
                                           std::uint64_t master_seed,
                                           const ParallelOptions& par) {
  const WindowPlan plan = sliding_windows(series, k, config);
  return run_sources(
      plan.k, CloudMode::sliding, config, master_seed, par, [&](int j) {
        return std::span<const double>(
            series.values.data() + plan.offsets[static_cast<std::size_t>(j)],
            static_cast<std::size_t>(plan.window_len));
      });
}

ManifoldCloud approximate_manifold_multi(std::span<const TimeSeries> series_list,
                                         const GsbrConfig& config,
                                         std::uint64_t master_seed,
                                         const ParallelOptions& par) {
  if (series_list.empty()) {
    fail(ErrorCode::parameter, "manifold: need at least one series");
  }
  const std::size_t n0 = series_list.front().n();
  for (const TimeSeries& s : series_list) {
    if (s.n() != n0) {
      fail(ErrorCode::parameter, "manifold: series must have equal length");
    }
  }
  return run_sources(static_cast<int>(series_list.size()), CloudMode::multi,
                     config, master_seed, par, [&](int j) {
                       const auto& v =
                           series_list[static_cast<std::size_t>(j)].values;
                       return std::span<const double>(v.data(), v.size());
                     });
}

HpdrGrid hpdr_grid(const ManifoldCloud& cloud, const Rect& bounds, int cols,
                   int rows) {
  if (cols < 1 || rows < 1) {
    fail(ErrorCode::parameter, "hpdr_grid: resolution must be at least 1x1");
  }
  if (!(bounds.xlo < bounds.xhi) || !(bounds.ylo < bounds.yhi)) {
    fail(ErrorCode::parameter, "hpdr_grid: degenerate bounds");
  }
  HpdrGrid grid;
  grid.bounds = bounds;
  grid.cols = cols;
  grid.rows = rows;
  grid.counts.assign(static_cast<std::size_t>(cols) * rows, 0);
  grid.total = static_cast<long>(cloud.points.size());
  const double wx = (bounds.xhi - bounds.xlo) / cols;
  const double wy = (bounds.yhi - bounds.ylo) / rows;
  for (const CloudPoint& p : cloud.points) {
    if (!bounds.contains(p.x, p.y)) continue;
    int cx = static_cast<int>((p.x - bounds.xlo) / wx);
    int cy = static_cast<int>((p.y - bounds.ylo) / wy);
    cx = std::min(cx, cols - 1);  // points on the max edge bin into the last cell
    cy = std::min(cy, rows - 1);
    ++grid.counts[static_cast<std::size_t>(cy) * cols + cx];
  }
  return grid;
}

namespace {

struct Segment {
  double ax, ay, bx, by;
};

double point_segment_dist2(double px, double py, const Segment& s) {
  const double dx = s.bx - s.ax;
  const double dy = s.by - s.ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((px - s.ax) * dx + (py - s.ay) * dy) / len2;
    t = std::min(1.0, std::max(0.0, t));
  }
  const double qx = s.ax + t * dx - px;
  const double qy = s.ay + t * dy - py;
  return qx * qx + qy * qy;
}

// Uniform hash grid over segment midpoints, queried in expanding rings.
// All segments are short (<= max gap), so midpoint distance minus half the
// segment length lower-bounds the true distance and the search stays exact.
class SegmentIndex {
public:
  SegmentIndex(std::vector<Segment> segs, double cell)
      : segs_(std::move(segs)), cell_(cell) {
    half_len_max_ = 0.0;
    for (const Segment& s : segs_) {
      const double hl = 0.5 * std::hypot(s.bx - s.ax, s.by - s.ay);
      half_len_max_ = std::max(half_len_max_, hl);
    }
    for (std::size_t i = 0; i < segs_.size(); ++i) {
      const auto [cx, cy] = cell_of(mid_x(segs_[i]), mid_y(segs_[i]));
      min_cx_ = std::min(min_cx_, cx);
      max_cx_ = std::max(max_cx_, cx);
      min_cy_ = std::min(min_cy_, cy);
      max_cy_ = std::max(max_cy_, cy);
      cells_[key(cx, cy)].push_back(i);
    }
  }

  double min_dist(double px, double py) const {
    const auto [cx, cy] = cell_of(px, py);
    // ring at which the whole occupied bounding box has been visited
    const int ring_limit =
        std::max({std::abs(cx - min_cx_), std::abs(cx - max_cx_),
                  std::abs(cy - min_cy_), std::abs(cy - max_cy_)}) + 1;
    double best2 = std::numeric_limits<double>::infinity();
    for (int ring = 0; ring <= ring_limit; ++ring) {
      // segments with midpoints in this ring or beyond are at least
      // (ring-1)*cell - max half-length away; stop once that beats best
      if (ring > 0 && std::isfinite(best2)) {
        const double ring_min = (ring - 1) * cell_ - half_len_max_;
        if (ring_min > 0.0 && ring_min * ring_min >= best2) break;
      }
      scan_ring(cx, cy, ring, px, py, best2);
    }
    return std::sqrt(best2);
  }

private:
  static double mid_x(const Segment& s) { return 0.5 * (s.ax + s.bx); }
  static double mid_y(const Segment& s) { return 0.5 * (s.ay + s.by); }

  std::pair<int, int> cell_of(double x, double y) const {
    return {static_cast<int>(std::floor(x / cell_)),
            static_cast<int>(std::floor(y / cell_))};
  }
  static long long key(int cx, int cy) {
    return (static_cast<long long>(cx) << 32) ^ (static_cast<unsigned>(cy));
  }

  void scan_ring(int cx, int cy, int ring, double px, double py,
                 double& best2) const {
    const auto visit = [&](int gx, int gy) {
      const auto it = cells_.find(key(gx, gy));
      if (it == cells_.end()) return;
      for (std::size_t i : it->second) {
        best2 = std::min(best2, point_segment_dist2(px, py, segs_[i]));
      }
    };
    if (ring == 0) {
      visit(cx, cy);
      return;
    }
    for (int gx = cx - ring; gx <= cx + ring; ++gx) {
      visit(gx, cy - ring);
      visit(gx, cy + ring);
    }
    for (int gy = cy - ring + 1; gy <= cy + ring - 1; ++gy) {
      visit(cx - ring, gy);
      visit(cx + ring, gy);
    }
  }

  std::vector<Segment> segs_;
  double cell_;
  double half_len_max_;
  int min_cx_ = 0, max_cx_ = 0, min_cy_ = 0, max_cy_ = 0;
  std::unordered_map<long long, std::vector<std::size_t>> cells_;
};

std::vector<Segment> polyline_segments(const Polyline& truth,
                                       double max_segment_gap) {
  std::vector<Segment> segs;
  segs.reserve(truth.points.size());
  for (std::size_t i = 0; i < truth.points.size(); ++i) {
    const auto& p = truth.points[i];
    segs.push_back({p.x, p.y, p.x, p.y});  // vertices count even when isolated
    if (i + 1 < truth.points.size()) {
      const auto& q = truth.points[i + 1];
      if (q.depth == p.depth &&
          std::hypot(q.x - p.x, q.y - p.y) <= max_segment_gap) {
        segs.push_back({p.x, p.y, q.x, q.y});
      }
    }
  }
  return segs;
}

}  // namespace

CloudMetrics cloud_metrics(std::span<const CloudPoint> cloud,
                           const Polyline& truth, double tol,
                           double max_segment_gap) {
  if (cloud.empty() || truth.empty()) {
    fail(ErrorCode::parameter, "cloud_metrics: cloud and truth must be non-empty");
  }
  if (!(tol > 0.0)) fail(ErrorCode::parameter, "cloud_metrics: tol must be positive");

  std::vector<Segment> segs = polyline_segments(truth, max_segment_gap);
  const double cell = std::max(max_segment_gap, 1e-6);
  SegmentIndex index(std::move(segs), cell);

  std::vector<double> dists;
  dists.reserve(cloud.size());
  std::size_t covered = 0;
  for (const CloudPoint& p : cloud) {
    const double d = index.min_dist(p.x, p.y);
    dists.push_back(d);
    if (d <= tol) ++covered;
  }

  // directed truth -> cloud: nearest cloud point within tol?
  struct PtIndexCell {
    std::vector<std::size_t> idx;
  };
  std::unordered_map<long long, PtIndexCell> pt_cells;
  const double pcell = std::max(tol, 1e-9);
  const auto pkey = [&](double x, double y) {
    const int cx = static_cast<int>(std::floor(x / pcell));
    const int cy = static_cast<int>(std::floor(y / pcell));
    return (static_cast<long long>(cx) << 32) ^ (static_cast<unsigned>(cy));
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    pt_cells[pkey(cloud[i].x, cloud[i].y)].idx.push_back(i);
  }
  std::size_t recalled = 0;
  for (const auto& v : truth.points) {
    const int cx = static_cast<int>(std::floor(v.x / pcell));
    const int cy = static_cast<int>(std::floor(v.y / pcell));
    bool hit = false;
    for (int gx = cx - 1; gx <= cx + 1 && !hit; ++gx) {
      for (int gy = cy - 1; gy <= cy + 1 && !hit; ++gy) {
        const auto it =
            pt_cells.find((static_cast<long long>(gx) << 32) ^ (static_cast<unsigned>(gy)));
        if (it == pt_cells.end()) continue;
        for (std::size_t i : it->second.idx) {
          const double dx = cloud[i].x - v.x;
          const double dy = cloud[i].y - v.y;
          if (dx * dx + dy * dy <= tol * tol) {
            hit = true;
            break;
          }
        }
      }
    }
    if (hit) ++recalled;
  }

  CloudMetrics m;
  m.n_cloud = cloud.size();
  m.n_truth = truth.points.size();
  m.tol = tol;
  m.coverage = static_cast<double>(covered) / static_cast<double>(cloud.size());
  m.truth_recall =
      static_cast<double>(recalled) / static_cast<double>(truth.points.size());

  std::vector<double> sorted = dists;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  m.median_dist = n % 2 == 1 ? sorted[n / 2]
                             : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  const std::size_t i95 =
      std::min(n - 1, static_cast<std::size_t>(std::ceil(0.95 * n)) - 1);
  m.p95_dist = sorted[i95];
  m.max_dist = sorted.back();
  return m;
}

PrincipalDirection principal_direction(std::span<const Vec2> points) {
  if (points.size() < 3) {
    fail(ErrorCode::parameter, "principal_direction: need at least 3 points");
  }
  double mx = 0.0, my = 0.0;
  for (const Vec2& p : points) {
    mx += p[0];
    my += p[1];
  }
  const double n = static_cast<double>(points.size());
  mx /= n;
  my /= n;
  double cxx = 0.0, cxy = 0.0, cyy = 0.0;
  for (const Vec2& p : points) {
    const double dx = p[0] - mx;
    const double dy = p[1] - my;
    cxx += dx * dx;
    cxy += dx * dy;
    cyy += dy * dy;
  }
  cxx /= n;
  cxy /= n;
  cyy /= n;
  const double tr = cxx + cyy;
  if (!(tr > 0.0)) {
    fail(ErrorCode::degenerate_cloud, "principal_direction: zero covariance");
  }
  const double disc = std::sqrt((cxx - cyy) * (cxx - cyy) + 4.0 * cxy * cxy);
  const double l_max = 0.5 * (tr + disc);
  const double l_min = 0.5 * (tr - disc);
  if (disc < 1e-12 * std::max(1.0, tr)) {
    fail(ErrorCode::degenerate_cloud,
         "principal_direction: eigenvalue gap below tie-break threshold");
  }
  (void)l_min;
  // Eigenvector for l_max; pick the better-conditioned expression.
  double vx, vy;
  if (std::abs(l_max - cxx) >= std::abs(l_max - cyy)) {
    vx = cxy;
    vy = l_max - cxx;
  } else {
    vx = l_max - cyy;
    vy = cxy;
  }
  if (vx == 0.0 && vy == 0.0) {  // diagonal covariance
    if (cxx >= cyy) {
      vx = 1.0;
      vy = 0.0;
    } else {
      vx = 0.0;
      vy = 1.0;
    }
  }
  const double norm = std::hypot(vx, vy);
  vx /= norm;
  vy /= norm;
  if (vy < 0.0 || (vy == 0.0 && vx < 0.0)) {
    vx = -vx;
    vy = -vy;
  }
  PrincipalDirection out;
  out.direction = {vx, vy};
  double ang = std::atan2(vy, vx) * 180.0 / 3.14159265358979323846;
  if (ang < 0.0) ang += 180.0;
  if (ang >= 180.0) ang -= 180.0;
  out.angle_deg = ang;
  return out;
}

std::vector<Vec2> cloud_source_points(const ManifoldCloud& cloud, int source_id) {
  std::vector<Vec2> pts;
  for (const CloudPoint& p : cloud.points) {
    if (p.source_id == source_id) pts.push_back({p.x, p.y});
  }
  return pts;
}

double mean_major_axis_spread(const ManifoldCloud& cloud) {
  std::unordered_map<int, std::vector<Vec2>> by_source;
  for (const CloudPoint& p : cloud.points) {
    by_source[p.source_id].push_back({p.x, p.y});
  }
  double sum = 0.0;
  int used = 0;
  for (const auto& [sid, pts] : by_source) {
    if (pts.size() < 3) continue;
    double mx = 0.0, my = 0.0;
    for (const Vec2& p : pts) {
      mx += p[0];
      my += p[1];
    }
    const double n = static_cast<double>(pts.size());
    mx /= n;
    my /= n;
    double cxx = 0.0, cxy = 0.0, cyy = 0.0;
    for (const Vec2& p : pts) {
      const double dx = p[0] - mx;
      const double dy = p[1] - my;
      cxx += dx * dx;
      cxy += dx * dy;
      cyy += dy * dy;
    }
    cxx /= n;
    cxy /= n;
    cyy /= n;
    const double disc = std::sqrt((cxx - cyy) * (cxx - cyy) + 4.0 * cxy * cxy);
    sum += std::sqrt(std::max(0.0, 0.5 * (cxx + cyy + disc)));
    ++used;
  }
  if (used == 0) {
    fail(ErrorCode::degenerate_cloud, "mean_major_axis_spread: no usable source");
  }
  return sum / used;
}

}  // namespace smgsbr
