#include "smgsbr/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace smgsbr {

using nlohmann::json;

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc()) {
    fail(ErrorCode::io_failure, "could not parse number: '" + s + "'");
  }
  return v;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_failure, "cannot open for writing: " + path);
  out << contents;
  if (!out) fail(ErrorCode::io_failure, "write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_failure, "cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json_file(const json& j, const std::string& path) {
  write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::io_failure, path + ": " + e.what());
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_failure, "cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

nlohmann::json map_to_json(const MapSpec& map) {
  json j;
  j["delay"] = map.delay;
  j["degree"] = map.degree;
  j["coeffs"] = map.coeffs;
  j["preset"] = map.preset_name;
  return j;
}

MapSpec map_from_json(const json& j) {
  MapSpec m;
  m.delay = j.at("delay").get<int>();
  m.degree = j.at("degree").get<int>();
  m.coeffs = j.at("coeffs").get<std::vector<double>>();
  m.preset_name = j.value("preset", "");
  m.validate();
  return m;
}

nlohmann::json noise_to_json(const NoiseSpec& noise) {
  json arr = json::array();
  for (const auto& c : noise.components) {
    arr.push_back({{"weight", c.weight}, {"variance", c.variance}});
  }
  return arr;
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec n;
  for (const auto& c : j) {
    n.components.push_back(
        {c.at("weight").get<double>(), c.at("variance").get<double>()});
  }
  n.validate();
  return n;
}

void write_series_csv(const TimeSeries& series, const std::string& path) {
  std::string out = "x\n";
  for (double v : series.values) {
    out += format_double(v);
    out += '\n';
  }
  write_text_file(path, out);
}

void write_series_meta(const TimeSeries& series, const std::string& path) {
  json j;
  j["map"] = map_to_json(series.meta.map);
  j["noise"] = noise_to_json(series.meta.noise);
  j["x0"] = series.meta.x0;
  j["seed"] = series.meta.seed;
  j["n"] = series.values.size();
  j["escape_bound"] = series.meta.escape_bound;
  write_json_file(j, path);
}

TimeSeries read_series_csv(const std::string& csv_path,
                           const std::string& meta_path) {
  const auto lines = read_lines(csv_path);
  if (lines.empty() || lines[0] != "x") {
    fail(ErrorCode::io_failure, csv_path + ": expected header 'x'");
  }
  TimeSeries ts;
  ts.values.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    ts.values.push_back(parse_double(lines[i]));
  }
  if (!meta_path.empty()) {
    const json j = read_json_file(meta_path);
    ts.meta.map = map_from_json(j.at("map"));
    ts.meta.noise = noise_from_json(j.at("noise"));
    ts.meta.x0 = j.at("x0").get<std::vector<double>>();
    ts.meta.seed = j.at("seed").get<std::uint64_t>();
    ts.meta.escape_bound = j.value("escape_bound", 1e6);
  }
  return ts;
}

void write_polyline_csv(const Polyline& line, const std::string& path) {
  std::string out = "x,y,depth\n";
  for (const auto& p : line.points) {
    out += format_double(p.x);
    out += ',';
    out += format_double(p.y);
    out += ',';
    out += std::to_string(p.depth);
    out += '\n';
  }
  write_text_file(path, out);
}

Polyline read_polyline_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "x,y,depth") {
    fail(ErrorCode::io_failure, path + ": expected header 'x,y,depth'");
  }
  Polyline line;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 3) fail(ErrorCode::io_failure, path + ": malformed row");
    line.points.push_back({parse_double(f[0]), parse_double(f[1]),
                           static_cast<int>(parse_double(f[2]))});
  }
  return line;
}

void write_cloud_csv(const ManifoldCloud& cloud, const std::string& path) {
  std::string out = "x,y,source_id,sweep_index\n";
  for (const auto& p : cloud.points) {
    out += format_double(p.x);
    out += ',';
    out += format_double(p.y);
    out += ',';
    out += std::to_string(p.source_id);
    out += ',';
    out += std::to_string(p.sweep_index);
    out += '\n';
  }
  write_text_file(path, out);
}

ManifoldCloud read_cloud_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "x,y,source_id,sweep_index") {
    fail(ErrorCode::io_failure,
         path + ": expected header 'x,y,source_id,sweep_index'");
  }
  ManifoldCloud cloud;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 4) fail(ErrorCode::io_failure, path + ": malformed row");
    cloud.points.push_back({parse_double(f[0]), parse_double(f[1]),
                            static_cast<int>(parse_double(f[2])),
                            static_cast<long>(parse_double(f[3]))});
  }
  return cloud;
}

void write_grid_csv(const HpdrGrid& grid, const std::string& path) {
  std::string out;
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (c > 0) out += ',';
      out += std::to_string(
          grid.counts[static_cast<std::size_t>(r) * grid.cols + c]);
    }
    out += '\n';
  }
  write_text_file(path, out);
}

void write_grid_header(const HpdrGrid& grid, const std::string& path) {
  json j;
  j["bounds"] = {{"xlo", grid.bounds.xlo},
                 {"xhi", grid.bounds.xhi},
                 {"ylo", grid.bounds.ylo},
                 {"yhi", grid.bounds.yhi}};
  j["resolution"] = {{"cols", grid.cols}, {"rows", grid.rows}};
  j["total"] = grid.total;
  j["in_bounds"] = grid.in_bounds();
  j["row0"] = "ylo";
  write_json_file(j, path);
}

void write_metrics_json(const CloudMetrics& m, const std::string& path) {
  json j;
  j["median_dist"] = m.median_dist;
  j["p95_dist"] = m.p95_dist;
  j["max_dist"] = m.max_dist;
  j["coverage"] = m.coverage;
  j["truth_recall"] = m.truth_recall;
  j["n_cloud"] = m.n_cloud;
  j["n_truth_vertices"] = m.n_truth;
  j["tol"] = m.tol;
  write_json_file(j, path);
}

nlohmann::json config_to_json(const GsbrConfig& config) {
  json j;
  j["T"] = config.T;
  j["delay"] = config.delay;
  j["degree"] = config.degree;
  j["trunc"] = {config.trunc.lo, config.trunc.hi};
  j["alpha"] = config.alpha;
  j["beta"] = config.beta;
  j["b1"] = config.b1;
  j["b2"] = config.b2;
  j["iters"] = config.iters;
  j["burn_in"] = config.burn_in;
  j["thin"] = config.thin;
  j["proposal_scale0"] = config.proposal_scale0;
  j["adapt"] = config.adapt;
  return j;
}

GsbrConfig config_from_json(const json& j) {
  GsbrConfig c;
  c.T = j.at("T").get<int>();
  c.delay = j.value("delay", 2);
  c.degree = j.at("degree").get<int>();
  const auto tr = j.at("trunc");
  c.trunc = {tr.at(0).get<double>(), tr.at(1).get<double>()};
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.b1 = j.at("b1").get<double>();
  c.b2 = j.at("b2").get<double>();
  c.iters = j.at("iters").get<long>();
  c.burn_in = j.at("burn_in").get<long>();
  c.thin = j.at("thin").get<long>();
  c.proposal_scale0 = j.at("proposal_scale0").get<double>();
  c.adapt = j.at("adapt").get<bool>();
  c.validate();
  return c;
}

namespace {

json sample_to_json(const PosteriorSample& s) {
  json j;
  j["theta"] = s.theta;
  j["lambda"] = s.lambda;
  j["initial_point"] = {s.initial_point[0], s.initial_point[1]};
  j["intermediates"] = s.intermediates;
  j["sweep_index"] = s.sweep_index;
  return j;
}

PosteriorSample sample_from_json(const json& j) {
  PosteriorSample s;
  s.theta = j.at("theta").get<std::vector<double>>();
  s.lambda = j.at("lambda").get<double>();
  s.initial_point = {j.at("initial_point").at(0).get<double>(),
                     j.at("initial_point").at(1).get<double>()};
  s.intermediates = j.at("intermediates").get<std::vector<double>>();
  s.sweep_index = j.at("sweep_index").get<long>();
  return s;
}

json diagnostics_to_json(const ChainDiagnostics& d) {
  json j;
  j["acceptance_rates"] = d.acceptance_rates;
  j["final_scales"] = d.final_scales;
  j["n_star_max"] = d.n_star_max;
  j["lambda"] = {{"mean", d.lambda_mean},
                 {"sd", d.lambda_sd},
                 {"min", d.lambda_min},
                 {"max", d.lambda_max}};
  j["retained"] = d.retained;
  return j;
}

}  // namespace

void write_samples_json(const GsbrConfig& config, const RunResult& result,
                        const std::string& path) {
  json j;
  j["config"] = config_to_json(config);
  json arr = json::array();
  for (const auto& s : result.samples) arr.push_back(sample_to_json(s));
  j["samples"] = std::move(arr);
  j["diagnostics"] = diagnostics_to_json(result.diagnostics);
  write_json_file(j, path);
}

void save_checkpoint(const ChainCheckpoint& cp, const std::string& path) {
  json j;
  j["format"] = "smgsbr-checkpoint-v1";
  j["config"] = config_to_json(cp.config);
  j["series"] = cp.series;
  j["rng"] = {{"seed", cp.rng_seed},
              {"stream_id", cp.rng_stream},
              {"counter", cp.rng_counter}};
  j["sweep_index"] = cp.sweep_index;
  json st;
  st["T"] = cp.state.T;
  st["d"] = cp.state.d;
  st["lambda"] = cp.state.lambda;
  st["tau"] = cp.state.tau;
  st["alloc_d"] = cp.state.alloc_d;
  st["slice_N"] = cp.state.slice_N;
  st["theta"] = cp.state.theta;
  st["latent_x"] = cp.state.latent_x;
  j["state"] = std::move(st);
  json ad;
  ad["scales"] = cp.adapt.scales;
  ad["proposed"] = cp.adapt.proposed;
  ad["accepted"] = cp.adapt.accepted;
  ad["batch_proposed"] = cp.adapt.batch_proposed;
  ad["batch_accepted"] = cp.adapt.batch_accepted;
  ad["batch_index"] = cp.adapt.batch_index;
  j["adapt"] = std::move(ad);
  json arr = json::array();
  for (const auto& s : cp.samples) arr.push_back(sample_to_json(s));
  j["samples"] = std::move(arr);
  j["n_star_max"] = cp.n_star_max;
  write_json_file(j, path);
}

ChainCheckpoint load_checkpoint(const std::string& path) {
  const json j = read_json_file(path);
  if (j.value("format", "") != "smgsbr-checkpoint-v1") {
    fail(ErrorCode::io_failure, path + ": not a checkpoint file");
  }
  ChainCheckpoint cp;
  cp.config = config_from_json(j.at("config"));
  cp.series = j.at("series").get<std::vector<double>>();
  cp.rng_seed = j.at("rng").at("seed").get<std::uint64_t>();
  cp.rng_stream = j.at("rng").at("stream_id").get<std::uint64_t>();
  cp.rng_counter = j.at("rng").at("counter").get<std::uint64_t>();
  cp.sweep_index = j.at("sweep_index").get<long>();
  const json& st = j.at("state");
  cp.state.T = st.at("T").get<int>();
  cp.state.d = st.at("d").get<int>();
  cp.state.lambda = st.at("lambda").get<double>();
  cp.state.tau = st.at("tau").get<std::vector<double>>();
  cp.state.alloc_d = st.at("alloc_d").get<std::vector<int>>();
  cp.state.slice_N = st.at("slice_N").get<std::vector<int>>();
  cp.state.theta = st.at("theta").get<std::vector<double>>();
  cp.state.latent_x = st.at("latent_x").get<std::vector<double>>();
  cp.state.obs_x = cp.series;
  const json& ad = j.at("adapt");
  cp.adapt.scales = ad.at("scales").get<std::vector<double>>();
  cp.adapt.proposed = ad.at("proposed").get<std::vector<long>>();
  cp.adapt.accepted = ad.at("accepted").get<std::vector<long>>();
  cp.adapt.batch_proposed = ad.at("batch_proposed").get<std::vector<long>>();
  cp.adapt.batch_accepted = ad.at("batch_accepted").get<std::vector<long>>();
  cp.adapt.batch_index = ad.at("batch_index").get<std::vector<long>>();
  for (const auto& s : j.at("samples")) cp.samples.push_back(sample_from_json(s));
  cp.n_star_max = j.at("n_star_max").get<int>();
  return cp;
}

}  // namespace smgsbr
