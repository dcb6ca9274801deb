#ifndef SMGSBR_IO_HPP
#define SMGSBR_IO_HPP

#include <string>

#include "smgsbr/dynamics.hpp"
#include "smgsbr/gsbr.hpp"
#include "smgsbr/manifold.hpp"

#include "json.hpp"

namespace smgsbr {

// Doubles in CSV are written with std::to_chars (shortest representation
// that round-trips), so files are locale-independent and re-runs reproduce
// byte-identical output.
std::string format_double(double v);
double parse_double(const std::string& s);

// TimeSeries: CSV with header `x`, one value per row, plus a JSON sidecar
// with the provenance record.
void write_series_csv(const TimeSeries& series, const std::string& path);
void write_series_meta(const TimeSeries& series, const std::string& path);
TimeSeries read_series_csv(const std::string& csv_path,
                           const std::string& meta_path = "");

// Polyline: CSV with columns x,y,depth.
void write_polyline_csv(const Polyline& line, const std::string& path);
Polyline read_polyline_csv(const std::string& path);

// ManifoldCloud: CSV with columns x,y,source_id,sweep_index.
void write_cloud_csv(const ManifoldCloud& cloud, const std::string& path);
ManifoldCloud read_cloud_csv(const std::string& path);

// HpdrGrid: CSV count matrix (row 0 = ylo) plus a JSON header.
void write_grid_csv(const HpdrGrid& grid, const std::string& path);
void write_grid_header(const HpdrGrid& grid, const std::string& path);

void write_metrics_json(const CloudMetrics& metrics, const std::string& path);

// Posterior samples (reconstruct output): config block, per-sample records,
// diagnostics block.
void write_samples_json(const GsbrConfig& config, const RunResult& result,
                        const std::string& path);

// Chain checkpoints restore continuation bit-exactly (RNG counter included).
void save_checkpoint(const ChainCheckpoint& checkpoint, const std::string& path);
ChainCheckpoint load_checkpoint(const std::string& path);

nlohmann::json config_to_json(const GsbrConfig& config);
GsbrConfig config_from_json(const nlohmann::json& j);
nlohmann::json map_to_json(const MapSpec& map);
MapSpec map_from_json(const nlohmann::json& j);
nlohmann::json noise_to_json(const NoiseSpec& noise);
NoiseSpec noise_from_json(const nlohmann::json& j);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::string& path);

}  // namespace smgsbr

#endif  // SMGSBR_IO_HPP
