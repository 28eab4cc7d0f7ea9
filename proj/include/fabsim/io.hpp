#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fabsim/constitutive.hpp"
#include "fabsim/pinn.hpp"
#include "fabsim/scenario.hpp"
#include "fabsim/simulator.hpp"

namespace fabsim {

// First line of every file written by the toolkit (a comment line in PLY).
inline constexpr std::string_view kFormatHeader = "# fabsim-r2s v1";

// Shortest 17-significant-digit text, independent of the C locale.
std::string format_double(double v);
// Whole-token parse; throws ParseError with `line` on garbage or non-finite.
double parse_double(std::string_view text, std::size_t line);

// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

// Point cloud sequences: CSV `frame,point_id,x,y,z`, frames contiguous from 0
// and points contiguous from 0 within a frame. A `# frame_rate <hz>` comment
// records uniform frame times k / rate; without it frame k sits at t = k.
std::string format_pointcloud_sequence(const PointCloudSequence& seq);
PointCloudSequence parse_pointcloud_sequence(std::string_view text);
void write_pointcloud_sequence(const std::filesystem::path& path, const PointCloudSequence& seq);
PointCloudSequence read_pointcloud_sequence(const std::filesystem::path& path);

// ASCII PLY 1.0, one `vertex` element with float64 x y z.
std::string format_ply(const PointCloud& cloud);
PointCloud parse_ply(std::string_view text);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);
// frame_0000.ply, frame_0001.ply, ... under `dir`; returns the paths.
std::vector<std::filesystem::path> write_ply_frames(const std::filesystem::path& dir, const PointCloudSequence& seq);

// Marker CSV `frame,t,marker_id,X,Y,ux,uy`. Rows may come in any order;
// marker ids are sorted ascending into dataset order.
std::string format_marker_dataset(const MarkerDataset& data);
MarkerDataset parse_marker_dataset(std::string_view text);
void write_marker_dataset(const std::filesystem::path& path, const MarkerDataset& data);
MarkerDataset read_marker_dataset(const std::filesystem::path& path);

// Gripper log: JSON array of {t, handle, position: [x, y, z]}, t
// non-decreasing per handle. Repeated times keep the last sample.
using TrajectoryLog = std::map<std::string, std::vector<Keyframe>, std::less<>>;
TrajectoryLog parse_trajectory(std::string_view text);
TrajectoryLog read_trajectory(const std::filesystem::path& path);
std::string format_trajectory(const TrajectoryLog& log);
void write_trajectory(const std::filesystem::path& path, const TrajectoryLog& log);
// Replaces the scenario's handles by the logged ones.
void apply_trajectory(Scenario& scenario, const TrajectoryLog& log);

// JSON documents with the format header as a leading comment line.
nlohmann::json parse_json_document(std::string_view text);
nlohmann::json read_json_document(const std::filesystem::path& path);
std::string format_json_document(const nlohmann::json& j);
void write_json_document(const std::filesystem::path& path, const nlohmann::json& j);

// {"kind": "anisotropic", "c11": .., "c12": .., "c22": .., "c33": ..} or
// {"kind": "isotropic", "E": .., "nu": ..}.
nlohmann::json material_to_json(const Material& m);
Material material_from_json(const nlohmann::json& j);

nlohmann::json pinn_model_to_json(const PinnModel& model);
PinnModel pinn_model_from_json(const nlohmann::json& j);
void write_pinn_model(const std::filesystem::path& path, const PinnModel& model);
PinnModel read_pinn_model(const std::filesystem::path& path);

// One-column-per-series CSV of loss histories (gnuplot friendly).
std::string format_series_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& series);

}  // namespace fabsim
