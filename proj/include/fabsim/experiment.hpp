#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fabsim/estimate.hpp"
#include "fabsim/metrics.hpp"
#include "fabsim/pinn.hpp"
#include "fabsim/scenario.hpp"
#include "fabsim/simulator.hpp"

namespace fabsim {

struct MeshSpec {
    std::size_t nx = 9;
    std::size_t ny = 9;
    double side = 0.45;
    double areal_density = kDefaultArealDensity;
};

// One scenario instance. With `target` set the observed sequence is read
// from disk (real-data replay); otherwise it is synthesized from the truth
// material. `trajectory` replaces the template's handles by a gripper log.
struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::lifting;
    ScenarioParams params;
    std::string trajectory;
    std::string target;
    std::string markers;  // PINN marker CSV (estimation only)
    std::string name;     // defaults to the kind name

    std::string label() const;
};

enum class EstimationMethod { diff, nelder_mead, pinn };

std::string_view to_string(EstimationMethod m);
EstimationMethod parse_estimation_method(std::string_view name);

struct ExperimentConfig {
    MeshSpec mesh;
    std::optional<Material> truth = AnisotropicStiffness{50.0, 5.0, 50.0, 20.0};
    Material init = AnisotropicStiffness{500.0, 50.0, 500.0, 200.0};
    EstimationMethod method = EstimationMethod::diff;
    ScenarioSpec estimation{ScenarioKind::lifting, {}, {}, {}, {}, {}};
    std::vector<ScenarioSpec> evaluation;  // empty = all six templates
    // Fit loss over the final frames only; 0 = every frame.
    std::size_t fit_last_frames = 30;
    FitConfig fit;   // init, optimizer and frame window are filled from the fields above
    PinnTrainConfig pinn;  // init and rho0 filled from material and mesh
    SimOptions sim;
    std::vector<MetricKind> metrics{MetricKind::chamfer_one_sided, MetricKind::chamfer_symmetric,
                                    MetricKind::hausdorff};
    double noise_std = 0.0;  // Gaussian noise added to synthesized targets, m
    std::string dataset = "synthetic";
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";

    std::vector<ScenarioSpec> evaluation_scenarios() const;
};

// Structural checks plus existence of referenced files.
void validate(const ExperimentConfig& cfg);

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
// Unknown keys are rejected; relative paths resolve against `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig read_experiment_config(const std::filesystem::path& path);
// Every default, spelled out.
std::string reference_config_text();

struct ResultRow {
    std::string scenario;
    std::string dataset;
    std::string method;
    std::string metric;
    double value = 0.0;
};

// Measurement rows plus one "Average" row per (dataset, method, metric).
class ResultTable {
public:
    static constexpr std::string_view kAverage = "Average";

    void add(ResultRow row);
    const std::vector<ResultRow>& rows() const { return rows_; }
    // Rows grouped by (dataset, method, metric), each group followed by its
    // mean.
    std::vector<ResultRow> with_averages() const;

    std::string to_csv() const;
    std::string to_markdown() const;
    // Reads to_csv output; Average rows are recomputed, not trusted.
    static ResultTable from_csv(std::string_view text);

private:
    std::vector<ResultRow> rows_;
};

// Stage outputs, relative to the output directory.
namespace paths {
inline const std::filesystem::path targets = "targets";
inline const std::filesystem::path estimate = "estimate";
inline const std::filesystem::path params = "estimate/params.json";
inline const std::filesystem::path loss_history = "estimate/loss_history.csv";
inline const std::filesystem::path pinn_model = "estimate/pinn_model.json";
inline const std::filesystem::path metrics = "metrics";
inline const std::filesystem::path results = "results.csv";
inline const std::filesystem::path results_markdown = "results.md";
inline const std::filesystem::path simulations = "simulations";
}  // namespace paths

// Records every file a stage writes so a failed stage can remove them.
class OutputTracker {
public:
    explicit OutputTracker(std::filesystem::path root) : root_(std::move(root)) {}
    std::filesystem::path path(const std::filesystem::path& relative) const { return root_ / relative; }
    void write(const std::filesystem::path& relative, std::string_view content);
    void track(const std::filesystem::path& absolute) { written_.push_back(absolute); }
    void commit() { written_.clear(); }
    void rollback();
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
    std::vector<std::filesystem::path> written_;
};

struct EstimateOutcome {
    Material params;
    std::vector<double> loss_history;       // fit loss or PINN data loss
    std::vector<double> pde_loss_history;   // PINN only
    bool converged = false;
    std::string reason;
};

// Targets by scenario label: read from disk when given, else rolled out with
// the truth material (and written under targets/).
std::map<std::string, PointCloudSequence> synthesize(const ExperimentConfig& cfg, const ClothMesh& mesh,
                                                     OutputTracker& out);
// Reuses targets already present under the output directory, synthesizing
// the missing ones.
std::map<std::string, PointCloudSequence> load_or_synthesize(const ExperimentConfig& cfg, const ClothMesh& mesh,
                                                             OutputTracker& out);
EstimateOutcome estimate(const ExperimentConfig& cfg, const ClothMesh& mesh,
                         const std::map<std::string, PointCloudSequence>& targets, OutputTracker& out);
Material read_estimated_params(const std::filesystem::path& output_dir);
ResultTable evaluate(const ExperimentConfig& cfg, const ClothMesh& mesh, const Material& params,
                     const std::map<std::string, PointCloudSequence>& targets, OutputTracker& out);

Scenario build_scenario(const ScenarioSpec& spec, const ClothMesh& mesh);
ClothMesh build_mesh(const MeshSpec& spec);

// synth -> estimate -> evaluate; writes every artifact and returns the table.
// On failure everything written by this call is removed.
ResultTable run_experiment(const ExperimentConfig& cfg);

}  // namespace fabsim
