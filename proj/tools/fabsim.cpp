// Command-line front end: synth, simulate, estimate-diff, estimate-pinn,
// evaluate, report, run, reference-config.
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fabsim/error.hpp"
#include "fabsim/experiment.hpp"
#include "fabsim/io.hpp"

namespace fs = std::filesystem;
using namespace fabsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitDiverged = 2;

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "Experiment config (JSON); defaults apply when omitted")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "Seed overriding the config");
    cmd->add_option("--out", args.out, "Output directory overriding the config");
}

ExperimentConfig load(const CommonArgs& args) {
    ExperimentConfig cfg = args.config.empty() ? ExperimentConfig{} : read_experiment_config(args.config);
    if (args.seed) {
        cfg.seed = *args.seed;
        cfg.pinn.seed = *args.seed;
    }
    if (!args.out.empty()) cfg.output_dir = args.out;
    return cfg;
}

// Runs one stage with rollback of its outputs on failure.
void staged(const ExperimentConfig& cfg, const std::function<void(const ClothMesh&, OutputTracker&)>& body) {
    OutputTracker out(cfg.output_dir);
    try {
        validate(cfg);
        const ClothMesh mesh = build_mesh(cfg.mesh);
        body(mesh, out);
        out.commit();
    } catch (...) {
        out.rollback();
        throw;
    }
}

void print_material(const Material& m) {
    const auto names = material_parameter_names(m);
    const auto values = material_parameters(m);
    for (std::size_t i = 0; i < names.size(); ++i) std::cout << "  " << names[i] << " = " << format_double(values[i]) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fabric parameter estimation from observed motion"};
    app.require_subcommand(1);

    CommonArgs synth_args, sim_args, diff_args, pinn_args, eval_args, report_args, run_args;

    auto* synth = app.add_subcommand("synth", "Roll out the truth material on every scenario and write targets");
    add_common(synth, synth_args);

    auto* simulate = app.add_subcommand("simulate", "Roll out a material on the configured scenarios");
    add_common(simulate, sim_args);
    std::string sim_material = "truth";
    bool sim_ply = false;
    simulate->add_option("--material", sim_material, "Which material to roll out")
        ->check(CLI::IsMember({"truth", "init", "estimated"}));
    simulate->add_flag("--ply", sim_ply, "Also write one PLY file per frame");

    auto* est_diff = app.add_subcommand("estimate-diff", "Fit the material through simulator rollouts");
    add_common(est_diff, diff_args);
    std::string optimizer;
    est_diff->add_option("--optimizer", optimizer, "Override the optimizer")
        ->check(CLI::IsMember({"fd_adam", "nelder_mead"}));

    auto* est_pinn = app.add_subcommand("estimate-pinn", "Fit the material with a physics-informed network");
    add_common(est_pinn, pinn_args);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate estimated parameters on the evaluation scenarios");
    add_common(evaluate_cmd, eval_args);
    std::string params_path;
    evaluate_cmd->add_option("--params", params_path, "Estimated parameters (default <out>/estimate/params.json)")
        ->check(CLI::ExistingFile);

    auto* report = app.add_subcommand("report", "Print the result table");
    add_common(report, report_args);
    std::string format = "markdown";
    report->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "markdown"}));

    auto* run = app.add_subcommand("run", "synth, estimate and evaluate in one go");
    add_common(run, run_args);

    auto* reference = app.add_subcommand("reference-config", "Print the reference config with every default");
    std::string reference_out;
    reference->add_option("--out", reference_out, "Write to this file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*synth) {
            const auto cfg = load(synth_args);
            staged(cfg, [&](const ClothMesh& mesh, OutputTracker& out) {
                const auto targets = synthesize(cfg, mesh, out);
                for (const auto& [name, seq] : targets) {
                    std::cout << name << ": " << seq.size() << " frames x " << seq.frames.front().size() << " points\n";
                }
            });
        } else if (*simulate) {
            const auto cfg = load(sim_args);
            staged(cfg, [&](const ClothMesh& mesh, OutputTracker& out) {
                Material m = cfg.init;
                if (sim_material == "truth") {
                    if (!cfg.truth) throw ValidationError("config has no truth material");
                    m = *cfg.truth;
                } else if (sim_material == "estimated") {
                    m = read_estimated_params(cfg.output_dir);
                }
                SimOptions opts = cfg.sim;
                opts.seed = cfg.seed;
                auto specs = cfg.evaluation_scenarios();
                for (const auto& s : specs) {
                    const auto seq = rollout(mesh, m, build_scenario(s, mesh), opts);
                    const fs::path rel = paths::simulations / (s.label() + ".csv");
                    out.write(rel, format_pointcloud_sequence(seq));
                    if (sim_ply) {
                        for (const auto& p : write_ply_frames(out.path(paths::simulations / s.label()), seq)) out.track(p);
                    }
                    std::cout << s.label() << ": " << seq.size() << " frames -> " << out.path(rel).string() << '\n';
                }
            });
        } else if (*est_diff || *est_pinn) {
            auto cfg = load(*est_diff ? diff_args : pinn_args);
            if (*est_pinn) {
                cfg.method = EstimationMethod::pinn;
            } else if (!optimizer.empty()) {
                cfg.method = optimizer == "nelder_mead" ? EstimationMethod::nelder_mead : EstimationMethod::diff;
            } else if (cfg.method == EstimationMethod::pinn) {
                cfg.method = EstimationMethod::diff;
            }
            staged(cfg, [&](const ClothMesh& mesh, OutputTracker& out) {
                const auto targets = load_or_synthesize(cfg, mesh, out);
                const auto r = estimate(cfg, mesh, targets, out);
                std::cout << "method " << to_string(cfg.method) << ": " << r.reason << '\n';
                print_material(r.params);
            });
        } else if (*evaluate_cmd) {
            const auto cfg = load(eval_args);
            staged(cfg, [&](const ClothMesh& mesh, OutputTracker& out) {
                const Material m = params_path.empty() ? read_estimated_params(cfg.output_dir)
                                                       : material_from_json(read_json_document(params_path).at("material"));
                const auto targets = load_or_synthesize(cfg, mesh, out);
                std::cout << evaluate(cfg, mesh, m, targets, out).to_markdown();
            });
        } else if (*report) {
            const auto cfg = load(report_args);
            const auto table = ResultTable::from_csv(read_file(cfg.output_dir / paths::results));
            std::cout << (format == "csv" ? table.to_csv() : table.to_markdown());
        } else if (*run) {
            const auto cfg = load(run_args);
            std::cout << run_experiment(cfg).to_markdown();
        } else if (*reference) {
            if (reference_out.empty()) {
                std::cout << reference_config_text();
            } else {
                write_file_atomic(reference_out, reference_config_text());
            }
        }
    } catch (const SimulationDiverged& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const TrainingDiverged& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const FitFailed& e) {
        std::cerr << "diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitOk;
}
