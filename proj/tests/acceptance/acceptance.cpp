// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <unistd.h>

#include "fabsim/constitutive.hpp"
#include "fabsim/estimate.hpp"
#include "fabsim/experiment.hpp"
#include "fabsim/io.hpp"
#include "fabsim/metrics.hpp"
#include "fabsim/pinn.hpp"
#include "fabsim/simulator.hpp"

using namespace fabsim;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double max_norm(const std::vector<Vec3>& v) {
    double m = 0.0;
    for (const auto& p : v) m = std::max(m, p.norm());
    return m;
}

// 1. Accelerated metrics against the quadratic scan.
Outcome metric_oracle() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> count(1, 256);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    auto cloud = [&] {
        PointCloud c(static_cast<std::size_t>(count(rng)));
        for (auto& p : c) p = Vec3(u(rng), u(rng), u(rng));
        return c;
    };
    auto nearest = [](const Vec3& p, const PointCloud& b) {
        double best = INFINITY;
        for (const auto& q : b) best = std::min(best, (p - q).norm());
        return best;
    };
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const PointCloud a = cloud(), b = cloud();
        double ab = 0.0, ba = 0.0, h = 0.0;
        for (const auto& p : a) {
            const double d = nearest(p, b);
            ab += d;
            h = std::max(h, d);
        }
        for (const auto& q : b) {
            const double d = nearest(q, a);
            ba += d;
            h = std::max(h, d);
        }
        ab /= static_cast<double>(a.size());
        ba /= static_cast<double>(b.size());
        worst = std::max({worst, std::abs(chamfer_one_sided(a, b) - ab),
                          std::abs(chamfer_symmetric(a, b) - 0.5 * (ab + ba)), std::abs(hausdorff(a, b) - h)});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 10.0, fmt("max |accelerated - brute force| = %.3e, %.2f s", worst, secs)};
}

// 2. Isotropic law against its anisotropic embedding.
Outcome constitutive_equivalence() {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> e(1.0, 1000.0), nu(0.0, 0.49), s(-0.2, 0.2);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const IsotropicMaterial m{e(rng), nu(rng)};
        const Strain2D eps{s(rng), s(rng), s(rng)};
        const Stress2D a = stress_isotropic(m, eps), b = stress_anisotropic(isotropic_to_anisotropic(m), eps);
        worst = std::max({worst, std::abs(a.sigma_xx - b.sigma_xx), std::abs(a.sigma_yy - b.sigma_yy),
                          std::abs(a.sigma_xy - b.sigma_xy)});
    }
    return {worst <= 1e-12, fmt("max |difference| = %.3e N/m", worst)};
}

// 3. Membrane forces against central differences of the membrane energy.
Outcome force_gradient() {
    const ClothMesh mesh = build_grid_mesh(5, 5, 0.45);
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<double> jitter(-0.03, 0.03), logc(std::log(1.0), std::log(500.0));
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        const double c11 = std::exp(logc(rng)), c22 = std::exp(logc(rng));
        const double c12 = 0.5 * std::sqrt(c11 * c22) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const Material m = k % 2 ? Material{AnisotropicStiffness{c11, c12, c22, std::exp(logc(rng))}}
                                 : Material{IsotropicMaterial{c11, 0.45 * c12 / std::sqrt(c11 * c22)}};
        auto x = initial_positions(mesh, Placement::flat);
        for (auto& p : x) p += Vec3(jitter(rng), jitter(rng), jitter(rng));
        const SimState s{x, std::vector<Vec3>(x.size(), Vec3::Zero()), 0.0};
        const auto f = internal_forces(mesh, s, m);
        const double h = 1e-6;
        double err = 0.0;
        for (Index n = 0; n < x.size(); ++n)
            for (int d = 0; d < 3; ++d) {
                auto xp = x, xm = x;
                xp[n][d] += h;
                xm[n][d] -= h;
                const double fd = -(membrane_energy(mesh, xp, m) - membrane_energy(mesh, xm, m)) / (2.0 * h);
                err = std::max(err, std::abs(fd - f[n][d]));
            }
        worst = std::max(worst, err / max_norm(f));
    }
    return {worst < 1e-5, fmt("worst error / max force = %.3e over 50 states", worst)};
}

// 4. Free-flight momentum and the two-corner hang.
Outcome conservation() {
    const ClothMesh mesh = build_grid_mesh(9, 9, 0.45);
    const Material truth = AnisotropicStiffness{50, 5, 50, 20};

    Scenario free;
    free.duration = 1.0;
    free.damping = 0.0;
    SimState s0;
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> u(-0.5, 0.5), j(-0.01, 0.01);
    s0.positions = initial_positions(mesh, Placement::flat);
    for (auto& p : s0.positions) p += Vec3(j(rng), j(rng), j(rng));
    for (Index n = 0; n < mesh.node_count(); ++n) s0.velocities.emplace_back(u(rng) + 0.3, u(rng), u(rng));
    Simulator sim(mesh, truth, free, {}, s0);
    auto momentum = [&] {
        Vec3 p = Vec3::Zero();
        for (Index n = 0; n < mesh.node_count(); ++n) p += mesh.node_masses[n] * sim.state().velocities[n];
        return p;
    };
    const Vec3 p0 = momentum();
    const double dt = 0.5 * suggest_dt(mesh, truth);
    bool finite = true;
    for (int k = 0; k < 1000; ++k) finite &= sim.advance(dt);
    const double drift = (momentum() - p0).norm() / p0.norm();

    // Corners pinned, gravity on, no wind.
    auto hang = [&](double damping) {
        const Scenario s = make_scenario(ScenarioKind::wind,
                                         {{"force_per_area", 0.0}, {"damping", damping}, {"duration", 10.0}}, mesh);
        Simulator h(mesh, truth, s);
        const double step = suggest_dt(mesh, truth);
        const auto steps = static_cast<int>(std::ceil(10.0 / step));
        bool ok = true;
        for (int k = 0; k < steps; ++k) ok &= h.advance(step);
        return std::pair{ok, max_norm(h.state().velocities)};
    };
    const auto [ok2, v2] = hang(2.0);
    const auto [ok05, v05] = hang(0.5);
    const bool pass = finite && drift < 1e-8 && ok2 && v2 < 1e-3;
    return {pass, fmt("momentum drift %.3e; hang at damping 2/s: max speed %.3e m/s at 10 s "
                      "(default 0.5/s: %.3e m/s)%s",
                      drift, v2, v05, ok2 && ok05 ? "" : ", non-finite state")};
}

// 5. Lifting fit from 10x the truth.
Outcome lifting_recovery() {
    const ClothMesh mesh = build_grid_mesh(9, 9, 0.45);
    const AnisotropicStiffness truth{50, 5, 50, 20};
    const Scenario scenario = make_scenario(ScenarioKind::lifting, {}, mesh);
    FitConfig cfg;
    cfg.init = AnisotropicStiffness{500, 50, 500, 200};
    cfg.bounds = default_bounds(truth);
    cfg.optimizer = OptimizerKind::fd_adam;
    SimOptions opt;
    opt.bending_stiffness = 1e-4;
    opt.dt = fit_time_step(mesh, cfg);
    const auto t0 = Clock::now();
    const PointCloudSequence target = rollout(mesh, truth, scenario, opt);
    cfg.frame_window = FrameWindow::last_n(target.size(), 30);
    const FitResult r = fit(cfg, mesh, scenario, target, opt);
    const double secs = seconds_since(t0);
    const auto p = material_parameters(r.params);
    const double loss = objective(r.params, mesh, scenario, target, cfg.frame_window, opt).loss;
    const double e11 = std::abs(p[0] / truth.c11 - 1.0), e22 = std::abs(p[2] / truth.c22 - 1.0);
    const bool pass = target.size() == 61 && loss < 1e-3 && e11 <= 0.3 && e22 <= 0.3 && secs < 600.0;
    return {pass, fmt("CD %.3e m (< 1e-3: %s); c = (%.2f, %.2f, %.2f, %.2f); c11 error %.0f%%, c22 error %.0f%% "
                      "(<= 30%%: %s); %zu evaluations, %.0f s (< 600 s: %s)",
                      loss, loss < 1e-3 ? "yes" : "no", p[0], p[1], p[2], p[3], 100 * e11, 100 * e22,
                      e11 <= 0.3 && e22 <= 0.3 ? "yes" : "no", r.evals, secs, secs < 600.0 ? "yes" : "no")};
}

// Standing wave u_x = A sin(k x) cos(w t) on the 0.45 m square, an exact
// solution of the isotropic residual with w = k sqrt(k_pl / rho0).
struct Wave {
    double amplitude = 0.01;
    double k = std::numbers::pi / 0.45;
    double rho0 = kDefaultArealDensity;
    IsotropicMaterial material{0.1215 * 1.3 * 0.4 / 0.7, 0.3};

    MarkerDataset dataset() const {
        const double w = k * std::sqrt(plane_strain_modulus(material) / rho0);
        std::vector<Vec2> rest;
        for (int j = 0; j < 9; ++j)
            for (int i = 0; i < 9; ++i) rest.emplace_back(0.45 * i / 8.0, 0.45 * j / 8.0);
        std::vector<double> times;
        std::vector<std::vector<Vec2>> disp;
        for (int f = 0; f < 60; ++f) {
            times.push_back(f / 30.0);
            std::vector<Vec2> u;
            for (const auto& p : rest) u.emplace_back(amplitude * std::sin(k * p.x()) * std::cos(w * times.back()), 0.0);
            disp.push_back(std::move(u));
        }
        return make_marker_dataset(rest, times, disp);
    }
};

PinnTrainConfig wave_config(const Wave& w) {
    PinnTrainConfig cfg;
    cfg.rho0 = w.rho0;
    cfg.init = IsotropicMaterial{3.0 * w.material.youngs_modulus, w.material.poissons_ratio};
    cfg.freeze_poisson = true;
    cfg.epochs = 10000;
    cfg.widths = {3, 32, 32, 32, 32, 2};
    cfg.collocation_count = 256;
    cfg.data_lr = 1e-3;
    cfg.material_lr = 0.01;
    cfg.seed = 7;
    return cfg;
}

// 6. Modulus recovery on the wave, then pure regression.
Outcome pinn_recovery() {
    const Wave w;
    const MarkerDataset data = w.dataset();
    const auto t0 = Clock::now();
    const PinnResult r = train(data, wave_config(w));
    const double kpl = plane_strain_modulus(std::get<IsotropicMaterial>(r.model.material));
    const double truth = plane_strain_modulus(w.material);
    const double err = std::abs(kpl / truth - 1.0);

    PinnTrainConfig reg = wave_config(w);
    reg.fixed_pde_weight = 0.0;
    reg.epochs = 3000;
    const PinnResult d = train(data, reg);
    const double data_loss = d.data_loss_history.back();
    const double secs = seconds_since(t0);
    const bool pass = err <= 0.1 && data_loss < 1e-6 && secs < 900.0;
    return {pass, fmt("k_pl %.5f vs %.5f N/m (error %.1f%%); regression data loss %.3e m^2; %.0f s", kpl, truth,
                      100 * err, data_loss, secs)};
}

// 7. Analytic loss gradients against central differences, width 8.
Outcome pinn_gradients() {
    const Wave w;
    const MarkerDataset data = w.dataset();
    PinnBatch batch = marker_batch(data);
    batch.data_inputs = batch.data_inputs.leftCols(40).eval();
    batch.data_targets = batch.data_targets.leftCols(40).eval();
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    batch.collocation.resize(3, 20);
    for (Eigen::Index i = 0; i < 20; ++i)
        for (int r = 0; r < 3; ++r) batch.collocation(r, i) = u(rng);
    const PinnPhysics physics{w.rho0, Vec2(0.2, -0.4), BodyForceForm::density_weighted};

    double worst = 0.0;
    for (const Material init : {Material{AnisotropicStiffness{0.3, 0.04, 0.2, 0.08}}, Material{w.material}}) {
        MlpNet net = MlpNet::glorot({3, 8, 8, 8, 8, 8, 8, 2}, 11, false);
        std::normal_distribution<double> g(0.0, 0.2);
        for (auto& b : net.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = g(rng);
        const MaterialParameterization mat(init);
        MlpGradient grad = zero_gradient(net);
        std::vector<double> mgrad;
        pinn_loss(net, data.normalization, mat, batch, physics, 1.0, 0.6, &grad, &mgrad);
        const Eigen::VectorXd gw = grad.flatten();
        const Eigen::VectorXd theta = net.flatten();
        auto total = [&](const MlpNet& n, const MaterialParameterization& m) {
            return pinn_loss(n, data.normalization, m, batch, physics, 1.0, 0.6, nullptr, nullptr).total;
        };
        // Components below 1e-6 of the largest are compared absolutely.
        const double floor = 1e-6 * std::max(gw.cwiseAbs().maxCoeff(),
                                             std::abs(*std::max_element(mgrad.begin(), mgrad.end(), [](double a, double b) {
                                                 return std::abs(a) < std::abs(b);
                                             })));
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            MlpNet a = net, b = net;
            Eigen::VectorXd tp = theta, tm = theta;
            tp[i] += h;
            tm[i] -= h;
            a.assign(tp);
            b.assign(tm);
            const double fd = (total(a, mat) - total(b, mat)) / (2 * h);
            worst = std::max(worst, std::abs(gw[i] - fd) / std::max(std::abs(fd), floor));
        }
        for (std::size_t j = 0; j < mat.theta().size(); ++j) {
            MaterialParameterization a = mat, b = mat;
            a.theta()[j] += h;
            b.theta()[j] -= h;
            const double fd = (total(net, a) - total(net, b)) / (2 * h);
            worst = std::max(worst, std::abs(mgrad[j] - fd) / std::max(std::abs(fd), floor));
        }
    }
    return {worst < 1e-4, fmt("worst relative gradient error %.3e", worst)};
}

// 8. Annealing values.
Outcome anneal_exactness() {
    const AnnealSchedule s;
    const double w0 = anneal_weight(s, 0), w1250 = anneal_weight(s, 1250);
    bool capped = true;
    for (std::size_t e = 4500; e <= 20000; e += 250) capped &= anneal_weight(s, e) == 1.0;
    return {w0 == 0.1 && w1250 == 0.3 && capped,
            fmt("w(0) == 0.1: %s, w(1250) == 0.3: %s, w(>=4500) == 1: %s", w0 == 0.1 ? "yes" : "no",
                 w1250 == 0.3 ? "yes" : "no", capped ? "yes" : "no")};
}

// 9. Two identical runs, byte-identical tables.
Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("fabsim_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    ExperimentConfig cfg;
    cfg.fit.max_iters = 3;
    cfg.noise_std = 1e-3;
    cfg.seed = 2024;
    std::string text[2];
    for (int k = 0; k < 2; ++k) {
        cfg.output_dir = root / std::to_string(k);
        cfg.fit.threads = k + 1;
        text[k] = run_experiment(cfg).to_csv();
    }
    const bool files_equal = read_file(root / "0" / paths::results) == read_file(root / "1" / paths::results);
    fs::remove_all(root);
    const bool pass = text[0] == text[1] && files_equal && !text[0].empty();
    return {pass, fmt("%zu bytes, tables identical: %s, results.csv identical: %s", text[0].size(),
                      text[0] == text[1] ? "yes" : "no", files_equal ? "yes" : "no")};
}

// 10. Every template across the default material ranges.
Outcome scenario_coverage() {
    const ClothMesh mesh = build_grid_mesh(9, 9, 0.45);
    std::vector<Material> materials{AnisotropicStiffness{50, 5, 50, 20}, AnisotropicStiffness{1, 0.1, 1, 0.5},
                                    AnisotropicStiffness{1000, 500, 1000, 500}, AnisotropicStiffness{1000, 0.1, 1, 500},
                                    AnisotropicStiffness{1, 0.1, 1000, 0.5}, IsotropicMaterial{1, 0.01},
                                    IsotropicMaterial{1000, 0.45}};
    std::mt19937_64 rng(1010);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 3; ++k) {
        const double c11 = std::exp(std::log(1000.0) * u(rng)), c22 = std::exp(std::log(1000.0) * u(rng));
        materials.push_back(AnisotropicStiffness{c11, 0.9 * u(rng) * std::sqrt(c11 * c22), c22,
                                                 0.5 * std::exp(std::log(1000.0) * u(rng))});
    }
    std::size_t runs = 0, good = 0;
    std::string failures;
    for (const ScenarioKind kind : all_scenario_kinds()) {
        const Scenario s = make_scenario(kind, {}, mesh);
        for (const Material& m : materials) {
            ++runs;
            try {
                const auto seq = rollout(mesh, m, s);
                bool finite = true;
                for (const auto& f : seq.frames)
                    for (const auto& p : f) finite &= p.allFinite();
                if (seq.size() == 61 && finite) {
                    ++good;
                    continue;
                }
            } catch (const std::exception&) {
            }
            failures += " " + std::string(to_string(kind));
        }
    }
    return {good == runs, fmt("%zu / %zu rollouts with 61 finite frames at 15 Hz%s", good, runs,
                              failures.empty() ? "" : (";" + failures).c_str())};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"metric oracle equivalence", metric_oracle},
        {"constitutive equivalence", constitutive_equivalence},
        {"internal forces vs energy differences", force_gradient},
        {"momentum and equilibrium", conservation},
        {"lifting parameter recovery", lifting_recovery},
        {"pinn modulus recovery", pinn_recovery},
        {"pinn gradient check", pinn_gradients},
        {"annealing exactness", anneal_exactness},
        {"end-to-end determinism", determinism},
        {"scenario coverage", scenario_coverage},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
