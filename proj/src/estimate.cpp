#include "fabsim/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

using Vector = std::vector<double>;

// Replaces diverged evaluations with 10x the worst finite loss seen so far so
// the optimizers can back away from them.
class Evaluator {
public:
    Evaluator(const VectorObjective& f, const MinimizeOptions& opt) : f_(f), opt_(opt) {}

    double operator()(const Vector& x) { return batch({x}).front(); }

    std::vector<double> batch(const std::vector<Vector>& xs) {
        std::vector<ObjectiveValue> raw(xs.size());
        const unsigned threads = std::max(1u, std::min<unsigned>(opt_.threads, static_cast<unsigned>(xs.size())));
        if (threads == 1) {
            for (std::size_t i = 0; i < xs.size(); ++i) raw[i] = f_(xs[i]);
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < threads; ++w) {
                pool.emplace_back([&, w] {
                    for (std::size_t i = w; i < xs.size(); i += threads) raw[i] = f_(xs[i]);
                });
            }
            for (auto& t : pool) t.join();
        }
        // Sequential pass keeps the sentinel independent of thread timing.
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            ++evals_;
            if (raw[i].diverged || !std::isfinite(raw[i].loss)) {
                ++diverged_;
                out[i] = std::numeric_limits<double>::quiet_NaN();
            } else {
                worst_ = std::max(worst_, raw[i].loss);
                out[i] = raw[i].loss;
            }
        }
        for (auto& v : out) {
            if (std::isnan(v)) v = sentinel();
        }
        return out;
    }

    double sentinel() const { return worst_ > 0.0 ? 10.0 * worst_ : 1.0; }
    std::size_t evals() const { return evals_; }
    std::size_t diverged() const { return diverged_; }

private:
    const VectorObjective& f_;
    const MinimizeOptions& opt_;
    double worst_ = 0.0;
    std::size_t evals_ = 0;
    std::size_t diverged_ = 0;
};

void clamp_to(Vector& x, const std::vector<Bounds>& bounds) {
    if (bounds.empty()) return;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], bounds[i].lo, bounds[i].hi);
}

void check_options(const Vector& x0, const MinimizeOptions& opt) {
    if (x0.empty()) throw ValidationError("optimizer needs at least one parameter");
    if (!opt.bounds.empty() && opt.bounds.size() != x0.size()) {
        throw ValidationError("bounds do not match the parameter count");
    }
    if (!opt.nm_steps.empty() && opt.nm_steps.size() != x0.size()) {
        throw ValidationError("simplex steps do not match the parameter count");
    }
    if (opt.max_iters < 0) throw ValidationError("max_iters must be non-negative");
}

MinimizeResult finish(MinimizeResult r, const Evaluator& eval) {
    r.evals = eval.evals();
    r.diverged_evals = eval.diverged();
    if (r.evals > 0 && r.evals == r.diverged_evals) {
        throw FitFailed("all " + std::to_string(r.evals) + " objective evaluations diverged");
    }
    return r;
}

Vector combine(const Vector& a, double wa, const Vector& b, double wb) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
    return out;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    return kind == OptimizerKind::fd_adam ? "fd_adam" : "nelder_mead";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "fd_adam") return OptimizerKind::fd_adam;
    if (name == "nelder_mead") return OptimizerKind::nelder_mead;
    throw ValidationError("unknown optimizer '" + std::string(name) + "'");
}

MinimizeResult minimize_nelder_mead(const VectorObjective& f, Vector x0, const MinimizeOptions& opt) {
    check_options(x0, opt);
    constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;
    Evaluator eval(f, opt);
    const std::size_t n = x0.size();
    clamp_to(x0, opt.bounds);

    std::vector<Vector> simplex{x0};
    for (std::size_t i = 0; i < n; ++i) {
        Vector v = x0;
        if (!opt.nm_steps.empty()) {
            v[i] += opt.nm_steps[i];
        } else {
            v[i] = x0[i] != 0.0 ? x0[i] * (1.0 + opt.nm_spread) : opt.nm_spread;
        }
        clamp_to(v, opt.bounds);
        if (v[i] == x0[i]) v[i] = x0[i] - (opt.nm_steps.empty() ? opt.nm_spread * std::max(1.0, std::abs(x0[i]))
                                                                 : opt.nm_steps[i]);
        clamp_to(v, opt.bounds);
        simplex.push_back(std::move(v));
    }
    std::vector<double> fv = eval.batch(simplex);

    MinimizeResult r;
    auto order = [&] {
        std::vector<std::size_t> idx(n + 1);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<Vector> s;
        std::vector<double> f2;
        for (auto i : idx) {
            s.push_back(simplex[i]);
            f2.push_back(fv[i]);
        }
        simplex = std::move(s);
        fv = std::move(f2);
    };
    order();
    r.loss_history.push_back(fv.front());

    for (int iter = 0;; ++iter) {
        if (fv.front() <= opt.loss_tol) {
            r.converged = true;
            r.reason = "loss below tolerance";
            break;
        }
        double spread = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t d = 0; d < n; ++d) {
                spread = std::max(spread, std::abs(simplex[i][d] - simplex[0][d]) / (1.0 + std::abs(simplex[0][d])));
            }
        }
        if (spread < 1e-10) {
            r.converged = true;
            r.reason = "simplex collapsed";
            break;
        }
        if (iter >= opt.max_iters) {
            r.reason = "max_iters reached";
            break;
        }

        Vector centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < n; ++d) centroid[d] += simplex[i][d] / static_cast<double>(n);
        }
        const Vector& worst = simplex[n];
        Vector xr = combine(centroid, 1.0 + kReflect, worst, -kReflect);
        clamp_to(xr, opt.bounds);
        const double fr = eval(xr);
        bool shrink = false;
        if (fr < fv[0]) {
            Vector xe = combine(centroid, 1.0 - kExpand, xr, kExpand);
            clamp_to(xe, opt.bounds);
            const double fe = eval(xe);
            if (fe < fr) {
                simplex[n] = std::move(xe);
                fv[n] = fe;
            } else {
                simplex[n] = std::move(xr);
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            simplex[n] = std::move(xr);
            fv[n] = fr;
        } else if (fr < fv[n]) {
            Vector xc = combine(centroid, 1.0 - kContract, xr, kContract);
            clamp_to(xc, opt.bounds);
            const double fc = eval(xc);
            if (fc <= fr) {
                simplex[n] = std::move(xc);
                fv[n] = fc;
            } else {
                shrink = true;
            }
        } else {
            Vector xc = combine(centroid, 1.0 - kContract, worst, kContract);
            clamp_to(xc, opt.bounds);
            const double fc = eval(xc);
            if (fc < fv[n]) {
                simplex[n] = std::move(xc);
                fv[n] = fc;
            } else {
                shrink = true;
            }
        }
        if (shrink) {
            std::vector<Vector> moved;
            for (std::size_t i = 1; i <= n; ++i) {
                simplex[i] = combine(simplex[0], 1.0 - kShrink, simplex[i], kShrink);
                moved.push_back(simplex[i]);
            }
            const auto fm = eval.batch(moved);
            for (std::size_t i = 1; i <= n; ++i) fv[i] = fm[i - 1];
        }
        order();
        r.loss_history.push_back(fv.front());
    }
    r.x = simplex.front();
    r.loss = fv.front();
    return finish(std::move(r), eval);
}

MinimizeResult minimize_fd_adam(const VectorObjective& f, Vector x, const MinimizeOptions& opt) {
    check_options(x, opt);
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    constexpr int kMaxHalvings = 8;
    Evaluator eval(f, opt);
    const std::size_t n = x.size();
    clamp_to(x, opt.bounds);

    MinimizeResult r;
    double loss = eval(x);
    r.loss_history.push_back(loss);
    Vector m(n, 0.0), v(n, 0.0);

    for (int iter = 1;; ++iter) {
        if (loss <= opt.loss_tol) {
            r.converged = true;
            r.reason = "loss below tolerance";
            break;
        }
        if (iter > opt.max_iters) {
            r.reason = "max_iters reached";
            break;
        }

        std::vector<Vector> probes;
        probes.reserve(2 * n);
        Vector spans(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Probes stay inside the bounds; at a bound the difference turns
            // one-sided.
            Vector up = x, down = x;
            up[i] += opt.fd_step;
            down[i] -= opt.fd_step;
            if (!opt.bounds.empty()) {
                up[i] = std::min(up[i], opt.bounds[i].hi);
                down[i] = std::max(down[i], opt.bounds[i].lo);
            }
            spans[i] = up[i] - down[i];
            probes.push_back(std::move(up));
            probes.push_back(std::move(down));
        }
        const auto fp = eval.batch(probes);
        Vector g(n);
        double g_max = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            g[i] = (fp[2 * i] - fp[2 * i + 1]) / spans[i];
            g_max = std::max(g_max, std::abs(g[i]));
        }
        if (g_max < 1e-14) {
            r.converged = true;
            r.reason = "gradient vanished";
            break;
        }

        Vector step(n);
        const double bc1 = 1.0 - std::pow(kBeta1, iter);
        const double bc2 = 1.0 - std::pow(kBeta2, iter);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            step[i] = opt.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
        }

        // Adam's step need not be a descent direction; fall back to the
        // scaled negative gradient before giving up.
        Vector fallback(n);
        for (std::size_t i = 0; i < n; ++i) fallback[i] = opt.learning_rate * g[i] / g_max;
        bool accepted = false;
        for (const Vector* dir : {&step, &fallback}) {
            for (int h = 0; !accepted && h <= (opt.backtracking ? kMaxHalvings : 0); ++h) {
                Vector cand = combine(x, 1.0, *dir, -std::ldexp(1.0, -h));
                clamp_to(cand, opt.bounds);
                const double fc = eval(cand);
                if (!opt.backtracking || fc <= loss) {
                    x = std::move(cand);
                    loss = fc;
                    accepted = true;
                }
            }
            if (accepted || !opt.backtracking) break;
        }
        if (!accepted) {
            r.loss_history.push_back(loss);
            r.reason = "no descent along the Adam step or the gradient";
            break;
        }
        r.loss_history.push_back(loss);
    }
    r.x = std::move(x);
    r.loss = loss;
    return finish(std::move(r), eval);
}

std::vector<double> material_parameters(const Material& m) {
    if (const auto* c = std::get_if<AnisotropicStiffness>(&m)) return {c->c11, c->c12, c->c22, c->c33};
    const auto& iso = std::get<IsotropicMaterial>(m);
    return {iso.youngs_modulus, iso.poissons_ratio};
}

Material material_from_parameters(const Material& like, const std::vector<double>& p) {
    if (std::holds_alternative<AnisotropicStiffness>(like)) {
        if (p.size() != 4) throw ValidationError("anisotropic material needs 4 parameters");
        return AnisotropicStiffness{p[0], p[1], p[2], p[3]};
    }
    if (p.size() != 2) throw ValidationError("isotropic material needs 2 parameters");
    return IsotropicMaterial{p[0], p[1]};
}

std::vector<std::string> material_parameter_names(const Material& m) {
    if (std::holds_alternative<AnisotropicStiffness>(m)) return {"c11", "c12", "c22", "c33"};
    return {"youngs_modulus", "poissons_ratio"};
}

std::vector<Bounds> default_bounds(const Material& m) {
    if (std::holds_alternative<AnisotropicStiffness>(m)) return {{1.0, 1000.0}, {0.1, 500.0}, {1.0, 1000.0}, {0.5, 500.0}};
    return {{1.0, 1000.0}, {0.01, 0.45}};
}

void validate(const FitConfig& cfg) {
    validate(cfg.init);
    const auto p = material_parameters(cfg.init);
    if (cfg.bounds.size() != p.size()) throw ValidationError("fit bounds do not match the material parameters");
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& b = cfg.bounds[i];
        if (!(b.lo > 0.0) || !(b.lo < b.hi) || !std::isfinite(b.hi)) {
            throw ValidationError("fit bounds must satisfy 0 < lo < hi");
        }
        if (p[i] < b.lo || p[i] > b.hi) throw ValidationError("initial parameters lie outside the bounds");
    }
    if (cfg.max_iters < 0) throw ValidationError("max_iters must be non-negative");
    if (!(cfg.fd_rel_step > 0.0) || !(cfg.learning_rate > 0.0) || !(cfg.loss_tol >= 0.0)) {
        throw ValidationError("fd_rel_step and learning_rate must be positive, loss_tol non-negative");
    }
    if (cfg.frame_window.first > cfg.frame_window.last) throw ValidationError("empty frame window");
}

ObjectiveValue objective(const Material& params, const ClothMesh& mesh, const Scenario& scenario,
                         const PointCloudSequence& target, FrameWindow window, const SimOptions& options) {
    if (!is_valid(params)) return {0.0, true};
    try {
        const auto sim = rollout(mesh, params, scenario, options);
        return {sequence_metric(sim, target, window, MetricKind::chamfer_one_sided).aggregate, false};
    } catch (const SimulationDiverged&) {
        return {0.0, true};
    }
}

double fit_time_step(const ClothMesh& mesh, const FitConfig& cfg) {
    double c_max = 0.0;
    if (std::holds_alternative<AnisotropicStiffness>(cfg.init)) {
        for (const auto& b : cfg.bounds) c_max = std::max(c_max, b.hi);
    } else {
        c_max = plane_strain_factor(IsotropicMaterial{cfg.bounds[0].hi, cfg.bounds[1].hi});
    }
    return 0.25 * mesh.min_edge_length() * std::sqrt(mesh.areal_density / c_max);
}

FitResult fit(const FitConfig& cfg, const MaterialObjective& objective_fn) {
    validate(cfg);
    const auto p0 = material_parameters(cfg.init);
    const std::size_t n = p0.size();

    MinimizeOptions opt;
    opt.max_iters = cfg.max_iters;
    opt.loss_tol = cfg.loss_tol;
    opt.learning_rate = cfg.learning_rate;
    opt.fd_step = cfg.fd_rel_step;
    opt.backtracking = cfg.backtracking;
    opt.threads = cfg.threads;
    opt.nm_steps.assign(n, std::log1p(cfg.nm_spread));
    Vector theta0(n);
    for (std::size_t i = 0; i < n; ++i) {
        theta0[i] = std::log(p0[i]);
        opt.bounds.push_back({std::log(cfg.bounds[i].lo), std::log(cfg.bounds[i].hi)});
    }

    auto to_material = [&](const Vector& theta) {
        Vector p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = std::exp(theta[i]);
        return material_from_parameters(cfg.init, p);
    };
    const VectorObjective f = [&](const Vector& theta) { return objective_fn(to_material(theta)); };

    const MinimizeResult r = cfg.optimizer == OptimizerKind::fd_adam ? minimize_fd_adam(f, theta0, opt)
                                                                     : minimize_nelder_mead(f, theta0, opt);
    FitResult out;
    // Unmoved iterates return the initial values exactly, not exp(log(p)).
    out.params = r.x == theta0 ? cfg.init : to_material(r.x);
    out.loss_history = r.loss_history;
    out.evals = r.evals;
    out.diverged_evals = r.diverged_evals;
    out.converged = r.converged;
    out.reason = r.reason;
    return out;
}

FitResult fit(const FitConfig& cfg, const ClothMesh& mesh, const Scenario& scenario,
              const PointCloudSequence& target, const SimOptions& options) {
    validate(cfg);
    validate(target);
    SimOptions sim_options = options;
    if (sim_options.dt <= 0.0) sim_options.dt = fit_time_step(mesh, cfg);
    const MaterialObjective f = [&](const Material& m) {
        return objective(m, mesh, scenario, target, cfg.frame_window, sim_options);
    };
    return fit(cfg, f);
}

}  // namespace fabsim
