#include "fabsim/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <random>
#include <set>

#include "fabsim/error.hpp"
#include "fabsim/io.hpp"

namespace fabsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads an object field by field and rejects keys nobody asked for.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j.is_object()) throw ValidationError(where_ + " must be an object");
    }
    ~ObjectReader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) throw ValidationError(where_ + " has unknown key '" + key + "'");
        }
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    template <class T>
    void get(const std::string& key, T& value) {
        if (const json* v = find(key)) {
            try {
                value = v->get<T>();
            } catch (const json::exception&) {
                throw ValidationError(where_ + "." + key + " has the wrong type");
            }
        }
    }

    void number(const std::string& key, double& value, double lo, double hi) {
        get(key, value);
        if (!(value >= lo && value <= hi)) {
            throw ValidationError(where_ + "." + key + " = " + format_double(value) + " outside [" + format_double(lo) +
                                  ", " + format_double(hi) + "]");
        }
    }

    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

fs::path resolve(const std::string& p, const fs::path& base) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

json bounds_to_json(const std::vector<Bounds>& b) {
    json out = json::array();
    for (const auto& x : b) out.push_back({x.lo, x.hi});
    return out;
}

std::vector<Bounds> bounds_from_json(const json& j, const std::string& where) {
    std::vector<Bounds> out;
    if (!j.is_array()) throw ValidationError(where + " must be an array of [lo, hi]");
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
            throw ValidationError(where + " entries must be [lo, hi]");
        }
        out.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    return out;
}

json scenario_to_json(const ScenarioSpec& s) {
    ScenarioParams params = scenario_parameter_defaults(s.kind);
    for (const auto& [k, v] : s.params) params[k] = v;
    json p = json::object();
    for (const auto& [k, v] : params) p[k] = v;
    return {{"kind", to_string(s.kind)}, {"name", s.label()}, {"params", p}, {"trajectory", s.trajectory},
            {"target", s.target},         {"markers", s.markers}};
}

ScenarioSpec scenario_from_json(const json& j, const std::string& where, const fs::path& base) {
    ObjectReader r(j, where);
    ScenarioSpec s;
    std::string kind;
    r.get("kind", kind);
    if (kind.empty()) throw ValidationError(where + ".kind is required");
    s.kind = parse_scenario_kind(kind);
    r.get("name", s.name);
    if (const json* p = r.find("params")) {
        if (!p->is_object()) throw ValidationError(where + ".params must be an object");
        const auto& defaults = scenario_parameter_defaults(s.kind);
        for (const auto& [k, v] : p->items()) {
            if (!v.is_number()) throw ValidationError(where + ".params." + k + " must be a number");
            if (!defaults.count(k)) {
                throw ValidationError(where + ".params has unknown key '" + k + "' for scenario '" + kind + "'");
            }
            s.params[k] = v.get<double>();
        }
    }
    r.get("trajectory", s.trajectory);
    r.get("target", s.target);
    r.get("markers", s.markers);
    s.trajectory = resolve(s.trajectory, base).string();
    s.target = resolve(s.target, base).string();
    s.markers = resolve(s.markers, base).string();
    return s;
}

std::string format_short(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::scientific, 3);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

// Shared substep bound for every rollout in an experiment, so the truth
// material reproduces its own targets exactly.
SimOptions experiment_sim_options(const ExperimentConfig& cfg, const ClothMesh& mesh) {
    SimOptions o = cfg.sim;
    o.seed = cfg.seed;
    if (o.dt <= 0.0) {
        FitConfig f = cfg.fit;
        f.init = cfg.init;
        if (f.bounds.empty()) f.bounds = default_bounds(cfg.init);
        o.dt = fit_time_step(mesh, f);
    }
    return o;
}

constexpr std::string_view kEstimationKey = "estimation";

fs::path target_file(const std::string& key) { return paths::targets / (key + ".csv"); }

void add_noise(PointCloudSequence& seq, double stddev, std::uint64_t seed) {
    if (stddev <= 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, stddev);
    for (auto& frame : seq.frames) {
        for (auto& p : frame) p += Vec3(n(rng), n(rng), n(rng));
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string ScenarioSpec::label() const { return name.empty() ? std::string(to_string(kind)) : name; }

std::string_view to_string(EstimationMethod m) {
    switch (m) {
        case EstimationMethod::diff: return "diff";
        case EstimationMethod::nelder_mead: return "nelder_mead";
        case EstimationMethod::pinn: return "pinn";
    }
    return "?";
}

EstimationMethod parse_estimation_method(std::string_view name) {
    if (name == "diff") return EstimationMethod::diff;
    if (name == "nelder_mead") return EstimationMethod::nelder_mead;
    if (name == "pinn") return EstimationMethod::pinn;
    throw ValidationError("unknown estimation method '" + std::string(name) + "' (diff, nelder_mead, pinn)");
}

std::vector<ScenarioSpec> ExperimentConfig::evaluation_scenarios() const {
    if (!evaluation.empty()) return evaluation;
    std::vector<ScenarioSpec> out;
    for (auto k : all_scenario_kinds()) out.push_back({k, {}, {}, {}, {}, {}});
    return out;
}

ClothMesh build_mesh(const MeshSpec& spec) { return build_grid_mesh(spec.nx, spec.ny, spec.side, spec.areal_density); }

Scenario build_scenario(const ScenarioSpec& spec, const ClothMesh& mesh) {
    Scenario s = make_scenario(spec.kind, spec.params, mesh);
    if (!spec.trajectory.empty()) apply_trajectory(s, read_trajectory(spec.trajectory));
    validate(s, mesh);
    return s;
}

void validate(const ExperimentConfig& cfg) {
    const ClothMesh mesh = build_mesh(cfg.mesh);
    validate(cfg.init);
    if (cfg.truth) validate(*cfg.truth);
    if (cfg.truth && cfg.truth->index() != cfg.init.index()) {
        throw ValidationError("truth and init materials must be of the same kind");
    }
    if (!(cfg.noise_std >= 0.0)) throw ValidationError("noise_std must be non-negative");
    if (cfg.metrics.empty()) throw ValidationError("at least one metric is required");
    if (cfg.sim.dt < 0.0 || !(cfg.sim.bending_stiffness >= 0.0)) {
        throw ValidationError("simulation dt and bending_stiffness must be non-negative");
    }
    if (cfg.output_dir.empty()) throw ValidationError("output_dir is empty");

    auto check_paths = [](const ScenarioSpec& s) {
        for (const auto* p : {&s.trajectory, &s.target, &s.markers}) {
            if (!p->empty() && !fs::exists(*p)) throw ValidationError("referenced file '" + *p + "' does not exist");
        }
    };
    auto check_scenario = [&](const ScenarioSpec& s, bool synthesized) {
        check_paths(s);
        build_scenario(s, mesh);
        if (synthesized && s.target.empty() && !cfg.truth) {
            throw ValidationError("scenario '" + s.label() + "' has no target file and no truth material to synthesize one");
        }
    };
    const bool pinn_markers = cfg.method == EstimationMethod::pinn && !cfg.estimation.markers.empty();
    check_scenario(cfg.estimation, !pinn_markers);
    std::set<std::string> labels;
    for (const auto& s : cfg.evaluation_scenarios()) {
        check_scenario(s, true);
        if (!labels.insert(s.label()).second) throw ValidationError("duplicate evaluation scenario '" + s.label() + "'");
        if (s.label() == kEstimationKey) throw ValidationError("'estimation' is reserved as a scenario name");
        if (!s.markers.empty()) throw ValidationError("markers apply to the estimation scenario only");
    }

    FitConfig f = cfg.fit;
    f.init = cfg.init;
    if (f.bounds.empty()) f.bounds = default_bounds(cfg.init);
    validate(f);
    if (cfg.method == EstimationMethod::pinn) {
        PinnTrainConfig p = cfg.pinn;
        p.init = cfg.init;
        validate(p);
        if (cfg.estimation.markers.empty() && cfg.sim.sample_points != 0) {
            throw ValidationError("PINN markers from a rollout need sample_points = 0 (one marker per node)");
        }
    }
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["output_dir"] = cfg.output_dir.string();
    j["dataset"] = cfg.dataset;
    j["mesh"] = {{"nx", cfg.mesh.nx}, {"ny", cfg.mesh.ny}, {"side", cfg.mesh.side},
                 {"areal_density", cfg.mesh.areal_density}};
    j["material"] = {{"truth", cfg.truth ? material_to_json(*cfg.truth) : json(nullptr)},
                     {"init", material_to_json(cfg.init)}};
    j["method"] = to_string(cfg.method);
    j["estimation"] = scenario_to_json(cfg.estimation);
    j["evaluation"] = json::array();
    for (const auto& s : cfg.evaluation_scenarios()) j["evaluation"].push_back(scenario_to_json(s));
    const auto& f = cfg.fit;
    j["fit"] = {{"last_frames", cfg.fit_last_frames},
                {"max_iters", f.max_iters},
                {"fd_rel_step", f.fd_rel_step},
                {"learning_rate", f.learning_rate},
                {"loss_tol", f.loss_tol},
                {"backtracking", f.backtracking},
                {"nm_spread", f.nm_spread},
                {"threads", f.threads},
                {"bounds", bounds_to_json(f.bounds.empty() ? default_bounds(cfg.init) : f.bounds)}};
    const auto& p = cfg.pinn;
    j["pinn"] = {{"epochs", p.epochs},
                 {"data_lr", p.data_lr},
                 {"material_lr", p.material_lr},
                 {"collocation_count", p.collocation_count},
                 {"anneal",
                  {{"data_weight0", p.anneal.data_weight0},
                   {"pde_weight0", p.anneal.pde_weight0},
                   {"pde_increment", p.anneal.pde_increment},
                   {"period", p.anneal.period},
                   {"cap", p.anneal.cap}}},
                 {"fixed_pde_weight", p.fixed_pde_weight ? json(*p.fixed_pde_weight) : json(nullptr)},
                 {"body_force", {p.body_force.x(), p.body_force.y()}},
                 {"rho0", cfg.mesh.areal_density},
                 {"body_force_form", p.body_force_form == BodyForceForm::bare ? "bare" : "density_weighted"},
                 {"material_optimizer", to_string(p.material_optimizer)},
                 {"widths", p.widths},
                 {"freeze_poisson", p.freeze_poisson},
                 {"bounds", bounds_to_json(p.bounds.empty() ? pinn_default_bounds(cfg.init) : p.bounds)}};
    j["simulation"] = {{"bending_stiffness", cfg.sim.bending_stiffness},
                       {"dt", cfg.sim.dt},
                       {"sample_points", cfg.sim.sample_points}};
    j["metrics"] = json::array();
    for (auto m : cfg.metrics) j["metrics"].push_back(to_string(m));
    j["noise_std"] = cfg.noise_std;
    return j;
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base) {
    ExperimentConfig cfg;
    ObjectReader r(j, "config");
    r.get("seed", cfg.seed);
    std::string out = cfg.output_dir.string();
    r.get("output_dir", out);
    cfg.output_dir = resolve(out, base);
    r.get("dataset", cfg.dataset);
    if (const json* m = r.find("mesh")) {
        ObjectReader mr(*m, "mesh");
        mr.get("nx", cfg.mesh.nx);
        mr.get("ny", cfg.mesh.ny);
        mr.get("side", cfg.mesh.side);
        mr.get("areal_density", cfg.mesh.areal_density);
    }
    if (const json* m = r.find("material")) {
        ObjectReader mr(*m, "material");
        const json* truth = mr.find("truth");
        if (truth) {
            cfg.truth = material_from_json(*truth);
        } else if (m->contains("truth")) {
            cfg.truth.reset();
        }
        if (const json* init = mr.find("init")) cfg.init = material_from_json(*init);
    }
    std::string method(to_string(cfg.method));
    r.get("method", method);
    cfg.method = parse_estimation_method(method);
    if (const json* s = r.find("estimation")) cfg.estimation = scenario_from_json(*s, "estimation", base);
    if (const json* e = r.find("evaluation")) {
        if (!e->is_array()) throw ValidationError("evaluation must be an array of scenarios");
        for (std::size_t i = 0; i < e->size(); ++i) {
            cfg.evaluation.push_back(scenario_from_json((*e)[i], "evaluation[" + std::to_string(i) + "]", base));
        }
    }
    if (const json* f = r.find("fit")) {
        ObjectReader fr(*f, "fit");
        fr.get("last_frames", cfg.fit_last_frames);
        fr.get("max_iters", cfg.fit.max_iters);
        fr.number("fd_rel_step", cfg.fit.fd_rel_step, 1e-12, 1.0);
        fr.number("learning_rate", cfg.fit.learning_rate, 1e-12, 10.0);
        fr.number("loss_tol", cfg.fit.loss_tol, 0.0, 1e3);
        fr.get("backtracking", cfg.fit.backtracking);
        fr.number("nm_spread", cfg.fit.nm_spread, 1e-6, 10.0);
        fr.get("threads", cfg.fit.threads);
        if (const json* b = fr.find("bounds")) cfg.fit.bounds = bounds_from_json(*b, "fit.bounds");
    }
    cfg.pinn.rho0 = cfg.mesh.areal_density;
    if (const json* p = r.find("pinn")) {
        ObjectReader pr(*p, "pinn");
        auto& c = cfg.pinn;
        pr.get("epochs", c.epochs);
        pr.get("data_lr", c.data_lr);
        pr.get("material_lr", c.material_lr);
        pr.get("collocation_count", c.collocation_count);
        if (const json* a = pr.find("anneal")) {
            ObjectReader ar(*a, "pinn.anneal");
            ar.get("data_weight0", c.anneal.data_weight0);
            ar.get("pde_weight0", c.anneal.pde_weight0);
            ar.get("pde_increment", c.anneal.pde_increment);
            ar.get("period", c.anneal.period);
            ar.get("cap", c.anneal.cap);
        }
        if (const json* w = pr.find("fixed_pde_weight")) {
            if (!w->is_number()) throw ValidationError("pinn.fixed_pde_weight must be a number or null");
            c.fixed_pde_weight = w->get<double>();
        }
        if (const json* b = pr.find("body_force")) {
            if (!b->is_array() || b->size() != 2) throw ValidationError("pinn.body_force must be [bx, by]");
            c.body_force = Vec2((*b)[0].get<double>(), (*b)[1].get<double>());
        }
        pr.get("rho0", c.rho0);
        std::string form = c.body_force_form == BodyForceForm::bare ? "bare" : "density_weighted";
        pr.get("body_force_form", form);
        if (form == "bare") {
            c.body_force_form = BodyForceForm::bare;
        } else if (form == "density_weighted") {
            c.body_force_form = BodyForceForm::density_weighted;
        } else {
            throw ValidationError("pinn.body_force_form must be 'density_weighted' or 'bare'");
        }
        std::string opt(to_string(c.material_optimizer));
        pr.get("material_optimizer", opt);
        c.material_optimizer = parse_material_optimizer(opt);
        pr.get("widths", c.widths);
        pr.get("freeze_poisson", c.freeze_poisson);
        if (const json* b = pr.find("bounds")) c.bounds = bounds_from_json(*b, "pinn.bounds");
    }
    if (const json* s = r.find("simulation")) {
        ObjectReader sr(*s, "simulation");
        sr.get("bending_stiffness", cfg.sim.bending_stiffness);
        sr.get("dt", cfg.sim.dt);
        sr.get("sample_points", cfg.sim.sample_points);
    }
    if (const json* m = r.find("metrics")) {
        if (!m->is_array()) throw ValidationError("metrics must be an array of names");
        cfg.metrics.clear();
        for (const auto& name : *m) {
            if (!name.is_string()) throw ValidationError("metrics must be an array of names");
            cfg.metrics.push_back(parse_metric_kind(name.get<std::string>()));
        }
    }
    r.number("noise_std", cfg.noise_std, 0.0, 1.0);
    cfg.pinn.init = cfg.init;
    cfg.pinn.seed = cfg.seed;
    return cfg;
}

ExperimentConfig read_experiment_config(const fs::path& path) {
    return experiment_config_from_json(read_json_document(path), path.parent_path());
}

std::string reference_config_text() { return format_json_document(experiment_config_to_json(ExperimentConfig{})); }

// ---- result table ------------------------------------------------------------

void ResultTable::add(ResultRow row) {
    if (row.scenario == kAverage) throw ValidationError("'Average' rows are derived, not added");
    rows_.push_back(std::move(row));
}

std::vector<ResultRow> ResultTable::with_averages() const {
    using Key = std::tuple<std::string, std::string, std::string>;
    std::vector<Key> order;
    std::map<Key, std::vector<const ResultRow*>> groups;
    for (const auto& r : rows_) {
        Key k{r.dataset, r.method, r.metric};
        auto [it, fresh] = groups.try_emplace(k);
        if (fresh) order.push_back(k);
        it->second.push_back(&r);
    }
    std::vector<ResultRow> out;
    for (const auto& k : order) {
        double sum = 0.0;
        for (const auto* r : groups[k]) {
            out.push_back(*r);
            sum += r->value;
        }
        out.push_back({std::string(kAverage), std::get<0>(k), std::get<1>(k), std::get<2>(k),
                       sum / static_cast<double>(groups[k].size())});
    }
    return out;
}

std::string ResultTable::to_csv() const {
    std::string out(kFormatHeader);
    out += "\nscenario,dataset,method,metric,value\n";
    for (const auto& r : with_averages()) {
        out += r.scenario + ',' + r.dataset + ',' + r.method + ',' + r.metric + ',' + format_double(r.value) + '\n';
    }
    return out;
}

std::string ResultTable::to_markdown() const {
    std::vector<std::string> metrics;
    std::vector<std::pair<std::string, std::string>> groups;
    for (const auto& r : rows_) {
        if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
        const std::pair<std::string, std::string> g{r.dataset, r.method};
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
    const auto all = with_averages();
    std::string out;
    for (const auto& [dataset, method] : groups) {
        out += "### " + dataset + " / " + method + " (m)\n\n| scenario |";
        for (const auto& m : metrics) out += ' ' + m + " |";
        out += "\n|---|";
        for (std::size_t i = 0; i < metrics.size(); ++i) out += "---:|";
        out += '\n';
        std::vector<std::string> scenarios;
        for (const auto& r : all) {
            if (r.dataset == dataset && r.method == method &&
                std::find(scenarios.begin(), scenarios.end(), r.scenario) == scenarios.end()) {
                scenarios.push_back(r.scenario);
            }
        }
        // Average last.
        std::stable_partition(scenarios.begin(), scenarios.end(), [](const std::string& s) { return s != kAverage; });
        for (const auto& s : scenarios) {
            out += s == kAverage ? "| **Average** |" : "| " + s + " |";
            for (const auto& m : metrics) {
                const auto it = std::find_if(all.begin(), all.end(), [&](const ResultRow& r) {
                    return r.scenario == s && r.dataset == dataset && r.method == method && r.metric == m;
                });
                out += it == all.end() ? " |" : ' ' + format_short(it->value) + " |";
            }
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

ResultTable ResultTable::from_csv(std::string_view text) {
    ResultTable t;
    std::size_t no = 0;
    bool header = false;
    while (!text.empty()) {
        ++no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        if (!header) {
            if (line != "scenario,dataset,method,metric,value") throw ParseError("bad result table header", no);
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto p = line.find(',', start);
            f.emplace_back(line.substr(start, p - start));
            if (p == std::string_view::npos) break;
            start = p + 1;
        }
        if (f.size() != 5) throw ParseError("expected 5 fields", no);
        if (f[0] == kAverage) continue;
        t.add({f[0], f[1], f[2], f[3], parse_double(f[4], no)});
    }
    if (!header) throw ParseError("missing result table header", 0);
    return t;
}

// ---- outputs -----------------------------------------------------------------

void OutputTracker::write(const fs::path& relative, std::string_view content) {
    const fs::path p = root_ / relative;
    std::error_code ec;
    std::vector<fs::path> created;
    for (fs::path d = p.parent_path(); !d.empty() && !fs::exists(d, ec); d = d.parent_path()) created.push_back(d);
    written_.insert(written_.end(), created.rbegin(), created.rend());
    write_file_atomic(p, content);
    written_.push_back(p);
}

void OutputTracker::rollback() {
    std::error_code ec;
    // Files first, then the directories this run created (deepest last added).
    for (auto it = written_.rbegin(); it != written_.rend(); ++it) {
        if (fs::is_directory(*it, ec)) {
            fs::remove(*it, ec);  // only succeeds when empty
        } else {
            fs::remove(*it, ec);
        }
    }
    written_.clear();
}

// ---- stages ------------------------------------------------------------------

namespace {

PointCloudSequence synthesize_one(const ExperimentConfig& cfg, const ClothMesh& mesh, const ScenarioSpec& spec,
                                  std::size_t index) {
    const SimOptions opts = experiment_sim_options(cfg, mesh);
    auto seq = rollout(mesh, *cfg.truth, build_scenario(spec, mesh), opts);
    add_noise(seq, cfg.noise_std, mix_seed(cfg.seed, index));
    return seq;
}

std::map<std::string, PointCloudSequence> gather_targets(const ExperimentConfig& cfg, const ClothMesh& mesh,
                                                         OutputTracker& out, bool reuse) {
    validate(cfg);
    std::vector<std::pair<std::string, ScenarioSpec>> jobs{{std::string(kEstimationKey), cfg.estimation}};
    for (const auto& s : cfg.evaluation_scenarios()) jobs.emplace_back(s.label(), s);
    const bool pinn_from_file = cfg.method == EstimationMethod::pinn && !cfg.estimation.markers.empty();

    std::map<std::string, PointCloudSequence> targets;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& [key, spec] = jobs[i];
        if (!spec.target.empty()) {
            targets[key] = read_pointcloud_sequence(spec.target);
            continue;
        }
        if (i == 0 && pinn_from_file) continue;
        const fs::path existing = out.path(target_file(key));
        if (reuse && fs::exists(existing)) {
            targets[key] = read_pointcloud_sequence(existing);
            continue;
        }
        auto seq = synthesize_one(cfg, mesh, spec, i);
        out.write(target_file(key), format_pointcloud_sequence(seq));
        if (i == 0 && cfg.method == EstimationMethod::pinn) {
            out.write(paths::targets / (key + "_markers.csv"),
                      format_marker_dataset(markers_from_sequence(mesh, seq)));
        }
        targets[key] = std::move(seq);
    }
    return targets;
}

}  // namespace

std::map<std::string, PointCloudSequence> synthesize(const ExperimentConfig& cfg, const ClothMesh& mesh,
                                                     OutputTracker& out) {
    return gather_targets(cfg, mesh, out, false);
}

std::map<std::string, PointCloudSequence> load_or_synthesize(const ExperimentConfig& cfg, const ClothMesh& mesh,
                                                             OutputTracker& out) {
    return gather_targets(cfg, mesh, out, true);
}

EstimateOutcome estimate(const ExperimentConfig& cfg, const ClothMesh& mesh,
                         const std::map<std::string, PointCloudSequence>& targets, OutputTracker& out) {
    EstimateOutcome result;
    json info;
    info["method"] = to_string(cfg.method);
    if (cfg.method == EstimationMethod::pinn) {
        MarkerDataset data;
        if (!cfg.estimation.markers.empty()) {
            data = read_marker_dataset(cfg.estimation.markers);
        } else {
            const auto it = targets.find(std::string(kEstimationKey));
            if (it == targets.end()) throw ValidationError("no estimation target for the PINN");
            data = markers_from_sequence(mesh, it->second);
        }
        PinnTrainConfig p = cfg.pinn;
        p.init = cfg.init;
        p.seed = cfg.seed;
        const PinnResult r = train(data, p);
        result.params = r.model.material;
        result.loss_history = r.data_loss_history;
        result.pde_loss_history = r.pde_loss_history;
        result.converged = !r.material_clamped;
        result.reason = r.material_clamped ? "material reached a bound" : "epochs completed";
        info["final_residual"] = {{"rms", r.final_residual.rms}, {"max_abs", r.final_residual.max_abs}};
        out.write(paths::pinn_model, format_json_document(pinn_model_to_json(r.model)));
        out.write(paths::loss_history,
                  format_series_csv({"data_loss", "pde_loss"}, {r.data_loss_history, r.pde_loss_history}));
    } else {
        const auto it = targets.find(std::string(kEstimationKey));
        if (it == targets.end()) throw ValidationError("no estimation target");
        const auto& target = it->second;
        FitConfig f = cfg.fit;
        f.init = cfg.init;
        f.seed = cfg.seed;
        f.optimizer = cfg.method == EstimationMethod::diff ? OptimizerKind::fd_adam : OptimizerKind::nelder_mead;
        if (f.bounds.empty()) f.bounds = default_bounds(cfg.init);
        const std::size_t frames = target.size();
        f.frame_window = cfg.fit_last_frames == 0 || cfg.fit_last_frames >= frames
                             ? FrameWindow::all(frames)
                             : FrameWindow::last_n(frames, cfg.fit_last_frames);
        const FitResult r = fit(f, mesh, build_scenario(cfg.estimation, mesh), target, experiment_sim_options(cfg, mesh));
        result.params = r.params;
        result.loss_history = r.loss_history;
        result.converged = r.converged;
        result.reason = r.reason;
        info["evals"] = r.evals;
        info["diverged_evals"] = r.diverged_evals;
        info["frame_window"] = {f.frame_window.first, f.frame_window.last};
        out.write(paths::loss_history, format_series_csv({"loss"}, {r.loss_history}));
    }
    info["material"] = material_to_json(result.params);
    info["converged"] = result.converged;
    info["reason"] = result.reason;
    out.write(paths::params, format_json_document(info));
    return result;
}

Material read_estimated_params(const fs::path& output_dir) {
    const json j = read_json_document(output_dir / paths::params);
    if (!j.is_object() || !j.contains("material")) throw ValidationError("params file lacks a material");
    return material_from_json(j["material"]);
}

ResultTable evaluate(const ExperimentConfig& cfg, const ClothMesh& mesh, const Material& params,
                     const std::map<std::string, PointCloudSequence>& targets, OutputTracker& out) {
    const auto specs = cfg.evaluation_scenarios();
    const SimOptions opts = experiment_sim_options(cfg, mesh);
    auto run = [&](const ScenarioSpec& s) { return rollout(mesh, params, build_scenario(s, mesh), opts); };

    std::vector<PointCloudSequence> sims(specs.size());
    if (cfg.fit.threads > 1) {
        std::vector<std::future<PointCloudSequence>> jobs;
        for (const auto& s : specs) jobs.push_back(std::async(std::launch::async, run, std::cref(s)));
        for (std::size_t i = 0; i < jobs.size(); ++i) sims[i] = jobs[i].get();
    } else {
        for (std::size_t i = 0; i < specs.size(); ++i) sims[i] = run(specs[i]);
    }

    ResultTable table;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto label = specs[i].label();
        const auto it = targets.find(label);
        if (it == targets.end()) throw ValidationError("no target for scenario '" + label + "'");
        const auto& target = it->second;
        if (target.size() != sims[i].size()) {
            throw ValidationError("scenario '" + label + "': target has " + std::to_string(target.size()) +
                                  " frames, rollout has " + std::to_string(sims[i].size()));
        }
        std::vector<std::string> names;
        std::vector<std::vector<double>> columns;
        names.push_back("t");
        columns.push_back(sims[i].frame_times);
        for (auto m : cfg.metrics) {
            const auto report = sequence_metric(sims[i], target, FrameWindow::all(target.size()), m);
            table.add({label, cfg.dataset, std::string(to_string(cfg.method)), std::string(to_string(m)),
                       report.aggregate});
            names.emplace_back(to_string(m));
            columns.push_back(report.per_frame);
        }
        out.write(paths::metrics / (label + ".csv"), format_series_csv(names, columns));
    }
    out.write(paths::results, table.to_csv());
    out.write(paths::results_markdown, table.to_markdown());
    return table;
}

ResultTable run_experiment(const ExperimentConfig& cfg) {
    OutputTracker out(cfg.output_dir);
    try {
        validate(cfg);
        const ClothMesh mesh = build_mesh(cfg.mesh);
        const auto targets = synthesize(cfg, mesh, out);
        const auto est = estimate(cfg, mesh, targets, out);
        auto table = evaluate(cfg, mesh, est.params, targets, out);
        out.commit();
        return table;
    } catch (...) {
        out.rollback();
        throw;
    }
}

}  // namespace fabsim
