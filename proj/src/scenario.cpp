#include "fabsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

constexpr double kGravity = 9.81;

struct KindName {
    ScenarioKind kind;
    std::string_view name;
};

constexpr KindName kKindNames[] = {
    {ScenarioKind::lifting, "lifting"}, {ScenarioKind::stretching, "stretching"},
    {ScenarioKind::wind, "wind"},       {ScenarioKind::folding, "folding"},
    {ScenarioKind::fling, "fling"},     {ScenarioKind::shaking, "shaking"},
};

Vec3 centroid(const std::vector<Vec3>& x, const std::vector<Index>& nodes) {
    Vec3 c = Vec3::Zero();
    for (Index n : nodes) c += x[n];
    return c / static_cast<double>(nodes.size());
}

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

// Samples offset(s), s in [0, 1], at `segments` + 1 evenly spaced times on
// [t0, t1] and appends them (skipping t0 if it is already the last key).
void append_path(std::vector<Keyframe>& keys, const Vec3& origin, double t0, double t1, int segments,
                 const std::function<Vec3(double)>& offset) {
    for (int k = 0; k <= segments; ++k) {
        const double s = static_cast<double>(k) / segments;
        const double t = t0 + s * (t1 - t0);
        if (!keys.empty() && t <= keys.back().t) continue;
        keys.push_back({t, origin + offset(s)});
    }
}

class ParamReader {
public:
    ParamReader(ScenarioKind kind, const ScenarioParams& given)
        : kind_(kind), values_(scenario_parameter_defaults(kind)) {
        for (const auto& [key, value] : given) {
            auto it = values_.find(key);
            if (it == values_.end()) {
                throw ValidationError("scenario '" + std::string(to_string(kind)) +
                                      "' has no parameter '" + key + "'");
            }
            if (!std::isfinite(value)) throw ValidationError("scenario parameter '" + key + "' is not finite");
            it->second = value;
        }
    }

    double get(std::string_view key, double lo, double hi) const {
        const double v = values_.find(key)->second;
        if (v < lo || v > hi) {
            throw ValidationError("scenario '" + std::string(to_string(kind_)) + "' parameter '" +
                                  std::string(key) + "' = " + std::to_string(v) + " outside [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        return v;
    }

    double positive(std::string_view key, double hi) const {
        const double v = get(key, 0.0, hi);
        if (v <= 0.0) throw ValidationError("scenario parameter '" + std::string(key) + "' must be positive");
        return v;
    }

private:
    ScenarioKind kind_;
    ScenarioParams values_;
};

Scenario base(ScenarioKind kind, const ParamReader& p) {
    Scenario s;
    s.kind = kind;
    s.duration = p.positive("duration", 600.0);
    s.output_rate = p.positive("output_rate", 1000.0);
    s.damping = p.get("damping", 0.0, 100.0);
    s.gravity = Vec3(0.0, 0.0, -p.get("gravity", 0.0, 100.0));
    return s;
}

Handle fixed_handle(const std::string& region, const std::vector<Vec3>& x0, const ClothMesh& mesh) {
    return {region, {{0.0, centroid(x0, select_nodes(mesh, region))}}};
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
    for (const auto& kn : kKindNames) {
        if (kn.kind == kind) return kn.name;
    }
    return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
    for (const auto& kn : kKindNames) {
        if (kn.name == name) return kn.kind;
    }
    throw ValidationError("unknown scenario kind '" + std::string(name) + "'");
}

const std::vector<ScenarioKind>& all_scenario_kinds() {
    static const std::vector<ScenarioKind> kinds{ScenarioKind::lifting, ScenarioKind::stretching,
                                                 ScenarioKind::wind,    ScenarioKind::folding,
                                                 ScenarioKind::fling,   ScenarioKind::shaking};
    return kinds;
}

const ScenarioParams& scenario_parameter_defaults(ScenarioKind kind) {
    static const std::map<ScenarioKind, ScenarioParams> defaults{
        {ScenarioKind::lifting,
         {{"duration", 4.0}, {"output_rate", 15.0}, {"damping", 0.5}, {"gravity", kGravity},
          {"height", 0.45}, {"lift_time", 3.0}, {"table", 1.0}, {"friction", 0.5}}},
        {ScenarioKind::stretching,
         {{"duration", 4.0}, {"output_rate", 15.0}, {"damping", 0.5}, {"gravity", 0.0},
          {"displacement", 0.045}, {"pull_time", 1.0}, {"hold_time", 1.0}}},
        {ScenarioKind::wind,
         {{"duration", 4.0}, {"output_rate", 15.0}, {"damping", 0.5}, {"gravity", kGravity},
          {"force_per_area", 0.5}}},
        {ScenarioKind::folding,
         {{"duration", 4.0}, {"output_rate", 15.0}, {"damping", 0.5}, {"gravity", kGravity},
          {"corner", 3.0}, {"fold_time", 3.0}, {"arc_height", 0.15}, {"clearance", 0.01}, {"table", 1.0}, {"friction", 0.5}}},
        {ScenarioKind::fling,
         {{"duration", 4.0}, {"output_rate", 15.0}, {"damping", 0.5}, {"gravity", kGravity},
          {"start_time", 0.5}, {"distance", 0.3}, {"lift", 0.15}, {"speed", 1.5}, {"settle_time", 0.5}}},
        {ScenarioKind::shaking,
         {{"duration", 4.0}, {"output_rate", 15.0}, {"damping", 0.5}, {"gravity", kGravity},
          {"amplitude", 0.05}, {"frequency", 2.0}}},
    };
    return defaults.at(kind);
}

std::vector<Vec3> initial_positions(const ClothMesh& mesh, Placement placement) {
    std::vector<Vec3> x;
    x.reserve(mesh.node_count());
    for (const auto& p : mesh.rest_positions) {
        if (placement == Placement::flat) {
            x.emplace_back(p.x(), p.y(), 0.0);
        } else {
            x.emplace_back(p.x(), 0.0, p.y());
        }
    }
    return x;
}

Vec3 interpolate_keyframes(const std::vector<Keyframe>& keys, double t) {
    if (t <= keys.front().t) return keys.front().position;
    if (t >= keys.back().t) return keys.back().position;
    auto hi = std::upper_bound(keys.begin(), keys.end(), t,
                               [](double v, const Keyframe& k) { return v < k.t; });
    auto lo = hi - 1;
    const double s = (t - lo->t) / (hi->t - lo->t);
    return lo->position + s * (hi->position - lo->position);
}

void validate(const Scenario& s, const ClothMesh& mesh) {
    if (!std::isfinite(s.duration) || s.duration <= 0.0) throw ValidationError("scenario duration must be positive");
    if (!std::isfinite(s.output_rate) || s.output_rate <= 0.0) {
        throw ValidationError("scenario output rate must be positive");
    }
    if (!std::isfinite(s.damping) || s.damping < 0.0) throw ValidationError("damping must be non-negative");
    if (!s.gravity.allFinite()) throw ValidationError("gravity must be finite");
    for (const auto& h : s.handles) {
        select_nodes(mesh, h.region);
        if (h.keyframes.empty()) throw ValidationError("handle '" + h.region + "' has no keyframes");
        for (std::size_t k = 0; k < h.keyframes.size(); ++k) {
            if (!std::isfinite(h.keyframes[k].t) || !h.keyframes[k].position.allFinite()) {
                throw ValidationError("handle '" + h.region + "' has a non-finite keyframe");
            }
            if (k > 0 && h.keyframes[k].t <= h.keyframes[k - 1].t) {
                throw ValidationError("handle '" + h.region + "' keyframe times must be strictly increasing");
            }
        }
    }
    if (s.wind) {
        select_nodes(mesh, s.wind->region);
        if (!std::isfinite(s.wind->force_per_area) || !s.wind->direction.allFinite()) {
            throw ValidationError("wind force must be finite");
        }
    }
}

Scenario make_scenario(ScenarioKind kind, const ScenarioParams& params, const ClothMesh& mesh) {
    const ParamReader p(kind, params);
    Scenario s = base(kind, p);
    const double side = mesh.side;

    switch (kind) {
        case ScenarioKind::lifting: {
            s.placement = Placement::flat;
            const double height = p.get("height", 0.0, 10.0);
            const double lift_time = p.positive("lift_time", s.duration);
            if (p.get("table", 0.0, 1.0) > 0.5) s.table_height = 0.0;
            s.table_friction = p.get("friction", 0.0, 10.0);
            const auto x0 = initial_positions(mesh, s.placement);
            const Vec3 c0 = centroid(x0, select_nodes(mesh, "top_left"));
            s.handles.push_back({"top_left", {{0.0, c0}, {lift_time, c0 + Vec3(0.0, 0.0, height)}}});
            break;
        }
        case ScenarioKind::stretching: {
            s.placement = Placement::flat;
            const double d = p.get("displacement", 0.0, side);
            const double pull = p.positive("pull_time", s.duration);
            const double hold = p.get("hold_time", 0.0, s.duration);
            const auto x0 = initial_positions(mesh, s.placement);
            s.handles.push_back(fixed_handle("left_edge", x0, mesh));
            const Vec3 c0 = centroid(x0, select_nodes(mesh, "right_edge"));
            Handle moving{"right_edge", {{0.0, c0}, {pull, c0 + Vec3(d, 0.0, 0.0)}}};
            if (hold > 0.0) moving.keyframes.push_back({pull + hold, c0 + Vec3(d, 0.0, 0.0)});
            s.handles.push_back(std::move(moving));
            break;
        }
        case ScenarioKind::wind: {
            s.placement = Placement::vertical;
            const auto x0 = initial_positions(mesh, s.placement);
            s.handles.push_back(fixed_handle("top_left", x0, mesh));
            s.handles.push_back(fixed_handle("top_right", x0, mesh));
            s.wind = WindForce{p.get("force_per_area", -100.0, 100.0), "central_region", Vec3::UnitY()};
            break;
        }
        case ScenarioKind::folding: {
            static const char* corners[] = {"bottom_left", "bottom_right", "top_left", "top_right"};
            static const char* opposite[] = {"top_right", "top_left", "bottom_right", "bottom_left"};
            const double c = p.get("corner", 0.0, 3.0);
            if (c != std::floor(c)) throw ValidationError("folding corner must be an integer 0..3");
            const auto ci = static_cast<std::size_t>(c);
            const double fold_time = p.positive("fold_time", s.duration);
            const double arc = p.get("arc_height", 0.0, 10.0);
            const double clearance = p.get("clearance", 0.0, 1.0);
            s.placement = Placement::flat;
            if (p.get("table", 0.0, 1.0) > 0.5) s.table_height = 0.0;
            s.table_friction = p.get("friction", 0.0, 10.0);
            const auto x0 = initial_positions(mesh, s.placement);
            const Vec3 from = centroid(x0, select_nodes(mesh, corners[ci]));
            const Vec3 to = centroid(x0, select_nodes(mesh, opposite[ci]));
            Handle h{corners[ci], {}};
            append_path(h.keyframes, from, 0.0, fold_time, 24, [&](double s01) -> Vec3 {
                const double u = smoothstep(s01);
                return u * (to - from) + Vec3(0.0, 0.0, clearance * u + arc * std::sin(std::numbers::pi * u));
            });
            s.handles.push_back(std::move(h));
            break;
        }
        case ScenarioKind::fling: {
            s.placement = Placement::vertical;
            const double start = p.get("start_time", 0.0, s.duration);
            const double distance = p.get("distance", 0.0, 10.0);
            const double lift = p.get("lift", 0.0, 10.0);
            const double speed = p.positive("speed", 100.0);
            const double settle = p.positive("settle_time", s.duration);
            // Smoothstep peak speed is 1.5x its mean speed.
            const double move_time = std::max(1.5 * distance / speed, 1e-3);
            const auto x0 = initial_positions(mesh, s.placement);
            for (const char* region : {"top_left", "top_right"}) {
                const Vec3 c0 = centroid(x0, select_nodes(mesh, region));
                Handle h{region, {{0.0, c0}}};
                if (start > 0.0) h.keyframes.push_back({start, c0});
                append_path(h.keyframes, c0, start, start + move_time, 12, [&](double s01) -> Vec3 {
                    const double u = smoothstep(s01);
                    return Vec3(0.0, distance * u, lift * u);
                });
                append_path(h.keyframes, c0, start + move_time, start + move_time + settle, 12,
                            [&](double s01) -> Vec3 {
                                return Vec3(0.0, distance, lift * (1.0 - smoothstep(s01)));
                            });
                s.handles.push_back(std::move(h));
            }
            break;
        }
        case ScenarioKind::shaking: {
            s.placement = Placement::vertical;
            const double amplitude = p.get("amplitude", 0.0, 1.0);
            const double frequency = p.positive("frequency", 50.0);
            const auto x0 = initial_positions(mesh, s.placement);
            s.handles.push_back(fixed_handle("top_left", x0, mesh));
            const Vec3 c0 = centroid(x0, select_nodes(mesh, "top_right"));
            Handle h{"top_right", {}};
            // 32 keyframes per period.
            const auto segments = static_cast<int>(std::ceil(32.0 * frequency * s.duration));
            append_path(h.keyframes, c0, 0.0, s.duration, segments, [&](double s01) -> Vec3 {
                const double t = s01 * s.duration;
                return Vec3(0.0, 0.0, amplitude * std::sin(2.0 * std::numbers::pi * frequency * t));
            });
            s.handles.push_back(std::move(h));
            break;
        }
    }
    validate(s, mesh);
    return s;
}

}  // namespace fabsim
