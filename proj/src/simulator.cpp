#include "fabsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

constexpr double kDegenerateCross = 1e-12;

Eigen::Matrix2d rest_basis(const ClothMesh& mesh, const Triangle& t) {
    Eigen::Matrix2d dm;
    dm.col(0) = mesh.rest_positions[t[1]] - mesh.rest_positions[t[0]];
    dm.col(1) = mesh.rest_positions[t[2]] - mesh.rest_positions[t[0]];
    return dm;
}

TriangleRest rest_frame(const ClothMesh& mesh, const Triangle& t) {
    const Eigen::Matrix2d dm = rest_basis(mesh, t);
    return {dm.inverse(), dm.transpose() * dm, mesh.rest_area(t)};
}

Eigen::Matrix<double, 3, 2> edge_matrix(const std::vector<Vec3>& x, const Triangle& t) {
    Eigen::Matrix<double, 3, 2> ds;
    ds.col(0) = x[t[1]] - x[t[0]];
    ds.col(1) = x[t[2]] - x[t[0]];
    return ds;
}

// Green strain from the change of the edge metric, so an undeformed triangle
// gives exactly zero strain rather than rounding noise from Ds Dm^-1.
Strain2D metric_strain(const Eigen::Matrix<double, 3, 2>& ds, const TriangleRest& r) {
    const Eigen::Matrix2d g = ds.transpose() * ds - r.metric;
    const Eigen::Matrix2d e = 0.5 * r.dm_inv.transpose() * g * r.dm_inv;
    return {e(0, 0), e(1, 1), 0.5 * (e(0, 1) + e(1, 0))};
}

double triangle_energy(const std::vector<Vec3>& x, const Triangle& t, const TriangleRest& r,
                       const AnisotropicStiffness& c) {
    const Strain2D e = metric_strain(edge_matrix(x, t), r);
    return r.area * strain_energy_density(stress_anisotropic(c, e), e);
}

// Adds -area * dW/dx for one triangle. Returns false for a collapsed triangle.
bool add_triangle_forces(const std::vector<Vec3>& x, const Triangle& t, const TriangleRest& r,
                         const AnisotropicStiffness& c, std::vector<Vec3>& f) {
    const Eigen::Matrix<double, 3, 2> ds = edge_matrix(x, t);
    const DeformationGradient F = ds * r.dm_inv;
    if (F.col(0).cross(F.col(1)).norm() < kDegenerateCross) return false;
    const Stress2D s = stress_anisotropic(c, metric_strain(ds, r));
    Eigen::Matrix2d S;
    S << s.sigma_xx, s.sigma_xy, s.sigma_xy, s.sigma_yy;
    const Eigen::Matrix<double, 3, 2> H = -r.area * (F * S) * r.dm_inv.transpose();
    f[t[1]] += H.col(0);
    f[t[2]] += H.col(1);
    f[t[0]] -= H.col(0) + H.col(1);
    return true;
}

struct HingeGeometry {
    double theta;
    Vec3 grad[4];  // d theta / d (v0, v1, opp0, opp1)
};

HingeGeometry hinge_geometry(const std::vector<Vec3>& x, const Hinge& h) {
    const Vec3& x0 = x[h.v0];
    const Vec3& x1 = x[h.v1];
    const Vec3& xa = x[h.opp0];
    const Vec3& xb = x[h.opp1];
    const Vec3 e = x1 - x0;
    const double len = e.norm();
    const Vec3 na = e.cross(xa - x0);
    const Vec3 nb = (xb - x0).cross(e);
    const double na2 = na.squaredNorm();
    const double nb2 = nb.squaredNorm();
    HingeGeometry g{};
    if (len == 0.0 || na2 == 0.0 || nb2 == 0.0) {
        g.theta = 0.0;
        for (auto& v : g.grad) v.setZero();
        return g;
    }
    const Vec3 e_hat = e / len;
    g.theta = std::atan2(na.cross(nb).dot(e_hat), na.dot(nb));
    const Vec3 ua = na / na2;
    const Vec3 ub = nb / nb2;
    g.grad[2] = -len * ua;
    g.grad[3] = -len * ub;
    g.grad[0] = -((xa - x1).dot(e_hat) * ua + (xb - x1).dot(e_hat) * ub);
    g.grad[1] = (xa - x0).dot(e_hat) * ua + (xb - x0).dot(e_hat) * ub;
    return g;
}

void require_consistent(const ClothMesh& mesh, const std::vector<Vec3>& positions) {
    if (positions.size() != mesh.node_count()) {
        throw ValidationError("state has " + std::to_string(positions.size()) + " nodes, mesh has " +
                              std::to_string(mesh.node_count()));
    }
}

bool all_finite(const std::vector<Vec3>& v) {
    return std::all_of(v.begin(), v.end(), [](const Vec3& p) { return p.allFinite(); });
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

struct SurfaceSample {
    Index triangle;
    double b0, b1, b2;
};

std::vector<SurfaceSample> draw_surface_samples(const ClothMesh& mesh, std::size_t count, std::uint64_t seed) {
    std::vector<double> cumulative;
    cumulative.reserve(mesh.triangles.size());
    double total = 0.0;
    for (const auto& t : mesh.triangles) {
        total += mesh.rest_area(t);
        cumulative.push_back(total);
    }
    std::mt19937_64 rng(seed);
    std::vector<SurfaceSample> samples;
    samples.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double pick = uniform01(rng) * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
        const auto tri = static_cast<Index>(std::min<std::ptrdiff_t>(
            it - cumulative.begin(), static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
        double r1 = uniform01(rng), r2 = uniform01(rng);
        if (r1 + r2 > 1.0) {
            r1 = 1.0 - r1;
            r2 = 1.0 - r2;
        }
        samples.push_back({tri, 1.0 - r1 - r2, r1, r2});
    }
    return samples;
}

PointCloud emit_cloud(const ClothMesh& mesh, const std::vector<Vec3>& x, const std::vector<SurfaceSample>& samples) {
    if (samples.empty()) return x;
    PointCloud cloud;
    cloud.reserve(samples.size());
    for (const auto& s : samples) {
        const auto& t = mesh.triangles[s.triangle];
        cloud.push_back(s.b0 * x[t[0]] + s.b1 * x[t[1]] + s.b2 * x[t[2]]);
    }
    return cloud;
}

}  // namespace

void validate(const PointCloudSequence& seq) {
    if (seq.frames.size() != seq.frame_times.size()) {
        throw ValidationError("point cloud sequence has mismatched frame and time counts");
    }
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
        if (seq.frames[k].empty()) throw ValidationError("frame " + std::to_string(k) + " is empty");
    }
}

std::vector<Vec3> internal_forces(const ClothMesh& mesh, const SimState& state, const Material& material,
                                  ForceDiagnostics* diagnostics) {
    require_consistent(mesh, state.positions);
    const AnisotropicStiffness c = to_anisotropic(material);
    std::vector<Vec3> f(mesh.node_count(), Vec3::Zero());
    for (const auto& t : mesh.triangles) {
        if (!add_triangle_forces(state.positions, t, rest_frame(mesh, t), c, f) &&
            diagnostics) {
            ++diagnostics->degenerate_triangles;
        }
    }
    return f;
}

double membrane_energy(const ClothMesh& mesh, const std::vector<Vec3>& positions, const Material& material) {
    require_consistent(mesh, positions);
    const AnisotropicStiffness c = to_anisotropic(material);
    double energy = 0.0;
    for (const auto& t : mesh.triangles) energy += triangle_energy(positions, t, rest_frame(mesh, t), c);
    return energy;
}

double bending_energy(const ClothMesh& mesh, const std::vector<Vec3>& positions, double stiffness) {
    double energy = 0.0;
    for (const auto& h : mesh.hinges) {
        const double theta = hinge_geometry(positions, h).theta;
        energy += 0.5 * stiffness * h.rest_weight * theta * theta;
    }
    return energy;
}

void add_bending_forces(const ClothMesh& mesh, const std::vector<Vec3>& positions, double stiffness,
                        std::vector<Vec3>& forces) {
    if (stiffness == 0.0) return;
    for (const auto& h : mesh.hinges) {
        const HingeGeometry g = hinge_geometry(positions, h);
        const double scale = -stiffness * h.rest_weight * g.theta;
        forces[h.v0] += scale * g.grad[0];
        forces[h.v1] += scale * g.grad[1];
        forces[h.opp0] += scale * g.grad[2];
        forces[h.opp1] += scale * g.grad[3];
    }
}

double suggest_dt(const ClothMesh& mesh, const Material& material) {
    validate(material);
    double c_max = 0.0;
    if (const auto* iso = std::get_if<IsotropicMaterial>(&material)) {
        c_max = plane_strain_factor(*iso);
    } else {
        const auto& c = std::get<AnisotropicStiffness>(material);
        c_max = std::max({c.c11, std::abs(c.c12), c.c22, c.c33});
    }
    return 0.25 * mesh.min_edge_length() * std::sqrt(mesh.areal_density / c_max);
}

std::size_t frame_count(double duration, double output_rate) {
    if (!(duration > 0.0) || !(output_rate > 0.0)) throw ValidationError("duration and rate must be positive");
    // Tolerate products like 4.1 * 15 landing a hair under an integer.
    const double product = duration * output_rate;
    return static_cast<std::size_t>(std::floor(product + 1e-9 * std::max(1.0, product))) + 1;
}

SimState initial_state(const ClothMesh& mesh, const Scenario& scenario) {
    SimState s;
    s.positions = initial_positions(mesh, scenario.placement);
    s.velocities.assign(mesh.node_count(), Vec3::Zero());
    return s;
}

Simulator::Simulator(const ClothMesh& mesh, const Material& material, const Scenario& scenario,
                     const SimOptions& options)
    : Simulator(mesh, material, scenario, options, initial_state(mesh, scenario)) {}

Simulator::Simulator(const ClothMesh& mesh, const Material& material, const Scenario& scenario,
                     const SimOptions& options, SimState state)
    : mesh_(mesh), scenario_(scenario), stiffness_(to_anisotropic(material)), options_(options),
      state_(std::move(state)) {
    validate(material);
    validate(scenario_, mesh_);
    require_consistent(mesh_, state_.positions);
    require_consistent(mesh_, state_.velocities);

    rest_.reserve(mesh_.triangles.size());
    for (const auto& t : mesh_.triangles) rest_.push_back(rest_frame(mesh_, t));

    // Offsets come from the scripted rest placement so that replaying from an
    // intermediate state keeps the grip geometry.
    const auto rest_x = initial_positions(mesh_, scenario_.placement);
    constrained_.assign(mesh_.node_count(), false);
    for (const auto& h : scenario_.handles) {
        BoundHandle b{select_nodes(mesh_, h.region), {}, h.keyframes};
        Vec3 c = Vec3::Zero();
        for (Index n : b.nodes) c += rest_x[n];
        c /= static_cast<double>(b.nodes.size());
        for (Index n : b.nodes) {
            b.offsets.push_back(rest_x[n] - c);
            constrained_[n] = true;
        }
        handles_.push_back(std::move(b));
    }

    external_.assign(mesh_.node_count(), Vec3::Zero());
    for (Index n = 0; n < mesh_.node_count(); ++n) external_[n] = mesh_.node_masses[n] * scenario_.gravity;
    if (scenario_.wind) {
        const auto areas = mesh_.node_areas();
        const Vec3 dir = scenario_.wind->direction.normalized();
        for (Index n : select_nodes(mesh_, scenario_.wind->region)) {
            external_[n] += scenario_.wind->force_per_area * areas[n] * dir;
        }
    }
    forces_.assign(mesh_.node_count(), Vec3::Zero());
}

void Simulator::accumulate_forces(std::vector<Vec3>& forces) const {
    forces = external_;
    for (std::size_t k = 0; k < mesh_.triangles.size(); ++k) {
        if (!add_triangle_forces(state_.positions, mesh_.triangles[k], rest_[k], stiffness_, forces)) {
            ++diagnostics_.degenerate_triangles;
        }
    }
    add_bending_forces(mesh_, state_.positions, options_.bending_stiffness, forces);
}

std::vector<Vec3> Simulator::net_forces() const {
    std::vector<Vec3> f;
    accumulate_forces(f);
    return f;
}

bool Simulator::advance(double dt) {
    accumulate_forces(forces_);
    const double decay = 1.0 - scenario_.damping * dt;
    auto& x = state_.positions;
    auto& v = state_.velocities;
    for (Index n = 0; n < mesh_.node_count(); ++n) {
        v[n] = (v[n] + (dt / mesh_.node_masses[n]) * forces_[n]) * decay;
        x[n] += dt * v[n];
    }
    const double t0 = state_.time;
    const double t1 = t0 + dt;
    if (scenario_.table_height) {
        const double z = *scenario_.table_height;
        for (Index n = 0; n < mesh_.node_count(); ++n) {
            if (!constrained_[n] && x[n].z() < z) {
                x[n].z() = z;
                const double impulse = std::max(-v[n].z(), 0.0);
                v[n].z() += impulse;
                const double vt = v[n].head<2>().norm();
                if (vt > 0.0) v[n].head<2>() *= std::max(0.0, 1.0 - scenario_.table_friction * impulse / vt);
            }
        }
    }
    for (const auto& h : handles_) {
        const Vec3 a0 = interpolate_keyframes(h.keyframes, t0);
        const Vec3 a1 = interpolate_keyframes(h.keyframes, t1);
        const Vec3 vel = (a1 - a0) / dt;
        for (std::size_t k = 0; k < h.nodes.size(); ++k) {
            x[h.nodes[k]] = a1 + h.offsets[k];
            v[h.nodes[k]] = vel;
        }
    }
    state_.time = t1;
    return all_finite(x) && all_finite(v);
}

double Simulator::total_energy() const {
    const auto& x = state_.positions;
    const auto& v = state_.velocities;
    double kinetic = 0.0, potential = 0.0;
    for (Index n = 0; n < mesh_.node_count(); ++n) {
        kinetic += 0.5 * mesh_.node_masses[n] * v[n].squaredNorm();
        potential -= external_[n].dot(x[n]);
    }
    double elastic = 0.0;
    for (std::size_t k = 0; k < mesh_.triangles.size(); ++k) {
        elastic += triangle_energy(x, mesh_.triangles[k], rest_[k], stiffness_);
    }
    return kinetic + potential + elastic + bending_energy(mesh_, x, options_.bending_stiffness);
}

SimState step(const ClothMesh& mesh, const SimState& state, const Material& material, const Scenario& scenario,
              double dt, const SimOptions& options) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("time step must be positive");
    Simulator sim(mesh, material, scenario, options, state);
    if (!sim.advance(dt)) {
        const auto frame = static_cast<std::size_t>(std::ceil(state.time * scenario.output_rate));
        throw SimulationDiverged(frame);
    }
    return sim.state();
}

PointCloudSequence rollout(const ClothMesh& mesh, const Material& material, const Scenario& scenario,
                           const SimOptions& options) {
    validate(material);
    validate(scenario, mesh);
    const double dt_max = options.dt > 0.0 ? std::min(options.dt, suggest_dt(mesh, material))
                                           : suggest_dt(mesh, material);
    const std::size_t frames = frame_count(scenario.duration, scenario.output_rate);
    const double interval = 1.0 / scenario.output_rate;
    const auto substeps = static_cast<std::size_t>(std::max(1.0, std::ceil(interval / dt_max - 1e-9)));
    const double dt = interval / static_cast<double>(substeps);

    const auto samples = draw_surface_samples(mesh, options.sample_points, options.seed);
    Simulator sim(mesh, material, scenario, options);

    PointCloudSequence out;
    out.frames.reserve(frames);
    out.frame_times.reserve(frames);
    out.frames.push_back(emit_cloud(mesh, sim.state().positions, samples));
    out.frame_times.push_back(0.0);
    for (std::size_t k = 1; k < frames; ++k) {
        for (std::size_t s = 0; s < substeps; ++s) {
            if (!sim.advance(dt)) throw SimulationDiverged(k);
        }
        out.frames.push_back(emit_cloud(mesh, sim.state().positions, samples));
        out.frame_times.push_back(static_cast<double>(k) * interval);
    }
    return out;
}

}  // namespace fabsim
