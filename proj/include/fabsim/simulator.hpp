#pragma once

#include <cstdint>
#include <vector>

#include "fabsim/constitutive.hpp"
#include "fabsim/mesh.hpp"
#include "fabsim/scenario.hpp"

namespace fabsim {

using PointCloud = std::vector<Vec3>;

struct SimState {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    double time = 0.0;
};

struct PointCloudSequence {
    std::vector<PointCloud> frames;
    std::vector<double> frame_times;

    std::size_t size() const { return frames.size(); }
};

void validate(const PointCloudSequence& seq);

struct SimOptions {
    double bending_stiffness = 1e-5;  // N m, fixed (never estimated)
    // Substep upper bound in seconds; 0 selects suggest_dt for the material.
    double dt = 0.0;
    // 0 emits the mesh nodes; otherwise this many seeded surface samples.
    std::size_t sample_points = 0;
    std::uint64_t seed = 0;
};

// Per-triangle rest data: inverse and Gram matrix of the rest edge basis.
struct TriangleRest {
    Eigen::Matrix2d dm_inv;
    Eigen::Matrix2d metric;
    double area = 0.0;
};

struct ForceDiagnostics {
    std::size_t degenerate_triangles = 0;
};

// Membrane forces: the negative gradient of sum_tri A_tri * W(E) with W the
// strain energy density of the Green strain E.
std::vector<Vec3> internal_forces(const ClothMesh& mesh, const SimState& state, const Material& material,
                                  ForceDiagnostics* diagnostics = nullptr);
double membrane_energy(const ClothMesh& mesh, const std::vector<Vec3>& positions, const Material& material);

// Dihedral hinge springs 1/2 k w theta^2 around the flat rest shape.
double bending_energy(const ClothMesh& mesh, const std::vector<Vec3>& positions, double stiffness);
void add_bending_forces(const ClothMesh& mesh, const std::vector<Vec3>& positions, double stiffness,
                        std::vector<Vec3>& forces);

// 0.25 h sqrt(rho0 / c_max).
double suggest_dt(const ClothMesh& mesh, const Material& material);

std::size_t frame_count(double duration, double output_rate);

SimState initial_state(const ClothMesh& mesh, const Scenario& scenario);

// Stepper with the per-triangle rest data, handle offsets and external forces
// precomputed. Owns its state; the mesh must outlive it.
class Simulator {
public:
    Simulator(const ClothMesh& mesh, const Material& material, const Scenario& scenario,
              const SimOptions& options = {});
    Simulator(const ClothMesh& mesh, const Material& material, const Scenario& scenario,
              const SimOptions& options, SimState state);

    const SimState& state() const { return state_; }
    // One semi-implicit Euler substep. Returns false if the state became
    // non-finite.
    bool advance(double dt);
    std::size_t degenerate_triangles() const { return diagnostics_.degenerate_triangles; }

    // Kinetic + membrane + bending + gravity/wind potential.
    double total_energy() const;
    // Internal + external forces on the current state.
    std::vector<Vec3> net_forces() const;
    const std::vector<bool>& constrained() const { return constrained_; }

private:
    struct BoundHandle {
        std::vector<Index> nodes;
        std::vector<Vec3> offsets;
        std::vector<Keyframe> keyframes;
    };

    void accumulate_forces(std::vector<Vec3>& forces) const;

    const ClothMesh& mesh_;
    Scenario scenario_;
    AnisotropicStiffness stiffness_;
    SimOptions options_;
    SimState state_;
    std::vector<TriangleRest> rest_;
    std::vector<BoundHandle> handles_;
    std::vector<bool> constrained_;
    std::vector<Vec3> external_;
    std::vector<Vec3> forces_;
    mutable ForceDiagnostics diagnostics_;
};

SimState step(const ClothMesh& mesh, const SimState& state, const Material& material, const Scenario& scenario,
              double dt, const SimOptions& options = {});

// Integrates the scenario with fixed substeps and records one cloud per output
// frame, frame k at t = k / output_rate.
PointCloudSequence rollout(const ClothMesh& mesh, const Material& material, const Scenario& scenario,
                           const SimOptions& options = {});

}  // namespace fabsim
