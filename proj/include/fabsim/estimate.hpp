#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fabsim/constitutive.hpp"
#include "fabsim/metrics.hpp"
#include "fabsim/scenario.hpp"
#include "fabsim/simulator.hpp"

namespace fabsim {

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;
};

enum class OptimizerKind { fd_adam, nelder_mead };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view name);

struct FitConfig {
    Material init = AnisotropicStiffness{};
    // One per material parameter: (c11, c12, c22, c33) or (E, nu).
    std::vector<Bounds> bounds;
    FrameWindow frame_window;
    OptimizerKind optimizer = OptimizerKind::fd_adam;
    int max_iters = 100;
    double fd_rel_step = 1e-3;
    double learning_rate = 0.05;  // in log-parameter space
    double loss_tol = 1e-6;       // m
    bool backtracking = true;
    double nm_spread = 0.1;  // initial simplex spread, relative
    unsigned threads = 1;    // parallel objective evaluations
    std::uint64_t seed = 0;
};

void validate(const FitConfig& cfg);

struct FitResult {
    Material params;
    std::vector<double> loss_history;
    std::size_t evals = 0;
    std::size_t diverged_evals = 0;
    bool converged = false;
    std::string reason;
};

// Parameter vector <-> material. Anisotropic: (c11, c12, c22, c33);
// isotropic: (E, nu).
std::vector<double> material_parameters(const Material& m);
Material material_from_parameters(const Material& like, const std::vector<double>& p);
std::vector<std::string> material_parameter_names(const Material& m);
std::vector<Bounds> default_bounds(const Material& m);

struct ObjectiveValue {
    double loss = 0.0;
    bool diverged = false;
};

// Rolls the scenario out with `params` and averages the one-sided Chamfer
// distance (simulated -> target) over the window. A diverged or invalid
// parameter set is reported through the flag rather than thrown.
ObjectiveValue objective(const Material& params, const ClothMesh& mesh, const Scenario& scenario,
                         const PointCloudSequence& target, FrameWindow window, const SimOptions& options = {});

// Optimizer-space objective for the generic minimizers.
using VectorObjective = std::function<ObjectiveValue(const std::vector<double>&)>;

struct MinimizeOptions {
    int max_iters = 100;
    double loss_tol = 1e-6;
    double learning_rate = 0.05;
    double fd_step = 1e-3;   // absolute, in optimizer coordinates
    bool backtracking = true;
    double nm_spread = 0.1;  // relative; absolute 0.1 when a coordinate is 0
    std::vector<double> nm_steps;  // absolute per-coordinate steps; overrides nm_spread
    std::vector<Bounds> bounds;  // empty = unbounded
    unsigned threads = 1;
};

struct MinimizeResult {
    std::vector<double> x;
    double loss = 0.0;
    std::vector<double> loss_history;
    std::size_t evals = 0;
    std::size_t diverged_evals = 0;
    bool converged = false;
    std::string reason;
};

// Reflection 1, expansion 2, contraction 0.5, shrink 0.5.
MinimizeResult minimize_nelder_mead(const VectorObjective& f, std::vector<double> x0, const MinimizeOptions& opt);
// Adam on a central finite-difference gradient, iterates clamped to bounds.
MinimizeResult minimize_fd_adam(const VectorObjective& f, std::vector<double> x0, const MinimizeOptions& opt);

// Fits in log-parameter space through the rollout objective.
FitResult fit(const FitConfig& cfg, const ClothMesh& mesh, const Scenario& scenario,
              const PointCloudSequence& target, const SimOptions& options = {});

// Same optimizer plumbing over an injected material objective.
using MaterialObjective = std::function<ObjectiveValue(const Material&)>;
FitResult fit(const FitConfig& cfg, const MaterialObjective& objective);

// Substep bound used during a fit: suggest_dt at the stiffest corner of the
// bounds, so every candidate shares one time discretization.
double fit_time_step(const ClothMesh& mesh, const FitConfig& cfg);

}  // namespace fabsim
