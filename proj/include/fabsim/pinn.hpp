#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fabsim/constitutive.hpp"
#include "fabsim/estimate.hpp"
#include "fabsim/mlp.hpp"

namespace fabsim {

// Affine maps between physical (m, s) and network coordinates.
struct Normalization {
    double x0 = 0.0, x_span = 1.0;
    double y0 = 0.0, y_span = 1.0;
    double t0 = 0.0, t_span = 1.0;
    double u_scale = 1.0;  // network output 1 == u_scale metres

    Eigen::Vector3d normalize(double x, double y, double t) const {
        return {(x - x0) / x_span, (y - y0) / y_span, (t - t0) / t_span};
    }
};

// Displacement field and the derivatives entering the elastodynamic residual,
// in physical units. Component 0 is u_x, component 1 is u_y.
struct FieldDerivatives {
    Vec2 u = Vec2::Zero();
    Vec2 u_x = Vec2::Zero(), u_y = Vec2::Zero(), u_t = Vec2::Zero();
    Vec2 u_xx = Vec2::Zero(), u_xy = Vec2::Zero(), u_yy = Vec2::Zero(), u_tt = Vec2::Zero();
};

FieldDerivatives net_derivatives(const MlpNet& net, const Normalization& norm, double x, double y, double t);
std::vector<FieldDerivatives> net_derivatives(const MlpNet& net, const Normalization& norm,
                                              const Eigen::MatrixXd& physical_points);

// Small-strain measures and their spatial gradients.
Strain2D small_strain(const FieldDerivatives& d);

// Body force enters as rho0 * b (default) or as a bare b.
enum class BodyForceForm { density_weighted, bare };

// rho0 a - div(sigma) - rho0 b, with sigma from the material law applied to
// the small strain of the field.
Vec2 pde_residual(const FieldDerivatives& d, const Material& material, double rho0, const Vec2& body_force,
                  BodyForceForm form = BodyForceForm::density_weighted);
Vec2 pde_residual(const MlpNet& net, const Normalization& norm, const Material& material, double rho0,
                  const Vec2& body_force, double x, double y, double t,
                  BodyForceForm form = BodyForceForm::density_weighted);

struct AnnealSchedule {
    double data_weight0 = 1.0;
    double pde_weight0 = 0.1;
    double pde_increment = 0.1;
    std::size_t period = 500;
    double cap = 1.0;
};

// min(cap, pde_weight0 + pde_increment * floor(epoch / period)).
double anneal_weight(const AnnealSchedule& schedule, std::size_t epoch);

struct MarkerDataset {
    std::vector<Vec2> rest;                        // marker (X, Y), m
    std::vector<double> times;                     // s, strictly increasing
    std::vector<std::vector<Vec2>> displacements;  // [frame][marker], m
    Normalization normalization;

    std::size_t frames() const { return times.size(); }
    std::size_t markers() const { return rest.size(); }
};

// Validates and computes the normalization (spans of X, Y, t; max |u|).
MarkerDataset make_marker_dataset(std::vector<Vec2> rest, std::vector<double> times,
                                  std::vector<std::vector<Vec2>> displacements);

enum class MaterialOptimizer { adam, lbfgs };

std::string_view to_string(MaterialOptimizer m);
MaterialOptimizer parse_material_optimizer(std::string_view name);

struct PinnTrainConfig {
    std::size_t epochs = 10000;
    double data_lr = 1e-4;
    double material_lr = 0.1;
    std::size_t collocation_count = 2048;
    AnnealSchedule anneal;
    // Overrides the schedule, e.g. 0 for pure regression.
    std::optional<double> fixed_pde_weight;
    std::uint64_t seed = 0;
    Vec2 body_force = Vec2::Zero();
    double rho0 = kDefaultArealDensity;
    BodyForceForm body_force_form = BodyForceForm::density_weighted;
    MaterialOptimizer material_optimizer = MaterialOptimizer::adam;
    std::vector<int> widths = default_widths();
    Material init = AnisotropicStiffness{10.0, 1.0, 10.0, 4.0};
    std::vector<Bounds> bounds;  // empty = pinn_default_bounds(init)
    bool freeze_poisson = false;
};

void validate(const PinnTrainConfig& cfg);
std::vector<Bounds> pinn_default_bounds(const Material& m);

// Trainable material coordinates: log for stiffnesses and E, logit of
// nu / 0.5 for Poisson's ratio.
class MaterialParameterization {
public:
    explicit MaterialParameterization(const Material& m);

    const std::vector<double>& theta() const { return theta_; }
    std::vector<double>& theta() { return theta_; }
    Material material() const;
    // d(c11, c12, c22, c33) / d theta, 4 x theta.size().
    Eigen::MatrixXd stiffness_jacobian() const;
    bool isotropic() const { return isotropic_; }

    static std::vector<double> encode(const Material& m);

private:
    bool isotropic_;
    std::vector<double> theta_;
};

struct PinnBatch {
    Eigen::MatrixXd data_inputs;   // 3 x N, normalized
    Eigen::MatrixXd data_targets;  // 2 x N, normalized displacement
    Eigen::MatrixXd collocation;   // 3 x M, normalized
};

struct PinnPhysics {
    double rho0 = kDefaultArealDensity;
    Vec2 body_force = Vec2::Zero();
    BodyForceForm form = BodyForceForm::density_weighted;
};

struct PinnLoss {
    double data = 0.0;   // MSE, m^2
    double pde = 0.0;    // mean squared residual, (N/m^2)^2
    double total = 0.0;  // weighted sum of the nondimensional terms
};

// Characteristic residual used to nondimensionalize the PDE term:
// rho0 u_scale (2 pi / t_span)^2.
double residual_scale(const Normalization& norm, double rho0);

// Evaluates both loss terms; fills the gradients of `total` when the pointers
// are non-null (net_grad is accumulated into, so pass a zeroed gradient).
PinnLoss pinn_loss(const MlpNet& net, const Normalization& norm, const MaterialParameterization& material,
                   const PinnBatch& batch, const PinnPhysics& physics, double data_weight, double pde_weight,
                   MlpGradient* net_grad, std::vector<double>* material_grad);

PinnBatch marker_batch(const MarkerDataset& data);

struct ResidualStats {
    double rms = 0.0;
    double max_abs = 0.0;
};

struct PinnModel {
    MlpNet net;
    Normalization normalization;
    Material material;
};

struct PinnResult {
    PinnModel model;
    std::vector<double> data_loss_history;
    std::vector<double> pde_loss_history;
    ResidualStats final_residual;
    bool material_clamped = false;
};

PinnResult train(const MarkerDataset& data, const PinnTrainConfig& cfg);

// Marker dataset from a simulated in-plane rollout: every mesh node is a
// marker, displacement is the (x, y) offset from its rest position.
MarkerDataset markers_from_sequence(const ClothMesh& mesh, const PointCloudSequence& seq);

}  // namespace fabsim
