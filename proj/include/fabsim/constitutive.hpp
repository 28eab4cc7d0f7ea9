#pragma once

#include <variant>

#include <Eigen/Core>

namespace fabsim {

// Tensor strain components; eps_xy is the symmetric (not engineering) shear.
struct Strain2D {
    double eps_x = 0.0;
    double eps_y = 0.0;
    double eps_xy = 0.0;
};

// Membrane (thickness-integrated) stress, N/m.
struct Stress2D {
    double sigma_xx = 0.0;
    double sigma_yy = 0.0;
    double sigma_xy = 0.0;
};

// Orthotropic membrane stiffness, N/m: c11 weft, c22 warp, c12 coupling,
// c33 shear.
struct AnisotropicStiffness {
    double c11 = 0.0;
    double c12 = 0.0;
    double c22 = 0.0;
    double c33 = 0.0;
};

// Thickness-scaled Young's modulus (N/m) and Poisson's ratio.
struct IsotropicMaterial {
    double youngs_modulus = 0.0;
    double poissons_ratio = 0.0;
};

using Material = std::variant<AnisotropicStiffness, IsotropicMaterial>;

// Throw ValidationError when the type invariants do not hold.
void validate(const AnisotropicStiffness& c);
void validate(const IsotropicMaterial& m);
void validate(const Material& m);
bool is_valid(const Material& m) noexcept;

using DeformationGradient = Eigen::Matrix<double, 3, 2>;

// Green strain 1/2 (F^T F - I) of a 3D-embedded membrane.
Strain2D green_strain(const DeformationGradient& F);

Stress2D stress_anisotropic(const AnisotropicStiffness& c, const Strain2D& e);
Stress2D stress_isotropic(const IsotropicMaterial& m, const Strain2D& e);
Stress2D stress(const Material& m, const Strain2D& e);

// E / ((1 + nu)(1 - 2 nu)).
double plane_strain_factor(const IsotropicMaterial& m);
// Uniaxial constrained modulus E (1 - nu) / ((1 + nu)(1 - 2 nu)).
double plane_strain_modulus(const IsotropicMaterial& m);

AnisotropicStiffness isotropic_to_anisotropic(const IsotropicMaterial& m);
AnisotropicStiffness to_anisotropic(const Material& m);

// sigma : eps / 2 with the tensor contraction, i.e. shear counted twice.
double strain_energy_density(const Stress2D& s, const Strain2D& e);

}  // namespace fabsim
