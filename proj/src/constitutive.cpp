#include "fabsim/constitutive.hpp"

#include <cmath>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void validate(const AnisotropicStiffness& c) {
    if (!finite(c.c11) || !finite(c.c12) || !finite(c.c22) || !finite(c.c33)) {
        throw ValidationError("anisotropic stiffness must be finite");
    }
    if (c.c11 <= 0.0 || c.c22 <= 0.0 || c.c33 <= 0.0) {
        throw ValidationError("c11, c22 and c33 must be positive");
    }
    if (c.c11 * c.c22 - c.c12 * c.c12 <= 0.0) {
        throw ValidationError("stiffness is not positive definite (c11 c22 <= c12^2)");
    }
}

void validate(const IsotropicMaterial& m) {
    if (!finite(m.youngs_modulus) || m.youngs_modulus <= 0.0) {
        throw ValidationError("Young's modulus must be finite and positive");
    }
    if (!finite(m.poissons_ratio) || m.poissons_ratio < 0.0 || m.poissons_ratio >= 0.5) {
        throw ValidationError("Poisson's ratio must lie in [0, 0.5)");
    }
}

void validate(const Material& m) {
    std::visit([](const auto& v) { validate(v); }, m);
}

bool is_valid(const Material& m) noexcept {
    try {
        validate(m);
        return true;
    } catch (const ValidationError&) {
        return false;
    }
}

Strain2D green_strain(const DeformationGradient& F) {
    const auto f1 = F.col(0);
    const auto f2 = F.col(1);
    return {0.5 * (f1.dot(f1) - 1.0), 0.5 * (f2.dot(f2) - 1.0), 0.5 * f1.dot(f2)};
}

Stress2D stress_anisotropic(const AnisotropicStiffness& c, const Strain2D& e) {
    return {c.c11 * e.eps_x + c.c12 * e.eps_y,
            c.c12 * e.eps_x + c.c22 * e.eps_y,
            c.c33 * e.eps_xy};
}

double plane_strain_factor(const IsotropicMaterial& m) {
    const double nu = m.poissons_ratio;
    return m.youngs_modulus / ((1.0 + nu) * (1.0 - 2.0 * nu));
}

double plane_strain_modulus(const IsotropicMaterial& m) {
    return plane_strain_factor(m) * (1.0 - m.poissons_ratio);
}

Stress2D stress_isotropic(const IsotropicMaterial& m, const Strain2D& e) {
    const double nu = m.poissons_ratio;
    const double k = plane_strain_factor(m);
    return {k * ((1.0 - nu) * e.eps_x + nu * e.eps_y),
            k * (nu * e.eps_x + (1.0 - nu) * e.eps_y),
            m.youngs_modulus / (2.0 * (1.0 + nu)) * e.eps_xy};
}

Stress2D stress(const Material& m, const Strain2D& e) {
    return std::visit(
        [&](const auto& v) {
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, AnisotropicStiffness>) {
                return stress_anisotropic(v, e);
            } else {
                return stress_isotropic(v, e);
            }
        },
        m);
}

AnisotropicStiffness isotropic_to_anisotropic(const IsotropicMaterial& m) {
    const double nu = m.poissons_ratio;
    const double k = plane_strain_factor(m);
    return {k * (1.0 - nu), k * nu, k * (1.0 - nu), m.youngs_modulus / (2.0 * (1.0 + nu))};
}

AnisotropicStiffness to_anisotropic(const Material& m) {
    if (const auto* iso = std::get_if<IsotropicMaterial>(&m)) return isotropic_to_anisotropic(*iso);
    return std::get<AnisotropicStiffness>(m);
}

double strain_energy_density(const Stress2D& s, const Strain2D& e) {
    return 0.5 * (s.sigma_xx * e.eps_x + s.sigma_yy * e.eps_y + 2.0 * s.sigma_xy * e.eps_xy);
}

}  // namespace fabsim
