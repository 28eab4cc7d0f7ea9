#include "fabsim/pinn.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <random>

#include "fabsim/error.hpp"
#include "fabsim/simulator.hpp"

namespace fabsim {

namespace {

using Eigen::MatrixXd;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

struct ChannelScales {
    double u, x, y, t, xx, xy, yy, tt;
};

ChannelScales channel_scales(const Normalization& n) {
    const double s = n.u_scale;
    return {s,
            s / n.x_span,
            s / n.y_span,
            s / n.t_span,
            s / (n.x_span * n.x_span),
            s / (n.x_span * n.y_span),
            s / (n.y_span * n.y_span),
            s / (n.t_span * n.t_span)};
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

class Adam {
public:
    Adam(Eigen::Index size, double lr) : lr_(lr), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {}

    void step(Eigen::VectorXd& x, const Eigen::VectorXd& g) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        ++t_;
        m_ = b1 * m_ + (1.0 - b1) * g;
        v_ = b2 * v_ + (1.0 - b2) * g.cwiseAbs2();
        const double c1 = 1.0 - std::pow(b1, t_);
        const double c2 = 1.0 - std::pow(b2, t_);
        x.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

private:
    double lr_;
    int t_ = 0;
    Eigen::VectorXd m_, v_;
};

// Limited-memory BFGS direction from a short (s, y) history, fixed step size.
class Lbfgs {
public:
    explicit Lbfgs(double lr) : lr_(lr) {}

    void step(Eigen::VectorXd& x, const Eigen::VectorXd& g) {
        if (prev_x_.size() == x.size()) {
            const Eigen::VectorXd s = x - prev_x_;
            const Eigen::VectorXd y = g - prev_g_;
            if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
                history_.push_back({s, y});
                if (history_.size() > kMemory) history_.pop_front();
            }
        }
        prev_x_ = x;
        prev_g_ = g;
        Eigen::VectorXd q = g;
        if (history_.empty()) {
            const double gn = g.norm();
            if (gn > 0.0) x -= lr_ * g / gn;
            return;
        }
        std::vector<double> alpha(history_.size());
        for (std::size_t i = history_.size(); i-- > 0;) {
            const auto& [s, y] = history_[i];
            alpha[i] = s.dot(q) / y.dot(s);
            q -= alpha[i] * y;
        }
        const auto& [s_last, y_last] = history_.back();
        q *= s_last.dot(y_last) / y_last.squaredNorm();
        for (std::size_t i = 0; i < history_.size(); ++i) {
            const auto& [s, y] = history_[i];
            const double beta = y.dot(q) / y.dot(s);
            q += (alpha[i] - beta) * s;
        }
        x -= lr_ * q;
    }

private:
    static constexpr std::size_t kMemory = 8;
    double lr_;
    Eigen::VectorXd prev_x_, prev_g_;
    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> history_;
};

}  // namespace

std::vector<FieldDerivatives> net_derivatives(const MlpNet& net, const Normalization& norm,
                                              const MatrixXd& physical_points) {
    MatrixXd in(3, physical_points.cols());
    for (Eigen::Index i = 0; i < in.cols(); ++i) {
        in.col(i) = norm.normalize(physical_points(0, i), physical_points(1, i), physical_points(2, i));
    }
    const auto cache = forward(net, in, true);
    const Eigen::Index n = in.cols();
    const auto sc = channel_scales(norm);
    auto ch = [&](int c, Eigen::Index i) -> Vec2 { return cache.output.col(c * n + i); };
    std::vector<FieldDerivatives> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& d = out[static_cast<std::size_t>(i)];
        d.u = sc.u * ch(kValue, i);
        d.u_x = sc.x * ch(kDx, i);
        d.u_y = sc.y * ch(kDy, i);
        d.u_t = sc.t * ch(kDt, i);
        d.u_xx = sc.xx * ch(kDxx, i);
        d.u_xy = sc.xy * ch(kDxy, i);
        d.u_yy = sc.yy * ch(kDyy, i);
        d.u_tt = sc.tt * ch(kDtt, i);
    }
    return out;
}

FieldDerivatives net_derivatives(const MlpNet& net, const Normalization& norm, double x, double y, double t) {
    return net_derivatives(net, norm, Eigen::Vector3d(x, y, t)).front();
}

Strain2D small_strain(const FieldDerivatives& d) {
    return {d.u_x[0], d.u_y[1], 0.5 * (d.u_y[0] + d.u_x[1])};
}

Vec2 pde_residual(const FieldDerivatives& d, const Material& material, double rho0, const Vec2& body_force,
                  BodyForceForm form) {
    // The laws are linear, so the stress gradient is the stress of the strain
    // gradient.
    const Strain2D de_dx{d.u_xx[0], d.u_xy[1], 0.5 * (d.u_xy[0] + d.u_xx[1])};
    const Strain2D de_dy{d.u_xy[0], d.u_yy[1], 0.5 * (d.u_yy[0] + d.u_xy[1])};
    const Stress2D ds_dx = stress(material, de_dx);
    const Stress2D ds_dy = stress(material, de_dy);
    const Vec2 divergence(ds_dx.sigma_xx + ds_dy.sigma_xy, ds_dy.sigma_yy + ds_dx.sigma_xy);
    const Vec2 body = form == BodyForceForm::density_weighted ? Vec2(rho0 * body_force) : body_force;
    return rho0 * d.u_tt - divergence - body;
}

Vec2 pde_residual(const MlpNet& net, const Normalization& norm, const Material& material, double rho0,
                  const Vec2& body_force, double x, double y, double t, BodyForceForm form) {
    return pde_residual(net_derivatives(net, norm, x, y, t), material, rho0, body_force, form);
}

double anneal_weight(const AnnealSchedule& s, std::size_t epoch) {
    const double steps = static_cast<double>(epoch / s.period);
    // Snapped to a 1e-12 grid so decimal schedules give decimal weights
    // (0.1 + 2 * 0.1 is 0.30000000000000004 otherwise).
    const double w = std::round((s.pde_weight0 + s.pde_increment * steps) * 1e12) / 1e12;
    return std::min(s.cap, w);
}

MarkerDataset make_marker_dataset(std::vector<Vec2> rest, std::vector<double> times,
                                  std::vector<std::vector<Vec2>> displacements) {
    if (rest.empty()) throw ValidationError("marker dataset has no markers");
    if (times.size() < 2) throw ValidationError("marker dataset needs at least two frames");
    if (displacements.size() != times.size()) throw ValidationError("displacement frames do not match times");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!std::isfinite(times[k])) throw ValidationError("non-finite marker time");
        if (k > 0 && times[k] <= times[k - 1]) throw ValidationError("marker times must be strictly increasing");
        if (displacements[k].size() != rest.size()) {
            throw ValidationError("frame " + std::to_string(k) + " does not have one displacement per marker");
        }
        for (const auto& u : displacements[k]) {
            if (!u.allFinite()) throw ValidationError("non-finite displacement in frame " + std::to_string(k));
        }
    }
    for (const auto& p : rest) {
        if (!p.allFinite()) throw ValidationError("non-finite marker position");
    }

    MarkerDataset d{std::move(rest), std::move(times), std::move(displacements), {}};
    Vec2 lo = d.rest.front(), hi = d.rest.front();
    for (const auto& p : d.rest) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    auto span = [](double v) { return v > 0.0 ? v : 1.0; };
    auto& n = d.normalization;
    n.x0 = lo.x();
    n.x_span = span(hi.x() - lo.x());
    n.y0 = lo.y();
    n.y_span = span(hi.y() - lo.y());
    n.t0 = d.times.front();
    n.t_span = d.times.back() - d.times.front();
    double u_max = 0.0;
    for (const auto& frame : d.displacements) {
        for (const auto& u : frame) u_max = std::max(u_max, u.cwiseAbs().maxCoeff());
    }
    n.u_scale = span(u_max);
    return d;
}

std::string_view to_string(MaterialOptimizer m) { return m == MaterialOptimizer::adam ? "adam" : "lbfgs"; }

MaterialOptimizer parse_material_optimizer(std::string_view name) {
    if (name == "adam") return MaterialOptimizer::adam;
    if (name == "lbfgs") return MaterialOptimizer::lbfgs;
    throw ValidationError("unknown material optimizer '" + std::string(name) + "'");
}

std::vector<Bounds> pinn_default_bounds(const Material& m) {
    if (std::holds_alternative<AnisotropicStiffness>(m)) {
        return {{1e-4, 1e4}, {-1e4, 1e4}, {1e-4, 1e4}, {1e-4, 1e4}};
    }
    return {{1e-4, 1e4}, {1e-4, 0.49}};
}

void validate(const PinnTrainConfig& cfg) {
    validate(cfg.init);
    if (!(cfg.data_lr > 0.0) || !(cfg.material_lr > 0.0)) throw ValidationError("learning rates must be positive");
    if (cfg.collocation_count == 0) throw ValidationError("collocation_count must be positive");
    if (cfg.anneal.period == 0) throw ValidationError("annealing period must be positive");
    if (cfg.anneal.cap < cfg.anneal.pde_weight0) throw ValidationError("annealing cap below the initial PDE weight");
    if (!(cfg.rho0 > 0.0) || !std::isfinite(cfg.rho0)) throw ValidationError("rho0 must be positive");
    if (!cfg.body_force.allFinite()) throw ValidationError("body force must be finite");
    if (cfg.fixed_pde_weight && !(*cfg.fixed_pde_weight >= 0.0)) {
        throw ValidationError("fixed PDE weight must be non-negative");
    }
    if (cfg.freeze_poisson && !std::holds_alternative<IsotropicMaterial>(cfg.init)) {
        throw ValidationError("freeze_poisson applies to the isotropic material only");
    }
    const auto n = material_parameters(cfg.init).size();
    if (!cfg.bounds.empty() && cfg.bounds.size() != n) throw ValidationError("PINN bounds do not match the material");
    MlpNet probe(cfg.widths);
    (void)probe;
}

MaterialParameterization::MaterialParameterization(const Material& m)
    : isotropic_(std::holds_alternative<IsotropicMaterial>(m)), theta_(encode(m)) {}

std::vector<double> MaterialParameterization::encode(const Material& m) {
    validate(m);
    if (const auto* c = std::get_if<AnisotropicStiffness>(&m)) {
        // c12 = sqrt(c11 c22) tanh(theta12) keeps the stiffness positive definite.
        return {std::log(c->c11), std::atanh(c->c12 / std::sqrt(c->c11 * c->c22)), std::log(c->c22),
                std::log(c->c33)};
    }
    const auto& iso = std::get<IsotropicMaterial>(m);
    const double nu = std::clamp(iso.poissons_ratio / 0.5, 1e-9, 1.0 - 1e-9);
    return {std::log(iso.youngs_modulus), logit(nu)};
}

Material MaterialParameterization::material() const {
    if (isotropic_) return IsotropicMaterial{std::exp(theta_[0]), 0.5 * sigmoid(theta_[1])};
    const double c11 = std::exp(theta_[0]);
    const double c22 = std::exp(theta_[2]);
    return AnisotropicStiffness{c11, std::sqrt(c11 * c22) * std::tanh(theta_[1]), c22, std::exp(theta_[3])};
}

MatrixXd MaterialParameterization::stiffness_jacobian() const {
    if (!isotropic_) {
        const auto c = std::get<AnisotropicStiffness>(material());
        const double th = std::tanh(theta_[1]);
        MatrixXd j = MatrixXd::Zero(4, 4);
        j(0, 0) = c.c11;
        j(1, 0) = 0.5 * c.c12;
        j(1, 1) = std::sqrt(c.c11 * c.c22) * (1.0 - th * th);
        j(1, 2) = 0.5 * c.c12;
        j(2, 2) = c.c22;
        j(3, 3) = c.c33;
        return j;
    }
    const auto m = std::get<IsotropicMaterial>(material());
    const auto c = isotropic_to_anisotropic(m);
    const double e = m.youngs_modulus, nu = m.poissons_ratio;
    const double d = (1.0 + nu) * (1.0 - 2.0 * nu);
    const double dd = -1.0 - 4.0 * nu;
    const double s = sigmoid(theta_[1]);
    const double dnu = 0.5 * s * (1.0 - s);
    const double dc11 = e * (-d - (1.0 - nu) * dd) / (d * d);
    const double dc12 = e * (d - nu * dd) / (d * d);
    const double dc33 = -e / (2.0 * (1.0 + nu) * (1.0 + nu));
    MatrixXd j(4, 2);
    j << c.c11, dc11 * dnu,
         c.c12, dc12 * dnu,
         c.c22, dc11 * dnu,
         c.c33, dc33 * dnu;
    return j;
}

double residual_scale(const Normalization& norm, double rho0) {
    const double omega = 2.0 * std::numbers::pi / norm.t_span;
    return rho0 * norm.u_scale * omega * omega;
}

PinnLoss pinn_loss(const MlpNet& net, const Normalization& norm, const MaterialParameterization& material,
                   const PinnBatch& batch, const PinnPhysics& physics, double data_weight, double pde_weight,
                   MlpGradient* net_grad, std::vector<double>* material_grad) {
    PinnLoss loss;
    const bool want_grad = net_grad != nullptr;

    if (batch.data_inputs.cols() > 0) {
        const Eigen::Index n = batch.data_inputs.cols();
        const auto cache = forward(net, batch.data_inputs, false);
        const MatrixXd err = cache.output - batch.data_targets;
        const double normalized = err.squaredNorm() / (2.0 * static_cast<double>(n));
        loss.data = normalized * norm.u_scale * norm.u_scale;
        loss.total += data_weight * normalized;
        if (want_grad) backward(net, cache, (data_weight / static_cast<double>(n)) * err, *net_grad);
    }

    Eigen::Vector4d dc = Eigen::Vector4d::Zero();
    if (batch.collocation.cols() > 0) {
        const Eigen::Index m = batch.collocation.cols();
        const auto cache = forward(net, batch.collocation, true);
        const auto sc = channel_scales(norm);
        const auto c = to_anisotropic(material.material());
        const MatrixXd& o = cache.output;
        auto row = [&](int comp, int channel) { return o.row(comp).segment(channel * m, m).array(); };
        const Eigen::ArrayXd ux_xx = sc.xx * row(0, kDxx), uy_xx = sc.xx * row(1, kDxx);
        const Eigen::ArrayXd ux_xy = sc.xy * row(0, kDxy), uy_xy = sc.xy * row(1, kDxy);
        const Eigen::ArrayXd ux_yy = sc.yy * row(0, kDyy), uy_yy = sc.yy * row(1, kDyy);
        const Eigen::ArrayXd ux_tt = sc.tt * row(0, kDtt), uy_tt = sc.tt * row(1, kDtt);
        const double rho = physics.rho0;
        const Vec2 body = physics.form == BodyForceForm::density_weighted ? Vec2(rho * physics.body_force)
                                                                          : physics.body_force;
        const double half33 = 0.5 * c.c33;
        const Eigen::ArrayXd rx =
            rho * ux_tt - (c.c11 * ux_xx + c.c12 * uy_xy + half33 * (ux_yy + uy_xy)) - body.x();
        const Eigen::ArrayXd ry =
            rho * uy_tt - (c.c12 * ux_xy + c.c22 * uy_yy + half33 * (ux_xy + uy_xx)) - body.y();
        const double rs = residual_scale(norm, rho);
        const double sum_sq = rx.square().sum() + ry.square().sum();
        const double normalized = sum_sq / (2.0 * static_cast<double>(m) * rs * rs);
        loss.pde = sum_sq / (2.0 * static_cast<double>(m));
        loss.total += pde_weight * normalized;

        const double k = pde_weight / (static_cast<double>(m) * rs * rs);
        const Eigen::ArrayXd gx = k * rx, gy = k * ry;
        if (material_grad) {
            dc[0] = -(gx * ux_xx).sum();
            dc[1] = -(gx * uy_xy).sum() - (gy * ux_xy).sum();
            dc[2] = -(gy * uy_yy).sum();
            dc[3] = -0.5 * ((gx * (ux_yy + uy_xy)).sum() + (gy * (ux_xy + uy_xx)).sum());
        }
        if (want_grad) {
            MatrixXd d_out = MatrixXd::Zero(2, o.cols());
            auto drow = [&](int comp, int channel) { return d_out.row(comp).segment(channel * m, m).array(); };
            drow(0, kDtt) = gx * (rho * sc.tt);
            drow(1, kDtt) = gy * (rho * sc.tt);
            drow(0, kDxx) = -gx * (c.c11 * sc.xx);
            drow(1, kDxx) = -gy * (half33 * sc.xx);
            drow(0, kDxy) = -gy * ((c.c12 + half33) * sc.xy);
            drow(1, kDxy) = -gx * ((c.c12 + half33) * sc.xy);
            drow(0, kDyy) = -gx * (half33 * sc.yy);
            drow(1, kDyy) = -gy * (c.c22 * sc.yy);
            backward(net, cache, d_out, *net_grad);
        }
    }
    if (material_grad) {
        const Eigen::VectorXd g = material.stiffness_jacobian().transpose() * dc;
        material_grad->assign(g.data(), g.data() + g.size());
    }
    return loss;
}

PinnBatch marker_batch(const MarkerDataset& data) {
    const auto& n = data.normalization;
    const auto samples = static_cast<Eigen::Index>(data.frames() * data.markers());
    PinnBatch b;
    b.data_inputs.resize(3, samples);
    b.data_targets.resize(2, samples);
    Eigen::Index col = 0;
    for (std::size_t k = 0; k < data.frames(); ++k) {
        for (std::size_t i = 0; i < data.markers(); ++i, ++col) {
            b.data_inputs.col(col) = n.normalize(data.rest[i].x(), data.rest[i].y(), data.times[k]);
            b.data_targets.col(col) = data.displacements[k][i] / n.u_scale;
        }
    }
    return b;
}

PinnResult train(const MarkerDataset& data, const PinnTrainConfig& cfg) {
    validate(cfg);
    const auto bounds = cfg.bounds.empty() ? pinn_default_bounds(cfg.init) : cfg.bounds;
    const auto& norm = data.normalization;

    PinnResult result;
    MlpNet net = MlpNet::glorot(cfg.widths, cfg.seed);
    MaterialParameterization material(cfg.init);
    PinnBatch batch = marker_batch(data);
    const PinnPhysics physics{cfg.rho0, cfg.body_force, cfg.body_force_form};
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    Eigen::VectorXd weights = net.flatten();
    Adam net_opt(weights.size(), cfg.data_lr);
    const auto n_theta = static_cast<Eigen::Index>(material.theta().size());
    Adam material_adam(n_theta, cfg.material_lr);
    Lbfgs material_lbfgs(cfg.material_lr);

    result.data_loss_history.reserve(cfg.epochs);
    result.pde_loss_history.reserve(cfg.epochs);
    batch.collocation.resize(3, static_cast<Eigen::Index>(cfg.collocation_count));
    std::vector<double> material_grad;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (Eigen::Index i = 0; i < batch.collocation.cols(); ++i) {
            for (int r = 0; r < 3; ++r) batch.collocation(r, i) = uniform01(rng);
        }
        const double w_pde = cfg.fixed_pde_weight ? *cfg.fixed_pde_weight : anneal_weight(cfg.anneal, epoch);
        MlpGradient grad = zero_gradient(net);
        const PinnLoss loss =
            pinn_loss(net, norm, material, batch, physics, cfg.anneal.data_weight0, w_pde, &grad, &material_grad);
        if (!std::isfinite(loss.total) || !std::isfinite(loss.data) || !std::isfinite(loss.pde)) {
            throw TrainingDiverged(epoch);
        }
        result.data_loss_history.push_back(loss.data);
        result.pde_loss_history.push_back(loss.pde);

        net_opt.step(weights, grad.flatten());
        net.assign(weights);

        Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(material.theta().data(), n_theta);
        Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(material_grad.data(), n_theta);
        if (cfg.freeze_poisson) g[1] = 0.0;
        const Eigen::VectorXd before = theta;
        if (cfg.material_optimizer == MaterialOptimizer::adam) {
            material_adam.step(theta, g);
        } else {
            material_lbfgs.step(theta, g);
        }
        if (cfg.freeze_poisson) theta[1] = before[1];
        material.theta().assign(theta.data(), theta.data() + n_theta);

        // Clamp in physical units and flag.
        auto p = material_parameters(material.material());
        bool clamped = false;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double v = std::clamp(p[i], bounds[i].lo, bounds[i].hi);
            clamped |= v != p[i];
            p[i] = v;
        }
        if (clamped) {
            result.material_clamped = true;
            material.theta() = MaterialParameterization::encode(material_from_parameters(cfg.init, p));
        }
        if (!net.all_finite()) throw TrainingDiverged(epoch);
    }

    // Residual statistics on the marker sample points.
    {
        MatrixXd pts(3, batch.data_inputs.cols());
        for (Eigen::Index i = 0; i < pts.cols(); ++i) {
            pts(0, i) = norm.x0 + norm.x_span * batch.data_inputs(0, i);
            pts(1, i) = norm.y0 + norm.y_span * batch.data_inputs(1, i);
            pts(2, i) = norm.t0 + norm.t_span * batch.data_inputs(2, i);
        }
        const auto derivs = net_derivatives(net, norm, pts);
        const Material m = material.material();
        double sum = 0.0, mx = 0.0;
        for (const auto& d : derivs) {
            const Vec2 r = pde_residual(d, m, cfg.rho0, cfg.body_force, cfg.body_force_form);
            sum += r.squaredNorm();
            mx = std::max(mx, r.cwiseAbs().maxCoeff());
        }
        result.final_residual = {std::sqrt(sum / (2.0 * static_cast<double>(derivs.size()))), mx};
    }

    result.model = {std::move(net), norm, material.material()};
    return result;
}

MarkerDataset markers_from_sequence(const ClothMesh& mesh, const PointCloudSequence& seq) {
    validate(seq);
    std::vector<std::vector<Vec2>> disp;
    disp.reserve(seq.size());
    for (const auto& frame : seq.frames) {
        if (frame.size() != mesh.node_count()) {
            throw ValidationError("sequence frames must hold one point per mesh node to serve as markers");
        }
        std::vector<Vec2> u;
        u.reserve(frame.size());
        for (std::size_t i = 0; i < frame.size(); ++i) u.push_back(frame[i].head<2>() - mesh.rest_positions[i]);
        disp.push_back(std::move(u));
    }
    return make_marker_dataset(mesh.rest_positions, seq.frame_times, std::move(disp));
}

}  // namespace fabsim
