#include "fabsim/mlp.hpp"

#include <cmath>
#include <random>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

using Eigen::MatrixXd;

auto block(MatrixXd& m, int channel, Eigen::Index n) { return m.middleCols(channel * n, n); }
auto block(const MatrixXd& m, int channel, Eigen::Index n) { return m.middleCols(channel * n, n); }

// (second-derivative channel, first factor, second factor)
struct Pair {
    int channel, a, b;
};
constexpr Pair kPairs[] = {{kDxx, kDx, kDx}, {kDxy, kDx, kDy}, {kDyy, kDy, kDy}, {kDtt, kDt, kDt}};

}  // namespace

std::vector<int> default_widths() { return {3, 50, 50, 50, 50, 50, 50, 2}; }

MlpNet::MlpNet(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ValidationError("network needs at least an input and an output layer");
    if (widths_.front() != 3 || widths_.back() != 2) {
        throw ValidationError("network maps (x, y, t) to (u_x, u_y): widths must start at 3 and end at 2");
    }
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        if (widths_[l + 1] <= 0) throw ValidationError("layer widths must be positive");
        weights.push_back(MatrixXd::Zero(widths_[l + 1], widths_[l]));
        biases.push_back(Eigen::VectorXd::Zero(widths_[l + 1]));
    }
}

MlpNet MlpNet::glorot(std::vector<int> widths, std::uint64_t seed, bool zero_output) {
    MlpNet net(std::move(widths));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (zero_output && l + 1 == net.weights.size()) break;
        auto& w = net.weights[l];
        const double sd = std::sqrt(2.0 / static_cast<double>(w.rows() + w.cols()));
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = sd * normal(rng);
        }
    }
    return net;
}

std::size_t MlpNet::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

Eigen::VectorXd MlpNet::flatten() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.segment(k, weights[l].size()) = weights[l].reshaped();
        k += weights[l].size();
        flat.segment(k, biases[l].size()) = biases[l];
        k += biases[l].size();
    }
    return flat;
}

void MlpNet::assign(const Eigen::VectorXd& flat) {
    if (static_cast<std::size_t>(flat.size()) != parameter_count()) {
        throw ValidationError("parameter vector size does not match the network");
    }
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l].reshaped() = flat.segment(k, weights[l].size());
        k += weights[l].size();
        biases[l] = flat.segment(k, biases[l].size());
        k += biases[l].size();
    }
}

bool MlpNet::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
}

Eigen::VectorXd MlpGradient::flatten() const {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    Eigen::VectorXd flat(n);
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        flat.segment(k, weights[l].size()) = weights[l].reshaped();
        k += weights[l].size();
        flat.segment(k, biases[l].size()) = biases[l];
        k += biases[l].size();
    }
    return flat;
}

MlpGradient zero_gradient(const MlpNet& net) {
    MlpGradient g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.push_back(MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

ForwardCache forward(const MlpNet& net, const MatrixXd& inputs, bool jets) {
    if (inputs.rows() != 3) throw ValidationError("network input must have 3 rows");
    ForwardCache c;
    c.channels = jets ? kJetChannels : 1;
    c.samples = inputs.cols();
    const Eigen::Index n = c.samples;

    MatrixXd a = MatrixXd::Zero(3, c.channels * n);
    block(a, kValue, n) = inputs;
    if (jets) {
        block(a, kDx, n).row(0).setOnes();
        block(a, kDy, n).row(1).setOnes();
        block(a, kDt, n).row(2).setOnes();
    }

    const std::size_t layers = net.weights.size();
    c.inputs.reserve(layers);
    c.pre.reserve(layers - 1);
    for (std::size_t l = 0; l < layers; ++l) {
        MatrixXd z = net.weights[l] * a;
        block(z, kValue, n).colwise() += net.biases[l];
        c.inputs.push_back(std::move(a));
        if (l + 1 == layers) {
            c.output = std::move(z);
            break;
        }
        MatrixXd next(z.rows(), z.cols());
        const MatrixXd s = block(z, kValue, n).array().tanh().matrix();
        block(next, kValue, n) = s;
        if (jets) {
            const Eigen::ArrayXXd d1 = 1.0 - s.array().square();
            const Eigen::ArrayXXd d2 = -2.0 * s.array() * d1;
            for (int ch : {kDx, kDy, kDt}) block(next, ch, n) = (d1 * block(z, ch, n).array()).matrix();
            for (const auto& p : kPairs) {
                block(next, p.channel, n) =
                    (d2 * block(z, p.a, n).array() * block(z, p.b, n).array() + d1 * block(z, p.channel, n).array())
                        .matrix();
            }
        }
        c.pre.push_back(std::move(z));
        a = std::move(next);
    }
    return c;
}

void backward(const MlpNet& net, const ForwardCache& cache, const MatrixXd& d_output, MlpGradient& grad) {
    const Eigen::Index n = cache.samples;
    const bool jets = cache.channels == kJetChannels;
    MatrixXd dz = d_output;
    for (std::size_t l = net.weights.size(); l-- > 0;) {
        grad.weights[l].noalias() += dz * cache.inputs[l].transpose();
        grad.biases[l] += block(dz, kValue, n).rowwise().sum();
        if (l == 0) break;

        const MatrixXd da = net.weights[l].transpose() * dz;
        const MatrixXd& z = cache.pre[l - 1];
        const Eigen::ArrayXXd s = block(z, kValue, n).array().tanh();
        const Eigen::ArrayXXd d1 = 1.0 - s.square();
        MatrixXd dz_prev(z.rows(), z.cols());
        if (!jets) {
            dz_prev = (block(da, kValue, n).array() * d1).matrix();
        } else {
            const Eigen::ArrayXXd d2 = -2.0 * s * d1;
            const Eigen::ArrayXXd d3 = -2.0 * d1.square() + 4.0 * s.square() * d1;
            Eigen::ArrayXXd dv = block(da, kValue, n).array() * d1;
            for (int ch : {kDx, kDy, kDt}) {
                dv += block(da, ch, n).array() * d2 * block(z, ch, n).array();
                block(dz_prev, ch, n) = (block(da, ch, n).array() * d1).matrix();
            }
            for (const auto& p : kPairs) {
                const auto g = block(da, p.channel, n).array();
                const auto za = block(z, p.a, n).array();
                const auto zb = block(z, p.b, n).array();
                dv += g * (d3 * za * zb + d2 * block(z, p.channel, n).array());
                block(dz_prev, p.a, n).array() += g * d2 * zb;
                block(dz_prev, p.b, n).array() += g * d2 * za;
                block(dz_prev, p.channel, n) = (g * d1).matrix();
            }
            block(dz_prev, kValue, n) = dv.matrix();
        }
        dz = std::move(dz_prev);
    }
}

Vec2 net_eval(const MlpNet& net, double x, double y, double t) {
    const Eigen::Vector3d in(x, y, t);
    const auto c = forward(net, in, false);
    return c.output.col(0);
}

}  // namespace fabsim
