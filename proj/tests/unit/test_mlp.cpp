#include <doctest.h>

#include <cmath>
#include <random>

#include "fabsim/mlp.hpp"

using namespace fabsim;

namespace {

// Channel c of a single-sample jet forward pass.
Vec2 channel(const ForwardCache& cache, int c) {
    return cache.output.col(c * cache.samples);
}

ForwardCache jet_at(const MlpNet& net, const Eigen::Vector3d& p) {
    Eigen::MatrixXd in(3, 1);
    in.col(0) = p;
    return forward(net, in, true);
}

MlpNet randomized(std::vector<int> widths, std::uint64_t seed) {
    MlpNet net = MlpNet::glorot(std::move(widths), seed, false);
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& b : net.biases)
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = g(rng);
    return net;
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("default shape has seven affine layers") {
    const auto w = default_widths();
    CHECK(w.size() == 8);
    CHECK(w.front() == 3);
    CHECK(w.back() == 2);
    for (std::size_t i = 1; i + 1 < w.size(); ++i) CHECK(w[i] == 50);
    const MlpNet net(w);
    CHECK(net.layer_count() == 7);
    CHECK(net.parameter_count() == 3 * 50 + 50 + 5 * (50 * 50 + 50) + 50 * 2 + 2);
}

TEST_CASE("all-zero weights return the output bias") {
    MlpNet net(default_widths());
    net.biases.back() = Eigen::Vector2d(0.25, -1.5);
    const Vec2 u = net_eval(net, 0.3, 0.7, 0.1);
    CHECK(u.x() == 0.25);
    CHECK(u.y() == -1.5);
}

TEST_CASE("hand-set net matches a manual forward pass") {
    MlpNet net({3, 2, 2});
    net.weights[0] << 1.0, -0.5, 0.25, 0.0, 2.0, -1.0;
    net.biases[0] << 0.1, -0.2;
    net.weights[1] << 1.5, -2.0, 0.5, 1.0;
    net.biases[1] << 0.05, 0.0;
    const double x = 0.2, y = 0.4, t = 0.6;
    const double h0 = std::tanh(1.0 * x - 0.5 * y + 0.25 * t + 0.1);
    const double h1 = std::tanh(0.0 * x + 2.0 * y - 1.0 * t - 0.2);
    const Vec2 u = net_eval(net, x, y, t);
    CHECK(u.x() == doctest::Approx(1.5 * h0 - 2.0 * h1 + 0.05).epsilon(1e-15));
    CHECK(u.y() == doctest::Approx(0.5 * h0 + 1.0 * h1).epsilon(1e-15));
}

TEST_CASE("evaluation is pure") {
    const MlpNet net = randomized({3, 8, 8, 2}, 5);
    const Vec2 a = net_eval(net, 0.1, 0.2, 0.3);
    for (int k = 0; k < 5; ++k) CHECK(net_eval(net, 0.1, 0.2, 0.3) == a);
}

TEST_CASE("batched forward equals pointwise evaluation") {
    const MlpNet net = randomized({3, 8, 8, 2}, 6);
    Eigen::MatrixXd in = Eigen::MatrixXd::Random(3, 7);
    const auto plain = forward(net, in, false);
    const auto jets = forward(net, in, true);
    for (Eigen::Index i = 0; i < 7; ++i) {
        const Vec2 u = net_eval(net, in(0, i), in(1, i), in(2, i));
        CHECK((plain.output.col(i) - u).norm() < 1e-15);
        CHECK((jets.output.col(i) - u).norm() < 1e-15);
    }
}

TEST_CASE("near-linear net derivatives equal the weight product") {
    // Tiny hidden weights keep every tanh in its linear regime.
    MlpNet net({3, 4, 4, 2});
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 3; ++j) net.weights[0](i, j) = 1e-6 * g(rng);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) net.weights[1](i, j) = g(rng);
    for (Eigen::Index i = 0; i < 2; ++i)
        for (Eigen::Index j = 0; j < 4; ++j) net.weights[2](i, j) = g(rng);
    const Eigen::MatrixXd J = net.weights[2] * net.weights[1] * net.weights[0];
    const auto c = jet_at(net, {0.3, 0.5, 0.2});
    for (int d = 0; d < 3; ++d) {
        const Vec2 got = channel(c, kDx + d);
        for (int o = 0; o < 2; ++o) CHECK(std::abs(got[o] - J(o, d)) <= 1e-10 * std::abs(J(o, d)));
    }
}

TEST_CASE("time-independent net has exactly zero time derivatives") {
    MlpNet net = randomized({3, 8, 8, 2}, 8);
    net.weights[0].col(2).setZero();
    const auto c = jet_at(net, {0.3, 0.5, 0.2});
    CHECK(channel(c, kDt) == Vec2::Zero());
    CHECK(channel(c, kDtt) == Vec2::Zero());
}

TEST_CASE("jets match central finite differences") {
    const MlpNet net = randomized({3, 8, 8, 8, 2}, 9);
    const double h = 1e-4;
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector3d p(u(rng), u(rng), u(rng));
        const auto c = jet_at(net, p);
        auto f = [&](const Eigen::Vector3d& q) { return net_eval(net, q.x(), q.y(), q.z()); };
        auto e = [](int i) { return Eigen::Vector3d::Unit(i); };
        auto rel = [&](const Vec2& got, const Vec2& fd) {
            for (int o = 0; o < 2; ++o)
                worst = std::max(worst, std::abs(got[o] - fd[o]) / std::max(std::abs(fd[o]), 1e-3));
        };
        for (int d = 0; d < 3; ++d) rel(channel(c, kDx + d), (f(p + h * e(d)) - f(p - h * e(d))) / (2 * h));
        auto second = [&](int a, int b) -> Vec2 {
            return (f(p + h * e(a) + h * e(b)) - f(p + h * e(a) - h * e(b)) - f(p - h * e(a) + h * e(b)) +
                    f(p - h * e(a) - h * e(b))) /
                   (4 * h * h);
        };
        const double h2 = 1e-3;  // wider step: second differences lose more digits
        auto pure = [&](int a) -> Vec2 {
            return (f(p + h2 * e(a)) - 2.0 * f(p) + f(p - h2 * e(a))) / (h2 * h2);
        };
        rel(channel(c, kDxy), second(0, 1));
        const Vec2 xx = channel(c, kDxx), yy = channel(c, kDyy), tt = channel(c, kDtt);
        for (int o = 0; o < 2; ++o) {
            CHECK(std::abs(xx[o] - pure(0)[o]) < 1e-5 * std::max(1.0, std::abs(xx[o])));
            CHECK(std::abs(yy[o] - pure(1)[o]) < 1e-5 * std::max(1.0, std::abs(yy[o])));
            CHECK(std::abs(tt[o] - pure(2)[o]) < 1e-5 * std::max(1.0, std::abs(tt[o])));
        }
    }
    CHECK(worst < 1e-5);
}

TEST_CASE("backward pass matches finite differences of a jet loss") {
    MlpNet net = randomized({3, 5, 4, 2}, 11);
    Eigen::MatrixXd in = 0.5 * (Eigen::MatrixXd::Random(3, 4).array() + 1.0);
    const auto cache = forward(net, in, true);
    Eigen::MatrixXd weights = Eigen::MatrixXd::Random(cache.output.rows(), cache.output.cols());
    auto loss = [&](const MlpNet& n) {
        return (forward(n, in, true).output.array() * weights.array()).sum();
    };
    MlpGradient grad = zero_gradient(net);
    backward(net, cache, weights, grad);
    const Eigen::VectorXd g = grad.flatten();
    const Eigen::VectorXd theta = net.flatten();
    REQUIRE(g.size() == theta.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        MlpNet a = net, b = net;
        Eigen::VectorXd tp = theta, tm = theta;
        tp[i] += h;
        tm[i] -= h;
        a.assign(tp);
        b.assign(tm);
        const double fd = (loss(a) - loss(b)) / (2 * h);
        CHECK(std::abs(g[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("flatten and assign round trip") {
    const MlpNet net = randomized({3, 6, 2}, 12);
    MlpNet copy({3, 6, 2});
    copy.assign(net.flatten());
    CHECK(copy.flatten() == net.flatten());
    CHECK(copy.all_finite());
    copy.biases[0][0] = std::nan("");
    CHECK_FALSE(copy.all_finite());
}

TEST_CASE("glorot initialisation is seeded") {
    const MlpNet a = MlpNet::glorot(default_widths(), 3);
    const MlpNet b = MlpNet::glorot(default_widths(), 3);
    const MlpNet c = MlpNet::glorot(default_widths(), 4);
    CHECK(a.flatten() == b.flatten());
    CHECK(a.flatten() != c.flatten());
    CHECK(net_eval(a, 0.2, 0.3, 0.4) == Vec2::Zero());
}

}
