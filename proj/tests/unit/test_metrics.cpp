#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fabsim/error.hpp"
#include "fabsim/metrics.hpp"

using namespace fabsim;

namespace {

double nn(const Vec3& p, const PointCloud& b) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, (p - q).norm());
    return best;
}

double brute_one_sided(const PointCloud& a, const PointCloud& b) {
    double s = 0.0;
    for (const auto& p : a) s += nn(p, b);
    return s / static_cast<double>(a.size());
}

double brute_directed_hd(const PointCloud& a, const PointCloud& b) {
    double m = 0.0;
    for (const auto& p : a) m = std::max(m, nn(p, b));
    return m;
}

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double spread = 1.0) {
    std::normal_distribution<double> g(0.0, spread);
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) c.emplace_back(g(rng), g(rng), g(rng));
    return c;
}

PointCloudSequence moving_sequence(std::size_t frames, double speed) {
    PointCloudSequence s;
    for (std::size_t k = 0; k < frames; ++k) {
        const double t = static_cast<double>(k) / 15.0;
        s.frames.push_back({Vec3(speed * t, 0, 0), Vec3(1 + speed * t, 0, 0), Vec3(0, 1, speed * t * t)});
        s.frame_times.push_back(t);
    }
    return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("one-sided chamfer examples") {
    CHECK(chamfer_one_sided({Vec3(0, 0, 0)}, {Vec3(3, 4, 0)}) == 5.0);
    CHECK(chamfer_one_sided({Vec3(0, 0, 0), Vec3(2, 0, 0)}, {Vec3(0, 0, 0)}) == 1.0);
    std::mt19937_64 rng(1);
    const PointCloud x = random_cloud(rng, 40);
    CHECK(chamfer_one_sided(x, x) == 0.0);
    CHECK(chamfer_one_sided({Vec3(0, 0, 0)}, {Vec3(3, 4, 0)}, true) == 25.0);
}

TEST_CASE("symmetric chamfer examples") {
    CHECK(chamfer_symmetric({Vec3(0, 0, 0)}, {Vec3(3, 4, 0)}) == 5.0);
    CHECK(chamfer_symmetric({Vec3(0, 0, 0), Vec3(2, 0, 0)}, {Vec3(0, 0, 0)}) == 0.5);
}

TEST_CASE("hausdorff examples") {
    CHECK(hausdorff({Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(0, 0, 0)}) == 1.0);
    CHECK(hausdorff_directed({Vec3(0, 0, 0)}, {Vec3(0, 0, 0), Vec3(1, 0, 0)}) == 0.0);
    std::mt19937_64 rng(2);
    const PointCloud x = random_cloud(rng, 40);
    CHECK(hausdorff(x, x) == 0.0);
}

TEST_CASE("accelerated metrics equal the brute-force oracle") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<std::size_t> size(1, 256);
    for (int trial = 0; trial < 100; ++trial) {
        const PointCloud a = random_cloud(rng, size(rng));
        const PointCloud b = random_cloud(rng, size(rng), 0.5);
        const double ab = brute_one_sided(a, b), ba = brute_one_sided(b, a);
        CHECK(chamfer_one_sided(a, b) == ab);
        CHECK(chamfer_symmetric(a, b) == 0.5 * (ab + ba));
        CHECK(hausdorff(a, b) == std::max(brute_directed_hd(a, b), brute_directed_hd(b, a)));
    }
}

TEST_CASE("kd tree handles duplicates and grids") {
    PointCloud grid;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            grid.emplace_back(i * 0.1, j * 0.1, 0.0);
            grid.emplace_back(i * 0.1, j * 0.1, 0.0);
        }
    const KdTree tree(grid);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.1, 0.6);
    for (int k = 0; k < 500; ++k) {
        const Vec3 q(u(rng), u(rng), u(rng) * 0.1);
        const auto hit = tree.nearest(q);
        CHECK(std::sqrt(hit.squared_distance) == nn(q, grid));
        CHECK((grid[hit.index] - q).squaredNorm() == hit.squared_distance);
    }
}

TEST_CASE("hausdorff bounds the symmetric chamfer") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const PointCloud a = random_cloud(rng, 30), b = random_cloud(rng, 50);
        CHECK(hausdorff(a, b) >= chamfer_symmetric(a, b));
    }
}

TEST_CASE("metrics are permutation invariant") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        PointCloud a = random_cloud(rng, 64), b = random_cloud(rng, 80);
        const double c1 = chamfer_one_sided(a, b), h = hausdorff(a, b);
        std::shuffle(b.begin(), b.end(), rng);
        CHECK(chamfer_one_sided(a, b) == doctest::Approx(c1).epsilon(1e-14));
        CHECK(hausdorff(a, b) == h);
        std::shuffle(a.begin(), a.end(), rng);
        CHECK(chamfer_one_sided(a, b) == doctest::Approx(c1).epsilon(1e-14));
        CHECK(hausdorff(a, b) == h);
    }
}

TEST_CASE("metrics scale with the clouds") {
    std::mt19937_64 rng(7);
    for (double s : {0.5, 2.0, 1e-3, 37.0}) {
        PointCloud a = random_cloud(rng, 50), b = random_cloud(rng, 50);
        const double c = chamfer_symmetric(a, b), h = hausdorff(a, b);
        for (auto& p : a) p *= s;
        for (auto& p : b) p *= s;
        CHECK(chamfer_symmetric(a, b) == doctest::Approx(s * c).epsilon(1e-13));
        CHECK(hausdorff(a, b) == doctest::Approx(s * h).epsilon(1e-13));
    }
}

TEST_CASE("adding target points cannot increase the directed hausdorff distance") {
    std::mt19937_64 rng(8);
    PointCloud a = random_cloud(rng, 40), b = random_cloud(rng, 3);
    double prev = hausdorff_directed(a, b);
    for (int k = 0; k < 60; ++k) {
        b.push_back(random_cloud(rng, 1)[0]);
        const double h = hausdorff_directed(a, b);
        CHECK(h <= prev);
        prev = h;
    }
}

TEST_CASE("empty clouds are rejected") {
    CHECK_THROWS_AS(chamfer_one_sided({}, {Vec3::Zero()}), ValidationError);
    CHECK_THROWS_AS(chamfer_symmetric({Vec3::Zero()}, {}), ValidationError);
    CHECK_THROWS_AS(hausdorff({}, {}), ValidationError);
}

TEST_CASE("metric names") {
    for (MetricKind k : {MetricKind::chamfer_one_sided, MetricKind::chamfer_symmetric, MetricKind::hausdorff})
        CHECK(parse_metric_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_metric_kind("emd"), ValidationError);
}

TEST_CASE("identical sequences aggregate to zero") {
    const auto s = moving_sequence(60, 0.3);
    for (FrameWindow w : {FrameWindow::all(60), FrameWindow::last_n(60, 30), FrameWindow{5, 5}})
        for (MetricKind k : {MetricKind::chamfer_one_sided, MetricKind::chamfer_symmetric, MetricKind::hausdorff})
            CHECK(sequence_metric(s, s, w, k).aggregate == 0.0);
}

TEST_CASE("last-30 window ignores the early frames") {
    const auto a = moving_sequence(60, 0.3);
    auto b = moving_sequence(60, 0.3);
    for (std::size_t k = 0; k < 30; ++k)
        for (auto& p : b.frames[k]) p += Vec3(0, 0, 5.0);
    const auto last = sequence_metric(a, b, FrameWindow::last_n(60, 30), MetricKind::chamfer_one_sided);
    CHECK(last.aggregate == 0.0);
    CHECK(last.frame_window.first == 30);
    CHECK(last.frame_window.last == 59);
    const auto full = sequence_metric(a, b, FrameWindow::all(60), MetricKind::chamfer_one_sided);
    double early = 0.0;
    for (std::size_t k = 0; k < 30; ++k) early += brute_one_sided(a.frames[k], b.frames[k]);
    CHECK(full.aggregate == doctest::Approx(early / 60.0).epsilon(1e-12));
    CHECK(full.aggregate > 2.0);
    CHECK(full.per_frame == last.per_frame);
}

TEST_CASE("aggregate is the mean of the windowed per-frame values") {
    const auto a = moving_sequence(40, 0.3);
    const auto b = moving_sequence(40, 0.45);
    const auto r = sequence_metric(a, b, FrameWindow{10, 24}, MetricKind::hausdorff);
    double s = 0.0;
    for (std::size_t k = 10; k <= 24; ++k) s += r.per_frame[k];
    CHECK(r.aggregate == doctest::Approx(s / 15.0).epsilon(1e-12));
    CHECK(r.per_frame.size() == 40);
    CHECK(r.kind == MetricKind::hausdorff);
}

TEST_CASE("sequence mismatches are rejected") {
    const auto a = moving_sequence(10, 0.3);
    const auto b = moving_sequence(11, 0.3);
    CHECK_THROWS_AS(sequence_metric(a, b, FrameWindow::all(10), MetricKind::hausdorff), ValidationError);
    CHECK_THROWS_AS(sequence_metric(a, a, FrameWindow{3, 10}, MetricKind::hausdorff), ValidationError);
    CHECK_THROWS_AS(sequence_metric(a, a, FrameWindow{5, 4}, MetricKind::hausdorff), ValidationError);
}

}
