#include "fabsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

constexpr std::size_t kLeafSize = 8;

void require_non_empty(const PointCloud& a, const PointCloud& b) {
    if (a.empty() || b.empty()) throw ValidationError("point cloud is empty");
}

// Nearest distances from every point of `from` to the cloud `to`.
std::vector<double> nearest_squared(const PointCloud& from, const PointCloud& to) {
    const KdTree tree(to);
    std::vector<double> d;
    d.reserve(from.size());
    for (const auto& p : from) d.push_back(tree.nearest(p).squared_distance);
    return d;
}

double mean_distance(const PointCloud& a, const PointCloud& b, bool squared) {
    double sum = 0.0;
    for (double d2 : nearest_squared(a, b)) sum += squared ? d2 : std::sqrt(d2);
    return sum / static_cast<double>(a.size());
}

}  // namespace

KdTree::KdTree(const PointCloud& points) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) root_ = build(0, points_.size(), 0);
}

std::unique_ptr<KdTree::Node> KdTree::build(std::size_t begin, std::size_t end, int depth) {
    auto node = std::make_unique<Node>();
    node->begin = begin;
    node->end = end;
    node->axis = -1;
    if (end - begin <= kLeafSize) return node;

    // Split on the axis of largest extent.
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t k = begin; k < end; ++k) {
        lo = lo.cwiseMin(points_[order_[k]]);
        hi = hi.cwiseMax(points_[order_[k]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return node;  // all coincident

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t i, std::size_t j) { return points_[i][axis] < points_[j][axis]; });
    node->axis = axis;
    node->split = points_[order_[mid]][axis];
    node->left = build(begin, mid, depth + 1);
    node->right = build(mid, end, depth + 1);
    return node;
}

void KdTree::search(const Node* node, const Vec3& q, Hit& best) const {
    if (node->axis < 0) {
        for (std::size_t k = node->begin; k < node->end; ++k) {
            const std::size_t i = order_[k];
            const double d2 = (points_[i] - q).squaredNorm();
            if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.index)) {
                best = {i, d2};
            }
        }
        return;
    }
    const double diff = q[node->axis] - node->split;
    const Node* near = diff < 0.0 ? node->left.get() : node->right.get();
    const Node* far = diff < 0.0 ? node->right.get() : node->left.get();
    search(near, q, best);
    // <= keeps ties exact: equal distances on the far side are still visited.
    if (diff * diff <= best.squared_distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
    if (!root_) throw ValidationError("nearest-neighbour query on an empty cloud");
    Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    search(root_.get(), query, best);
    return best;
}

double chamfer_one_sided(const PointCloud& a, const PointCloud& b, bool squared) {
    require_non_empty(a, b);
    return mean_distance(a, b, squared);
}

double chamfer_symmetric(const PointCloud& a, const PointCloud& b, bool squared) {
    require_non_empty(a, b);
    return 0.5 * (mean_distance(a, b, squared) + mean_distance(b, a, squared));
}

double hausdorff_directed(const PointCloud& a, const PointCloud& b) {
    require_non_empty(a, b);
    const auto d = nearest_squared(a, b);
    return std::sqrt(*std::max_element(d.begin(), d.end()));
}

double hausdorff(const PointCloud& a, const PointCloud& b) {
    return std::max(hausdorff_directed(a, b), hausdorff_directed(b, a));
}

std::string_view to_string(MetricKind kind) {
    switch (kind) {
        case MetricKind::chamfer_one_sided: return "CD_one_sided";
        case MetricKind::chamfer_symmetric: return "CD_symmetric";
        case MetricKind::hausdorff: return "HD";
    }
    return "unknown";
}

MetricKind parse_metric_kind(std::string_view name) {
    for (auto k : {MetricKind::chamfer_one_sided, MetricKind::chamfer_symmetric, MetricKind::hausdorff}) {
        if (to_string(k) == name) return k;
    }
    throw ValidationError("unknown metric '" + std::string(name) + "'");
}

double metric(MetricKind kind, const PointCloud& a, const PointCloud& b) {
    switch (kind) {
        case MetricKind::chamfer_one_sided: return chamfer_one_sided(a, b);
        case MetricKind::chamfer_symmetric: return chamfer_symmetric(a, b);
        case MetricKind::hausdorff: return hausdorff(a, b);
    }
    throw ValidationError("unknown metric kind");
}

MetricReport sequence_metric(const PointCloudSequence& a, const PointCloudSequence& b, FrameWindow window,
                             MetricKind kind) {
    if (a.size() != b.size()) {
        throw ValidationError("frame count mismatch: " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    }
    if (a.size() == 0 || window.first > window.last || window.last >= a.size()) {
        throw ValidationError("frame window out of range");
    }
    MetricReport r;
    r.kind = kind;
    r.frame_window = window;
    r.per_frame.reserve(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) r.per_frame.push_back(metric(kind, a.frames[k], b.frames[k]));
    double sum = 0.0;
    for (std::size_t k = window.first; k <= window.last; ++k) sum += r.per_frame[k];
    r.aggregate = sum / static_cast<double>(window.size());
    return r;
}

}  // namespace fabsim
