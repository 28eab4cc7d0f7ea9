#pragma once

#include <cstddef>
#include <memory>
#include <string_view>
#include <vector>

#include "fabsim/simulator.hpp"

namespace fabsim {

// Exact nearest-neighbour index over a fixed cloud (median-split k-d tree).
class KdTree {
public:
    explicit KdTree(const PointCloud& points);

    struct Hit {
        std::size_t index;
        double squared_distance;
    };
    Hit nearest(const Vec3& query) const;
    std::size_t size() const { return points_.size(); }

private:
    struct Node {
        std::size_t begin, end;  // range in order_
        int axis;                // -1 for leaves
        double split;
        std::unique_ptr<Node> left, right;
    };
    std::unique_ptr<Node> build(std::size_t begin, std::size_t end, int depth);
    void search(const Node* node, const Vec3& q, Hit& best) const;

    PointCloud points_;
    std::vector<std::size_t> order_;
    std::unique_ptr<Node> root_;
};

// Mean over p in a of the Euclidean distance to the nearest q in b (a -> b).
double chamfer_one_sided(const PointCloud& a, const PointCloud& b, bool squared = false);
// 1/2 [chamfer_one_sided(a, b) + chamfer_one_sided(b, a)].
double chamfer_symmetric(const PointCloud& a, const PointCloud& b, bool squared = false);
// max(h(a, b), h(b, a)) with h the directed max-min distance.
double hausdorff(const PointCloud& a, const PointCloud& b);
double hausdorff_directed(const PointCloud& a, const PointCloud& b);

enum class MetricKind { chamfer_one_sided, chamfer_symmetric, hausdorff };

std::string_view to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view name);

// Inclusive frame index range.
struct FrameWindow {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t size() const { return last - first + 1; }
    static FrameWindow all(std::size_t frames) { return {0, frames - 1}; }
    // The final `count` frames.
    static FrameWindow last_n(std::size_t frames, std::size_t count) { return {frames - count, frames - 1}; }
};

struct MetricReport {
    MetricKind kind = MetricKind::chamfer_one_sided;
    std::vector<double> per_frame;
    double aggregate = 0.0;
    FrameWindow frame_window;
};

double metric(MetricKind kind, const PointCloud& a, const PointCloud& b);

// Per-frame metric on every frame; aggregate is the mean over `window`.
MetricReport sequence_metric(const PointCloudSequence& a, const PointCloudSequence& b, FrameWindow window,
                             MetricKind kind);

}  // namespace fabsim
