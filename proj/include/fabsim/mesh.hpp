#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace fabsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Index = std::size_t;
using Triangle = std::array<Index, 3>;

// Interior edge shared by two triangles: v0-v1 is the edge, opp0/opp1 the
// vertices opposite to it.
struct Hinge {
    Index v0, v1, opp0, opp1;
    double rest_weight;  // 3|e|^2 / (A0 + A1)
};

// Regular nx-by-ny grid in the material (x, y) plane. Row-major with row 0 on
// the bottom edge, so node (i, j) has index j * nx + i and node 0 sits at the
// origin.
struct ClothMesh {
    std::size_t nx = 0;
    std::size_t ny = 0;
    double side = 0.0;
    std::vector<Vec2> rest_positions;
    std::vector<Triangle> triangles;
    double areal_density = 0.0;
    std::vector<double> node_masses;
    std::map<std::string, std::vector<Index>, std::less<>> handle_sets;
    std::vector<std::array<Index, 2>> edges;
    std::vector<Hinge> hinges;

    std::size_t node_count() const { return rest_positions.size(); }
    double rest_area(const Triangle& t) const;
    double total_rest_area() const;
    double min_edge_length() const;
    // Lumped tributary area per node (one third of each incident triangle).
    std::vector<double> node_areas() const;
};

inline constexpr double kDefaultArealDensity = 0.15;

ClothMesh build_grid_mesh(std::size_t nx, std::size_t ny, double side,
                          double areal_density = kDefaultArealDensity);

// Canonical names: bottom_left, bottom_right, top_left, top_right,
// bottom_edge, top_edge, left_edge, right_edge, central_region, all.
const std::vector<Index>& select_nodes(const ClothMesh& mesh, std::string_view region);

const std::vector<std::string>& canonical_regions();

}  // namespace fabsim
