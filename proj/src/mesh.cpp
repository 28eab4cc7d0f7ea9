#include "fabsim/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fabsim/error.hpp"

namespace fabsim {

namespace {

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

Index opposite(const Triangle& t, Index a, Index b) {
    for (Index v : t) {
        if (v != a && v != b) return v;
    }
    return t[0];
}

void build_topology(ClothMesh& mesh) {
    struct EdgeUse {
        Index tri[2];
        int count = 0;
    };
    std::map<std::array<Index, 2>, EdgeUse> uses;
    for (Index t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        for (int k = 0; k < 3; ++k) {
            Index a = tri[k], b = tri[(k + 1) % 3];
            std::array<Index, 2> key{std::min(a, b), std::max(a, b)};
            auto& u = uses[key];
            if (u.count < 2) u.tri[u.count] = t;
            ++u.count;
        }
    }
    for (const auto& [key, use] : uses) {
        mesh.edges.push_back(key);
        if (use.count != 2) continue;
        const auto& t0 = mesh.triangles[use.tri[0]];
        const auto& t1 = mesh.triangles[use.tri[1]];
        Hinge h{key[0], key[1], opposite(t0, key[0], key[1]), opposite(t1, key[0], key[1]), 0.0};
        const double len2 = (mesh.rest_positions[key[1]] - mesh.rest_positions[key[0]]).squaredNorm();
        h.rest_weight = 3.0 * len2 / (mesh.rest_area(t0) + mesh.rest_area(t1));
        mesh.hinges.push_back(h);
    }
}

void build_handle_sets(ClothMesh& mesh) {
    const std::size_t nx = mesh.nx, ny = mesh.ny;
    auto id = [nx](std::size_t i, std::size_t j) { return j * nx + i; };
    auto& sets = mesh.handle_sets;
    sets["bottom_left"] = {id(0, 0)};
    sets["bottom_right"] = {id(nx - 1, 0)};
    sets["top_left"] = {id(0, ny - 1)};
    sets["top_right"] = {id(nx - 1, ny - 1)};
    for (std::size_t i = 0; i < nx; ++i) {
        sets["bottom_edge"].push_back(id(i, 0));
        sets["top_edge"].push_back(id(i, ny - 1));
    }
    for (std::size_t j = 0; j < ny; ++j) {
        sets["left_edge"].push_back(id(0, j));
        sets["right_edge"].push_back(id(nx - 1, j));
    }
    // Middle third in both directions, inclusive with a small tolerance so
    // nodes that land exactly on a third are kept.
    const double lo = mesh.side / 3.0, hi = 2.0 * mesh.side / 3.0;
    const double tol = 1e-12 * mesh.side;
    auto& central = sets["central_region"];
    auto& all = sets["all"];
    for (Index n = 0; n < mesh.node_count(); ++n) {
        const Vec2& p = mesh.rest_positions[n];
        all.push_back(n);
        if (p.x() >= lo - tol && p.x() <= hi + tol && p.y() >= lo - tol && p.y() <= hi + tol) {
            central.push_back(n);
        }
    }
}

}  // namespace

double ClothMesh::rest_area(const Triangle& t) const {
    return signed_area(rest_positions[t[0]], rest_positions[t[1]], rest_positions[t[2]]);
}

double ClothMesh::total_rest_area() const {
    double a = 0.0;
    for (const auto& t : triangles) a += rest_area(t);
    return a;
}

double ClothMesh::min_edge_length() const {
    double h = std::numeric_limits<double>::infinity();
    for (const auto& e : edges) {
        h = std::min(h, (rest_positions[e[1]] - rest_positions[e[0]]).norm());
    }
    return h;
}

std::vector<double> ClothMesh::node_areas() const {
    std::vector<double> areas(node_count(), 0.0);
    for (const auto& t : triangles) {
        const double third = rest_area(t) / 3.0;
        for (Index v : t) areas[v] += third;
    }
    return areas;
}

ClothMesh build_grid_mesh(std::size_t nx, std::size_t ny, double side, double areal_density) {
    if (nx < 2 || ny < 2) throw ValidationError("grid mesh needs at least 2x2 nodes");
    if (!std::isfinite(side) || side <= 0.0) throw ValidationError("mesh side must be finite and positive");
    if (!std::isfinite(areal_density) || areal_density <= 0.0) {
        throw ValidationError("areal density must be finite and positive");
    }

    ClothMesh mesh;
    mesh.nx = nx;
    mesh.ny = ny;
    mesh.side = side;
    mesh.areal_density = areal_density;
    const double dx = side / static_cast<double>(nx - 1);
    const double dy = side / static_cast<double>(ny - 1);
    mesh.rest_positions.reserve(nx * ny);
    for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
            // Pin the far edges to `side` exactly instead of accumulating dx.
            const double x = (i + 1 == nx) ? side : dx * static_cast<double>(i);
            const double y = (j + 1 == ny) ? side : dy * static_cast<double>(j);
            mesh.rest_positions.emplace_back(x, y);
        }
    }

    // Criss-cross: the diagonal flips on alternating cells.
    mesh.triangles.reserve(2 * (nx - 1) * (ny - 1));
    for (std::size_t j = 0; j + 1 < ny; ++j) {
        for (std::size_t i = 0; i + 1 < nx; ++i) {
            const Index a = j * nx + i, b = a + 1, c = a + nx, d = c + 1;
            if ((i + j) % 2 == 0) {
                mesh.triangles.push_back({a, b, d});
                mesh.triangles.push_back({a, d, c});
            } else {
                mesh.triangles.push_back({a, b, c});
                mesh.triangles.push_back({b, d, c});
            }
        }
    }

    mesh.node_masses.assign(mesh.node_count(), 0.0);
    for (const auto& t : mesh.triangles) {
        const double share = areal_density * mesh.rest_area(t) / 3.0;
        for (Index v : t) mesh.node_masses[v] += share;
    }

    build_topology(mesh);
    build_handle_sets(mesh);
    return mesh;
}

const std::vector<std::string>& canonical_regions() {
    static const std::vector<std::string> names{
        "bottom_left", "bottom_right", "top_left",   "top_right",      "bottom_edge",
        "top_edge",    "left_edge",    "right_edge", "central_region", "all"};
    return names;
}

const std::vector<Index>& select_nodes(const ClothMesh& mesh, std::string_view region) {
    auto it = mesh.handle_sets.find(region);
    if (it == mesh.handle_sets.end()) {
        throw ValidationError("unknown region '" + std::string(region) + "'");
    }
    return it->second;
}

}  // namespace fabsim
