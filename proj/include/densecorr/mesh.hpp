#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "densecorr/errors.hpp"

namespace densecorr {

using Index = Eigen::Index;
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Triangles = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Colors = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Diagonal of the lumped mass matrix A, one entry per vertex.
using VertexAreas = Eigen::VectorXd;
// Cotangent stiffness W: off-diagonals +1/2 (cot a + cot b), diagonal minus the row sum.
using StiffnessMatrix = Eigen::SparseMatrix<double>;

// Sink for non-fatal diagnostics (zero-area triangles, non-manifold edges).
inline std::function<void(std::string_view)>& warning_handler() {
    static std::function<void(std::string_view)> handler = [](std::string_view msg) {
        std::cerr << "densecorr warning: " << msg << '\n';
    };
    return handler;
}

inline void warn(std::string_view msg) {
    if (auto& h = warning_handler()) h(msg);
}

struct TriMesh {
    Vertices vertices;
    Triangles triangles;
    std::optional<Colors> colors;

    Index num_vertices() const { return vertices.rows(); }
    Index num_triangles() const { return triangles.rows(); }
    bool has_colors() const { return colors.has_value(); }
};

// Throws if the mesh violates the TriMesh invariants (index range, repeated
// indices inside a triangle, non-finite coordinates, color shape).
inline void validate(const TriMesh& mesh) {
    const Index n = mesh.num_vertices();
    if (!mesh.vertices.allFinite()) throw DataError("mesh has non-finite vertex coordinates");
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        const auto t = mesh.triangles.row(f);
        for (int c = 0; c < 3; ++c) {
            if (t(c) < 0 || t(c) >= n) {
                throw TopologyError("triangle " + std::to_string(f) + " references vertex " +
                                    std::to_string(t(c)) + " outside [0, " + std::to_string(n) + ")");
            }
        }
        if (t(0) == t(1) || t(1) == t(2) || t(0) == t(2)) {
            throw TopologyError("triangle " + std::to_string(f) + " repeats a vertex index");
        }
    }
    if (mesh.colors && mesh.colors->rows() != n) {
        throw ShapeError("color count " + std::to_string(mesh.colors->rows()) +
                         " does not match vertex count " + std::to_string(n));
    }
}

struct BoundingBox {
    Eigen::Vector3d min;
    Eigen::Vector3d max;

    Eigen::Vector3d extent() const { return max - min; }
    Eigen::Vector3d center() const { return 0.5 * (min + max); }
    double diagonal() const { return extent().norm(); }
    double longest_side() const { return extent().maxCoeff(); }
};

inline BoundingBox bounding_box(const Vertices& v) {
    if (v.rows() == 0) throw EmptyMeshError("bounding box of an empty vertex set");
    return {v.colwise().minCoeff().transpose(), v.colwise().maxCoeff().transpose()};
}

inline double triangle_area(const TriMesh& mesh, Index f) {
    const auto t = mesh.triangles.row(f);
    const Eigen::Vector3d a = mesh.vertices.row(t(0));
    const Eigen::Vector3d b = mesh.vertices.row(t(1));
    const Eigen::Vector3d c = mesh.vertices.row(t(2));
    return 0.5 * (b - a).cross(c - a).norm();
}

inline double surface_area(const TriMesh& mesh) {
    double total = 0.0;
    for (Index f = 0; f < mesh.num_triangles(); ++f) total += triangle_area(mesh, f);
    return total;
}

// Unique undirected edges (i < j), sorted lexicographically.
inline std::vector<std::pair<int, int>> edge_list(const TriMesh& mesh) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 3);
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        for (int c = 0; c < 3; ++c) {
            int a = mesh.triangles(f, c);
            int b = mesh.triangles(f, (c + 1) % 3);
            if (a > b) std::swap(a, b);
            edges.emplace_back(a, b);
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

// Per-vertex component label over triangle connectivity; isolated vertices get
// their own component. Labels are assigned in order of lowest vertex index.
inline std::vector<int> connected_components(const TriMesh& mesh, int* num_components = nullptr) {
    const Index n = mesh.num_vertices();
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        for (int c = 1; c < 3; ++c) {
            int a = find(mesh.triangles(f, 0));
            int b = find(mesh.triangles(f, c));
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    }
    std::vector<int> label(static_cast<std::size_t>(n), -1);
    std::vector<int> root_label(static_cast<std::size_t>(n), -1);
    int count = 0;
    for (Index i = 0; i < n; ++i) {
        int r = find(static_cast<int>(i));
        if (root_label[r] < 0) root_label[r] = count++;
        label[i] = root_label[r];
    }
    if (num_components) *num_components = count;
    return label;
}

namespace detail {

// Keeps the vertices flagged in `keep`, re-indexes triangles and drops those
// touching a removed vertex.
inline TriMesh subset_vertices(const TriMesh& mesh, const std::vector<char>& keep) {
    const Index n = mesh.num_vertices();
    std::vector<int> remap(static_cast<std::size_t>(n), -1);
    int next = 0;
    for (Index i = 0; i < n; ++i) {
        if (keep[i]) remap[i] = next++;
    }
    TriMesh out;
    out.vertices.resize(next, 3);
    if (mesh.colors) out.colors = Colors(next, 3);
    for (Index i = 0; i < n; ++i) {
        if (remap[i] < 0) continue;
        out.vertices.row(remap[i]) = mesh.vertices.row(i);
        if (mesh.colors) out.colors->row(remap[i]) = mesh.colors->row(i);
    }
    std::vector<std::array<int, 3>> tris;
    tris.reserve(static_cast<std::size_t>(mesh.num_triangles()));
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        std::array<int, 3> t{remap[mesh.triangles(f, 0)], remap[mesh.triangles(f, 1)],
                             remap[mesh.triangles(f, 2)]};
        if (t[0] < 0 || t[1] < 0 || t[2] < 0) continue;
        tris.push_back(t);
    }
    out.triangles.resize(static_cast<Index>(tris.size()), 3);
    for (std::size_t f = 0; f < tris.size(); ++f) {
        for (int c = 0; c < 3; ++c) out.triangles(static_cast<Index>(f), c) = tris[f][c];
    }
    return out;
}

inline TriMesh drop_unreferenced(const TriMesh& mesh) {
    std::vector<char> used(static_cast<std::size_t>(mesh.num_vertices()), 0);
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        for (int c = 0; c < 3; ++c) used[mesh.triangles(f, c)] = 1;
    }
    return subset_vertices(mesh, used);
}

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
        h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
        return static_cast<std::size_t>(h);
    }
};

// Clusters vertices linked by distance < tol (transitively), or coincident ones when tol is 0. Every vertex maps
// to the lowest index of its cluster.
inline std::vector<int> proximity_clusters(const Vertices& v, double tol) {
    const Index n = v.rows();
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    if (n == 0) return parent;
    if (tol <= 0.0) {
        // Exact duplicates still merge.
        std::map<std::array<double, 3>, int> first;
        for (Index i = 0; i < n; ++i) {
            const auto it = first.emplace(std::array<double, 3>{v(i, 0), v(i, 1), v(i, 2)}, static_cast<int>(i)).first;
            parent[i] = it->second;
        }
        return parent;
    }
    auto find = [&](int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    std::unordered_map<CellKey, std::vector<int>, CellKeyHash> grid;
    auto key_of = [&](Index i) {
        return CellKey{static_cast<std::int64_t>(std::floor(v(i, 0) / tol)),
                       static_cast<std::int64_t>(std::floor(v(i, 1) / tol)),
                       static_cast<std::int64_t>(std::floor(v(i, 2) / tol))};
    };
    for (Index i = 0; i < n; ++i) grid[key_of(i)].push_back(static_cast<int>(i));
    const double tol2 = tol * tol;
    for (Index i = 0; i < n; ++i) {
        const CellKey k = key_of(i);
        for (std::int64_t dx = -1; dx <= 1; ++dx)
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dz = -1; dz <= 1; ++dz) {
                    auto it = grid.find(CellKey{k.x + dx, k.y + dy, k.z + dz});
                    if (it == grid.end()) continue;
                    for (int j : it->second) {
                        if (j <= i) continue;
                        if ((v.row(i) - v.row(j)).squaredNorm() < tol2) {
                            int a = find(static_cast<int>(i));
                            int b = find(j);
                            if (a != b) parent[std::max(a, b)] = std::min(a, b);
                        }
                    }
                }
    }
    for (Index i = 0; i < n; ++i) parent[i] = find(static_cast<int>(i));
    return parent;
}

}  // namespace detail

// Merges vertices closer than merge_tol_fraction * bbox diagonal (lowest index
// survives, keeps its position; colors are averaged over the cluster), drops
// triangles that collapse or duplicate an earlier one, keeps the connected
// component with the largest surface area and removes unreferenced vertices.
inline TriMesh cleanup_mesh(const TriMesh& input, double merge_tol_fraction = 0.01) {
    if (!(merge_tol_fraction > 0.0 && merge_tol_fraction <= 0.1)) {
        throw ArgumentError("merge_tol_fraction must lie in (0, 0.1], got " +
                            std::to_string(merge_tol_fraction));
    }
    validate(input);
    TriMesh mesh = detail::drop_unreferenced(input);
    if (mesh.num_vertices() == 0) throw EmptyMeshError("mesh has no referenced vertices");

    const double tol = merge_tol_fraction * bounding_box(mesh.vertices).diagonal();
    const std::vector<int> rep = detail::proximity_clusters(mesh.vertices, tol);
    if (mesh.colors) {
        Colors sum = Colors::Zero(mesh.num_vertices(), 3);
        std::vector<int> count(static_cast<std::size_t>(mesh.num_vertices()), 0);
        for (Index i = 0; i < mesh.num_vertices(); ++i) {
            sum.row(rep[i]) += mesh.colors->row(i);
            ++count[rep[i]];
        }
        for (Index i = 0; i < mesh.num_vertices(); ++i) {
            if (count[i] > 0) mesh.colors->row(i) = sum.row(i) / count[i];
        }
    }
    std::vector<std::array<int, 3>> tris;
    std::vector<std::array<int, 3>> seen;
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        std::array<int, 3> t{rep[mesh.triangles(f, 0)], rep[mesh.triangles(f, 1)],
                             rep[mesh.triangles(f, 2)]};
        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
        std::array<int, 3> s = t;
        std::sort(s.begin(), s.end());
        seen.push_back(s);
        tris.push_back(t);
    }
    {
        // Drop duplicates of an earlier triangle (same vertex set).
        std::vector<std::size_t> order(seen.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return seen[a] < seen[b]; });
        std::vector<char> dup(seen.size(), 0);
        for (std::size_t i = 1; i < order.size(); ++i) {
            if (seen[order[i]] == seen[order[i - 1]]) dup[order[i]] = 1;
        }
        std::vector<std::array<int, 3>> kept;
        for (std::size_t i = 0; i < tris.size(); ++i) {
            if (!dup[i]) kept.push_back(tris[i]);
        }
        tris.swap(kept);
    }
    mesh.triangles.resize(static_cast<Index>(tris.size()), 3);
    for (std::size_t f = 0; f < tris.size(); ++f) {
        for (int c = 0; c < 3; ++c) mesh.triangles(static_cast<Index>(f), c) = tris[f][c];
    }
    if (mesh.num_triangles() == 0) throw EmptyMeshError("no triangles left after cleanup");

    int ncomp = 0;
    const std::vector<int> comp = connected_components(mesh, &ncomp);
    std::vector<double> comp_area(static_cast<std::size_t>(ncomp), 0.0);
    for (Index f = 0; f < mesh.num_triangles(); ++f) comp_area[comp[mesh.triangles(f, 0)]] += triangle_area(mesh, f);
    // Ties resolve to the component containing the lowest vertex index.
    const int best = static_cast<int>(std::max_element(comp_area.begin(), comp_area.end()) - comp_area.begin());
    std::vector<char> keep(static_cast<std::size_t>(mesh.num_vertices()), 0);
    for (Index i = 0; i < mesh.num_vertices(); ++i) keep[i] = comp[i] == best;
    mesh = detail::drop_unreferenced(detail::subset_vertices(mesh, keep));
    if (mesh.num_vertices() == 0 || mesh.num_triangles() == 0) {
        throw EmptyMeshError("no triangles left after cleanup");
    }
    return mesh;
}

inline constexpr double kNormalizedLongestSide = 0.3;

// Centers the bounding box at the origin and scales its longest side to 0.3.
inline TriMesh normalize_mesh(const TriMesh& mesh) {
    if (mesh.num_vertices() == 0) throw EmptyMeshError("cannot normalize an empty mesh");
    const BoundingBox box = bounding_box(mesh.vertices);
    const double side = box.longest_side();
    if (!(side > 0.0)) throw DegenerateGeometryError("all vertices coincide; mesh has zero extent");
    TriMesh out = mesh;
    const Eigen::RowVector3d center = box.center().transpose();
    const double s = kNormalizedLongestSide / side;
    out.vertices = ((mesh.vertices.rowwise() - center) * s).eval();
    return out;
}

// Barycentric lumped areas: each vertex receives a third of every incident
// triangle's area.
inline VertexAreas vertex_areas(const TriMesh& mesh) {
    VertexAreas areas = VertexAreas::Zero(mesh.num_vertices());
    Index zero_area = 0;
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        const double a = triangle_area(mesh, f);
        if (!(a > 0.0)) {
            ++zero_area;
            continue;
        }
        for (int c = 0; c < 3; ++c) areas(mesh.triangles(f, c)) += a / 3.0;
    }
    if (zero_area > 0) warn(std::to_string(zero_area) + " zero-area triangle(s) contribute no vertex area");
    return areas;
}

inline constexpr double kCotangentClamp = 1e4;

namespace detail {

// Cotangent of the angle at `apex` in the triangle (apex, a, b), clamped.
inline double clamped_cot(const Eigen::Vector3d& apex, const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    const Eigen::Vector3d u = a - apex;
    const Eigen::Vector3d v = b - apex;
    const double dot = u.dot(v);
    const double cross = u.cross(v).norm();
    if (cross <= 0.0) return dot >= 0.0 ? kCotangentClamp : -kCotangentClamp;
    return std::clamp(dot / cross, -kCotangentClamp, kCotangentClamp);
}

}  // namespace detail

inline StiffnessMatrix cotangent_weights(const TriMesh& mesh) {
    const Index n = mesh.num_vertices();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 6);
    std::unordered_map<std::uint64_t, int> edge_faces;
    for (Index f = 0; f < mesh.num_triangles(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int apex = mesh.triangles(f, c);
            const int a = mesh.triangles(f, (c + 1) % 3);
            const int b = mesh.triangles(f, (c + 2) % 3);
            const double w = 0.5 * detail::clamped_cot(mesh.vertices.row(apex), mesh.vertices.row(a),
                                                       mesh.vertices.row(b));
            trip.emplace_back(a, b, w);
            trip.emplace_back(b, a, w);
            const auto lo = static_cast<std::uint64_t>(std::min(a, b));
            const auto hi = static_cast<std::uint64_t>(std::max(a, b));
            ++edge_faces[(lo << 32) | hi];
        }
    }
    Index nonmanifold = 0;
    for (const auto& [key, count] : edge_faces) nonmanifold += count > 2;
    if (nonmanifold > 0) {
        warn(std::to_string(nonmanifold) + " non-manifold edge(s); cotangent weights accumulated over all incident triangles");
    }
    StiffnessMatrix offdiag(n, n);
    offdiag.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(n);
    for (Index col = 0; col < offdiag.outerSize(); ++col) {
        for (StiffnessMatrix::InnerIterator it(offdiag, col); it; ++it) rowsum(it.row()) += it.value();
    }
    trip.clear();
    for (Index col = 0; col < offdiag.outerSize(); ++col) {
        for (StiffnessMatrix::InnerIterator it(offdiag, col); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
    }
    for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, -rowsum(i));
    StiffnessMatrix W(n, n);
    W.setFromTriplets(trip.begin(), trip.end());
    W.makeCompressed();
    return W;
}

}  // namespace densecorr
