#pragma once

#include <cmath>
#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "densecorr/geodesics.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/mesh_io.hpp"
#include "densecorr/semantic.hpp"

namespace fixtures {

using densecorr::Index;
using densecorr::TriMesh;

namespace detail {

struct Bump {
    Eigen::Vector3d dir;
    double height, width;
};

inline std::vector<Bump> seeded_bumps(std::uint64_t seed, int count = 5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<Bump> bumps;
    for (int b = 0; b < count; ++b) {
        Eigen::Vector3d d(normal(rng), normal(rng), normal(rng));
        bumps.push_back({d.normalized(), 0.08 + 0.12 * uni(rng), 0.25 + 0.25 * uni(rng)});
    }
    return bumps;
}

inline double bump_radius(const std::vector<Bump>& bumps, const Eigen::Vector3d& u) {
    double r = 1.0;
    for (const auto& b : bumps) {
        const double ang = std::acos(std::clamp(u.dot(b.dir), -1.0, 1.0));
        r += b.height * std::exp(-(ang * ang) / (2.0 * b.width * b.width));
    }
    return r;
}

}  // namespace detail

// Closed genus-0 surface with near-uniform vertex areas: an equiangular cube
// sphere (each cube face split into m x m cells) scaled to an ellipsoid and
// displaced by seeded Gaussian bumps. Vertex count = 6 m^2 + 2.
inline TriMesh bumpy_cube_sphere(int m, std::uint64_t seed = 1, Eigen::Vector3d axes = {1.0, 0.75, 0.55}) {
    const auto bumps = detail::seeded_bumps(seed);
    std::map<std::array<int, 3>, int> index;
    std::vector<Eigen::Vector3d> pts;
    auto vertex = [&](const std::array<int, 3>& key) {
        auto [it, inserted] = index.try_emplace(key, static_cast<int>(pts.size()));
        if (inserted) {
            Eigen::Vector3d c;
            for (int a = 0; a < 3; ++a) c(a) = std::tan(std::numbers::pi / 4.0 * (2.0 * key[a] / m - 1.0));
            const Eigen::Vector3d u = c.normalized();
            pts.push_back((detail::bump_radius(bumps, u) * u).cwiseProduct(axes));
        }
        return it->second;
    };
    std::vector<int> tri;
    for (int axis = 0; axis < 3; ++axis) {
        for (int side = 0; side < 2; ++side) {
            const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
            auto key = [&](int i, int j) {
                std::array<int, 3> k{};
                k[axis] = side * m;
                k[a1] = i;
                k[a2] = j;
                return k;
            };
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < m; ++j) {
                    const int v00 = vertex(key(i, j)), v10 = vertex(key(i + 1, j));
                    const int v01 = vertex(key(i, j + 1)), v11 = vertex(key(i + 1, j + 1));
                    // Alternate the diagonal so the triangulation has no preferred direction.
                    const bool flip = ((i + j) % 2) == 0;
                    std::array<int, 6> t = flip ? std::array<int, 6>{v00, v10, v11, v00, v11, v01}
                                                : std::array<int, 6>{v00, v10, v01, v10, v11, v01};
                    if (side == 0) {
                        std::swap(t[1], t[2]);
                        std::swap(t[4], t[5]);
                    }
                    tri.insert(tri.end(), t.begin(), t.end());
                }
            }
        }
    }
    TriMesh out;
    out.vertices.resize(static_cast<Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) out.vertices.row(static_cast<Index>(i)) = pts[i].transpose();
    out.triangles = Eigen::Map<densecorr::Triangles>(tri.data(), static_cast<Index>(tri.size() / 3), 3);
    return out;
}

// Closed genus-0 surface: a latitude/longitude sphere with two poles, scaled
// to an ellipsoid and displaced by a few seeded Gaussian bumps so that the
// surface has no symmetries and a non-degenerate low spectrum.
// Vertex count = rings * segments + 2.
inline TriMesh bumpy_ellipsoid(int rings, int segments, std::uint64_t seed = 1,
                               Eigen::Vector3d axes = {1.0, 0.75, 0.55}) {
    const auto bumps = detail::seeded_bumps(seed);
    auto radius = [&](const Eigen::Vector3d& u) { return detail::bump_radius(bumps, u); };
    const int n = rings * segments + 2;
    TriMesh m;
    m.vertices.resize(n, 3);
    auto put = [&](int idx, const Eigen::Vector3d& u) {
        m.vertices.row(idx) = (radius(u) * u).cwiseProduct(axes).transpose();
    };
    put(0, {0.0, 0.0, 1.0});
    for (int r = 0; r < rings; ++r) {
        const double theta = std::numbers::pi * (r + 1) / (rings + 1);
        for (int s = 0; s < segments; ++s) {
            // Per-ring twist keeps triangles from aligning with a symmetry plane.
            const double phi = 2.0 * std::numbers::pi * (s + 0.37 * r) / segments;
            put(1 + r * segments + s, {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)});
        }
    }
    put(n - 1, {0.0, 0.0, -1.0});
    std::vector<int> tri;
    auto at = [&](int r, int s) { return 1 + r * segments + ((s % segments) + segments) % segments; };
    for (int s = 0; s < segments; ++s) tri.insert(tri.end(), {0, at(0, s), at(0, s + 1)});
    for (int r = 0; r + 1 < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            tri.insert(tri.end(), {at(r, s), at(r + 1, s), at(r + 1, s + 1)});
            tri.insert(tri.end(), {at(r, s), at(r + 1, s + 1), at(r, s + 1)});
        }
    }
    for (int s = 0; s < segments; ++s) tri.insert(tri.end(), {n - 1, at(rings - 1, s + 1), at(rings - 1, s)});
    m.triangles = Eigen::Map<densecorr::Triangles>(tri.data(), static_cast<Index>(tri.size() / 3), 3);
    return m;
}

// Bumpy cube sphere with roughly n vertices.
inline TriMesh ellipsoid_with_about(int n, std::uint64_t seed = 1) {
    const int m = std::max(2, static_cast<int>(std::lround(std::sqrt((n - 2) / 6.0))));
    return bumpy_cube_sphere(m, seed);
}

// Icosphere of radius r: icosahedron refined `subdivisions` times, every new
// vertex projected to the sphere. 10 * 4^s + 2 vertices.
inline TriMesh icosphere(int subdivisions, double r = 1.0) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
                                         {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            return mid[key] = static_cast<int>(v.size()) - 1;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& tri : f) {
            const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f.swap(next);
    }
    TriMesh m;
    m.vertices.resize(static_cast<Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) m.vertices.row(static_cast<Index>(i)) = r * v[i].transpose();
    m.triangles.resize(static_cast<Index>(f.size()), 3);
    for (std::size_t i = 0; i < f.size(); ++i) m.triangles.row(static_cast<Index>(i)) << f[i][0], f[i][1], f[i][2];
    return m;
}

// Open height-field patch on a jittered grid, (nx+1) x (ny+1) vertices.
inline TriMesh wavy_grid(int nx, int ny, std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    TriMesh m;
    m.vertices.resize((nx + 1) * (ny + 1), 3);
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            const bool interior = i > 0 && i < nx && j > 0 && j < ny;
            const double x = (i + (interior ? jitter(rng) : 0.0)) / nx * 1.3;
            const double y = (j + (interior ? jitter(rng) : 0.0)) / ny;
            const double z = 0.15 * std::sin(3.1 * x + 0.7) * std::cos(2.3 * y) + 0.1 * x * x * y;
            m.vertices.row(j * (nx + 1) + i) << x, y, z;
        }
    }
    std::vector<int> tri;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const int a = j * (nx + 1) + i, b = a + 1, c = a + nx + 1, d = c + 1;
            tri.insert(tri.end(), {a, b, d, a, d, c});
        }
    }
    m.triangles = Eigen::Map<densecorr::Triangles>(tri.data(), static_cast<Index>(tri.size() / 3), 3);
    return m;
}

// Torus with an off-centre tube radius modulation; (nu * nv) vertices.
inline TriMesh lumpy_torus(int nu, int nv, double R = 1.0, double r = 0.35) {
    TriMesh m;
    m.vertices.resize(nu * nv, 3);
    for (int i = 0; i < nu; ++i) {
        const double u = 2.0 * std::numbers::pi * i / nu;
        for (int j = 0; j < nv; ++j) {
            const double v = 2.0 * std::numbers::pi * (j + 0.3 * i) / nv;
            const double rr = r * (1.0 + 0.25 * std::cos(u + 0.4) + 0.1 * std::sin(2.0 * u));
            const double rad = R * (1.0 + 0.15 * std::sin(u)) + rr * std::cos(v);
            m.vertices.row(i * nv + j) << rad * std::cos(u), rad * std::sin(u), rr * std::sin(v) * (1.0 + 0.2 * std::cos(u));
        }
    }
    std::vector<int> tri;
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            const int a = i * nv + j, b = ((i + 1) % nu) * nv + j;
            const int c = i * nv + (j + 1) % nv, d = ((i + 1) % nu) * nv + (j + 1) % nv;
            tri.insert(tri.end(), {a, b, d, a, d, c});
        }
    }
    m.triangles = Eigen::Map<densecorr::Triangles>(tri.data(), static_cast<Index>(tri.size() / 3), 3);
    return m;
}

inline Eigen::Matrix3d rotation(double ax, double ay, double az) {
    return (Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

inline TriMesh rotated(const TriMesh& m, const Eigen::Matrix3d& R) {
    TriMesh out = m;
    out.vertices = m.vertices * R.transpose();
    return out;
}

// Keeps the triangles whose vertices all satisfy x <= cut; unreferenced
// vertices are dropped. *kept receives the original index of every kept vertex.
inline TriMesh slice_by_plane(const TriMesh& m, double cut, std::vector<int>* kept = nullptr) {
    std::vector<int> remap(static_cast<std::size_t>(m.num_vertices()), -1);
    std::vector<int> tri, orig;
    for (Index f = 0; f < m.num_triangles(); ++f) {
        bool inside = true;
        for (int c = 0; c < 3; ++c) inside = inside && m.vertices(m.triangles(f, c), 0) <= cut;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) {
            const int v = m.triangles(f, c);
            if (remap[v] < 0) {
                remap[v] = static_cast<int>(orig.size());
                orig.push_back(v);
            }
            tri.push_back(remap[v]);
        }
    }
    TriMesh out;
    out.vertices.resize(static_cast<Index>(orig.size()), 3);
    for (std::size_t i = 0; i < orig.size(); ++i) out.vertices.row(static_cast<Index>(i)) = m.vertices.row(orig[i]);
    out.triangles = Eigen::Map<densecorr::Triangles>(tri.data(), static_cast<Index>(tri.size() / 3), 3);
    if (m.colors) {
        densecorr::Colors c(static_cast<Index>(orig.size()), 3);
        for (std::size_t i = 0; i < orig.size(); ++i) c.row(static_cast<Index>(i)) = m.colors->row(orig[i]);
        out.colors = c;
    }
    if (kept) *kept = orig;
    return out;
}

// Labels vertices by the octant-like sector of their position relative to the
// centroid: group = (x > cx) + 2 * (y > cy) + 4 * (z > cz), relabelled densely.
inline densecorr::SemanticGroups octant_groups(const TriMesh& m, int max_groups = 8) {
    const Eigen::RowVector3d c = m.vertices.colwise().mean();
    std::vector<int> g(static_cast<std::size_t>(m.num_vertices()));
    for (Index v = 0; v < m.num_vertices(); ++v) {
        const Eigen::RowVector3d d = m.vertices.row(v) - c;
        const int code = (d(0) > 0) + 2 * (d(1) > 0) + 4 * (d(2) > 0);
        g[static_cast<std::size_t>(v)] = code % max_groups;
    }
    return densecorr::SemanticGroups(std::move(g));
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("densecorr_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Red where x <= cut, blue elsewhere.
inline TriMesh two_tone(const TriMesh& m, double cut) {
    TriMesh out = m;
    densecorr::Colors c(m.num_vertices(), 3);
    for (Index v = 0; v < m.num_vertices(); ++v) {
        c.row(v) = m.vertices(v, 0) <= cut ? Eigen::RowVector3d(1, 0, 0) : Eigen::RowVector3d(0, 0, 1);
    }
    out.colors = c;
    return out;
}

// Writes root/<category>/<name>/{mesh.ply, remeshed.ply, groups.json[, geo.dgm]}.
// The textured mesh is the remeshed geometry with two-tone colours.
inline std::filesystem::path write_instance(const std::filesystem::path& root, const std::string& category,
                                            const std::string& name, const TriMesh& mesh,
                                            const densecorr::SemanticGroups& groups, bool with_geo = true) {
    const auto dir = root / category / name;
    std::filesystem::create_directories(dir);
    densecorr::save_ply(dir / "mesh.ply", two_tone(mesh, 0.0));
    densecorr::save_ply(dir / "remeshed.ply", mesh, true);
    densecorr::save_groups(dir / "groups.json", groups);
    if (with_geo) densecorr::save_geodesic_matrix(dir / "geo.dgm", densecorr::geodesic_matrix(mesh));
    return dir;
}

}  // namespace fixtures
