#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "densecorr/errors.hpp"
#include "densecorr/funcmap.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/spectral.hpp"

namespace densecorr {

namespace detail {

// Index of the nearest row of `points` for every row of `queries` (ties to the smallest index).
inline std::vector<int> nearest_points(const Vertices& queries, const Vertices& points) {
    std::vector<int> out(static_cast<std::size_t>(queries.rows()), 0);
    const Eigen::VectorXd sq = points.rowwise().squaredNorm();
    constexpr Index kBlock = 4096;
    Eigen::MatrixXd dist;
    for (Index q0 = 0; q0 < queries.rows(); q0 += kBlock) {
        const Index rows = std::min(kBlock, queries.rows() - q0);
        // |p|^2 - 2 q.p ranks points identically to |p - q|^2 for a fixed q.
        dist.noalias() = -2.0 * queries.middleRows(q0, rows) * points.transpose();
        dist.rowwise() += sq.transpose();
        for (Index r = 0; r < rows; ++r) {
            Index best = 0;
            double best_d = dist(r, 0);
            for (Index p = 1; p < points.rows(); ++p) {
                if (dist(r, p) < best_d) {
                    best_d = dist(r, p);
                    best = p;
                }
            }
            // Exact re-check against ties introduced by the expansion.
            double exact = (points.row(best) - queries.row(q0 + r)).squaredNorm();
            for (Index p = 0; p < points.rows(); ++p) {
                if (dist(r, p) > best_d + 1e-9 * (1.0 + std::abs(best_d) + sq(p))) continue;
                const double e = (points.row(p) - queries.row(q0 + r)).squaredNorm();
                if (e < exact || (e == exact && p < best)) {
                    exact = e;
                    best = p;
                }
            }
            out[static_cast<std::size_t>(q0 + r)] = static_cast<int>(best);
        }
    }
    return out;
}

}  // namespace detail

// Colours target_simplified through a target -> source map between the
// simplified meshes: each source_simplified vertex takes the colour of its
// nearest source_textured vertex, then target vertex j takes the colour of
// source vertex match(j).
inline TriMesh transfer_colors(const TriMesh& source_textured, const TriMesh& source_simplified,
                               const TriMesh& target_simplified, const std::vector<int>& target_to_source) {
    if (!source_textured.has_colors()) throw ArgumentError("source textured mesh has no vertex colors");
    if (static_cast<Index>(target_to_source.size()) != target_simplified.num_vertices()) {
        throw ArgumentError("point map has " + std::to_string(target_to_source.size()) + " entries, target has " +
                            std::to_string(target_simplified.num_vertices()) + " vertices");
    }
    const auto nearest = detail::nearest_points(source_simplified.vertices, source_textured.vertices);
    Colors source_colors(source_simplified.num_vertices(), 3);
    for (Index i = 0; i < source_simplified.num_vertices(); ++i) {
        source_colors.row(i) = source_textured.colors->row(nearest[static_cast<std::size_t>(i)]);
    }
    TriMesh out = target_simplified;
    Colors c(target_simplified.num_vertices(), 3);
    for (Index j = 0; j < c.rows(); ++j) {
        const int m = target_to_source[static_cast<std::size_t>(j)];
        if (m < 0 || m >= source_simplified.num_vertices()) {
            throw ArgumentError("point map entry " + std::to_string(j) + " = " + std::to_string(m) + " out of range");
        }
        c.row(j) = source_colors.row(m);
    }
    out.colors = std::move(c);
    return out;
}

struct Keypoint {
    std::string label;
    std::optional<int> vertex;
    std::optional<Eigen::Vector3d> xyz;
};

using KeypointSet = std::vector<Keypoint>;

// Keypoints file: [{"label": str, "vertex": int} | {"label": str, "xyz": [x, y, z]}].
inline KeypointSet load_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open keypoints file: " + path.string());
    KeypointSet set;
    try {
        nlohmann::json j;
        in >> j;
        if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array of keypoints");
        for (const auto& e : j) {
            Keypoint k;
            k.label = e.at("label").get<std::string>();
            if (e.contains("vertex")) k.vertex = e["vertex"].get<int>();
            else if (e.contains("xyz")) {
                const auto v = e["xyz"].get<std::vector<double>>();
                if (v.size() != 3) throw FormatError(path.string() + ": keypoint '" + k.label + "' xyz needs 3 values");
                k.xyz = Eigen::Vector3d(v[0], v[1], v[2]);
            } else {
                throw FormatError(path.string() + ": keypoint '" + k.label + "' needs \"vertex\" or \"xyz\"");
            }
            set.push_back(std::move(k));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return set;
}

inline constexpr double kKeypointSnapFraction = 0.05;

struct ResolvedKeypoint {
    int vertex;
    std::string label;
};

// Vertex indices for every keypoint on `mesh`; positions snap to the nearest
// vertex within 5% of the bounding-box diagonal.
inline std::vector<ResolvedKeypoint> resolve_keypoints(const KeypointSet& set, const TriMesh& mesh) {
    const double snap = kKeypointSnapFraction * bounding_box(mesh.vertices).diagonal();
    std::vector<ResolvedKeypoint> out;
    for (const auto& k : set) {
        if (k.vertex) {
            if (*k.vertex < 0 || *k.vertex >= mesh.num_vertices()) {
                throw DataError("keypoint '" + k.label + "' vertex " + std::to_string(*k.vertex) + " out of range");
            }
            out.push_back({*k.vertex, k.label});
            continue;
        }
        Index best = 0;
        const double d = std::sqrt((mesh.vertices.rowwise() - k.xyz->transpose()).rowwise().squaredNorm().minCoeff(&best));
        if (d > snap) {
            throw DataError("keypoint '" + k.label + "' is " + std::to_string(d) + " from the nearest vertex (limit " +
                            std::to_string(snap) + ")");
        }
        out.push_back({static_cast<int>(best), k.label});
    }
    return out;
}

struct TransferredKeypoint {
    int vertex;         // on the target
    double confidence;  // selected clamped Pi entry, 0 on fallback
    std::string label;
};

// Spectral data used when a template vertex has no preimage under the map.
struct SpectralFallback {
    const Eigen::MatrixXd& C;
    const SpectralBasis& basis_M;
    const SpectralBasis& basis_N;
};

// Moves template (source) keypoints onto the target through a target -> source
// map. With a dense Pi the target vertex is the argmax of column i; otherwise
// the most confident target vertex j with match(j) = i, falling back to the
// spectral nearest neighbour of source vertex i (confidence 0).
inline std::vector<TransferredKeypoint> transfer_keypoints(const std::vector<ResolvedKeypoint>& keypoints,
                                                           const PointMap& map,
                                                           const std::optional<SpectralFallback>& fallback = std::nullopt) {
    if (keypoints.empty()) throw ArgumentError("empty keypoint set");
    std::vector<TransferredKeypoint> out;
    out.reserve(keypoints.size());
    for (const auto& kp : keypoints) {
        const int i = kp.vertex;
        int best = -1;
        double conf = -1.0;
        if (map.pi_dense) {
            if (i < 0 || i >= map.pi_dense->cols()) throw ArgumentError("keypoint vertex out of the map's source range");
            Index arg = 0;
            conf = map.pi_dense->col(i).maxCoeff(&arg);  // first maximum, i.e. smallest index
            best = static_cast<int>(arg);
        } else {
            for (Index j = 0; j < map.size(); ++j) {
                if (map.target_to_source[static_cast<std::size_t>(j)] != i) continue;
                if (map.confidence(j) > conf) {
                    conf = map.confidence(j);
                    best = static_cast<int>(j);
                }
            }
            if (best < 0) {
                if (!fallback) throw ArgumentError("keypoint '" + kp.label + "' has no preimage and no spectral fallback");
                check_compatible(fallback->C, fallback->basis_M, fallback->basis_N);
                const Eigen::RowVectorXd emb = fallback->basis_M.phi.row(i) * fallback->C.transpose();
                Index arg = 0;
                (fallback->basis_N.phi.rowwise() - emb).rowwise().squaredNorm().minCoeff(&arg);
                best = static_cast<int>(arg);
                conf = 0.0;
            }
        }
        out.push_back({best, conf, kp.label});
    }
    return out;
}

inline nlohmann::json keypoints_to_json(const std::vector<TransferredKeypoint>& kps) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& k : kps) j.push_back({{"label", k.label}, {"vertex", k.vertex}, {"confidence", k.confidence}});
    return j;
}

}  // namespace densecorr
