#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "densecorr/errors.hpp"
#include "densecorr/field.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/semantic.hpp"

namespace densecorr {

// Reads a feature matrix. Binary "DMF1": u32 n, u32 d, f32 row-major payload.
// Text: a "# n d" header line followed by n rows of d numbers.
// expected_n < 0 skips the row-count check.
inline FeatureField load_features(const std::filesystem::path& path, Index expected_n = -1) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + path.string());
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    FeatureField out;
    out.source = FeatureSource::ExternalFile;
    if (in && std::string(magic, 4) == "DMF1") {
        std::uint32_t n = 0, d = 0;
        in.read(reinterpret_cast<char*>(&n), 4);
        in.read(reinterpret_cast<char*>(&d), 4);
        if (!in) throw FormatError(path.string() + ": offset 4: truncated DMF header");
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(n, d);
        in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(4ull * n * d));
        if (!in) throw FormatError(path.string() + ": offset 12: truncated payload for n=" + std::to_string(n) + " d=" + std::to_string(d));
        out.values = f.cast<double>();
    } else {
        in.clear();
        in.seekg(0);
        std::string line;
        std::size_t line_no = 0;
        long long n = -1, d = -1;
        while (std::getline(in, line)) {
            ++line_no;
            std::istringstream hs(line);
            std::string hash;
            if (hs >> hash && hash == "#" && hs >> n >> d) break;
            if (line.find_first_not_of(" \t\r") != std::string::npos) {
                throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected '# n d' header or DMF1 magic");
            }
        }
        if (n < 0 || d < 0) throw FormatError(path.string() + ": missing '# n d' header");
        out.values.resize(n, d);
        for (long long i = 0; i < n; ++i) {
            if (!std::getline(in, line)) throw FormatError(path.string() + ":" + std::to_string(line_no + 1) + ": missing feature row");
            ++line_no;
            std::istringstream ls(line);
            for (long long c = 0; c < d; ++c) {
                if (!(ls >> out.values(i, c))) {
                    throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(d) + " values");
                }
            }
        }
    }
    if (expected_n >= 0 && out.values.rows() != expected_n) {
        throw ShapeError(path.string() + ": feature file has n=" + std::to_string(out.values.rows()) +
                         " rows but the mesh has " + std::to_string(expected_n) + " vertices");
    }
    if (!out.values.allFinite()) throw DataError(path.string() + ": feature file contains NaN or Inf");
    return out;
}

inline void write_features(const std::filesystem::path& path, const Eigen::MatrixXd& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    const auto n = static_cast<std::uint32_t>(values.rows());
    const auto d = static_cast<std::uint32_t>(values.cols());
    out.write("DMF1", 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&d), 4);
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = values.cast<float>();
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(4ull * n * d));
    if (!out) throw DataError("failed writing " + path.string());
}

// Scales every nonzero row to unit L2 norm; zero rows (never-visible vertices) stay zero.
inline FeatureField unit_normalize(const FeatureField& field) {
    FeatureField out = field;
    for (Index i = 0; i < out.values.rows(); ++i) {
        const double norm = out.values.row(i).norm();
        if (norm > 0.0) out.values.row(i) /= norm;
    }
    out.unit_normalized = true;
    return out;
}

// Scales every channel (column) to area-weighted L2 norm `norm` so that all
// channels weigh equally in the data term regardless of mesh scale. Zero
// channels stay zero.
inline Eigen::MatrixXd normalize_channels(const Eigen::MatrixXd& values, const VertexAreas& areas, double norm = 1.0) {
    if (areas.size() != values.rows()) throw ShapeError("feature rows and vertex areas disagree in count");
    if (!(norm > 0.0)) throw ArgumentError("channel norm must be positive");
    Eigen::MatrixXd out = values;
    for (Index c = 0; c < out.cols(); ++c) {
        const double current = std::sqrt(areas.dot(out.col(c).cwiseAbs2()));
        if (current > 0.0) out.col(c) *= norm / current;
    }
    return out;
}

inline FeatureField concat_features(const std::vector<FeatureField>& parts) {
    if (parts.empty()) throw ArgumentError("concat_features needs at least one bundle");
    if (parts.size() == 1) return parts.front();
    const Index n = parts.front().rows();
    Index d = 0;
    for (const auto& p : parts) {
        if (p.rows() != n) {
            throw ShapeError("cannot concatenate feature bundles with " + std::to_string(n) + " and " +
                             std::to_string(p.rows()) + " rows");
        }
        d += p.dim();
    }
    FeatureField out;
    out.values.resize(n, d);
    Index col = 0;
    for (const auto& p : parts) {
        out.values.middleCols(col, p.dim()) = p.values;
        col += p.dim();
    }
    out.source = FeatureSource::Concat;
    return out;
}

// -cos between per-pair feature distances and per-pair semantic distances.
inline double semantic_loss_from_distances(const Eigen::VectorXd& feature_dist, const Eigen::VectorXd& semantic_dist) {
    if (feature_dist.size() != semantic_dist.size()) throw ArgumentError("semantic loss needs equal-length pair lists");
    if (feature_dist.size() < 2) throw ArgumentError("semantic loss needs at least 2 pairs");
    const double nf = feature_dist.norm();
    const double ns = semantic_dist.norm();
    if (!(nf > 0.0) || !(ns > 0.0)) throw NumericError("semantic loss undefined: zero-norm distance vector");
    return -feature_dist.dot(semantic_dist) / (nf * ns);
}

inline double semantic_loss(const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& feature_pairs,
                            const std::vector<double>& semantic_dist) {
    Eigen::VectorXd fd(static_cast<Index>(feature_pairs.size()));
    for (std::size_t p = 0; p < feature_pairs.size(); ++p) {
        const auto& [a, b] = feature_pairs[p];
        if (a.size() != b.size()) throw ArgumentError("feature rows of different widths");
        fd(static_cast<Index>(p)) = (a - b).norm();
    }
    return semantic_loss_from_distances(fd, Eigen::Map<const Eigen::VectorXd>(semantic_dist.data(), static_cast<Index>(semantic_dist.size())));
}

inline constexpr Index kDefaultLossPairs = 4096;

// Uniform vertex pairs (i on the first mesh, j on the second) from a seeded stream.
inline std::vector<std::pair<int, int>> sample_vertex_pairs(Index n_first, Index n_second, Index count, std::uint64_t seed) {
    if (n_first <= 0 || n_second <= 0) throw ArgumentError("cannot sample pairs on an empty mesh");
    std::mt19937_64 rng(seed);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (Index p = 0; p < count; ++p) {
        const auto i = static_cast<int>(rng() % static_cast<std::uint64_t>(n_first));
        const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(n_second));
        pairs.emplace_back(i, j);
    }
    return pairs;
}

// Semantic-distance loss of a feature field on one mesh, over sampled pairs.
inline double semantic_score(const FeatureField& features, const SemanticGroups& groups,
                             const SemanticDistanceTable& table, Index num_pairs = kDefaultLossPairs,
                             std::uint64_t seed = 0) {
    if (features.rows() != groups.num_vertices()) throw ShapeError("features and groups disagree in vertex count");
    const auto pairs = sample_vertex_pairs(features.rows(), features.rows(), num_pairs, seed);
    Eigen::VectorXd fd(num_pairs), sd(num_pairs);
    for (Index p = 0; p < num_pairs; ++p) {
        const auto [i, j] = pairs[static_cast<std::size_t>(p)];
        fd(p) = (features.values.row(i) - features.values.row(j)).norm();
        sd(p) = table.at(groups.group_of(i), groups.group_of(j));
    }
    return semantic_loss_from_distances(fd, sd);
}

// Cross-mesh variant: pair (i on M, j on N) uses the target table entry for
// (group id of i, group id of j). Pairs whose source group is absent on N are skipped.
inline double semantic_score_cross(const FeatureField& source_features, const SemanticGroups& source_groups,
                                   const FeatureField& target_features, const SemanticGroups& target_groups,
                                   const SemanticDistanceTable& target_table, Index num_pairs = kDefaultLossPairs,
                                   std::uint64_t seed = 0) {
    if (source_features.dim() != target_features.dim()) throw ShapeError("feature widths differ between meshes");
    const auto pairs = sample_vertex_pairs(source_features.rows(), target_features.rows(), num_pairs, seed);
    std::vector<double> fd, sd;
    for (const auto& [i, j] : pairs) {
        const int gi = source_groups.group_of(i);
        if (!target_table.has(gi)) continue;
        fd.push_back((source_features.values.row(i) - target_features.values.row(j)).norm());
        sd.push_back(target_table.at(gi, target_groups.group_of(j)));
    }
    return semantic_loss_from_distances(Eigen::Map<Eigen::VectorXd>(fd.data(), static_cast<Index>(fd.size())),
                                        Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Index>(sd.size())));
}

}  // namespace densecorr
