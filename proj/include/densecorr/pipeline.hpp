#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "densecorr/descriptors.hpp"
#include "densecorr/errors.hpp"
#include "densecorr/features.hpp"
#include "densecorr/funcmap.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/spectral.hpp"

namespace densecorr {

// Which per-vertex features feed the functional-map solve.
struct DescriptorConfig {
    bool use_hks = true;
    bool use_wks = true;
    bool use_posenc = true;
    Index hks_times = 16;
    Index wks_energies = 100;
    Index posenc_bands = 6;
    Index basis_size = 128;  // eigenpairs used by HKS/WKS

    bool any() const { return use_hks || use_wks || use_posenc; }
};

// Parses a comma-separated descriptor list such as "hks,wks,posenc".
inline DescriptorConfig parse_descriptor_list(const std::string& list, DescriptorConfig base = {}) {
    base.use_hks = base.use_wks = base.use_posenc = false;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t end = std::min(list.find(',', start), list.size());
        const std::string item = list.substr(start, end - start);
        if (item == "hks") base.use_hks = true;
        else if (item == "wks") base.use_wks = true;
        else if (item == "posenc") base.use_posenc = true;
        else if (!item.empty()) throw ArgumentError("unknown descriptor '" + item + "' (expected hks, wks, posenc)");
        start = end + 1;
    }
    return base;
}

struct MatcherConfig {
    Index k = 10;
    FmapWeights weights;
    DescriptorConfig descriptors;
    bool normalize = true;           // rescale to longest side 0.3 and centre
    bool unit_rows = true;           // per-vertex unit L2 norm
    bool normalize_channels = true;  // per-channel area-weighted norm of channel_norm
    // Target channel norm; 0 selects sqrt(k). A unit norm leaves the data term
    // too weak against the entropy and sum penalties on meshes of ~2000 vertices.
    double channel_norm = 0.0;
    // Solves with the target rescaled to the source's surface area (basis,
    // eigenvalues and features together), so rigid copies that normalize to
    // different scales pose the same problem as a self pair.
    bool match_area = true;
    ProblemOptions problem;
    SolveOptions solve;
    Recovery recovery = Recovery::SpectralNearestNeighbor;
    bool keep_dense = false;
    EigenOptions eigen;
};

// A mesh with everything the matcher needs, computed once and reused across pairs.
struct PreparedShape {
    TriMesh mesh;          // as matched (normalized if requested)
    SpectralBasis basis;   // k eigenpairs
    Eigen::MatrixXd features;
};

inline SpectralBasis truncate_basis(const SpectralBasis& b, Index k) {
    if (k > b.size()) throw ArgumentError("cannot truncate a basis of size " + std::to_string(b.size()) + " to " + std::to_string(k));
    SpectralBasis out;
    out.phi = b.phi.leftCols(k);
    out.lambda = b.lambda.head(k);
    out.areas = b.areas;
    for (const auto& pr : b.near_degenerate) {
        if (pr.second < k) out.near_degenerate.push_back(pr);
    }
    return out;
}

// Builds the descriptor stack; external features (already loaded) are placed first.
inline PreparedShape prepare_shape(const TriMesh& input, const MatcherConfig& cfg,
                                   const std::optional<FeatureField>& external = std::nullopt) {
    PreparedShape s;
    s.mesh = cfg.normalize ? normalize_mesh(input) : input;
    const Index n = s.mesh.num_vertices();
    const bool spectral_desc = cfg.descriptors.use_hks || cfg.descriptors.use_wks;
    const Index kd = spectral_desc ? std::min(n, std::max(cfg.k, cfg.descriptors.basis_size)) : cfg.k;
    const SpectralBasis full = eigenbasis(cotangent_weights(s.mesh), vertex_areas(s.mesh), kd, cfg.eigen);
    s.basis = truncate_basis(full, cfg.k);

    std::vector<FeatureField> parts;
    if (external) {
        if (external->rows() != n) {
            throw ShapeError("feature file has n=" + std::to_string(external->rows()) + " rows but the mesh has " +
                             std::to_string(n) + " vertices");
        }
        parts.push_back(*external);
    }
    if (cfg.descriptors.use_hks) parts.push_back(hks(full, cfg.descriptors.hks_times));
    if (cfg.descriptors.use_wks) parts.push_back(wks(full, cfg.descriptors.wks_energies));
    if (cfg.descriptors.use_posenc) parts.push_back(positional_encoding(s.mesh, cfg.descriptors.posenc_bands));
    if (parts.empty()) throw ArgumentError("no features: give feature files or enable at least one descriptor");
    FeatureField f = concat_features(parts);
    if (cfg.unit_rows) f = unit_normalize(f);
    const double norm = cfg.channel_norm > 0.0 ? cfg.channel_norm : std::sqrt(static_cast<double>(cfg.k));
    s.features = cfg.normalize_channels ? normalize_channels(f.values, s.basis.areas, norm) : f.values;
    return s;
}

struct MatchResult {
    FunctionalMap fmap;
    PointMap points;
};

// Solves the map from source to target and recovers target -> source matches.
inline MatchResult match_shapes(const PreparedShape& source, const PreparedShape& target, const MatcherConfig& cfg) {
    if (source.features.cols() != target.features.cols()) {
        throw ShapeError("source and target features differ in width (" + std::to_string(source.features.cols()) +
                         " vs " + std::to_string(target.features.cols()) + ")");
    }
    SpectralBasis target_basis = target.basis;
    Eigen::MatrixXd target_features = target.features;
    if (cfg.match_area) {
        const double rho = source.basis.areas.sum() / target.basis.areas.sum();
        target_basis.areas *= rho;
        target_basis.phi /= std::sqrt(rho);
        target_basis.lambda /= rho;
        if (cfg.normalize_channels) target_features /= std::sqrt(rho);
    }
    const FmapProblem problem =
        make_problem(source.basis, target_basis, source.features, target_features, cfg.weights, cfg.problem);
    MatchResult r;
    r.fmap = solve_fmap(problem, cfg.solve);
    r.points = recover(cfg.recovery, r.fmap.C, source.basis, target_basis, cfg.keep_dense);
    return r;
}

}  // namespace densecorr
