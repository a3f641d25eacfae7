#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "densecorr/errors.hpp"
#include "densecorr/lbfgs.hpp"
#include "densecorr/spectral.hpp"

namespace densecorr {

// Objective weights. Defaults: alpha 1e-2, beta 1e-4, entropy 1e-5, sums 1e-3.
struct FmapWeights {
    double alpha = 1e-2;     // Laplacian commutativity
    double beta = 1e-4;      // pointwise-multiplication commutativity
    double entropy = 1e-5;   // entropy of the clamped point map
    double sums = 1e-3;      // soft-assignment row/column sums
};

enum class FmapTerm { Data, Isometry, Pointwise, Entropy, Sums };

inline constexpr FmapTerm kAllFmapTerms[] = {FmapTerm::Data, FmapTerm::Isometry, FmapTerm::Pointwise,
                                              FmapTerm::Entropy, FmapTerm::Sums};

inline const char* to_string(FmapTerm t) {
    switch (t) {
        case FmapTerm::Data: return "data";
        case FmapTerm::Isometry: return "isometry";
        case FmapTerm::Pointwise: return "pointwise";
        case FmapTerm::Entropy: return "entropy";
        case FmapTerm::Sums: return "sums";
    }
    return "?";
}

inline constexpr double kEntropyEps = 1e-12;

// Phi^+ Diag(channel) Phi, k x k.
inline Eigen::MatrixXd multiplication_operator(const SpectralBasis& basis, const Eigen::VectorXd& channel) {
    if (channel.size() != basis.num_vertices()) {
        throw ArgumentError("channel has " + std::to_string(channel.size()) + " entries, basis has " +
                            std::to_string(basis.num_vertices()) + " vertices");
    }
    return basis.phi.transpose() * (basis.areas.cwiseProduct(channel).asDiagonal() * basis.phi);
}

struct ProblemOptions {
    // For d > max_channels the pointwise term uses the leading right singular
    // directions of [F; G] (at most max_channels, numerical rank permitting).
    bool reduce_channels = true;
    Index max_channels = 64;
};

// Everything the objective needs, precomputed for one source/target pair.
struct FmapProblem {
    SpectralBasis basis_M;  // source
    SpectralBasis basis_N;  // target
    Eigen::MatrixXd F;      // k x d, Phi_M^+ f
    Eigen::MatrixXd G;      // k x d, Phi_N^+ g
    std::vector<Eigen::MatrixXd> X;  // per-channel source multiplication operators
    std::vector<Eigen::MatrixXd> Y;  // per-channel target multiplication operators
    FmapWeights weights;
    Eigen::MatrixXd g_vertex;  // n_N x d target features (needed to re-mask G)

    Eigen::MatrixXd pinv_M;   // k x n_M
    Eigen::VectorXd src_mass; // Phi_M^+ 1, so row sums of Pi are Phi_N C src_mass
    Eigen::VectorXd tgt_sum;  // Phi_N^T 1, so column sums of Pi are pinv_M^T C^T tgt_sum

    Index k() const { return basis_M.size(); }
    Index n_M() const { return basis_M.num_vertices(); }
    Index n_N() const { return basis_N.num_vertices(); }
};

namespace detail {

// Right singular directions of [F; G] used as pointwise channels.
inline Eigen::MatrixXd channel_directions(const Eigen::MatrixXd& F, const Eigen::MatrixXd& G, Index max_channels) {
    Eigen::MatrixXd stacked(F.rows() + G.rows(), F.cols());
    stacked << F, G;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Index rank = 0;
    const double cutoff = sv.size() ? 1e-12 * sv(0) : 0.0;
    while (rank < sv.size() && sv(rank) > cutoff) ++rank;
    const Index r = std::max<Index>(1, std::min(max_channels, rank));
    return svd.matrixV().leftCols(r);
}

}  // namespace detail

// Recomputes the pointwise operators from per-vertex features. Called by
// make_problem and whenever target features change (partial matching).
inline void build_pointwise_operators(FmapProblem& p, const Eigen::MatrixXd& f, const Eigen::MatrixXd& g,
                                      const ProblemOptions& opts) {
    p.X.clear();
    p.Y.clear();
    if (p.weights.beta == 0.0) return;
    Eigen::MatrixXd fc = f, gc = g;
    if (opts.reduce_channels && f.cols() > opts.max_channels) {
        const Eigen::MatrixXd V = detail::channel_directions(p.F, p.G, opts.max_channels);
        fc = f * V;
        gc = g * V;
    }
    p.X.reserve(static_cast<std::size_t>(fc.cols()));
    p.Y.reserve(static_cast<std::size_t>(fc.cols()));
    for (Index c = 0; c < fc.cols(); ++c) {
        p.X.push_back(multiplication_operator(p.basis_M, fc.col(c)));
        p.Y.push_back(multiplication_operator(p.basis_N, gc.col(c)));
    }
}

inline FmapProblem make_problem(const SpectralBasis& basis_M, const SpectralBasis& basis_N, const Eigen::MatrixXd& f,
                                const Eigen::MatrixXd& g, const FmapWeights& weights = {},
                                const ProblemOptions& opts = {}) {
    if (basis_M.size() != basis_N.size()) {
        throw ArgumentError("source and target bases differ in size (" + std::to_string(basis_M.size()) + " vs " +
                            std::to_string(basis_N.size()) + ")");
    }
    if (f.rows() != basis_M.num_vertices() || g.rows() != basis_N.num_vertices()) {
        throw ShapeError("feature rows do not match the basis vertex counts");
    }
    if (f.cols() != g.cols()) {
        throw ShapeError("source and target features differ in width (" + std::to_string(f.cols()) + " vs " +
                         std::to_string(g.cols()) + ")");
    }
    if (weights.alpha < 0 || weights.beta < 0 || weights.entropy < 0 || weights.sums < 0) {
        throw ArgumentError("objective weights must be nonnegative");
    }
    FmapProblem p;
    p.basis_M = basis_M;
    p.basis_N = basis_N;
    p.weights = weights;
    p.F = project(basis_M, f);
    p.G = project(basis_N, g);
    p.g_vertex = g;
    p.pinv_M = basis_M.pinv();
    p.src_mass = p.pinv_M.rowwise().sum();
    p.tgt_sum = basis_N.phi.colwise().sum().transpose();
    build_pointwise_operators(p, f, g, opts);
    return p;
}

namespace detail {

inline constexpr Index kPiBlockRows = 256;

// Entropy of clamp(Pi, 0, 1) with Pi = Phi_N C Phi_M^+, evaluated in row
// blocks. Adds the gradient w.r.t. C (scaled by `scale`) into grad.
inline double entropy_term(const FmapProblem& p, const Eigen::MatrixXd& C, Eigen::MatrixXd* grad, double scale) {
    const Eigen::MatrixXd PN = p.basis_N.phi * C;  // n_N x k
    const Index nN = p.n_N();
    double value = 0.0;
    Eigen::MatrixXd acc;
    if (grad) acc = Eigen::MatrixXd::Zero(C.rows(), C.cols());
    Eigen::MatrixXd block, gblock;
    for (Index r0 = 0; r0 < nN; r0 += kPiBlockRows) {
        const Index rows = std::min(kPiBlockRows, nN - r0);
        block.noalias() = PN.middleRows(r0, rows) * p.pinv_M;
        const auto P = block.array();
        const Eigen::ArrayXXd T = P.max(0.0).min(1.0);
        const Eigen::ArrayXXd L = (T + kEntropyEps).log();
        value -= (T * L).sum();
        if (grad) {
            gblock = ((P > 0.0) && (P < 1.0)).select(-(L + T / (T + kEntropyEps)), 0.0).matrix();
            acc.noalias() += p.basis_N.phi.middleRows(r0, rows).transpose() * (gblock * p.pinv_M.transpose());
        }
    }
    if (grad) *grad += scale * acc;
    return value;
}

inline double sums_term(const FmapProblem& p, const Eigen::MatrixXd& C, Eigen::MatrixXd* grad, double scale) {
    const Eigen::VectorXd rows = p.basis_N.phi * (C * p.src_mass) - Eigen::VectorXd::Ones(p.n_N());
    const double target = static_cast<double>(p.n_N()) / static_cast<double>(p.n_M());
    const Eigen::VectorXd cols =
        p.pinv_M.transpose() * (C.transpose() * p.tgt_sum) - Eigen::VectorXd::Constant(p.n_M(), target);
    if (grad) {
        *grad += scale * 2.0 * (p.basis_N.phi.transpose() * rows) * p.src_mass.transpose();
        *grad += scale * 2.0 * p.tgt_sum * (p.pinv_M * cols).transpose();
    }
    return rows.squaredNorm() + cols.squaredNorm();
}

}  // namespace detail

// Unweighted value of one objective term; the term's gradient is added to
// *grad (scaled by `scale`) when grad is non-null.
inline double fmap_term(FmapTerm term, const Eigen::MatrixXd& C, const FmapProblem& p, Eigen::MatrixXd* grad = nullptr,
                        double scale = 1.0) {
    switch (term) {
        case FmapTerm::Data: {
            const Eigen::MatrixXd R = C * p.F - p.G;
            if (grad) *grad += scale * 2.0 * R * p.F.transpose();
            return R.squaredNorm();
        }
        case FmapTerm::Isometry: {
            // (Lambda_N C - C Lambda_M)_ij = (lambda_N,i - lambda_M,j) C_ij
            const Eigen::MatrixXd D =
                p.basis_N.lambda.replicate(1, C.cols()) - p.basis_M.lambda.transpose().replicate(C.rows(), 1);
            const Eigen::MatrixXd R = D.cwiseProduct(C);
            if (grad) *grad += scale * 2.0 * D.cwiseProduct(R);
            return R.squaredNorm();
        }
        case FmapTerm::Pointwise: {
            double v = 0.0;
            for (std::size_t c = 0; c < p.X.size(); ++c) {
                const Eigen::MatrixXd R = C * p.X[c] - p.Y[c] * C;
                v += R.squaredNorm();
                if (grad) *grad += scale * 2.0 * (R * p.X[c].transpose() - p.Y[c].transpose() * R);
            }
            return v;
        }
        case FmapTerm::Entropy: return detail::entropy_term(p, C, grad, scale);
        case FmapTerm::Sums: return detail::sums_term(p, C, grad, scale);
    }
    return 0.0;
}

inline double term_weight(FmapTerm term, const FmapWeights& w) {
    switch (term) {
        case FmapTerm::Data: return 1.0;
        case FmapTerm::Isometry: return w.alpha;
        case FmapTerm::Pointwise: return w.beta;
        case FmapTerm::Entropy: return w.entropy;
        case FmapTerm::Sums: return w.sums;
    }
    return 0.0;
}

struct ObjectiveValue {
    double value = 0.0;
    Eigen::MatrixXd gradient;
};

// Weighted sum of all terms and its exact gradient. Terms with zero weight are skipped.
inline ObjectiveValue fmap_objective(const Eigen::MatrixXd& C, const FmapProblem& p) {
    if (C.rows() != p.k() || C.cols() != p.k()) throw ArgumentError("C must be k x k");
    ObjectiveValue out;
    out.gradient = Eigen::MatrixXd::Zero(C.rows(), C.cols());
    for (FmapTerm t : kAllFmapTerms) {
        const double w = term_weight(t, p.weights);
        if (w == 0.0) continue;
        out.value += w * fmap_term(t, C, p, &out.gradient, w);
    }
    return out;
}

// Diagonal of the Hessian of the quadratic terms (data, isometry, pointwise)
// in column-major vec(C) order; used to precondition the quasi-Newton solve.
inline Eigen::VectorXd quadratic_hessian_diagonal(const FmapProblem& p) {
    const Index k = p.k();
    Eigen::MatrixXd h(k, k);
    const Eigen::VectorXd ff = p.F.rowwise().squaredNorm();
    for (Index b = 0; b < k; ++b) {
        for (Index a = 0; a < k; ++a) {
            const double dl = p.basis_N.lambda(a) - p.basis_M.lambda(b);
            h(a, b) = 2.0 * ff(b) + 2.0 * p.weights.alpha * dl * dl;
        }
    }
    for (std::size_t c = 0; c < p.X.size(); ++c) {
        const Eigen::VectorXd xr = p.X[c].rowwise().squaredNorm();
        const Eigen::VectorXd yc = p.Y[c].colwise().squaredNorm().transpose();
        for (Index b = 0; b < k; ++b) {
            for (Index a = 0; a < k; ++a) {
                h(a, b) += 2.0 * p.weights.beta * (xr(b) + yc(a) - 2.0 * p.X[c](b, b) * p.Y[c](a, a));
            }
        }
    }
    const double floor = 1e-8 * std::max(h.maxCoeff(), 1e-300);
    return Eigen::Map<const Eigen::VectorXd>(h.data(), k * k).cwiseMax(floor);
}

struct FunctionalMap {
    Eigen::MatrixXd C;
    bool converged = false;
    double final_objective = 0.0;
    int iterations = 0;
    int evaluations = 0;
    std::string stop_reason;
};

struct SolveOptions {
    int max_iter = 500;
    // Gradient tolerance relative to (1 + |objective|).
    double tol = 1e-7;
    // Relative objective decrease per iteration below which the solve stops.
    double ftol = 1e-10;
    // Scale the quasi-Newton steps by the quadratic-term Hessian diagonal.
    bool precondition = true;
};

// Quasi-Newton minimization of fmap_objective from `initial` (zero by default).
inline FunctionalMap solve_fmap(const FmapProblem& p, const SolveOptions& opts = {},
                                const std::optional<Eigen::MatrixXd>& initial = std::nullopt) {
    const Index k = p.k();
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(k * k);
    if (initial) {
        if (initial->rows() != k || initial->cols() != k) throw ArgumentError("initial C must be k x k");
        x0 = Eigen::Map<const Eigen::VectorXd>(initial->data(), k * k);
    }
    auto fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        const Eigen::Map<const Eigen::MatrixXd> C(x.data(), k, k);
        ObjectiveValue ov = fmap_objective(C, p);
        g = Eigen::Map<const Eigen::VectorXd>(ov.gradient.data(), k * k);
        return ov.value;
    };
    LbfgsOptions lo;
    lo.max_iter = opts.max_iter;
    lo.gtol = opts.tol;
    lo.ftol = opts.ftol;
    if (opts.precondition) lo.hessian_diagonal = quadratic_hessian_diagonal(p);
    LbfgsResult r;
    try {
        r = lbfgs_minimize(fg, x0, lo);
    } catch (const NonFiniteObjectiveError& e) {
        throw NonFiniteObjectiveError(std::string("functional map solve: ") + e.what(), e.last_valid());
    }
    FunctionalMap fm;
    fm.C = Eigen::Map<const Eigen::MatrixXd>(r.x.data(), k, k);
    fm.converged = r.converged;
    fm.final_objective = r.f;
    fm.iterations = r.iterations;
    fm.evaluations = r.evaluations;
    fm.stop_reason = r.reason;
    return fm;
}

// Dense target -> source vertex map. Row j of Pi is target vertex j.
struct PointMap {
    std::vector<int> target_to_source;
    Eigen::VectorXd confidence;             // clamped Pi entry at (j, match(j))
    std::optional<Eigen::MatrixXd> pi_dense;  // n_N x n_M clamped Pi when requested

    Index size() const { return static_cast<Index>(target_to_source.size()); }
};

enum class Recovery { RowArgmax, SpectralNearestNeighbor };

inline void check_compatible(const Eigen::MatrixXd& C, const SpectralBasis& basis_M, const SpectralBasis& basis_N) {
    if (C.rows() != basis_N.size() || C.cols() != basis_M.size()) {
        throw ArgumentError("C is " + std::to_string(C.rows()) + "x" + std::to_string(C.cols()) +
                            " but the bases have k_N=" + std::to_string(basis_N.size()) +
                            ", k_M=" + std::to_string(basis_M.size()));
    }
}

// Pi = Phi_N C Phi_M^+, clamped to [0, 1]; match(j) is the row argmax (ties to
// the smallest source index).
inline PointMap recover_pointmap(const Eigen::MatrixXd& C, const SpectralBasis& basis_M, const SpectralBasis& basis_N,
                                 bool keep_dense = false) {
    check_compatible(C, basis_M, basis_N);
    const Index nN = basis_N.num_vertices(), nM = basis_M.num_vertices();
    const Eigen::MatrixXd embN = basis_N.phi * C;       // n_N x k
    const Eigen::MatrixXd pinvT = basis_M.pinv().transpose();  // n_M x k
    PointMap pm;
    pm.target_to_source.assign(static_cast<std::size_t>(nN), 0);
    pm.confidence = Eigen::VectorXd::Zero(nN);
    if (keep_dense) pm.pi_dense = Eigen::MatrixXd(nN, nM);
    Eigen::MatrixXd block;  // n_M x rows, column j is row j of Pi
    for (Index r0 = 0; r0 < nN; r0 += detail::kPiBlockRows) {
        const Index rows = std::min(detail::kPiBlockRows, nN - r0);
        block.noalias() = pinvT * embN.middleRows(r0, rows).transpose();
        for (Index c = 0; c < rows; ++c) {
            Index best = 0;
            double best_val = std::clamp(block(0, c), 0.0, 1.0);
            for (Index i = 1; i < nM; ++i) {
                const double v = std::clamp(block(i, c), 0.0, 1.0);
                if (v > best_val) {
                    best_val = v;
                    best = i;
                }
            }
            pm.target_to_source[static_cast<std::size_t>(r0 + c)] = static_cast<int>(best);
            pm.confidence(r0 + c) = best_val;
        }
        if (keep_dense) pm.pi_dense->middleRows(r0, rows) = block.transpose().cwiseMax(0.0).cwiseMin(1.0);
    }
    return pm;
}

namespace detail {

// For each query row, the index of the nearest reference row (ties to the smallest index).
inline std::vector<int> nearest_rows(const Eigen::MatrixXd& query, const Eigen::MatrixXd& reference) {
    std::vector<int> out(static_cast<std::size_t>(query.rows()), 0);
    const Eigen::MatrixXd refT = reference.transpose();
    for (Index q = 0; q < query.rows(); ++q) {
        const Eigen::VectorXd x = query.row(q).transpose();
        Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index r = 0; r < refT.cols(); ++r) {
            const double d = (refT.col(r) - x).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = r;
            }
        }
        out[static_cast<std::size_t>(q)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace detail

// Nearest neighbour between target spectral embeddings Phi_N and transported
// source embeddings Phi_M C^T. Confidence is still the clamped Pi entry.
inline PointMap recover_pointmap_nn(const Eigen::MatrixXd& C, const SpectralBasis& basis_M, const SpectralBasis& basis_N,
                                    bool keep_dense = false) {
    check_compatible(C, basis_M, basis_N);
    const Eigen::MatrixXd embM = basis_M.phi * C.transpose();
    PointMap pm;
    pm.target_to_source = detail::nearest_rows(basis_N.phi, embM);
    const Eigen::MatrixXd embN = basis_N.phi * C;
    const Eigen::MatrixXd pinv = basis_M.pinv();
    pm.confidence.resize(basis_N.num_vertices());
    for (Index j = 0; j < basis_N.num_vertices(); ++j) {
        pm.confidence(j) = std::clamp(embN.row(j).dot(pinv.col(pm.target_to_source[static_cast<std::size_t>(j)])), 0.0, 1.0);
    }
    if (keep_dense) pm.pi_dense = (embN * pinv).cwiseMax(0.0).cwiseMin(1.0);
    return pm;
}

inline PointMap recover(Recovery method, const Eigen::MatrixXd& C, const SpectralBasis& basis_M,
                        const SpectralBasis& basis_N, bool keep_dense = false) {
    return method == Recovery::RowArgmax ? recover_pointmap(C, basis_M, basis_N, keep_dense)
                                         : recover_pointmap_nn(C, basis_M, basis_N, keep_dense);
}

// C = Phi_N^+ Pi Phi_M for the binary map Pi with (Pi f)_j = f_{match(j)}.
inline Eigen::MatrixXd fmap_from_pointmap(const std::vector<int>& target_to_source, const SpectralBasis& basis_M,
                                          const SpectralBasis& basis_N) {
    if (static_cast<Index>(target_to_source.size()) != basis_N.num_vertices()) {
        throw ArgumentError("point map has " + std::to_string(target_to_source.size()) + " entries, target has " +
                            std::to_string(basis_N.num_vertices()) + " vertices");
    }
    Eigen::MatrixXd pulled(basis_N.num_vertices(), basis_M.size());
    for (std::size_t j = 0; j < target_to_source.size(); ++j) {
        const int i = target_to_source[j];
        if (i < 0 || i >= basis_M.num_vertices()) {
            throw ArgumentError("point map entry " + std::to_string(j) + " = " + std::to_string(i) + " out of range");
        }
        pulled.row(static_cast<Index>(j)) = basis_M.phi.row(i);
    }
    return basis_N.pinv() * pulled;
}

// Map file: {"k", "C", "target_to_source", "confidence", "objective", "weights"}.
inline nlohmann::json map_to_json(const FunctionalMap& fm, const PointMap& pm, const FmapWeights& w) {
    nlohmann::json j;
    j["k"] = fm.C.rows();
    nlohmann::json rows = nlohmann::json::array();
    for (Index r = 0; r < fm.C.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(fm.C.cols()));
        for (Index c = 0; c < fm.C.cols(); ++c) row[static_cast<std::size_t>(c)] = fm.C(r, c);
        rows.push_back(row);
    }
    j["C"] = rows;
    j["target_to_source"] = pm.target_to_source;
    j["confidence"] = std::vector<double>(pm.confidence.data(), pm.confidence.data() + pm.confidence.size());
    j["objective"] = fm.final_objective;
    j["weights"] = {{"alpha", w.alpha}, {"beta", w.beta}, {"w_entropy", w.entropy}, {"w_sum", w.sums}};
    return j;
}

struct MapFile {
    FunctionalMap fmap;
    PointMap points;
    FmapWeights weights;
};

inline void save_map(const std::filesystem::path& path, const FunctionalMap& fm, const PointMap& pm, const FmapWeights& w) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path.string());
    out << map_to_json(fm, pm, w).dump(1) << '\n';
    if (!out) throw DataError("failed writing " + path.string());
}

inline MapFile load_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open map file: " + path.string());
    MapFile mf;
    try {
        nlohmann::json j;
        in >> j;
        const auto k = j.at("k").get<Index>();
        mf.fmap.C.resize(k, k);
        const auto& rows = j.at("C");
        if (static_cast<Index>(rows.size()) != k) throw ShapeError(path.string() + ": C must have k rows");
        for (Index r = 0; r < k; ++r) {
            const auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
            if (static_cast<Index>(row.size()) != k) throw ShapeError(path.string() + ": C must be k x k");
            for (Index c = 0; c < k; ++c) mf.fmap.C(r, c) = row[static_cast<std::size_t>(c)];
        }
        mf.points.target_to_source = j.at("target_to_source").get<std::vector<int>>();
        const auto conf = j.at("confidence").get<std::vector<double>>();
        if (conf.size() != mf.points.target_to_source.size()) throw ShapeError(path.string() + ": confidence length mismatch");
        mf.points.confidence = Eigen::Map<const Eigen::VectorXd>(conf.data(), static_cast<Index>(conf.size()));
        mf.fmap.final_objective = j.value("objective", 0.0);
        if (j.contains("weights")) {
            const auto& w = j["weights"];
            mf.weights.alpha = w.value("alpha", mf.weights.alpha);
            mf.weights.beta = w.value("beta", mf.weights.beta);
            mf.weights.entropy = w.value("w_entropy", mf.weights.entropy);
            mf.weights.sums = w.value("w_sum", mf.weights.sums);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return mf;
}

// Entropy of the clamped Pi for a given C (used to compare regularizer settings).
inline double clamped_map_entropy(const Eigen::MatrixXd& C, const SpectralBasis& basis_M, const SpectralBasis& basis_N) {
    FmapProblem p;
    p.basis_M = basis_M;
    p.basis_N = basis_N;
    p.pinv_M = basis_M.pinv();
    return detail::entropy_term(p, C, nullptr, 0.0);
}

}  // namespace densecorr
