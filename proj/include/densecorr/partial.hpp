#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "densecorr/errors.hpp"
#include "densecorr/funcmap.hpp"
#include "densecorr/mesh.hpp"

namespace densecorr {

struct PartialOptions {
    double w_area = 1.0;   // ((matched area - source area) / source area)^2
    double w_ms = 1e-2;    // boundary smoothness of the mask over target edges
    double w_eta = 1e-3;   // entropy of the mask
    int max_rounds = 20;
    double tol = 1e-6;     // relative joint-objective change that ends the alternation
    int mask_steps = 100;  // projected-gradient steps on the mask per round
    SolveOptions solve;
};

struct PartialSolution {
    Eigen::MatrixXd C;
    Eigen::VectorXd eta;  // target membership mask in [0, 1]
    double matched_area_fraction = 0.0;
    double objective = 0.0;
    int rounds = 0;
};

namespace detail {

inline constexpr double kMaskEps = 1e-12;

// Mask energy for a fixed C: data term with target features masked by eta
// plus area, smoothness and entropy penalties.
struct MaskEnergy {
    const FmapProblem& p;
    const Eigen::MatrixXd CF;  // C F, fixed during the mask step
    const std::vector<std::pair<int, int>>& edges;
    Eigen::VectorXd edge_w;
    double source_area, target_area;
    double data_scale;  // 1 / ||G||^2 of the unmasked target features
    PartialOptions opts;

    double operator()(const Eigen::VectorXd& eta, Eigen::VectorXd* grad) const {
        const auto& A = p.basis_N.areas;
        const Eigen::MatrixXd masked = eta.asDiagonal() * p.g_vertex;
        const Eigen::MatrixXd R = CF - project(p.basis_N, masked);  // k x d
        double e = data_scale * R.squaredNorm();
        const double area_gap = (A.dot(eta) - source_area) / source_area;
        e += opts.w_area * area_gap * area_gap;
        double ms = 0.0;
        for (std::size_t t = 0; t < edges.size(); ++t) {
            const double diff = eta(edges[t].first) - eta(edges[t].second);
            ms += edge_w(static_cast<Index>(t)) * diff * diff;
        }
        e += opts.w_ms * ms;
        const Eigen::ArrayXd logs = (eta.array() + kMaskEps).log();
        e -= opts.w_eta * (eta.array() * logs).sum();
        if (grad) {
            const Eigen::MatrixXd back = p.basis_N.phi * R;  // n_N x d
            *grad = -2.0 * data_scale * A.cwiseProduct(back.cwiseProduct(p.g_vertex).rowwise().sum());
            *grad += (2.0 * opts.w_area * area_gap / source_area) * A;
            for (std::size_t t = 0; t < edges.size(); ++t) {
                const auto [i, j] = edges[t];
                const double g = 2.0 * opts.w_ms * edge_w(static_cast<Index>(t)) * (eta(i) - eta(j));
                (*grad)(i) += g;
                (*grad)(j) -= g;
            }
            *grad -= (opts.w_eta * (logs + eta.array() / (eta.array() + kMaskEps))).matrix();
        }
        return e;
    }
};

// Projected gradient descent on [0, 1]^n with Armijo backtracking.
inline double minimize_mask(const MaskEnergy& energy, Eigen::VectorXd& eta, int steps) {
    Eigen::VectorXd g, trial;
    double e = energy(eta, &g);
    double t = 1.0;
    for (int it = 0; it < steps; ++it) {
        t *= 2.0;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt) {
            trial = (eta - t * g).cwiseMax(0.0).cwiseMin(1.0);
            const double delta2 = (trial - eta).squaredNorm();
            if (delta2 == 0.0) break;
            const double et = energy(trial, nullptr);
            if (et <= e - 1e-4 / t * delta2) {
                eta.swap(trial);
                e = energy(eta, &g);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break;
    }
    return e;
}

}  // namespace detail

// Partial correspondence from a partial source M to a full target N. Alternates
// between solving C against mask-restricted target features and projected
// gradient steps on the target mask eta.
inline PartialSolution solve_partial(const FmapProblem& problem, const TriMesh& target, const PartialOptions& opts = {}) {
    if (target.num_vertices() != problem.n_N()) throw ArgumentError("target mesh does not match the problem's target basis");
    if (problem.g_vertex.rows() != problem.n_N()) throw ArgumentError("problem carries no per-vertex target features");
    if (opts.w_area < 0 || opts.w_ms < 0 || opts.w_eta < 0) throw ArgumentError("partial weights must be nonnegative");
    const double source_area = problem.basis_M.areas.sum();
    const double target_area = problem.basis_N.areas.sum();
    if (source_area > target_area) {
        warn("source area " + std::to_string(source_area) + " exceeds target area " + std::to_string(target_area) +
             "; the mask will saturate");
    }
    const auto edges = edge_list(target);
    Eigen::VectorXd edge_w(static_cast<Index>(edges.size()));
    const double mean_area = target_area / static_cast<double>(problem.n_N());
    for (std::size_t t = 0; t < edges.size(); ++t) {
        edge_w(static_cast<Index>(t)) =
            0.5 * (problem.basis_N.areas(edges[t].first) + problem.basis_N.areas(edges[t].second)) / mean_area;
    }

    const double g_norm2 = problem.G.squaredNorm();
    const double data_scale = g_norm2 > 0.0 ? 1.0 / g_norm2 : 1.0;
    FmapProblem masked = problem;
    PartialSolution sol;
    sol.eta = Eigen::VectorXd::Ones(problem.n_N());
    std::optional<Eigen::MatrixXd> warm;
    double previous = std::numeric_limits<double>::infinity();
    for (int round = 0; round < opts.max_rounds; ++round) {
        masked.G = project(problem.basis_N, Eigen::MatrixXd(sol.eta.asDiagonal() * problem.g_vertex));
        const FunctionalMap fm = solve_fmap(masked, opts.solve, warm);
        warm = fm.C;
        sol.C = fm.C;
        const detail::MaskEnergy energy{problem, fm.C * problem.F, edges, edge_w, source_area, target_area, data_scale, opts};
        const double mask_e = detail::minimize_mask(energy, sol.eta, opts.mask_steps);
        // Joint objective: the C-dependent regularizers plus the mask energy
        // (which already contains the masked data term).
        double joint = mask_e;
        for (FmapTerm t : kAllFmapTerms) {
            if (t == FmapTerm::Data) continue;
            const double w = term_weight(t, problem.weights);
            if (w != 0.0) joint += w * fmap_term(t, fm.C, problem);
        }
        sol.objective = joint;
        sol.rounds = round + 1;
        if (std::abs(previous - joint) <= opts.tol * std::max(1.0, std::abs(joint))) break;
        previous = joint;
    }
    sol.matched_area_fraction = problem.basis_N.areas.dot(sol.eta) / target_area;
    return sol;
}

}  // namespace densecorr
