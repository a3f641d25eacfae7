#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "densecorr/errors.hpp"

namespace densecorr {

struct Assignment {
    // (row, col) pairs ordered by the smaller side's index.
    std::vector<std::pair<int, int>> pairs;
    double cost = 0.0;
};

namespace detail {

// Rectangular Hungarian (shortest augmenting path with potentials) for
// rows <= cols. Returns col_of_row and the dual potentials.
struct HungarianResult {
    std::vector<int> col_of_row;
    std::vector<double> u;  // row potentials
    std::vector<double> v;  // column potentials, <= 0, exactly 0 on unmatched columns
};

inline HungarianResult hungarian(const Eigen::MatrixXd& a) {
    const int R = static_cast<int>(a.rows());
    const int C = static_cast<int>(a.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(R + 1, 0.0), v(C + 1, 0.0), minv(C + 1);
    std::vector<int> p(C + 1, 0), way(C + 1, 0);
    std::vector<char> used(C + 1);
    for (int i = 1; i <= R; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= C; ++j) {
                if (used[j]) continue;
                const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= C; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    HungarianResult res;
    res.col_of_row.assign(R, -1);
    for (int j = 1; j <= C; ++j) {
        if (p[j] > 0) res.col_of_row[p[j] - 1] = j - 1;
    }
    res.u.assign(u.begin() + 1, u.end());
    res.v.assign(v.begin() + 1, v.end());
    return res;
}

// Among optimal matchings, moves to the lexicographically smallest column
// sequence (row 0 first). Optimal matchings are exactly the perfect matchings
// of the tight subgraph once unmatched columns are treated as owned by
// zero-cost dummy rows whose potential is 0; rows are fixed greedily in order
// and each improvement is found as an alternating cycle through unfixed rows.
inline void lexicographic_optimum(const Eigen::MatrixXd& a, HungarianResult& h, double eps) {
    const int R = static_cast<int>(a.rows());
    const int C = static_cast<int>(a.cols());
    std::vector<int> owner(C, -1);  // -1: a dummy row owns the column
    for (int r = 0; r < R; ++r) owner[h.col_of_row[r]] = r;
    std::vector<int> zero_v;
    for (int c = 0; c < C; ++c) {
        if (std::abs(h.v[c]) <= eps) zero_v.push_back(c);
    }
    auto tight = [&](int r, int c) { return a(r, c) - h.u[r] - h.v[c] <= eps; };

    std::vector<int> parent(C);
    std::vector<char> seen(C);
    std::vector<int> queue;
    for (int i = 0; i < R; ++i) {
        const int cur = h.col_of_row[i];
        for (int j = 0; j < cur; ++j) {
            if (!tight(i, j)) continue;
            const int oj = owner[j];
            if (oj >= 0 && oj < i) continue;  // held by a fixed row
            // Search for a column chain j -> ... -> cur along which each owner
            // can shift to the next column.
            std::fill(seen.begin(), seen.end(), 0);
            queue.assign(1, j);
            seen[j] = 1;
            parent[j] = -1;
            int reached = -1;
            for (std::size_t q = 0; q < queue.size() && reached < 0; ++q) {
                const int c = queue[q];
                const int o = owner[c];
                auto visit = [&](int next) {
                    if (seen[next]) return;
                    const int on = owner[next];
                    if (next != cur && on >= 0 && on < i) return;
                    seen[next] = 1;
                    parent[next] = c;
                    if (next == cur) reached = next;
                    else queue.push_back(next);
                };
                if (o >= 0) {
                    if (o <= i) continue;
                    for (int next = 0; next < C && reached < 0; ++next) {
                        if (tight(o, next)) visit(next);
                    }
                } else {
                    for (int next : zero_v) {
                        if (reached >= 0) break;
                        visit(next);
                    }
                }
            }
            if (reached < 0) continue;
            std::vector<int> chain;
            for (int c = cur; c >= 0; c = parent[c]) chain.push_back(c);
            std::reverse(chain.begin(), chain.end());  // j, ..., cur
            std::vector<int> old(chain.size());
            for (std::size_t t = 0; t < chain.size(); ++t) old[t] = owner[chain[t]];
            owner[j] = i;
            h.col_of_row[i] = j;
            for (std::size_t t = 0; t + 1 < chain.size(); ++t) {
                const int mover = old[t];
                owner[chain[t + 1]] = mover;
                if (mover >= 0) h.col_of_row[mover] = chain[t + 1];
            }
            break;
        }
    }
}

}  // namespace detail

// Exact minimum-cost injective matching of size min(m, n). Among optimal
// matchings the lexicographically smallest partner sequence of the smaller
// side is returned (for m <= n: the column of row 0, then row 1, ...).
inline Assignment min_cost_assignment(const Eigen::MatrixXd& cost) {
    if (cost.rows() == 0 || cost.cols() == 0) throw ArgumentError("assignment on an empty cost matrix");
    if (!cost.allFinite()) throw ArgumentError("assignment costs must be finite");
    const bool transposed = cost.rows() > cost.cols();
    const Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
    auto h = detail::hungarian(a);

    auto total = [&](const std::vector<int>& col_of_row) {
        double s = 0.0;
        for (std::size_t r = 0; r < col_of_row.size(); ++r) s += a(static_cast<Eigen::Index>(r), col_of_row[r]);
        return s;
    };
    const double optimum = total(h.col_of_row);
    const std::vector<int> hungarian_cols = h.col_of_row;
    const double scale = 1.0 + a.cwiseAbs().maxCoeff();
    detail::lexicographic_optimum(a, h, 1e-9 * scale);
    double best = total(h.col_of_row);
    if (best > optimum) {
        // Rounding admitted a near-tie that is not an exact tie.
        h.col_of_row = hungarian_cols;
        best = optimum;
    }

    Assignment out;
    out.cost = best;
    out.pairs.reserve(h.col_of_row.size());
    for (std::size_t r = 0; r < h.col_of_row.size(); ++r) {
        const int rr = static_cast<int>(r);
        if (transposed) out.pairs.emplace_back(h.col_of_row[r], rr);
        else out.pairs.emplace_back(rr, h.col_of_row[r]);
    }
    return out;
}

}  // namespace densecorr
