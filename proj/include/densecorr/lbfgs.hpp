#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "densecorr/errors.hpp"

namespace densecorr {

struct LbfgsOptions {
    int max_iter = 500;
    // Stop when ||g|| <= gtol * (1 + |f|).
    double gtol = 1e-7;
    // Stop when the relative decrease of f over one iteration is <= ftol.
    double ftol = 1e-12;
    int history = 10;
    int max_linesearch = 40;
    double c1 = 1e-4;
    double c2 = 0.9;
    // Optional positive diagonal approximation of the Hessian. When set, the
    // initial inverse-Hessian estimate is its (scaled) inverse instead of a
    // multiple of the identity.
    Eigen::VectorXd hessian_diagonal;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string reason;
};

// Raised when the objective turns non-finite; carries the last finite iterate.
class NonFiniteObjectiveError : public NumericError {
public:
    NonFiniteObjectiveError(const std::string& what, Eigen::VectorXd last_valid)
        : NumericError(what), last_valid_(std::move(last_valid)) {}
    const Eigen::VectorXd& last_valid() const { return last_valid_; }

private:
    Eigen::VectorXd last_valid_;
};

namespace detail {

// Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb), kept
// inside the bracket with a safeguard towards the midpoint.
inline double cubic_step(double a, double fa, double ga, double b, double fb, double gb) {
    const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - ga * gb;
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b - a);
        const double t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
        const double margin = 0.1 * (hi - lo);
        if (std::isfinite(t) && t > lo + margin && t < hi - margin) return t;
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom).
// On line-search failure the memory is dropped and a steepest-descent step is
// tried; if that fails too the run stops. fg(x, grad) returns f and fills grad.
template <typename Objective>
LbfgsResult lbfgs_minimize(Objective&& fg, Eigen::VectorXd x0, const LbfgsOptions& opts = {}) {
    LbfgsResult res;
    const Eigen::Index n = x0.size();
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd g(n);
    double f = fg(x, g);
    ++res.evaluations;
    if (!std::isfinite(f) || !g.allFinite()) throw NonFiniteObjectiveError("objective is not finite at the starting point", x);

    std::deque<Eigen::VectorXd> S, Y;
    std::deque<double> rho;
    Eigen::VectorXd xn(n), gn(n), d(n);
    bool steepest = true;
    const bool precondition = opts.hessian_diagonal.size() == n;
    Eigen::VectorXd inv_diag;
    if (precondition) inv_diag = opts.hessian_diagonal.cwiseMax(1e-300).cwiseInverse();

    auto done = [&](std::string why, bool ok) {
        res.x = x;
        res.f = f;
        res.converged = ok;
        res.reason = std::move(why);
        return res;
    };

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        if (g.norm() <= opts.gtol * (1.0 + std::abs(f))) return done("gradient tolerance", true);

        // Two-loop recursion.
        d = precondition && S.empty() ? Eigen::VectorXd(-inv_diag.cwiseProduct(g)) : Eigen::VectorXd(-g);
        if (!steepest && !S.empty()) {
            d = -g;
            std::vector<double> alpha(S.size());
            for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
                alpha[i] = rho[i] * S[i].dot(d);
                d -= alpha[i] * Y[i];
            }
            if (precondition) {
                d = (S.back().dot(Y.back()) / Y.back().dot(inv_diag.cwiseProduct(Y.back()))) * inv_diag.cwiseProduct(d);
            } else {
                d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
            }
            for (std::size_t i = 0; i < S.size(); ++i) {
                const double beta = rho[i] * Y[i].dot(d);
                d += (alpha[i] - beta) * S[i];
            }
        }
        double dg0 = g.dot(d);
        if (!(dg0 < 0.0)) {
            d = precondition ? Eigen::VectorXd(-inv_diag.cwiseProduct(g)) : Eigen::VectorXd(-g);
            dg0 = g.dot(d);
            S.clear();
            Y.clear();
            rho.clear();
        }
        const bool first = S.empty();
        double step = first && !precondition ? std::min(1.0, 1.0 / std::max(g.norm(), 1e-300)) : 1.0;

        // Strong Wolfe line search.
        double a_prev = 0.0, f_prev = f, dg_prev = dg0;
        double a_lo = 0.0, f_lo = f, dg_lo = dg0, a_hi = 0.0, f_hi = f, dg_hi = dg0;
        bool bracketed = false, found = false;
        double fn = f;
        for (int ls = 0; ls < opts.max_linesearch; ++ls) {
            if (bracketed) step = detail::cubic_step(a_lo, f_lo, dg_lo, a_hi, f_hi, dg_hi);
            xn = x + step * d;
            fn = fg(xn, gn);
            ++res.evaluations;
            if (!std::isfinite(fn) || !gn.allFinite()) {
                throw NonFiniteObjectiveError("objective became non-finite during line search", x);
            }
            const double dgn = gn.dot(d);
            if (!bracketed) {
                if (fn > f + opts.c1 * step * dg0 || (ls > 0 && fn >= f_prev)) {
                    a_lo = a_prev; f_lo = f_prev; dg_lo = dg_prev;
                    a_hi = step; f_hi = fn; dg_hi = dgn;
                    bracketed = true;
                    continue;
                }
                if (std::abs(dgn) <= -opts.c2 * dg0) {
                    found = true;
                    break;
                }
                if (dgn >= 0.0) {
                    a_lo = step; f_lo = fn; dg_lo = dgn;
                    a_hi = a_prev; f_hi = f_prev; dg_hi = dg_prev;
                    bracketed = true;
                    continue;
                }
                a_prev = step; f_prev = fn; dg_prev = dgn;
                step *= 2.0;
            } else {
                if (fn > f + opts.c1 * step * dg0 || fn >= f_lo) {
                    a_hi = step; f_hi = fn; dg_hi = dgn;
                } else {
                    if (std::abs(dgn) <= -opts.c2 * dg0) {
                        found = true;
                        break;
                    }
                    if (dgn * (a_hi - a_lo) >= 0.0) {
                        a_hi = a_lo; f_hi = f_lo; dg_hi = dg_lo;
                    }
                    a_lo = step; f_lo = fn; dg_lo = dgn;
                }
                if (std::abs(a_hi - a_lo) <= 1e-16 * std::max(1.0, std::abs(a_lo))) break;
            }
        }
        if (!found) {
            // Accept the best sufficient-decrease point seen, if any.
            if (bracketed && a_lo > 0.0 && f_lo < f) {
                xn = x + a_lo * d;
                fn = fg(xn, gn);
                ++res.evaluations;
                found = std::isfinite(fn) && fn < f;
            }
        }
        if (!found) {
            if (steepest || first) return done("line search failed", false);
            steepest = true;
            S.clear();
            Y.clear();
            rho.clear();
            --iter;
            continue;
        }
        steepest = false;

        Eigen::VectorXd s = xn - x;
        Eigen::VectorXd y = gn - g;
        const double sy = s.dot(y);
        const double f_old = f;
        x.swap(xn);
        g.swap(gn);
        f = fn;
        res.iterations = iter + 1;
        if (sy > 1e-12 * s.norm() * y.norm()) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opts.history) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        if ((f_old - f) <= opts.ftol * std::max({std::abs(f_old), std::abs(f), 1.0})) {
            if (g.norm() <= opts.gtol * (1.0 + std::abs(f))) return done("gradient tolerance", true);
            return done("relative function decrease", true);
        }
    }
    if (g.norm() <= opts.gtol * (1.0 + std::abs(f))) return done("gradient tolerance", true);
    return done("iteration limit", false);
}

}  // namespace densecorr
