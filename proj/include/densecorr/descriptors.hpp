#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "densecorr/errors.hpp"
#include "densecorr/field.hpp"
#include "densecorr/mesh.hpp"
#include "densecorr/spectral.hpp"

namespace densecorr {

namespace detail {

struct SpectrumRange {
    Index first_nonzero;  // index of the smallest eigenvalue treated as nonzero
    double low;           // that eigenvalue
    double high;          // largest eigenvalue
};

inline SpectrumRange nonzero_spectrum(const SpectralBasis& basis) {
    if (basis.size() < 2) throw ArgumentError("descriptors need a basis with k >= 2");
    const double top = basis.lambda.maxCoeff();
    if (!(top > 1e-12)) throw DegenerateSpectrumError("all eigenvalues are below 1e-12");
    const double zero = 1e-10 * top;
    for (Index i = 0; i < basis.size(); ++i) {
        if (basis.lambda(i) > zero) return {i, basis.lambda(i), top};
    }
    throw DegenerateSpectrumError("no nonzero eigenvalue in basis");
}

inline Eigen::VectorXd log_space(double lo, double hi, Index count) {
    Eigen::VectorXd out(count);
    if (count == 1) {
        out(0) = lo;
        return out;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (Index i = 0; i < count; ++i) out(i) = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

}  // namespace detail

// Raw heat kernel diagonal k_t(v) = sum_i exp(-lambda_i t) phi_i(v)^2, one column per time.
inline Eigen::MatrixXd heat_kernel_diagonal(const SpectralBasis& basis, const Eigen::VectorXd& times) {
    const Eigen::MatrixXd sq = basis.phi.array().square().matrix();
    Eigen::MatrixXd decay(basis.size(), times.size());
    for (Index t = 0; t < times.size(); ++t) decay.col(t) = (-basis.lambda.array() * times(t)).exp().matrix();
    return sq * decay;
}

// Diffusion times of the standard HKS sampling, log-spaced over
// [4 ln 10 / lambda_max, 4 ln 10 / lambda_min_nonzero].
inline Eigen::VectorXd hks_times(const SpectralBasis& basis, Index num_times) {
    const auto range = detail::nonzero_spectrum(basis);
    const double c = 4.0 * std::log(10.0);
    return detail::log_space(c / range.high, c / range.low, num_times);
}

// Heat Kernel Signature; each column is scaled to unit area-weighted mean.
inline FeatureField hks(const SpectralBasis& basis, Index num_times = 16) {
    if (num_times < 1) throw ArgumentError("hks needs num_times >= 1");
    const Eigen::VectorXd times = hks_times(basis, num_times);
    Eigen::MatrixXd k = heat_kernel_diagonal(basis, times);
    const double total = basis.areas.sum();
    for (Index t = 0; t < k.cols(); ++t) {
        const double mean = basis.areas.dot(k.col(t)) / total;
        k.col(t) /= mean;
    }
    return {std::move(k), FeatureSource::Hks, false};
}

// Wave Kernel Signature with log-energies evenly spanning
// [log lambda_min_nonzero, log lambda_max] and sigma = sigma_factor * step.
// Zero eigenvalues do not take part.
inline FeatureField wks(const SpectralBasis& basis, Index num_energies = 100, double sigma_factor = 7.0) {
    if (num_energies < 1) throw ArgumentError("wks needs num_energies >= 1");
    const auto range = detail::nonzero_spectrum(basis);
    const double emin = std::log(range.low), emax = std::log(range.high);
    const double step = num_energies > 1 ? (emax - emin) / static_cast<double>(num_energies - 1) : 0.0;
    const double sigma = step > 0.0 ? sigma_factor * step : 1.0;
    const Index m = basis.size() - range.first_nonzero;
    const Eigen::VectorXd loglam = basis.lambda.tail(m).array().log().matrix();
    const Eigen::MatrixXd sq = basis.phi.rightCols(m).array().square().matrix();
    Eigen::MatrixXd weights(m, num_energies);
    for (Index e = 0; e < num_energies; ++e) {
        const double energy = emin + step * static_cast<double>(e);
        Eigen::VectorXd w = (-(energy - loglam.array()).square() / (2.0 * sigma * sigma)).exp().matrix();
        const double norm = w.sum();
        weights.col(e) = norm > 0.0 ? (w / norm).eval() : w;
    }
    return {sq * weights, FeatureSource::Wks, false};
}

// Raw xyz followed, for each frequency band b, by sin(2^b pi p) for x, y, z and
// then cos(2^b pi p) for x, y, z. Width 3 + 6 * bands.
inline FeatureField positional_encoding(const TriMesh& mesh, Index bands = 6) {
    if (bands < 0) throw ArgumentError("positional encoding needs bands >= 0");
    const Index n = mesh.num_vertices();
    Eigen::MatrixXd out(n, 3 + 6 * bands);
    out.leftCols(3) = mesh.vertices;
    for (Index b = 0; b < bands; ++b) {
        const double freq = std::ldexp(std::numbers::pi, static_cast<int>(b));
        const Eigen::ArrayXXd arg = mesh.vertices.array() * freq;
        out.middleCols(3 + 6 * b, 3) = arg.sin().matrix();
        out.middleCols(3 + 6 * b + 3, 3) = arg.cos().matrix();
    }
    return {std::move(out), FeatureSource::PositionalEncoding, false};
}

}  // namespace densecorr
