#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include "densecorr/errors.hpp"
#include "densecorr/mesh.hpp"

namespace densecorr {

// First k generalized eigenpairs of (-W, A), ascending. phi is A-orthonormal.
struct SpectralBasis {
    Eigen::MatrixXd phi;     // n x k
    Eigen::VectorXd lambda;  // k, nonnegative
    VertexAreas areas;       // n
    // Index pairs (j, j+1) whose eigenvalues are within 1e-6 relative of each
    // other. Maps between symmetric shapes are sensitive to these.
    std::vector<std::pair<int, int>> near_degenerate;

    Index size() const { return lambda.size(); }
    Index num_vertices() const { return phi.rows(); }

    // Phi^+ = Phi^T A, k x n.
    Eigen::MatrixXd pinv() const { return phi.transpose() * areas.asDiagonal(); }
};

struct EigenOptions {
    // Dense solve when n <= dense_threshold or k > n / 3, iterative otherwise.
    Index dense_threshold = 600;
    double tol = 1e-10;
    int max_iter = 1000;
    std::uint64_t seed = 0x5eed5eedULL;
    // Shift of the iterative solver relative to ||L|| / ||A||.
    double shift_fraction = 1e-4;
};

inline constexpr double kNearDegenerateGap = 1e-6;

namespace detail {

inline void fix_signs(Eigen::MatrixXd& phi) {
    for (Index j = 0; j < phi.cols(); ++j) {
        Index arg = 0;
        phi.col(j).cwiseAbs().maxCoeff(&arg);
        if (phi(arg, j) < 0.0) phi.col(j) = -phi.col(j);
    }
}

inline std::vector<std::pair<int, int>> find_near_degenerate(const Eigen::VectorXd& lambda) {
    std::vector<std::pair<int, int>> out;
    const double scale = lambda.size() ? std::max(lambda.cwiseAbs().maxCoeff(), 1e-300) : 1.0;
    for (Index j = 0; j + 1 < lambda.size(); ++j) {
        const double a = lambda(j), b = lambda(j + 1);
        const double ref = std::max({std::abs(a), std::abs(b), 1e-12 * scale});
        if (std::abs(b - a) < kNearDegenerateGap * ref) out.emplace_back(static_cast<int>(j), static_cast<int>(j + 1));
    }
    return out;
}

inline double sparse_inf_norm(const Eigen::SparseMatrix<double>& m) {
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(m.rows());
    for (Index c = 0; c < m.outerSize(); ++c) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(m, c); it; ++it) rows(it.row()) += std::abs(it.value());
    }
    return rows.size() ? rows.maxCoeff() : 0.0;
}

// Deterministic uniform(-0.5, 0.5) fill independent of the standard library's
// distribution implementations.
inline Eigen::MatrixXd seeded_block(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd m(rows, cols);
    for (Index c = 0; c < cols; ++c)
        for (Index r = 0; r < rows; ++r) m(r, c) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
    return m;
}

inline void dense_eigen(const Eigen::SparseMatrix<double>& L, const VertexAreas& A, Index k, Eigen::MatrixXd& phi,
                        Eigen::VectorXd& lambda) {
    const Eigen::VectorXd s = A.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd M = s.asDiagonal() * Eigen::MatrixXd(L) * s.asDiagonal();
    M = (0.5 * (M + M.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense symmetric eigensolver failed", 0);
    phi = s.asDiagonal() * es.eigenvectors().leftCols(k);
    lambda = es.eigenvalues().head(k);
}

// A-orthonormal basis of span(Y): two passes of Cholesky QR in the A-inner
// product, falling back to Householder QR if a Gram matrix is not numerically
// positive definite.
inline Eigen::MatrixXd a_orthonormalize(Eigen::MatrixXd Y, const VertexAreas& A, const Eigen::VectorXd& sqrtA,
                                        const Eigen::VectorXd& invSqrtA) {
    for (Index j = 0; j < Y.cols(); ++j) {
        const double norm = std::sqrt(A.dot(Y.col(j).cwiseAbs2()));
        if (norm > 0.0) Y.col(j) /= norm;
    }
    for (int pass = 0; pass < 2; ++pass) {
        Eigen::MatrixXd gram(Y.cols(), Y.cols());
        gram.setZero();
        gram.selfadjointView<Eigen::Lower>().rankUpdate(sqrtA.asDiagonal() * Y);
        Eigen::LLT<Eigen::MatrixXd> llt(gram.selfadjointView<Eigen::Lower>());
        const Eigen::VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
        if (llt.info() != Eigen::Success || !(d.minCoeff() > 1e-7 * d.maxCoeff())) {
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(sqrtA.asDiagonal() * Y);
            return invSqrtA.asDiagonal() * (qr.householderQ() * Eigen::MatrixXd::Identity(Y.rows(), Y.cols()));
        }
        llt.matrixU().solveInPlace<Eigen::OnTheRight>(Y);
    }
    return Y;
}

// Block subspace iteration on (L + shift A)^{-1} A with Rayleigh-Ritz in the
// A-inner product.
inline void iterative_eigen(const Eigen::SparseMatrix<double>& L, const VertexAreas& A, Index k,
                            const EigenOptions& opts, Eigen::MatrixXd& phi, Eigen::VectorXd& lambda) {
    const Index n = L.rows();
    const Index p = std::min<Index>(n, std::max<Index>(2 * k, k + 16));
    const double normL = sparse_inf_norm(L);
    const double normA = A.maxCoeff();
    const double shift = opts.shift_fraction * normL / normA;

    Eigen::SparseMatrix<double> shifted = L;
    for (Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift * A(i);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
    if (solver.info() != Eigen::Success) throw ConvergenceError("sparse LDL^T factorization failed", 0);

    const Eigen::VectorXd sqrtA = A.cwiseSqrt();
    const Eigen::VectorXd invSqrtA = sqrtA.cwiseInverse();
    Eigen::MatrixXd X = seeded_block(n, p, opts.seed);
    X.col(0).setOnes();

    for (int it = 1; it <= opts.max_iter; ++it) {
        Eigen::MatrixXd Y = solver.solve(A.asDiagonal() * X);
        Eigen::MatrixXd Q = a_orthonormalize(Y, A, sqrtA, invSqrtA);
        Eigen::MatrixXd LQ = L * Q;
        Eigen::MatrixXd K = Q.transpose() * LQ;
        K = (0.5 * (K + K.transpose())).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
        X = Q * es.eigenvectors();
        const Eigen::VectorXd theta = es.eigenvalues();

        Eigen::MatrixXd R = (LQ * es.eigenvectors()).leftCols(k) - A.asDiagonal() * X.leftCols(k) * theta.head(k).asDiagonal();
        bool converged = true;
        for (Index j = 0; j < k && converged; ++j) {
            const double denom = (normL + std::abs(theta(j)) * normA) * X.col(j).norm();
            converged = R.col(j).norm() <= opts.tol * denom;
        }
        if (converged) {
            phi = X.leftCols(k);
            lambda = theta.head(k);
            return;
        }
    }
    throw ConvergenceError("shift-invert subspace iteration did not converge", opts.max_iter);
}

}  // namespace detail

// Relative eigen-residual of column j: ||L phi - lambda A phi|| / ((||L|| + |lambda| ||A||) ||phi||)
// with L = -W and infinity norms.
inline double eigen_residual(const StiffnessMatrix& W, const SpectralBasis& basis, Index j) {
    const Eigen::SparseMatrix<double> L = -W;
    const Eigen::VectorXd x = basis.phi.col(j);
    const Eigen::VectorXd r = L * x - basis.lambda(j) * basis.areas.cwiseProduct(x);
    const double denom = (detail::sparse_inf_norm(L) + std::abs(basis.lambda(j)) * basis.areas.maxCoeff()) * x.norm();
    return r.norm() / denom;
}

inline SpectralBasis eigenbasis(const StiffnessMatrix& W, const VertexAreas& A, Index k, const EigenOptions& opts = {}) {
    const Index n = W.rows();
    if (W.cols() != n || A.size() != n) {
        throw ArgumentError("stiffness matrix and vertex areas disagree in size");
    }
    if (k < 1 || k > n) {
        throw ArgumentError("basis size k=" + std::to_string(k) + " must lie in [1, n=" + std::to_string(n) + "]");
    }
    if (!(A.minCoeff() > 0.0)) throw DegenerateGeometryError("vertex areas must be strictly positive");
    const Eigen::SparseMatrix<double> L = -W;

    SpectralBasis basis;
    basis.areas = A;
    if (n <= opts.dense_threshold || 3 * k > n) {
        detail::dense_eigen(L, A, k, basis.phi, basis.lambda);
    } else {
        detail::iterative_eigen(L, A, k, opts, basis.phi, basis.lambda);
    }
    basis.lambda = basis.lambda.cwiseMax(0.0);
    detail::fix_signs(basis.phi);
    basis.near_degenerate = detail::find_near_degenerate(basis.lambda);
    return basis;
}

inline SpectralBasis eigenbasis(const TriMesh& mesh, Index k, const EigenOptions& opts = {}) {
    return eigenbasis(cotangent_weights(mesh), vertex_areas(mesh), k, opts);
}

// Spectral coefficients Phi^+ x = Phi^T A x (k x d).
inline Eigen::MatrixXd project(const SpectralBasis& basis, const Eigen::MatrixXd& field) {
    if (field.rows() != basis.num_vertices()) {
        throw ArgumentError("field has " + std::to_string(field.rows()) + " rows, basis has " +
                            std::to_string(basis.num_vertices()) + " vertices");
    }
    return basis.phi.transpose() * (basis.areas.asDiagonal() * field);
}

inline Eigen::MatrixXd reconstruct(const SpectralBasis& basis, const Eigen::MatrixXd& coeffs) {
    if (coeffs.rows() != basis.size()) {
        throw ArgumentError("coefficient matrix has " + std::to_string(coeffs.rows()) + " rows, basis has k=" +
                            std::to_string(basis.size()));
    }
    return basis.phi * coeffs;
}

// Laplacian through the spectrum: Phi Lambda Phi^+ x.
inline Eigen::MatrixXd spectral_laplacian(const SpectralBasis& basis, const Eigen::MatrixXd& field) {
    return basis.phi * (basis.lambda.asDiagonal() * project(basis, field));
}

// Basis cache: "DSB1", u32 n, u32 k, f64 lambda[k], f64 phi[n*k] row-major, f64 areas[n].
inline void save_basis(const std::filesystem::path& path, const SpectralBasis& basis) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    const auto n = static_cast<std::uint32_t>(basis.num_vertices());
    const auto k = static_cast<std::uint32_t>(basis.size());
    out.write("DSB1", 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&k), 4);
    out.write(reinterpret_cast<const char*>(basis.lambda.data()), static_cast<std::streamsize>(8 * k));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = basis.phi;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(8ull * n * k));
    out.write(reinterpret_cast<const char*>(basis.areas.data()), static_cast<std::streamsize>(8ull * n));
    if (!out) throw DataError("failed writing " + path.string());
}

inline SpectralBasis load_basis(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    char magic[4];
    std::uint32_t n = 0, k = 0;
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DSB1") throw FormatError(path.string() + ": offset 0: bad magic, expected DSB1");
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&k), 4);
    if (!in || k > n) throw FormatError(path.string() + ": offset 4: bad header");
    SpectralBasis basis;
    basis.lambda.resize(k);
    in.read(reinterpret_cast<char*>(basis.lambda.data()), static_cast<std::streamsize>(8ull * k));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(n, k);
    in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(8ull * n * k));
    basis.phi = rm;
    basis.areas.resize(n);
    in.read(reinterpret_cast<char*>(basis.areas.data()), static_cast<std::streamsize>(8ull * n));
    if (!in) throw FormatError(path.string() + ": truncated basis payload");
    basis.near_degenerate = detail::find_near_degenerate(basis.lambda);
    return basis;
}

}  // namespace densecorr
