#pragma once

// Dense primitives and the structured operators used by the estimator:
// the Toeplitz convolution lift, column-major vec, the selection matrix R
// with R u = vec(T_n(u)), and a Cholesky-backed SPD solver.
//
// Indexing: math documents use rows t = 1..N and columns i = 1..n with
// T_n(u)(t, i) = u_{t-i}, u indexed 0..N-1. Storage is 0-based, so entry
// (r, c) of the lifted matrix holds u[r - c]. That is the only place the
// shift is applied.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>

#include "bsi/errors.hpp"

namespace bsi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// N x n lower-triangular Toeplitz matrix whose first column is u.
inline Matrix toeplitz_lift(const Vector& u, Index n) {
    const Index N = u.size();
    if (n < 1 || n > N) {
        throw DimensionError("toeplitz_lift: need 1 <= n <= N, got n=" + std::to_string(n) +
                             ", N=" + std::to_string(N));
    }
    Matrix U = Matrix::Zero(N, n);
    for (Index c = 0; c < n; ++c) {
        U.col(c).tail(N - c) = u.head(N - c);
    }
    return U;
}

/// Column-major stacking: output[c * rows + r] = M(r, c).
inline Vector vec(const Matrix& M) {
    return Eigen::Map<const Vector>(M.data(), M.size());
}

/// (N n) x N 0/1 matrix with R u = vec(toeplitz_lift(u, n)).
inline Matrix selection_matrix_R(Index N, Index n) {
    if (n < 1 || n > N) {
        throw DimensionError("selection_matrix_R: need 1 <= n <= N");
    }
    Matrix R = Matrix::Zero(N * n, N);
    for (Index c = 0; c < n; ++c) {
        for (Index r = c; r < N; ++r) {
            R(c * N + r, r - c) = 1.0;
        }
    }
    return R;
}

/// Kronecker product. Only small instances should ever reach this.
inline Matrix kron(const Matrix& A, const Matrix& B) {
    Matrix K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Index i = 0; i < A.rows(); ++i) {
        for (Index j = 0; j < A.cols(); ++j) {
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        }
    }
    return K;
}

inline bool is_symmetric(const Matrix& A, double tol = 1e-10) {
    if (A.rows() != A.cols()) return false;
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    return (A - A.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

/// Cholesky factor of a symmetric positive definite matrix. Never adds jitter.
class SpdFactor {
public:
    explicit SpdFactor(const Matrix& A) {
        if (A.rows() != A.cols()) {
            throw DimensionError("SpdFactor: matrix is not square");
        }
        if (!is_symmetric(A)) {
            throw FactorizationError("SpdFactor: matrix is not symmetric", -1);
        }
        llt_.compute(A);
        if (llt_.info() != Eigen::Success || !llt_.matrixLLT().diagonal().allFinite() ||
            (llt_.matrixLLT().diagonal().array() <= 0.0).any()) {
            throw FactorizationError("SpdFactor: matrix is not positive definite",
                                     failing_pivot(A));
        }
    }

    [[nodiscard]] Index size() const { return llt_.rows(); }

    template <typename Rhs>
    [[nodiscard]] Matrix solve(const Eigen::MatrixBase<Rhs>& B) const {
        if (B.rows() != size()) {
            throw DimensionError("SpdFactor::solve: right-hand side has wrong row count");
        }
        return llt_.solve(B);
    }

    [[nodiscard]] Vector solve(const Vector& b) const {
        if (b.size() != size()) {
            throw DimensionError("SpdFactor::solve: right-hand side has wrong length");
        }
        return llt_.solve(b);
    }

    [[nodiscard]] double log_determinant() const {
        return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    }

    [[nodiscard]] Matrix inverse() const {
        return llt_.solve(Matrix::Identity(size(), size()));
    }

    [[nodiscard]] Matrix lower() const { return llt_.matrixL(); }

private:
    // Unblocked re-run to locate the first non-positive pivot.
    static std::ptrdiff_t failing_pivot(const Matrix& A) {
        const Index n = A.rows();
        Matrix L = Matrix::Zero(n, n);
        for (Index j = 0; j < n; ++j) {
            double d = A(j, j) - L.row(j).head(j).squaredNorm();
            if (!(d > 0.0) || !std::isfinite(d)) return static_cast<std::ptrdiff_t>(j);
            L(j, j) = std::sqrt(d);
            for (Index i = j + 1; i < n; ++i) {
                L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
            }
        }
        return static_cast<std::ptrdiff_t>(n - 1);
    }

    Eigen::LLT<Matrix> llt_;
};

/// Solves A X = B for SPD A through its Cholesky factor.
template <typename Rhs>
Matrix spd_solve(const Matrix& A, const Eigen::MatrixBase<Rhs>& B) {
    return SpdFactor(A).solve(B);
}

inline Vector spd_solve(const Matrix& A, const Vector& b) {
    return SpdFactor(A).solve(b);
}

/// Numerical rank from a column-pivoted QR with relative pivot threshold.
inline Index column_rank(const Matrix& H, double tol = 1e-10) {
    if (H.size() == 0) return 0;
    Eigen::ColPivHouseholderQR<Matrix> qr(H);
    qr.setThreshold(tol);
    return qr.rank();
}

}  // namespace bsi
