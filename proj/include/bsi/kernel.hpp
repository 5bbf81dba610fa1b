#pragma once

// First-order stable spline (TC) kernel, K(i, j) = beta^max(i, j) with
// 1-based i, j and unit scale.
//
// The kernel has an exact LDL' factorization K = L D L' with L upper
// triangular all-ones (g_i = sum_{k >= i} w_k) and independent increments
// of variance d_k = beta^k (1 - beta) for k < n, d_n = beta^n. Hence
//   log det K   = n (n + 1) / 2 log beta + (n - 1) log(1 - beta)
//   K^{-1}      = sum_k (e_k - e_{k+1})(e_k - e_{k+1})' / d_k   (tridiagonal)
// which is what the production path uses. The dense Cholesky route is kept
// for cross-checking.

#include <cmath>
#include <string>
#include <utility>

#include "bsi/errors.hpp"
#include "bsi/linalg.hpp"

namespace bsi {

inline constexpr double kBetaMin = 1e-4;
inline constexpr double kBetaMax = 1.0 - 1e-4;

struct StableSplineKernel {
    double beta;
    Index n;
    static constexpr double lambda = 1.0;
};

struct LogdetInvtrace {
    double logdet;
    double invtrace;

    [[nodiscard]] double sum() const { return logdet + invtrace; }
};

namespace detail {

inline void check_beta(double beta, const char* where) {
    if (!(beta > 0.0 && beta < 1.0)) {
        throw DomainError(std::string(where) + ": beta must lie in (0, 1), got " +
                          std::to_string(beta));
    }
}

// log d_k, k = 1..n, of the increment variances.
inline Vector log_increment_variances(double beta, Index n) {
    Vector logd(n);
    const double lb = std::log(beta);
    const double l1mb = std::log1p(-beta);
    for (Index k = 1; k <= n; ++k) {
        logd(k - 1) = static_cast<double>(k) * lb + (k < n ? l1mb : 0.0);
    }
    return logd;
}

}  // namespace detail

inline Matrix build_kernel(double beta, Index n) {
    detail::check_beta(beta, "build_kernel");
    if (n < 1) throw DimensionError("build_kernel: n must be positive");
    Matrix K(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            K(i, j) = std::pow(beta, static_cast<double>(std::max(i, j) + 1));
        }
    }
    return K;
}

inline Matrix build_kernel(const StableSplineKernel& k) { return build_kernel(k.beta, k.n); }

inline double kernel_logdet(double beta, Index n) {
    detail::check_beta(beta, "kernel_logdet");
    const double nn = static_cast<double>(n);
    return 0.5 * nn * (nn + 1.0) * std::log(beta) + (nn - 1.0) * std::log1p(-beta);
}

/// Tridiagonal inverse of the TC kernel from its closed-form factorization.
inline Matrix kernel_inverse(double beta, Index n) {
    detail::check_beta(beta, "kernel_inverse");
    if (n < 1) throw DimensionError("kernel_inverse: n must be positive");
    const Vector logd = detail::log_increment_variances(beta, n);
    Matrix Kinv = Matrix::Zero(n, n);
    for (Index k = 0; k < n; ++k) {
        const double w = std::exp(-logd(k));
        if (!std::isfinite(w)) {
            throw ConditioningError("kernel_inverse: TC kernel numerically singular at beta=" +
                                    std::to_string(beta) + ", n=" + std::to_string(n));
        }
        Kinv(k, k) += w;
        if (k + 1 < n) {
            Kinv(k + 1, k + 1) += w;
            Kinv(k, k + 1) -= w;
            Kinv(k + 1, k) -= w;
        }
    }
    return Kinv;
}

/// log det K_beta and Tr[K_beta^{-1} S] through the closed-form LDL' factor.
inline LogdetInvtrace kernel_logdet_invtrace(double beta, const Matrix& S) {
    detail::check_beta(beta, "kernel_logdet_invtrace");
    if (S.rows() != S.cols() || S.rows() < 1) {
        throw DimensionError("kernel_logdet_invtrace: S must be square and non-empty");
    }
    const Index n = S.rows();
    const Vector logd = detail::log_increment_variances(beta, n);
    double tr = 0.0;
    for (Index k = 0; k < n; ++k) {
        // (e_k - e_{k+1})' S (e_k - e_{k+1})
        double q = S(k, k);
        if (k + 1 < n) q += S(k + 1, k + 1) - S(k, k + 1) - S(k + 1, k);
        tr += q * std::exp(-logd(k));
    }
    const double ld = logd.sum();
    if (!std::isfinite(tr) || !std::isfinite(ld)) {
        throw ConditioningError("kernel_logdet_invtrace: TC kernel numerically singular at beta=" +
                                std::to_string(beta));
    }
    return {ld, tr};
}

/// Same quantities through a dense Cholesky of the materialized kernel.
inline LogdetInvtrace kernel_logdet_invtrace_dense(double beta, const Matrix& S) {
    detail::check_beta(beta, "kernel_logdet_invtrace_dense");
    try {
        const SpdFactor f(build_kernel(beta, S.rows()));
        return {f.log_determinant(), f.solve(S).trace()};
    } catch (const FactorizationError& e) {
        throw ConditioningError(std::string("kernel_logdet_invtrace_dense: beta=") +
                                std::to_string(beta) + ": " + e.what());
    }
}

}  // namespace bsi
