#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "bsi/errors.hpp"
#include "bsi/kernel.hpp"
#include "bsi/linalg.hpp"

namespace bsi {

/// theta = [x', sigma2, beta].
struct HyperVector {
    Vector x;
    double sigma2 = 1.0;
    double beta = 0.5;

    [[nodiscard]] Vector stacked() const {
        Vector t(x.size() + 2);
        t << x, sigma2, beta;
        return t;
    }

    void validate() const {
        if (x.size() < 1) throw DimensionError("HyperVector: x must be non-empty");
        if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
            throw DomainError("HyperVector: sigma2 must be positive, got " + std::to_string(sigma2));
        }
        if (!(beta > 0.0 && beta < 1.0)) {
            throw DomainError("HyperVector: beta must lie in (0, 1), got " + std::to_string(beta));
        }
        if (!x.allFinite()) throw DomainError("HyperVector: x has non-finite entries");
    }
};

/// Posterior of g given y: mean, covariance P, gain C (mean = C y).
struct PosteriorSummary {
    Vector mean_g;
    Matrix covariance_P;
    Matrix gain_C;
};

namespace detail {

inline void check_posterior_args(const Vector& y, const Vector& u, Index n, double sigma2) {
    if (y.size() != u.size()) {
        throw DimensionError("posterior: y and u must have the same length");
    }
    if (n < 1 || n > y.size()) throw DimensionError("posterior: need 1 <= n <= N");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw DomainError("posterior: sigma2 must be positive, got " + std::to_string(sigma2));
    }
}

// Information form: P = (U'U / s2 + prior_inv)^{-1}, C = P U' / s2.
inline PosteriorSummary information_posterior(const Vector& y, const Matrix& U, double sigma2,
                                              const Matrix& prior_inv) {
    Matrix info = U.transpose() * U / sigma2 + prior_inv;
    info = 0.5 * (info + info.transpose());
    try {
        const SpdFactor f(info);
        PosteriorSummary post;
        post.gain_C = f.solve(U.transpose() / sigma2);
        post.covariance_P = f.inverse();
        post.covariance_P = 0.5 * (post.covariance_P + post.covariance_P.transpose());
        post.mean_g = post.gain_C * y;
        return post;
    } catch (const FactorizationError& e) {
        throw ConditioningError(std::string("posterior: information matrix is singular: ") +
                                e.what());
    }
}

}  // namespace detail

inline PosteriorSummary posterior(const Vector& y, const Vector& u, Index n, double sigma2,
                                  double beta) {
    detail::check_posterior_args(y, u, n, sigma2);
    return detail::information_posterior(y, toeplitz_lift(u, n), sigma2, kernel_inverse(beta, n));
}

/// Same as posterior() with an arbitrary SPD prior covariance in place of K_beta.
inline PosteriorSummary posterior_with_prior(const Vector& y, const Vector& u, double sigma2,
                                             const Matrix& prior) {
    detail::check_posterior_args(y, u, prior.rows(), sigma2);
    Matrix prior_inv;
    try {
        prior_inv = SpdFactor(prior).inverse();
    } catch (const FactorizationError& e) {
        throw ConditioningError(std::string("posterior_with_prior: prior is singular: ") +
                                e.what());
    }
    return detail::information_posterior(y, toeplitz_lift(u, prior.rows()), sigma2, prior_inv);
}

/// log N(y; 0, U K U' + s2 I), evaluated in the n x n parametrization:
///   log det Sigma_y = N log s2 + log det K + log det P^{-1}
///   y' Sigma_y^{-1} y = (y'y - y'U g_hat) / s2
inline double log_marginal_likelihood(const Vector& y, const Vector& u, Index n, double sigma2,
                                      double beta) {
    detail::check_posterior_args(y, u, n, sigma2);
    const Matrix U = toeplitz_lift(u, n);
    Matrix info = U.transpose() * U / sigma2 + kernel_inverse(beta, n);
    info = 0.5 * (info + info.transpose());
    try {
        const SpdFactor f(info);
        const Vector Uty = U.transpose() * y;
        const Vector g_hat = f.solve(Uty) / sigma2;
        const double N = static_cast<double>(y.size());
        const double logdet = N * std::log(sigma2) + kernel_logdet(beta, n) + f.log_determinant();
        const double quad = (y.squaredNorm() - Uty.dot(g_hat)) / sigma2;
        return -0.5 * (N * std::log(2.0 * std::numbers::pi) + logdet + quad);
    } catch (const FactorizationError& e) {
        throw ConditioningError(std::string("log_marginal_likelihood: ") + e.what());
    }
}

}  // namespace bsi
