#pragma once

// Empirical-Bayes estimation of theta = [x', sigma2, beta] by EM.
//
// Each iteration computes the posterior of g at the current theta (E-step),
// then maximizes the expected complete log-likelihood
//   Q(theta) = -N/2 log s2 - 1/(2 s2) [y'y + Tr(U'U S) - 2 y'U g_hat]
//              - 1/2 log det K_beta - 1/2 Tr[K_beta^{-1} S],   S = P + g_hat g_hat'
// coordinate block by block (M-step). Q separates into a part in (x, s2)
// and a part in beta; within the first part the x-maximizer does not depend
// on s2, so x, then s2 at the new x, then beta is an exact joint maximizer.
//
// Sign convention: build_quadratic returns the positive definite A with
// Q_x(x) = -1/2 x'A x + b'x, so the update is x = A^{-1} b.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bsi/errors.hpp"
#include "bsi/kernel.hpp"
#include "bsi/linalg.hpp"
#include "bsi/posterior.hpp"

namespace bsi {

inline constexpr double kSigma2Floor = 1e-12;

struct EMSettings {
    double conv_tol = 1e-3;
    int max_iters = 300;
    int beta_grid_size = 100;
    Index n = 50;
    int restarts = 4;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(conv_tol > 0.0)) throw DomainError("EMSettings: conv_tol must be positive");
        if (max_iters < 1) throw DomainError("EMSettings: max_iters must be >= 1");
        if (beta_grid_size < 2) throw DomainError("EMSettings: beta_grid_size must be >= 2");
        if (restarts < 1) throw DomainError("EMSettings: restarts must be >= 1");
        if (n < 1) throw DimensionError("EMSettings: n must be >= 1");
    }
};

struct EMTrace {
    std::vector<HyperVector> thetas;  // thetas[0] is the starting point
    std::vector<double> log_marginals;
    bool converged = false;
    int iterations = 0;
};

struct EMResult {
    HyperVector theta;
    PosteriorSummary post;
    EMTrace trace;
    int restart = 0;

    [[nodiscard]] double log_marginal() const { return trace.log_marginals.back(); }
};

struct QuadraticForm {
    Matrix A;  // p x p, SPD
    Vector b;  // p
};

inline PosteriorSummary e_step(const Vector& y, const Matrix& H, const HyperVector& theta,
                               Index n) {
    theta.validate();
    if (H.cols() != theta.x.size() || H.rows() != y.size()) {
        throw DimensionError("e_step: H must be N x p with p = dim(x)");
    }
    return posterior(y, H * theta.x, n, theta.sigma2, theta.beta);
}

/// N x N matrix M with u'M u = Tr[T_n(u)' T_n(u) S] for every u of length N:
/// M(a, b) = sum_t S(t - a, t - b) over valid indices. Never forms R or S (x) I_N.
inline Matrix toeplitz_gram_middle(const Matrix& S, Index N) {
    const Index n = S.rows();
    Matrix M = Matrix::Zero(N, N);
    for (Index a = 0; a < N; ++a) {
        for (Index i = 0; i < n && a + i < N; ++i) {
            const Index t = a + i;
            const Index jmax = std::min(n - 1, t);
            for (Index j = 0; j <= jmax; ++j) M(a, t - j) += S(i, j);
        }
    }
    return M;
}

inline QuadraticForm build_quadratic(const PosteriorSummary& post, const Matrix& H,
                                     const Vector& y, Index n) {
    const Index N = y.size();
    if (H.rows() != N) throw DimensionError("build_quadratic: H must have N rows");
    if (post.mean_g.size() != n || post.covariance_P.rows() != n ||
        post.covariance_P.cols() != n) {
        throw DimensionError("build_quadratic: posterior has wrong size");
    }
    if (n > N) throw DimensionError("build_quadratic: n exceeds N");
    const Matrix S = post.covariance_P + post.mean_g * post.mean_g.transpose();
    const Matrix M = toeplitz_gram_middle(S, N);

    // T_N(g_hat)' y evaluated directly: entry a = sum_k g_hat[k] y[a + k].
    Vector tg(N);
    for (Index a = 0; a < N; ++a) {
        const Index len = std::min(n, N - a);
        tg(a) = post.mean_g.head(len).dot(y.segment(a, len));
    }

    QuadraticForm q;
    q.A = H.transpose() * M * H;
    q.A = 0.5 * (q.A + q.A.transpose());
    q.b = H.transpose() * tg;
    return q;
}

inline Vector update_x(const Matrix& A, const Vector& b) {
    if (A.rows() != b.size()) throw DimensionError("update_x: A and b sizes differ");
    try {
        return spd_solve(A, b);
    } catch (const FactorizationError& e) {
        throw ConditioningError(
            std::string("update_x: quadratic form in x is degenerate; the input basis or "
                        "posterior second moment is singular: ") +
            e.what());
    }
}

/// s2 = (||y - U g_hat||^2 + Tr[U P U']) / N with U = T_n(u_new), floored.
inline double update_sigma2(const Vector& y, const Vector& u_new, const PosteriorSummary& post,
                            Index n) {
    if (u_new.size() != y.size()) throw DimensionError("update_sigma2: u and y lengths differ");
    const Matrix U = toeplitz_lift(u_new, n);
    const double resid = (y - U * post.mean_g).squaredNorm();
    const double tr = (U * post.covariance_P).cwiseProduct(U).sum();
    const double s2 = (resid + tr) / static_cast<double>(y.size());
    return std::max(s2, kSigma2Floor);
}

/// log det K_beta + Tr[K_beta^{-1} S]; +inf where the kernel is numerically singular.
inline double beta_objective(double beta, const Matrix& S) {
    try {
        const double v = kernel_logdet_invtrace(beta, S).sum();
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const ConditioningError&) {
        return std::numeric_limits<double>::infinity();
    }
}

namespace detail {

template <typename F>
double golden_section_min(F&& f, double lo, double hi, double tol = 1e-10, int max_iter = 200) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - invphi * (hi - lo);
    double d = lo + invphi * (hi - lo);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < max_iter && (hi - lo) > tol; ++it) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - invphi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + invphi * (hi - lo);
            fd = f(d);
        }
    }
    return fc < fd ? c : d;
}

}  // namespace detail

/// Grid argmin of beta_objective on [1e-4, 1 - 1e-4], refined by golden section
/// over the two cells around the best grid point. Two-point grids are not refined.
inline double update_beta(const PosteriorSummary& post, int grid_size) {
    if (grid_size < 2) throw DomainError("update_beta: grid_size must be >= 2");
    const Matrix S = post.covariance_P + post.mean_g * post.mean_g.transpose();
    const auto f = [&S](double b) { return beta_objective(b, S); };

    const double step = (kBetaMax - kBetaMin) / static_cast<double>(grid_size - 1);
    int best = -1;
    double best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_size; ++i) {
        const double v = f(kBetaMin + step * i);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    if (best < 0) {
        throw ConditioningError("update_beta: kernel objective is non-finite at every grid point");
    }
    double beta = kBetaMin + step * best;
    if (grid_size >= 3) {
        const double lo = kBetaMin + step * std::max(best - 1, 0);
        const double hi = kBetaMin + step * std::min(best + 1, grid_size - 1);
        const double refined = detail::golden_section_min(f, lo, hi);
        if (f(refined) < best_val) beta = refined;
    }
    return beta;
}

/// Expected complete log-likelihood Q(theta | theta_k) given the E-step at theta_k.
inline double q_function(const HyperVector& theta, const PosteriorSummary& post_k,
                         const Vector& y, const Matrix& H, Index n) {
    theta.validate();
    const Index N = y.size();
    const Matrix U = toeplitz_lift(H * theta.x, n);
    const Matrix S = post_k.covariance_P + post_k.mean_g * post_k.mean_g.transpose();
    const double trUUS = ((U.transpose() * U) * S).trace();
    const double yUg = y.dot(U * post_k.mean_g);
    const auto kk = kernel_logdet_invtrace(theta.beta, S);
    return -0.5 * static_cast<double>(N) * std::log(theta.sigma2) -
           (y.squaredNorm() + trUUS - 2.0 * yUg) / (2.0 * theta.sigma2) - 0.5 * kk.logdet -
           0.5 * kk.invtrace;
}

namespace detail {

inline double sample_variance(const Vector& v) {
    const double mean = v.mean();
    return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

// Core loop. With freeze_x the input coordinates stay at theta0.x and only
// sigma2 and beta are estimated.
inline EMResult em_iterate(const Vector& y, const Matrix& H, const HyperVector& theta0,
                           const EMSettings& settings, bool freeze_x) {
    const Index n = settings.n;
    EMResult r;
    HyperVector theta = theta0;
    PosteriorSummary post = e_step(y, H, theta, n);
    r.trace.thetas.push_back(theta);
    r.trace.log_marginals.push_back(
        log_marginal_likelihood(y, H * theta.x, n, theta.sigma2, theta.beta));

    for (int k = 0; k < settings.max_iters; ++k) {
        HyperVector next;
        if (freeze_x) {
            next.x = theta.x;
        } else {
            const QuadraticForm q = build_quadratic(post, H, y, n);
            next.x = update_x(q.A, q.b);
        }
        const Vector u_new = H * next.x;
        next.sigma2 = update_sigma2(y, u_new, post, n);
        next.beta = update_beta(post, settings.beta_grid_size);
        // Keep the previous beta if the grid search did not improve on it.
        const Matrix S = post.covariance_P + post.mean_g * post.mean_g.transpose();
        if (beta_objective(next.beta, S) > beta_objective(theta.beta, S)) next.beta = theta.beta;

        if (!next.x.allFinite() || !std::isfinite(next.sigma2)) {
            throw EstimationError("EM iterate became non-finite at iteration " +
                                  std::to_string(k + 1));
        }
        PosteriorSummary post_next = e_step(y, H, next, n);
        const double lml = log_marginal_likelihood(y, u_new, n, next.sigma2, next.beta);
        const double step = (next.stacked() - theta.stacked()).norm();

        r.trace.thetas.push_back(next);
        r.trace.log_marginals.push_back(lml);
        r.trace.iterations = k + 1;
        theta = std::move(next);
        post = std::move(post_next);
        if (step < settings.conv_tol) {
            r.trace.converged = true;
            break;
        }
    }
    r.theta = std::move(theta);
    r.post = std::move(post);
    return r;
}

inline void check_em_inputs(const Vector& y, const Matrix& H, const EMSettings& settings) {
    settings.validate();
    if (H.rows() != y.size()) throw DimensionError("run_em: H must have N = len(y) rows");
    if (settings.n > y.size()) throw DimensionError("run_em: need N >= n");
    if (H.cols() > H.rows() || column_rank(H, 1e-10) < H.cols() || H.cwiseAbs().maxCoeff() == 0.0) {
        throw InputError("run_em: input basis H is not full column rank");
    }
}

}  // namespace detail

/// Random starting point for restart `restart`: x ~ N(0, 1) * ||y|| / sqrt(N),
/// beta ~ U(0.5, 0.95), sigma2 = var(y) / 10.
inline HyperVector initial_theta(const Vector& y, Index p, std::uint64_t seed, int restart) {
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(restart));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.5, 0.95);
    HyperVector t;
    const double scale = y.norm() / std::sqrt(static_cast<double>(y.size()));
    t.x.resize(p);
    for (Index i = 0; i < p; ++i) t.x(i) = normal(rng) * scale;
    t.beta = unif(rng);
    t.sigma2 = std::max(detail::sample_variance(y) / 10.0, kSigma2Floor);
    return t;
}

/// Single EM run from an explicit starting point.
inline EMResult run_em_from(const Vector& y, const Matrix& H, const HyperVector& theta0,
                            const EMSettings& settings) {
    detail::check_em_inputs(y, H, settings);
    return detail::em_iterate(y, H, theta0, settings, false);
}

/// Multi-start EM; returns the restart with the highest final log marginal likelihood
/// (ties go to the lower restart index).
inline EMResult run_em(const Vector& y, const Matrix& H, const EMSettings& settings) {
    detail::check_em_inputs(y, H, settings);
    EMResult best;
    bool have_best = false;
    std::string failures;
    for (int r = 0; r < settings.restarts; ++r) {
        try {
            EMResult res = detail::em_iterate(y, H, initial_theta(y, H.cols(), settings.seed, r),
                                              settings, false);
            res.restart = r;
            if (!std::isfinite(res.log_marginal())) {
                throw EstimationError("non-finite log marginal likelihood");
            }
            if (!have_best || res.log_marginal() > best.log_marginal()) {
                best = std::move(res);
                have_best = true;
            }
        } catch (const Error& e) {
            failures += "\n  restart " + std::to_string(r) + ": " + e.what();
        }
    }
    if (!have_best) throw EstimationError("run_em: every restart failed:" + failures);
    return best;
}

/// EM with the input known up to its scale. With estimate_scale the single
/// coordinate x (so that lambda = x^2 scales the kernel) is estimated along with
/// (sigma2, beta); otherwise it stays at 1. Every restart starts from x = 1.
inline EMResult run_em_known_input(const Vector& y, const Vector& u, const EMSettings& settings,
                                   bool estimate_scale = true) {
    settings.validate();
    if (u.size() != y.size()) throw DimensionError("run_em_known_input: u and y lengths differ");
    if (settings.n > y.size()) throw DimensionError("run_em_known_input: need N >= n");
    const Matrix H = u;
    EMResult best;
    bool have_best = false;
    std::string failures;
    for (int r = 0; r < settings.restarts; ++r) {
        try {
            HyperVector t0 = initial_theta(y, 1, settings.seed, r);
            t0.x = Vector::Ones(1);
            EMResult res = detail::em_iterate(y, H, t0, settings, !estimate_scale);
            res.restart = r;
            if (!have_best || res.log_marginal() > best.log_marginal()) {
                best = std::move(res);
                have_best = true;
            }
        } catch (const Error& e) {
            failures += "\n  restart " + std::to_string(r) + ": " + e.what();
        }
    }
    if (!have_best) throw EstimationError("run_em_known_input: every restart failed:" + failures);
    return best;
}

}  // namespace bsi
