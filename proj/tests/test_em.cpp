#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "bsi/bases.hpp"
#include "bsi/em.hpp"
#include "bsi/metrics.hpp"
#include "oracles.hpp"

using bsi::Index;
using bsi::Matrix;
using bsi::Vector;

namespace {

// Q restricted to (x, sigma2), written straight from the expected complete log-likelihood.
double q1_oracle(const Vector& x, double sigma2, const bsi::PosteriorSummary& post, const Vector& y,
                 const Matrix& H, Index n) {
    const Matrix U = oracle::lift(H * x, n);
    const Matrix S = post.covariance_P + post.mean_g * post.mean_g.transpose();
    const double N = static_cast<double>(y.size());
    return -0.5 * N * std::log(sigma2) -
           (y.squaredNorm() + (U.transpose() * U * S).trace() - 2.0 * y.dot(U * post.mean_g)) / (2.0 * sigma2);
}

double qbeta_oracle(double beta, const bsi::PosteriorSummary& post) {
    const Matrix K = oracle::tc_kernel(beta, post.mean_g.size());
    const Matrix S = post.covariance_P + post.mean_g * post.mean_g.transpose();
    return -0.5 * std::log(K.determinant()) - 0.5 * (K.inverse() * S).trace();
}

struct Tiny {
    Vector y;
    Matrix H;
    bsi::HyperVector theta;
    Index n;
};

Tiny tiny_instance(std::uint64_t seed, Index N = 10, Index n = 3, Index p = 2) {
    std::mt19937_64 rng(seed);
    Tiny t;
    t.n = n;
    t.H = oracle::random_vector(N * p, rng).reshaped(N, p);
    t.y = oracle::random_vector(N, rng);
    t.theta.x = oracle::random_vector(p, rng);
    t.theta.sigma2 = 0.3 + 0.1 * static_cast<double>(seed % 5);
    t.theta.beta = 0.4 + 0.05 * static_cast<double>(seed % 7);
    return t;
}

bsi::PosteriorSummary fixed_posterior(Index n, bool zero_mean) {
    bsi::PosteriorSummary post;
    post.covariance_P = Matrix::Identity(n, n);
    post.mean_g = zero_mean ? Vector(Vector::Zero(n)) : Vector(Vector::LinSpaced(n, 1.0, 0.2));
    return post;
}

}  // namespace

TEST(EStep, DelegatesToPosterior) {
    const Tiny t = tiny_instance(1);
    const auto a = bsi::e_step(t.y, t.H, t.theta, t.n);
    const auto b = bsi::posterior(t.y, t.H * t.theta.x, t.n, t.theta.sigma2, t.theta.beta);
    EXPECT_EQ(a.mean_g, b.mean_g);
    EXPECT_EQ(a.covariance_P, b.covariance_P);
    EXPECT_EQ(a.gain_C, b.gain_C);
}

TEST(EStep, IdentityBasisUsesXAsInput) {
    const Tiny t = tiny_instance(2);
    bsi::HyperVector th = t.theta;
    std::mt19937_64 rng(4);
    th.x = oracle::random_vector(10, rng);
    const auto a = bsi::e_step(t.y, Matrix::Identity(10, 10), th, t.n);
    const auto ref = oracle::condition(t.y, oracle::lift(th.x, t.n), oracle::tc_kernel(th.beta, t.n), th.sigma2);
    EXPECT_LE((a.mean_g - ref.mean).norm(), 1e-8 * (1 + ref.mean.norm()));
    EXPECT_LE((a.covariance_P - ref.cov).norm(), 1e-8 * (1 + ref.cov.norm()));
}

TEST(BuildQuadratic, ZeroMeanIdentityCovariance) {
    const Index N = 6, n = 2;
    const auto post = fixed_posterior(n, true);
    const Vector y = Vector::LinSpaced(N, 1.0, 2.0);
    const auto q = bsi::build_quadratic(post, Matrix::Identity(N, N), y, n);
    const auto [A_lit, b_lit] = oracle::literal_quadratic(post.covariance_P, post.mean_g, Matrix::Identity(N, N), y, n);
    EXPECT_LE((q.A - A_lit).cwiseAbs().maxCoeff(), 1e-12);
    // Diagonal counts the (t, i) pairs with t - i = a: 2 for a < 5, 1 for a = 5.
    const Vector counts = (Vector(6) << 2, 2, 2, 2, 2, 1).finished();
    EXPECT_EQ(q.A, Matrix(counts.asDiagonal()));
    EXPECT_EQ(q.b, Vector::Zero(N));
}

TEST(BuildQuadratic, IdentitySecondMomentGivesRtR) {
    const Index N = 5, n = 3;
    bsi::PosteriorSummary post;
    post.covariance_P = Matrix::Identity(n, n);
    post.mean_g = Vector::Zero(n);
    const auto q = bsi::build_quadratic(post, Matrix::Identity(N, N), Vector::Ones(N), n);
    const Matrix R = oracle::selection(N, n);
    EXPECT_EQ(q.A, R.transpose() * R);
    EXPECT_EQ(q.A, Matrix((Vector(5) << 3, 3, 3, 2, 1).finished().asDiagonal()));
}

TEST(BuildQuadratic, MatchesLiteralKroneckerFormula) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 60; ++trial) {
        const Index N = 2 + static_cast<Index>(rng() % 11);
        const Index n = 1 + static_cast<Index>(rng() % std::min<Index>(4, N));
        const Index p = 1 + static_cast<Index>(rng() % std::min<Index>(3, N));
        const Matrix H = oracle::random_vector(N * p, rng).reshaped(N, p);
        const Vector y = oracle::random_vector(N, rng);
        bsi::PosteriorSummary post;
        post.covariance_P = oracle::random_spd(n, rng, 0.1);
        post.mean_g = oracle::random_vector(n, rng);
        const auto q = bsi::build_quadratic(post, H, y, n);
        const Matrix S = post.covariance_P + post.mean_g * post.mean_g.transpose();
        const auto [A_lit, b_lit] = oracle::literal_quadratic(S, post.mean_g, H, y, n);
        EXPECT_LE((q.A - A_lit).cwiseAbs().maxCoeff(), 1e-10 * (1 + A_lit.cwiseAbs().maxCoeff()));
        EXPECT_LE((q.b - b_lit).cwiseAbs().maxCoeff(), 1e-10 * (1 + b_lit.cwiseAbs().maxCoeff()));
        EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(q.A).eigenvalues().minCoeff(), 0.0);
    }
}

TEST(UpdateX, Examples) {
    const Vector b = (Vector(3) << 1.5, -2, 0.25).finished();
    EXPECT_EQ(bsi::update_x(Matrix::Identity(3, 3), b), b);
    std::mt19937_64 rng(2);
    EXPECT_EQ(bsi::update_x(oracle::random_spd(3, rng), Vector::Zero(3)), Vector::Zero(3));
    EXPECT_THROW(bsi::update_x(Matrix::Zero(2, 2), Vector::Ones(2)), bsi::ConditioningError);
}

TEST(UpdateX, MaximizesQByDerivativeFreeSearch) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tiny t = tiny_instance(100 + seed);
        const auto post = bsi::e_step(t.y, t.H, t.theta, t.n);
        const auto q = bsi::build_quadratic(post, t.H, t.y, t.n);
        const Vector x = bsi::update_x(q.A, q.b);
        const Vector x_nm = oracle::nelder_mead_max(
            [&](const Vector& xx) { return q1_oracle(xx, t.theta.sigma2, post, t.y, t.H, t.n); }, t.theta.x, 1.0);
        EXPECT_LE((x - x_nm).norm(), 1e-6 * (1 + x.norm())) << seed;
    }
}

TEST(UpdateSigma2, PerfectFitHitsFloor) {
    const Index n = 3;
    const Vector u = (Vector(6) << 1, -1, 2, 0.5, 0, 1).finished();
    bsi::PosteriorSummary post;
    post.mean_g = (Vector(3) << 0.5, 0.25, 0.125).finished();
    post.covariance_P = Matrix::Zero(n, n);
    const Vector y = bsi::toeplitz_lift(u, n) * post.mean_g;
    EXPECT_EQ(bsi::update_sigma2(y, u, post, n), bsi::kSigma2Floor);
}

TEST(UpdateSigma2, ZeroInput) {
    const Vector y = (Vector(4) << 1, 2, -1, 3).finished();
    const auto post = fixed_posterior(2, false);
    EXPECT_DOUBLE_EQ(bsi::update_sigma2(y, Vector::Zero(4), post, 2), y.squaredNorm() / 4.0);
}

TEST(UpdateSigma2, MaximizesQOverSigma2) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tiny t = tiny_instance(200 + seed);
        const auto post = bsi::e_step(t.y, t.H, t.theta, t.n);
        const auto q = bsi::build_quadratic(post, t.H, t.y, t.n);
        const Vector x = bsi::update_x(q.A, q.b);
        const double s2 = bsi::update_sigma2(t.y, t.H * x, post, t.n);
        const double log_s2 = oracle::slope_root_max(
            [&](double ls) { return q1_oracle(x, std::exp(ls), post, t.y, t.H, t.n); }, -20.0, 10.0);
        EXPECT_NEAR(s2, std::exp(log_s2), 1e-8 * s2) << seed;
    }
}

TEST(UpdateBeta, RecoversKernelParameter) {
    for (double beta_star : {0.6, 0.2}) {
        bsi::PosteriorSummary post;
        post.covariance_P = bsi::build_kernel(beta_star, 5);
        post.mean_g = Vector::Zero(5);
        const int grid = 100;
        EXPECT_NEAR(bsi::update_beta(post, grid), beta_star, 1.0 / grid + 1e-3);
    }
}

TEST(UpdateBeta, TwoPointGridPicksBetterEndpoint) {
    for (double beta_star : {0.1, 0.9}) {
        bsi::PosteriorSummary post;
        post.covariance_P = bsi::build_kernel(beta_star, 4);
        post.mean_g = Vector::Zero(4);
        const Matrix S = post.covariance_P;
        const double f_lo = bsi::kernel_logdet_invtrace(bsi::kBetaMin, S).sum();
        const double f_hi = bsi::kernel_logdet_invtrace(bsi::kBetaMax, S).sum();
        EXPECT_EQ(bsi::update_beta(post, 2), f_lo <= f_hi ? bsi::kBetaMin : bsi::kBetaMax);
    }
    EXPECT_THROW(bsi::update_beta(fixed_posterior(3, true), 1), bsi::DomainError);
}

TEST(UpdateBeta, NoGridPointBeatsResult) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tiny t = tiny_instance(300 + seed);
        const auto post = bsi::e_step(t.y, t.H, t.theta, t.n);
        const double b = bsi::update_beta(post, 100);
        const double qb = qbeta_oracle(b, post);
        for (int i = 1; i < 2000; ++i) {
            EXPECT_GE(qb, qbeta_oracle(i / 2000.0, post) - 1e-9 * (1 + std::abs(qb)));
        }
    }
}

TEST(QFunction, MatchesOracleAndSplits) {
    const Tiny t = tiny_instance(400);
    const auto post = bsi::e_step(t.y, t.H, t.theta, t.n);
    bsi::HyperVector a = t.theta;
    const double q = bsi::q_function(a, post, t.y, t.H, t.n);
    EXPECT_NEAR(q, q1_oracle(a.x, a.sigma2, post, t.y, t.H, t.n) + qbeta_oracle(a.beta, post), 1e-9 * (1 + std::abs(q)));
    // Changing beta moves Q by an amount independent of (x, sigma2).
    std::mt19937_64 rng(1);
    bsi::HyperVector c = a;
    c.beta = 0.8;
    const double delta = bsi::q_function(a, post, t.y, t.H, t.n) - bsi::q_function(c, post, t.y, t.H, t.n);
    for (int k = 0; k < 5; ++k) {
        bsi::HyperVector a2 = a, c2 = c;
        a2.x = c2.x = oracle::random_vector(a.x.size(), rng);
        a2.sigma2 = c2.sigma2 = 0.1 + k;
        EXPECT_NEAR(bsi::q_function(a2, post, t.y, t.H, t.n) - bsi::q_function(c2, post, t.y, t.H, t.n), delta, 1e-9);
    }
}

TEST(QFunction, ArgmaxMatchesUpdates) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const Tiny t = tiny_instance(500 + seed);
        const auto post = bsi::e_step(t.y, t.H, t.theta, t.n);
        const auto q = bsi::build_quadratic(post, t.H, t.y, t.n);
        const Vector x = bsi::update_x(q.A, q.b);
        bsi::HyperVector th = t.theta;
        const Vector x_nm = oracle::nelder_mead_max(
            [&](const Vector& xx) {
                bsi::HyperVector h = th;
                h.x = xx;
                return bsi::q_function(h, post, t.y, t.H, t.n);
            },
            th.x, 1.0);
        EXPECT_LE((x - x_nm).norm(), 1e-6 * (1 + x.norm()));
        th.x = x;
        const double s2 = bsi::update_sigma2(t.y, t.H * x, post, t.n);
        const double ls = oracle::slope_root_max(
            [&](double l) {
                bsi::HyperVector h = th;
                h.sigma2 = std::exp(l);
                return bsi::q_function(h, post, t.y, t.H, t.n);
            },
            -20.0, 10.0);
        EXPECT_NEAR(s2, std::exp(ls), 1e-8 * s2);
    }
}

TEST(MStepProperties, EachUpdateBeatsRandomPerturbations) {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> nd;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tiny t = tiny_instance(600 + seed, 14, 4, 3);
        bsi::HyperVector th = t.theta;
        for (int iter = 0; iter < 5; ++iter) {
            const auto post = bsi::e_step(t.y, t.H, th, t.n);
            const auto q = bsi::build_quadratic(post, t.H, t.y, t.n);
            bsi::HyperVector next;
            next.x = bsi::update_x(q.A, q.b);
            next.sigma2 = bsi::update_sigma2(t.y, t.H * next.x, post, t.n);
            next.beta = bsi::update_beta(post, 100);
            const double q_next = bsi::q_function(next, post, t.y, t.H, t.n);
            const double tol = 1e-9 * (1 + std::abs(q_next));
            for (int k = 0; k < 100; ++k) {
                bsi::HyperVector px = next, ps = next, pb = next;
                for (Index i = 0; i < px.x.size(); ++i) px.x(i) += 0.3 * nd(rng);
                ps.sigma2 = next.sigma2 * std::exp(0.5 * nd(rng));
                pb.beta = std::clamp(next.beta + 0.1 * nd(rng), 1e-3, 1 - 1e-3);
                EXPECT_GE(q_next, bsi::q_function(px, post, t.y, t.H, t.n) - tol);
                EXPECT_GE(q_next, bsi::q_function(ps, post, t.y, t.H, t.n) - tol);
                EXPECT_GE(q_next, bsi::q_function(pb, post, t.y, t.H, t.n) - tol);
            }
            th = next;
        }
    }
}

namespace {

struct Simulated {
    Vector y, u, g;
    bsi::InputBasis basis;
};

Simulated simulated(std::uint64_t seed, Index N, Index n, Index p, double noise_sd) {
    std::mt19937_64 rng(seed);
    Simulated s;
    std::vector<Index> inst;
    for (Index j = 1; j <= p; ++j) inst.push_back(j * N / p);
    s.basis = bsi::piecewise_constant_basis(inst);
    const Vector x = oracle::random_vector(p, rng);
    s.u = s.basis.H * x;
    s.g.resize(n);
    for (Index t = 0; t < n; ++t) s.g(t) = std::pow(0.75, static_cast<double>(t)) * std::cos(0.4 * static_cast<double>(t));
    s.y = oracle::lift(s.u, n) * s.g + oracle::random_vector(N, rng, noise_sd);
    return s;
}

}  // namespace

TEST(RunEm, NoiselessWellConditionedInstance) {
    const Simulated s = simulated(8, 60, 10, 3, 1e-5);
    bsi::EMSettings cfg;
    cfg.n = 10;
    cfg.max_iters = 2000;
    cfg.seed = 3;
    const auto r = bsi::run_em(s.y, s.basis.H, cfg);
    const double fit = bsi::fit_score(s.basis.H * r.theta.x, r.post.mean_g, s.u, s.g, 10).value;
    EXPECT_GE(fit, 0.99);
}

TEST(RunEm, AscentOnSeededInstances) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Simulated s = simulated(1000 + seed, 40, 8, 3, 0.1);
        bsi::EMSettings cfg;
        cfg.n = 8;
        cfg.max_iters = 60;
        cfg.restarts = 1;
        cfg.seed = seed;
        const auto r = bsi::run_em(s.y, s.basis.H, cfg);
        const auto& L = r.trace.log_marginals;
        ASSERT_EQ(L.size(), r.trace.thetas.size());
        ASSERT_EQ(static_cast<int>(L.size()), r.trace.iterations + 1);
        for (std::size_t k = 1; k < L.size(); ++k) {
            EXPECT_GE(L[k], L[k - 1] - 1e-8 * (1 + std::abs(L[k - 1]))) << "seed " << seed << " iter " << k;
        }
        // The recorded values are the marginal likelihood at the recorded thetas.
        const auto& th = r.trace.thetas.back();
        EXPECT_NEAR(L.back(), bsi::log_marginal_likelihood(s.y, s.basis.H * th.x, 8, th.sigma2, th.beta), 1e-9);
    }
}

TEST(RunEm, ScaleAmbiguityLeavesOutputUnchanged) {
    const Simulated s = simulated(5, 40, 8, 4, 0.05);
    bsi::EMSettings cfg;
    cfg.n = 8;
    cfg.max_iters = 50;
    const auto r = bsi::run_em(s.y, s.basis.H, cfg);
    const Vector u = s.basis.H * r.theta.x;
    const Vector a = bsi::toeplitz_lift(u, 8) * r.post.mean_g;
    const Vector b = bsi::toeplitz_lift(2.0 * u, 8) * (r.post.mean_g / 2.0);
    EXPECT_LE((a - b).norm(), 1e-10 * (1 + a.norm()));
}

TEST(RunEm, DeterministicTraces) {
    const Simulated s = simulated(6, 40, 8, 3, 0.05);
    bsi::EMSettings cfg;
    cfg.n = 8;
    cfg.max_iters = 40;
    cfg.seed = 99;
    const auto a = bsi::run_em(s.y, s.basis.H, cfg);
    const auto b = bsi::run_em(s.y, s.basis.H, cfg);
    ASSERT_EQ(a.trace.thetas.size(), b.trace.thetas.size());
    EXPECT_EQ(a.restart, b.restart);
    for (std::size_t k = 0; k < a.trace.thetas.size(); ++k) {
        EXPECT_EQ(a.trace.thetas[k].stacked(), b.trace.thetas[k].stacked());
        EXPECT_EQ(a.trace.log_marginals[k], b.trace.log_marginals[k]);
    }
}

TEST(RunEm, PicksBestRestart) {
    const Simulated s = simulated(7, 40, 8, 3, 0.1);
    bsi::EMSettings cfg;
    cfg.n = 8;
    cfg.max_iters = 30;
    cfg.restarts = 3;
    const auto best = bsi::run_em(s.y, s.basis.H, cfg);
    for (int r = 0; r < 3; ++r) {
        const auto single = bsi::run_em_from(s.y, s.basis.H, bsi::initial_theta(s.y, 3, cfg.seed, r), cfg);
        EXPECT_GE(best.log_marginal(), single.log_marginal());
    }
}

TEST(RunEm, ConvergenceFlagAndIterationCap) {
    const Simulated s = simulated(8, 40, 8, 3, 0.1);
    bsi::EMSettings cfg;
    cfg.n = 8;
    cfg.max_iters = 3;
    cfg.restarts = 1;
    const auto r = bsi::run_em(s.y, s.basis.H, cfg);
    EXPECT_FALSE(r.trace.converged);
    EXPECT_EQ(r.trace.iterations, 3);
    cfg.conv_tol = 1e6;
    const auto c = bsi::run_em(s.y, s.basis.H, cfg);
    EXPECT_TRUE(c.trace.converged);
    EXPECT_EQ(c.trace.iterations, 1);
}

TEST(RunEm, InputValidation) {
    const Simulated s = simulated(9, 20, 5, 2, 0.1);
    bsi::EMSettings cfg;
    cfg.n = 5;
    Matrix H(20, 2);
    H.col(0) = s.basis.H.col(0);
    H.col(1) = 2.0 * s.basis.H.col(0);
    EXPECT_THROW(bsi::run_em(s.y, H, cfg), bsi::InputError);
    cfg.n = 30;
    EXPECT_THROW(bsi::run_em(s.y, s.basis.H, cfg), bsi::DimensionError);
    cfg.n = 5;
    cfg.restarts = 0;
    EXPECT_THROW(bsi::run_em(s.y, s.basis.H, cfg), bsi::DomainError);
}

TEST(RunEm, InitialThetaRespectsConstraints) {
    const Vector y = Vector::LinSpaced(30, -1.0, 2.0);
    for (int r = 0; r < 10; ++r) {
        const auto t = bsi::initial_theta(y, 4, 123, r);
        EXPECT_GE(t.beta, 0.5);
        EXPECT_LT(t.beta, 0.95);
        EXPECT_GT(t.sigma2, 0.0);
        EXPECT_EQ(t.x.size(), 4);
    }
}
