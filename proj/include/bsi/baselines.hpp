#pragma once

// Known-input reference estimators: FIR least squares and the kernel-based
// estimator with the input fixed to its true value and the kernel scale,
// decay and noise variance estimated by marginal likelihood.

#include <optional>

#include "bsi/em.hpp"
#include "bsi/linalg.hpp"

namespace bsi {

enum class BaselineMethod { FirLeastSquares, KernelKnownInput };

inline const char* to_string(BaselineMethod m) {
    return m == BaselineMethod::FirLeastSquares ? "NB-LS" : "NB-KB";
}

struct BaselineHyper {
    double sigma2;
    double beta;
    double lambda;  // prior g ~ N(0, lambda K_beta)
};

struct BaselineResult {
    Vector g_hat;
    BaselineMethod method;
    std::optional<BaselineHyper> hyper;
    std::optional<EMTrace> trace;
};

/// Minimum-norm least squares argmin ||y - T_n(u) g||.
inline BaselineResult fir_least_squares(const Vector& y, const Vector& u_true, Index n) {
    if (y.size() != u_true.size()) throw DimensionError("fir_least_squares: length mismatch");
    const Matrix U = toeplitz_lift(u_true, n);
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(U);
    cod.setThreshold(1e-12);
    return {cod.solve(y), BaselineMethod::FirLeastSquares, std::nullopt, std::nullopt};
}

inline BaselineResult kernel_known_input(const Vector& y, const Vector& u_true, Index n,
                                         EMSettings settings) {
    settings.n = n;
    EMResult r = run_em_known_input(y, u_true, settings);
    const double x = r.theta.x(0);
    return {x * r.post.mean_g, BaselineMethod::KernelKnownInput,
            BaselineHyper{r.theta.sigma2, r.theta.beta, x * x}, std::move(r.trace)};
}

}  // namespace bsi
