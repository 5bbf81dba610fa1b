#pragma once

// Random stable systems and simulated input/output records.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "bsi/bases.hpp"
#include "bsi/errors.hpp"
#include "bsi/linalg.hpp"

namespace bsi {

struct RandomSystemSpec {
    int n_zeros = 20;
    int n_poles = 20;
    double zero_mag_max = 0.95;
    double pole_mag_max = 0.92;
    std::uint64_t seed = 0;
};

/// G(z) = z^{-1} num(z^{-1}) / den(z^{-1}); coefficients are in increasing powers of z^{-1}.
/// The implied one-sample delay gives g_0 = 0.
struct TransferFunction {
    std::vector<double> num{1.0};
    std::vector<double> den{1.0};
};

struct SimulatedInstance {
    Vector g_true;
    Vector u_true;
    Vector x_true;
    Vector y;
    Vector z;  // noiseless output T_n(u) g
    double sigma2_true = 0.0;
    InputBasis basis;
};

namespace detail {

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
    }
    return c;
}

// Monic-in-z^{-1} polynomial with `count` roots of modulus < mag_max, drawn as
// conjugate pairs with phase in (0, pi); an odd count adds one real root of random sign.
inline std::vector<double> random_real_polynomial(int count, double mag_max, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> mag(0.0, mag_max);
    std::uniform_real_distribution<double> phase(0.0, std::numbers::pi);
    std::vector<double> p{1.0};
    for (int k = 0; k + 1 < count; k += 2) {
        const double r = mag(rng);
        const double w = phase(rng);
        p = poly_mul(p, {1.0, -2.0 * r * std::cos(w), r * r});
    }
    if (count % 2 == 1) {
        const double r = mag(rng);
        const double sign = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? 1.0 : -1.0;
        p = poly_mul(p, {1.0, -sign * r});
    }
    return p;
}

}  // namespace detail

/// Roots in z of a polynomial given in increasing powers of z^{-1}.
inline std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& coeffs) {
    if (coeffs.empty() || coeffs.front() == 0.0) {
        throw DomainError("polynomial_roots: leading coefficient must be nonzero");
    }
    std::size_t m = coeffs.size() - 1;
    while (m > 0 && coeffs[m] == 0.0) --m;  // trailing zeros are roots at z = 0
    std::vector<std::complex<double>> roots(coeffs.size() - 1 - m, {0.0, 0.0});
    if (m == 0) return roots;
    Matrix C = Matrix::Zero(static_cast<Index>(m), static_cast<Index>(m));
    for (std::size_t k = 0; k < m; ++k) C(0, static_cast<Index>(k)) = -coeffs[k + 1] / coeffs[0];
    for (std::size_t k = 1; k < m; ++k) C(static_cast<Index>(k), static_cast<Index>(k - 1)) = 1.0;
    Eigen::EigenSolver<Matrix> es(C, false);
    for (Index k = 0; k < es.eigenvalues().size(); ++k) roots.push_back(es.eigenvalues()(k));
    return roots;
}

inline TransferFunction random_system(const RandomSystemSpec& spec) {
    if (spec.n_zeros < 0 || spec.n_poles < 0) throw DomainError("random_system: negative count");
    if (!(spec.zero_mag_max >= 0.0 && spec.zero_mag_max < 1.0) ||
        !(spec.pole_mag_max >= 0.0 && spec.pole_mag_max < 1.0)) {
        throw DomainError("random_system: root magnitudes must lie in [0, 1)");
    }
    std::mt19937_64 rng(spec.seed);
    TransferFunction tf;
    tf.num = detail::random_real_polynomial(spec.n_zeros, spec.zero_mag_max, rng);
    tf.den = detail::random_real_polynomial(spec.n_poles, spec.pole_mag_max, rng);
    return tf;
}

/// g_1..g_n by forward recursion of den * h = num driven by a unit impulse (g_t = h_{t-1}).
inline Vector impulse_response(const TransferFunction& tf, Index n) {
    if (n < 1) throw DimensionError("impulse_response: n must be positive");
    if (tf.den.empty() || tf.den.front() == 0.0) {
        throw DomainError("impulse_response: denominator leading coefficient must be nonzero");
    }
    for (const auto& r : polynomial_roots(tf.den)) {
        if (std::abs(r) >= 1.0) {
            throw DomainError("impulse_response: denominator has a root of modulus " +
                              std::to_string(std::abs(r)) + " (unstable)");
        }
    }
    const auto& a = tf.den;
    const auto& b = tf.num;
    Vector h(n);
    for (Index t = 0; t < n; ++t) {
        const auto ut = static_cast<std::size_t>(t);
        double acc = ut < b.size() ? b[ut] : 0.0;
        for (std::size_t k = 1; k < a.size() && k <= ut; ++k) acc -= a[k] * h(t - static_cast<Index>(k));
        h(t) = acc / a[0];
    }
    return h;
}

/// Rescales the numerator so that max_t |g_t| = 1 over the first n samples.
inline TransferFunction normalize_peak(TransferFunction tf, Index n) {
    const double peak = impulse_response(tf, n).cwiseAbs().maxCoeff();
    if (!(peak > 0.0)) throw DomainError("normalize_peak: impulse response is identically zero");
    for (double& c : tf.num) c /= peak;
    return tf;
}

/// p - 1 distinct interior instants drawn from 1..N-1, sorted, followed by N.
inline std::vector<Index> random_switch_instants(Index N, Index p, std::mt19937_64& rng) {
    if (p < 1 || p > N) throw InputError("random_switch_instants: need 1 <= p <= N");
    std::vector<Index> pool(static_cast<std::size_t>(N - 1));
    for (Index i = 0; i < N - 1; ++i) pool[static_cast<std::size_t>(i)] = i + 1;
    // Partial Fisher-Yates with an explicit draw so the sequence is library-independent.
    for (Index i = 0; i < p - 1; ++i) {
        std::uniform_int_distribution<Index> pick(i, N - 2);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<Index> inst(pool.begin(), pool.begin() + (p - 1));
    std::sort(inst.begin(), inst.end());
    inst.push_back(N);
    return inst;
}

/// y = T_n(H x) g + v with var(v) = var(z) / noise_ratio (mean-removed, divisor N).
inline SimulatedInstance simulate_instance(const TransferFunction& sys, const InputBasis& basis,
                                           const Vector& x_true, double noise_ratio, Index n,
                                           std::uint64_t seed) {
    if (!(noise_ratio > 0.0)) throw DomainError("simulate_instance: noise_ratio must be positive");
    SimulatedInstance inst;
    inst.basis = basis;
    inst.x_true = x_true;
    inst.g_true = impulse_response(sys, n);
    inst.u_true = basis.input(x_true);
    inst.z = toeplitz_lift(inst.u_true, n) * inst.g_true;
    const double mean = inst.z.mean();
    const double var = (inst.z.array() - mean).square().sum() / static_cast<double>(inst.z.size());
    if (!(var > 0.0)) {
        throw InputError("simulate_instance: noiseless output has zero variance; noise level undefined");
    }
    inst.sigma2_true = var / noise_ratio;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(inst.sigma2_true));
    inst.y = inst.z;
    for (Index t = 0; t < inst.y.size(); ++t) inst.y(t) += normal(rng);
    return inst;
}

}  // namespace bsi
