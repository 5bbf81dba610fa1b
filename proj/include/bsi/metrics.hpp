#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bsi/errors.hpp"
#include "bsi/linalg.hpp"

namespace bsi {

struct FitScore {
    double value;
};

/// Output fit 1 - ||T(u_hat) g_hat - T(u) g|| / ||T(u) g - mean(T(u) g)||.
inline FitScore fit_score(const Vector& u_hat, const Vector& g_hat, const Vector& u_true,
                          const Vector& g_true, Index n) {
    if (u_hat.size() != u_true.size() || g_hat.size() != n || g_true.size() != n) {
        throw DimensionError("fit_score: inconsistent dimensions");
    }
    const Vector z = toeplitz_lift(u_true, n) * g_true;
    const Vector z_hat = toeplitz_lift(u_hat, n) * g_hat;
    const double denom = (z.array() - z.mean()).matrix().norm();
    if (!(denom > 0.0)) throw InputError("fit_score: true output is constant");
    return {1.0 - (z_hat - z).norm() / denom};
}

struct NormalizedPair {
    Vector g_norm;
    Vector u_norm;
    double alpha;  // g_norm = g / alpha, u_norm = alpha * u
};

/// Resolves the (alpha u, g / alpha) ambiguity: unit-norm g with a positive peak.
inline NormalizedPair normalize_pair(const Vector& u, const Vector& g) {
    const double nrm = g.norm();
    if (!(nrm > 0.0)) throw InputError("normalize_pair: g is zero");
    Index peak = 0;
    g.cwiseAbs().maxCoeff(&peak);
    const double alpha = g(peak) < 0.0 ? -nrm : nrm;
    return {g / alpha, alpha * u, alpha};
}

struct BoxSummary {
    std::size_t count = 0;
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
    double whisker_low = 0, whisker_high = 0;  // extreme points inside 1.5 IQR fences
    std::vector<double> outliers;
};

/// Quantile with midpoint interpolation on sorted data: position q (n - 1); a
/// fractional position averages its two neighbouring order statistics.
inline double quantile_midpoint(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    return lo == hi ? sorted[lo] : 0.5 * (sorted[lo] + sorted[hi]);
}

inline BoxSummary aggregate(std::vector<double> scores) {
    if (scores.empty()) throw InputError("aggregate: empty group");
    std::sort(scores.begin(), scores.end());
    BoxSummary s;
    s.count = scores.size();
    s.min = scores.front();
    s.max = scores.back();
    s.q1 = quantile_midpoint(scores, 0.25);
    s.median = quantile_midpoint(scores, 0.5);
    s.q3 = quantile_midpoint(scores, 0.75);
    const double iqr = s.q3 - s.q1;
    const double lo_fence = s.q1 - 1.5 * iqr;
    const double hi_fence = s.q3 + 1.5 * iqr;
    s.whisker_low = s.q1;
    s.whisker_high = s.q3;
    for (const double v : scores) {
        if (v < lo_fence || v > hi_fence) {
            s.outliers.push_back(v);
        } else {
            s.whisker_low = std::min(s.whisker_low, v);
            s.whisker_high = std::max(s.whisker_high, v);
        }
    }
    return s;
}

inline BoxSummary aggregate(const std::vector<FitScore>& scores) {
    std::vector<double> v;
    v.reserve(scores.size());
    for (const auto& s : scores) v.push_back(s.value);
    return aggregate(std::move(v));
}

}  // namespace bsi
