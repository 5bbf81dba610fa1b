#pragma once

// Known input subspaces u = H x.

#include <cmath>
#include <string>
#include <vector>

#include "bsi/errors.hpp"
#include "bsi/linalg.hpp"

namespace bsi {

enum class BasisKind { PiecewiseConstant, Sinusoid, Custom };

inline const char* to_string(BasisKind k) {
    switch (k) {
        case BasisKind::PiecewiseConstant: return "piecewise_constant";
        case BasisKind::Sinusoid: return "sinusoid";
        case BasisKind::Custom: return "custom";
    }
    return "unknown";
}

struct InputBasis {
    Matrix H;
    BasisKind kind = BasisKind::Custom;
    std::vector<Index> switch_instants;  // piecewise-constant only
    std::vector<double> frequencies;     // sinusoid only

    [[nodiscard]] Index samples() const { return H.rows(); }
    [[nodiscard]] Index dimension() const { return H.cols(); }
    [[nodiscard]] Vector input(const Vector& x) const {
        if (x.size() != H.cols()) throw DimensionError("InputBasis::input: x has wrong length");
        return H * x;
    }
};

inline constexpr double kRankTol = 1e-10;

namespace detail {

inline void require_full_column_rank(const Matrix& H, const char* where) {
    if (H.rows() < 1 || H.cols() < 1) {
        throw InputError(std::string(where) + ": basis must be non-empty");
    }
    if (H.cols() > H.rows()) {
        throw InputError(std::string(where) + ": basis has more columns than rows");
    }
    if (!H.allFinite()) throw InputError(std::string(where) + ": basis has non-finite entries");
    if (H.cwiseAbs().maxCoeff() == 0.0 || column_rank(H, kRankTol) < H.cols()) {
        throw InputError(std::string(where) + ": basis is not full column rank");
    }
}

}  // namespace detail

/// Block-diagonal all-ones blocks of heights T_1, T_2 - T_1, ..., T_p - T_{p-1}; T_p = N.
inline InputBasis piecewise_constant_basis(const std::vector<Index>& switch_instants) {
    if (switch_instants.empty()) {
        throw InputError("piecewise_constant_basis: need at least one switching instant");
    }
    Index prev = 0;
    for (const Index T : switch_instants) {
        if (T <= prev) {
            throw InputError("piecewise_constant_basis: switching instants must be strictly "
                             "increasing and start at >= 1");
        }
        prev = T;
    }
    const Index N = switch_instants.back();
    const Index p = static_cast<Index>(switch_instants.size());
    InputBasis b;
    b.kind = BasisKind::PiecewiseConstant;
    b.switch_instants = switch_instants;
    b.H = Matrix::Zero(N, p);
    Index start = 0;
    for (Index j = 0; j < p; ++j) {
        const Index stop = switch_instants[static_cast<std::size_t>(j)];
        b.H.col(j).segment(start, stop - start).setOnes();
        start = stop;
    }
    return b;
}

/// Checks T_p = N before building.
inline InputBasis piecewise_constant_basis(const std::vector<Index>& switch_instants, Index N) {
    if (switch_instants.empty() || switch_instants.back() != N) {
        throw InputError("piecewise_constant_basis: last switching instant must equal N=" +
                         std::to_string(N));
    }
    return piecewise_constant_basis(switch_instants);
}

/// H(t, j) = sin(t w_j) for t = 1..N, so u[t - 1] = sum_j sin(t w_j) x_j.
inline InputBasis sinusoid_basis(const std::vector<double>& frequencies, Index N) {
    const Index p = static_cast<Index>(frequencies.size());
    if (p < 1 || p > N) throw InputError("sinusoid_basis: need 1 <= p <= N");
    InputBasis b;
    b.kind = BasisKind::Sinusoid;
    b.frequencies = frequencies;
    b.H.resize(N, p);
    for (Index j = 0; j < p; ++j) {
        const double w = frequencies[static_cast<std::size_t>(j)];
        for (Index t = 1; t <= N; ++t) b.H(t - 1, j) = std::sin(static_cast<double>(t) * w);
    }
    // Entries are bounded by 1, so an absolute test catches sin(k pi) columns.
    for (Index j = 0; j < p; ++j) {
        const bool zero_col = b.H.col(j).cwiseAbs().maxCoeff() <= kRankTol;
        if (zero_col || column_rank(b.H.leftCols(j + 1), kRankTol) < j + 1) {
            throw InputError("sinusoid_basis: frequency " +
                             std::to_string(frequencies[static_cast<std::size_t>(j)]) +
                             " makes the basis rank deficient");
        }
    }
    return b;
}

inline InputBasis custom_basis(const Matrix& H) {
    detail::require_full_column_rank(H, "custom_basis");
    InputBasis b;
    b.kind = BasisKind::Custom;
    b.H = H;
    return b;
}

}  // namespace bsi
