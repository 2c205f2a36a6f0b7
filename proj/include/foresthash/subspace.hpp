#pragma once

// Affine principal subspaces and reconstruction residuals.
//
// A group of samples is summarized by its mean and an orthonormal basis of
// the leading left singular vectors of the mean-centered data. A point's
// residual is the norm of what that affine subspace cannot reconstruct:
//
//     residual(x) = || (x - mean) - U U^T (x - mean) ||_2

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace foresthash {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
/// Samples as rows.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct AffineSubspace {
    Vector<Scalar> mean;
    Matrix<Scalar> basis;  // D x rank, orthonormal columns

    Eigen::Index dim() const { return mean.size(); }
    Eigen::Index rank() const { return basis.cols(); }

    friend bool operator==(const AffineSubspace& a, const AffineSubspace& b) {
        return a.mean.size() == b.mean.size() && a.basis.rows() == b.basis.rows() &&
               a.basis.cols() == b.basis.cols() && a.mean == b.mean && a.basis == b.basis;
    }
};

/// Squared residual of x against s, computed as ||d||^2 - ||U^T d||^2 with
/// d = x - mean and clamped at zero. scratch receives d.
template <typename Scalar, typename Derived>
Scalar squared_residual(const AffineSubspace<Scalar>& s, const Eigen::MatrixBase<Derived>& x,
                        Vector<Scalar>& scratch) {
    scratch.noalias() = x.transpose().template cast<Scalar>();
    scratch -= s.mean;
    Scalar r2 = scratch.squaredNorm();
    for (Eigen::Index j = 0; j < s.rank(); ++j) {
        const Scalar c = s.basis.col(j).dot(scratch);
        r2 -= c * c;
    }
    return std::max(r2, Scalar(0));
}

template <typename Scalar, typename Derived>
Scalar squared_residual(const AffineSubspace<Scalar>& s, const Eigen::MatrixBase<Derived>& x) {
    Vector<Scalar> scratch(s.dim());
    return squared_residual(s, x, scratch);
}

template <typename Scalar, typename Derived>
Scalar residual(const AffineSubspace<Scalar>& s, const Eigen::MatrixBase<Derived>& x) {
    return std::sqrt(squared_residual(s, x));
}

/// Comparison of two affine subspaces a and b at a point x, expressed through
/// projections of x onto the stacked directions [mean_a - mean_b, U_a, U_b]:
///
///     r_a(x)^2 - r_b(x)^2 = -2 z_0 + c - sum_j (z_a,j - U_a^T mean_a)_j^2
///                                      + sum_j (z_b,j - U_b^T mean_b)_j^2
///
/// with c = ||mean_a||^2 - ||mean_b||^2. The directions of many comparisons can
/// be stacked into one matrix and applied to a batch of points at once.
template <typename Scalar>
struct ResidualGapTerms {
    Vector<Scalar> offsets;  // U_a^T mean_a then U_b^T mean_b
    Scalar constant = 0;
    Eigen::Index rank_a = 0;
    bool identical = false;  // a == b: every point is an exact tie

    Eigen::Index width() const { return 1 + offsets.size(); }

    /// z holds width() projections of x, in direction order.
    Scalar evaluate(const Scalar* z) const {
        if (identical) return 0;
        Scalar qa = 0, qb = 0;
        for (Eigen::Index j = 0; j < offsets.size(); ++j) {
            const Scalar t = z[1 + j] - offsets(j);
            (j < rank_a ? qa : qb) += t * t;
        }
        return (constant - 2 * z[0]) + (qb - qa);
    }
};

template <typename Scalar>
struct ResidualGap {
    Matrix<Scalar> directions;  // D x width
    ResidualGapTerms<Scalar> terms;

    /// r_a(x)^2 - r_b(x)^2.
    template <typename Derived>
    Scalar operator()(const Eigen::MatrixBase<Derived>& x) const {
        const Vector<Scalar> z = directions.transpose() * x.transpose().template cast<Scalar>();
        return terms.evaluate(z.data());
    }
};

template <typename Scalar>
ResidualGap<Scalar> make_residual_gap(const AffineSubspace<Scalar>& a, const AffineSubspace<Scalar>& b) {
    ResidualGap<Scalar> g;
    g.directions.resize(a.dim(), 1 + a.rank() + b.rank());
    g.directions.col(0) = a.mean - b.mean;
    g.directions.middleCols(1, a.rank()) = a.basis;
    g.directions.rightCols(b.rank()) = b.basis;
    g.terms.offsets.resize(a.rank() + b.rank());
    g.terms.offsets.head(a.rank()).noalias() = a.basis.transpose() * a.mean;
    g.terms.offsets.tail(b.rank()).noalias() = b.basis.transpose() * b.mean;
    g.terms.constant = a.mean.squaredNorm() - b.mean.squaredNorm();
    g.terms.rank_a = a.rank();
    g.terms.identical = a == b;
    return g;
}

/// Fits mean and the top min(max_rank, n-1, D) principal directions of the
/// sample rows. Directions whose singular value is numerically zero (relative
/// to the largest) are dropped, so a rank-deficient group gets a smaller basis.
/// A single sample gets an empty basis.
template <typename Derived>
AffineSubspace<typename Derived::Scalar> fit_affine_subspace(const Eigen::MatrixBase<Derived>& samples,
                                                             Eigen::Index max_rank) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = samples.rows();
    const Eigen::Index dim = samples.cols();

    AffineSubspace<Scalar> s;
    s.mean = samples.colwise().mean().transpose();
    const Eigen::Index cap = std::min({max_rank, n - 1, dim});
    if (cap <= 0) {
        s.basis.resize(dim, 0);
        return s;
    }

    const Matrix<Scalar> centered = samples.rowwise() - s.mean.transpose();
    // Right singular vectors of the n x D centered sample matrix are the
    // principal directions in feature space.
    Eigen::BDCSVD<Matrix<Scalar>> svd(centered, Eigen::ComputeThinV);
    const Eigen::Index keep = std::min(cap, svd.rank());
    s.basis = svd.matrixV().leftCols(keep);
    return s;
}

}  // namespace foresthash
