#pragma once

#include <Eigen/Dense>

#include "fedmmd/common.hpp"

namespace fedmmd {

// All numeric state is double precision, row-major. Row-major keeps sample
// batches contiguous per row and matches the on-disk layouts in io.hpp.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline void require(bool cond, const char* msg) {
    if (!cond) throw ShapeError(msg);
}

inline void require_same_cols(const Matrix& x, const Matrix& y, const char* where) {
    if (x.cols() != y.cols()) {
        throw ShapeError(std::string(where) + ": column mismatch (" +
                         std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) + ")");
    }
}

inline void require_same_shape(const Matrix& x, const Matrix& y, const char* where) {
    if (x.rows() != y.rows() || x.cols() != y.cols()) {
        throw ShapeError(std::string(where) + ": shape mismatch");
    }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Squared Euclidean distances between the rows of X and the rows of Y,
// computed as |x|^2 + |y|^2 - 2<x,y> so the cross term is a single GEMM.
// Cancellation can produce tiny negatives; clamp at zero. When x and y are
// the same object the result is made exactly symmetric with a zero diagonal
// (GEMM block order would otherwise leave LSB asymmetry).
inline Matrix pairwise_sqdist(const Matrix& x, const Matrix& y) {
    require_same_cols(x, y, "pairwise_sqdist");
    Vector xn = x.rowwise().squaredNorm();
    Vector yn = y.rowwise().squaredNorm();
    Matrix d(x.rows(), y.rows());
    d.noalias() = -2.0 * (x * y.transpose());
    d.colwise() += xn;
    d.rowwise() += yn.transpose();
    d = d.cwiseMax(0.0);
    if (&x == &y) {
        for (Eigen::Index i = 0; i < d.rows(); ++i) {
            d(i, i) = 0.0;
            for (Eigen::Index j = 0; j < i; ++j) d(j, i) = d(i, j);
        }
    }
    return d;
}

}  // namespace fedmmd
