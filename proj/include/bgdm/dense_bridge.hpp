#pragma once

#include <Eigen/Dense>

#include "bgdm/linops.hpp"
#include "bgdm/tensor.hpp"

namespace bgdm::oracle {

// Bridges between complex tensors and real-block dense linear algebra:
// a complex tensor of n pixels maps to a 2n real vector (re, im interleaved)
// and a complex-linear operator to its 2m x 2n real matrix. Used by the
// verification suites to compare operators against dense references.

inline Eigen::VectorXd to_real_vector(const CTensor& x) {
    Eigen::VectorXd v(2 * x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        v(2 * i) = x[i].real();
        v(2 * i + 1) = x[i].imag();
    }
    return v;
}

inline CTensor from_real_vector(const Eigen::VectorXd& v,
                                const std::vector<std::size_t>& shape) {
    CTensor x(shape);
    if (static_cast<std::size_t>(v.size()) != 2 * x.size())
        throw shape_error("from_real_vector: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = cdouble(v(2 * i), v(2 * i + 1));
    return x;
}

/// Dense real-block matrix of apply(op, .) built by probing basis vectors.
inline Eigen::MatrixXd operator_matrix(const LinearOperatorSpec& op) {
    const std::size_t n = Tensor<cdouble>::count(op.image_shape);
    const std::size_t m = Tensor<cdouble>::count(op.measurement_shape());
    Eigen::MatrixXd A(2 * m, 2 * n);
    CTensor probe(op.image_shape);
    for (std::size_t j = 0; j < 2 * n; ++j) {
        probe[j / 2] = (j % 2 == 0) ? cdouble(1, 0) : cdouble(0, 1);
        A.col(j) = to_real_vector(bgdm::apply(op, probe));
        probe[j / 2] = cdouble(0, 0);
    }
    return A;
}

/// Real-block row indices of an MRI operator's informative measurements:
/// the re/im components of masked k-space entries. Unmasked rows are zero
/// and carry no noise, so dense Gaussian conditioning must drop them.
inline std::vector<std::size_t> mri_informative_rows(const LinearOperatorSpec& op) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < op.mask.size(); ++i)
        if (op.mask[i] != 0.0) {
            rows.push_back(2 * i);
            rows.push_back(2 * i + 1);
        }
    return rows;
}

/// Exact Gaussian conditioning oracle in real-block coordinates.
/// Prior: x0 ~ N(mu, diag(v)). Observations: y = A x0 + n with independent
/// per-row noise variance noise_var (rows must be informative), and
/// optionally x_t = sqrt(abar) x0 + sqrt(1-abar) eps when xt is non-empty.
/// Returns E[x0 | observations] via the precision-form normal equations.
inline Eigen::VectorXd gaussian_conditional_mean(
    const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
    const Eigen::VectorXd& noise_var, const Eigen::VectorXd& mu,
    const Eigen::VectorXd& v, const Eigen::VectorXd& xt, double abar) {
    const Eigen::Index n = mu.size();
    if (v.size() != n) throw shape_error("gaussian_conditional_mean: v size");
    if (A.cols() != n || A.rows() != y.size() || noise_var.size() != y.size())
        throw shape_error("gaussian_conditional_mean: measurement sizes");
    Eigen::MatrixXd lambda = v.cwiseInverse().asDiagonal();
    Eigen::VectorXd rhs = mu.cwiseQuotient(v);
    lambda += A.transpose() * noise_var.cwiseInverse().asDiagonal() * A;
    rhs += A.transpose() * y.cwiseQuotient(noise_var);
    if (xt.size() > 0) {
        if (xt.size() != n) throw shape_error("gaussian_conditional_mean: xt size");
        lambda += (abar / (1.0 - abar)) * Eigen::MatrixXd::Identity(n, n);
        rhs += (std::sqrt(abar) / (1.0 - abar)) * xt;
    }
    return lambda.ldlt().solve(rhs);
}

}  // namespace bgdm::oracle
