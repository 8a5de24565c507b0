#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "bgdm/tensor.hpp"

namespace bgdm::oracle {

// Independent brute-force references for the closed-form claims. Dense only,
// capped at desk scale: these exist for correctness, not throughput.

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr std::size_t kMaxDenseEntries = 4096;

struct DenseProblem {
    Matrix A;        // m x n
    Vector y;        // m
    Vector x_bar;    // n
    double sigma_y = 0.0;
    Vector prior_mean;      // optional, n
    Matrix prior_cov;       // optional, n x n
    bool has_prior = false;

    void check_scale() const {
        if (static_cast<std::size_t>(A.rows()) > kMaxDenseEntries ||
            static_cast<std::size_t>(A.cols()) > kMaxDenseEntries)
            throw parameter_error("DenseProblem exceeds desk-scale cap");
    }
};

/// Spectral norm by power iteration; an estimate is enough for step bounds.
inline double spectral_norm(const Matrix& A, int iters = 100) {
    Vector v = Vector::Ones(A.cols());
    v.normalize();
    double s = 0.0;
    for (int i = 0; i < iters; ++i) {
        Vector w = A.transpose() * (A * v);
        s = std::sqrt(w.norm());
        if (w.norm() == 0.0) return 0.0;
        v = w / w.norm();
    }
    return s;
}

/// Gradient descent on 1/2 ||y - A x||^2 from x_bar; the limit is
/// A^dagger y + (I - A^dagger A) x_bar for 0 < alpha < 1/||A||^2.
/// The measurement residual is checked non-increasing along the way.
inline Vector gd_least_squares(const DenseProblem& p, double alpha, int iters) {
    p.check_scale();
    const double bound = 1.0 / (spectral_norm(p.A) * spectral_norm(p.A));
    if (!(alpha > 0.0) || alpha >= bound)
        throw parameter_error("gd_least_squares: alpha out of (0, 1/||A||^2)");
    Vector x = p.x_bar;
    double prev_residual = (p.y - p.A * x).norm();
    for (int i = 0; i < iters; ++i) {
        const Vector r = p.y - p.A * x;
        x += alpha * (p.A.transpose() * r);
        const double res = (p.y - p.A * x).norm();
        if (res > prev_residual * (1.0 + 1e-12) + 1e-12)
            throw numerical_degeneracy_error("gd_least_squares: residual increased");
        prev_residual = res;
    }
    return x;
}

/// SVD-based Moore-Penrose pseudo-inverse.
inline Matrix dense_pseudo_inverse(const Matrix& A) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff =
        1e-13 * std::max(A.rows(), A.cols()) * (sv.size() > 0 ? sv(0) : 0.0);
    Vector inv = sv;
    for (Eigen::Index i = 0; i < inv.size(); ++i)
        inv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Gaussian linear-model conditioning: Sigma = (S0^-1 + A^T A / s^2)^-1,
/// mu = Sigma (S0^-1 mu0 + A^T y / s^2).
inline std::pair<Vector, Matrix> exact_gaussian_posterior(const DenseProblem& p) {
    p.check_scale();
    if (!p.has_prior) throw parameter_error("exact_gaussian_posterior: prior required");
    if (!(p.sigma_y > 0.0))
        throw parameter_error("exact_gaussian_posterior: sigma_y must be > 0");
    Eigen::LDLT<Matrix> prior_ldlt(p.prior_cov);
    if (prior_ldlt.info() != Eigen::Success || !prior_ldlt.isPositive())
        throw parameter_error("exact_gaussian_posterior: singular prior covariance");
    const Matrix prior_prec = prior_ldlt.solve(Matrix::Identity(p.A.cols(), p.A.cols()));
    const double inv_var = 1.0 / (p.sigma_y * p.sigma_y);
    const Matrix post_prec = prior_prec + inv_var * p.A.transpose() * p.A;
    const Matrix post_cov = post_prec.ldlt().solve(Matrix::Identity(p.A.cols(), p.A.cols()));
    const Vector post_mean =
        post_cov * (prior_prec * p.prior_mean + inv_var * p.A.transpose() * p.y);
    return {post_mean, post_cov};
}

/// Central differences per coordinate of a scalar field over a tensor.
/// Complex tensors are differentiated per real coordinate and repacked.
template <class T>
Tensor<T> finite_diff_gradient(const std::function<double(const Tensor<T>&)>& f,
                               const Tensor<T>& x, double h) {
    if (!(h > 0.0)) throw parameter_error("finite_diff_gradient: h must be > 0");
    Tensor<T> grad(x.shape());
    Tensor<T> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if constexpr (is_complex_v<T>) {
            probe[i] = x[i] + cdouble(h, 0);
            const double fp_re = f(probe);
            probe[i] = x[i] - cdouble(h, 0);
            const double fm_re = f(probe);
            probe[i] = x[i] + cdouble(0, h);
            const double fp_im = f(probe);
            probe[i] = x[i] - cdouble(0, h);
            const double fm_im = f(probe);
            probe[i] = x[i];
            grad[i] = cdouble((fp_re - fm_re) / (2 * h), (fp_im - fm_im) / (2 * h));
        } else {
            probe[i] = x[i] + h;
            const double fp = f(probe);
            probe[i] = x[i] - h;
            const double fm = f(probe);
            probe[i] = x[i];
            grad[i] = (fp - fm) / (2 * h);
        }
    }
    return grad;
}

}  // namespace bgdm::oracle
