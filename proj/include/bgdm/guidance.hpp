#pragma once

#include <cmath>
#include <string>

#include "bgdm/linops.hpp"
#include "bgdm/prior.hpp"
#include "bgdm/schedule.hpp"

namespace bgdm {

enum class GuidanceScheme { none, dps, ddnm, scoremed, bgdm, r_bgdm };
enum class JacobianMode { exact_gaussian, identity_approx, finite_diff_jvp };
enum class DpsTransport { adjoint, pseudo_inverse };
enum class RefinementVariant { toward_prior, literal_paper };

struct GuidanceConfig {
    GuidanceScheme scheme = GuidanceScheme::none;
    double zeta = 0.0;    // likelihood step size
    double lambda = 1.0;  // proximal regularization weight, > 0
    double gamma = 0.0;   // refinement gradient intensity
    double eta = 0.0;     // DDIM stochasticity, in [0, 1]
    JacobianMode jacobian_mode = JacobianMode::identity_approx;
    DpsTransport dps_transport = DpsTransport::adjoint;
    double sigma_y = 0.0;
    RefinementVariant refinement_variant = RefinementVariant::toward_prior;

    void validate() const {
        if (!(lambda > 0.0)) throw parameter_error("guidance: lambda must be > 0");
        if (zeta < 0.0) throw parameter_error("guidance: zeta must be >= 0");
        if (gamma < 0.0) throw parameter_error("guidance: gamma must be >= 0");
        if (eta < 0.0 || eta > 1.0) throw parameter_error("guidance: eta must be in [0,1]");
        if (sigma_y < 0.0) throw parameter_error("guidance: sigma_y must be >= 0");
    }
};

namespace detail {

inline CTensor transport_residual(const LinearOperatorSpec& op, const CTensor& residual,
                                  DpsTransport transport) {
    return transport == DpsTransport::adjoint ? adjoint(op, residual)
                                              : pseudo_inverse(op, residual);
}

}  // namespace detail

/// Gradient of 1/2 ||y - A x0|t(x_t)||^2 with respect to x_t, with the
/// Jacobian d(x0|t)/d(x_t) handled per cfg.jacobian_mode and the residual
/// transported by A^T or A^dagger per cfg.dps_transport.
inline CTensor likelihood_gradient(const ScoreModel& model, const LinearOperatorSpec& op,
                                   const CTensor& y, const CTensor& x_t, std::size_t t,
                                   const NoiseSchedule& schedule,
                                   const GuidanceConfig& cfg) {
    const CTensor x0t = tweedie_mean(model, x_t, t, schedule);
    CTensor residual = apply(op, x0t);
    residual -= y;
    const CTensor v = detail::transport_residual(op, residual, cfg.dps_transport);
    switch (cfg.jacobian_mode) {
        case JacobianMode::identity_approx:
            return v * cdouble(1.0 / std::sqrt(schedule.alpha_bar[t]), 0.0);
        case JacobianMode::exact_gaussian: {
            const auto* gmm = dynamic_cast<const GaussianMixturePrior*>(&model);
            if (!gmm || !gmm->exact_jacobian_available())
                throw capability_error(
                    "exact_gaussian jacobian mode requires a single-Gaussian prior");
            const RTensor diag = gmm->tweedie_jacobian_diag(t);
            CTensor out(v.shape());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = diag[i] * v[i];
            return out;
        }
        case JacobianMode::finite_diff_jvp: {
            // J is symmetric (scaled Hessian of log p_t plus identity), so
            // J^T v equals the directional derivative of x0|t along v.
            const double vnorm = norm2(v);
            if (vnorm == 0.0) return CTensor(v.shape());
            const double h = 1e-5 * (norm2(x_t) / vnorm + 1e-12) + 1e-9;
            CTensor xp = x_t, xm = x_t;
            for (std::size_t i = 0; i < x_t.size(); ++i) {
                xp[i] += h * v[i];
                xm[i] -= h * v[i];
            }
            CTensor fp = tweedie_mean(model, xp, t, schedule);
            const CTensor fm = tweedie_mean(model, xm, t, schedule);
            fp -= fm;
            return fp * cdouble(1.0 / (2.0 * h), 0.0);
        }
    }
    throw parameter_error("unknown jacobian mode");
}

/// A^dagger y + (I - A^dagger A) x_bar: range part fixes measurement
/// consistency, null part keeps the prior content of x_bar.
inline CTensor range_null_combine(const LinearOperatorSpec& op, const CTensor& y,
                                  const CTensor& x_bar) {
    CTensor out = pseudo_inverse(op, y);
    out += x_bar;
    out -= pseudo_inverse(op, apply(op, x_bar));
    return out;
}

/// Back-projection step: sqrt(abar_t) (A^dagger y + (I - A^dagger A) x0|t)
/// + sigma_t eps. With eps = 0 this is the DDNM form scaled into time t.
/// t may be -1 (clean image), in which case abar = 1 and sigma = 0.
inline CTensor scoremed_project(const LinearOperatorSpec& op, const CTensor& y,
                                const CTensor& x0t, long long t,
                                const NoiseSchedule& schedule, const CTensor& eps) {
    CTensor out = range_null_combine(op, y, x0t);
    const double sa = std::sqrt(schedule.alpha_bar_at(t));
    const double sig = schedule.sigma_at(t);
    out *= cdouble(sa, 0.0);
    x0t.require_same_shape(eps, "scoremed_project");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sig * eps[i];
    return out;
}

/// argmin_x 1/2 ||y - A x||^2 + lambda/2 ||x - x_ref||^2. Closed spectral
/// form for MRI; conjugate gradient on the normal equations otherwise
/// (residual tol 1e-10 relative, 500 iterations).
inline CTensor proximal_solve(const LinearOperatorSpec& op, const CTensor& y,
                              const CTensor& x_ref, double lambda) {
    if (!(lambda > 0.0)) throw parameter_error("proximal_solve: lambda must be > 0");
    if (x_ref.shape() != op.image_shape)
        throw shape_error("proximal_solve: x_ref shape mismatch");
    if (y.shape() != op.measurement_shape())
        throw shape_error("proximal_solve: y shape mismatch");

    if (op.kind == OperatorKind::mri_masked_fourier) {
        // per spectral pixel: w = (m y + lambda w_ref) / (m + lambda)
        const CTensor w_ref = fft2(x_ref);
        CTensor w(w_ref.shape());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double m = op.mask[i];
            w[i] = (m * y[i] + lambda * w_ref[i]) / (m + lambda);
        }
        return ifft2(w);
    }

    // CG on (A^H A + lambda I) x = A^H y + lambda x_ref
    CTensor rhs = adjoint(op, y);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += lambda * x_ref[i];
    const double rhs_norm = norm2(rhs);
    if (rhs_norm == 0.0) return CTensor(x_ref.shape());
    auto normal_op = [&](const CTensor& x) {
        CTensor out = adjoint(op, apply(op, x));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda * x[i];
        return out;
    };
    CTensor x = x_ref;  // warm start at the proximity center
    CTensor r = rhs;
    r -= normal_op(x);
    CTensor p = r;
    double rs = dot_real(r, r);
    const double tol = 1e-10 * rhs_norm;
    const int max_iter = 500;
    for (int it = 0; it < max_iter; ++it) {
        if (std::sqrt(rs) <= tol) return x;
        const CTensor ap = normal_op(p);
        const double alpha = rs / dot_real(p, ap);
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rs_new = dot_real(r, r);
        const double beta = rs_new / rs;
        rs = rs_new;
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    }
    if (std::sqrt(rs) <= tol) return x;
    throw solver_error("proximal_solve: CG did not converge", std::sqrt(rs));
}

/// Inner-level guidance: x0|t,y = tweedie_mean - zeta * likelihood_gradient.
inline CTensor acpm_step(const ScoreModel& model, const LinearOperatorSpec& op,
                         const CTensor& y, const CTensor& x_t, std::size_t t,
                         const NoiseSchedule& schedule, const GuidanceConfig& cfg) {
    CTensor out = tweedie_mean(model, x_t, t, schedule);
    if (cfg.zeta == 0.0) return out;
    const CTensor g = likelihood_gradient(model, op, y, x_t, t, schedule, cfg);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= cfg.zeta * g[i];
    return out;
}

/// Refinement gradient step. toward_prior (default) contracts x_hat toward
/// the unconditional prediction: x_hat - 2 gamma (x_hat - x0|t). The
/// literal_paper variant applies the written gradient w.r.t. x0|t with x_hat
/// fixed, which moves away: x_hat + 2 gamma (x_hat - x0|t).
inline CTensor refinement_step(const CTensor& x_hat, const CTensor& x0t, double gamma,
                               RefinementVariant variant = RefinementVariant::toward_prior) {
    if (gamma < 0.0) throw parameter_error("refinement_step: gamma must be >= 0");
    x_hat.require_same_shape(x0t, "refinement_step");
    const double sign = (variant == RefinementVariant::toward_prior) ? -1.0 : 1.0;
    CTensor out = x_hat;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += sign * 2.0 * gamma * (x_hat[i] - x0t[i]);
    return out;
}

}  // namespace bgdm
