#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "bgdm/guidance.hpp"
#include "bgdm/linops.hpp"
#include "bgdm/prior.hpp"
#include "bgdm/rng.hpp"
#include "bgdm/schedule.hpp"

namespace bgdm {

struct TraceEntry {
    std::size_t step;       // 0-based position in the subsampled chain
    long long t;            // schedule index being left
    double residual_norm;   // ||y - A x0|t||
    double psnr_vs_reference;  // NaN when no reference supplied
};

using SamplerTrace = std::vector<TraceEntry>;

/// Alg.-literal DDIM coefficients: c1 = eta sqrt(1 - abar_prev),
/// c2 = sqrt(1 - abar_prev - c1^2). t_prev = -1 denotes the final step
/// (abar = 1, both coefficients vanish).
inline std::pair<double, double> ddim_coefficients(const NoiseSchedule& schedule,
                                                   long long t, long long t_prev,
                                                   double eta) {
    if (t_prev >= t) throw parameter_error("ddim_coefficients: require t_prev < t");
    if (eta < 0.0 || eta > 1.0)
        throw parameter_error("ddim_coefficients: eta must be in [0,1]");
    const double abar_prev = schedule.alpha_bar_at(t_prev);
    const double c1 = eta * std::sqrt(1.0 - abar_prev);
    const double c2 = std::sqrt(std::max(0.0, 1.0 - abar_prev - c1 * c1));
    return {c1, c2};
}

/// x_{t_prev} = sqrt(abar_prev) x_hat0 + c1 eps_noise + c2 eps_hat.
/// At the final step (t_prev = -1) the noise term is forced to zero.
inline CTensor ddim_update(const CTensor& x_hat0, const CTensor& eps_hat,
                           const CTensor& eps_noise, const NoiseSchedule& schedule,
                           long long t, long long t_prev, double eta) {
    x_hat0.require_same_shape(eps_hat, "ddim_update");
    x_hat0.require_same_shape(eps_noise, "ddim_update");
    const auto [c1, c2] = ddim_coefficients(schedule, t, t_prev, eta);
    const double sa = std::sqrt(schedule.alpha_bar_at(t_prev));
    const bool final_step = t_prev < 0;
    CTensor out(x_hat0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = sa * x_hat0[i] + c2 * eps_hat[i];
        if (!final_step) out[i] += c1 * eps_noise[i];
    }
    return out;
}

namespace detail {

inline void check_finite_state(const CTensor& x, int step) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double re = x[i].real(), im = x[i].imag();
        if (!std::isfinite(re) || !std::isfinite(im) || std::abs(re) > 1e6 ||
            std::abs(im) > 1e6)
            throw divergence_error("sampler state diverged", step);
    }
}

inline double trace_psnr(const CTensor& x, const CTensor& ref) {
    double mse = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = std::abs(x[i]) - std::abs(ref[i]);
        mse += d * d;
        peak = std::max(peak, std::abs(ref[i]));
    }
    mse /= static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    if (peak == 0.0) peak = 1.0;
    return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace detail

/// Reverse-process driver assembling the guidance schemes. One run is
/// strictly sequential and owns its RNG; independent runs (different seeds)
/// may execute in parallel.
inline std::pair<CTensor, SamplerTrace> run_sampler(
    const ScoreModel& model, const LinearOperatorSpec& op, const CTensor& y,
    const NoiseSchedule& schedule, const GuidanceConfig& cfg,
    std::size_t num_eval_steps, std::uint64_t seed, bool want_trace = false,
    const CTensor* reference = nullptr) {
    cfg.validate();
    const std::vector<std::size_t> timesteps = subsample_timesteps(schedule, num_eval_steps);
    Rng rng(seed);
    CTensor x = rng.standard_normal<cdouble>(op.image_shape);
    SamplerTrace trace;

    for (std::size_t i = 0; i < timesteps.size(); ++i) {
        const long long t = static_cast<long long>(timesteps[i]);
        const long long t_prev =
            (i + 1 < timesteps.size()) ? static_cast<long long>(timesteps[i + 1]) : -1;
        const std::size_t ts = static_cast<std::size_t>(t);

        const CTensor eps_hat = model.epsilon(x, ts);
        const CTensor x0t = tweedie_mean(model, x, ts, schedule);
        const CTensor noise = (t_prev >= 0) ? rng.standard_normal<cdouble>(x.shape())
                                            : CTensor(x.shape());

        if (want_trace) {
            CTensor residual = apply(op, x0t);
            residual -= y;
            trace.push_back({i, t, norm2(residual),
                             reference ? detail::trace_psnr(x0t, *reference)
                                       : std::numeric_limits<double>::quiet_NaN()});
        }

        switch (cfg.scheme) {
            case GuidanceScheme::none:
                x = ddim_update(x0t, eps_hat, noise, schedule, t, t_prev, cfg.eta);
                break;
            case GuidanceScheme::dps: {
                // standard DPS: gradient taken at x_t, applied after the
                // unconditional step
                CTensor g(x.shape());
                if (cfg.zeta != 0.0)
                    g = likelihood_gradient(model, op, y, x, ts, schedule, cfg);
                x = ddim_update(x0t, eps_hat, noise, schedule, t, t_prev, cfg.eta);
                if (cfg.zeta != 0.0)
                    for (std::size_t j = 0; j < x.size(); ++j) x[j] -= cfg.zeta * g[j];
                break;
            }
            case GuidanceScheme::ddnm: {
                const CTensor x_hat0 = range_null_combine(op, y, x0t);
                x = ddim_update(x_hat0, eps_hat, noise, schedule, t, t_prev, cfg.eta);
                break;
            }
            case GuidanceScheme::scoremed:
                x = scoremed_project(op, y, x0t, t_prev, schedule, noise);
                break;
            case GuidanceScheme::bgdm:
            case GuidanceScheme::r_bgdm: {
                const CTensor x0ty = acpm_step(model, op, y, x, ts, schedule, cfg);
                CTensor x_hat0 = proximal_solve(op, y, x0ty, cfg.lambda);
                if (cfg.scheme == GuidanceScheme::r_bgdm)
                    x_hat0 = refinement_step(x_hat0, x0t, cfg.gamma,
                                             cfg.refinement_variant);
                x = ddim_update(x_hat0, eps_hat, noise, schedule, t, t_prev, cfg.eta);
                break;
            }
        }
        detail::check_finite_state(x, static_cast<int>(i));
    }
    return {std::move(x), std::move(trace)};
}

}  // namespace bgdm
