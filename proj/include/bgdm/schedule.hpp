#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bgdm/tensor.hpp"

namespace bgdm {

/// Discrete variance-preserving noise schedule. Immutable after construction;
/// safe for concurrent reads. Index t runs 0..T-1; alpha_bar at index -1 is
/// defined as 1 (clean image).
struct NoiseSchedule {
    std::size_t num_steps = 0;
    std::vector<double> beta;       // beta_t in (0,1)
    std::vector<double> alpha;      // 1 - beta_t
    std::vector<double> alpha_bar;  // prod_{i<=t} alpha_i, strictly decreasing
    std::vector<double> sigma;      // sqrt(1 - alpha_bar_t)

    double alpha_bar_at(long long t) const {
        if (t < 0) return 1.0;
        return alpha_bar[static_cast<std::size_t>(t)];
    }
    double sigma_at(long long t) const {
        if (t < 0) return 0.0;
        return sigma[static_cast<std::size_t>(t)];
    }
};

inline NoiseSchedule make_linear_schedule(std::size_t T, double beta_min, double beta_max) {
    if (T < 1) throw parameter_error("make_linear_schedule: T must be >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
        throw parameter_error("make_linear_schedule: require 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.num_steps = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double frac = (T == 1) ? 0.0 : static_cast<double>(i) / (T - 1);
        s.beta[i] = beta_min + frac * (beta_max - beta_min);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.sigma[i] = std::sqrt(1.0 - prod);
    }
    return s;
}

/// Evenly spaced, strictly decreasing timestep indices from T-1 down to 0.
/// num_eval == 1 yields just {T-1}.
inline std::vector<std::size_t> subsample_timesteps(const NoiseSchedule& schedule,
                                                    std::size_t num_eval) {
    const std::size_t T = schedule.num_steps;
    if (num_eval < 1 || num_eval > T)
        throw parameter_error("subsample_timesteps: require 1 <= num_eval <= T");
    std::vector<std::size_t> idx(num_eval);
    if (num_eval == 1) {
        idx[0] = T - 1;
        return idx;
    }
    for (std::size_t k = 0; k < num_eval; ++k) {
        const double pos =
            static_cast<double>(T - 1) * (1.0 - static_cast<double>(k) / (num_eval - 1));
        idx[k] = static_cast<std::size_t>(std::llround(pos));
    }
    idx.front() = T - 1;
    idx.back() = 0;
    for (std::size_t k = 1; k < num_eval; ++k)
        if (idx[k] >= idx[k - 1])
            throw parameter_error("subsample_timesteps: non-monotone index sequence");
    return idx;
}

/// x_t = sqrt(alpha_bar_t) x0 + sigma_t eps (reparametrized forward noising).
template <class T>
Tensor<T> diffuse_forward(const Tensor<T>& x0, std::size_t t, const NoiseSchedule& schedule,
                          const Tensor<T>& eps) {
    x0.require_same_shape(eps, "diffuse_forward");
    if (t >= schedule.num_steps) throw parameter_error("diffuse_forward: t out of range");
    const double a = std::sqrt(schedule.alpha_bar[t]);
    const double s = schedule.sigma[t];
    Tensor<T> out(x0.shape());
    for (std::size_t i = 0; i < x0.size(); ++i) out[i] = T(a) * x0[i] + T(s) * eps[i];
    return out;
}

}  // namespace bgdm
