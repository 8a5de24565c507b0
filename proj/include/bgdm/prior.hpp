#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bgdm/schedule.hpp"
#include "bgdm/tensor.hpp"
#include "bgdm/tensor_io.hpp"

namespace bgdm {

/// Anything producing predicted noise eps_hat(x_t, t) of matching shape.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual CTensor epsilon(const CTensor& x_t, std::size_t t) const = 0;
    virtual bool exact_jacobian_available() const { return false; }
};

inline CTensor epsilon_from_score(const CTensor& score, std::size_t t,
                                  const NoiseSchedule& schedule) {
    return score * cdouble(-schedule.sigma[t], 0.0);
}

inline CTensor score_from_epsilon(const CTensor& eps, std::size_t t,
                                  const NoiseSchedule& schedule) {
    return eps * cdouble(-1.0 / schedule.sigma[t], 0.0);
}

/// Mixture of diagonal Gaussians with an exact diffused score: the marginal
/// at time t is sum_k w_k N(sqrt(abar_t) mu_k, abar_t Sigma_k + (1-abar_t) I).
/// Complex pixels are treated as two real coordinates sharing the per-pixel
/// variance. Immutable and shareable across threads.
class GaussianMixturePrior final : public ScoreModel {
public:
    GaussianMixturePrior(std::vector<double> weights, std::vector<CTensor> means,
                         std::vector<RTensor> variances, NoiseSchedule schedule)
        : weights_(std::move(weights)),
          means_(std::move(means)),
          variances_(std::move(variances)),
          schedule_(std::move(schedule)) {
        const std::size_t K = weights_.size();
        if (K == 0 || means_.size() != K || variances_.size() != K)
            throw parameter_error("GMM: weights/means/variances size mismatch");
        double total = 0.0;
        for (double w : weights_) {
            if (w <= 0.0) throw parameter_error("GMM: weights must be positive");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw parameter_error("GMM: weights must sum to 1");
        for (std::size_t k = 0; k < K; ++k) {
            if (!(means_[k].shape() == means_[0].shape() &&
                  variances_[k].shape() == means_[0].shape()))
                throw parameter_error("GMM: component shape mismatch");
            for (std::size_t i = 0; i < variances_[k].size(); ++i)
                if (variances_[k][i] <= 0.0)
                    throw parameter_error("GMM: variances must be positive");
        }
    }

    std::size_t num_components() const { return weights_.size(); }
    const std::vector<std::size_t>& shape() const { return means_[0].shape(); }
    const NoiseSchedule& schedule() const { return schedule_; }
    const CTensor& mean(std::size_t k) const { return means_[k]; }
    const RTensor& variance(std::size_t k) const { return variances_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }

    bool exact_jacobian_available() const override { return weights_.size() == 1; }

    /// grad_x log p_t(x_t), computed with log-sum-exp responsibilities.
    CTensor score(const CTensor& x_t, std::size_t t) const {
        if (x_t.shape() != shape()) throw shape_error("gmm score: shape mismatch");
        const double abar = schedule_.alpha_bar[t];
        const std::size_t K = weights_.size();
        std::vector<double> logp(K);
        for (std::size_t k = 0; k < K; ++k)
            logp[k] = std::log(weights_[k]) + component_log_density(x_t, t, k);
        double m = logp[0];
        for (double v : logp) m = std::max(m, v);
        double z = 0.0;
        for (double v : logp) z += std::exp(v - m);
        CTensor out(x_t.shape());
        for (std::size_t k = 0; k < K; ++k) {
            const double r = std::exp(logp[k] - m) / z;
            const double sa = std::sqrt(abar);
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double s = abar * variances_[k][i] + (1.0 - abar);
                out[i] += (-r / s) * (x_t[i] - sa * means_[k][i]);
            }
        }
        return out;
    }

    /// log p_t(x_t) of the diffused mixture (used by finite-difference checks).
    double log_density(const CTensor& x_t, std::size_t t) const {
        const std::size_t K = weights_.size();
        std::vector<double> logp(K);
        for (std::size_t k = 0; k < K; ++k)
            logp[k] = std::log(weights_[k]) + component_log_density(x_t, t, k);
        double m = logp[0];
        for (double v : logp) m = std::max(m, v);
        double z = 0.0;
        for (double v : logp) z += std::exp(v - m);
        return m + std::log(z);
    }

    CTensor epsilon(const CTensor& x_t, std::size_t t) const override {
        return epsilon_from_score(score(x_t, t), t, schedule_);
    }

    /// Diagonal of d(x0|t)/d(x_t) for the single-Gaussian case:
    /// sqrt(abar) v / (abar v + 1 - abar), per pixel.
    RTensor tweedie_jacobian_diag(std::size_t t) const {
        if (weights_.size() != 1)
            throw capability_error("exact Jacobian requires a single-Gaussian prior");
        const double abar = schedule_.alpha_bar[t];
        RTensor diag(shape());
        for (std::size_t i = 0; i < diag.size(); ++i) {
            const double v = variances_[0][i];
            diag[i] = std::sqrt(abar) * v / (abar * v + 1.0 - abar);
        }
        return diag;
    }

private:
    double component_log_density(const CTensor& x_t, std::size_t t, std::size_t k) const {
        const double abar = schedule_.alpha_bar[t];
        const double sa = std::sqrt(abar);
        double acc = 0.0;
        for (std::size_t i = 0; i < x_t.size(); ++i) {
            const double s = abar * variances_[k][i] + (1.0 - abar);
            const cdouble d = x_t[i] - sa * means_[k][i];
            // complex pixel = two real coordinates with variance s each
            acc += -std::norm(d) / (2.0 * s) - std::log(2.0 * M_PI * s);
        }
        return acc;
    }

    std::vector<double> weights_;
    std::vector<CTensor> means_;
    std::vector<RTensor> variances_;
    NoiseSchedule schedule_;
};

inline CTensor gmm_score(const GaussianMixturePrior& prior, const CTensor& x_t,
                         std::size_t t) {
    return prior.score(x_t, t);
}

/// One-step MMSE denoised estimate x0|t from the predicted noise.
inline CTensor tweedie_mean(const ScoreModel& model, const CTensor& x_t, std::size_t t,
                            const NoiseSchedule& schedule) {
    const double abar = schedule.alpha_bar[t];
    if (abar < 1e-12)
        throw numerical_degeneracy_error("tweedie_mean: alpha_bar too small");
    const CTensor eps = model.epsilon(x_t, t);
    CTensor out(x_t.shape());
    const double inv = 1.0 / std::sqrt(abar);
    const double s = schedule.sigma[t];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x_t[i] - s * eps[i]);
    return out;
}

/// E[x0 | x_t, y] = tweedie_mean + (1-abar)/sqrt(abar) * grad log p(y|x_t).
inline CTensor conditional_posterior_mean(const ScoreModel& model, const CTensor& x_t,
                                          std::size_t t, const NoiseSchedule& schedule,
                                          const CTensor& likelihood_score) {
    CTensor out = tweedie_mean(model, x_t, t, schedule);
    x_t.require_same_shape(likelihood_score, "conditional_posterior_mean");
    const double abar = schedule.alpha_bar[t];
    const double coeff = (1.0 - abar) / std::sqrt(abar);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += coeff * likelihood_score[i];
    return out;
}

/// Load a GMM prior from a plain-text spec listing K, weights, and tensor
/// file paths for means/variances. Paths are relative to the spec file's
/// directory unless absolute. Format:
///   K=2
///   weight0=0.5
///   mean0=mean0.ntsr
///   var0=var0.ntsr
///   ...
inline GaussianMixturePrior load_gmm_prior(const std::string& spec_path,
                                           NoiseSchedule schedule) {
    std::ifstream is(spec_path);
    if (!is) throw format_error("cannot open GMM spec: " + spec_path);
    std::string dir;
    if (auto pos = spec_path.find_last_of('/'); pos != std::string::npos)
        dir = spec_path.substr(0, pos + 1);
    auto resolve = [&](const std::string& p) {
        return (!p.empty() && p[0] == '/') ? p : dir + p;
    };
    std::size_t K = 0;
    std::vector<std::string> mean_paths, var_paths;
    std::vector<double> weights;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw format_error("GMM spec: malformed line '" + line + "'");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "K") {
            K = static_cast<std::size_t>(std::stoul(value));
            weights.resize(K);
            mean_paths.resize(K);
            var_paths.resize(K);
        } else if (key.rfind("weight", 0) == 0) {
            weights.at(std::stoul(key.substr(6))) = std::stod(value);
        } else if (key.rfind("mean", 0) == 0) {
            mean_paths.at(std::stoul(key.substr(4))) = value;
        } else if (key.rfind("var", 0) == 0) {
            var_paths.at(std::stoul(key.substr(3))) = value;
        } else {
            throw format_error("GMM spec: unknown key '" + key + "'");
        }
    }
    if (K == 0) throw format_error("GMM spec: missing K");
    std::vector<CTensor> means;
    std::vector<RTensor> vars;
    for (std::size_t k = 0; k < K; ++k) {
        const std::string mp = resolve(mean_paths[k]);
        if (tensor_file_dtype(mp) == 1)
            means.push_back(load_tensor<cdouble>(mp));
        else
            means.push_back(to_complex(load_tensor<double>(mp)));
        vars.push_back(load_tensor<double>(resolve(var_paths[k])));
    }
    return GaussianMixturePrior(std::move(weights), std::move(means), std::move(vars),
                                std::move(schedule));
}

}  // namespace bgdm
