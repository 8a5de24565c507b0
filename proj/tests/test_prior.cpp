#include "doctest.h"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "bgdm/dense_bridge.hpp"
#include "bgdm/external_denoiser.hpp"
#include "bgdm/linops.hpp"
#include "bgdm/oracle.hpp"
#include "bgdm/prior.hpp"
#include "bgdm/rng.hpp"
#include "bgdm/tensor_io.hpp"

using namespace bgdm;

namespace {

NoiseSchedule test_schedule() { return make_linear_schedule(1000, 1e-4, 0.02); }

GaussianMixturePrior random_gmm(std::size_t K, const std::vector<std::size_t>& shape,
                                std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> weights(K);
    double total = 0.0;
    for (auto& w : weights) {
        w = 0.2 + rng.uniform();
        total += w;
    }
    for (auto& w : weights) w /= total;
    std::vector<CTensor> means;
    std::vector<RTensor> vars;
    for (std::size_t k = 0; k < K; ++k) {
        means.push_back(rng.standard_normal<cdouble>(shape));
        RTensor v(shape);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.3 + rng.uniform();
        vars.push_back(std::move(v));
    }
    return GaussianMixturePrior(std::move(weights), std::move(means), std::move(vars),
                                test_schedule());
}

std::string temp_dir() {
    std::string tmpl = "/tmp/bgdm_prior_XXXXXX";
    char* p = mkdtemp(tmpl.data());
    REQUIRE(p != nullptr);
    return tmpl;
}

}  // namespace

TEST_CASE("GMM constructor rejects invalid inputs") {
    const NoiseSchedule sched = test_schedule();
    const std::vector<std::size_t> shape{2, 2};
    CTensor mu(shape);
    RTensor v(shape);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0;

    CHECK_THROWS_AS(GaussianMixturePrior({}, {}, {}, sched), parameter_error);
    CHECK_THROWS_AS(GaussianMixturePrior({0.5}, {mu}, {v}, sched), parameter_error);
    CHECK_THROWS_AS(GaussianMixturePrior({-0.5, 1.5}, {mu, mu}, {v, v}, sched),
                    parameter_error);
    CHECK_THROWS_AS(GaussianMixturePrior({1.0}, {mu, mu}, {v}, sched), parameter_error);
    {
        RTensor bad = v;
        bad[1] = 0.0;
        CHECK_THROWS_AS(GaussianMixturePrior({1.0}, {mu}, {bad}, sched), parameter_error);
    }
    {
        CTensor other({3, 3});
        CHECK_THROWS_AS(GaussianMixturePrior({0.5, 0.5}, {mu, other}, {v, v}, sched),
                        parameter_error);
    }
    CHECK_NOTHROW(GaussianMixturePrior({1.0}, {mu}, {v}, sched));
}

TEST_CASE("gmm_score matches finite differences of log_density") {
    const GaussianMixturePrior prior = random_gmm(3, {3, 3}, 11);
    Rng rng(12);
    for (std::size_t t : {std::size_t(10), std::size_t(500), std::size_t(990)}) {
        for (int probe = 0; probe < 5; ++probe) {
            const CTensor x = rng.standard_normal<cdouble>({3, 3});
            const CTensor analytic = gmm_score(prior, x, t);
            const CTensor fd = oracle::finite_diff_gradient<cdouble>(
                [&](const CTensor& v) { return prior.log_density(v, t); }, x, 1e-5);
            for (std::size_t i = 0; i < x.size(); ++i) {
                CHECK(std::abs(analytic[i].real() - fd[i].real()) <=
                      1e-5 * (1.0 + std::abs(fd[i].real())));
                CHECK(std::abs(analytic[i].imag() - fd[i].imag()) <=
                      1e-5 * (1.0 + std::abs(fd[i].imag())));
            }
        }
    }
}

TEST_CASE("gmm score rejects shape mismatch") {
    const GaussianMixturePrior prior = random_gmm(2, {2, 2}, 13);
    CTensor wrong({3, 3});
    CHECK_THROWS_AS(prior.score(wrong, 100), shape_error);
}

TEST_CASE("epsilon and score conversions are inverse maps") {
    const NoiseSchedule sched = test_schedule();
    Rng rng(14);
    const CTensor s = rng.standard_normal<cdouble>({4});
    for (std::size_t t : {std::size_t(1), std::size_t(400), std::size_t(999)}) {
        const CTensor eps = epsilon_from_score(s, t, sched);
        const CTensor back = score_from_epsilon(eps, t, sched);
        for (std::size_t i = 0; i < s.size(); ++i)
            CHECK(std::abs(back[i] - s[i]) <= 1e-14);
        // eps = -sigma * score by definition
        for (std::size_t i = 0; i < s.size(); ++i)
            CHECK(std::abs(eps[i] + cdouble(sched.sigma[t], 0) * s[i]) <= 1e-14);
    }
}

TEST_CASE("tweedie_mean equals mixture of per-component Gaussian conditionings") {
    // independent derivation: E[x0|x_t] = sum_k r_k E[x0|x_t, k], with each
    // component conditioned jointly-Gaussian per pixel and r_k the diffused
    // responsibilities
    const std::vector<std::size_t> shape{4, 4};
    const GaussianMixturePrior prior = random_gmm(3, shape, 21);
    const NoiseSchedule& sched = prior.schedule();
    Rng rng(22);
    for (std::size_t t : {std::size_t(50), std::size_t(400), std::size_t(900)}) {
        const CTensor x = rng.standard_normal<cdouble>(shape);
        const CTensor got = tweedie_mean(prior, x, t, sched);
        const double abar = sched.alpha_bar[t];
        const double sa = std::sqrt(abar);
        const std::size_t K = prior.num_components();
        std::vector<double> logp(K);
        for (std::size_t k = 0; k < K; ++k) {
            double acc = std::log(prior.weight(k));
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double s = abar * prior.variance(k)[i] + (1.0 - abar);
                acc += -std::norm(x[i] - sa * prior.mean(k)[i]) / (2.0 * s) -
                       std::log(2.0 * M_PI * s);
            }
            logp[k] = acc;
        }
        double m = logp[0];
        for (double v : logp) m = std::max(m, v);
        double z = 0.0;
        for (double v : logp) z += std::exp(v - m);
        CTensor expect(shape);
        for (std::size_t k = 0; k < K; ++k) {
            const double r = std::exp(logp[k] - m) / z;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double v = prior.variance(k)[i];
                const cdouble cond = ((1.0 - abar) * prior.mean(k)[i] + sa * v * x[i]) /
                                     (abar * v + 1.0 - abar);
                expect[i] += r * cond;
            }
        }
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(std::abs(got[i] - expect[i]) <= 1e-12 * (1.0 + std::abs(expect[i])));
    }
}

TEST_CASE("tweedie_mean rejects degenerate alpha_bar") {
    NoiseSchedule sched = test_schedule();
    sched.alpha_bar[999] = 1e-300;
    const GaussianMixturePrior prior = random_gmm(1, {2}, 31);
    CTensor x({2});
    CHECK_THROWS_AS(tweedie_mean(prior, x, 999, sched), numerical_degeneracy_error);
}

TEST_CASE("tweedie_jacobian_diag matches directional finite differences") {
    const std::vector<std::size_t> shape{3, 3};
    const GaussianMixturePrior prior = random_gmm(1, shape, 41);
    const NoiseSchedule& sched = prior.schedule();
    Rng rng(42);
    const std::size_t t = 300;
    const RTensor diag = prior.tweedie_jacobian_diag(t);
    const CTensor x = rng.standard_normal<cdouble>(shape);
    const CTensor dir = rng.standard_normal<cdouble>(shape);
    const double h = 1e-6;
    CTensor xp = x, xm = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] += h * dir[i];
        xm[i] -= h * dir[i];
    }
    CTensor fd = tweedie_mean(prior, xp, t, sched);
    const CTensor fm = tweedie_mean(prior, xm, t, sched);
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const cdouble d = (fd[i] - fm[i]) / (2.0 * h);
        CHECK(std::abs(d - diag[i] * dir[i]) <= 1e-6 * (1.0 + std::abs(d)));
    }

    const GaussianMixturePrior mixture = random_gmm(2, shape, 43);
    CHECK_THROWS_AS(mixture.tweedie_jacobian_diag(t), capability_error);
    CHECK(prior.exact_jacobian_available());
    CHECK_FALSE(mixture.exact_jacobian_available());
}

TEST_CASE("conditional_posterior_mean matches dense Gaussian conditioning") {
    // single-Gaussian prior, MRI operator, exact likelihood score computed
    // densely; the identity tweedie + (1-abar)/sqrt(abar) * score must land on
    // the jointly conditioned dense posterior mean
    const std::size_t n = 8;
    MaskSpec mspec;
    mspec.pattern = MaskPattern::cartesian_equispaced;
    mspec.acceleration = 2.0;
    const LinearOperatorSpec op = make_mri_operator(generate_mask(mspec, {n, n}));

    Rng rng(51);
    CTensor mu = rng.standard_normal<cdouble>({n, n});
    RTensor v({n, n});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.4 + rng.uniform();
    const GaussianMixturePrior prior({1.0}, {mu}, {v}, test_schedule());
    const NoiseSchedule& sched = prior.schedule();

    const std::size_t t = 300;
    const double abar = sched.alpha_bar[t];
    const double sigma_y = 0.1;
    const CTensor x0_true = rng.standard_normal<cdouble>({n, n});
    const CTensor y = simulate_measurement(op, x0_true, sigma_y, 99);
    const CTensor x_t = rng.standard_normal<cdouble>({n, n});

    const Eigen::MatrixXd A_full = oracle::operator_matrix(op);
    const std::vector<std::size_t> rows = oracle::mri_informative_rows(op);
    Eigen::MatrixXd A(rows.size(), A_full.cols());
    Eigen::VectorXd yv(rows.size());
    const Eigen::VectorXd y_full = oracle::to_real_vector(y);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        A.row(r) = A_full.row(rows[r]);
        yv(r) = y_full(rows[r]);
    }
    // complex measurement noise: sigma_y^2 / 2 per real coordinate
    const Eigen::VectorXd noise_var =
        Eigen::VectorXd::Constant(A.rows(), sigma_y * sigma_y / 2.0);

    Eigen::VectorXd mu_v(2 * n * n), var_v(2 * n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        mu_v(2 * i) = mu[i].real();
        mu_v(2 * i + 1) = mu[i].imag();
        var_v(2 * i) = var_v(2 * i + 1) = v[i];
    }
    const Eigen::VectorXd xt_v = oracle::to_real_vector(x_t);
    const Eigen::VectorXd expect = oracle::gaussian_conditional_mean(
        A, yv, noise_var, mu_v, var_v, xt_v, abar);

    // exact likelihood score: J^T A^T (A C A^T + R)^{-1} (y - A m_t), with
    // m_t the Tweedie mean, C the conditional covariance diag, J its Jacobian
    Eigen::VectorXd jdiag(2 * n * n), cdiag(2 * n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        const double denom = abar * v[i] + 1.0 - abar;
        jdiag(2 * i) = jdiag(2 * i + 1) = std::sqrt(abar) * v[i] / denom;
        cdiag(2 * i) = cdiag(2 * i + 1) = (1.0 - abar) * v[i] / denom;
    }
    const CTensor mt = tweedie_mean(prior, x_t, t, sched);
    const Eigen::VectorXd mt_v = oracle::to_real_vector(mt);
    const Eigen::MatrixXd S =
        A * cdiag.asDiagonal() * A.transpose() +
        Eigen::MatrixXd(noise_var.asDiagonal());
    const Eigen::VectorXd ls_vec =
        jdiag.asDiagonal() * (A.transpose() * S.ldlt().solve(yv - A * mt_v));
    const CTensor ls = oracle::from_real_vector(ls_vec, {n, n});

    const CTensor got = conditional_posterior_mean(prior, x_t, t, sched, ls);
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        const cdouble e(expect(2 * i), expect(2 * i + 1));
        worst = std::max(worst, std::abs(got[i] - e));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("load_gmm_prior round trip and error paths") {
    const std::string dir = temp_dir();
    const std::vector<std::size_t> shape{2, 3};
    Rng rng(61);
    const CTensor mean0 = rng.standard_normal<cdouble>(shape);
    const RTensor mean1_real = rng.standard_normal<double>(shape);
    RTensor var0(shape), var1(shape);
    for (std::size_t i = 0; i < var0.size(); ++i) {
        var0[i] = 0.5 + rng.uniform();
        var1[i] = 0.5 + rng.uniform();
    }
    save_tensor(mean0, dir + "/mean0.ntsr");
    save_tensor(mean1_real, dir + "/mean1.ntsr");
    save_tensor(var0, dir + "/var0.ntsr");
    save_tensor(var1, dir + "/var1.ntsr");

    SUBCASE("valid spec with comments and relative paths") {
        {
            std::ofstream os(dir + "/prior.txt");
            os << "# two components\n"
               << "K=2\n"
               << "weight0=0.25\nweight1=0.75\n"
               << "mean0=mean0.ntsr\nmean1=mean1.ntsr\n"
               << "var0=var0.ntsr\nvar1=var1.ntsr\n";
        }
        const GaussianMixturePrior prior =
            load_gmm_prior(dir + "/prior.txt", test_schedule());
        CHECK(prior.num_components() == 2);
        CHECK(prior.weight(0) == doctest::Approx(0.25));
        CHECK(prior.weight(1) == doctest::Approx(0.75));
        CHECK(prior.shape() == shape);
        for (std::size_t i = 0; i < mean0.size(); ++i) {
            CHECK(prior.mean(0)[i] == mean0[i]);
            // real-valued mean file promotes to complex with zero imag
            CHECK(prior.mean(1)[i] == cdouble(mean1_real[i], 0.0));
            CHECK(prior.variance(0)[i] == var0[i]);
        }
    }

    SUBCASE("missing spec file") {
        CHECK_THROWS_AS(load_gmm_prior(dir + "/nope.txt", test_schedule()), format_error);
    }
    SUBCASE("malformed line") {
        {
            std::ofstream os(dir + "/bad1.txt");
            os << "K=1\nweight0=1.0\nthis line has no equals\n";
        }
        CHECK_THROWS_AS(load_gmm_prior(dir + "/bad1.txt", test_schedule()), format_error);
    }
    SUBCASE("unknown key") {
        {
            std::ofstream os(dir + "/bad2.txt");
            os << "K=1\nbogus=3\n";
        }
        CHECK_THROWS_AS(load_gmm_prior(dir + "/bad2.txt", test_schedule()), format_error);
    }
    SUBCASE("missing K") {
        {
            std::ofstream os(dir + "/bad3.txt");
            os << "# empty\n";
        }
        CHECK_THROWS_AS(load_gmm_prior(dir + "/bad3.txt", test_schedule()), format_error);
    }
}

TEST_CASE("external denoiser directory mode") {
    const std::string dir = temp_dir();
    const std::vector<std::size_t> shape{3, 3};
    Rng rng(71);
    const CTensor eps200 = rng.standard_normal<cdouble>(shape);
    save_tensor(eps200, dir + "/eps_t200.ntsr");

    const ExternalDenoiser d = ExternalDenoiser::from_directory(dir);
    const CTensor x = rng.standard_normal<cdouble>(shape);
    const CTensor got = d.epsilon(x, 200);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == eps200[i]);

    // missing timestep file
    CHECK_THROWS_AS(d.epsilon(x, 201), external_model_error);

    // stored response of the wrong shape is rejected
    save_tensor(CTensor({2, 2}), dir + "/eps_t300.ntsr");
    CHECK_THROWS_AS(d.epsilon(x, 300), external_model_error);
}

TEST_CASE("external denoiser child process protocol") {
    const std::string stub = DENOISER_STUB_PATH;
    const std::vector<std::size_t> shape{4, 4};
    Rng rng(81);
    const CTensor x = rng.standard_normal<cdouble>(shape);

    SUBCASE("zeros mode over repeated requests") {
        const ExternalDenoiser d = ExternalDenoiser::spawn({stub, "zeros"});
        for (std::size_t t : {std::size_t(0), std::size_t(10), std::size_t(999)}) {
            const CTensor eps = d.epsilon(x, t);
            CHECK(eps.same_shape(x));
            for (std::size_t i = 0; i < eps.size(); ++i) CHECK(eps[i] == cdouble(0, 0));
        }
    }

    SUBCASE("stdnormal mode matches the analytic prediction") {
        const NoiseSchedule sched = test_schedule();
        const ExternalDenoiser d =
            ExternalDenoiser::spawn({stub, "stdnormal", "1000", "1e-4", "0.02"});
        for (std::size_t t : {std::size_t(5), std::size_t(500)}) {
            const CTensor eps = d.epsilon(x, t);
            for (std::size_t i = 0; i < eps.size(); ++i)
                CHECK(std::abs(eps[i] - cdouble(sched.sigma[t], 0) * x[i]) <= 1e-12);
        }
    }

    SUBCASE("malformed response raises external_model_error") {
        const ExternalDenoiser d = ExternalDenoiser::spawn({stub, "malformed"});
        CHECK_THROWS_AS(d.epsilon(x, 10), external_model_error);
    }

    SUBCASE("dead process raises external_model_error") {
        const ExternalDenoiser d = ExternalDenoiser::spawn({"/bin/false"}, 2000);
        CHECK_THROWS_AS(d.epsilon(x, 10), external_model_error);
    }

    SUBCASE("empty command rejected") {
        CHECK_THROWS_AS(ExternalDenoiser::spawn({}), parameter_error);
    }
}
