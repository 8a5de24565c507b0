// Batch experiment runner and verification harness.
//
//   bgdm run <config> [--workers N] [--output DIR]
//   bgdm verify [--mutation-test]
//   bgdm sweep-report <csv...> [--output DIR]
//
// Exit codes: 0 success, 1 cell/suite failures, 2 config errors.

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bgdm/dense_bridge.hpp"
#include "bgdm/experiment.hpp"
#include "bgdm/oracle.hpp"

using namespace bgdm;

namespace {

struct SuiteResult {
    std::string name;
    bool pass;
    double worst_error;
    std::string note;
};

using oracle::Matrix;
using oracle::Vector;

SuiteResult suite_gd_limit() {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int m = 2 + static_cast<int>(rng.integer() % 7);
        const int n = 2 * m;  // aspect gap keeps the GD rate bounded
        oracle::DenseProblem p;
        p.A = Matrix(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) p.A(i, j) = rng.gaussian();
        p.y = Vector(m);
        for (int i = 0; i < m; ++i) p.y(i) = rng.gaussian();
        p.x_bar = Vector(n);
        for (int j = 0; j < n; ++j) p.x_bar(j) = rng.gaussian();
        const double alpha = 0.9 / std::pow(oracle::spectral_norm(p.A), 2);
        const Vector x = oracle::gd_least_squares(p, alpha, 10000);
        const Matrix pinv = oracle::dense_pseudo_inverse(p.A);
        const Vector expect =
            pinv * p.y + (Matrix::Identity(n, n) - pinv * p.A) * p.x_bar;
        worst = std::max(worst, (x - expect).norm() / (1.0 + expect.norm()));
    }
    return {"gd-pinv-limit", worst <= 1e-6, worst,
            "gradient descent vs SVD pseudo-inverse"};
}

SuiteResult suite_proximal(bool mutate) {
    MaskSpec ms;
    ms.acceleration = 4.0;
    const LinearOperatorSpec op = make_mri_operator(generate_mask(ms, {8, 8}));
    const Eigen::MatrixXd A = oracle::operator_matrix(op);
    Rng rng(102);
    const CTensor truth = rng.standard_normal<cdouble>({8, 8});
    const CTensor y = apply(op, truth);
    const CTensor x_ref = rng.standard_normal<cdouble>({8, 8});
    const Eigen::VectorXd yv = oracle::to_real_vector(y);
    const Eigen::VectorXd rv = oracle::to_real_vector(x_ref);
    double worst = 0.0;
    for (const double lambda : {1e-4, 1e-1, 10.0}) {
        const double used = mutate ? lambda * 1.05 : lambda;
        const CTensor got = proximal_solve(op, y, x_ref, used);
        const Eigen::MatrixXd lhs =
            A.transpose() * A +
            lambda * Eigen::MatrixXd::Identity(A.cols(), A.cols());
        const Eigen::VectorXd expect =
            lhs.ldlt().solve(A.transpose() * yv + lambda * rv);
        worst = std::max(worst, (oracle::to_real_vector(got) - expect).norm() /
                                    expect.norm());
    }
    return {"proximal-vs-dense", worst <= 1e-8, worst,
            mutate ? "lambda perturbed by 5% (mutation test)"
                   : "spectral closed form vs dense normal equations"};
}

SuiteResult suite_tweedie() {
    const auto schedule = make_linear_schedule(1000, 1e-4, 0.02);
    Rng rng(103);
    const CTensor mu = rng.standard_normal<cdouble>({4, 4});
    RTensor v({4, 4});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.3 + rng.uniform();
    const GaussianMixturePrior prior({1.0}, {mu}, {v}, schedule);
    double worst = 0.0;
    for (const std::size_t t : {50ul, 400ul, 900ul}) {
        const CTensor x_t = rng.standard_normal<cdouble>({4, 4});
        const CTensor got = tweedie_mean(prior, x_t, t, schedule);
        const double abar = schedule.alpha_bar[t];
        for (std::size_t i = 0; i < got.size(); ++i) {
            // joint-Gaussian conditional mean, per pixel
            const double denom = abar * v[i] + 1.0 - abar;
            const cdouble expect =
                ((1.0 - abar) * mu[i] + std::sqrt(abar) * v[i] * x_t[i]) / denom;
            worst = std::max(worst, std::abs(got[i] - expect) /
                                        (1.0 + std::abs(expect)));
        }
    }
    return {"tweedie-vs-conditioning", worst <= 1e-10, worst,
            "Tweedie mean vs exact Gaussian conditioning"};
}

SuiteResult suite_adjoint() {
    MaskSpec ms;
    ms.acceleration = 4.0;
    const std::vector<std::pair<LinearOperatorSpec, double>> ops = {
        {make_mri_operator(generate_mask(ms, {16, 16})), 1e-10},
        {make_sr_operator(16, 16, 2), 1e-10},
        {make_ct_operator(16, 16, 12, 16), 1e-6},
    };
    Rng rng(104);
    double worst = 0.0;
    for (const auto& [op, tol] : ops) {
        for (int probe = 0; probe < 100; ++probe) {
            const CTensor x = rng.standard_normal<cdouble>(op.image_shape);
            const CTensor u = rng.standard_normal<cdouble>(op.measurement_shape());
            const CTensor ax = apply(op, x);
            const CTensor au = adjoint(op, u);
            cdouble lhs = 0.0, rhs = 0.0;
            for (std::size_t i = 0; i < ax.size(); ++i)
                lhs += ax[i] * std::conj(u[i]);
            for (std::size_t i = 0; i < x.size(); ++i)
                rhs += x[i] * std::conj(au[i]);
            const double scale = norm2(x) * norm2(u) + 1.0;
            const double err = std::abs(lhs - rhs) / scale / tol;  // normalized
            worst = std::max(worst, err);
        }
    }
    return {"adjoint-dot-product", worst <= 1.0, worst,
            "error reported relative to each operator's tolerance"};
}

SuiteResult suite_posterior_mean() {
    const auto schedule = make_linear_schedule(1000, 1e-4, 0.02);
    MaskSpec ms;
    ms.acceleration = 2.0;
    const LinearOperatorSpec op = make_mri_operator(generate_mask(ms, {8, 8}));
    Rng rng(105);
    const CTensor mu = rng.standard_normal<cdouble>({8, 8});
    RTensor v({8, 8});
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.5 + rng.uniform();
    const GaussianMixturePrior prior({1.0}, {mu}, {v}, schedule);
    const double sigma_y = 0.1;
    const std::size_t t = 300;
    const double abar = schedule.alpha_bar[t];

    const CTensor x0 = rng.standard_normal<cdouble>({8, 8});
    const CTensor y = simulate_measurement(op, x0, sigma_y, 55);
    const CTensor x_t = diffuse_forward(x0, t, schedule,
                                        rng.standard_normal<cdouble>({8, 8}));

    // informative (masked) real rows of the dense operator
    const Eigen::MatrixXd A_full = oracle::operator_matrix(op);
    const auto rows = oracle::mri_informative_rows(op);
    Eigen::MatrixXd A(rows.size(), A_full.cols());
    Eigen::VectorXd yv(rows.size()), nv(rows.size());
    const Eigen::VectorXd y_full = oracle::to_real_vector(y);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        A.row(r) = A_full.row(rows[r]);
        yv(r) = y_full(rows[r]);
        nv(r) = sigma_y * sigma_y / 2.0;
    }
    Eigen::VectorXd vv(2 * v.size());
    for (std::size_t i = 0; i < v.size(); ++i) vv(2 * i) = vv(2 * i + 1) = v[i];

    // exact likelihood score: J^T A^T (A C A^T + R)^-1 (y - A m_t), with
    // J = d m_t / d x_t and C = Cov(x0 | x_t), both diagonal for this prior
    const Eigen::VectorXd mt = oracle::to_real_vector(tweedie_mean(prior, x_t, t, schedule));
    Eigen::VectorXd jdiag(vv.size()), cdiag(vv.size());
    for (Eigen::Index i = 0; i < vv.size(); ++i) {
        const double denom = abar * vv(i) + 1.0 - abar;
        jdiag(i) = std::sqrt(abar) * vv(i) / denom;
        cdiag(i) = (1.0 - abar) * vv(i) / denom;
    }
    const Eigen::MatrixXd S =
        A * cdiag.asDiagonal() * A.transpose() +
        Eigen::MatrixXd(nv.asDiagonal());
    const Eigen::VectorXd ls_vec =
        jdiag.asDiagonal() * (A.transpose() * S.ldlt().solve(yv - A * mt));
    const CTensor ls = oracle::from_real_vector(ls_vec, x_t.shape());
    const CTensor got = conditional_posterior_mean(prior, x_t, t, schedule, ls);

    const Eigen::VectorXd expect = oracle::gaussian_conditional_mean(
        A, yv, nv, oracle::to_real_vector(mu), vv, oracle::to_real_vector(x_t),
        abar);
    const double err = (oracle::to_real_vector(got) - expect).norm() / expect.norm();
    return {"posterior-mean", err <= 1e-8, err,
            "ACPM with exact Jacobian vs dense conditioning"};
}

int run_verify(bool mutate) {
    const std::vector<SuiteResult> results = {
        suite_gd_limit(),        suite_proximal(mutate), suite_tweedie(),
        suite_adjoint(),      suite_posterior_mean(),
    };
    bool all = true;
    std::cout << std::left << std::setw(26) << "suite" << std::setw(8) << "status"
              << std::setw(14) << "worst error" << "note\n";
    for (const auto& r : results) {
        all = all && r.pass;
        std::cout << std::left << std::setw(26) << r.name << std::setw(8)
                  << (r.pass ? "PASS" : "FAIL") << std::setw(14)
                  << std::scientific << std::setprecision(2) << r.worst_error
                  << r.note << '\n';
    }
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"guided-diffusion inverse-problem experiment runner"};
    app.require_subcommand(1);

    std::string config_path, output_dir;
    std::size_t workers = 0;
    bool mutation_test = false;
    std::vector<std::string> csv_paths;

    auto* run_cmd = app.add_subcommand("run", "execute an experiment grid");
    run_cmd->add_option("config", config_path, "experiment config file")->required();
    run_cmd->add_option("--workers", workers, "worker pool size (0 = cores)");
    run_cmd->add_option("--output", output_dir, "override output directory");

    auto* verify_cmd = app.add_subcommand("verify", "run the oracle suites");
    verify_cmd->add_flag("--mutation-test", mutation_test,
                         "perturb the proximal closed form; the suite must fail");

    auto* sweep_cmd = app.add_subcommand("sweep-report", "aggregate metric CSVs");
    sweep_cmd->add_option("csv", csv_paths, "metrics CSV files")->required();
    sweep_cmd->add_option("--output", output_dir, "directory for the summary CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run_cmd) {
            ExperimentConfig cfg = parse_experiment_config(config_path);
            if (workers) cfg.workers = workers;
            if (!output_dir.empty()) cfg.output_dir = output_dir;
            return run_experiment(cfg);
        }
        if (*verify_cmd) return run_verify(mutation_test);
        if (*sweep_cmd) {
            const std::string out =
                ((output_dir.empty() ? std::filesystem::path(".")
                                     : std::filesystem::path(output_dir)) /
                 "sweep_summary.csv")
                    .string();
            if (!output_dir.empty())
                std::filesystem::create_directories(output_dir);
            sweep_report(csv_paths, std::cout, out);
            return 0;
        }
    } catch (const parameter_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const format_error& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
