#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "bgdm/config.hpp"
#include "bgdm/eval.hpp"
#include "bgdm/external_denoiser.hpp"
#include "bgdm/sampler.hpp"
#include "bgdm/tensor_io.hpp"

namespace bgdm {

/// Binary P5 preview, linearly rescaled to [0, 255]. Constant images map
/// to black. Quantitative data always lives in tensor files.
inline void write_pgm(const RTensor& img, const std::string& path) {
    if (img.rank() != 2) throw shape_error("write_pgm: image must be 2-D");
    double lo = img[0], hi = img[0];
    for (std::size_t i = 0; i < img.size(); ++i) {
        lo = std::min(lo, img[i]);
        hi = std::max(hi, img[i]);
    }
    const double span = hi - lo;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw parameter_error("cannot write PGM: " + path);
    os << "P5\n" << img.shape()[1] << ' ' << img.shape()[0] << "\n255\n";
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double v = span > 0.0 ? (img[i] - lo) / span : 0.0;
        os.put(static_cast<char>(std::lround(v * 255.0)));
    }
    if (!os) throw parameter_error("PGM write failed: " + path);
}

inline void write_trace_csv(const SamplerTrace& trace, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw parameter_error("cannot write trace: " + path);
    os << "step,t,residual_norm,psnr_vs_reference\n";
    os.precision(10);
    for (const auto& e : trace)
        os << e.step << ',' << e.t << ',' << e.residual_norm << ','
           << e.psnr_vs_reference << '\n';
}

namespace detail {

inline CTensor load_experiment_image(const std::string& entry) {
    if (entry.rfind("phantom:", 0) == 0) {
        const std::size_t n = std::stoul(entry.substr(8));
        return to_complex(shepp_logan(n));
    }
    if (tensor_file_dtype(entry) == 1) return load_tensor<cdouble>(entry);
    return to_complex(load_tensor<double>(entry));
}

inline LinearOperatorSpec build_operator(const ExperimentConfig& cfg, double accel,
                                         const std::vector<std::size_t>& shape) {
    switch (cfg.task) {
        case TaskKind::mri: {
            MaskSpec ms;
            ms.pattern = cfg.mask_pattern;
            ms.acceleration = accel;
            ms.center_fraction = cfg.center_fraction;
            ms.seed = cfg.mask_seed;
            return make_mri_operator(generate_mask(ms, shape));
        }
        case TaskKind::ct: {
            const auto angles = static_cast<std::size_t>(std::llround(accel));
            const std::size_t det =
                cfg.detector_count ? cfg.detector_count : shape[1];
            return make_ct_operator(shape[0], shape[1], angles, det);
        }
        case TaskKind::sr:
            return make_sr_operator(shape[0], shape[1],
                                    static_cast<std::size_t>(std::llround(accel)));
    }
    throw parameter_error("unknown task");
}

inline std::unique_ptr<ScoreModel> build_prior(const ExperimentConfig& cfg,
                                               const NoiseSchedule& schedule,
                                               const std::vector<std::size_t>& shape) {
    switch (cfg.prior) {
        case PriorSource::gmm:
            return std::make_unique<GaussianMixturePrior>(
                load_gmm_prior(cfg.prior_path, schedule));
        case PriorSource::external_dir:
            return std::make_unique<ExternalDenoiser>(
                ExternalDenoiser::from_directory(cfg.prior_path));
        case PriorSource::external_cmd:
            return std::make_unique<ExternalDenoiser>(
                ExternalDenoiser::spawn(cfg.prior_command, cfg.prior_timeout_ms));
        case PriorSource::none:
            // standard-normal analytic prior
            return std::make_unique<GaussianMixturePrior>(
                std::vector<double>{1.0}, std::vector<CTensor>{CTensor(shape)},
                std::vector<RTensor>{RTensor::full(shape, 1.0)}, schedule);
    }
    throw parameter_error("unknown prior source");
}

inline std::string cell_stem(const std::string& scheme, double accel, std::size_t nfe,
                             std::uint64_t seed, std::size_t image_index) {
    std::ostringstream os;
    os << scheme << "_a" << accel << "_n" << nfe << "_s" << seed << "_i"
       << image_index;
    return os.str();
}

}  // namespace detail

struct CellResult {
    bool ok = false;
    MetricRecord record;
    std::string error;
};

/// Runs the full grid. Cells are independent jobs on a bounded worker pool;
/// the CSV is written once, in deterministic cell order, by the caller thread.
/// Returns 0 on success, 1 if any cell failed.
inline int run_experiment(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    if (!cfg.source_path.empty())
        fs::copy_file(cfg.source_path, fs::path(cfg.output_dir) / "config.txt",
                      fs::copy_options::overwrite_existing);

    const NoiseSchedule schedule =
        make_linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);

    struct Cell {
        std::string scheme;
        std::size_t nfe;
        double accel;
        std::uint64_t seed;
        std::size_t image_index;
    };
    std::vector<Cell> cells;
    for (const auto& scheme : cfg.schemes)
        for (std::size_t nfe : cfg.nfe)
            for (double accel : cfg.accelerations)
                for (std::uint64_t seed : cfg.seeds)
                    for (std::size_t i = 0; i < cfg.images.size(); ++i)
                        cells.push_back({scheme, nfe, accel, seed, i});

    std::vector<CellResult> results(cells.size());
    std::atomic<std::size_t> next{0};

    auto run_cell = [&](const Cell& cell, CellResult& out) {
        const auto t_start = std::chrono::steady_clock::now();
        const CTensor truth = detail::load_experiment_image(cfg.images[cell.image_index]);
        if (truth.rank() != 2) throw shape_error("experiment images must be 2-D");
        const LinearOperatorSpec op =
            detail::build_operator(cfg, cell.accel, truth.shape());
        const auto model = detail::build_prior(cfg, schedule, truth.shape());

        const std::uint64_t meas_seed = Rng::mix(cfg.mask_seed, 1000 + cell.image_index);
        const CTensor y =
            simulate_measurement(op, truth, cfg.guidance.sigma_y, meas_seed);

        GuidanceConfig gcfg = cfg.guidance;
        gcfg.scheme = parse_scheme(cell.scheme);
        auto [x0, trace] = run_sampler(*model, op, y, schedule, gcfg, cell.nfe,
                                       cell.seed, cfg.write_trace, &truth);

        const std::string stem = detail::cell_stem(cell.scheme, cell.accel, cell.nfe,
                                                   cell.seed, cell.image_index);
        const fs::path dir(cfg.output_dir);
        save_tensor(x0, (dir / ("recon_" + stem + ".ntsr")).string());
        write_pgm(magnitude(x0), (dir / ("recon_" + stem + ".pgm")).string());
        if (cfg.write_trace)
            write_trace_csv(trace, (dir / ("trace_" + stem + ".csv")).string());

        const char* task_name = cfg.task == TaskKind::mri   ? "mri"
                                : cfg.task == TaskKind::ct ? "ct"
                                                           : "sr";
        out.record.scheme = cell.scheme;
        out.record.task = task_name;
        out.record.accel = cell.accel;
        out.record.nfe = cell.nfe;
        out.record.psnr_db = psnr(x0, truth);
        out.record.ssim = ssim(magnitude(x0), magnitude(truth));
        out.record.seed = cell.seed;
        out.record.runtime_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
        out.ok = true;
    };

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                run_cell(cells[i], results[i]);
            } catch (const std::exception& e) {
                results[i].ok = false;
                results[i].error = e.what();
            }
        }
    };

    std::size_t n_workers = cfg.workers ? cfg.workers
                                        : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::min(n_workers, cells.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::ofstream csv(fs::path(cfg.output_dir) / "metrics.csv");
    csv << MetricRecord::csv_header() << '\n';
    int failures = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (results[i].ok) {
            csv << results[i].record.to_csv() << '\n';
        } else {
            ++failures;
            log << "cell failed: scheme=" << cells[i].scheme
                << " nfe=" << cells[i].nfe << " accel=" << cells[i].accel
                << " seed=" << cells[i].seed << " image=" << cells[i].image_index
                << ": " << results[i].error << '\n';
        }
    }
    return failures ? 1 : 0;
}

struct SweepRow {
    std::string scheme;
    double accel = 0.0;
    std::size_t nfe = 0;
    std::size_t n = 0;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double ssim_mean = 0.0, ssim_std = 0.0;
};

/// Aggregates metric CSVs per (scheme, accel, nfe): mean and sample std of
/// PSNR/SSIM across seeds and images. Emits an aligned text table to
/// `table_out` and, when `summary_csv_path` is non-empty, a summary CSV.
inline std::vector<SweepRow> sweep_report(const std::vector<std::string>& csv_paths,
                                          std::ostream& table_out,
                                          const std::string& summary_csv_path = "") {
    struct Acc {
        std::size_t n = 0;
        double psum = 0, psq = 0, ssum = 0, ssq = 0;
    };
    std::map<std::tuple<std::string, double, std::size_t>, Acc> groups;

    for (const auto& path : csv_paths) {
        std::ifstream is(path);
        if (!is) throw format_error("cannot open CSV: " + path);
        std::string line;
        if (!std::getline(is, line) || line != MetricRecord::csv_header())
            throw format_error(path + ": unexpected CSV schema");
        std::size_t lineno = 1;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::vector<std::string> f = detail::split_list(line);
            if (f.size() != 8)
                throw format_error(path + ":" + std::to_string(lineno) +
                                   ": expected 8 fields");
            try {
                Acc& a = groups[{f[0], std::stod(f[2]), std::stoul(f[3])}];
                const double p = std::stod(f[4]), s = std::stod(f[5]);
                a.n += 1;
                a.psum += p;
                a.psq += p * p;
                a.ssum += s;
                a.ssq += s * s;
            } catch (const std::invalid_argument&) {
                throw format_error(path + ":" + std::to_string(lineno) +
                                   ": non-numeric field");
            }
        }
    }

    auto sample_std = [](std::size_t n, double sum, double sq) {
        if (n < 2) return 0.0;
        const double mean = sum / n;
        return std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1)));
    };

    std::vector<SweepRow> rows;
    for (const auto& [key, a] : groups) {
        SweepRow r;
        std::tie(r.scheme, r.accel, r.nfe) = key;
        r.n = a.n;
        r.psnr_mean = a.psum / a.n;
        r.psnr_std = sample_std(a.n, a.psum, a.psq);
        r.ssim_mean = a.ssum / a.n;
        r.ssim_std = sample_std(a.n, a.ssum, a.ssq);
        rows.push_back(r);
    }

    table_out << std::left << std::setw(10) << "scheme" << std::right << std::setw(8)
              << "accel" << std::setw(6) << "nfe" << std::setw(5) << "n"
              << std::setw(18) << "psnr (mean+-std)" << std::setw(18)
              << "ssim (mean+-std)" << '\n';
    for (const auto& r : rows) {
        std::ostringstream p, s;
        p << std::fixed << std::setprecision(2) << r.psnr_mean << "+-" << r.psnr_std;
        s << std::fixed << std::setprecision(4) << r.ssim_mean << "+-" << r.ssim_std;
        table_out << std::left << std::setw(10) << r.scheme << std::right
                  << std::setw(8) << r.accel << std::setw(6) << r.nfe << std::setw(5)
                  << r.n << std::setw(18) << p.str() << std::setw(18) << s.str()
                  << '\n';
    }

    if (!summary_csv_path.empty()) {
        std::ofstream os(summary_csv_path);
        if (!os) throw parameter_error("cannot write summary: " + summary_csv_path);
        os << "scheme,accel,nfe,n,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
        os.precision(10);
        for (const auto& r : rows)
            os << r.scheme << ',' << r.accel << ',' << r.nfe << ',' << r.n << ','
               << r.psnr_mean << ',' << r.psnr_std << ',' << r.ssim_mean << ','
               << r.ssim_std << '\n';
    }
    return rows;
}

}  // namespace bgdm
