#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bgdm/errors.hpp"
#include "bgdm/guidance.hpp"
#include "bgdm/linops.hpp"

namespace bgdm {

/// Flat key=value config with [section] headers. Keys are stored as
/// "section.key". '#' starts a comment; blank lines are ignored.
inline std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw parameter_error("cannot open config: " + path);
    std::map<std::string, std::string> kv;
    std::string line, section;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw format_error(path + ":" + std::to_string(lineno) +
                                   ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw format_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw format_error(path + ":" + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full))
            throw format_error(path + ":" + std::to_string(lineno) +
                               ": duplicate key '" + full + "'");
        kv[full] = value;
    }
    return kv;
}

enum class TaskKind { mri, ct, sr };
enum class PriorSource { gmm, external_dir, external_cmd, none };

/// One experiment sweep: schemes x nfe x accelerations x seeds x images.
/// The "acceleration" axis is the mask acceleration for MRI, the projection
/// count for CT, and the block factor for SR.
struct ExperimentConfig {
    TaskKind task = TaskKind::mri;

    // images: either "phantom:N" entries or tensor file paths
    std::vector<std::string> images;

    // MRI operator
    MaskPattern mask_pattern = MaskPattern::cartesian_equispaced;
    double center_fraction = 0.0;
    std::uint64_t mask_seed = 0;

    // CT operator; 0 means "use image width"
    std::size_t detector_count = 0;

    // schedule
    std::size_t T = 1000;
    double beta_min = 1e-4;
    double beta_max = 0.02;

    // prior
    PriorSource prior = PriorSource::none;
    std::string prior_path;                   // gmm spec or denoiser directory
    std::vector<std::string> prior_command;   // external_cmd argv
    long prior_timeout_ms = 10000;

    // guidance (scheme comes from the sweep axis)
    GuidanceConfig guidance;

    // sweep axes
    std::vector<std::string> schemes;
    std::vector<std::size_t> nfe;
    std::vector<double> accelerations;
    std::vector<std::uint64_t> seeds;

    // run
    std::string output_dir = "out";
    bool write_trace = false;
    std::size_t workers = 0;  // 0 = available cores

    std::string source_path;  // config file this was parsed from
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        const auto a = item.find_first_not_of(" \t");
        if (a == std::string::npos) continue;
        const auto b = item.find_last_not_of(" \t");
        out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

struct ConfigReader {
    std::map<std::string, std::string> kv;
    std::string path;
    std::map<std::string, bool> seen;

    std::string get(const std::string& key, const std::string& fallback) {
        seen[key] = true;
        const auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    }
    std::string require(const std::string& key) {
        seen[key] = true;
        const auto it = kv.find(key);
        if (it == kv.end())
            throw parameter_error(path + ": missing required key '" + key + "'");
        return it->second;
    }
    double number(const std::string& key, double fallback) {
        const std::string v = get(key, "");
        if (v.empty()) return fallback;
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (const std::exception&) {
            throw parameter_error(path + ": key '" + key + "' is not a number: " + v);
        }
    }
    void reject_unknown() const {
        for (const auto& [k, v] : kv)
            if (!seen.count(k))
                throw parameter_error(path + ": unknown key '" + k + "'");
    }
};

}  // namespace detail

inline GuidanceScheme parse_scheme(const std::string& s) {
    if (s == "none") return GuidanceScheme::none;
    if (s == "dps") return GuidanceScheme::dps;
    if (s == "ddnm") return GuidanceScheme::ddnm;
    if (s == "scoremed") return GuidanceScheme::scoremed;
    if (s == "bgdm") return GuidanceScheme::bgdm;
    if (s == "r_bgdm") return GuidanceScheme::r_bgdm;
    throw parameter_error("unknown guidance scheme '" + s + "'");
}

inline ExperimentConfig parse_experiment_config(const std::string& path) {
    detail::ConfigReader r{parse_key_value_file(path), path, {}};
    ExperimentConfig cfg;
    cfg.source_path = path;

    const std::string task = r.require("task.task");
    if (task == "mri") cfg.task = TaskKind::mri;
    else if (task == "ct") cfg.task = TaskKind::ct;
    else if (task == "sr") cfg.task = TaskKind::sr;
    else throw parameter_error(path + ": unknown task '" + task + "'");

    cfg.images = detail::split_list(r.require("task.images"));
    if (cfg.images.empty()) throw parameter_error(path + ": task.images is empty");
    for (const auto& img : cfg.images) {
        if (img.rfind("phantom:", 0) == 0) {
            const long n = std::strtol(img.c_str() + 8, nullptr, 10);
            if (n < 16) throw parameter_error(path + ": phantom size must be >= 16");
        } else if (!std::filesystem::exists(img)) {
            throw parameter_error(path + ": image file not found: " + img);
        }
    }

    const std::string pattern = r.get("task.mask_pattern", "cartesian_equispaced");
    if (pattern == "cartesian_equispaced") cfg.mask_pattern = MaskPattern::cartesian_equispaced;
    else if (pattern == "gaussian1d") cfg.mask_pattern = MaskPattern::gaussian1d;
    else if (pattern == "uniform1d") cfg.mask_pattern = MaskPattern::uniform1d;
    else throw parameter_error(path + ": unknown mask_pattern '" + pattern + "'");
    cfg.center_fraction = r.number("task.center_fraction", 0.0);
    cfg.mask_seed = static_cast<std::uint64_t>(r.number("task.mask_seed", 0));
    cfg.detector_count = static_cast<std::size_t>(r.number("task.detector_count", 0));

    cfg.T = static_cast<std::size_t>(r.number("schedule.T", 1000));
    cfg.beta_min = r.number("schedule.beta_min", 1e-4);
    cfg.beta_max = r.number("schedule.beta_max", 0.02);

    const std::string prior = r.get("prior.type", "none");
    if (prior == "gmm") {
        cfg.prior = PriorSource::gmm;
        cfg.prior_path = r.require("prior.path");
        if (!std::filesystem::exists(cfg.prior_path))
            throw parameter_error(path + ": prior file not found: " + cfg.prior_path);
    } else if (prior == "external_dir") {
        cfg.prior = PriorSource::external_dir;
        cfg.prior_path = r.require("prior.path");
        if (!std::filesystem::is_directory(cfg.prior_path))
            throw parameter_error(path + ": denoiser directory not found: " + cfg.prior_path);
    } else if (prior == "external_cmd") {
        cfg.prior = PriorSource::external_cmd;
        cfg.prior_command = detail::split_list(r.require("prior.command"));
        if (cfg.prior_command.empty())
            throw parameter_error(path + ": prior.command is empty");
        cfg.prior_timeout_ms = static_cast<long>(r.number("prior.timeout_ms", 10000));
    } else if (prior == "none") {
        cfg.prior = PriorSource::none;
    } else {
        throw parameter_error(path + ": unknown prior type '" + prior + "'");
    }

    cfg.guidance.zeta = r.number("guidance.zeta", 0.0);
    cfg.guidance.lambda = r.number("guidance.lambda", 1e-3);
    cfg.guidance.gamma = r.number("guidance.gamma", 0.0);
    cfg.guidance.eta = r.number("guidance.eta", 0.85);
    cfg.guidance.sigma_y = r.number("guidance.sigma_y", 0.0);
    const std::string jac = r.get("guidance.jacobian_mode", "identity_approx");
    if (jac == "exact_gaussian") cfg.guidance.jacobian_mode = JacobianMode::exact_gaussian;
    else if (jac == "identity_approx") cfg.guidance.jacobian_mode = JacobianMode::identity_approx;
    else if (jac == "finite_diff_jvp") cfg.guidance.jacobian_mode = JacobianMode::finite_diff_jvp;
    else throw parameter_error(path + ": unknown jacobian_mode '" + jac + "'");
    const std::string transport = r.get("guidance.dps_transport", "adjoint");
    if (transport == "adjoint") cfg.guidance.dps_transport = DpsTransport::adjoint;
    else if (transport == "pseudo_inverse") cfg.guidance.dps_transport = DpsTransport::pseudo_inverse;
    else throw parameter_error(path + ": unknown dps_transport '" + transport + "'");
    const std::string refine = r.get("guidance.refinement", "toward_prior");
    if (refine == "toward_prior") cfg.guidance.refinement_variant = RefinementVariant::toward_prior;
    else if (refine == "literal_paper") cfg.guidance.refinement_variant = RefinementVariant::literal_paper;
    else throw parameter_error(path + ": unknown refinement '" + refine + "'");
    cfg.guidance.validate();

    cfg.schemes = detail::split_list(r.require("run.schemes"));
    for (const auto& s : cfg.schemes) parse_scheme(s);  // validates
    for (const auto& s : detail::split_list(r.require("run.nfe")))
        cfg.nfe.push_back(static_cast<std::size_t>(std::stoul(s)));
    for (const auto& s : detail::split_list(r.require("run.accelerations")))
        cfg.accelerations.push_back(std::stod(s));
    for (const auto& s : detail::split_list(r.require("run.seeds")))
        cfg.seeds.push_back(std::stoull(s));
    cfg.output_dir = r.get("run.output", "out");
    cfg.write_trace = r.get("run.trace", "0") == "1";
    cfg.workers = static_cast<std::size_t>(r.number("run.workers", 0));

    if (cfg.schemes.empty()) throw parameter_error(path + ": run.schemes is empty");
    if (cfg.nfe.empty()) throw parameter_error(path + ": run.nfe is empty");
    if (cfg.accelerations.empty())
        throw parameter_error(path + ": run.accelerations is empty");
    if (cfg.seeds.empty()) throw parameter_error(path + ": need at least one seed");
    for (std::size_t n : cfg.nfe)
        if (n < 1 || n > cfg.T)
            throw parameter_error(path + ": nfe values must be in [1, T]");

    r.reject_unknown();
    return cfg;
}

}  // namespace bgdm
