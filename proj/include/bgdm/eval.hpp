#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bgdm/tensor.hpp"

namespace bgdm {

/// Standard 10-ellipse Shepp-Logan phantom (modified intensities, values in
/// [0,1]) on an n x n grid over [-1,1]^2. Sampled on a 4x supersampled grid,
/// anti-alias filtered with a 0.8-pixel Gaussian, then block-averaged: grid
/// representation of a continuous object needs a proper anti-alias prefilter
/// or its above-Nyquist energy corrupts every downstream frequency-domain
/// operation.
inline RTensor shepp_logan(std::size_t n) {
    if (n < 16) throw parameter_error("shepp_logan: n must be >= 16");
    struct Ellipse {
        double value, a, b, x0, y0, phi_deg;
    };
    static const Ellipse ellipses[10] = {
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    };
    const std::size_t ss = 4;
    const std::size_t N = n * ss;
    RTensor fine({N, N});
    for (std::size_t r = 0; r < N; ++r) {
        // row 0 is the top of the image (y = +1)
        const double y = 1.0 - (2.0 * r + 1.0) / N;
        for (std::size_t c = 0; c < N; ++c) {
            const double x = -1.0 + (2.0 * c + 1.0) / N;
            double v = 0.0;
            for (const Ellipse& e : ellipses) {
                const double phi = e.phi_deg * M_PI / 180.0;
                const double dx = x - e.x0, dy = y - e.y0;
                const double xr = dx * std::cos(phi) + dy * std::sin(phi);
                const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
                if (xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0) v += e.value;
            }
            fine.at2(r, c) = std::min(1.0, std::max(0.0, v));
        }
    }
    // separable Gaussian anti-alias prefilter, sigma = 0.8 output pixels
    const double sigma = 0.8 * static_cast<double>(ss);
    const long radius = static_cast<long>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ktotal = 0.0;
    for (long k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
        ktotal += kernel[k + radius];
    }
    for (double& k : kernel) k /= ktotal;
    auto clampi = [&](long v) {
        return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(N) - 1));
    };
    RTensor tmp({N, N});
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < N; ++c) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k)
                acc += kernel[k + radius] *
                       fine.at2(r, clampi(static_cast<long>(c) + k));
            tmp.at2(r, c) = acc;
        }
    for (std::size_t r = 0; r < N; ++r)
        for (std::size_t c = 0; c < N; ++c) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k)
                acc += kernel[k + radius] *
                       tmp.at2(clampi(static_cast<long>(r) + k), c);
            fine.at2(r, c) = acc;
        }
    RTensor img({n, n});
    const double inv = 1.0 / static_cast<double>(ss * ss);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            double acc = 0.0;
            for (std::size_t dr = 0; dr < ss; ++dr)
                for (std::size_t dc = 0; dc < ss; ++dc)
                    acc += fine.at2(r * ss + dr, c * ss + dc);
            img.at2(r, c) = acc * inv;
        }
    return img;
}

/// 10 log10(data_range^2 / MSE); +infinity when the images are identical.
/// data_range <= 0 means "use max of the reference".
inline double psnr(const RTensor& x, const RTensor& ref, double data_range = 0.0) {
    x.require_same_shape(ref, "psnr");
    if (data_range <= 0.0) {
        for (std::size_t i = 0; i < ref.size(); ++i)
            data_range = std::max(data_range, std::abs(ref[i]));
        if (data_range <= 0.0) throw parameter_error("psnr: data_range must be > 0");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - ref[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

inline double psnr(const CTensor& x, const CTensor& ref, double data_range = 0.0) {
    return psnr(magnitude(x), magnitude(ref), data_range);
}

namespace detail {

inline std::vector<double> ssim_window() {
    // 11 x 11 Gaussian, sigma 1.5, normalized (separable; 1-d weights here)
    std::vector<double> w(11);
    double total = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5.0;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

}  // namespace detail

/// Mean local SSIM over valid (fully inside) 11x11 windows, Gaussian
/// weighting sigma 1.5, K1 = 0.01, K2 = 0.03.
inline double ssim(const RTensor& x, const RTensor& ref, double data_range = 0.0) {
    x.require_same_shape(ref, "ssim");
    if (x.rank() != 2) throw parameter_error("ssim: inputs must be 2-D");
    const std::size_t H = x.dim(0), W = x.dim(1);
    if (H < 11 || W < 11) throw parameter_error("ssim: image smaller than 11x11 window");
    if (data_range <= 0.0) {
        for (std::size_t i = 0; i < ref.size(); ++i)
            data_range = std::max(data_range, std::abs(ref[i]));
        if (data_range <= 0.0) throw parameter_error("ssim: data_range must be > 0");
    }
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    const std::vector<double> w = detail::ssim_window();

    // separable weighted moments
    auto hfilter = [&](const RTensor& in) {
        RTensor out({H, W - 10});
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c + 10 < W; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 11; ++k) acc += w[k] * in.at2(r, c + k);
                out.at2(r, c) = acc;
            }
        return out;
    };
    auto vfilter = [&](const RTensor& in) {
        RTensor out({in.dim(0) - 10, in.dim(1)});
        for (std::size_t r = 0; r + 10 < in.dim(0); ++r)
            for (std::size_t c = 0; c < in.dim(1); ++c) {
                double acc = 0.0;
                for (int k = 0; k < 11; ++k) acc += w[k] * in.at2(r + k, c);
                out.at2(r, c) = acc;
            }
        return out;
    };
    auto smooth = [&](const RTensor& in) { return vfilter(hfilter(in)); };

    const RTensor mu_x = smooth(x);
    const RTensor mu_y = smooth(ref);
    const RTensor xx = smooth(hadamard(x, x));
    const RTensor yy = smooth(hadamard(ref, ref));
    const RTensor xy = smooth(hadamard(x, ref));

    double total = 0.0;
    for (std::size_t i = 0; i < mu_x.size(); ++i) {
        const double mx = mu_x[i], my = mu_y[i];
        const double var_x = xx[i] - mx * mx;
        const double var_y = yy[i] - my * my;
        const double cov = xy[i] - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    return total / static_cast<double>(mu_x.size());
}

/// One result row; serializes to CSV as
/// scheme,task,accel,nfe,psnr_db,ssim,runtime_s,seed
struct MetricRecord {
    std::string scheme;
    std::string task;
    double accel = 0.0;  // acceleration, projection count, or SR factor
    std::size_t nfe = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double runtime_s = 0.0;
    std::uint64_t seed = 0;

    static const char* csv_header() {
        return "scheme,task,accel,nfe,psnr_db,ssim,runtime_s,seed";
    }

    std::string to_csv() const {
        std::ostringstream os;
        os.precision(10);
        os << scheme << ',' << task << ',' << accel << ',' << nfe << ',' << psnr_db
           << ',' << ssim << ',' << runtime_s << ',' << seed;
        return os.str();
    }
};

}  // namespace bgdm
