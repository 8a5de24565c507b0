#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bgdm/fft.hpp"
#include "bgdm/rng.hpp"
#include "bgdm/tensor.hpp"

namespace bgdm {

enum class OperatorKind { mri_masked_fourier, ct_radon, sr_downsample };

/// Declarative description of a forward operator A. All operators act on
/// complex images (real inputs are lifted beforehand); specs are immutable
/// and apply/adjoint/pseudo_inverse are pure.
struct LinearOperatorSpec {
    OperatorKind kind;
    std::vector<std::size_t> image_shape;  // {H, W}
    RTensor mask;                          // MRI: binary H x W
    std::size_t num_angles = 0;            // CT: evenly spaced over 180 degrees
    std::size_t detector_count = 0;        // CT: detector spacing = pixel spacing
    std::size_t factor = 0;                // SR: block size

    std::vector<std::size_t> measurement_shape() const {
        switch (kind) {
            case OperatorKind::mri_masked_fourier:
                return image_shape;
            case OperatorKind::ct_radon:
                return {num_angles, detector_count};
            case OperatorKind::sr_downsample:
                return {image_shape[0] / factor, image_shape[1] / factor};
        }
        throw parameter_error("unknown operator kind");
    }
};

inline LinearOperatorSpec make_mri_operator(RTensor mask) {
    if (mask.rank() != 2) throw parameter_error("MRI mask must be 2-D");
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] != 0.0 && mask[i] != 1.0)
            throw parameter_error("MRI mask values must be 0 or 1");
    LinearOperatorSpec op;
    op.kind = OperatorKind::mri_masked_fourier;
    op.image_shape = mask.shape();
    op.mask = std::move(mask);
    return op;
}

inline LinearOperatorSpec make_ct_operator(std::size_t height, std::size_t width,
                                           std::size_t num_angles,
                                           std::size_t detector_count) {
    if (num_angles < 1) throw parameter_error("CT: num_angles must be >= 1");
    if (detector_count < 1) throw parameter_error("CT: detector_count must be >= 1");
    LinearOperatorSpec op;
    op.kind = OperatorKind::ct_radon;
    op.image_shape = {height, width};
    op.num_angles = num_angles;
    op.detector_count = detector_count;
    return op;
}

inline LinearOperatorSpec make_sr_operator(std::size_t height, std::size_t width,
                                           std::size_t factor) {
    if (factor < 1 || height % factor != 0 || width % factor != 0)
        throw parameter_error("SR: factor must divide both image dimensions");
    LinearOperatorSpec op;
    op.kind = OperatorKind::sr_downsample;
    op.image_shape = {height, width};
    op.factor = factor;
    return op;
}

namespace detail {

// Shared ray geometry so the CT adjoint is the exact transpose of the
// forward projection. Pixel centers sit at (col - (W-1)/2, row - (H-1)/2);
// detector offsets at j - (det-1)/2 with unit spacing; integration step 0.5 px.
template <class Accumulate>
void ct_trace_rays(const LinearOperatorSpec& op, Accumulate&& accum) {
    const std::size_t H = op.image_shape[0];
    const std::size_t W = op.image_shape[1];
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;
    const double half_len = 0.5 * std::sqrt(double(H) * H + double(W) * W) + 1.0;
    const double step = 0.5;
    const std::size_t nsteps = static_cast<std::size_t>(2.0 * half_len / step) + 1;
    for (std::size_t a = 0; a < op.num_angles; ++a) {
        const double theta = M_PI * static_cast<double>(a) / op.num_angles;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t j = 0; j < op.detector_count; ++j) {
            const double s = static_cast<double>(j) -
                             (static_cast<double>(op.detector_count) - 1.0) / 2.0;
            for (std::size_t k = 0; k < nsteps; ++k) {
                const double tau = -half_len + step * static_cast<double>(k);
                const double x = s * ct - tau * st;
                const double y = s * st + tau * ct;
                const double col = x + cx;
                const double row = y + cy;
                const long long c0 = static_cast<long long>(std::floor(col));
                const long long r0 = static_cast<long long>(std::floor(row));
                const double fc = col - c0;
                const double fr = row - r0;
                const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc),
                                     fr * fc};
                const long long rr[4] = {r0, r0, r0 + 1, r0 + 1};
                const long long cc[4] = {c0, c0 + 1, c0, c0 + 1};
                for (int q = 0; q < 4; ++q) {
                    if (rr[q] < 0 || rr[q] >= static_cast<long long>(H) || cc[q] < 0 ||
                        cc[q] >= static_cast<long long>(W))
                        continue;
                    accum(a, j, static_cast<std::size_t>(rr[q]),
                          static_cast<std::size_t>(cc[q]), w[q] * step);
                }
            }
        }
    }
}

inline CTensor ct_forward(const LinearOperatorSpec& op, const CTensor& x) {
    CTensor sino(op.measurement_shape());
    ct_trace_rays(op, [&](std::size_t a, std::size_t j, std::size_t r, std::size_t c,
                          double w) { sino.at2(a, j) += w * x.at2(r, c); });
    return sino;
}

inline CTensor ct_adjoint(const LinearOperatorSpec& op, const CTensor& sino) {
    CTensor img(op.image_shape);
    ct_trace_rays(op, [&](std::size_t a, std::size_t j, std::size_t r, std::size_t c,
                          double w) { img.at2(r, c) += w * sino.at2(a, j); });
    return img;
}

// Filtered back-projection: zero-padded frequency-domain Ram-Lak ramp with
// sinc^-4 deapodization. The deapodization divides out the two bilinear
// interpolations in the chain (ray sampling in the forward projector and
// sinogram lookup in the back-projection), each of which attenuates the
// spectrum by sinc^2.
inline CTensor ct_fbp(const LinearOperatorSpec& op, const CTensor& sino) {
    const std::size_t na = op.num_angles;
    const std::size_t nd = op.detector_count;
    const std::size_t H = op.image_shape[0];
    const std::size_t W = op.image_shape[1];
    std::size_t pad = 8;
    while (pad < 4 * nd) pad *= 2;
    std::vector<double> filter_gain(pad);
    for (std::size_t j = 0; j < pad; ++j) {
        const double freq =
            (j <= pad / 2 ? static_cast<double>(j)
                          : static_cast<double>(j) - static_cast<double>(pad)) /
            static_cast<double>(pad);
        const double x = M_PI * freq;
        const double sinc = (x == 0.0) ? 1.0 : std::sin(x) / x;
        filter_gain[j] = std::abs(freq) / std::pow(sinc, 4);
    }
    CTensor filtered({na, nd});
    for (std::size_t a = 0; a < na; ++a) {
        CTensor row({1, pad});
        for (std::size_t j = 0; j < nd; ++j) row[j] = sino.at2(a, j);
        CTensor spec = fft2(row);
        for (std::size_t j = 0; j < pad; ++j) spec[j] *= filter_gain[j];
        const CTensor back = ifft2(spec);
        for (std::size_t j = 0; j < nd; ++j) filtered.at2(a, j) = back[j];
    }
    CTensor img(op.image_shape);
    const double cx = (static_cast<double>(W) - 1.0) / 2.0;
    const double cy = (static_cast<double>(H) - 1.0) / 2.0;
    const double dtheta = M_PI / static_cast<double>(na);
    const double s_center = (static_cast<double>(nd) - 1.0) / 2.0;
    for (std::size_t a = 0; a < na; ++a) {
        const double theta = M_PI * static_cast<double>(a) / na;
        const double ct = std::cos(theta), st = std::sin(theta);
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t c = 0; c < W; ++c) {
                const double x = static_cast<double>(c) - cx;
                const double y = static_cast<double>(r) - cy;
                const double s = x * ct + y * st + s_center;
                const long long j0 = static_cast<long long>(std::floor(s));
                const double f = s - j0;
                cdouble v = 0.0;
                if (j0 >= 0 && j0 < static_cast<long long>(nd))
                    v += (1 - f) * filtered.at2(a, static_cast<std::size_t>(j0));
                if (j0 + 1 >= 0 && j0 + 1 < static_cast<long long>(nd))
                    v += f * filtered.at2(a, static_cast<std::size_t>(j0 + 1));
                img.at2(r, c) += dtheta * v;
            }
    }
    return img;
}

inline CTensor mask_hadamard(const RTensor& mask, const CTensor& w) {
    CTensor out(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = mask[i] * w[i];
    return out;
}

}  // namespace detail

/// y = A x.
inline CTensor apply(const LinearOperatorSpec& op, const CTensor& x) {
    if (x.shape() != op.image_shape) throw shape_error("apply: image shape mismatch");
    switch (op.kind) {
        case OperatorKind::mri_masked_fourier:
            return detail::mask_hadamard(op.mask, fft2(x));
        case OperatorKind::ct_radon:
            return detail::ct_forward(op, x);
        case OperatorKind::sr_downsample: {
            const std::size_t f = op.factor;
            CTensor out(op.measurement_shape());
            const double inv = 1.0 / (static_cast<double>(f) * f);
            for (std::size_t r = 0; r < out.dim(0); ++r)
                for (std::size_t c = 0; c < out.dim(1); ++c) {
                    cdouble acc = 0.0;
                    for (std::size_t dr = 0; dr < f; ++dr)
                        for (std::size_t dc = 0; dc < f; ++dc)
                            acc += x.at2(r * f + dr, c * f + dc);
                    out.at2(r, c) = acc * inv;
                }
            return out;
        }
    }
    throw parameter_error("unknown operator kind");
}

/// Exact adjoint of apply under the standard real inner product.
inline CTensor adjoint(const LinearOperatorSpec& op, const CTensor& y) {
    if (y.shape() != op.measurement_shape())
        throw shape_error("adjoint: measurement shape mismatch");
    switch (op.kind) {
        case OperatorKind::mri_masked_fourier:
            return ifft2(detail::mask_hadamard(op.mask, y));
        case OperatorKind::ct_radon:
            return detail::ct_adjoint(op, y);
        case OperatorKind::sr_downsample: {
            const std::size_t f = op.factor;
            CTensor out(op.image_shape);
            const double inv = 1.0 / (static_cast<double>(f) * f);
            for (std::size_t r = 0; r < y.dim(0); ++r)
                for (std::size_t c = 0; c < y.dim(1); ++c)
                    for (std::size_t dr = 0; dr < f; ++dr)
                        for (std::size_t dc = 0; dc < f; ++dc)
                            out.at2(r * f + dr, c * f + dc) = y.at2(r, c) * inv;
            return out;
        }
    }
    throw parameter_error("unknown operator kind");
}

/// Moore-Penrose pseudo-inverse; exact for MRI (F^-1 M) and SR (block
/// replication), filtered back-projection for CT (approximate).
inline CTensor pseudo_inverse(const LinearOperatorSpec& op, const CTensor& y) {
    if (y.shape() != op.measurement_shape())
        throw shape_error("pseudo_inverse: measurement shape mismatch");
    switch (op.kind) {
        case OperatorKind::mri_masked_fourier:
            return ifft2(detail::mask_hadamard(op.mask, y));
        case OperatorKind::ct_radon:
            return detail::ct_fbp(op, y);
        case OperatorKind::sr_downsample: {
            const std::size_t f = op.factor;
            CTensor out(op.image_shape);
            for (std::size_t r = 0; r < y.dim(0); ++r)
                for (std::size_t c = 0; c < y.dim(1); ++c)
                    for (std::size_t dr = 0; dr < f; ++dr)
                        for (std::size_t dc = 0; dc < f; ++dc)
                            out.at2(r * f + dr, c * f + dc) = y.at2(r, c);
            return out;
        }
    }
    throw parameter_error("unknown operator kind");
}

enum class MaskPattern { cartesian_equispaced, gaussian1d, uniform1d };

struct MaskSpec {
    MaskPattern pattern = MaskPattern::cartesian_equispaced;
    double acceleration = 1.0;
    double center_fraction = 0.0;
    std::uint64_t seed = 0;
};

/// Column undersampling mask over an H x W grid. The realized kept-column
/// count equals round(W / acceleration) for the random patterns; the central
/// center_fraction of columns is always included.
inline RTensor generate_mask(const MaskSpec& spec, const std::vector<std::size_t>& shape) {
    if (shape.size() != 2) throw parameter_error("generate_mask: shape must be 2-D");
    if (spec.acceleration < 1.0)
        throw parameter_error("generate_mask: acceleration must be >= 1");
    const std::size_t H = shape[0], W = shape[1];
    std::vector<char> keep(W, 0);

    const std::size_t n_center =
        static_cast<std::size_t>(std::llround(spec.center_fraction * W));
    const std::size_t c_lo = (W - n_center) / 2;
    for (std::size_t c = c_lo; c < c_lo + n_center; ++c) keep[c] = 1;

    const std::size_t target =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(W / spec.acceleration)));
    if (target < n_center)
        throw parameter_error(
            "generate_mask: acceleration too high for requested center_fraction");

    switch (spec.pattern) {
        case MaskPattern::cartesian_equispaced: {
            const std::size_t stride =
                static_cast<std::size_t>(std::ceil(spec.acceleration));
            for (std::size_t c = 0; c < W; c += stride) keep[c] = 1;
            break;
        }
        case MaskPattern::gaussian1d:
        case MaskPattern::uniform1d: {
            Rng rng(spec.seed);
            std::size_t kept = 0;
            for (char k : keep) kept += k;
            const double sigma = 0.25 * (static_cast<double>(W) / 2.0);
            std::size_t guard = 0;
            while (kept < target) {
                if (++guard > 100000 * W)
                    throw parameter_error("generate_mask: sampling failed to fill mask");
                long long c;
                if (spec.pattern == MaskPattern::gaussian1d) {
                    const double offset = rng.gaussian() * sigma;
                    c = std::llround((static_cast<double>(W) - 1.0) / 2.0 + offset);
                } else {
                    c = static_cast<long long>(rng.uniform() * W);
                }
                if (c < 0 || c >= static_cast<long long>(W)) continue;
                if (!keep[static_cast<std::size_t>(c)]) {
                    keep[static_cast<std::size_t>(c)] = 1;
                    ++kept;
                }
            }
            break;
        }
    }

    RTensor mask(shape);
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) mask.at2(r, c) = keep[c] ? 1.0 : 0.0;
    return mask;
}

/// y = A x + n. MRI noise is complex with variance sigma_y^2/2 per component;
/// CT/SR noise is real with variance sigma_y^2.
inline CTensor simulate_measurement(const LinearOperatorSpec& op, const CTensor& x,
                                    double sigma_y, std::uint64_t seed) {
    if (sigma_y < 0.0) throw parameter_error("simulate_measurement: sigma_y must be >= 0");
    CTensor y = apply(op, x);
    if (sigma_y == 0.0) return y;
    Rng rng(seed);
    if (op.kind == OperatorKind::mri_masked_fourier) {
        // noise lives only on acquired k-space entries
        const double s = sigma_y / std::sqrt(2.0);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const cdouble n(s * rng.gaussian(), s * rng.gaussian());
            if (op.mask[i] != 0.0) y[i] += n;
        }
    } else {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += sigma_y * rng.gaussian();
    }
    return y;
}

}  // namespace bgdm
