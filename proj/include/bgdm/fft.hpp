#pragma once

#include <fftw3.h>

#include <mutex>

#include "bgdm/tensor.hpp"

namespace bgdm {

namespace detail {

// FFTW's planner is not thread-safe; execution of a plan is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

inline CTensor fft2_impl(const CTensor& x, int sign) {
    if (x.rank() != 2) throw shape_error("fft2/ifft2: input must be 2-D");
    const int n0 = static_cast<int>(x.dim(0));
    const int n1 = static_cast<int>(x.dim(1));
    CTensor out(x.shape());
    auto* in_ptr = reinterpret_cast<fftw_complex*>(const_cast<cdouble*>(x.data()));
    auto* out_ptr = reinterpret_cast<fftw_complex*>(out.data());
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        // FFTW_ESTIMATE does not touch the input arrays during planning.
        plan = fftw_plan_dft_2d(n0, n1, in_ptr, out_ptr, sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    // unitary normalization so the transform preserves the l2 norm
    const double scale = 1.0 / std::sqrt(static_cast<double>(n0) * n1);
    out *= cdouble(scale, 0.0);
    return out;
}

}  // namespace detail

/// Orthonormal 2-D DFT: ‖fft2(x)‖₂ = ‖x‖₂ and ifft2(fft2(x)) = x.
inline CTensor fft2(const CTensor& x) { return detail::fft2_impl(x, FFTW_FORWARD); }

inline CTensor ifft2(const CTensor& w) { return detail::fft2_impl(w, FFTW_BACKWARD); }

}  // namespace bgdm
