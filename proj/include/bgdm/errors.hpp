#pragma once

#include <stdexcept>
#include <string>

namespace bgdm {

struct parameter_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct shape_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor file parsing; carries the byte offset of the first bad record.
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg, long long offset = -1)
        : std::runtime_error(offset >= 0 ? msg + " (offset " + std::to_string(offset) + ")" : msg),
          offset(offset) {}
    long long offset;
};

struct capability_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct external_model_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numerical_degeneracy_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Iterative solver failed to reach tolerance; carries the final residual.
struct solver_error : std::runtime_error {
    solver_error(const std::string& msg, double residual)
        : std::runtime_error(msg + " (final residual " + std::to_string(residual) + ")"),
          residual(residual) {}
    double residual;
};

// Sampling chain produced a non-finite or exploding state.
struct divergence_error : std::runtime_error {
    divergence_error(const std::string& msg, int step)
        : std::runtime_error(msg + " (step " + std::to_string(step) + ")"), step(step) {}
    int step;
};

}  // namespace bgdm
