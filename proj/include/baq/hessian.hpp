#pragma once

#include "baq/linalg.hpp"

#include <cstddef>
#include <vector>

namespace baq {

inline constexpr double kDefaultPercDamp = 0.01;

// Streaming accumulation of X * X^T over calibration columns.
struct CalibrationGram {
    std::size_t dim = 0;
    Matrix gram;
    std::size_t samples = 0;

    CalibrationGram() = default;
    explicit CalibrationGram(std::size_t n) : dim(n), gram(n, n), samples(0) {}
};

// x_chunk is dim x k; every column is one calibration sample.
void accumulate(CalibrationGram & gram, const Matrix & x_chunk);

struct HessianBundle {
    Matrix hessian;               // damped 2 X X^T
    std::vector<double> inv_diag; // squared diagonal of the Cholesky factor of hessian^{-1}
    double damping_used = 0.0;
    // Upper factor U with hessian^{-1} = U^T U; row q drives the error
    // compensation after column q is quantized.
    Matrix inverse_factor;

    std::size_t dim() const noexcept { return hessian.rows(); }
};

HessianBundle build_hessian(const CalibrationGram & gram, double percdamp = kDefaultPercDamp);

// Wraps an already damped SPD matrix (for example a transformed Hessian).
HessianBundle hessian_from_matrix(Matrix hessian, double damping_used = 0.0);

} // namespace baq
