#pragma once

#include "baq/linalg.hpp"

#include <cstddef>
#include <vector>

namespace baq {

// Weight matrix W (M x N) with the per-row quantizer grid bounds.
struct LayerWeights {
    Matrix matrix;
    std::vector<double> row_min;
    std::vector<double> row_max;

    std::size_t rows() const noexcept { return matrix.rows(); }
    std::size_t cols() const noexcept { return matrix.cols(); }

    // Bounds are the exact row extrema, narrowed to 32-bit floats that still
    // cover every entry of the row.
    static LayerWeights from_matrix(Matrix w);

    // Throws DimensionMismatch / InvalidRange on broken invariants.
    void validate() const;
};

// Narrow to float, stepping outward when the rounding would shrink the bound.
double narrow_lower_bound(double v);
double narrow_upper_bound(double v);

} // namespace baq
