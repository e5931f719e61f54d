#pragma once

#include "baq/linalg.hpp"

#include <cstddef>
#include <cstdint>

namespace baq {

// Desk-scale stand-in for a linear layer and its calibration activations.
struct SynthConfig {
    std::size_t rows = 256;
    std::size_t cols = 256;
    double decades = 3.0;     // log-uniform spread of the row ranges
    double condition = 1e3;   // condition number of X X^T
    std::size_t samples = 0;  // calibration columns; 0 means 2 * cols
    std::uint64_t seed = 0;
};

struct SynthLayer {
    Matrix weights;     // rows x cols, every entry exactly representable as f32
    Matrix calibration; // cols x samples, f32-representable
};

// Row ranges are 10^(decades * u) with u uniform on [0, 1). X = Q S Y^T where
// Q is a near-identity orthogonal basis, S^2 a log-spaced spectrum from 1 to
// `condition` assigned to columns in seeded random order, and Y has
// orthonormal columns, so X X^T = Q S^2 Q^T.
SynthLayer make_synth_layer(const SynthConfig & config);

} // namespace baq
