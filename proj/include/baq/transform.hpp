#pragma once

#include "baq/hessian.hpp"
#include "baq/layer.hpp"
#include "baq/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace baq {

inline constexpr std::size_t kDefaultBlockSize = 64;

// Block-diagonal orthogonal pair: W -> U^T W V, H -> V^T H V.
struct TransformPair {
    Matrix u; // M x M
    Matrix v; // N x N
    std::size_t block_size = 0;
    std::optional<TransformMode> mode; // empty for the identity control
    std::uint64_t seed = 0;

    static TransformPair identity(std::size_t m, std::size_t n);
};

// Blocks of size p; a trailing block takes the remainder when p does not divide
// the dimension. U blocks are drawn before V blocks from one seeded stream.
TransformPair build_transforms(std::size_t m, std::size_t n, std::size_t p, TransformMode mode, std::uint64_t seed);

// Grid bounds and the inverse-Hessian diagonal are recomputed in the
// transformed domain; the damping carried by h is kept as is.
std::pair<LayerWeights, HessianBundle> apply_transform(const LayerWeights & w, const HessianBundle & h,
                                                       const TransformPair & t);

// U W' V^T, mapping transformed-domain weights back.
Matrix inverse_transform(const Matrix & w_transformed, const TransformPair & t);

// C_j = loss_j * 2^{2r}; losses below kSensitivityFloor are floored.
std::vector<double> estimate_sensitivity_from_loss(std::span<const double> per_column_loss, double r);

// Per-column sensitivities measured with a fixed-width compensated probe pass.
std::vector<double> probe_sensitivities(const LayerWeights & w, const HessianBundle & h, int probe_bits);

} // namespace baq
