#pragma once

#include "baq/allocator.hpp"
#include "baq/hessian.hpp"
#include "baq/layer.hpp"
#include "baq/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace baq {

struct QuantizedValue {
    std::uint32_t code = 0;
    double recon = 0.0;
};

// Mid-rise uniform quantizer: 2^bits equal cells on [lo, hi], reconstruction at
// the cell midpoint. bits = 0 reconstructs at (lo + hi) / 2.
QuantizedValue uniform_quantize(double value, double lo, double hi, int bits);

// Reconstruction lo + (code + 0.5) * (hi - lo) / 2^bits. Shared by the
// quantizer and every decoder so both sides agree bit for bit.
inline double reconstruct(double lo, double hi, int bits, std::uint32_t code) {
    const double step = (hi - lo) / static_cast<double>(std::uint32_t{1} << bits);
    return lo + (static_cast<double>(code) + 0.5) * step;
}

struct QuantizedLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint16_t> codes; // row-major rows x cols
    std::vector<int> per_column_bits;
    std::vector<double> row_min;
    std::vector<double> row_max;
    Matrix dequantized;
    // Per-column share of the proxy loss accumulated by the compensation
    // loop; sums to measured_layer_loss. Empty for decoded layers.
    std::vector<double> column_loss;

    std::uint16_t code(std::size_t i, std::size_t j) const noexcept { return codes[i * cols + j]; }
};

Matrix dequantize(std::size_t rows, std::size_t cols, std::span<const std::uint16_t> codes,
                  std::span<const int> per_column_bits, std::span<const double> row_min,
                  std::span<const double> row_max);

// Error-compensated column-sequential quantization in natural column order.
QuantizedLayer quantize_layer_gptq(const LayerWeights & w, const HessianBundle & h, std::span<const int> bits);

// Independent rounding of every weight, no compensation.
QuantizedLayer quantize_layer_rtn(const LayerWeights & w, std::span<const int> bits);

// sum_i dw_i^T H dw_i over the row errors dw_i.
double measured_layer_loss(const LayerWeights & original, const QuantizedLayer & quantized, const HessianBundle & h);
double measured_layer_loss(const Matrix & original, const Matrix & dequantized, const Matrix & hessian);

struct BaqOptions {
    std::optional<double> l_init;
    RefLossMode ref_loss_mode = RefLossMode::SingleStep;
    DegenerateRowPolicy degenerate_rows = DegenerateRowPolicy::Floor;
};

struct BaqResult {
    QuantizedLayer layer;
    BitAllocation allocation;
    SensitivityProfile sensitivity;
};

// Sensitivities -> reference loss -> integer widths -> compensated quantization.
BaqResult baq_quantize_layer(const LayerWeights & w, const HessianBundle & h, double r_ref,
                             const BaqOptions & options = {});

// Fixed-width baseline at round(r_ref) bits in every column.
QuantizedLayer quantize_layer_uniform(const LayerWeights & w, const HessianBundle & h, double r_ref);

} // namespace baq
