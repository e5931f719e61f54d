#include "baq/quantizer.hpp"

#include "baq/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace baq {

namespace {

void check_bits(int bits) {
    if (bits < 0 || bits > kMaxBits) {
        throw Error(ErrorKind::InvalidArgument, "bitwidth " + std::to_string(bits) + " outside [0, 15]");
    }
}

// Like uniform_quantize but accepts lo == hi (constant rows reconstruct exactly).
QuantizedValue quantize_cell(double value, double lo, double hi, int bits) {
    if (bits == 0 || hi == lo) {
        return {0, reconstruct(lo, hi, bits, 0)};
    }
    const std::uint32_t levels = std::uint32_t{1} << bits;
    const double step = (hi - lo) / static_cast<double>(levels);
    const double cell = std::floor((value - lo) / step);
    const double clamped = std::clamp(cell, 0.0, static_cast<double>(levels - 1));
    const auto code = static_cast<std::uint32_t>(clamped);
    return {code, reconstruct(lo, hi, bits, code)};
}

QuantizedLayer empty_result(const LayerWeights & w, std::span<const int> bits) {
    if (bits.size() != w.cols()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "bit allocation has " + std::to_string(bits.size()) + " columns, layer has " +
                        std::to_string(w.cols()));
    }
    for (int b : bits) {
        check_bits(b);
    }
    QuantizedLayer q;
    q.rows = w.rows();
    q.cols = w.cols();
    q.codes.assign(q.rows * q.cols, 0);
    q.per_column_bits.assign(bits.begin(), bits.end());
    q.row_min = w.row_min;
    q.row_max = w.row_max;
    q.dequantized = Matrix(q.rows, q.cols);
    q.column_loss.assign(q.cols, 0.0);
    return q;
}

} // namespace

QuantizedValue uniform_quantize(double value, double lo, double hi, int bits) {
    if (!(lo < hi)) {
        throw Error(ErrorKind::InvalidRange, "quantizer range requires lo < hi");
    }
    check_bits(bits);
    return quantize_cell(value, lo, hi, bits);
}

Matrix dequantize(std::size_t rows, std::size_t cols, std::span<const std::uint16_t> codes,
                  std::span<const int> per_column_bits, std::span<const double> row_min,
                  std::span<const double> row_max) {
    if (codes.size() != rows * cols || per_column_bits.size() != cols || row_min.size() != rows ||
        row_max.size() != rows) {
        throw Error(ErrorKind::DimensionMismatch, "dequantize: inconsistent shapes");
    }
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        auto dst = out.row(i);
        for (std::size_t j = 0; j < cols; ++j) {
            dst[j] = reconstruct(row_min[i], row_max[i], per_column_bits[j], codes[i * cols + j]);
        }
    }
    return out;
}

QuantizedLayer quantize_layer_gptq(const LayerWeights & w, const HessianBundle & h, std::span<const int> bits) {
    w.validate();
    if (h.dim() != w.cols() || h.inverse_factor.rows() != w.cols()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "Hessian dimension " + std::to_string(h.dim()) + " != layer columns " + std::to_string(w.cols()));
    }
    QuantizedLayer q = empty_result(w, bits);
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    const Matrix & u = h.inverse_factor;

    Matrix work = w.matrix;
    for (std::size_t col = 0; col < n; ++col) {
        const double d = u(col, col);
        auto urow = u.row(col);
        for (std::size_t i = 0; i < m; ++i) {
            auto wrow = work.row(i);
            const QuantizedValue qv = quantize_cell(wrow[col], w.row_min[i], w.row_max[i], bits[col]);
            q.codes[i * n + col] = static_cast<std::uint16_t>(qv.code);
            q.dequantized(i, col) = qv.recon;

            const double err = (wrow[col] - qv.recon) / d;
            q.column_loss[col] += err * err;
            if (err != 0.0) {
                for (std::size_t r = col + 1; r < n; ++r) {
                    wrow[r] -= err * urow[r];
                }
            }
        }
    }
    return q;
}

QuantizedLayer quantize_layer_rtn(const LayerWeights & w, std::span<const int> bits) {
    w.validate();
    QuantizedLayer q = empty_result(w, bits);
    for (std::size_t i = 0; i < q.rows; ++i) {
        for (std::size_t j = 0; j < q.cols; ++j) {
            const QuantizedValue qv = quantize_cell(w.matrix(i, j), w.row_min[i], w.row_max[i], bits[j]);
            q.codes[i * q.cols + j] = static_cast<std::uint16_t>(qv.code);
            q.dequantized(i, j) = qv.recon;
        }
    }
    // no meaningful per-column split without the sequential factorization
    q.column_loss.clear();
    return q;
}

double measured_layer_loss(const Matrix & original, const Matrix & dequantized, const Matrix & hessian) {
    if (original.rows() != dequantized.rows() || original.cols() != dequantized.cols() ||
        hessian.rows() != original.cols() || !hessian.square()) {
        throw Error(ErrorKind::DimensionMismatch, "measured_layer_loss: inconsistent shapes");
    }
    const std::size_t n = original.cols();
    std::vector<double> dw(n);
    double total = 0.0;
    for (std::size_t i = 0; i < original.rows(); ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n; ++j) {
            dw[j] = original(i, j) - dequantized(i, j);
            any |= dw[j] != 0.0;
        }
        if (!any) {
            continue;
        }
        for (std::size_t a = 0; a < n; ++a) {
            if (dw[a] == 0.0) {
                continue;
            }
            auto hrow = hessian.row(a);
            double s = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                s += hrow[b] * dw[b];
            }
            total += dw[a] * s;
        }
    }
    return std::max(total, 0.0);
}

double measured_layer_loss(const LayerWeights & original, const QuantizedLayer & quantized, const HessianBundle & h) {
    return measured_layer_loss(original.matrix, quantized.dequantized, h.hessian);
}

BaqResult baq_quantize_layer(const LayerWeights & w, const HessianBundle & h, double r_ref, const BaqOptions & options) {
    if (!(r_ref >= 0.0 && r_ref <= kMaxBits)) {
        throw Error(ErrorKind::InvalidArgument, "target average bits must lie in [0, 15]");
    }
    BaqResult out;
    out.sensitivity = weight_sensitivities(w, h.inv_diag, options.degenerate_rows);
    out.allocation = allocate_for_target(out.sensitivity.per_column, r_ref, options.l_init, options.ref_loss_mode);
    out.layer = quantize_layer_gptq(w, h, out.allocation.per_column_bits);
    return out;
}

QuantizedLayer quantize_layer_uniform(const LayerWeights & w, const HessianBundle & h, double r_ref) {
    const std::vector<int> bits(w.cols(), round_bits(r_ref));
    return quantize_layer_gptq(w, h, bits);
}

} // namespace baq
