#include "baq/transform.hpp"

#include "baq/allocator.hpp"
#include "baq/error.hpp"
#include "baq/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace baq {

namespace {

Matrix random_block_diagonal(std::size_t dim, std::size_t p, TransformMode mode, Rng & rng) {
    std::vector<Matrix> blocks;
    for (std::size_t offset = 0; offset < dim; offset += p) {
        blocks.push_back(random_orthogonal_block(std::min(p, dim - offset), mode, rng));
    }
    return block_diagonal(blocks);
}

} // namespace

TransformPair TransformPair::identity(std::size_t m, std::size_t n) {
    TransformPair t;
    t.u = Matrix::identity(m);
    t.v = Matrix::identity(n);
    t.block_size = 1;
    return t;
}

TransformPair build_transforms(std::size_t m, std::size_t n, std::size_t p, TransformMode mode, std::uint64_t seed) {
    if (p < 1 || p > std::min(m, n)) {
        throw Error(ErrorKind::InvalidArgument,
                    "block size " + std::to_string(p) + " must lie in [1, min(M, N)]");
    }
    Rng rng(seed);
    TransformPair t;
    t.u = random_block_diagonal(m, p, mode, rng);
    t.v = random_block_diagonal(n, p, mode, rng);
    t.block_size = p;
    t.mode = mode;
    t.seed = seed;
    return t;
}

std::pair<LayerWeights, HessianBundle> apply_transform(const LayerWeights & w, const HessianBundle & h,
                                                       const TransformPair & t) {
    if (t.u.rows() != w.rows() || t.v.rows() != w.cols() || h.dim() != w.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "transform dimensions do not match the layer");
    }
    Matrix w_t = multiply(multiply_transposed_left(t.u, w.matrix), t.v);
    Matrix h_t = multiply(multiply_transposed_left(t.v, h.hessian), t.v);
    // congruence keeps symmetry exactly in theory; remove the rounding skew
    for (std::size_t i = 0; i < h_t.rows(); ++i) {
        for (std::size_t j = i + 1; j < h_t.cols(); ++j) {
            const double s = 0.5 * (h_t(i, j) + h_t(j, i));
            h_t(i, j) = s;
            h_t(j, i) = s;
        }
    }
    return {LayerWeights::from_matrix(std::move(w_t)), hessian_from_matrix(std::move(h_t), h.damping_used)};
}

Matrix inverse_transform(const Matrix & w_transformed, const TransformPair & t) {
    return multiply(t.u, multiply(w_transformed, transpose(t.v)));
}

std::vector<double> estimate_sensitivity_from_loss(std::span<const double> per_column_loss, double r) {
    if (!(r >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "probe bitwidth must be >= 0");
    }
    const double scale = std::exp2(2.0 * r);
    std::vector<double> c(per_column_loss.size());
    for (std::size_t j = 0; j < c.size(); ++j) {
        c[j] = std::max(per_column_loss[j], kSensitivityFloor) * scale;
    }
    return c;
}

std::vector<double> probe_sensitivities(const LayerWeights & w, const HessianBundle & h, int probe_bits) {
    const std::vector<int> bits(w.cols(), probe_bits);
    const QuantizedLayer probe = quantize_layer_gptq(w, h, bits);
    return estimate_sensitivity_from_loss(probe.column_loss, probe_bits);
}

} // namespace baq
