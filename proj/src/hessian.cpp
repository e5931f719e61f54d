#include "baq/hessian.hpp"

#include "baq/error.hpp"

#include <string>

namespace baq {

void accumulate(CalibrationGram & gram, const Matrix & x_chunk) {
    if (x_chunk.rows() != gram.dim) {
        throw Error(ErrorKind::DimensionMismatch,
                    "calibration chunk has " + std::to_string(x_chunk.rows()) + " rows, expected " +
                        std::to_string(gram.dim));
    }
    const std::size_t n = gram.dim;
    const std::size_t k = x_chunk.cols();
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = x_chunk.row(i);
        for (std::size_t j = i; j < n; ++j) {
            auto xj = x_chunk.row(j);
            double s = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                s += xi[t] * xj[t];
            }
            gram.gram(i, j) += s;
            if (j != i) {
                gram.gram(j, i) += s;
            }
        }
    }
    gram.samples += k;
}

HessianBundle hessian_from_matrix(Matrix hessian, double damping_used) {
    const Matrix inverse = invert_spd(hessian);
    const LowerTriangular l = cholesky(inverse);
    const std::size_t n = hessian.rows();

    HessianBundle out;
    out.inverse_factor = transpose(l.matrix());
    out.inv_diag.resize(n);
    for (std::size_t q = 0; q < n; ++q) {
        out.inv_diag[q] = l(q, q) * l(q, q);
    }
    out.hessian = std::move(hessian);
    out.damping_used = damping_used;
    return out;
}

HessianBundle build_hessian(const CalibrationGram & gram, double percdamp) {
    if (gram.samples < 1) {
        throw Error(ErrorKind::InvalidArgument, "calibration gram has no samples");
    }
    if (!(percdamp >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "percdamp must be >= 0");
    }
    const std::size_t n = gram.dim;
    Matrix h(n, n);
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            h(i, j) = 2.0 * gram.gram(i, j);
        }
        trace += h(i, i);
    }
    const double lambda = n ? percdamp * trace / static_cast<double>(n) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        h(i, i) += lambda;
    }
    return hessian_from_matrix(std::move(h), lambda);
}

} // namespace baq
