#include "baq/linalg.hpp"

#include "baq/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace baq {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw Error(ErrorKind::DimensionMismatch,
                    "matrix data length " + std::to_string(data_.size()) + " != " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) {
        m(i, i) = diag[i];
    }
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n_rows = rows.size();
    const std::size_t n_cols = n_rows ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n_rows * n_cols);
    for (const auto & r : rows) {
        if (r.size() != n_cols) {
            throw Error(ErrorKind::DimensionMismatch, "ragged row list");
        }
        data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(n_rows, n_cols, std::move(data));
}

double transform_sigma(TransformMode mode) {
    switch (mode) {
        case TransformMode::Mild:     return 1e-2;
        case TransformMode::Moderate: return 1e-1;
        case TransformMode::Haar:     return INFINITY;
    }
    return 0.0;
}

std::string_view transform_mode_name(TransformMode mode) {
    switch (mode) {
        case TransformMode::Mild:     return "mild";
        case TransformMode::Moderate: return "moderate";
        case TransformMode::Haar:     return "haar";
    }
    return "unknown";
}

TransformMode parse_transform_mode(std::string_view name) {
    if (name == "mild") {
        return TransformMode::Mild;
    }
    if (name == "moderate") {
        return TransformMode::Moderate;
    }
    if (name == "haar") {
        return TransformMode::Haar;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown transform mode '" + std::string(name) + "'");
}

Matrix transpose(const Matrix & a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

Matrix multiply(const Matrix & a, const Matrix & b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "multiply: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Matrix multiply_transposed_left(const Matrix & a, const Matrix & b) {
    if (a.rows() != b.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "multiply_transposed_left: row counts differ");
    }
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto arow = a.row(k);
        auto brow = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = arow[i];
            if (aki == 0.0) {
                continue;
            }
            auto out = c.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out[j] += aki * brow[j];
            }
        }
    }
    return c;
}

Matrix subtract(const Matrix & a, const Matrix & b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "subtract: shapes differ");
    }
    Matrix c = a;
    auto cd = c.data();
    auto bd = b.data();
    for (std::size_t k = 0; k < cd.size(); ++k) {
        cd[k] -= bd[k];
    }
    return c;
}

double frobenius_norm(const Matrix & a) {
    double sum = 0.0;
    for (double v : a.data()) {
        sum += v * v;
    }
    return std::sqrt(sum);
}

bool all_finite(const Matrix & a) {
    return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

bool is_symmetric(const Matrix & a, double rel_tol) {
    if (!a.square()) {
        return false;
    }
    double scale = 0.0;
    for (double v : a.data()) {
        scale = std::max(scale, std::abs(v));
    }
    const double tol = rel_tol * std::max(scale, 1e-300);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            if (std::abs(a(i, j) - a(j, i)) > tol) {
                return false;
            }
        }
    }
    return true;
}

double orthogonality_residual(const Matrix & a) {
    Matrix gram = multiply_transposed_left(a, a);
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        gram(i, i) -= 1.0;
    }
    return frobenius_norm(gram);
}

LowerTriangular cholesky(const Matrix & a) {
    if (!a.square()) {
        throw Error(ErrorKind::DimensionMismatch, "cholesky: matrix is not square");
    }
    if (!is_symmetric(a, 1e-8)) {
        throw Error(ErrorKind::InvalidArgument, "cholesky: matrix is not symmetric");
    }
    const std::size_t n = a.rows();
    Matrix l(n, n);
    // left-looking: column j uses the already finished columns 0..j-1
    for (std::size_t j = 0; j < n; ++j) {
        auto lj = l.row(j);
        double pivot = a(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            pivot -= lj[k] * lj[k];
        }
        if (!(pivot > 0.0)) {
            throw Error(ErrorKind::NotPositiveDefinite,
                        "pivot " + std::to_string(pivot) + " at index " + std::to_string(j));
        }
        const double d = std::sqrt(pivot);
        lj[j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            auto li = l.row(i);
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                s -= li[k] * lj[k];
            }
            li[j] = s / d;
        }
    }
    return LowerTriangular(std::move(l));
}

Matrix invert_spd(const Matrix & a) {
    const LowerTriangular l = cholesky(a);
    const std::size_t n = a.rows();

    // Linv = L^{-1} by forward substitution, column by column
    Matrix linv(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = c; i < n; ++i) {
            double s = (i == c) ? 1.0 : 0.0;
            for (std::size_t k = c; k < i; ++k) {
                s -= l(i, k) * linv(k, c);
            }
            linv(i, c) = s / l(i, i);
        }
    }

    // a^{-1} = Linv^T Linv
    Matrix inv = multiply_transposed_left(linv, linv);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = s;
            inv(j, i) = s;
        }
    }
    return inv;
}

Matrix orthonormal_factor(const Matrix & a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n) {
        throw Error(ErrorKind::DimensionMismatch, "orthonormal_factor: needs rows >= cols");
    }

    // Householder vectors are stored column-wise in r below the diagonal.
    Matrix r = a;
    std::vector<double> beta(n, 0.0);
    std::vector<double> rdiag(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            norm += r(i, k) * r(i, k);
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            rdiag[k] = 0.0;
            continue;
        }
        if (k + 1 == m) {
            // a single remaining entry needs no reflection
            rdiag[k] = r(k, k);
            continue;
        }
        const double alpha = r(k, k) >= 0.0 ? -norm : norm;
        r(k, k) -= alpha;
        double vnorm2 = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            vnorm2 += r(i, k) * r(i, k);
        }
        beta[k] = 2.0 / vnorm2;
        rdiag[k] = alpha;
        for (std::size_t j = k + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) {
                s += r(i, k) * r(i, j);
            }
            s *= beta[k];
            for (std::size_t i = k; i < m; ++i) {
                r(i, j) -= s * r(i, k);
            }
        }
    }

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I
    Matrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) {
        q(j, j) = 1.0;
    }
    for (std::size_t kk = n; kk-- > 0;) {
        if (beta[kk] == 0.0) {
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = kk; i < m; ++i) {
                s += r(i, kk) * q(i, j);
            }
            s *= beta[kk];
            for (std::size_t i = kk; i < m; ++i) {
                q(i, j) -= s * r(i, kk);
            }
        }
    }

    // Flip columns so that diag(R) >= 0.
    for (std::size_t j = 0; j < n; ++j) {
        if (rdiag[j] < 0.0) {
            for (std::size_t i = 0; i < m; ++i) {
                q(i, j) = -q(i, j);
            }
        }
    }
    return q;
}

Matrix random_orthogonal_block(std::size_t p, TransformMode mode, Rng & rng) {
    if (p == 0) {
        throw Error(ErrorKind::InvalidArgument, "orthogonal block size must be >= 1");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(p, p);
    for (double & v : g.data()) {
        v = normal(rng);
    }
    if (mode != TransformMode::Haar) {
        const double sigma = transform_sigma(mode);
        for (double & v : g.data()) {
            v *= sigma;
        }
        for (std::size_t i = 0; i < p; ++i) {
            g(i, i) += 1.0;
        }
    }
    return orthonormal_factor(g);
}

Matrix random_orthogonal_block(std::size_t p, TransformMode mode, std::uint64_t seed) {
    Rng rng(seed);
    return random_orthogonal_block(p, mode, rng);
}

Matrix block_diagonal(std::span<const Matrix> blocks) {
    std::size_t n = 0;
    for (const Matrix & b : blocks) {
        if (!b.square()) {
            throw Error(ErrorKind::DimensionMismatch, "block_diagonal: block is not square");
        }
        n += b.rows();
    }
    Matrix out(n, n);
    std::size_t offset = 0;
    for (const Matrix & b : blocks) {
        for (std::size_t i = 0; i < b.rows(); ++i) {
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out(offset + i, offset + j) = b(i, j);
            }
        }
        offset += b.rows();
    }
    return out;
}

} // namespace baq
