#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace baq {

using Rng = std::mt19937_64;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool square() const noexcept { return rows_ == cols_; }

    double & operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool operator==(const Matrix & other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Lower-triangular Cholesky factor L with a = L * L^T.
class LowerTriangular {
public:
    explicit LowerTriangular(Matrix factor) : factor_(std::move(factor)) {}

    std::size_t dim() const noexcept { return factor_.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return factor_(i, j); }
    const Matrix & matrix() const noexcept { return factor_; }

private:
    Matrix factor_;
};

enum class TransformMode {
    Mild,     // QR of I + 1e-2 G
    Moderate, // QR of I + 1e-1 G
    Haar,     // QR of G
};

double transform_sigma(TransformMode mode);
std::string_view transform_mode_name(TransformMode mode);
TransformMode parse_transform_mode(std::string_view name);

Matrix transpose(const Matrix & a);
Matrix multiply(const Matrix & a, const Matrix & b);
// a^T * b without materializing the transpose
Matrix multiply_transposed_left(const Matrix & a, const Matrix & b);
Matrix subtract(const Matrix & a, const Matrix & b);
double frobenius_norm(const Matrix & a);
bool all_finite(const Matrix & a);
bool is_symmetric(const Matrix & a, double rel_tol);

// ||a^T a - I||_F
double orthogonality_residual(const Matrix & a);

LowerTriangular cholesky(const Matrix & a);
Matrix invert_spd(const Matrix & a);

// Thin Householder QR of a (rows >= cols). Returns Q (rows x cols) with the
// sign convention that diag(R) is non-negative.
Matrix orthonormal_factor(const Matrix & a);

Matrix random_orthogonal_block(std::size_t p, TransformMode mode, Rng & rng);
Matrix random_orthogonal_block(std::size_t p, TransformMode mode, std::uint64_t seed);

Matrix block_diagonal(std::span<const Matrix> blocks);

} // namespace baq
