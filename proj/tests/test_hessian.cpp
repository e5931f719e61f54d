#include "baq/error.hpp"
#include "baq/hessian.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace baq {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix m(r, c);
    for (double & v : m.data()) {
        v = normal(rng);
    }
    return m;
}

TEST(Accumulate, ZeroChunkOnlyCountsSamples) {
    CalibrationGram g(3);
    accumulate(g, Matrix(3, 4));
    EXPECT_EQ(g.samples, 4u);
    EXPECT_EQ(g.gram, Matrix(3, 3));
}

TEST(Accumulate, RankOneOuterProduct) {
    CalibrationGram g(2);
    accumulate(g, Matrix::from_rows({{1}, {0}}));
    EXPECT_EQ(g.gram, Matrix::from_rows({{1, 0}, {0, 0}}));
    EXPECT_EQ(g.samples, 1u);
}

TEST(Accumulate, ChunkingMatchesConcatenation) {
    const Matrix x = random_matrix(5, 12, 3);
    CalibrationGram whole(5);
    accumulate(whole, x);

    CalibrationGram split(5);
    for (std::size_t start : {0u, 5u}) {
        const std::size_t len = start == 0 ? 5 : 7;
        Matrix part(5, len);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t k = 0; k < len; ++k) {
                part(i, k) = x(i, start + k);
            }
        }
        accumulate(split, part);
    }
    EXPECT_EQ(split.samples, 12u);
    EXPECT_LE(oracle::rel_frobenius_diff(split.gram, whole.gram), 1e-9);
    EXPECT_LE(oracle::rel_frobenius_diff(whole.gram, oracle::naive_multiply(x, oracle::naive_transpose(x))), 1e-12);
}

TEST(Accumulate, DimensionMismatch) {
    CalibrationGram g(3);
    try {
        accumulate(g, Matrix(2, 1));
        FAIL();
    } catch (const Error & e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(BuildHessian, HalfIdentityGramGivesIdentity) {
    CalibrationGram g(3);
    g.gram = Matrix::diagonal(std::vector<double>{0.5, 0.5, 0.5});
    g.samples = 1;
    const HessianBundle h = build_hessian(g, 0.0);
    EXPECT_EQ(h.hessian, Matrix::identity(3));
    for (double d : h.inv_diag) {
        EXPECT_DOUBLE_EQ(d, 1.0);
    }
    EXPECT_EQ(h.damping_used, 0.0);
}

TEST(BuildHessian, DiagonalGramInverseDiagonal) {
    const double a = 3.0;
    const double b = 0.25;
    CalibrationGram g(2);
    g.gram = Matrix::diagonal(std::vector<double>{0.5 * a, 0.5 * b});
    g.samples = 1;
    const HessianBundle h = build_hessian(g, 0.0);
    EXPECT_NEAR(h.inv_diag[0], 1.0 / a, 1e-12);
    EXPECT_NEAR(h.inv_diag[1], 1.0 / b, 1e-12);
}

TEST(BuildHessian, DampingRestoresDefiniteness) {
    CalibrationGram g(3);
    accumulate(g, Matrix::from_rows({{1}, {1}, {0}})); // rank one
    EXPECT_THROW(build_hessian(g, 0.0), Error);
    const HessianBundle h = build_hessian(g, 0.01);
    EXPECT_GT(h.damping_used, 0.0);
    // lambda = 1% of mean(diag(2 G)) = 0.01 * (2 + 2 + 0) / 3
    EXPECT_NEAR(h.damping_used, 0.01 * 4.0 / 3.0, 1e-15);
    for (double d : h.inv_diag) {
        EXPECT_GT(d, 0.0);
    }
}

TEST(BuildHessian, RequiresSamples) {
    CalibrationGram g(2);
    EXPECT_THROW(build_hessian(g, 0.01), Error);
}

TEST(BuildHessian, DiagonalInvariantExact) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> diag(7);
        for (double & d : diag) {
            d = u(rng);
        }
        const HessianBundle h = hessian_from_matrix(Matrix::diagonal(diag));
        for (std::size_t q = 0; q < diag.size(); ++q) {
            EXPECT_NEAR(h.inv_diag[q], 1.0 / diag[q], 1e-12 / diag[q]);
        }
    }
}

TEST(BuildHessian, FirstEntryMatchesFullInverse) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Matrix hm = oracle::random_spd(9, seed + 50);
        const HessianBundle h = hessian_from_matrix(hm);
        const Matrix inv = invert_spd(hm);
        EXPECT_NEAR(h.inv_diag[0], inv(0, 0), 1e-9 * inv(0, 0));
        // the last pivot sees no remaining columns: 1 / H_{N-1,N-1}
        EXPECT_NEAR(h.inv_diag[8], 1.0 / hm(8, 8), 1e-9 / hm(8, 8));
        for (double d : h.inv_diag) {
            EXPECT_GT(d, 0.0);
        }
    }
}

TEST(BuildHessian, InverseFactorReconstructsInverse) {
    const Matrix hm = oracle::random_spd(6, 77);
    const HessianBundle h = hessian_from_matrix(hm);
    // U^T U = H^{-1}
    const Matrix utu = oracle::naive_multiply(oracle::naive_transpose(h.inverse_factor), h.inverse_factor);
    EXPECT_LE(oracle::rel_frobenius_diff(utu, invert_spd(hm)), 1e-10);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            EXPECT_EQ(h.inverse_factor(i, j), 0.0);
        }
    }
}

} // namespace
} // namespace baq
