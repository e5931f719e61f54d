#include "baq/synth.hpp"

#include "baq/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace baq {

namespace {

double to_f32(double v) {
    return static_cast<double>(static_cast<float>(v));
}

} // namespace

SynthLayer make_synth_layer(const SynthConfig & config) {
    if (config.rows == 0 || config.cols == 0) {
        throw Error(ErrorKind::InvalidArgument, "synthetic layer needs rows and cols >= 1");
    }
    if (!(config.decades >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "decades must be >= 0");
    }
    if (!(config.condition >= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "condition number must be >= 1");
    }
    const std::size_t m = config.rows;
    const std::size_t n = config.cols;
    const std::size_t p = config.samples ? config.samples : 2 * n;
    if (p < n) {
        throw Error(ErrorKind::InvalidArgument, "calibration needs at least as many samples as columns");
    }

    Rng rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SynthLayer out;
    out.weights = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        const double range = std::pow(10.0, config.decades * unit(rng));
        for (double & v : out.weights.row(i)) {
            v = to_f32(range * (unit(rng) - 0.5));
        }
    }

    std::vector<double> spectrum(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
        spectrum[k] = std::pow(config.condition, t);
    }
    std::shuffle(spectrum.begin(), spectrum.end(), rng);

    const Matrix basis = random_orthogonal_block(n, TransformMode::Mild, rng);
    Matrix gaussian(p, n);
    for (double & v : gaussian.data()) {
        v = normal(rng);
    }
    const Matrix samples = orthonormal_factor(gaussian); // p x n

    // X = basis * diag(sqrt(spectrum)) * samples^T
    Matrix scaled = basis;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = scaled.row(i);
        for (std::size_t k = 0; k < n; ++k) {
            r[k] *= std::sqrt(spectrum[k]);
        }
    }
    out.calibration = multiply(scaled, transpose(samples));
    for (double & v : out.calibration.data()) {
        v = to_f32(v);
    }
    return out;
}

} // namespace baq
