#include "baq/layer.hpp"

#include "baq/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace baq {

double narrow_lower_bound(double v) {
    float f = static_cast<float>(v);
    if (static_cast<double>(f) > v) {
        f = std::nextafter(f, -std::numeric_limits<float>::infinity());
    }
    return f;
}

double narrow_upper_bound(double v) {
    float f = static_cast<float>(v);
    if (static_cast<double>(f) < v) {
        f = std::nextafter(f, std::numeric_limits<float>::infinity());
    }
    return f;
}

LayerWeights LayerWeights::from_matrix(Matrix w) {
    if (!all_finite(w)) {
        throw Error(ErrorKind::InvalidArgument, "weight matrix contains non-finite values");
    }
    LayerWeights out;
    out.row_min.resize(w.rows());
    out.row_max.resize(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        auto r = w.row(i);
        double lo = 0.0;
        double hi = 0.0;
        if (!r.empty()) {
            const auto [mn, mx] = std::minmax_element(r.begin(), r.end());
            lo = *mn;
            hi = *mx;
        }
        out.row_min[i] = narrow_lower_bound(lo);
        out.row_max[i] = narrow_upper_bound(hi);
    }
    out.matrix = std::move(w);
    return out;
}

void LayerWeights::validate() const {
    if (row_min.size() != rows() || row_max.size() != rows()) {
        throw Error(ErrorKind::DimensionMismatch, "row bounds do not match the weight row count");
    }
    for (std::size_t i = 0; i < rows(); ++i) {
        if (!(row_min[i] <= row_max[i])) {
            throw Error(ErrorKind::InvalidRange, "row " + std::to_string(i) + " has min > max");
        }
    }
}

} // namespace baq
