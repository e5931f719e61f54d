#include "baq/allocator.hpp"

#include "baq/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace baq {

namespace {

double sum_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0);
}

void require_positive(std::span<const double> c, const char * what) {
    for (double v : c) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw Error(ErrorKind::InvalidArgument, std::string(what) + ": coefficients must be positive and finite");
        }
    }
}

} // namespace

int round_bits(double raw) {
    // std::round rounds halfway cases away from zero
    const double r = std::round(raw);
    return static_cast<int>(std::clamp(r, 0.0, static_cast<double>(kMaxBits)));
}

SensitivityProfile weight_sensitivities(const LayerWeights & w, std::span<const double> inv_diag,
                                        DegenerateRowPolicy policy) {
    w.validate();
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();
    if (inv_diag.size() != n) {
        throw Error(ErrorKind::DimensionMismatch,
                    "inverse-Hessian diagonal has " + std::to_string(inv_diag.size()) + " entries, layer has " +
                        std::to_string(n) + " columns");
    }
    require_positive(inv_diag, "weight_sensitivities");

    SensitivityProfile out;
    out.per_weight = Matrix(m, n);
    out.per_column.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double range = w.row_max[i] - w.row_min[i];
        if (range == 0.0 && policy == DegenerateRowPolicy::Reject) {
            throw Error(ErrorKind::DegenerateRow, "row " + std::to_string(i) + " has zero range");
        }
        const double numer = range * range / 12.0;
        auto row = out.per_weight.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::max(numer / inv_diag[j], kSensitivityFloor);
        }
    }
    // column sums in row order so the result does not depend on the layout
    for (std::size_t i = 0; i < m; ++i) {
        auto row = out.per_weight.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            out.per_column[j] += row[j];
        }
    }
    return out;
}

RelaxedAllocation relaxed_allocation(std::span<const double> c, double r_sum) {
    require_positive(c, "relaxed_allocation");
    if (!(r_sum >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "relaxed_allocation: budget must be >= 0");
    }

    RelaxedAllocation out;
    out.total_budget = r_sum;
    out.per_index_bits.assign(c.size(), 0.0);
    if (c.empty()) {
        return out;
    }

    std::vector<double> logc(c.size());
    std::transform(c.begin(), c.end(), logc.begin(), [](double v) { return std::log2(v); });
    const auto [min_it, max_it] = std::minmax_element(logc.begin(), logc.end());

    if (r_sum == 0.0) {
        out.water_level = std::exp2(*max_it);
        return out;
    }

    // Water level t = log2(lambda'); the allocated total decreases in t.
    auto allocated = [&](double t) {
        double s = 0.0;
        for (double lc : logc) {
            s += std::max(0.0, 0.5 * (lc - t));
        }
        return s;
    };

    double lo = *min_it - 2.0 * r_sum;
    double hi = *max_it;
    double t = 0.5 * (lo + hi);
    for (int iter = 0; iter < 400; ++iter) {
        t = 0.5 * (lo + hi);
        const double residual = allocated(t) - r_sum;
        if (std::abs(residual) <= 1e-10 || hi - lo <= 1e-15 * std::max(1.0, std::abs(t))) {
            break;
        }
        if (residual > 0.0) {
            lo = t;
        } else {
            hi = t;
        }
    }

    // Polish: on a fixed active set the level has a closed form.
    std::vector<bool> active(c.size());
    for (int pass = 0; pass < 8; ++pass) {
        bool changed = false;
        double sum_log = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < c.size(); ++k) {
            const bool a = logc[k] > t;
            changed |= (pass == 0) || a != active[k];
            active[k] = a;
            if (a) {
                sum_log += logc[k];
                ++count;
            }
        }
        if (!changed || count == 0) {
            break;
        }
        t = (sum_log - 2.0 * r_sum) / static_cast<double>(count);
    }

    for (std::size_t k = 0; k < c.size(); ++k) {
        out.per_index_bits[k] = std::max(0.0, 0.5 * (logc[k] - t));
    }
    out.water_level = std::exp2(t);
    return out;
}

BitAllocation allocate_given_ref_loss(std::span<const double> c_cols, double l_ref) {
    if (!(l_ref > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "reference loss must be positive");
    }
    BitAllocation out;
    out.reference_loss = l_ref;
    out.per_column_bits.resize(c_cols.size());
    long total = 0;
    for (std::size_t j = 0; j < c_cols.size(); ++j) {
        const int r = round_bits(0.5 * std::log2(c_cols[j] / l_ref));
        out.per_column_bits[j] = r;
        total += r;
    }
    out.average_bits = c_cols.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(c_cols.size());
    out.predicted_loss = predicted_total_loss(c_cols, std::span<const int>(out.per_column_bits));
    return out;
}

double default_initial_ref_loss(std::span<const double> c_cols, double r_ref) {
    if (c_cols.empty()) {
        return 1.0;
    }
    const double mean = sum_of(c_cols) / static_cast<double>(c_cols.size());
    return mean * std::exp2(-2.0 * r_ref);
}

double estimate_ref_loss(std::span<const double> c_cols, double l_init, double r_ref, RefLossMode mode) {
    if (!(l_init > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "initial reference loss must be positive");
    }
    if (!(r_ref >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "target average bits must be >= 0");
    }

    double r_init = allocate_given_ref_loss(c_cols, l_init).average_bits;
    double l_ref = l_init * std::exp2(2.0 * (r_init - r_ref));
    if (mode == RefLossMode::SingleStep) {
        return l_ref;
    }

    double best_l = l_ref;
    double best_gap = INFINITY;
    for (int iter = 0; iter < kRefLossMaxIterations; ++iter) {
        const double avg = allocate_given_ref_loss(c_cols, l_ref).average_bits;
        const double gap = std::abs(avg - r_ref);
        if (gap < best_gap) {
            best_gap = gap;
            best_l = l_ref;
        }
        if (gap <= kRefLossTolerance) {
            break;
        }
        l_ref *= std::exp2(2.0 * (avg - r_ref));
    }
    return best_l;
}

BitAllocation allocate_for_target(std::span<const double> c_cols, double r_ref, std::optional<double> l_init,
                                  RefLossMode mode) {
    const double start = l_init.value_or(default_initial_ref_loss(c_cols, r_ref));
    const double l_ref = estimate_ref_loss(c_cols, start, r_ref, mode);
    return allocate_given_ref_loss(c_cols, l_ref);
}

double predicted_total_loss(std::span<const double> c, std::span<const double> bits) {
    if (c.size() != bits.size()) {
        throw Error(ErrorKind::DimensionMismatch, "predicted_total_loss: length mismatch");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        s += c[k] * std::exp2(-2.0 * bits[k]);
    }
    return s;
}

double predicted_total_loss(std::span<const double> c, std::span<const int> bits) {
    if (c.size() != bits.size()) {
        throw Error(ErrorKind::DimensionMismatch, "predicted_total_loss: length mismatch");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        s += c[k] * std::ldexp(1.0, -2 * bits[k]);
    }
    return s;
}

double loss_ratio(std::span<const double> c) {
    require_positive(c, "loss_ratio");
    if (c.empty()) {
        return 1.0;
    }
    const double n = static_cast<double>(c.size());
    const double cmax = *std::max_element(c.begin(), c.end());
    double mean_log = 0.0;
    double mean_scaled = 0.0;
    for (double v : c) {
        mean_log += std::log(v / cmax);
        mean_scaled += v / cmax;
    }
    mean_log /= n;
    mean_scaled /= n;
    return std::min(1.0, std::exp(mean_log - std::log(mean_scaled)));
}

} // namespace baq
