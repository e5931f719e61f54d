#pragma once

#include "baq/layer.hpp"
#include "baq/linalg.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace baq {

// Largest per-column width; it must fit the 4-bit column header.
inline constexpr int kMaxBits = 15;

// Sensitivity floor for rows whose grid has zero range.
inline constexpr double kSensitivityFloor = 1e-30;

// c_ij and the column sums C_j.
struct SensitivityProfile {
    Matrix per_weight;
    std::vector<double> per_column;
};

struct BitAllocation {
    std::vector<int> per_column_bits;
    double average_bits = 0.0;
    double predicted_loss = 0.0;
    double reference_loss = 0.0;
};

// Solution of the relaxed (real-valued) problem: minimize sum c_k 2^{-2 R_k}
// subject to sum R_k = budget, R_k >= 0.
struct RelaxedAllocation {
    std::vector<double> per_index_bits;
    double water_level = 0.0;
    double total_budget = 0.0;
};

enum class DegenerateRowPolicy {
    Reject, // throw DegenerateRow
    Floor,  // clamp c_ij to kSensitivityFloor
};

enum class RefLossMode {
    SingleStep, // one correction step
    Iterate,    // repeat the correction until the average is within kRefLossTolerance
};

inline constexpr double kRefLossTolerance = 0.05;
inline constexpr int kRefLossMaxIterations = 10;

SensitivityProfile weight_sensitivities(const LayerWeights & w, std::span<const double> inv_diag,
                                        DegenerateRowPolicy policy = DegenerateRowPolicy::Reject);

RelaxedAllocation relaxed_allocation(std::span<const double> c, double r_sum);

// Integer widths from a reference loss: round(1/2 log2(C_j / l_ref)) clamped to [0, 15].
BitAllocation allocate_given_ref_loss(std::span<const double> c_cols, double l_ref);

// Mean(C) * 2^{-2 r_ref}; any positive start works, this one starts close.
double default_initial_ref_loss(std::span<const double> c_cols, double r_ref);

double estimate_ref_loss(std::span<const double> c_cols, double l_init, double r_ref,
                         RefLossMode mode = RefLossMode::SingleStep);

// Target average bits -> integer allocation (reference-loss estimation followed
// by the integer assignment).
BitAllocation allocate_for_target(std::span<const double> c_cols, double r_ref,
                                  std::optional<double> l_init = std::nullopt,
                                  RefLossMode mode = RefLossMode::SingleStep);

double predicted_total_loss(std::span<const double> c, std::span<const double> bits);
double predicted_total_loss(std::span<const double> c, std::span<const int> bits);

// Geometric mean over arithmetic mean, in (0, 1].
double loss_ratio(std::span<const double> c);

// Ties go away from zero.
int round_bits(double raw);

} // namespace baq
