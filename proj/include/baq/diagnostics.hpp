#pragma once

#include "baq/allocator.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace baq {

// width -> number of columns at that width
std::map<int, std::size_t> bitwidth_histogram(std::span<const int> bits);

// width -> number of weights; each column contributes `rows` weights
std::map<int, std::size_t> weight_bitwidth_histogram(std::span<const int> bits, std::size_t rows);

struct LayerReport {
    std::string layer_id;
    double ratio_c = 1.0;
    double ratio_l = 1.0;
    double avg_bits = 0.0;
    std::map<int, std::size_t> bitwidth_counts;
    double measured_loss_baq = 0.0;
    double measured_loss_uniform = 0.0;
    double predicted_loss_baq = 0.0;
};

LayerReport layer_report(std::string layer_id, std::span<const double> c_cols, const BitAllocation & alloc,
                         double loss_baq, double loss_uniform);

// layer_id,ratio_c,ratio_l,avg_bits,loss_baq,loss_uniform
std::string format_report_csv(std::span<const LayerReport> reports);
void write_report_csv(std::span<const LayerReport> reports, const std::filesystem::path & path);
// Reads the columns written above; bitwidth_counts is not part of the CSV.
std::vector<LayerReport> parse_report_csv(const std::string & text);

// %.17g, so the value round-trips through text exactly
std::string format_real(double v);

double median(std::vector<double> values);
double spearman_correlation(std::span<const double> x, std::span<const double> y);

} // namespace baq
