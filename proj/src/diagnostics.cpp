#include "baq/diagnostics.hpp"

#include "baq/error.hpp"
#include "baq/packfmt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace baq {

namespace {

constexpr const char * kReportHeader = "layer_id,ratio_c,ratio_l,avg_bits,loss_baq,loss_uniform";

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    // ties share their average rank
    for (std::size_t k = 0; k < order.size();) {
        std::size_t e = k;
        while (e + 1 < order.size() && v[order[e + 1]] == v[order[k]]) {
            ++e;
        }
        const double avg = 0.5 * static_cast<double>(k + e);
        for (std::size_t t = k; t <= e; ++t) {
            r[order[t]] = avg;
        }
        k = e + 1;
    }
    return r;
}

double parse_real(const std::string & field, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size()) {
            throw std::invalid_argument(field);
        }
        return v;
    } catch (const std::exception &) {
        throw Error(ErrorKind::InvalidArgument,
                    "report line " + std::to_string(line) + ": '" + field + "' is not a number");
    }
}

} // namespace

std::map<int, std::size_t> bitwidth_histogram(std::span<const int> bits) {
    std::map<int, std::size_t> counts;
    for (int b : bits) {
        if (b < 0 || b > kMaxBits) {
            throw Error(ErrorKind::InvalidArgument, "width " + std::to_string(b) + " outside [0, 15]");
        }
        ++counts[b];
    }
    return counts;
}

std::map<int, std::size_t> weight_bitwidth_histogram(std::span<const int> bits, std::size_t rows) {
    auto counts = bitwidth_histogram(bits);
    for (auto & [width, count] : counts) {
        count *= rows;
    }
    return counts;
}

LayerReport layer_report(std::string layer_id, std::span<const double> c_cols, const BitAllocation & alloc,
                         double loss_baq, double loss_uniform) {
    if (!(loss_baq > 0.0) || !(loss_uniform > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "layer losses must be positive");
    }
    LayerReport r;
    r.layer_id = std::move(layer_id);
    r.ratio_c = loss_ratio(c_cols);
    r.ratio_l = loss_baq / loss_uniform;
    r.avg_bits = alloc.average_bits;
    r.bitwidth_counts = bitwidth_histogram(alloc.per_column_bits);
    r.measured_loss_baq = loss_baq;
    r.measured_loss_uniform = loss_uniform;
    r.predicted_loss_baq = alloc.predicted_loss;
    return r;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string format_report_csv(std::span<const LayerReport> reports) {
    std::string out = kReportHeader;
    out += '\n';
    for (const LayerReport & r : reports) {
        if (r.layer_id.find_first_of(",\n\r") != std::string::npos) {
            throw Error(ErrorKind::InvalidArgument, "layer id '" + r.layer_id + "' cannot be written to CSV");
        }
        out += r.layer_id;
        for (double v : {r.ratio_c, r.ratio_l, r.avg_bits, r.measured_loss_baq, r.measured_loss_uniform}) {
            out += ',';
            out += format_real(v);
        }
        out += '\n';
    }
    return out;
}

void write_report_csv(std::span<const LayerReport> reports, const std::filesystem::path & path) {
    const std::string text = format_report_csv(reports);
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

std::vector<LayerReport> parse_report_csv(const std::string & text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) {
        throw Error(ErrorKind::InvalidArgument, "report is missing its header row");
    }
    std::vector<LayerReport> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::stringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) {
            fields.push_back(f);
        }
        if (fields.size() != 6) {
            throw Error(ErrorKind::InvalidArgument, "report line " + std::to_string(line_no) + " has " +
                                                        std::to_string(fields.size()) + " fields, expected 6");
        }
        LayerReport r;
        r.layer_id = fields[0];
        r.ratio_c = parse_real(fields[1], line_no);
        r.ratio_l = parse_real(fields[2], line_no);
        r.avg_bits = parse_real(fields[3], line_no);
        r.measured_loss_baq = parse_real(fields[4], line_no);
        r.measured_loss_uniform = parse_real(fields[5], line_no);
        out.push_back(std::move(r));
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return NAN;
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorKind::DimensionMismatch, "spearman_correlation: length mismatch");
    }
    const std::size_t n = x.size();
    if (n < 2) {
        return NAN;
    }
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double mean = 0.5 * static_cast<double>(n - 1);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = rx[k] - mean;
        const double dy = ry[k] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        return NAN;
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace baq
