#include "cli.hpp"

#include "baq/allocator.hpp"
#include "baq/diagnostics.hpp"
#include "baq/error.hpp"
#include "baq/hessian.hpp"
#include "baq/packfmt.hpp"
#include "baq/quantizer.hpp"
#include "baq/synth.hpp"
#include "baq/transform.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;

namespace baq::cli {

namespace {

constexpr const char * kWeightsFile = "weights.baqt";
constexpr const char * kCalibFile = "calib.baqt";

// Raised when a post-condition the tool checks itself does not hold.
class InternalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    double target_bits = 2.0;
    double percdamp = kDefaultPercDamp;
    std::uint64_t seed = 0;
    std::size_t block_size = kDefaultBlockSize;
    std::optional<std::string> transform_mode;
    bool ref_loss_iterate = false;
    std::vector<std::string> inputs;
    std::string output;
    unsigned jobs = 0;

    void validate() const {
        if (!(target_bits >= 0.0 && target_bits <= kMaxBits)) {
            throw Error(ErrorKind::InvalidArgument, "--target-bits must lie in [0, 15]");
        }
        if (!(percdamp >= 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "--percdamp must be >= 0");
        }
    }
};

struct LayerInput {
    std::string id;
    LayerWeights weights;
    CalibrationGram gram;
};

// Each input is either a layer directory (holding weights.baqt) or a directory
// whose sub-directories are layers. Layers are returned sorted by id.
std::vector<fs::path> discover_layer_dirs(const std::vector<std::string> & inputs) {
    std::vector<fs::path> dirs;
    for (const std::string & in : inputs) {
        const fs::path p(in);
        if (!fs::is_directory(p)) {
            throw Error(ErrorKind::Io, "input '" + in + "' is not a directory");
        }
        if (fs::exists(p / kWeightsFile) || fs::exists(p / kCalibFile)) {
            dirs.push_back(p);
            continue;
        }
        std::vector<fs::path> sub;
        for (const auto & entry : fs::directory_iterator(p)) {
            if (entry.is_directory() &&
                (fs::exists(entry.path() / kWeightsFile) || fs::exists(entry.path() / kCalibFile))) {
                sub.push_back(entry.path());
            }
        }
        if (sub.empty()) {
            throw Error(ErrorKind::Io, "input '" + in + "' contains no layer directories");
        }
        std::sort(sub.begin(), sub.end());
        dirs.insert(dirs.end(), sub.begin(), sub.end());
    }
    return dirs;
}

LayerInput load_layer(const fs::path & dir) {
    LayerInput layer;
    layer.id = dir.filename().string();
    if (layer.id.empty()) {
        layer.id = dir.parent_path().filename().string();
    }
    const fs::path wpath = dir / kWeightsFile;
    const fs::path cpath = dir / kCalibFile;
    if (!fs::exists(wpath)) {
        throw Error(ErrorKind::Io, "layer '" + layer.id + "': missing " + wpath.string());
    }
    if (!fs::exists(cpath)) {
        throw Error(ErrorKind::Io, "layer '" + layer.id + "': missing " + cpath.string());
    }
    Matrix w = read_layer(wpath);
    Matrix x = read_layer(cpath);
    if (x.rows() != w.cols()) {
        throw Error(ErrorKind::DimensionMismatch, "layer '" + layer.id + "': calibration has " +
                                                      std::to_string(x.rows()) + " rows, weights have " +
                                                      std::to_string(w.cols()) + " columns");
    }
    if (x.cols() == 0) {
        throw Error(ErrorKind::InvalidArgument, "layer '" + layer.id + "': calibration has no samples");
    }
    layer.weights = LayerWeights::from_matrix(std::move(w));
    layer.gram = CalibrationGram(x.rows());
    accumulate(layer.gram, x);
    return layer;
}

// Loads every layer before any output is produced; one diagnostic line per bad layer.
std::optional<std::vector<LayerInput>> load_all(const RunConfig & cfg, std::ostream & err) {
    std::vector<fs::path> dirs;
    try {
        dirs = discover_layer_dirs(cfg.inputs);
    } catch (const std::exception & e) {
        err << "error: " << e.what() << "\n";
        return std::nullopt;
    }
    std::vector<LayerInput> layers;
    bool ok = true;
    for (const fs::path & d : dirs) {
        try {
            layers.push_back(load_layer(d));
        } catch (const std::exception & e) {
            err << "error: " << e.what() << "\n";
            ok = false;
        }
    }
    if (!ok) {
        return std::nullopt;
    }
    return layers;
}

// Runs fn(i) for i in [0, count) on a bounded worker pool. Returns the first
// failure message per index (empty when it succeeded).
std::vector<std::string> parallel_for(std::size_t count, unsigned jobs, const std::function<void(std::size_t)> & fn,
                                      std::vector<int> & codes) {
    std::vector<std::string> errors(count);
    codes.assign(count, kExitOk);
    unsigned workers = jobs ? jobs : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (const InternalError & e) {
                errors[i] = e.what();
                codes[i] = kExitInternalError;
            } catch (const std::exception & e) {
                errors[i] = e.what();
                codes[i] = kExitInputError;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < workers; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto & th : pool) {
        th.join();
    }
    return errors;
}

LayerReport safe_report(const std::string & id, std::span<const double> c_cols, const BitAllocation & alloc,
                        double loss_baq, double loss_uniform) {
    if (loss_baq > 0.0 && loss_uniform > 0.0) {
        return layer_report(id, c_cols, alloc, loss_baq, loss_uniform);
    }
    // exact reconstruction on at least one side
    LayerReport r;
    r.layer_id = id;
    r.ratio_c = loss_ratio(c_cols);
    r.ratio_l = loss_uniform > 0.0 ? loss_baq / loss_uniform : (loss_baq == 0.0 ? 1.0 : INFINITY);
    r.avg_bits = alloc.average_bits;
    r.bitwidth_counts = bitwidth_histogram(alloc.per_column_bits);
    r.measured_loss_baq = loss_baq;
    r.measured_loss_uniform = loss_uniform;
    r.predicted_loss_baq = alloc.predicted_loss;
    return r;
}

void check_round_trip(const QuantizedLayer & q, std::span<const std::uint8_t> bytes) {
    const QuantizedLayer back = unpack_quantized(bytes);
    if (back.codes != q.codes || back.per_column_bits != q.per_column_bits || back.row_min != q.row_min ||
        back.row_max != q.row_max || !(back.dequantized == q.dequantized)) {
        throw InternalError("packed layer does not decode to the quantized layer");
    }
}

void write_text_atomic(const fs::path & path, const std::string & text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

int finish(const std::vector<std::string> & errors, const std::vector<int> & codes, std::ostream & err) {
    int rc = kExitOk;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) {
            err << "error: " << errors[i] << "\n";
            rc = std::max(rc, codes[i]);
        }
    }
    return rc;
}

int cmd_quantize(const RunConfig & cfg, bool uniform, std::ostream & out, std::ostream & err) {
    cfg.validate();
    auto layers = load_all(cfg, err);
    if (!layers) {
        return kExitInputError;
    }
    const fs::path out_dir(cfg.output);
    fs::create_directories(out_dir);

    BaqOptions options;
    options.ref_loss_mode = cfg.ref_loss_iterate ? RefLossMode::Iterate : RefLossMode::SingleStep;

    std::vector<LayerReport> reports(layers->size());
    std::vector<int> codes;
    auto errors = parallel_for(layers->size(), cfg.jobs, [&](std::size_t i) {
        const LayerInput & layer = (*layers)[i];
        const HessianBundle h = build_hessian(layer.gram, cfg.percdamp);
        const QuantizedLayer base = quantize_layer_uniform(layer.weights, h, cfg.target_bits);
        const double loss_uniform = measured_layer_loss(layer.weights, base, h);

        const SensitivityProfile sens = weight_sensitivities(layer.weights, h.inv_diag, DegenerateRowPolicy::Floor);
        QuantizedLayer chosen;
        BitAllocation alloc;
        double loss_chosen = loss_uniform;
        if (uniform) {
            alloc.per_column_bits = base.per_column_bits;
            alloc.average_bits = round_bits(cfg.target_bits);
            alloc.predicted_loss = predicted_total_loss(sens.per_column, std::span<const int>(alloc.per_column_bits));
            chosen = base;
        } else {
            BaqResult r = baq_quantize_layer(layer.weights, h, cfg.target_bits, options);
            loss_chosen = measured_layer_loss(layer.weights, r.layer, h);
            alloc = std::move(r.allocation);
            chosen = std::move(r.layer);
        }

        const std::vector<std::uint8_t> bytes = pack_quantized(chosen);
        check_round_trip(chosen, bytes);
        write_file_atomic(out_dir / (layer.id + ".baqp"), bytes);
        reports[i] = safe_report(layer.id, sens.per_column, alloc, loss_chosen, loss_uniform);
    }, codes);

    const int rc = finish(errors, codes, err);
    if (rc != kExitOk) {
        return rc;
    }
    write_report_csv(reports, out_dir / "report.csv");
    for (const LayerReport & r : reports) {
        out << r.layer_id << ": avg_bits " << format_real(r.avg_bits) << " ratio_c " << format_real(r.ratio_c)
            << " ratio_l " << format_real(r.ratio_l) << "\n";
    }
    return kExitOk;
}

int cmd_allocate(const RunConfig & cfg, const std::string & histogram_path, std::ostream & out, std::ostream & err) {
    cfg.validate();
    auto layers = load_all(cfg, err);
    if (!layers) {
        return kExitInputError;
    }
    const RefLossMode mode = cfg.ref_loss_iterate ? RefLossMode::Iterate : RefLossMode::SingleStep;
    std::string csv = "layer_id,ratio_c,avg_bits,reference_loss,predicted_loss_baq,predicted_loss_uniform\n";
    std::string hist = "layer_id,width,columns,weights\n";
    for (const LayerInput & layer : *layers) {
        const HessianBundle h = build_hessian(layer.gram, cfg.percdamp);
        const SensitivityProfile sens = weight_sensitivities(layer.weights, h.inv_diag, DegenerateRowPolicy::Floor);
        const BitAllocation alloc = allocate_for_target(sens.per_column, cfg.target_bits, std::nullopt, mode);
        const std::vector<int> flat(layer.weights.cols(), round_bits(cfg.target_bits));
        const double uniform_loss = predicted_total_loss(sens.per_column, std::span<const int>(flat));
        csv += layer.id + "," + format_real(loss_ratio(sens.per_column)) + "," + format_real(alloc.average_bits) +
               "," + format_real(alloc.reference_loss) + "," + format_real(alloc.predicted_loss) + "," +
               format_real(uniform_loss) + "\n";
        for (const auto & [width, count] : bitwidth_histogram(alloc.per_column_bits)) {
            hist += layer.id + "," + std::to_string(width) + "," + std::to_string(count) + "," +
                    std::to_string(count * layer.weights.rows()) + "\n";
        }
    }
    if (cfg.output.empty()) {
        out << csv;
    } else {
        write_text_atomic(cfg.output, csv);
    }
    if (!histogram_path.empty()) {
        write_text_atomic(histogram_path, hist);
    }
    return kExitOk;
}

int cmd_synth(const SynthConfig & sc, const std::string & output, std::ostream & out) {
    const SynthLayer layer = make_synth_layer(sc);
    const fs::path dir(output);
    fs::create_directories(dir);
    write_layer(dir / kWeightsFile, layer.weights);
    write_layer(dir / kCalibFile, layer.calibration);
    out << "wrote " << (dir / kWeightsFile).string() << " (" << sc.rows << "x" << sc.cols << ") and "
        << (dir / kCalibFile).string() << " (" << sc.cols << "x" << layer.calibration.cols() << ")\n";
    return kExitOk;
}

struct BenchOptions {
    std::size_t seeds = 20;
    int probe_bits = 2;
    SynthConfig synth; // used when no --input is given
};

int cmd_transform_bench(const RunConfig & cfg, const BenchOptions & bench, std::ostream & out, std::ostream & err) {
    if (!(cfg.percdamp >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "--percdamp must be >= 0");
    }
    std::vector<LayerInput> layers;
    if (cfg.inputs.empty()) {
        const SynthLayer s = make_synth_layer(bench.synth);
        LayerInput li;
        li.id = "synth";
        li.weights = LayerWeights::from_matrix(s.weights);
        li.gram = CalibrationGram(s.calibration.rows());
        accumulate(li.gram, s.calibration);
        layers.push_back(std::move(li));
    } else {
        auto loaded = load_all(cfg, err);
        if (!loaded) {
            return kExitInputError;
        }
        layers = std::move(*loaded);
    }

    std::vector<TransformMode> modes = {TransformMode::Mild, TransformMode::Moderate, TransformMode::Haar};
    if (cfg.transform_mode) {
        modes = {parse_transform_mode(*cfg.transform_mode)};
    }

    const fs::path out_dir(cfg.output);
    fs::create_directories(out_dir);

    std::string identity_csv = "layer_id,seed,ratio_c\n";
    std::vector<std::string> mode_csv(modes.size(), "layer_id,seed,ratio_c\n");
    std::vector<std::vector<double>> mode_ratios(modes.size());
    std::vector<double> identity_ratios;

    for (const LayerInput & layer : layers) {
        const HessianBundle h = build_hessian(layer.gram, cfg.percdamp);
        const std::size_t m = layer.weights.rows();
        const std::size_t n = layer.weights.cols();
        const std::size_t p = std::min({cfg.block_size, m, n});

        const auto [w_id, h_id] = apply_transform(layer.weights, h, TransformPair::identity(m, n));
        const double base = loss_ratio(probe_sensitivities(w_id, h_id, bench.probe_bits));
        identity_ratios.push_back(base);
        identity_csv += layer.id + ",0," + format_real(base) + "\n";

        for (std::size_t k = 0; k < modes.size(); ++k) {
            std::vector<double> ratios(bench.seeds);
            std::vector<int> codes;
            auto errors = parallel_for(bench.seeds, cfg.jobs, [&](std::size_t s) {
                const TransformPair t = build_transforms(m, n, p, modes[k], cfg.seed + s);
                const auto [w_t, h_t] = apply_transform(layer.weights, h, t);
                ratios[s] = loss_ratio(probe_sensitivities(w_t, h_t, bench.probe_bits));
            }, codes);
            const int rc = finish(errors, codes, err);
            if (rc != kExitOk) {
                return rc;
            }
            for (std::size_t s = 0; s < bench.seeds; ++s) {
                mode_csv[k] += layer.id + "," + std::to_string(cfg.seed + s) + "," + format_real(ratios[s]) + "\n";
            }
            mode_ratios[k].insert(mode_ratios[k].end(), ratios.begin(), ratios.end());
        }
    }

    write_text_atomic(out_dir / "ratio_c_identity.csv", identity_csv);
    out << "identity median ratio_c " << format_real(median(identity_ratios)) << "\n";
    std::vector<double> medians;
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const std::string name(transform_mode_name(modes[k]));
        write_text_atomic(out_dir / ("ratio_c_" + name + ".csv"), mode_csv[k]);
        medians.push_back(median(mode_ratios[k]));
        out << name << " median ratio_c " << format_real(medians.back()) << "\n";
    }
    if (modes.size() == 3) {
        const bool ordered = medians[2] > medians[1] && medians[1] > medians[0];
        out << "ordering haar > moderate > mild: " << (ordered ? "ok" : "violated") << "\n";
    }
    return kExitOk;
}

int cmd_verify(const std::string & packed, const std::string & weights, const std::string & calib, double percdamp,
               std::ostream & out, std::ostream & err) {
    std::vector<std::uint8_t> bytes;
    QuantizedLayer q;
    Matrix ref;
    try {
        bytes = read_file(packed);
        q = unpack_quantized(bytes);
        ref = read_layer(weights);
    } catch (const std::exception & e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    if (ref.rows() != q.rows || ref.cols() != q.cols) {
        err << "error: packed layer is " << q.rows << "x" << q.cols << " but reference weights are " << ref.rows()
            << "x" << ref.cols() << "\n";
        return kExitInputError;
    }

    const double ref_norm = frobenius_norm(ref);
    const double err_norm = frobenius_norm(subtract(ref, q.dequantized));
    const double rel = ref_norm > 0.0 ? err_norm / ref_norm : err_norm;
    double width_sum = 0.0;
    for (int b : q.per_column_bits) {
        width_sum += b;
    }

    out << "shape " << q.rows << "x" << q.cols << "\n";
    out << "file_bytes " << bytes.size() << "\n";
    out << "avg_bits_headers " << format_real(q.cols ? width_sum / static_cast<double>(q.cols) : 0.0) << "\n";
    out << "avg_bits_file " << format_real(code_bits_per_weight(bytes.size(), q.rows, q.cols)) << "\n";
    out << "header_bits_per_weight "
        << format_real(q.rows && q.cols ? 8.0 * static_cast<double>(width_header_bytes(q.cols)) /
                                              static_cast<double>(q.rows * q.cols)
                                        : 0.0)
        << "\n";
    out << "relative_frobenius_error " << format_real(rel) << "\n";
    if (!calib.empty()) {
        try {
            const Matrix x = read_layer(calib);
            CalibrationGram g(x.rows());
            accumulate(g, x);
            const HessianBundle h = build_hessian(g, percdamp);
            out << "proxy_loss " << format_real(measured_layer_loss(ref, q.dequantized, h.hessian)) << "\n";
        } catch (const std::exception & e) {
            err << "error: " << e.what() << "\n";
            return kExitInputError;
        }
    } else {
        out << "squared_error " << format_real(err_norm * err_norm) << "\n";
    }
    return kExitOk;
}

void add_common(CLI::App * sub, RunConfig & cfg) {
    sub->add_option("-i,--input", cfg.inputs, "Layer directory, or a directory of layer directories")
        ->check(CLI::ExistingDirectory);
    sub->add_option("--percdamp", cfg.percdamp, "Hessian damping as a fraction of the mean diagonal")
        ->capture_default_str();
    sub->add_option("-j,--jobs", cfg.jobs, "Worker threads (0 = hardware concurrency)")->capture_default_str();
}

} // namespace

int run(int argc, const char * const * argv, std::ostream & out, std::ostream & err) {
    CLI::App app{"Bit-allocated post-training weight quantization"};
    app.set_config("--config", "", "TOML/INI file with option defaults; command-line flags win");
    app.require_subcommand(1);

    RunConfig cfg;
    bool uniform = false;
    std::string histogram_path;
    SynthConfig synth;
    std::string synth_out;
    BenchOptions bench;
    std::string packed_path;
    std::string weights_path;
    std::string calib_path;

    auto * quantize = app.add_subcommand("quantize", "Quantize layers and write packed files plus report.csv");
    add_common(quantize, cfg);
    quantize->get_option("--input")->required();
    quantize->add_option("-o,--output", cfg.output, "Output directory")->required();
    quantize->add_option("-b,--target-bits", cfg.target_bits, "Target average bits per weight")->capture_default_str();
    quantize->add_flag("--iterate", cfg.ref_loss_iterate, "Iterate the reference-loss correction");
    quantize->add_flag("--uniform", uniform, "Fixed width in every column (baseline)");

    auto * allocate = app.add_subcommand("allocate", "Allocation-only report (no quantization)");
    add_common(allocate, cfg);
    allocate->get_option("--input")->required();
    allocate->add_option("-o,--output", cfg.output, "CSV path (stdout when omitted)");
    allocate->add_option("-b,--target-bits", cfg.target_bits, "Target average bits per weight")->capture_default_str();
    allocate->add_flag("--iterate", cfg.ref_loss_iterate, "Iterate the reference-loss correction");
    allocate->add_option("--histogram", histogram_path, "Also write per-layer width histograms to this CSV");

    auto * synth_cmd = app.add_subcommand("synth", "Generate a synthetic layer and its calibration data");
    synth_cmd->add_option("-o,--output", synth_out, "Layer directory to create")->required();
    synth_cmd->add_option("--rows", synth.rows, "Rows M")->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--cols", synth.cols, "Columns N")->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--decades", synth.decades, "Row-range spread in decades")->capture_default_str();
    synth_cmd->add_option("--condition", synth.condition, "Condition number of X X^T")->capture_default_str();
    synth_cmd->add_option("--samples", synth.samples, "Calibration samples (0 = 2*cols)")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "RNG seed")->capture_default_str();

    auto * bench_cmd = app.add_subcommand("transform-bench", "Ratio_C under mild/moderate/haar transforms");
    add_common(bench_cmd, cfg);
    bench_cmd->add_option("-o,--output", cfg.output, "Output directory for the per-mode CSVs")->required();
    bench_cmd->add_option("--seeds", bench.seeds, "Transform seeds per mode")->capture_default_str();
    bench_cmd->add_option("--seed", cfg.seed, "First transform seed")->capture_default_str();
    bench_cmd->add_option("--block-size", cfg.block_size, "Orthogonal block size p")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    bench_cmd->add_option("--mode", cfg.transform_mode, "Run only this mode (mild, moderate, haar)")
        ->check(CLI::IsMember({"mild", "moderate", "haar"}));
    bench_cmd->add_option("--probe-bits", bench.probe_bits, "Uniform width of the probe pass")
        ->capture_default_str()
        ->check(CLI::Range(0, kMaxBits));
    bench_cmd->add_option("--rows", bench.synth.rows, "Synthetic layer rows (without --input)")->capture_default_str();
    bench_cmd->add_option("--cols", bench.synth.cols, "Synthetic layer columns")->capture_default_str();
    bench_cmd->add_option("--decades", bench.synth.decades, "Synthetic row-range spread")->capture_default_str();
    bench_cmd->add_option("--condition", bench.synth.condition, "Synthetic condition number")->capture_default_str();
    bench_cmd->add_option("--layer-seed", bench.synth.seed, "Synthetic layer seed")->capture_default_str();

    auto * verify = app.add_subcommand("verify", "Check a packed file against reference weights");
    verify->add_option("packed", packed_path, "Packed .baqp file")->required();
    verify->add_option("-w,--weights", weights_path, "Reference weights.baqt")->required();
    verify->add_option("-c,--calib", calib_path, "Calibration file for the proxy loss");
    verify->add_option("--percdamp", cfg.percdamp, "Hessian damping")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? kExitOk : kExitInputError;
    }

    try {
        if (*quantize) {
            return cmd_quantize(cfg, uniform, out, err);
        }
        if (*allocate) {
            return cmd_allocate(cfg, histogram_path, out, err);
        }
        if (*synth_cmd) {
            return cmd_synth(synth, synth_out, out);
        }
        if (*bench_cmd) {
            return cmd_transform_bench(cfg, bench, out, err);
        }
        if (*verify) {
            return cmd_verify(packed_path, weights_path, calib_path, cfg.percdamp, out, err);
        }
    } catch (const InternalError & e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    } catch (const std::exception & e) {
        err << "error: " << e.what() << "\n";
        return kExitInputError;
    }
    return kExitInputError;
}

} // namespace baq::cli
