#include "cli.hpp"

#include "baq/allocator.hpp"
#include "baq/diagnostics.hpp"
#include "baq/hessian.hpp"
#include "baq/packfmt.hpp"
#include "baq/transform.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace baq {
namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "baq");
    std::vector<const char *> argv;
    for (const std::string & a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path & p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Value following `key ` on its own output line.
double field(const std::string & text, const std::string & key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key + " ", 0) == 0) {
            return std::stod(line.substr(key.size() + 1));
        }
    }
    ADD_FAILURE() << "no field " << key << " in:\n" << text;
    return 0.0;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("baq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    fs::path synth(const std::string & name, std::size_t size, double decades, double condition, int seed) {
        const fs::path dir = root_ / "layers" / name;
        const Result r = run_cli({"synth", "-o", dir.string(), "--rows", std::to_string(size), "--cols",
                                  std::to_string(size), "--decades", std::to_string(decades), "--condition",
                                  std::to_string(condition), "--seed", std::to_string(seed)});
        EXPECT_EQ(r.code, 0) << r.err;
        return dir;
    }

    static double ratio_of(const fs::path & dir) {
        const Matrix w = read_layer(dir / "weights.baqt");
        CalibrationGram g(w.cols());
        accumulate(g, read_layer(dir / "calib.baqt"));
        const HessianBundle h = build_hessian(g);
        return loss_ratio(weight_sensitivities(LayerWeights::from_matrix(w), h.inv_diag).per_column);
    }

    fs::path root_;
};

TEST_F(CliTest, SynthIsDeterministic) {
    const fs::path a = synth("a", 32, 2.0, 100.0, 7);
    const fs::path b = synth("b", 32, 2.0, 100.0, 7);
    const fs::path c = synth("c", 32, 2.0, 100.0, 8);
    EXPECT_EQ(slurp(a / "weights.baqt"), slurp(b / "weights.baqt"));
    EXPECT_EQ(slurp(a / "calib.baqt"), slurp(b / "calib.baqt"));
    EXPECT_NE(slurp(a / "weights.baqt"), slurp(c / "weights.baqt"));
}

TEST_F(CliTest, SynthSpreadControlsRatio) {
    EXPECT_GE(ratio_of(synth("flat", 128, 0.0, 1.0, 1)), 0.99);
    EXPECT_LE(ratio_of(synth("spread", 128, 4.0, 1e4, 1)), 0.5);
}

TEST_F(CliTest, SynthRejectsNegativeDecades) {
    const Result r = run_cli({"synth", "-o", (root_ / "bad").string(), "--decades", "-1"});
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(fs::exists(root_ / "bad" / "weights.baqt"));
}

TEST_F(CliTest, HomogeneousLayerUniformAndBaqAgree) {
    const fs::path layer = synth("flat", 32, 0.0, 1.0, 3);
    // identical rows make every column equally sensitive
    Matrix w = read_layer(layer / "weights.baqt");
    for (std::size_t i = 1; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            w(i, j) = w(0, j);
        }
    }
    write_layer(layer / "weights.baqt", w);
    Matrix x(32, 64);
    for (std::size_t i = 0; i < 32; ++i) {
        x(i, 2 * i) = 1.0;
    }
    write_layer(layer / "calib.baqt", x);

    const Result a = run_cli({"quantize", "-i", layer.string(), "-o", (root_ / "baq").string(), "-b", "3"});
    const Result b =
        run_cli({"quantize", "-i", layer.string(), "-o", (root_ / "uni").string(), "-b", "3", "--uniform"});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(slurp(root_ / "baq" / "flat.baqp"), slurp(root_ / "uni" / "flat.baqp"));
}

TEST_F(CliTest, QuantizeHitsTargetAndVerifies) {
    synth("l0", 64, 3.0, 1e3, 1);
    synth("l1", 64, 3.0, 1e2, 2);
    const fs::path out = root_ / "out";
    const Result q = run_cli({"quantize", "-i", (root_ / "layers").string(), "-o", out.string(), "-j", "2"});
    ASSERT_EQ(q.code, 0) << q.err;
    const auto reports = parse_report_csv(slurp(out / "report.csv"));
    ASSERT_EQ(reports.size(), 2u);
    EXPECT_EQ(reports[0].layer_id, "l0");
    for (const LayerReport & r : reports) {
        EXPECT_LE(std::abs(r.avg_bits - 2.0), 0.15);
        EXPECT_LT(r.ratio_c, 1.0);
    }

    const Result v = run_cli({"verify", (out / "l0.baqp").string(), "-w", (root_ / "layers" / "l0" / "weights.baqt").string(),
                              "-c", (root_ / "layers" / "l0" / "calib.baqt").string()});
    EXPECT_EQ(v.code, 0) << v.err;
    EXPECT_NEAR(field(v.out, "avg_bits_headers"), reports[0].avg_bits, 1e-12);
    EXPECT_NEAR(field(v.out, "proxy_loss"), reports[0].measured_loss_baq, 1e-9 * reports[0].measured_loss_baq);

    const Result again = run_cli({"quantize", "-i", (root_ / "layers").string(), "-o", (root_ / "again").string()});
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(slurp(out / "l0.baqp"), slurp(root_ / "again" / "l0.baqp"));
    EXPECT_EQ(slurp(out / "report.csv"), slurp(root_ / "again" / "report.csv"));
}

TEST_F(CliTest, MissingCalibrationWritesNothing) {
    synth("good", 16, 1.0, 10.0, 1);
    const fs::path bad = synth("bad", 16, 1.0, 10.0, 2);
    fs::remove(bad / "calib.baqt");
    const fs::path out = root_ / "out";
    const Result r = run_cli({"quantize", "-i", (root_ / "layers").string(), "-o", out.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_FALSE(r.err.empty());
    EXPECT_FALSE(fs::exists(out / "good.baqp"));
    EXPECT_FALSE(fs::exists(out / "report.csv"));
}

TEST_F(CliTest, VerifyRejectsTruncatedFile) {
    const fs::path layer = synth("l", 16, 1.0, 10.0, 1);
    ASSERT_EQ(run_cli({"quantize", "-i", layer.string(), "-o", (root_ / "out").string()}).code, 0);
    const std::string bytes = slurp(root_ / "out" / "l.baqp");
    {
        std::ofstream cut(root_ / "cut.baqp", std::ios::binary);
        cut.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 3));
    }
    const Result r = run_cli({"verify", (root_ / "cut.baqp").string(), "-w", (layer / "weights.baqt").string()});
    EXPECT_NE(r.code, 0);
}

TEST_F(CliTest, HighRateVerifiesNearLossless) {
    const fs::path layer = synth("l", 32, 2.0, 100.0, 4);
    const Result q = run_cli({"quantize", "-i", layer.string(), "-o", (root_ / "out").string(), "-b", "15"});
    ASSERT_EQ(q.code, 0) << q.err;
    const Result v = run_cli({"verify", (root_ / "out" / "l.baqp").string(), "-w", (layer / "weights.baqt").string()});
    ASSERT_EQ(v.code, 0) << v.err;
    EXPECT_LT(field(v.out, "relative_frobenius_error"), 1e-3);
}

TEST_F(CliTest, AllocateWritesReportAndHistogram) {
    synth("l", 32, 2.0, 100.0, 5);
    const fs::path csv = root_ / "alloc.csv";
    const fs::path hist = root_ / "hist.csv";
    const Result r = run_cli({"allocate", "-i", (root_ / "layers").string(), "-o", csv.string(), "--histogram",
                              hist.string(), "--iterate"});
    ASSERT_EQ(r.code, 0) << r.err;
    const std::string text = slurp(csv);
    EXPECT_EQ(text.rfind("layer_id,ratio_c,avg_bits,reference_loss,predicted_loss_baq,predicted_loss_uniform\n", 0), 0u);
    EXPECT_EQ(slurp(hist).rfind("layer_id,width,columns,weights\n", 0), 0u);
}

TEST_F(CliTest, TransformBenchIdentityControl) {
    const fs::path layer = synth("l", 64, 2.0, 100.0, 6);
    const fs::path out = root_ / "bench";
    const Result r = run_cli({"transform-bench", "-i", layer.string(), "-o", out.string(), "--seeds", "3",
                              "--block-size", "32"});
    ASSERT_EQ(r.code, 0) << r.err;

    const Matrix w = read_layer(layer / "weights.baqt");
    CalibrationGram g(w.cols());
    accumulate(g, read_layer(layer / "calib.baqt"));
    const double direct = loss_ratio(probe_sensitivities(LayerWeights::from_matrix(w), build_hessian(g), 2));
    EXPECT_EQ(field(r.out, "identity median ratio_c"), direct);

    for (const char * mode : {"mild", "moderate", "haar"}) {
        const std::string text = slurp(out / (std::string("ratio_c_") + mode + ".csv"));
        EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4) << mode;
    }
}

TEST_F(CliTest, TransformBenchSpreadLayerOrdering) {
    const fs::path out = root_ / "bench";
    const Result r = run_cli({"transform-bench", "-o", out.string(), "--seeds", "5", "--rows", "128", "--cols",
                              "128", "--decades", "3", "--condition", "100"});
    ASSERT_EQ(r.code, 0) << r.err;
    const double haar = field(r.out, "haar median ratio_c");
    EXPECT_GE(haar, 0.8);
    EXPECT_LE(haar, 1.0);
    EXPECT_LT(field(r.out, "mild median ratio_c"), haar);
}

TEST_F(CliTest, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"quantize"}).code, 1);
    EXPECT_EQ(run_cli({"quantize", "-i", (root_ / "nope").string(), "-o", (root_ / "o").string()}).code, 1);
    EXPECT_EQ(run_cli({"quantize", "-i", root_.string(), "-o", (root_ / "o").string(), "-b", "16"}).code, 1);
    EXPECT_EQ(run_cli({"verify", (root_ / "missing.baqp").string(), "-w", (root_ / "w.baqt").string()}).code, 1);
}

} // namespace
} // namespace baq
