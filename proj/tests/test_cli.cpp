#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "lmsavg/cli.hpp"
#include "oracles.hpp"

using namespace lmsavg;
namespace fs = std::filesystem;

namespace {

class TempDir {
  public:
    TempDir() {
        static int counter = 0;
        path_ = fs::path(::testing::TempDir()) /
                ("lmsavg_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }

    std::string write(const std::string &name, const std::string &text) const {
        const fs::path p = path_ / name;
        std::ofstream(p) << text;
        return p.string();
    }
    std::string file(const std::string &name) const { return (path_ / name).string(); }

  private:
    fs::path path_;
};

std::string slurp(const std::string &path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct ToolResult {
    int status = -1;
    std::string out, err;
};

ToolResult run_tool(const std::string &args, const TempDir &dir) {
    const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
    const std::string cmd = std::string(LMSAVG_TOOL_PATH) + " " + args + " > " + out + " 2> " + err;
    const int raw = std::system(cmd.c_str());
    ToolResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

Manifest base(const std::string &spec, int dim = 3) {
    Manifest mf;
    mf.spec = spec;
    mf.dim = dim;
    mf.threads = 1;
    return mf;
}

int column(const CsvTable &t, const std::string &name) {
    for (std::size_t i = 0; i < t.header().size(); ++i)
        if (t.header()[i] == name) return static_cast<int>(i);
    ADD_FAILURE() << "missing column " << name;
    return 0;
}

double cell(const CsvTable &t, std::size_t row, const std::string &name) {
    return std::stod(t.rows().at(row).at(column(t, name)));
}

} // namespace

TEST(Ingest, DenseCsvExample) {
    TempDir dir;
    const ProblemSpec spec = ingest(dir.write("a.csv", "1,0,1\n0,1,0\n"), DataFormat::csv);
    EXPECT_EQ(spec.dim, 2);
    EXPECT_EQ(spec.distribution, DistributionKind::empirical);
    EXPECT_EQ(spec.noise, NoiseKind::residual);
    EXPECT_LT((compute_moments(spec).H.matrix() - 0.5 * Matrix::Identity(2, 2)).norm(), 1e-15);
    EXPECT_LT((spec.w_star - (Vector(2) << 1, 0).finished()).norm(), 1e-14);
}

TEST(Ingest, HeaderAndComments) {
    TempDir dir;
    const ProblemSpec spec = ingest(dir.write("h.csv", "x1,x2,y\n# note\n1,0,1\n\n0,1,0\n"), DataFormat::csv);
    EXPECT_EQ(spec.atoms.size(), 2u);
}

TEST(Ingest, LibsvmExample) {
    std::istringstream in("1 3:0.5\n");
    const auto rows = read_libsvm_rows(in, 3);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].x, (Vector(3) << 0, 0, 0.5).finished());
    EXPECT_EQ(rows[0].y, 1.0);

    std::istringstream multi("-1 1:2 2:1\n+1 2:-1.5\n");
    const auto r2 = read_libsvm_rows(multi);
    EXPECT_EQ(r2[1].x, (Vector(2) << 0, -1.5).finished());
    EXPECT_EQ(r2[1].y, 1.0);
    std::istringstream over("1 4:1\n");
    EXPECT_THROW(read_libsvm_rows(over, 3), DimensionError);
}

TEST(Ingest, Errors) {
    TempDir dir;
    EXPECT_THROW(ingest(dir.write("empty.csv", ""), DataFormat::csv), DataError);
    EXPECT_THROW(ingest(dir.write("empty.svm", "\n# nothing\n"), DataFormat::libsvm), DataError);
    EXPECT_THROW(ingest(dir.file("missing.csv"), DataFormat::csv), DataError);
    try {
        ingest(dir.write("bad.csv", "1,0,1\n0,abc,0\n"), DataFormat::csv);
        FAIL() << "expected a parse error";
    } catch (const DataError &e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    try {
        ingest(dir.write("bad.svm", "1 1:1\n0 2:x\n"), DataFormat::libsvm);
        FAIL() << "expected a parse error";
    } catch (const DataError &e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(ingest(dir.write("ragged.csv", "1,0,1\n0,1,2,0\n"), DataFormat::csv), DimensionError);
    EXPECT_THROW(ingest(dir.write("sing.csv", "1,0,1\n2,0,0\n"), DataFormat::csv), DataError);
}

TEST(Ingest, Report) {
    TempDir dir;
    const ProblemSpec spec = ingest(dir.write("r.csv", "1,0,1\n0,2,0\n1,1,1\n"), DataFormat::csv);
    const IngestReport r = ingest_report(spec);
    EXPECT_EQ(r.dim, 2);
    EXPECT_EQ(r.rows, 3u);
    EXPECT_NEAR(r.trace_H, (1.0 + 4.0 + 2.0) / 3.0, 1e-15);
    EXPECT_EQ(r.distinct_labels, 2u);
    EXPECT_EQ(r.class_counts.at(1.0), 2u);
    EXPECT_EQ(r.class_counts.at(0.0), 1u);
}

TEST(Ingest, RoundTripPreservesMoments) {
    TempDir dir;
    for (const auto &[name, spec] : oracle::spec_battery()) {
        if (spec.distribution != DistributionKind::empirical) continue;
        std::ostringstream os;
        write_csv_dataset(os, spec);
        const ProblemSpec back = ingest(dir.write(name + ".csv", os.str()), DataFormat::csv);
        const MomentSet a = compute_moments(spec), b = compute_moments(back);
        EXPECT_LT((a.H.matrix() - b.H.matrix()).norm(), 1e-12) << name;
        EXPECT_LT((a.M.matrix() - b.M.matrix()).norm(), 1e-12) << name;
        EXPECT_LT((a.Sigma0.matrix() - b.Sigma0.matrix()).norm(), 1e-12) << name;
        EXPECT_LT((spec.w_star - back.w_star).norm(), 1e-12) << name;
    }
}

TEST(Formatting, FullPrecisionRoundTrip) {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::exp(u(rng)) * (i % 2 ? 1 : -1);
        const std::string s = format_double(v);
        EXPECT_EQ(std::stod(s), v);
        EXPECT_EQ(s.find(','), std::string::npos);
    }
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Schedule, LogSpaced) {
    const auto s = log_schedule(10000, 20);
    EXPECT_EQ(s.front(), 1);
    EXPECT_EQ(s.back(), 10000);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[i], s[i - 1]);
    EXPECT_EQ(log_schedule(50, 1), (std::vector<std::int64_t>{50}));
    EXPECT_EQ(log_schedule(3, 10), (std::vector<std::int64_t>{1, 2, 3}));
    EXPECT_THROW(log_schedule(0, 5), DataError);
    EXPECT_THROW(log_schedule(10, 0), DataError);
}

TEST(GammaMaxCommand, Examples) {
    const CommandOutput id = cmd_gamma_max(base("identity", 5));
    EXPECT_EQ(id.table.header(), (std::vector<std::string>{"scheme", "gamma_max", "gamma_max_det", "trace_bound",
                                                           "mu", "mu_T_at_half_gamma_max"}));
    ASSERT_EQ(id.table.rows().size(), 2u);
    EXPECT_EQ(id.table.rows()[0][0], "uniform");
    EXPECT_NEAR(cell(id.table, 0, "gamma_max"), 2.0 / 7.0, 1e-12);
    EXPECT_NEAR(cell(id.table, 0, "trace_bound"), 2.0 / 5.0, 1e-15);
    // Bias-optimal resampling reaches 2 / E[X^T X] (Monte Carlo moments for Gaussian designs).
    EXPECT_NEAR(cell(id.table, 1, "gamma_max"), 0.4, 0.01);
    EXPECT_LE(cell(id.table, 0, "gamma_max"), cell(id.table, 1, "gamma_max"));

    Manifest s = base("scalar", 1);
    s.scheme = {"uniform"};
    EXPECT_DOUBLE_EQ(cell(cmd_gamma_max(s).table, 0, "gamma_max"), 2.0);
}

TEST(GammaMaxCommand, DiscreteOrdering) {
    TempDir dir;
    Manifest mf = base("", 2);
    mf.data = dir.write("d.csv", "1,0,1\n0,3,0\n-2,1,1\n0.5,-0.5,0\n");
    mf.scheme = {"uniform", "bias-opt", "variance-opt", "class-weighted"};
    const CommandOutput out = cmd_gamma_max(mf);
    ASSERT_EQ(out.table.rows().size(), 4u);
    const double e_xx = (1.0 + 9.0 + 5.0 + 0.5) / 4.0;
    EXPECT_NEAR(cell(out.table, 1, "gamma_max"), 2.0 / e_xx, 1e-10);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_LE(cell(out.table, i, "gamma_max"), 2.0 / e_xx + 1e-10);
}

TEST(RunCommand, ZeroBiasFromOptimum) {
    TempDir dir;
    Manifest mf = base("", 1);
    mf.data = dir.write("z.csv", "1,1\n1,-1\n"); // w* = 0 = w0
    mf.mode = "bias";
    mf.n_max = 100;
    mf.points = 5;
    mf.replicates = 3;
    const CommandOutput out = cmd_run(mf);
    EXPECT_EQ(out.table.header(),
              (std::vector<std::string>{"n", "gamma", "scheme", "mode", "risk", "stderr", "diverged"}));
    ASSERT_FALSE(out.table.rows().empty());
    for (std::size_t i = 0; i < out.table.rows().size(); ++i) EXPECT_EQ(cell(out.table, i, "risk"), 0.0);
}

TEST(RunCommand, ScalarMatchesClosedForm) {
    Manifest mf = base("scalar", 1);
    mf.sigma = 0.0;
    mf.gamma = {"0.5", "0.1"};
    mf.mode = "bias";
    mf.n_max = 1000;
    mf.points = 12;
    mf.replicates = 2;
    const CommandOutput out = cmd_run(mf);
    for (std::size_t i = 0; i < out.table.rows().size(); ++i) {
        const int n = static_cast<int>(cell(out.table, i, "n"));
        const double g = cell(out.table, i, "gamma");
        // w0 = 0, w* = 1: eta0 = -1.
        EXPECT_NEAR(cell(out.table, i, "risk"), oracle::scalar_bias(g, -1.0, n), 1e-12);
        EXPECT_EQ(out.table.rows()[i][column(out.table, "diverged")], "0");
    }
}

TEST(RunCommand, DivergenceIsFlagged) {
    Manifest mf = base("scalar", 1);
    mf.gamma = {"2.5gmax"};
    mf.mode = "total";
    mf.n_max = 200;
    mf.points = 5;
    mf.replicates = 2;
    const CommandOutput out = cmd_run(mf);
    ASSERT_FALSE(out.warnings.empty());
    for (const auto &row : out.table.rows()) EXPECT_EQ(row[column(out.table, "diverged")], "1");
}

TEST(RunCommand, ByteIdenticalOutput) {
    Manifest mf = base("harmonic", 4);
    mf.gamma = {"0.5gmax", "0.05gmax"};
    mf.n_max = 300;
    mf.points = 6;
    mf.replicates = 20;
    mf.scheme = {"uniform", "bias-opt"};
    const std::string a = cmd_run(mf).table.str();
    mf.threads = 3;
    const std::string b = cmd_run(mf).table.str();
    EXPECT_EQ(a, b);
    mf.seed = 2;
    EXPECT_NE(cmd_run(mf).table.str(), a);
}

TEST(RunCommand, UsageErrors) {
    Manifest mf = base("nope");
    EXPECT_THROW(cmd_run(mf), UsageError);
    mf = base("identity");
    mf.mode = "sideways";
    EXPECT_THROW(cmd_run(mf), UsageError);
    mf = base("identity");
    mf.gamma = {"-0.1"};
    EXPECT_THROW(cmd_run(mf), UsageError);
    mf.gamma = {"fast"};
    EXPECT_THROW(cmd_run(mf), UsageError);
    mf = base("identity");
    mf.scheme = {"best"};
    EXPECT_THROW(cmd_run(mf), UsageError);
}

TEST(PredictCommand, ScalarColumns) {
    Manifest mf = base("scalar", 1);
    mf.gamma = {"0.5"};
    mf.n_max = 1000;
    mf.points = 4;
    const CommandOutput out = cmd_predict(mf);
    EXPECT_TRUE(out.warnings.empty());
    for (std::size_t i = 0; i < out.table.rows().size(); ++i) {
        const double n = cell(out.table, i, "n");
        EXPECT_NEAR(cell(out.table, i, "bias_leading"), 4.0 / (n * n), 1e-15);
        EXPECT_NEAR(cell(out.table, i, "variance_leading"), 1.0 / n - (8.0 / 3.0) / (n * n), 1e-15);
        EXPECT_NEAR(cell(out.table, i, "bias_exact"), oracle::scalar_bias(0.5, -1.0, static_cast<int>(n)), 1e-14);
        EXPECT_NEAR(cell(out.table, i, "variance_exact"), oracle::scalar_variance(0.5, 1.0, static_cast<int>(n)),
                    1e-14);
        EXPECT_NEAR(cell(out.table, i, "small_gamma_variance"), 1.0 / n, 1e-15);
        EXPECT_LE(std::abs(cell(out.table, i, "bias_exact") - cell(out.table, i, "bias_leading")),
                  cell(out.table, i, "bias_bound") + 1e-15);
    }
}

TEST(PredictCommand, BeyondGammaMaxLeavesLeadingColumnsEmpty) {
    Manifest mf = base("scalar", 1);
    mf.gamma = {"1gmax"};
    mf.n_max = 10;
    mf.points = 3;
    const CommandOutput out = cmd_predict(mf);
    ASSERT_EQ(out.warnings.size(), 1u);
    for (const auto &row : out.table.rows()) {
        EXPECT_TRUE(row[column(out.table, "bias_leading")].empty());
        EXPECT_TRUE(row[column(out.table, "variance_bound")].empty());
        EXPECT_FALSE(row[column(out.table, "bias_exact")].empty());
    }
}

TEST(SamplingCommand, ConstantNormGainsAreOne) {
    Manifest mf = base("rademacher", 3);
    mf.n_max = 50;
    mf.points = 3;
    mf.replicates = 5;
    const CommandOutput out = cmd_sampling(mf);
    ASSERT_FALSE(out.table.rows().empty());
    for (std::size_t i = 0; i < out.table.rows().size(); ++i) {
        EXPECT_NEAR(cell(out.table, i, "variance_gain"), 1.0, 1e-12);
        EXPECT_NEAR(cell(out.table, i, "variance_gain_bound"), 1.0, 1e-12);
        EXPECT_NEAR(cell(out.table, i, "predicted_bias_gain"), 1.0, 1e-12);
    }
}

TEST(SamplingCommand, HeavyTailPredictedGain) {
    TempDir dir;
    Manifest mf = base("", 1);
    mf.data = dir.write("two.csv", "1,1\n3,0\n");
    mf.n_max = 20;
    mf.points = 2;
    mf.replicates = 5;
    const CommandOutput out = cmd_sampling(mf);
    double g_uniform = 0.0, g_bias = 0.0, gain = 0.0;
    for (std::size_t i = 0; i < out.table.rows().size(); ++i) {
        const std::string scheme = out.table.rows()[i][0];
        if (scheme == "uniform") g_uniform = cell(out.table, i, "gamma_max");
        if (scheme == "bias-opt") {
            g_bias = cell(out.table, i, "gamma_max");
            gain = cell(out.table, i, "predicted_bias_gain");
        }
        EXPECT_LE(cell(out.table, i, "variance_gain_bound"), 1.0);
    }
    EXPECT_NEAR(g_bias, 2.0 / 5.0, 1e-12);
    EXPECT_NEAR(gain, std::pow(g_uniform / g_bias, 2), 1e-12);
    EXPECT_NEAR(cell(out.table, 0, "variance_gain_bound"), 0.8, 1e-15);
}

TEST(SamplingCommand, NoiselessSpecOmitsVarianceRow) {
    Manifest mf = base("identity", 2);
    mf.sigma = 0.0;
    mf.n_max = 20;
    mf.points = 2;
    mf.replicates = 2;
    mf.reweight_samples = 20000;
    const CommandOutput out = cmd_sampling(mf);
    ASSERT_EQ(out.warnings.size(), 1u);
    for (const auto &row : out.table.rows()) EXPECT_NE(row[0], "variance-opt");
}

TEST(PlotCommand, EmptyInputGivesAxesOnly) {
    std::istringstream in("n,gamma,scheme,mode,risk,stderr,diverged\n");
    const std::string svg = cmd_plot(in);
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_EQ(svg.find("<polyline"), std::string::npos);
    EXPECT_NE(svg.find("slope -1"), std::string::npos);
    EXPECT_NE(svg.find("slope -2"), std::string::npos);
}

TEST(PlotCommand, OnePolylinePerSeries) {
    std::istringstream in("n,gamma,scheme,mode,risk,stderr,diverged\n"
                          "1,0.1,uniform,bias,1,0,0\n10,0.1,uniform,bias,0.01,0,0\n"
                          "1,0.1,uniform,variance,0.5,0,0\n10,0.1,uniform,variance,0.05,0,0\n");
    const std::string svg = cmd_plot(in, "demo");
    std::size_t count = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
    EXPECT_EQ(count, 2u);
    EXPECT_NE(svg.find("data-key=\"scheme=uniform mode=bias gamma=0.1\""), std::string::npos);
    EXPECT_NE(svg.find(">scheme=uniform mode=variance gamma=0.1<"), std::string::npos);
    EXPECT_NE(svg.find(">demo<"), std::string::npos);
}

TEST(PlotCommand, PredictCsvAndMissingColumns) {
    Manifest mf = base("scalar", 1);
    mf.gamma = {"0.5"};
    mf.n_max = 100;
    mf.points = 5;
    std::istringstream in(cmd_predict(mf).table.str());
    const std::string svg = cmd_plot(in);
    std::size_t count = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++count;
    EXPECT_EQ(count, 4u);
    std::istringstream bad("n,value\n1,2\n");
    EXPECT_THROW(cmd_plot(bad), DataError);
    std::istringstream no_n("risk\n1\n");
    EXPECT_THROW(cmd_plot(no_n), DataError);
}

TEST(IngestCommand, ReportAndExport) {
    TempDir dir;
    Manifest mf;
    mf.data = dir.write("in.svm", "1 1:1 2:0.5\n-1 2:2\n1 1:-1\n");
    mf.format = "libsvm";
    const IngestOutput out = cmd_ingest(mf);
    EXPECT_NE(out.report.find("dimension: 2"), std::string::npos);
    EXPECT_NE(out.report.find("rows: 3"), std::string::npos);
    EXPECT_EQ(out.csv.substr(0, out.csv.find('\n')), "x1,x2,y");
    mf.format = "xml";
    EXPECT_THROW(cmd_ingest(mf), UsageError);
}

TEST(ExitStatus, Mapping) {
    EXPECT_EQ(exit_status(UsageError("u")), 1);
    EXPECT_EQ(exit_status(DataError("d")), 2);
    EXPECT_EQ(exit_status(DimensionError("d")), 2);
    EXPECT_EQ(exit_status(NumericalError("n")), 3);
}

TEST(Tool, ExitCodesAndOutput) {
    TempDir dir;
    EXPECT_EQ(run_tool("", dir).status, 1);
    EXPECT_EQ(run_tool("gamma-max --bogus", dir).status, 1);
    EXPECT_EQ(run_tool("gamma-max --spec nope", dir).status, 1);
    EXPECT_EQ(run_tool("gamma-max --data " + dir.file("missing.csv"), dir).status, 2);
    EXPECT_EQ(run_tool("gamma-max --data " + dir.write("s.csv", "1,0,1\n2,0,0\n"), dir).status, 2);

    const ToolResult ok = run_tool("gamma-max --spec scalar --dim 1 --scheme uniform", dir);
    EXPECT_EQ(ok.status, 0);
    std::istringstream in(ok.out);
    const CsvTable t = parse_csv_table(in);
    ASSERT_EQ(t.rows().size(), 1u);
    EXPECT_NEAR(cell(t, 0, "gamma_max"), 2.0, 1e-14);
    EXPECT_NEAR(cell(t, 0, "mu_T_at_half_gamma_max"), 1.0, 1e-14); // T = 2H - gamma M at gamma = 1
    EXPECT_EQ(t.rows()[0][column(t, "trace_bound")], "2");
}

TEST(Tool, ManifestWithFlagOverride) {
    TempDir dir;
    const std::string manifest = dir.write("m.ini", "spec = scalar\ndim = 1\nsigma = 0\n"
                                                    "gamma = 0.5\nn-max = 10\npoints = 2\nmode = bias\n"
                                                    "replicates = 2\nthreads = 1\n");
    const ToolResult a = run_tool("run --manifest " + manifest, dir);
    ASSERT_EQ(a.status, 0) << a.err;
    const std::string csv = dir.file("run.csv");
    const ToolResult b = run_tool("run --manifest " + manifest + " --gamma 0.25 --out " + csv, dir);
    ASSERT_EQ(b.status, 0) << b.err;
    std::istringstream ia(a.out), ib(slurp(csv));
    const CsvTable ta = parse_csv_table(ia), tb = parse_csv_table(ib);
    ASSERT_EQ(ta.rows().size(), 2u);
    EXPECT_EQ(ta.rows()[0][1], "0.5");
    EXPECT_EQ(tb.rows()[0][1], "0.25");
    EXPECT_NEAR(cell(ta, 1, "risk"), oracle::scalar_bias(0.5, -1.0, 10), 1e-15);

    const std::string svg = dir.file("run.svg");
    EXPECT_EQ(run_tool("plot --input " + csv + " --out " + svg, dir).status, 0);
    EXPECT_NE(slurp(svg).find("<polyline"), std::string::npos);
}
