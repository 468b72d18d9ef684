#include <gtest/gtest.h>

#include "picard_lod/cli.hpp"

#include <sstream>

using namespace picard_lod;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kProblems = PICARD_LOD_PROBLEMS_DIR;

struct Run {
    int code;
    std::string out, err;
};

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("picard_lod_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "picard-lod");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string problem(const std::string& stem) { return (kProblems / (stem + ".json")).string(); }

json report(const fs::path& dir, const std::string& name) {
    std::ifstream in(dir / name);
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_text(const fs::path& dir, const std::string& name, const std::string& text) {
    fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
}

const char* kHeat = R"J({
  "schema_version": 1,
  "domain": {"a": 0.1, "b": 0.1, "S": [[-1, 1]]},
  "order": {"d": 1, "L": 2},
  "rhs": "Dx2(y1)",
  "initial": ["x^2"]
})J";

}  // namespace

TEST(CliSolve, HeatSinConverges) {
    auto dir = scratch("heat_sin");
    auto r = run({"solve", problem("heat_sin"), "--out-dir", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto rep = report(dir, "heat_sin.solve.json");
    EXPECT_EQ(rep["status"], "converged");
    EXPECT_LE(rep["residual"]["pde"].get<double>(), 1e-7);
    EXPECT_TRUE(fs::exists(dir / "heat_sin.solve.csv"));
}

TEST(CliSolve, CertifyFirstRejectsKowalevskiData) {
    auto dir = scratch("heat_rational");
    auto r = run({"solve", problem("heat_rational"), "--certify-first", "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 2) << r.err;
    auto rep = report(dir, "heat_rational.solve.json");
    EXPECT_EQ(rep["status"], "rejected");
    EXPECT_EQ(rep["certificate"]["overall"], "diverging");
}

TEST(CliSolve, MissingOrderKeyIsNamed) {
    auto dir = scratch("missing_d");
    std::string text = kHeat;
    text.replace(text.find("\"d\": 1, "), 8, "");
    auto f = write_text(dir, "bad.json", text);
    auto r = run({"solve", f.string(), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("missing required key 'd'"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("bad.json:4:"), std::string::npos) << r.err;
}

TEST(CliSolve, UnknownKeyHasLineAndColumn) {
    auto dir = scratch("unknown");
    std::string text = kHeat;
    text.replace(text.find("\"L\": 2"), 6, "\"L\": 2, \"q\": 3");
    auto f = write_text(dir, "bad.json", text);
    auto r = run({"solve", f.string(), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("bad.json:4:29: unknown key 'q'"), std::string::npos) << r.err;
}

TEST(CliSolve, SchemaErrors) {
    auto dir = scratch("schema");
    auto expect_error = [&](std::string from, std::string to, const std::string& needle) {
        std::string text = kHeat;
        text.replace(text.find(from), from.size(), to);
        auto f = write_text(dir, "bad.json", text);
        auto r = run({"certify", f.string(), "--out-dir", dir.string()});
        EXPECT_EQ(r.code, 1) << to;
        EXPECT_NE(r.err.find(needle), std::string::npos) << r.err;
    };
    expect_error("\"schema_version\": 1", "\"schema_version\": 2", "bad.json:2:21: unsupported schema_version");
    expect_error("Dx2(y1)", "Dx3(y1)", "bad.json:5:10: in 'rhs'");
    expect_error("\"x^2\"", "\"x^2\", \"x\"", "'initial' must list d = 1");
    expect_error("\"a\": 0.1", "\"a\": \"wide\"", "'domain/a' must be a number");
    expect_error("\"d\": 1", "\"d\": 0", "'order/d' is out of range");
    expect_error("\"rhs\"", "\"growth\": [{\"class\": \"wild\"}], \"rhs\"", "unknown growth class 'wild'");
    expect_error("[-1, 1]]", "[-1, 1]", "invalid JSON");
}

TEST(CliSolve, MissingFileAndBadFlags) {
    EXPECT_EQ(run({"solve", "/nonexistent/problem.json"}).code, 1);
    EXPECT_EQ(run({"solve"}).code, 1);
    EXPECT_EQ(run({"frobnicate", problem("heat_sin")}).code, 1);
    EXPECT_EQ(run({"certify", problem("heat_sin"), "--mode", "sloppy"}).code, 1);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(CliCertify, ExitCodeMatrix) {
    auto dir = scratch("certify");
    EXPECT_EQ(run({"certify", problem("wave_analytic"), "--mode", "paper", "--out-dir", dir.string()}).code, 0);
    EXPECT_EQ(run({"certify", problem("wave_analytic"), "--paper-mode", "--out-dir", dir.string()}).code, 0);
    EXPECT_EQ(run({"certify", problem("heat_rational"), "--out-dir", dir.string()}).code, 2);
    EXPECT_EQ(run({"certify", problem("ode_linear"), "--out-dir", dir.string()}).code, 0);

    auto r = run({"certify", problem("burgers"), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 2) << r.err;
    auto rep = report(dir, "burgers.certify.json");
    EXPECT_NE(rep.dump().find("hyperfactorial"), std::string::npos);
}

TEST(CliCertify, CsvHasOneLinePerTerm) {
    auto dir = scratch("csv");
    ASSERT_EQ(run({"certify", problem("heat_sin"), "--nmax", "15", "--out-dir", dir.string()}).code, 0);
    std::string csv = slurp(dir / "heat_sin.certify.csv");
    EXPECT_EQ(csv.rfind("k,n,log_lambda", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
}

TEST(CliSeries, ZeroTermsEmitsInitialPart) {
    auto dir = scratch("series0");
    ASSERT_EQ(run({"series", problem("heat_cos"), "--terms", "0", "--out-dir", dir.string()}).code, 0);
    auto rep = report(dir, "heat_cos.series.json");
    auto y = funcspace::from_json(rep["solution"]);
    auto pf = cli::load_problem(problem("heat_cos"));
    picard_pde::PicardOperator op(pf.pb);
    EXPECT_LE(cli::max_coef_diff(y, op.i0()), 0.0);
    EXPECT_EQ(rep["block_sup"].size(), 0u);
}

TEST(CliSeries, NonLinearProblemIsRejected) {
    auto dir = scratch("series_nl");
    auto r = run({"series", problem("burgers"), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("not of the linear class"), std::string::npos);
    EXPECT_EQ(run({"series", problem("heat_rational"), "--out-dir", dir.string()}).code, 2);
}

TEST(CliCompare, GenericAndOracle) {
    auto dir = scratch("compare");
    ASSERT_EQ(run({"compare", problem("heat_cos"), "--terms", "6", "--out-dir", dir.string()}).code, 0);
    auto rep = report(dir, "heat_cos.compare.json");
    EXPECT_LE(rep["max_deviation"].get<double>(), 1e-10);
    EXPECT_EQ(rep["deviation"].size(), 7u);

    ASSERT_EQ(run({"compare", problem("heat_cos"), "--against", "oracle", "--out-dir", dir.string()}).code, 0);
    EXPECT_LE(report(dir, "heat_cos.compare.json")["max_deviation"].get<double>(), 1e-10);
    EXPECT_EQ(run({"compare", problem("ode_linear"), "--out-dir", dir.string()}).code, 1);
    EXPECT_EQ(run({"compare", problem("heat_sin"), "--against", "nothing", "--out-dir", dir.string()}).code, 1);
}

TEST(CliDemo, HeatWithinOracleDistance) {
    auto dir = scratch("demo");
    ASSERT_EQ(run({"demo", "heat", "--out-dir", dir.string()}).code, 0);
    auto rep = report(dir, "heat.demo.json");
    EXPECT_LE(rep["series_oracle_distance"].get<double>(), 1e-8);
    EXPECT_LE(rep["generic_oracle_distance"].get<double>(), 1e-8);
    EXPECT_EQ(run({"demo", "laplace", "--out-dir", dir.string()}).code, 1);
}

TEST(CliDeterminism, ByteIdenticalReports) {
    auto a = scratch("det_a"), b = scratch("det_b");
    for (auto* cmd : {"solve", "certify"}) {
        for (auto& dir : {a, b}) run({cmd, problem("burgers_poly"), "--out-dir", dir.string()});
        for (auto& dir : {a, b}) run({cmd, problem("heat_sin"), "--out-dir", dir.string()});
    }
    int files = 0;
    for (auto& e : fs::directory_iterator(a)) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
    }
    EXPECT_EQ(files, 8);
}
