#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "volterra_lab/cli.hpp"

using namespace volterra_lab;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("volterra_lab_test_" + name);
}

}  // namespace

TEST(Cli, NoArgumentsPrintsUsage) {
    const auto r = run({});
    EXPECT_EQ(r.code, kExitParameter);
    EXPECT_NE(r.err.find("usage: volterra-lab"), std::string::npos);
}

TEST(Cli, Help) {
    const auto r = run({"--help"});
    EXPECT_EQ(r.code, kExitOk);
    EXPECT_NE(r.out.find("duality-check"), std::string::npos);
    EXPECT_NE(r.out.find("--alpha"), std::string::npos);
}

TEST(Cli, AlphaOutOfRange) {
    const auto r = run({"simulate", "--alpha", "0.6"});
    EXPECT_EQ(r.code, kExitParameter);
    EXPECT_NE(r.err.find("(0, 0.5)"), std::string::npos) << r.err;
    EXPECT_TRUE(r.out.empty());
}

TEST(Cli, ParameterErrors) {
    EXPECT_EQ(run({"frobnicate"}).code, kExitParameter);
    EXPECT_EQ(run({"simulate", "--n_steps", "ten"}).code, kExitParameter);
    EXPECT_EQ(run({"simulate", "--no-such-flag", "1"}).code, kExitParameter);
    EXPECT_EQ(run({"simulate", "--config", "/nonexistent/config.json"}).code, kExitParameter);
    EXPECT_EQ(run({"pathwise-probe", "--sigma", "holder:0.5"}).code, kExitParameter);
    EXPECT_EQ(run({"yw-check", "--n_max", "3", "--edge_fraction", "0.45", "--cutoff", "linear"}).code,
              kExitParameter);
}

TEST(Cli, NumericalFailure) {
    const auto r = run({"simulate", "--sigma", "one", "--lambda", "1e308", "--n_steps", "16"});
    EXPECT_EQ(r.code, kExitNumerical);
    EXPECT_NE(r.err.find("numerical failure"), std::string::npos);
}

TEST(Cli, CsvShape) {
    const auto r = run({"simulate", "--n_steps", "8", "--seed", "3"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "experiment,param_json,metric,value,stderr,pass");
    int rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line.rfind("simulate,\"{", 0), 0u) << line;
        EXPECT_EQ(line.find('\r'), std::string::npos);
        ++rows;
    }
    EXPECT_EQ(rows, 9);
    EXPECT_NE(r.out.find("\"\"seed\"\":3"), std::string::npos);
}

TEST(Cli, ConfigFileAndOutFile) {
    const auto cfg = temp_path("config.json");
    const auto csv = temp_path("out.csv");
    {
        std::ofstream f(cfg);
        f << R"({"schema_version": 1, "experiment": "picard", "parameters": {"n_steps": 32, "alpha": 0.2}})";
    }
    const auto r = run({"picard", "--config", cfg.string(), "--alpha", "0.3", "--out", csv.string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_TRUE(r.out.empty());
    std::ifstream in(csv);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("\"\"alpha\"\":0.3"), std::string::npos);
    EXPECT_NE(text.find("\"\"n_steps\"\":32"), std::string::npos);
    std::filesystem::remove(cfg);
    std::filesystem::remove(csv);
}

TEST(Cli, OutputIndependentOfThreadCount) {
    const std::vector<std::string> base{"moments-check", "--n_paths", "3000", "--n_steps", "32", "--seed", "5"};
    auto one = base, four = base;
    one.insert(one.end(), {"--threads", "1"});
    four.insert(four.end(), {"--threads", "4"});
    const auto a = run(one), b = run(four);
    ASSERT_EQ(a.code, kExitOk) << a.err;
    EXPECT_EQ(a.out, b.out);
    const auto c = run(base);
    EXPECT_EQ(a.out, c.out);
}

TEST(Cli, DualityCheckEndToEnd) {
    const auto r = run({"duality-check", "--n_paths", "5000", "--n_steps", "128"});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    EXPECT_NE(r.out.find("duality-check,"), std::string::npos);
    EXPECT_NE(r.out.find(",gap,"), std::string::npos);
}
