#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "volterra_lab/experiments.hpp"

using namespace volterra_lab;

namespace {

ExperimentConfig config(const std::string& experiment, const std::map<std::string, std::string>& overrides = {}) {
    return make_config(experiment, nullptr, overrides);
}

const ReportRow* find_row(const std::vector<ReportRow>& rows, const std::string& metric) {
    for (const auto& r : rows)
        if (r.metric == metric) return &r;
    return nullptr;
}

}  // namespace

TEST(Config, DefaultsFileAndOverridesLayer) {
    const json file = {{"schema_version", 1},
                       {"experiment", "simulate"},
                       {"parameters", {{"alpha", 0.3}, {"n_steps", 64}, {"sigma", "sqrt"}}}};
    const auto c = make_config("simulate", &file, {{"n_steps", "32"}, {"seed", "18446744073709551615"}});
    EXPECT_EQ(c.real("alpha"), 0.3);
    EXPECT_EQ(c.count("n_steps"), 32u);
    EXPECT_EQ(c.text("sigma"), "sqrt");
    EXPECT_EQ(c.seed(), 18446744073709551615ull);
    EXPECT_EQ(c.real("t_end"), 1.0);
    EXPECT_EQ(config("duality-check").real("t_end"), 0.5);
}

TEST(Config, RejectsBadDocuments) {
    const json unknown_key = {{"schema_version", 1}, {"params", json::object()}};
    EXPECT_THROW(make_config("simulate", &unknown_key, {}), ParameterError);
    const json unknown_param = {{"schema_version", 1}, {"parameters", {{"alpha_", 0.2}}}};
    EXPECT_THROW(make_config("simulate", &unknown_param, {}), ParameterError);
    const json version = {{"schema_version", 2}};
    EXPECT_THROW(make_config("simulate", &version, {}), ParameterError);
    const json mismatch = {{"schema_version", 1}, {"experiment", "picard"}};
    EXPECT_THROW(make_config("simulate", &mismatch, {}), ParameterError);
    const json wrong_type = {{"schema_version", 1}, {"parameters", {{"n_steps", -3}}}};
    EXPECT_THROW(make_config("simulate", &wrong_type, {}), ParameterError);
    EXPECT_THROW(config("simulate", {{"bogus", "1"}}), ParameterError);
    EXPECT_THROW(config("nope"), ParameterError);
}

TEST(Config, ValidatesRanges) {
    try {
        config("simulate", {{"alpha", "0.6"}});
        FAIL() << "alpha = 0.6 accepted";
    } catch (const ParameterError& e) {
        EXPECT_NE(std::string(e.what()).find("(0, 0.5)"), std::string::npos) << e.what();
    }
    EXPECT_THROW(config("simulate", {{"gamma", "1.5"}}), ParameterError);
    EXPECT_THROW(config("simulate", {{"n_steps", "3"}}), ParameterError);
    EXPECT_THROW(config("simulate", {{"t_end", "-1"}}), ParameterError);
    EXPECT_THROW(config("simulate", {{"edge_fraction", "0.5"}}), ParameterError);
    EXPECT_THROW(config("sweep", {{"alpha_grid", "0.1,0.5"}}), ParameterError);
}

TEST(Parsers, NumbersAndLists) {
    EXPECT_EQ(detail::parse_real("x", "2.5e-1"), 0.25);
    EXPECT_THROW(detail::parse_real("x", "0.25abc"), ParameterError);
    EXPECT_THROW(detail::parse_real("x", ""), ParameterError);
    EXPECT_THROW(detail::parse_unsigned("n", "-4"), ParameterError);
    EXPECT_THROW(detail::parse_unsigned("n", "4.0"), ParameterError);
    EXPECT_EQ(detail::parse_real_list("g", "0.1,0.2,0.3"), (std::vector<double>{0.1, 0.2, 0.3}));
    EXPECT_EQ(detail::parse_real_list("g", "0:1:5"), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
    EXPECT_THROW(detail::parse_real_list("g", "0.1,,0.3"), ParameterError);
}

TEST(Presets, KnownAndUnknown) {
    EXPECT_EQ(sigma_preset("linear", 1.0)(-2.0), -2.0);
    EXPECT_EQ(sigma_preset("sqrt", 1.0)(-2.0), 0.0);
    EXPECT_DOUBLE_EQ(sigma_preset("holder:0.5", 1.0)(4.0), 2.0);
    EXPECT_EQ(sigma_preset("holder", 0.7).gamma, 0.7);
    EXPECT_THROW(sigma_preset("cubic", 1.0), ParameterError);
    EXPECT_EQ(g_preset("const:2")(0.3), 2.0);
    EXPECT_FALSE(static_cast<bool>(g_preset("zero")));
    EXPECT_NEAR(phi_preset("unit_bump:[-2,1]").mass(), 1.0, 1e-14);
    EXPECT_THROW(phi_preset("bump:(0,1)"), ParameterError);
    EXPECT_DOUBLE_EQ(kappa_preset("2+sin").kappa(0.0, 0.0), 2.0);
    EXPECT_THROW(kappa_preset("const:0"), ParameterError);
    EXPECT_TRUE(rho_preset("sqrt").is_sqrt);
    EXPECT_DOUBLE_EQ(rho_preset("sqrt_plus_linear:2")(4.0), 10.0);
}

TEST(Csv, FormattingAndQuoting) {
    std::ostringstream os;
    write_csv(os, {{"e", R"({"a":1,"b":"x"})", "m", 0.1, 0.25, true}, {"e", "{}", "n", 1.0 / 3.0, std::nullopt, std::nullopt}});
    EXPECT_EQ(os.str(),
              "experiment,param_json,metric,value,stderr,pass\n"
              "e,\"{\"\"a\"\":1,\"\"b\"\":\"\"x\"\"}\",m,0.10000000000000001,0.25,true\n"
              "e,{},n,0.33333333333333331,,\n");
    EXPECT_EQ(detail::format_real(std::nan("")), "nan");
    EXPECT_EQ(detail::format_real(-INFINITY), "-inf");
}

TEST(Runners, SimulateWithZeroNoiseIsForcing) {
    const auto rows = run_experiment(config("simulate", {{"sigma", "zero"}, {"g", "const:2"}, {"n_steps", "16"}}));
    ASSERT_EQ(rows.size(), 17u);
    EXPECT_EQ(rows.front().metric, "X(t=0)");
    EXPECT_EQ(rows.front().value, 1.0);
    EXPECT_NEAR(rows.back().value, 1.0 + 2.0 / 0.75, 1e-12);
    EXPECT_EQ(rows.back().experiment, "simulate");
    EXPECT_EQ(json::parse(rows.back().param_json)["n_steps"], 16);
}

TEST(Runners, PicardConverges) {
    const auto rows = run_experiment(config("picard", {{"n_steps", "64"}}));
    const auto* n = find_row(rows, "n_iterations");
    ASSERT_NE(n, nullptr);
    EXPECT_TRUE(n->pass.value());
    EXPECT_LT(find_row(rows, "euler_picard_sup_diff")->value, 1e-10);
}

TEST(Runners, MomentsCheckConstantNoise) {
    const auto rows = run_experiment(config("moments-check", {{"sigma", "one"}, {"n_paths", "4000"}, {"n_steps", "64"}}));
    int checked = 0;
    for (const auto& r : rows)
        if (r.pass) {
            EXPECT_TRUE(*r.pass) << r.metric;
            ++checked;
        }
    EXPECT_EQ(checked, 8);
}

TEST(Runners, YwCheckPasses) {
    const auto rows = run_experiment(config("yw-check", {{"n_max", "3"}, {"grid_points", "500"}}));
    EXPECT_TRUE(find_row(rows, "all_properties")->pass.value());
    EXPECT_DOUBLE_EQ(find_row(rows, "a(n=2)")->value, std::exp(-3.0));
}

TEST(Runners, SweepHasOneRowPerCell) {
    const auto c = config("sweep", {{"alpha_grid", "0.1,0.3"}, {"gamma_grid", "0.5,0.6,1"}, {"n_steps", "32"},
                                    {"n_rep", "1"}});
    const auto rows = run_experiment(c);
    ASSERT_EQ(rows.size(), 6u);
    int subcritical = 0;
    for (const auto& r : rows) {
        const json p = json::parse(r.param_json);
        const bool super = p["gamma"].get<double>() > 1.0 / (2.0 * (1.0 - p["alpha"].get<double>()));
        EXPECT_EQ(r.metric.ends_with(":SUBCRITICAL"), !super) << r.param_json;
        EXPECT_EQ(p["xi_lower"].is_null(), !super);
        if (!super) ++subcritical;
    }
    // γ = 0.5 sits below 1/(2(1-α)) for both α; γ = 0.6 only for α = 0.3.
    EXPECT_EQ(subcritical, 3);
}

TEST(Runners, PathwiseProbeRefusesSubcritical) {
    EXPECT_THROW(run_experiment(config("pathwise-probe", {{"sigma", "holder:0.5"}})), ParameterError);
    const auto rows = run_experiment(
        config("pathwise-probe", {{"sigma", "holder:0.5"}, {"allow_subcritical", "true"}, {"n_steps", "32"},
                                  {"n_rep", "2"}}));
    EXPECT_NE(find_row(rows, "picard_gap_max"), nullptr);
}

TEST(Runners, PathwiseProbeLipschitz) {
    const auto rows = run_experiment(config("pathwise-probe", {{"n_steps", "64"}, {"n_rep", "4"}}));
    EXPECT_TRUE(find_row(rows, "picard_gap_max")->pass.value());
    EXPECT_TRUE(find_row(rows, "picard_all_converged")->pass.value());
}

TEST(SmoothProbe, UnitKernelControlAndZeroNoise) {
    SieProblem p;
    p.kernel = kappa_preset("one");
    p.sigma = sigma_preset("linear", 1.0);
    p.x0 = 1.0;
    const double tol = 1e-12;
    const auto r = smooth_kernel_probe(p, TimeGrid(1.0, 32), 2, 4, 7, 1000, tol, 1);
    EXPECT_LT(r.control_gap_max, 10.0 * tol);
    EXPECT_TRUE(r.converged);
    ASSERT_EQ(r.levels.size(), 3u);
    EXPECT_EQ(r.levels[2].n_steps, 128u);

    p.sigma = sigma_preset("zero", 1.0);
    const auto z = smooth_kernel_probe(p, TimeGrid(1.0, 32), 2, 2, 7, 1000, tol, 1);
    for (const auto& lv : z.levels) EXPECT_EQ(lv.two_init_gap_max, 0.0);
    EXPECT_EQ(z.levels[0].refinement_gap_mean, 0.0);
}
