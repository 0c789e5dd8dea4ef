#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

namespace curerate {
namespace {

AnalysisOptions example1_options() {
    AnalysisOptions o;
    o.reference = ReferenceFit{1.51, 1.14, 0.96};
    return o;
}

TEST(Analyze, Example1FullPipeline) {
    const auto rep = analyze(read_matrix_csv(testing::fixture("example1_A.csv")), example1_options());
    EXPECT_EQ(rep.classification.verdict, Verdict::Applicable);
    ASSERT_TRUE(rep.absorption);
    ASSERT_TRUE(rep.cure_rate);
    // Log-log fit on the computed (unrounded) points; numpy/statsmodels reference.
    const auto* fit = rep.selected_fit();
    ASSERT_NE(fit, nullptr);
    EXPECT_NEAR(fit->lambda, 1.0441121681523926, 1e-9);
    EXPECT_NEAR(fit->k, 0.7355493425623443, 1e-9);
    EXPECT_NEAR(*rep.cure_rate, 0.11378033279373384, 1e-9);
    EXPECT_NEAR(*rep.cure_rate, 0.1126, 0.002);

    ASSERT_EQ(rep.early_warning.size(), 2u);
    EXPECT_EQ(rep.early_warning[0].first, (std::pair<int, int>{3, 5}));
    EXPECT_DOUBLE_EQ(rep.early_warning[0].second, rep.absorption->fundamental(1, 3));
    EXPECT_NEAR(rep.early_warning[0].second, 0.079563537822, 1e-11);
    EXPECT_NEAR(rep.early_warning[1].second, 0.109050871109, 1e-11);

    bool non_monotone = false;
    for (const auto& w : rep.warnings) non_monotone |= w.code == "NON_MONOTONE_RAW";
    EXPECT_TRUE(non_monotone);
}

TEST(Analyze, Example2StopsAtClassification) {
    const auto rep = analyze(read_matrix_csv(testing::fixture("example2_A.csv")), AnalysisOptions{});
    EXPECT_EQ(rep.classification.verdict, Verdict::Cyclic);
    EXPECT_FALSE(rep.cure_rate);
    EXPECT_FALSE(rep.absorption);
    EXPECT_TRUE(rep.fits.empty());
    ASSERT_EQ(rep.classification.offending_classes.size(), 1u);
    EXPECT_EQ(rep.classification.offending_classes[0].members, (std::vector<int>{3, 5, 6}));
    ASSERT_FALSE(rep.warnings.empty());
    EXPECT_EQ(rep.warnings.back().code, "CYCLIC_CLASS");
}

TEST(Analyze, BothFitsAndSimulation) {
    auto opts = example1_options();
    opts.both_fits = true;
    SimConfig sim;
    sim.n_paths = 20000;
    opts.simulation = sim;
    const auto rep = analyze(read_matrix_csv(testing::fixture("example1_A.csv")), opts);
    ASSERT_EQ(rep.fits.size(), 2u);
    EXPECT_EQ(rep.fits[0].method, FitMethod::LogLogOls);
    EXPECT_EQ(rep.fits[1].method, FitMethod::Nls);
    ASSERT_TRUE(rep.simulation);
    EXPECT_EQ(rep.simulation->size(), 8u);
    for (const auto& c : *rep.simulation) {
        EXPECT_LE(std::abs(c.simulated_cured - c.analytic_cured), 3 * c.se_cured + 1e-12) << c.state;
    }
}

TEST(Analyze, InvalidEarlyWarningPairIsSkipped) {
    auto opts = example1_options();
    opts.early_warning_pairs = {{1, 5}, {3, 9}};
    const auto rep = analyze(read_matrix_csv(testing::fixture("example1_A.csv")), opts);
    ASSERT_EQ(rep.early_warning.size(), 1u);
    EXPECT_EQ(rep.early_warning[0].first, (std::pair<int, int>{3, 9}));
}

TEST(ReportJson, CarriesRequiredSections) {
    const auto j = to_json(analyze(read_matrix_csv(testing::fixture("example1_A.csv")), example1_options()));
    EXPECT_EQ(j["schema_version"], "1.0");
    EXPECT_EQ(j["classification"]["verdict"], "applicable");
    EXPECT_EQ(j["t_inf"].size(), 8u);
    EXPECT_EQ(j["fundamental_matrix"].size(), 8u);
    EXPECT_EQ(j["survival_points"].size(), 10u);
    EXPECT_TRUE(j["fits"].contains("loglog_ols"));
    EXPECT_EQ(j["fits"]["loglog_ols"]["r_squared_scale"], "loglog");
    EXPECT_DOUBLE_EQ(j["reference_fit"]["lambda"].get<double>(), 1.51);
    EXPECT_DOUBLE_EQ(j["reference_fit"]["k"].get<double>(), 1.14);
    EXPECT_NEAR(j["reference_fit"]["cure_rate"].get<double>(), 0.1126, 0.002);
    for (const auto& w : j["warnings"]) {
        EXPECT_FALSE(w["code"].get<std::string>().empty());
        EXPECT_FALSE(w["message"].get<std::string>().empty());
    }
}

TEST(ReportJson, CyclicReportHasNullCureRate) {
    const auto j = to_json(analyze(read_matrix_csv(testing::fixture("example2_A.csv")), AnalysisOptions{}));
    EXPECT_TRUE(j["cure_rate"].is_null());
    EXPECT_EQ(j["classification"]["offending_classes"][0]["members"], nlohmann::json({3, 5, 6}));
    EXPECT_FALSE(j.contains("t_inf"));
}

TEST(Curve, FromExample1Report) {
    const auto j = to_json(analyze(read_matrix_csv(testing::fixture("example1_A.csv")), example1_options()));
    const auto rows = curve_from_report(j);
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows.front().x, 0.0);
    EXPECT_DOUBLE_EQ(rows.back().x, 8.0);
    bool saw_delta = false, saw_three = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0) {
            EXPECT_LT(rows[i].survival_fitted, rows[i - 1].survival_fitted);
        }
        if (rows[i].x == 0.5) {
            saw_delta = true;
            EXPECT_NEAR(rows[i].survival_raw, 0.37, 1e-12);
        }
        if (std::abs(rows[i].x - 3.0) < 1e-12) {
            saw_three = true;
            EXPECT_NEAR(rows[i].survival_fitted, 0.1126, 0.002);
        }
    }
    EXPECT_TRUE(saw_delta && saw_three);
    // 0.1 grid on [0, 8] gives 81 abscissae; the raw ones are all on it.
    EXPECT_EQ(rows.size(), 81u);

    std::ostringstream csv_out;
    write_curve_csv(csv_out, rows);
    EXPECT_EQ(csv_out.str().rfind("x,survival_raw,survival_fitted,hazard\n0.000000,1.000000,1.000000,", 0), 0u);
}

TEST(Curve, RejectsReportsWithoutFit) {
    const auto cyclic = to_json(analyze(read_matrix_csv(testing::fixture("example2_A.csv")), AnalysisOptions{}));
    try {
        curve_from_report(cyclic);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingPrerequisite);
    }
    EXPECT_THROW(curve_from_report(nlohmann::json::object()), Error);
}

TEST(InterpolateRaw, PiecewiseLinear) {
    const std::vector<SurvivalPoint> pts{{0, 1}, {1, 0.5}, {3, 0.1}};
    EXPECT_DOUBLE_EQ(interpolate_raw(pts, 0.5), 0.75);
    EXPECT_DOUBLE_EQ(interpolate_raw(pts, 2.0), 0.3);
    EXPECT_DOUBLE_EQ(interpolate_raw(pts, 4.0), 0.1);
}

TEST(ConfigFile, ParsesAndRejects) {
    std::istringstream in("# comment\nn_writeoff = 6\nweighting=balance  # trailing\n\ndelta = 0.25\n");
    const auto cfg = ConfigFile::parse(in).chain_config();
    EXPECT_EQ(cfg.n_writeoff, 6);
    EXPECT_EQ(cfg.weighting, Weighting::Balance);
    EXPECT_DOUBLE_EQ(cfg.delta, 0.25);
    EXPECT_NO_THROW(cfg.validate());

    std::istringstream bad("n_writeoff\n");
    EXPECT_THROW(ConfigFile::parse(bad), Error);
    std::istringstream bad_value("delta = abc\n");
    EXPECT_THROW(ConfigFile::parse(bad_value).chain_config(), Error);

    ChainConfig c;
    c.n_writeoff = 3;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.delta = 1.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.npl_threshold = 8;
    EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace curerate
