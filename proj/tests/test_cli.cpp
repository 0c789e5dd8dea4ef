#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_support.hpp"

namespace curerate {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("curerate_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const {
        const std::string cmd = std::string(CURERATE_CLI) + " " + args + " 2>" + (dir_ / "stderr.txt").string() +
                                " >" + (dir_ / "stdout.txt").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static std::string fx(const std::string& name) { return testing::fixture(name); }

    fs::path dir_;
};

TEST_F(Cli, EstimateFromSnapshots) {
    ASSERT_EQ(run("estimate --prev " + fx("tape_2023-03-31.csv") + " --curr " + fx("tape_2024-03-31.csv") +
                  " --config " + fx("tape.conf") + " --out " + path("A.csv")),
              0);
    const auto loaded = read_matrix_csv(path("A.csv"));
    EXPECT_EQ(loaded.matrix.n_states(), 10u);
    const auto sidecar = nlohmann::json::parse(slurp(path("A.csv.counts.json")));
    EXPECT_EQ(sidecar["n_transitions"], 10);
    EXPECT_EQ(sidecar["rows"].size(), 8u);
}

TEST_F(Cli, TransitionsInputMatchesSnapshots) {
    ASSERT_EQ(run("estimate --prev " + fx("tape_2023-03-31.csv") + " --curr " + fx("tape_2024-03-31.csv") +
                  " --config " + fx("tape.conf") + " --out " + path("from_tapes.csv") + " --emit-transitions " +
                  path("pairs.csv")),
              0);
    ASSERT_EQ(run("estimate --transitions " + path("pairs.csv") + " --config " + fx("tape.conf") + " --out " +
                  path("from_pairs.csv")),
              0);
    ASSERT_EQ(run("estimate --transitions " + fx("tape_transitions.csv") + " --config " + fx("tape.conf") +
                  " --out " + path("from_fixture.csv")),
              0);
    EXPECT_EQ(slurp(path("from_tapes.csv")), slurp(path("from_pairs.csv")));
    EXPECT_EQ(slurp(path("from_tapes.csv")), slurp(path("from_fixture.csv")));
}

TEST_F(Cli, EstimateDateMismatchExits3) {
    EXPECT_EQ(run("estimate --prev " + fx("tape_2023-03-31.csv") + " --curr " + fx("tape_2025-03-31.csv") +
                  " --out " + path("A.csv")),
              3);
}

TEST_F(Cli, EstimateParseErrorExits2) {
    std::ofstream(path("bad.csv")) << "loan_id,as_of\nx,2023-01-01\n";
    EXPECT_EQ(run("estimate --prev " + path("bad.csv") + " --curr " + fx("tape_2024-03-31.csv") + " --out " +
                  path("A.csv")),
              2);
    EXPECT_EQ(run("estimate --bogus-flag"), 2);
}

TEST_F(Cli, AnalyzeExample1) {
    ASSERT_EQ(run("analyze " + fx("example1_A.csv") + " --config " + fx("example1.conf") + " --out " +
                  path("report.json")),
              0);
    const auto j = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_EQ(j["classification"]["verdict"], "applicable");
    EXPECT_NEAR(j["cure_rate"].get<double>(), 0.1126, 0.002);
    const auto printed = testing::example1_printed_t_inf();
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(j["t_inf"][i][0].get<double>(), printed(i, 0), 0.01);
    EXPECT_TRUE(j.contains("reference_fit"));
}

TEST_F(Cli, AnalyzeExample2IsCyclicButSucceeds) {
    ASSERT_EQ(run("analyze " + fx("example2_A.csv") + " --config " + fx("example2.conf") + " --out " +
                  path("report.json")),
              0);
    const auto j = nlohmann::json::parse(slurp(path("report.json")));
    EXPECT_EQ(j["classification"]["verdict"], "cyclic");
    EXPECT_TRUE(j["cure_rate"].is_null());
    EXPECT_EQ(j["classification"]["offending_classes"][0]["members"], nlohmann::json({3, 5, 6}));
    EXPECT_EQ(run("curve " + path("report.json") + " --out " + path("curve.csv")), 5);
}

TEST_F(Cli, AnalyzeRejectsBadRowSum) {
    std::ofstream(path("bad.csv")) << "1,0,0,0,0,0\n0,1,0,0,0,0\n0.5,0.5,0,0,0,0\n"
                                      "0.2,0.2,0,0.2,0.2,0.6\n0,1,0,0,0,0\n0,1,0,0,0,0\n";
    EXPECT_EQ(run("analyze " + path("bad.csv")), 4);
    std::ofstream(path("junk.csv")) << "1,0,0\n0,1,0\n0.5,0.5,zz\n";
    EXPECT_EQ(run("analyze " + path("junk.csv")), 2);
    EXPECT_EQ(run("analyze " + path("missing.csv")), 2);
}

TEST_F(Cli, AnalyzeConfigDimensionMismatch) {
    std::ofstream(path("n6.conf")) << "n_writeoff = 6\n";
    EXPECT_EQ(run("analyze " + fx("example1_A.csv") + " --config " + path("n6.conf")), 4);
}

TEST_F(Cli, AnalyzeCsvFormat) {
    ASSERT_EQ(run("analyze " + fx("example1_A.csv") + " --format csv --out " + path("table.csv")), 0);
    const auto text = slurp(path("table.csv"));
    EXPECT_EQ(text.rfind("state,months_past_due,cure_probability,loss_probability,expected_time\nS2,,0.370000,0.630000,1.000000\n", 0), 0u);
}

TEST_F(Cli, CurveFromReport) {
    ASSERT_EQ(run("analyze " + fx("example1_A.csv") + " --config " + fx("example1.conf") + " --out " +
                  path("report.json")),
              0);
    ASSERT_EQ(run("curve " + path("report.json") + " --out " + path("curve.csv")), 0);
    std::istringstream lines(slurp(path("curve.csv")));
    std::string line;
    std::getline(lines, line);
    EXPECT_EQ(line, "x,survival_raw,survival_fitted,hazard");
    double prev = 2.0;
    bool saw_three = false;
    while (std::getline(lines, line)) {
        const auto f = csv::split(line);
        ASSERT_EQ(f.size(), 4u);
        const double fitted = std::stod(f[2]);
        EXPECT_LT(fitted, prev);
        prev = fitted;
        if (f[0] == "3.000000") {
            saw_three = true;
            EXPECT_NEAR(fitted, 0.1126, 0.002);
        }
    }
    EXPECT_TRUE(saw_three);

    std::ofstream(path("nofit.json")) << R"({"classification": {"verdict": "applicable"}})";
    EXPECT_EQ(run("curve " + path("nofit.json")), 5);
    std::ofstream(path("broken.json")) << "{not json";
    EXPECT_EQ(run("curve " + path("broken.json")), 2);
}

TEST_F(Cli, SimulateDeterministic) {
    const std::string args = "simulate " + fx("example1_A.csv") + " --seed 42 --n-paths 100000 --start 5";
    ASSERT_EQ(run(args + " --out " + path("a.json")), 0);
    ASSERT_EQ(run(args + " --threads 4 --out " + path("b.json")), 0);
    EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
    const auto j = nlohmann::json::parse(slurp(path("a.json")));
    const auto& r = j["simulation"]["per_start"][0];
    EXPECT_LE(std::abs(r["cured"].get<double>() - 0.155), 3 * r["se_cured"].get<double>());
    EXPECT_TRUE(r.contains("analytic"));
}

TEST_F(Cli, SimulateSinglePath) {
    ASSERT_EQ(run("simulate " + fx("example1_A.csv") + " --n-paths 1 --out " + path("one.json")), 0);
    const auto j = nlohmann::json::parse(slurp(path("one.json")));
    for (const auto& r : j["simulation"]["per_start"]) {
        const double c = r["cured"].get<double>();
        EXPECT_TRUE(c == 0.0 || c == 1.0);
    }
}

TEST_F(Cli, SimulateTraceAndPortfolio) {
    ASSERT_EQ(run("simulate " + fx("example1_A.csv") + " --n-paths 100 --composition 0,0,1,0,0,0,0,0,0,0" +
                  " --horizon 1 --trace " + path("trace.csv") + " --trace-paths 5 --out " + path("p.json")),
              0);
    const auto j = nlohmann::json::parse(slurp(path("p.json")));
    EXPECT_DOUBLE_EQ(j["portfolio"]["occupancy"][0][0].get<double>(), 0.37);
    EXPECT_EQ(slurp(path("trace.csv")).rfind("path_id,step,state\n", 0), 0u);
}

}  // namespace
}  // namespace curerate
