#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "test_support.hpp"

namespace curerate {
namespace {

LoanSnapshot loan(std::string id, int dpd, bool forborne = false, const char* date = "2023-03-31",
                  double balance = 100.0) {
    return {std::move(id), parse_date(date), dpd, forborne, balance};
}

TEST(AssignState, MapsMonthsPastDueToCanonicalIndex) {
    ChainConfig cfg;
    EXPECT_EQ(assign_state(loan("a", 0), cfg), state::kCured);
    EXPECT_EQ(assign_state(loan("a", 45), cfg), 3);
    EXPECT_EQ(assign_state(loan("a", 250), cfg), state::kLost);
    EXPECT_EQ(assign_state(loan("a", 10, true), cfg), state::kForborne);
}

TEST(AssignState, FirstNonPerformingStateIsIndexFive) {
    ChainConfig cfg;
    EXPECT_EQ(assign_state(loan("a", 89), cfg), 4);
    EXPECT_EQ(assign_state(loan("a", 90), cfg), 5);
    EXPECT_EQ(state::months_past_due(5), 3);
}

TEST(AssignState, ForborneAtOrBeyondThresholdIsPastDue) {
    ChainConfig cfg;
    EXPECT_EQ(assign_state(loan("a", 95, true), cfg), 5);
    EXPECT_EQ(assign_state(loan("a", 245, true), cfg), state::kLost);
    EXPECT_EQ(assign_state(loan("a", 0, true), cfg), state::kForborne);
}

TEST(AssignState, MonotoneInDaysPastDue) {
    ChainConfig cfg;
    int prev = assign_state(loan("a", 0), cfg);
    for (int dpd = 1; dpd < 400; ++dpd) {
        const int s = assign_state(loan("a", dpd), cfg);
        // Lost (index 1) sits after every PastDue month in severity.
        auto severity = [&](int idx) { return idx == state::kLost ? 1000 : idx; };
        EXPECT_GE(severity(s), severity(prev)) << "dpd " << dpd;
        prev = s;
    }
}

TEST(AssignState, CustomMonthLength) {
    ChainConfig cfg;
    cfg.month_length_days = 31;
    EXPECT_EQ(assign_state(loan("a", 30), cfg), state::kCured);
    EXPECT_EQ(assign_state(loan("a", 31), cfg), 3);
}

TEST(PairSnapshots, StandardMigrations) {
    ChainConfig cfg;
    std::vector<LoanSnapshot> prev{loan("a", 45), loan("b", 10, true), loan("c", 10, true),
                                   loan("d", 0), loan("e", 300)};
    std::vector<LoanSnapshot> curr{loan("a", 0, false, "2024-03-31"), loan("b", 0, false, "2024-03-31"),
                                   loan("c", 120, false, "2024-03-31"), loan("d", 50, false, "2024-03-31")};
    const auto ts = pair_snapshots(prev, curr, cfg);
    ASSERT_EQ(ts.size(), 3u);
    EXPECT_EQ(ts[0], (ObservedTransition{"a", 3, state::kCured, 1.0}));
    EXPECT_EQ(ts[1], (ObservedTransition{"b", state::kForborne, state::kCured, 1.0}));
    EXPECT_EQ(ts[2], (ObservedTransition{"c", state::kForborne, state::kLost, 1.0}));
}

TEST(PairSnapshots, DisappearedLoansFollowPolicy) {
    ChainConfig cfg;
    std::vector<LoanSnapshot> prev{loan("a", 45), loan("b", 95)};
    std::vector<LoanSnapshot> curr{loan("a", 0, false, "2024-03-31")};
    auto ts = pair_snapshots(prev, curr, cfg);
    ASSERT_EQ(ts.size(), 2u);
    EXPECT_EQ(ts[1].to_state, state::kLost);

    cfg.disappearance_policy = DisappearancePolicy::Exclude;
    ts = pair_snapshots(prev, curr, cfg);
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_EQ(ts[0].loan_id, "a");
}

TEST(PairSnapshots, BalanceWeighting) {
    ChainConfig cfg;
    cfg.weighting = Weighting::Balance;
    std::vector<LoanSnapshot> prev{loan("a", 45, false, "2023-03-31", 250.0)};
    std::vector<LoanSnapshot> curr{loan("a", 0, false, "2024-03-31", 10.0)};
    const auto ts = pair_snapshots(prev, curr, cfg);
    ASSERT_EQ(ts.size(), 1u);
    EXPECT_DOUBLE_EQ(ts[0].weight, 250.0);
}

TEST(PairSnapshots, DateToleranceAndMismatch) {
    ChainConfig cfg;
    std::vector<LoanSnapshot> prev{loan("a", 45)};
    EXPECT_NO_THROW(pair_snapshots(prev, {loan("a", 0, false, "2024-04-15")}, cfg));
    EXPECT_NO_THROW(pair_snapshots(prev, {loan("a", 0, false, "2024-03-16")}, cfg));
    try {
        pair_snapshots(prev, {loan("a", 0, false, "2025-03-31")}, cfg);
        FAIL() << "expected DateMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DateMismatch);
    }
    try {
        pair_snapshots(prev, {loan("a", 0, false, "2024-04-16")}, cfg);
        FAIL() << "expected DateMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DateMismatch);
    }
}

TEST(PairSnapshots, LeapDayAnniversary) {
    ChainConfig cfg;
    cfg.date_tolerance_days = 0;
    EXPECT_NO_THROW(pair_snapshots({loan("a", 45, false, "2024-02-29")}, {loan("a", 0, false, "2025-02-28")}, cfg));
}

TEST(PairSnapshots, DuplicateLoanRejected) {
    ChainConfig cfg;
    try {
        pair_snapshots({loan("a", 45), loan("a", 60)}, {loan("a", 0, false, "2024-03-31")}, cfg);
        FAIL() << "expected DuplicateLoan";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DuplicateLoan);
    }
}

TEST(PairSnapshots, DeterministicAndOrderIndependent) {
    ChainConfig cfg;
    std::vector<LoanSnapshot> prev, curr;
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> dpd(0, 300);
    std::bernoulli_distribution flag(0.2);
    for (int i = 0; i < 200; ++i) {
        const auto id = "L" + std::to_string(i);
        prev.push_back(loan(id, dpd(rng), flag(rng)));
        if (i % 7 != 0) curr.push_back(loan(id, dpd(rng), flag(rng), "2024-03-31"));
    }
    const auto base = pair_snapshots(prev, curr, cfg);
    EXPECT_TRUE(std::is_sorted(base.begin(), base.end(),
                               [](const auto& a, const auto& b) { return a.loan_id < b.loan_id; }));
    for (const auto& t : base) EXPECT_GE(t.from_state, 2);
    for (int shuffle = 0; shuffle < 5; ++shuffle) {
        std::shuffle(prev.begin(), prev.end(), rng);
        std::shuffle(curr.begin(), curr.end(), rng);
        EXPECT_EQ(pair_snapshots(prev, curr, cfg), base);
    }
}

TEST(SnapshotCsv, ParsesAndValidates) {
    std::istringstream good(
        "loan_id,as_of,days_past_due,forborne,balance\n"
        "\"id,1\",2023-03-31,45,true,10.5\n"
        "b,2023-03-31,0,0,0\n");
    const auto snaps = read_snapshots(good);
    ASSERT_EQ(snaps.size(), 2u);
    EXPECT_EQ(snaps[0].loan_id, "id,1");
    EXPECT_TRUE(snaps[0].forborne);
    EXPECT_DOUBLE_EQ(snaps[0].balance, 10.5);

    std::istringstream bad_header("id,as_of,dpd,forborne,balance\n");
    EXPECT_THROW(read_snapshots(bad_header), Error);
    std::istringstream bad_date("loan_id,as_of,days_past_due,forborne,balance\na,2023-02-30,1,0,1\n");
    EXPECT_THROW(read_snapshots(bad_date), Error);
    std::istringstream negative("loan_id,as_of,days_past_due,forborne,balance\na,2023-02-01,-1,0,1\n");
    try {
        read_snapshots(negative);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvariantViolation);
    }
    std::istringstream dup("loan_id,as_of,days_past_due,forborne,balance\na,2023-02-01,1,0,1\na,2023-02-01,2,0,1\n");
    try {
        read_snapshots(dup);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DuplicateLoan);
    }
}

TEST(SnapshotCsv, FixtureTapesMatchTransitionsFixture) {
    ChainConfig cfg;
    const auto ts = pair_snapshots(read_snapshots(testing::fixture("tape_2023-03-31.csv")),
                                   read_snapshots(testing::fixture("tape_2024-03-31.csv")), cfg);
    EXPECT_EQ(ts, read_transitions(testing::fixture("tape_transitions.csv")));
}

}  // namespace
}  // namespace curerate
