#include <set>

#include "support.hpp"

using namespace atlas;
using namespace atlas::traj;
using atlas::test::TempDir;

namespace {

RoutingPool ab_pool() {
    return build_pool({{"A", std::nullopt, ""}, {"B", std::nullopt, ""}}, {{"T", ToolKind::simulated, json::object()}},
                      {{"A", {}}, {"B", {}}});
}

Trajectory routed_to(const std::string& model) {
    return Trajectory{{Think{"t"}, Route{model, "T", "q"}, Information{"i"}, Answer{"a"}}, std::nullopt, {}};
}

} // namespace

TEST(Normalize, TrimCaseAndTrailingPeriods) {
    EXPECT_EQ(normalize_answer("  Paris.. \n"), "paris");
    EXPECT_EQ(normalize_answer("A. B ."), "a. b");
    EXPECT_EQ(normalize_answer(" \t"), "");
    EXPECT_EQ(normalize_answer("3.5"), "3.5");
}

TEST(Outcome, ExactMatcher) {
    EXPECT_EQ(outcome_reward("Paris.", "paris", Matcher::exact), 1.0);
    EXPECT_EQ(outcome_reward("Paris, France", "paris", Matcher::exact), 0.0);
    EXPECT_EQ(outcome_reward("", "paris", Matcher::exact), 0.0);
}

TEST(Outcome, NumericMatcherTolerance) {
    EXPECT_EQ(outcome_reward("42.0000001", "42", Matcher::numeric), 1.0);
    EXPECT_EQ(outcome_reward("42.1", "42", Matcher::numeric), 0.0);
    EXPECT_EQ(outcome_reward("1,000", "1000", Matcher::numeric), 1.0);
    EXPECT_EQ(outcome_reward("forty-two", "42", Matcher::numeric), 0.0);
    EXPECT_EQ(outcome_reward("42 apples", "42", Matcher::numeric), 0.0);
}

TEST(Outcome, ContainsMatcherAndAlias) {
    EXPECT_EQ(outcome_reward("The capital is Paris.", "paris", Matcher::contains), 1.0);
    EXPECT_EQ(outcome_reward("Lyon", "paris", "containment"), 0.0);
    EXPECT_EQ(matcher_from_string("containment"), Matcher::contains);
}

TEST(Outcome, UnknownMatcherAndEmptyGoldThrow) {
    try {
        outcome_reward("a", "a", "fuzzy");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unknown_matcher);
    }
    EXPECT_THROW(outcome_reward("a", "  ", Matcher::exact), Error);
}

TEST(Format, ZeroOrMinusOne) {
    const auto pool = ab_pool();
    EXPECT_EQ(format_reward(routed_to("A"), pool), 0.0);
    EXPECT_EQ(format_reward(routed_to("Z"), pool), -1.0);
    EXPECT_EQ(format_reward("<think>x</think><answer>1</answer>", pool), 0.0);
    EXPECT_EQ(format_reward("<answer>1</answer><answer>2</answer>", pool), -1.0);
    EXPECT_EQ(format_reward("", pool), -1.0);
}

TEST(Selection, PenaltyUnlessOptimalModelRouted) {
    OptimalModelTable table;
    table.set("q1", "A");
    EXPECT_EQ(selection_reward(routed_to("A"), table, "q1").value, 0.0);
    EXPECT_EQ(selection_reward(routed_to("B"), table, "q1").value, -0.15);
    const Trajectory none{{Think{"t"}, Answer{"a"}}, std::nullopt, {}};
    EXPECT_EQ(selection_reward(none, table, "q1").value, -0.15);
    const Trajectory both{{Think{"t"}, Route{"B", "T", "q"}, Information{"i"}, Route{"A", "T", "q"}, Information{"j"},
                           Answer{"a"}},
                          std::nullopt,
                          {}};
    EXPECT_EQ(selection_reward(both, table, "q1").value, 0.0);
    const auto missing = selection_reward(routed_to("B"), table, "q2");
    EXPECT_EQ(missing.value, 0.0);
    EXPECT_TRUE(missing.no_table);
}

TEST(Composite, EnumeratesSixDistinctTotals) {
    std::set<double> totals;
    for (double fmt : {0.0, -1.0}) {
        for (double out : {0.0, 1.0}) {
            for (double sel : {0.0, -0.15}) {
                const auto r = composite_reward(fmt, out, sel);
                EXPECT_DOUBLE_EQ(r.total, fmt + out + sel);
                totals.insert(std::round(r.total * 100.0) / 100.0);
            }
        }
    }
    EXPECT_EQ(totals, (std::set<double>{-1.15, -1.0, -0.15, 0.0, 0.85, 1.0}));
}

TEST(Composite, WeightsScaleTerms) {
    RewardWeights w;
    w.gamma = 2.0;
    w.xi = 0.5;
    EXPECT_DOUBLE_EQ(composite_reward(-1.0, 1.0, -0.15, w).total, -1.0 + 2.0 - 0.075);
}

TEST(OptimalTable, LoadAndValidate) {
    TempDir dir;
    io::write_file_atomic(dir / "t.jsonl", "{\"id\":\"q1\",\"optimal_model\":\"A\"}\n{\"id\":\"q2\",\"optimal_model\":\"C\"}\n");
    const auto t = OptimalModelTable::load(dir / "t.jsonl");
    EXPECT_EQ(t.size(), 2u);
    EXPECT_EQ(*t.find("q1"), "A");
    EXPECT_EQ(t.find("q3"), nullptr);
    try {
        t.validate(ab_pool());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unknown_model);
    }
}
