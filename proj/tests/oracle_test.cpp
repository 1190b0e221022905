#include <gtest/gtest.h>

#include <sstream>

#include <popproto/library.hpp>
#include <popproto/oracle.hpp>

using namespace popproto;

TEST(Oracle, Compositions) {
    EXPECT_EQ(count_compositions(2, 3), 6u);
    EXPECT_EQ(count_compositions(3, 6), 56u);
    EXPECT_EQ(count_compositions(0, 4), 1u);
    EXPECT_EQ(count_compositions(5, 0), 0u);
    EXPECT_EQ(count_compositions(1'000'000, 60), UINT64_MAX);
}

TEST(Oracle, SingleStepLawOfTwoAgents) {
    const auto rps = build("rps");
    const auto law = single_step_law(RuleTable(rps), Configuration({1, 1, 0}));
    ASSERT_EQ(law.size(), 2u);
    for (const auto& [c, p] : law) {
        EXPECT_EQ(p.str(), c == Configuration({0, 2, 0}) ? "3/100" : "97/100");
    }
}

TEST(Oracle, RpsPairAbsorbs) {
    const auto rps = build("rps");
    const auto chain = enumerate(rps, 2);
    EXPECT_EQ(chain.size(), 6u);
    EXPECT_TRUE(chain.exact);
    EXPECT_EQ(max_row_defect(chain), 0.0);
    const auto r = absorption(chain, Configuration({1, 1, 0}));
    ASSERT_TRUE(r.absorbing);
    EXPECT_TRUE(r.exact);
    ASSERT_EQ(r.targets.size(), 1u);
    EXPECT_EQ(chain.configs[r.targets[0]], Configuration({0, 2, 0}));
    EXPECT_EQ(r.probability_exact[0], "1");
    EXPECT_EQ(r.expected_steps_exact, "100/3");  // 2/p
    EXPECT_NEAR(r.expected_steps, 100.0 / 3, 1e-12);
}

TEST(Oracle, RpsCorners) {
    const auto chain = enumerate(build("rps"), 3);
    EXPECT_EQ(absorbing_configurations(chain).size(), 3u);
    const auto r = absorption(chain, Configuration({1, 1, 1}));
    ASSERT_TRUE(r.absorbing);
    double total = 0;
    for (double p : r.probability) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    // the symmetric start is fair
    for (const auto& p : r.probability_exact) EXPECT_EQ(p, "1/3");
}

TEST(Oracle, StartAtCorner) {
    const auto chain = enumerate(build("rps"), 3);
    const auto r = absorption(chain, Configuration({3, 0, 0}));
    ASSERT_TRUE(r.absorbing);
    EXPECT_EQ(r.expected_steps, 0.0);
    EXPECT_EQ(r.probability_exact[0], "1");
}

TEST(Oracle, OscillatorChains) {
    const auto po = build("po");
    EXPECT_EQ(enumerate(po, 3).size(), 56u);
    const auto closed = enumerate(po, 4, {{"X", 0}});
    EXPECT_EQ(absorbing_configurations(closed).size(), 3u);
    const auto fed = enumerate(po, 4, {{"X", 1}});
    EXPECT_EQ(fed.size(), count_compositions(3, 6));
    EXPECT_TRUE(absorbing_configurations(fed).empty());
    EXPECT_EQ(absorbing_sets(fed).size(), 1u);
    Configuration start(std::vector<std::int64_t>(po.size(), 0));
    start[po.at("X")] = 1;
    start[po.at("A1+")] = 3;
    EXPECT_FALSE(absorption(fed, start).absorbing);
}

TEST(Oracle, ExactAndFloatSolvesAgree) {
    const auto po = build("po");
    const auto chain = enumerate(po, 4);
    Configuration start(std::vector<std::int64_t>(po.size(), 0));
    start[po.at("A1+")] = 2;
    start[po.at("A2+")] = 1;
    start[po.at("A3+")] = 1;
    const auto exact = absorption(chain, start);
    AbsorptionOptions fl;
    fl.exact_limit = 0;
    const auto approx = absorption(chain, start, fl);
    ASSERT_TRUE(exact.exact);
    ASSERT_FALSE(approx.exact);
    EXPECT_NEAR(exact.expected_steps, approx.expected_steps, 1e-8 * exact.expected_steps);
    ASSERT_EQ(exact.targets, approx.targets);
    for (std::size_t t = 0; t < exact.targets.size(); ++t)
        EXPECT_NEAR(exact.probability[t], approx.probability[t], 1e-10);
}

TEST(Oracle, CapExceeded) {
    EXPECT_THROW(enumerate(build("detect"), 20), CapExceeded);
    EXPECT_THROW(enumerate(build("po"), 3, {{"X", 4}}), std::invalid_argument);
}

TEST(Oracle, Triplets) {
    const auto rps = build("rps");
    const auto chain = enumerate(rps, 2);
    std::ostringstream os;
    write_triplets(chain, rps, os);
    const auto text = os.str();
    EXPECT_NE(text.find("3/100"), std::string::npos) << text;
}
