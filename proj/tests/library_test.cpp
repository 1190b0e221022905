#include <gtest/gtest.h>

#include <popproto/analytics.hpp>
#include <popproto/library.hpp>

using namespace popproto;

TEST(Library, SizesAndSources) {
    const std::map<std::string, std::pair<std::size_t, std::size_t>> want{
        {"rps", {3, 0}}, {"po", {7, 1}}, {"po_prime", {8, 2}}, {"bitbroadcast", {74, 2}}, {"detect", {55, 1}}};
    for (const auto& [name, counts] : want) {
        const auto p = build(name);
        EXPECT_EQ(p.size(), counts.first) << name;
        EXPECT_EQ(p.source_states().size(), counts.second) << name;
        EXPECT_TRUE(validate(p).ok()) << name;
    }
}

TEST(Library, RuleCounts) {
    EXPECT_EQ(build("rps").rules.size(), 3u);
    EXPECT_EQ(build("po").rules.size(), 45u);
    EXPECT_EQ(build("po_prime").rules.size(), 38u);
    EXPECT_EQ(build("bitbroadcast").rules.size(), 10296u);
    EXPECT_EQ(build("detect").rules.size(), 8028u);
}

TEST(Library, Defaults) {
    const auto d = default_params();
    EXPECT_EQ(d.p, 0.06);
    EXPECT_EQ(d.r, 0.1);
    EXPECT_EQ(d.s, 1.0);
    const auto po = build("po");
    EXPECT_EQ(po.params.at("p"), 0.06);
}

TEST(Library, RejectsBadParameters) {
    EXPECT_THROW(build("nope"), std::invalid_argument);
    LibraryParams bad;
    bad.p = 0.6;
    EXPECT_THROW(build("po", bad), std::invalid_argument);
    bad = {};
    bad.q = 0;
    EXPECT_THROW(build("detect", bad), std::invalid_argument);
}

TEST(Library, TinyAttackProbabilityStaysValid) {
    LibraryParams params;
    params.s = 1e-3;
    params.p = params.s * params.s / 1e12 * 1e6;  // 1e-12
    const auto po = build("po", params);
    EXPECT_TRUE(validate(po).ok());
    const auto law = rule_table(po).law(po.at("A1+"), po.at("A3+"));
    EXPECT_EQ(law.at({po.at("A1+"), po.at("A1+")}).str(), "1/1000000000000");
}

TEST(Library, TwoSourceCornerIsSilent) {
    // with X[1] present the A1 corner has no active pair
    const auto p = build("po_prime");
    const RuleTable t(p);
    Configuration c(std::vector<std::int64_t>(p.size(), 0));
    c[p.at("A1++")] = 10;
    c[p.at("X[1]")] = 1;
    for (double d : drift(c, t)) EXPECT_EQ(d, 0.0);
    // X[2] pushes it away
    c[p.at("X[1]")] = 0;
    c[p.at("X[2]")] = 1;
    EXPECT_GT(drift(c, t)[p.at("A2+")], 0.0);
}

TEST(Library, MajorityResetByForeignInitiator) {
    const auto d = build("detect");
    const auto law = rule_table(d).law(d.at("(A2+,M0,L-1)"), d.at("(A1+,M0,L-1)"));
    Probability to_plus, to_minus;
    for (const auto& [out, prob] : law) {
        if (d.label(out.second) == "(A1+,M+1,L-1)") to_plus += prob;
        if (d.label(out.second) == "(A1+,M-1,L-1)") to_minus += prob;
    }
    EXPECT_TRUE(same_probability(to_plus, to_minus));
    EXPECT_GT(to_plus.value(), 0.0);
}

TEST(Library, LightTurnsOffWithQ) {
    LibraryParams params;
    const auto d = build("detect", params);
    const auto law = rule_table(d).law(d.at("(A1+,M0,L-1)"), d.at("(A1+,M0,Lon)"));
    // independent stacking halves the light rule
    EXPECT_EQ(law.at({d.at("(A1+,M0,L-1)"), d.at("(A1+,M0,L-1)")}).str(), "1/400");
    EXPECT_EQ(d.answer(d.at("(A1+,M0,Lon)")), "yes");
    EXPECT_EQ(d.answer(d.at("(A1+,M0,L+1)")), "no");
}

TEST(Library, LightArmsOnlyFromMinus) {
    const auto d = build("detect");
    const RuleTable t(d);
    const auto armed = t.law(d.at("(A1+,M-1,L-1)"), d.at("(A1+,M0,L-1)"));
    EXPECT_TRUE(armed.count({d.at("(A1+,M-1,L-1)"), d.at("(A1+,M0,L+1)")}));
    // M0 initiators never touch the light
    for (const auto& [out, prob] : t.law(d.at("(A1+,M0,L-1)"), d.at("(A1+,M0,L-1)")))
        EXPECT_EQ(d.states[out.second].components[2], "L-1");
}

TEST(Library, OscillatorAtoms) {
    const auto a = parse_oscillator_atom("A2++[1]");
    ASSERT_TRUE(a);
    EXPECT_EQ(a->species, 2);
    EXPECT_TRUE(a->aggressive);
    EXPECT_EQ(a->tag, "1");
    EXPECT_FALSE(parse_oscillator_atom("M0"));
    EXPECT_EQ(oscillator_label(3, false, "2"), "A3+[2]");
}

TEST(Library, CornerInit) {
    const auto po = build("po");
    const auto c = canonical_init(po, "corner", 1000000, std::int64_t{1});
    EXPECT_EQ(c[po.at("A1++")], 999999);
    EXPECT_EQ(c[po.at("X")], 1);
    EXPECT_EQ(c.n(), 1000000);
}

TEST(Library, CenterInit) {
    const auto rps = build("rps");
    const auto c = canonical_init(rps, "center", 9, std::int64_t{0});
    EXPECT_EQ(c.counts, (std::vector<std::int64_t>{3, 3, 3}));
    const auto po = build("po");
    const auto d = canonical_init(po, "center", 10, std::int64_t{1});
    EXPECT_EQ(d[po.at("A1+")] + d[po.at("A2+")] + d[po.at("A3+")], 9);
    EXPECT_EQ(d[po.at("A1++")], 0);
}

TEST(Library, DetectInitsKeepLightsOff) {
    const auto d = build("detect");
    for (const char* init : {"corner", "center"}) {
        const auto c = canonical_init(d, init, 90, std::int64_t{0});
        for (StateId s = 0; s < d.size(); ++s)
            if (c[s] > 0) {
                EXPECT_EQ(d.answer(s), "no") << init << " " << d.label(s);
            }
    }
    EXPECT_EQ(canonical_init(d, "corner", 5, std::int64_t{0})[d.at("(A1++,M0,L-1)")], 5);
}

TEST(Library, UniformRandomIsSeeded) {
    const auto d = build("detect");
    EXPECT_EQ(canonical_init(d, "uniform-random", 500, std::int64_t{2}, 7),
              canonical_init(d, "uniform-random", 500, std::int64_t{2}, 7));
    EXPECT_NE(canonical_init(d, "uniform-random", 500, std::int64_t{2}, 7),
              canonical_init(d, "uniform-random", 500, std::int64_t{2}, 8));
}

TEST(Library, InitErrors) {
    const auto po = build("po");
    EXPECT_THROW(canonical_init(po, "corner", 3, std::int64_t{4}), std::invalid_argument);
    EXPECT_THROW(canonical_init(po, "sideways", 3, std::int64_t{0}), std::invalid_argument);
    EXPECT_THROW(canonical_init(build("rps"), "corner", 3, std::int64_t{1}), std::invalid_argument);
    EXPECT_THROW(canonical_init(po, "corner", 3, std::map<std::string, std::int64_t>{{"A1+", 1}}), std::invalid_argument);
}
