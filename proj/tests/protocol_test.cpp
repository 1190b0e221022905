#include <gtest/gtest.h>

#include <popproto/library.hpp>
#include <popproto/protocol.hpp>

using namespace popproto;

namespace {

Protocol two_state() {
    Protocol p;
    p.name = "ab";
    p.add_state("A");
    p.add_state("B");
    return p;
}

/// Law of a product pair summed over everything but the base component.
std::map<std::pair<StateId, StateId>, Probability> marginal(const Protocol& product, const Extension& ext, StateId u,
                                                            StateId v) {
    const RuleTable t = rule_table(product);
    std::map<std::pair<StateId, StateId>, Probability> out;
    for (const auto& o : t.row(u, v)) {
        const auto key = std::pair{static_cast<StateId>(ext.base_of[o.initiator_out]),
                                   static_cast<StateId>(ext.base_of[o.receiver_out])};
        auto [it, fresh] = out.try_emplace(key, o.prob);
        if (!fresh) it->second += o.prob;
    }
    return out;
}

bool same_law(const std::map<std::pair<StateId, StateId>, Probability>& a,
              const std::map<std::pair<StateId, StateId>, Probability>& b) {
    auto drop_zero = [](auto m) {
        std::erase_if(m, [](const auto& kv) { return kv.second.is_zero(); });
        return m;
    };
    const auto x = drop_zero(a), y = drop_zero(b);
    if (x.size() != y.size()) return false;
    for (const auto& [k, p] : x) {
        auto it = y.find(k);
        if (it == y.end() || !same_probability(p, it->second)) return false;
    }
    return true;
}

}  // namespace

TEST(Validate, OscillatorIsClean) {
    const auto po = build("po");
    const auto report = validate(po);
    EXPECT_TRUE(report.ok()) << report.summary();
    EXPECT_TRUE(report.initiator_preserving);
}

TEST(Validate, NormalizationExceeded) {
    auto p = two_state();
    p.add_rule(0, 1, 0, 0, *Probability::parse("0.7"));
    p.add_rule(0, 1, 1, 1, *Probability::parse("0.6"));
    const auto report = validate(p);
    ASSERT_EQ(report.violations.size(), 1u);
    EXPECT_EQ(report.violations[0].kind, Violation::Kind::Normalization);
    EXPECT_EQ(report.violations[0].message, "normalization exceeded on (A,B): 1.3");
    ASSERT_TRUE(report.violations[0].pair);
    EXPECT_EQ(*report.violations[0].pair, (std::pair<StateId, StateId>{0, 1}));
    EXPECT_THROW(rule_table(p), std::invalid_argument);
}

TEST(Validate, NoRulesIsFine) {
    EXPECT_TRUE(validate(identity(build("po"))).ok());
}

TEST(Validate, SourceMustNotChange) {
    auto p = two_state();
    p.add_state("X", true);
    p.add_rule(2, 0, 0, 0, Probability::exact(1, 2));
    const auto report = validate(p);
    ASSERT_FALSE(report.ok());
    EXPECT_EQ(report.violations[0].kind, Violation::Kind::SourceModified);
}

TEST(Validate, DeclaredInitiatorPreservingIsChecked) {
    auto p = two_state();
    p.initiator_preserving = true;
    p.add_rule(0, 1, 1, 1, Probability::exact(1));
    const auto report = validate(p);
    EXPECT_FALSE(report.initiator_preserving);
    ASSERT_FALSE(report.ok());
    EXPECT_EQ(report.violations[0].kind, Violation::Kind::InitiatorChanged);
}

TEST(Validate, DuplicateLabelRejectedOnInsert) {
    auto p = two_state();
    EXPECT_THROW(p.add_state("A"), std::invalid_argument);
}

TEST(RuleTable, AggressiveAttack) {
    const auto po = build("po");
    const RuleTable t = rule_table(po);
    const auto law = t.law(po.at("A1++"), po.at("A3+"));
    ASSERT_EQ(law.size(), 2u);
    EXPECT_EQ(law.at({po.at("A1++"), po.at("A1+")}).str(), "3/25");  // 2p
    EXPECT_EQ(law.at({po.at("A1++"), po.at("A3+")}).str(), "22/25");
}

TEST(RuleTable, SourceSpreadsEvenly) {
    const auto po = build("po");
    const auto law = rule_table(po).law(po.at("X"), po.at("A2++"));
    ASSERT_EQ(law.size(), 3u);
    for (const char* s : {"A1+", "A2+", "A3+"}) EXPECT_EQ(law.at({po.at("X"), po.at(s)}).str(), "1/3");
}

TEST(RuleTable, UnmatchedPairIsIdentity) {
    const auto po = build("po");
    const auto law = rule_table(po).law(po.at("A1+"), po.at("X"));
    ASSERT_EQ(law.size(), 1u);
    EXPECT_EQ(law.begin()->second.str(), "1");
}

TEST(RuleTable, RowsSumToOneForEveryLibraryProtocol) {
    for (const auto& name : library_names()) {
        const auto p = build(name);
        const RuleTable t = rule_table(p);
        for (StateId a = 0; a < p.size(); ++a)
            for (StateId b = 0; b < p.size(); ++b) {
                Probability total;
                for (const auto& o : t.row(a, b)) total += o.prob;
                ASSERT_TRUE(same_probability(total, Probability::exact(1))) << name << " " << a << "," << b;
            }
    }
}

TEST(RuleTable, SourcesNeverChange) {
    for (const auto& name : library_names()) {
        const auto p = build(name);
        for (const auto& r : p.rules) {
            if (p.is_source(r.initiator_in)) {
                EXPECT_EQ(r.initiator_out, r.initiator_in) << name;
            }
            if (p.is_source(r.receiver_in)) {
                EXPECT_EQ(r.receiver_out, r.receiver_in) << name;
            }
            EXPECT_EQ(p.is_source(r.initiator_out), p.is_source(r.initiator_in)) << name;
            EXPECT_EQ(p.is_source(r.receiver_out), p.is_source(r.receiver_in)) << name;
        }
    }
}

TEST(Compose, StateCounts) {
    const auto params = default_params();
    const auto po = build("po", params);
    const auto pm = build_pm_extension(po, params);
    const auto po_pm = compose(po, pm);
    EXPECT_EQ(po_pm.size(), 19u);
    EXPECT_EQ(compose_independent(po_pm, build_pl_extension(po_pm, params)).size(), 55u);
    EXPECT_EQ(build("bitbroadcast").size(), 74u);
}

TEST(Compose, LayeredMarginalReproducesBase) {
    const auto params = default_params();
    const auto po = build("po", params);
    const auto pm = build_pm_extension(po, params);
    const auto product = compose(po, pm);
    const RuleTable base = rule_table(po);
    for (StateId u = 0; u < product.size(); ++u)
        for (StateId v = 0; v < product.size(); ++v) {
            if (pm.base_of[u] < 0 || pm.base_of[v] < 0) continue;
            ASSERT_TRUE(same_law(marginal(product, pm, u, v),
                                 base.law(static_cast<StateId>(pm.base_of[u]), static_cast<StateId>(pm.base_of[v]))))
                << product.label(u) << " : " << product.label(v);
        }
}

TEST(Compose, IndependentMarginalIsLazyBase) {
    const auto params = default_params();
    const auto po = build("po", params);
    const auto pm = build_pm_extension(po, params);
    const auto po_pm = compose(po, pm);
    const auto pl = build_pl_extension(po_pm, params);
    const auto product = compose_independent(po_pm, pl);
    const RuleTable base = rule_table(lazy(po_pm));
    for (StateId u = 0; u < product.size(); ++u)
        for (StateId v = 0; v < product.size(); ++v) {
            if (pl.base_of[u] < 0 || pl.base_of[v] < 0) continue;
            ASSERT_TRUE(same_law(marginal(product, pl, u, v),
                                 base.law(static_cast<StateId>(pl.base_of[u]), static_cast<StateId>(pl.base_of[v]))))
                << product.label(u) << " : " << product.label(v);
        }
}

TEST(Compose, IndependentHalvesEveryBaseRule) {
    const auto po = build("po");
    const auto tag1 = tagged(po, "1");
    const auto pair = compose_independent(tag1, lift(tagged(po, "2"), tag1));
    // rule (4) on the first oscillator, second oscillator at rest
    const auto law = rule_table(pair).law(pair.at("(A1++[1],A1+[2])"), pair.at("(A3+[1],A1+[2])"));
    EXPECT_EQ(law.at({pair.at("(A1++[1],A1+[2])"), pair.at("(A1+[1],A1+[2])")}).str(), "3/50");  // 2p / 2
}

TEST(Compose, IdentityBaseRunsExtensionAlone) {
    const auto params = default_params();
    const auto po = build("po", params);
    const auto pm = build_pm_extension(po, params);
    std::string why;
    EXPECT_TRUE(same_rule_table(compose(identity(po), pm), pm.law, &why)) << why;
}

TEST(Compose, EmptyLayersGiveNoRules) {
    const auto po = build("po");
    const auto id = identity(po);
    const auto ext = lift(identity(build("rps")), id);
    EXPECT_TRUE(compose_independent(id, ext).rules.empty());
}

TEST(Compose, MismatchedStateSetsRejected) {
    const auto params = default_params();
    const auto pm = build_pm_extension(build("po", params), params);
    EXPECT_THROW(compose(build("rps", params), pm), std::invalid_argument);
    EXPECT_THROW(compose_independent(build("rps", params), pm), std::invalid_argument);
}

TEST(Lazy, Halving) {
    const auto rps = build("rps");
    const auto l = lazy(rps);
    ASSERT_EQ(l.rules.size(), rps.rules.size());
    EXPECT_EQ(l.rules[0].prob.str(), "3/100");
    const auto ll = lazy(l);
    for (std::size_t j = 0; j < rps.rules.size(); ++j)
        EXPECT_TRUE(same_probability(ll.rules[j].prob, rps.rules[j].prob * Probability::exact(1, 4)));
    const auto id = identity(rps);
    std::string why;
    EXPECT_TRUE(same_rule_table(lazy(id), id, &why)) << why;
}

TEST(Tagged, RenamesComponents) {
    const auto t = tagged(build("po"), "2");
    EXPECT_TRUE(t.find("A1++[2]"));
    EXPECT_TRUE(t.find("X[2]"));
    EXPECT_TRUE(t.is_source(t.at("X[2]")));
}
