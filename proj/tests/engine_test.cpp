#include <gtest/gtest.h>

#include <popproto/acceptance.hpp>
#include <popproto/engine.hpp>
#include <popproto/library.hpp>
#include <popproto/scenario.hpp>

using namespace popproto;

namespace {

Configuration corner_with_sources(const Protocol& p, std::int64_t n, std::int64_t x) {
    return canonical_init(p, "corner", n, x);
}

}  // namespace

TEST(Engine, InitChecks) {
    const auto po = build("po");
    EXPECT_THROW(init_run(po, Configuration(std::vector<std::int64_t>(3, 1)), 1), std::invalid_argument);
    EXPECT_THROW(init_run(po, corner_with_sources(po, 1, 0), 1), std::invalid_argument);
    EXPECT_THROW(init_run(po, corner_with_sources(po, 10, 0), 11, 1, 0), std::invalid_argument);
    EXPECT_NO_THROW(init_run(po, corner_with_sources(po, 10, 0), 10, 1, 0));
}

TEST(Engine, DeterministicInSeedAndStream) {
    const auto po = build("po");
    const auto c = canonical_init(po, "center", 300, std::int64_t{1});
    RunOptions opt;
    opt.max_steps = 20000;
    opt.store_samples = true;
    auto a = init_run(po, c, 5, 2);
    auto b = init_run(po, c, 5, 2);
    auto other = init_run(po, c, 5, 3);
    const auto ra = run(a, opt), rb = run(b, opt), ro = run(other, opt);
    EXPECT_EQ(a.config, b.config);
    EXPECT_EQ(ra.rule_counts, rb.rule_counts);
    EXPECT_NE(ra.rule_counts, ro.rule_counts);
}

TEST(Engine, CountersMatchFiredRules) {
    const auto d = build("detect");
    auto rs = init_run(d, canonical_init(d, "uniform-random", 200, std::int64_t{1}, 3), 9);
    RunOptions opt;
    opt.max_steps = 50000;
    const auto rec = run(rs, opt);
    std::int64_t total = 0;
    for (auto c : rec.rule_counts) total += c;
    EXPECT_EQ(total, rec.fired);
    EXPECT_LE(rec.fired, rec.steps);
    EXPECT_EQ(rec.steps, 50000);
    EXPECT_EQ(rs.config.n(), 200);
}

TEST(Engine, SourcesStayPut) {
    const auto bb = build("bitbroadcast");
    const auto c = canonical_init(bb, "uniform-random", 400, {{"X[1]", 3}, {"X[2]", 2}}, 4);
    auto rs = init_run(bb, c, 1);
    RunOptions opt;
    opt.max_steps = 40000;
    opt.cadence = 400;
    opt.sink = [&](const RunState& s) {
        EXPECT_EQ(s.config[bb.at("X[1]")], 3);
        EXPECT_EQ(s.config[bb.at("X[2]")], 2);
    };
    run(rs, opt);
}

TEST(Engine, ZeroDurationTakesNoSample) {
    const auto po = build("po");
    auto rs = init_run(po, corner_with_sources(po, 50, 1), 1);
    RunOptions opt;
    opt.store_samples = true;
    const auto rec = run(rs, opt);
    EXPECT_TRUE(rec.samples.empty());
    EXPECT_EQ(rec.steps, 0);
}

TEST(Engine, SamplesAtCadenceAndEnd) {
    const auto po = build("po");
    auto rs = init_run(po, corner_with_sources(po, 100, 1), 1);
    RunOptions opt;
    opt.store_samples = true;
    opt.max_steps = 1050;
    opt.cadence = 100;
    const auto rec = run(rs, opt);
    ASSERT_EQ(rec.samples.size(), 12u);
    EXPECT_EQ(rec.samples.front().step, 0);
    EXPECT_EQ(rec.samples[10].step, 1000);
    EXPECT_EQ(rec.samples.back().step, 1050);
}

TEST(Engine, CornerWithoutSourceIsSilent) {
    const auto po = build("po");
    const auto c = corner_with_sources(po, 100, 0);
    const auto table = compile(po);
    EXPECT_TRUE(is_silent(*table, c));
    EXPECT_TRUE(in_single_state(po, c));
    auto rs = init_run(po, c, 1, 0, table);
    RunOptions opt;
    opt.max_steps = 10000;
    const auto rec = run(rs, opt);
    EXPECT_EQ(rec.fired, 0);
    EXPECT_EQ(rs.config, c);
    EXPECT_FALSE(is_silent(*table, corner_with_sources(po, 100, 1)));
}

TEST(Engine, StopPredicate) {
    const auto rps = build("rps");
    auto rs = init_run(rps, canonical_init(rps, "center", 30, std::int64_t{0}), 3);
    RunOptions opt;
    opt.max_steps = 10'000'000;
    opt.check_every = 1;
    opt.stop = [&](const RunState& s) { return in_single_state(rps, s.config); };
    const auto rec = run(rs, opt);
    EXPECT_TRUE(rec.stopped);
    EXPECT_FALSE(rec.bound_reached);
    EXPECT_TRUE(in_single_state(rps, rs.config));
    EXPECT_LT(rec.steps, opt.max_steps);
}

TEST(Engine, BoundReachedWhenPredicateNeverHolds) {
    const auto po = build("po");
    auto rs = init_run(po, canonical_init(po, "center", 60, std::int64_t{1}), 3);
    RunOptions opt;
    opt.max_steps = 600;
    opt.stop = [](const RunState&) { return false; };
    const auto rec = run(rs, opt);
    EXPECT_FALSE(rec.stopped);
    EXPECT_TRUE(rec.bound_reached);
}

TEST(Engine, EventsApplyBeforeTheStep) {
    const auto po = build("po");
    const auto events = parse_events(po, "remove_source:X->A1+@step500", 100);
    auto rs = init_run(po, corner_with_sources(po, 100, 3), 1);
    RunOptions opt;
    opt.max_steps = 1000;
    opt.cadence = 100;
    opt.events = events;
    opt.store_samples = true;
    const auto x = po.at("X");
    const auto rec = run(rs, opt);
    for (const auto& s : rec.samples) EXPECT_EQ(s.counts[x], s.step < 500 ? 3 : 0) << s.step;
    EXPECT_EQ(rs.config.n(), 100);
}

TEST(Engine, InsertAndRemoveSource) {
    const auto po = build("po");
    Configuration c = corner_with_sources(po, 10, 0);
    const auto x = po.at("X"), a = po.at("A1++"), lazy1 = po.at("A1+");
    apply_event(c, ScenarioEvent{0, ScenarioEvent::Action::RemoveSource, x, lazy1, 0});
    EXPECT_EQ(c, corner_with_sources(po, 10, 0));
    apply_event(c, ScenarioEvent{0, ScenarioEvent::Action::InsertSource, x, a, 2});
    EXPECT_EQ(c[x], 2);
    EXPECT_EQ(c[a], 8);
    EXPECT_THROW(apply_event(c, ScenarioEvent{0, ScenarioEvent::Action::InsertSource, x, lazy1, 1}),
                 std::invalid_argument);
    apply_event(c, ScenarioEvent{0, ScenarioEvent::Action::SetCount, lazy1, a, 5});
    EXPECT_EQ(c[lazy1], 5);
    EXPECT_EQ(c[a], 3);
    EXPECT_EQ(c.n(), 10);
}

TEST(Engine, UnsortedEventsRejected) {
    const auto po = build("po");
    auto rs = init_run(po, corner_with_sources(po, 10, 1), 1);
    RunOptions opt;
    opt.max_steps = 100;
    opt.events = {ScenarioEvent{50, ScenarioEvent::Action::RemoveSource, po.at("X"), po.at("A1+"), 0},
                  ScenarioEvent{10, ScenarioEvent::Action::RemoveSource, po.at("X"), po.at("A1+"), 0}};
    EXPECT_THROW(run(rs, opt), std::invalid_argument);
}

TEST(Engine, DistinctAgentsOnly) {
    // two agents in two states: every draw pairs them, never an agent with itself
    const auto rps = build("rps");
    auto rs = init_run(rps, Configuration({1, 1, 0}), 1);
    for (int t = 0; t < 10000; ++t) {
        const auto it = draw_interaction(rs);
        EXPECT_NE(it.initiator, it.receiver);
    }
}

TEST(Engine, SingleStepMutationIsCaught) {
    acceptance::Constants k;
    k.step_trials = 200'000;
    k.step_configs = 4;
    acceptance::SuiteOptions opt;
    opt.workers = 1;
    EXPECT_TRUE(acceptance::single_step_exactness(opt, k).pass);
    opt.fault = SamplerFault::WithReplacement;
    EXPECT_FALSE(acceptance::single_step_exactness(opt, k).pass);
}
