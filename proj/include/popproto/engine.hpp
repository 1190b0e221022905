#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "configuration.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace popproto {

// ---------------------------------------------------------------------------
// scenario events

struct ScenarioEvent {
    enum class Action { SetCount, RemoveSource, InsertSource };
    std::int64_t at_step = 0;
    Action action = Action::RemoveSource;
    StateId state = 0;  ///< set_count target, or the source state
    StateId other = 0;  ///< filler / replacement / donor
    std::int64_t count = 0;  ///< set_count value or insert_source count
};

inline const char* action_name(ScenarioEvent::Action a) {
    switch (a) {
        case ScenarioEvent::Action::SetCount: return "set_count";
        case ScenarioEvent::Action::RemoveSource: return "remove_source";
        case ScenarioEvent::Action::InsertSource: return "insert_source";
    }
    return "?";
}

/// Applies an event in place. Total population is preserved; agents are
/// relabelled, never created or deleted.
inline void apply_event(Configuration& config, const ScenarioEvent& e) {
    const auto k = config.size();
    if (e.state >= k || e.other >= k) throw std::invalid_argument("event references an unknown state");
    switch (e.action) {
        case ScenarioEvent::Action::RemoveSource:
            config[e.other] += config[e.state];
            config[e.state] = 0;
            break;
        case ScenarioEvent::Action::InsertSource:
            if (e.count < 0) throw std::invalid_argument("insert_source with negative count");
            if (config[e.other] < e.count) throw std::invalid_argument("insert_source: insufficient agents in donor state");
            config[e.other] -= e.count;
            config[e.state] += e.count;
            break;
        case ScenarioEvent::Action::SetCount: {
            if (e.count < 0) throw std::invalid_argument("set_count with negative value");
            if (e.state == e.other) {
                if (config[e.state] != e.count) throw std::invalid_argument("set_count: filler equals target");
                break;
            }
            const auto diff = e.count - config[e.state];
            if (diff > config[e.other]) throw std::invalid_argument("set_count: insufficient agents in filler state");
            config[e.other] -= diff;
            config[e.state] = e.count;
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// pair sampler

/// Fenwick tree over state counts: O(log k) update and agent lookup.
class PairSampler {
public:
    PairSampler() = default;
    explicit PairSampler(const std::vector<std::int64_t>& counts) { reset(counts); }

    void reset(const std::vector<std::int64_t>& counts) {
        k_ = counts.size();
        tree_.assign(k_ + 1, 0);
        total_ = 0;
        for (std::size_t i = 0; i < k_; ++i) add(i, counts[i]);
        top_ = k_ ? std::bit_floor(k_) : 0;
    }

    void add(std::size_t state, std::int64_t delta) {
        total_ += delta;
        for (std::size_t i = state + 1; i <= k_; i += i & (~i + 1)) tree_[i] += delta;
    }

    /// State of the agent at position `pos` (0 <= pos < total) when agents are
    /// laid out by state index.
    std::size_t locate(std::int64_t pos) const {
        std::size_t idx = 0;
        for (std::size_t step = top_; step; step >>= 1) {
            const auto next = idx + step;
            if (next <= k_ && tree_[next] <= pos) {
                idx = next;
                pos -= tree_[next];
            }
        }
        return idx;
    }

    std::int64_t total() const { return total_; }

private:
    std::size_t k_ = 0, top_ = 0;
    std::int64_t total_ = 0;
    std::vector<std::int64_t> tree_;
};

// ---------------------------------------------------------------------------
// run state

/// Compiled per-pair outcome lists (non-identity outcomes only) with
/// cumulative thresholds for a single uniform draw.
struct CompiledTable {
    std::size_t k = 0;
    std::vector<std::uint32_t> begin;  // k*k + 1 offsets
    std::vector<double> cumulative;
    std::vector<StateId> out_initiator, out_receiver;
    std::vector<std::int32_t> rule;

    explicit CompiledTable(const RuleTable& table = RuleTable()) : k(table.size()) {
        begin.reserve(k * k + 1);
        for (StateId a = 0; a < k; ++a)
            for (StateId b = 0; b < k; ++b) {
                begin.push_back(static_cast<std::uint32_t>(cumulative.size()));
                double acc = 0;
                for (const auto& o : table.row(a, b)) {
                    if (o.rule == kIdentityRule) continue;
                    acc += o.prob.value();
                    cumulative.push_back(acc);
                    out_initiator.push_back(o.initiator_out);
                    out_receiver.push_back(o.receiver_out);
                    rule.push_back(o.rule);
                }
            }
        begin.push_back(static_cast<std::uint32_t>(cumulative.size()));
    }

    bool active(StateId a, StateId b) const { return begin[a * k + b] != begin[a * k + b + 1]; }
};

/// Deliberate scheduler defects used to check that the acceptance suite
/// notices a broken engine.
enum class SamplerFault { None, WithReplacement };

struct Interaction {
    StateId initiator = 0, receiver = 0;
    StateId initiator_out = 0, receiver_out = 0;
    int rule = kIdentityRule;
};

struct Sample {
    std::int64_t step = 0;
    std::vector<std::int64_t> counts;
};

struct RunState {
    const Protocol* protocol = nullptr;
    std::shared_ptr<const CompiledTable> compiled;
    Configuration config;
    PairSampler sampler;
    Rng rng;
    std::uint64_t seed = 0, stream = 0;
    std::int64_t step = 0;
    std::vector<std::int64_t> rule_counts;
    std::int64_t fired = 0;
    SamplerFault fault = SamplerFault::None;

    std::int64_t n() const { return sampler.total(); }
    double round() const { return n() ? static_cast<double>(step) / static_cast<double>(n()) : 0.0; }
};

/// Validates the protocol and compiles its transition law for the engine.
inline std::shared_ptr<const CompiledTable> compile(const Protocol& protocol) {
    return std::make_shared<const CompiledTable>(rule_table(protocol));
}

/// Builds a run. Deterministic in (protocol, initial, seed, stream). Pass a
/// table from compile() to share it across many runs.
inline RunState init_run(const Protocol& protocol, const Configuration& initial, std::uint64_t seed,
                         std::uint64_t stream = 0, std::shared_ptr<const CompiledTable> compiled = nullptr) {
    if (initial.size() != protocol.size())
        throw std::invalid_argument("configuration has " + std::to_string(initial.size()) + " entries, protocol '" +
                                    protocol.name + "' has " + std::to_string(protocol.size()) + " states");
    for (auto c : initial.counts)
        if (c < 0) throw std::invalid_argument("negative count in configuration");
    if (initial.n() < 2) throw std::invalid_argument("population needs at least two agents");
    RunState run;
    run.protocol = &protocol;
    run.compiled = compiled ? std::move(compiled) : compile(protocol);
    if (run.compiled->k != protocol.size()) throw std::invalid_argument("compiled table does not match the protocol");
    run.config = initial;
    run.sampler.reset(initial.counts);
    run.rng = Rng(seed, stream);
    run.seed = seed;
    run.stream = stream;
    run.rule_counts.assign(protocol.rules.size(), 0);
    return run;
}

/// init_run that also checks the configuration's population size.
inline RunState init_run(const Protocol& protocol, const Configuration& initial, std::int64_t n, std::uint64_t seed,
                         std::uint64_t stream) {
    if (initial.n() != n)
        throw std::invalid_argument("configuration sums to " + std::to_string(initial.n()) + ", expected " +
                                    std::to_string(n));
    return init_run(protocol, initial, seed, stream);
}

/// Draws one scheduled pair and its outcome without changing the run.
inline Interaction draw_interaction(RunState& run) {
    const auto n = run.sampler.total();
    Interaction it;
    const auto u = static_cast<std::int64_t>(run.rng.below(static_cast<std::uint64_t>(n)));
    std::int64_t v;
    if (run.fault == SamplerFault::WithReplacement) {
        v = static_cast<std::int64_t>(run.rng.below(static_cast<std::uint64_t>(n)));
    } else {
        v = static_cast<std::int64_t>(run.rng.below(static_cast<std::uint64_t>(n - 1)));
        v += v >= u;
    }
    it.initiator = static_cast<StateId>(run.sampler.locate(u));
    it.receiver = static_cast<StateId>(run.sampler.locate(v));
    it.initiator_out = it.initiator;
    it.receiver_out = it.receiver;
    const auto& t = *run.compiled;
    const auto cell = it.initiator * t.k + it.receiver;
    const auto lo = t.begin[cell], hi = t.begin[cell + 1];
    if (lo == hi) return it;
    const double x = run.rng.unit();
    for (auto j = lo; j < hi; ++j)
        if (x < t.cumulative[j]) {
            it.initiator_out = t.out_initiator[j];
            it.receiver_out = t.out_receiver[j];
            it.rule = t.rule[j];
            break;
        }
    return it;
}

inline void apply_interaction(RunState& run, const Interaction& it) {
    if (it.rule == kIdentityRule) return;
    auto move = [&](StateId from, StateId to) {
        if (from == to) return;
        --run.config[from];
        ++run.config[to];
        run.sampler.add(from, -1);
        run.sampler.add(to, +1);
    };
    move(it.initiator, it.initiator_out);
    move(it.receiver, it.receiver_out);
    ++run.rule_counts[static_cast<std::size_t>(it.rule)];
    ++run.fired;
}

/// One scheduler step: draw a pair of distinct agents, pick an outcome from
/// the pair's law and apply it.
inline Interaction step(RunState& run) {
    const auto it = draw_interaction(run);
    apply_interaction(run, it);
    ++run.step;
#ifndef NDEBUG
    if (run.config.n() != run.sampler.total()) throw std::logic_error("population not conserved");
#endif
    return it;
}

/// True when no pair present in the configuration can change state.
inline bool is_silent(const CompiledTable& table, const Configuration& config) {
    std::vector<StateId> present;
    for (StateId s = 0; s < config.size(); ++s)
        if (config[s] > 0) present.push_back(s);
    for (auto a : present)
        for (auto b : present) {
            if (a == b && config[a] < 2) continue;
            if (table.active(a, b)) return false;
        }
    return true;
}

/// True when every agent holds the same non-source state.
inline bool in_single_state(const Protocol& p, const Configuration& c) {
    for (StateId s = 0; s < c.size(); ++s)
        if (c[s] > 0) return !p.is_source(s) && c[s] == c.n();
    return false;
}

// ---------------------------------------------------------------------------
// run loop

struct RunOptions {
    std::int64_t max_steps = 0;
    /// Sample every `cadence` steps (0 selects max(1, n/100)).
    std::int64_t cadence = 0;
    bool store_samples = false;
    /// Called at each sample point after events at that step are applied.
    std::function<void(const RunState&)> sink;
    /// Stopping predicate, evaluated every `check_every` steps (0 = at sample points).
    std::function<bool(const RunState&)> stop;
    std::int64_t check_every = 0;
    std::vector<ScenarioEvent> events;
};

struct RunRecord {
    std::uint64_t seed = 0, stream = 0;
    std::string protocol;
    std::int64_t n = 0;
    std::vector<ScenarioEvent> events;
    std::vector<std::int64_t> rule_counts;
    std::int64_t fired = 0;
    std::int64_t steps = 0;
    bool stopped = false;        ///< stopping predicate satisfied
    bool bound_reached = false;  ///< a predicate was given but never held
    std::vector<Sample> samples;
};

inline std::int64_t default_cadence(std::int64_t n) { return std::max<std::int64_t>(1, n / 100); }

/// Runs until `max_steps` total steps or the stopping predicate holds.
inline RunRecord run(RunState& state, const RunOptions& opt) {
    RunRecord rec;
    rec.seed = state.seed;
    rec.stream = state.stream;
    rec.protocol = state.protocol->name;
    rec.n = state.n();
    rec.events = opt.events;
    if (!std::is_sorted(opt.events.begin(), opt.events.end(),
                        [](const auto& a, const auto& b) { return a.at_step < b.at_step; }))
        throw std::invalid_argument("events must be sorted by step");
    const auto cadence = opt.cadence > 0 ? opt.cadence : default_cadence(state.n());
    const auto check_every = opt.check_every > 0 ? opt.check_every : cadence;
    std::size_t next_event = 0;
    while (next_event < opt.events.size() && opt.events[next_event].at_step < state.step) ++next_event;

    auto sample = [&] {
        if (opt.store_samples) rec.samples.push_back(Sample{state.step, state.config.counts});
        if (opt.sink) opt.sink(state);
    };
    std::int64_t last_sampled = -1;
    auto apply_due_events = [&] {
        bool changed = false;
        while (next_event < opt.events.size() && opt.events[next_event].at_step == state.step) {
            apply_event(state.config, opt.events[next_event++]);
            changed = true;
        }
        if (changed) state.sampler.reset(state.config.counts);
    };

    while (state.step < opt.max_steps) {
        apply_due_events();
        if (state.step % cadence == 0) {
            sample();
            last_sampled = state.step;
        }
        if (opt.stop && state.step % check_every == 0 && opt.stop(state)) {
            rec.stopped = true;
            break;
        }
        // run freely up to the next event, sample or predicate check
        std::int64_t until = opt.max_steps;
        until = std::min(until, (state.step / cadence + 1) * cadence);
        if (opt.stop) until = std::min(until, (state.step / check_every + 1) * check_every);
        if (next_event < opt.events.size()) until = std::min(until, opt.events[next_event].at_step);
        while (state.step < until) step(state);
    }
    if (!rec.stopped && opt.max_steps > 0) {
        apply_due_events();
        if (opt.stop && opt.stop(state)) rec.stopped = true;
    }
    if (opt.max_steps > 0 && last_sampled != state.step) sample();
    if (opt.stop && !rec.stopped) rec.bound_reached = true;
    if (state.config.n() != rec.n) throw std::logic_error("population not conserved");
    rec.rule_counts = state.rule_counts;
    rec.fired = state.fired;
    rec.steps = state.step;
    return rec;
}

}  // namespace popproto
