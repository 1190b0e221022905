#pragma once

// Acceptance suite: statistical and exact checks of the engine, the
// analytics and the library protocols at desk scale. Shared by the
// `popproto verify` subcommand and the acceptance test binary.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "analytics.hpp"
#include "engine.hpp"
#include "io.hpp"
#include "library.hpp"
#include "oracle.hpp"
#include "pool.hpp"
#include "stats.hpp"

namespace popproto::acceptance {

struct CriterionResult {
    CriterionResult() = default;
    CriterionResult(int id_, std::string name_) : id(id_), name(std::move(name_)) {}
    int id = 0;
    std::string name;
    bool pass = false;
    std::string summary;
    nlohmann::json detail;
    double seconds = 0;
};

struct SuiteOptions {
    bool quick = false;  ///< population sizes capped at 1e4, oracle at n <= 5
    SamplerFault fault = SamplerFault::None;
    std::uint64_t seed = 1;
    unsigned workers = worker_count();
    std::set<int> only;  ///< empty: all criteria
    std::function<void(const CriterionResult&)> on_result;
};

/// Constants fixed from pilot runs; reported with every result.
struct Constants {
    // 1, 2: trial counts and tolerances
    std::int64_t step_trials = 1'000'000;
    int step_configs = 20;
    double step_sigmas = 4.0;
    std::int64_t drift_trials = 1'000'000;
    double drift_sigmas = 3.0;
    // 3
    std::int64_t oracle_runs = 100'000;
    double oracle_sigmas = 3.0;
    // 4: absorption horizon C * ln^2 n
    int absorption_runs = 100;
    double absorption_cap_c = 40.0;
    // 5
    int perpetual_seeds = 20;
    std::int64_t perpetual_rounds = 2000;
    double window_c = 40.0;        ///< window = c * ln n rounds
    double concentration = 0.10;   ///< every state must exceed this per window
    double min_changed_fraction = 0.25;
    // 6
    double period_tolerance = 0.25;
    double period_rounds_per_ln_n = 250.0;
    // 7
    int broadcast_seeds = 20;
    double broadcast_burn_c = 60.0;
    std::int64_t broadcast_hold_rounds = 500;
    // 8
    int detect_seeds = 20;
    double detect_burn_c = 10.0;
    int detect_samples = 50;
    std::int64_t detect_sample_every = 20;
    double detect_sample_share = 0.95;
    double detect_off_c = 120.0;
    std::int64_t detect_quiet_rounds = 1000;
    // 9
    int silent_seeds = 20;
    double silent_c = 40.0;
    // 10
    std::int64_t perf_n = 1'000'000;
    std::int64_t perf_rounds = 2500;
    double perf_budget_seconds = 900.0;
};

inline nlohmann::json constants_json(const Constants& c) {
    return {{"step_trials", c.step_trials},
            {"step_sigmas", c.step_sigmas},
            {"drift_trials", c.drift_trials},
            {"drift_sigmas", c.drift_sigmas},
            {"oracle_runs", c.oracle_runs},
            {"oracle_sigmas", c.oracle_sigmas},
            {"absorption_cap_c", c.absorption_cap_c},
            {"window_c", c.window_c},
            {"min_changed_fraction", c.min_changed_fraction},
            {"period_tolerance", c.period_tolerance},
            {"broadcast_burn_c", c.broadcast_burn_c},
            {"detect_burn_c", c.detect_burn_c},
            {"detect_off_c", c.detect_off_c},
            {"silent_c", c.silent_c},
            {"perf_budget_seconds", c.perf_budget_seconds}};
}

namespace detail {

inline double ln2(double n) { return std::log(n) * std::log(n); }

inline std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

/// States whose answer is `answer`, for fast exact counting.
inline std::vector<StateId> states_answering(const Protocol& p, const std::string& answer) {
    std::vector<StateId> out;
    for (StateId s = 0; s < p.size(); ++s)
        if (p.answer(s) == answer) out.push_back(s);
    return out;
}

inline std::int64_t count_in(const Configuration& c, const std::vector<StateId>& states) {
    std::int64_t k = 0;
    for (auto s : states) k += c[s];
    return k;
}

inline std::int64_t non_source(const Protocol& p, const Configuration& c) {
    std::int64_t k = 0;
    for (StateId s = 0; s < p.size(); ++s)
        if (!p.is_source(s)) k += c[s];
    return k;
}

/// Exact E[delta_j^2] of one step, per state: the variance partner of drift().
inline std::vector<double> second_moment(const Configuration& config, const RuleTable& table) {
    const auto k = config.size();
    const double n = static_cast<double>(config.n());
    std::vector<double> m(k, 0.0);
    std::vector<int> d(k, 0);
    for (StateId a = 0; a < k; ++a) {
        if (config[a] == 0) continue;
        for (StateId b = 0; b < k; ++b) {
            const double pair = static_cast<double>(config[a]) * static_cast<double>(config[b] - (a == b)) / (n * (n - 1));
            if (pair <= 0) continue;
            for (const auto& o : table.row(a, b)) {
                if (o.rule == kIdentityRule) continue;
                const StateId touched[4] = {a, b, o.initiator_out, o.receiver_out};
                --d[a];
                --d[b];
                ++d[o.initiator_out];
                ++d[o.receiver_out];
                const double w = pair * o.prob.value();
                for (auto s : touched) {
                    m[s] += w * d[s] * d[s];
                    d[s] = 0;
                }
            }
        }
    }
    return m;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

inline RunState make_run(const Protocol& p, const Configuration& c, std::uint64_t seed, std::uint64_t stream,
                         const std::shared_ptr<const CompiledTable>& table, const SuiteOptions& opt) {
    auto rs = init_run(p, c, seed, stream, table);
    rs.fault = opt.fault;
    return rs;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// 1. single-step exactness

inline CriterionResult single_step_exactness(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{1, "single-step exactness"};
    double worst_z = 0;
    std::int64_t outcomes = 0;
    int failures = 0;
    auto& per = res.detail["protocols"];
    for (std::size_t pi = 0; pi < library_names().size(); ++pi) {
        const auto& name = library_names()[pi];
        const auto p = build(name);
        const auto rt = rule_table(p);
        const auto table = compile(p);
        Rng pick(opt.seed, 1000 + pi);
        double proto_z = 0;
        for (int ci = 0; ci < K.step_configs; ++ci) {
            // a random configuration of 2..10 agents over a small random support
            const auto n = static_cast<std::int64_t>(2 + pick.below(9));
            const auto support = 1 + pick.below(std::min<std::uint64_t>(p.size(), 5));
            std::vector<StateId> chosen;
            for (std::uint64_t j = 0; j < support; ++j) chosen.push_back(static_cast<StateId>(pick.below(p.size())));
            Configuration c(std::vector<std::int64_t>(p.size(), 0));
            for (std::int64_t a = 0; a < n; ++a) ++c[chosen[pick.below(chosen.size())]];

            const auto law = single_step_law(rt, c);
            auto rs = detail::make_run(p, c, opt.seed, pi * 100 + static_cast<std::uint64_t>(ci), table, opt);
            std::unordered_map<std::uint64_t, std::int64_t> hits;
            const auto k = static_cast<std::uint64_t>(p.size());
            for (std::int64_t t = 0; t < K.step_trials; ++t) {
                const auto it = draw_interaction(rs);
                const std::uint64_t key =
                    it.rule == kIdentityRule
                        ? UINT64_MAX
                        : ((it.initiator * k + it.receiver) * k + it.initiator_out) * k + it.receiver_out;
                ++hits[key];
            }
            std::map<std::vector<std::int64_t>, std::int64_t> observed;
            for (const auto& [key, h] : hits) {
                auto next = c.counts;
                if (key != UINT64_MAX) {
                    auto rest = key;
                    const auto bo = rest % k;
                    rest /= k;
                    const auto ao = rest % k;
                    rest /= k;
                    const auto b = rest % k;
                    const auto a = rest / k;
                    // an impossible pair (an agent paired with itself) shows up as a negative count
                    --next[a];
                    --next[b];
                    ++next[ao];
                    ++next[bo];
                }
                observed[next] += h;
            }
            std::map<std::vector<std::int64_t>, double> expected;
            for (const auto& [cfg, pr] : law) expected[cfg.counts] += pr.value();
            for (const auto& [cfg, h] : observed) expected.try_emplace(cfg, 0.0);
            const auto N = static_cast<double>(K.step_trials);
            for (const auto& [cfg, pr] : expected) {
                const double got = observed.count(cfg) ? static_cast<double>(observed.at(cfg)) : 0.0;
                const double mu = N * pr;
                const double sd = std::sqrt(N * pr * (1 - pr));
                double z;
                if (sd > 0)
                    z = std::abs(got - mu) / sd;
                else
                    z = std::abs(got - mu) < 0.5 ? 0.0 : std::numeric_limits<double>::infinity();
                ++outcomes;
                proto_z = std::max(proto_z, z);
                if (z > K.step_sigmas) ++failures;
            }
        }
        per[name] = {{"max_z", proto_z}};
        worst_z = std::max(worst_z, proto_z);
    }
    res.pass = failures == 0;
    res.detail["outcomes"] = outcomes;
    res.detail["failures"] = failures;
    res.detail["max_z"] = worst_z;
    res.detail["limit_sigmas"] = K.step_sigmas;
    res.summary = std::to_string(outcomes) + " outcomes over 5 protocols x " + std::to_string(K.step_configs) +
                  " configurations, " + std::to_string(K.step_trials) + " trials each; max |z| = " +
                  detail::fmt("%.2f", worst_z) + " (limit 4), " + std::to_string(failures) + " outside";
    return res;
}

// ---------------------------------------------------------------------------
// 2. drift oracle

inline CriterionResult drift_oracle(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{2, "drift oracle"};
    const std::int64_t n = 1000;
    struct Case {
        std::string protocol, init;
        std::map<std::string, std::int64_t> sources;
        std::vector<std::int64_t> explicit_counts;
    };
    // few occupied states each, so the componentwise comparison stays small
    const std::vector<Case> cases{
        {"rps", "", {}, {500, 250, 250}},
        {"rps", "", {}, {200, 300, 500}},
        {"po", "center", {}, {}},
        {"po", "uniform-random", {{"X", 10}}, {}},
        {"po", "corner", {{"X", 1}}, {}},
        {"po_prime", "uniform-random", {{"X[1]", 1}}, {}},
        {"detect", "corner", {{"X", 1}}, {}},
        {"detect", "center", {{"X", 5}}, {}},
        {"bitbroadcast", "corner", {{"X[1]", 1}}, {}},
        {"bitbroadcast", "center", {{"X[2]", 5}}, {}},
    };
    double worst_z = 0;
    int failures = 0, components = 0;
    auto& per = res.detail["configurations"] = nlohmann::json::array();
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& cs = cases[ci];
        const auto p = build(cs.protocol);
        const auto table = compile(p);
        const Configuration c = cs.explicit_counts.empty()
                                    ? canonical_init(p, cs.init, n, cs.sources, opt.seed + ci)
                                    : Configuration(cs.explicit_counts);
        const auto rt = rule_table(p);
        const auto expect = drift(c, rt);
        const auto moment = detail::second_moment(c, rt);
        auto rs = detail::make_run(p, c, opt.seed, 5000 + ci, table, opt);
        const auto k = p.size();
        std::vector<double> sum(k, 0.0);
        std::vector<int> delta(k, 0);
        for (std::int64_t t = 0; t < K.drift_trials; ++t) {
            const auto it = draw_interaction(rs);
            if (it.rule == kIdentityRule) continue;
            const StateId touched[4] = {it.initiator, it.receiver, it.initiator_out, it.receiver_out};
            --delta[it.initiator];
            --delta[it.receiver];
            ++delta[it.initiator_out];
            ++delta[it.receiver_out];
            for (auto s : touched) {
                sum[s] += delta[s];
                delta[s] = 0;
            }
        }
        const auto N = static_cast<double>(K.drift_trials);
        double case_z = 0;
        for (std::size_t s = 0; s < k; ++s) {
            const double m = sum[s] / N;
            const double var = std::max(0.0, moment[s] - expect[s] * expect[s]);
            const double se = std::sqrt(var / N);
            const double diff = std::abs(m - expect[s]);
            double z;
            if (se > 0)
                z = diff / se;
            else
                z = diff <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
            if (se > 0 || expect[s] != 0) ++components;
            case_z = std::max(case_z, z);
            if (z > K.drift_sigmas) ++failures;
        }
        worst_z = std::max(worst_z, case_z);
        per.push_back({{"protocol", cs.protocol}, {"init", cs.init.empty() ? "explicit" : cs.init}, {"max_z", case_z}});
    }

    // limit drift of pure RPS against p*a_{i-1}*a_i - p*a_i*a_{i+1} at rational points
    const auto rps = build("rps");
    const auto rt = rule_table(rps);
    const double pp = rps.params.at("p");
    const std::vector<std::array<double, 3>> points{{1.0 / 2, 1.0 / 4, 1.0 / 4}, {1.0 / 3, 1.0 / 3, 1.0 / 3},
                                                    {1.0 / 5, 3.0 / 10, 1.0 / 2}, {1.0 / 7, 2.0 / 7, 4.0 / 7},
                                                    {3.0 / 8, 1.0 / 8, 1.0 / 2},  {0.0, 1.0 / 2, 1.0 / 2}};
    double worst_limit = 0, worst_phi_dot = 0;
    const OscillatorProjector proj(rps);
    for (const auto& a : points) {
        const auto d = proj.project(limit_drift({a[0], a[1], a[2]}, rt));
        double phi_dot = 0;
        for (int i = 0; i < 3; ++i) {
            const double prev = a[(i + 2) % 3], next = a[(i + 1) % 3];
            const double want = pp * prev * a[i] - pp * a[i] * next;
            worst_limit = std::max(worst_limit, std::abs(d.a[i] - want));
            if (a[i] > 0) phi_dot += d.a[i] / a[i];
        }
        if (a[0] > 0 && a[1] > 0 && a[2] > 0) worst_phi_dot = std::max(worst_phi_dot, std::abs(phi_dot));
    }
    res.pass = failures == 0 && worst_limit <= 1e-12;
    res.detail["max_z"] = worst_z;
    res.detail["components"] = components;
    res.detail["failures"] = failures;
    res.detail["rps_limit_max_error"] = worst_limit;
    res.detail["rps_phi_dot_max"] = worst_phi_dot;
    res.summary = "10 configurations at n=1000, " + std::to_string(K.drift_trials) + " steps each; max |z| = " +
                  detail::fmt("%.2f", worst_z) + " (limit 3) over " + std::to_string(components) +
                  " components; RPS limit error " + detail::fmt("%.1e", worst_limit) + " (limit 1e-12)";
    return res;
}

// ---------------------------------------------------------------------------
// 3. oracle equivalence

inline CriterionResult oracle_equivalence(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{3, "oracle equivalence"};
    const auto p = build("po");
    const auto table = compile(p);
    const OscillatorProjector corners(p);
    const std::vector<std::string> order{"A1+", "A2+", "A3+", "A1++", "A2++"};
    bool pass = true;
    double worst_z = 0;
    auto& per = res.detail["sizes"] = nlohmann::json::array();
    for (std::int64_t n : {3, 4, 5}) {
        Configuration start(std::vector<std::int64_t>(p.size(), 0));
        for (std::int64_t a = 0; a < n; ++a) ++start[p.at(order[static_cast<std::size_t>(a) % order.size()])];
        const auto chain = enumerate(p, n, {{"X", 0}});
        const auto exact = absorption(chain, start);
        if (!exact.absorbing) {
            pass = false;
            continue;
        }
        std::vector<std::int64_t> hits(exact.targets.size(), 0);
        std::vector<double> steps(static_cast<std::size_t>(K.oracle_runs));
        std::unordered_map<std::vector<std::int64_t>, std::size_t, VectorHash> target_index;
        for (std::size_t t = 0; t < exact.targets.size(); ++t) target_index[chain.configs[exact.targets[t]].counts] = t;
        int stray = 0;
        for (std::int64_t r = 0; r < K.oracle_runs; ++r) {
            auto rs = detail::make_run(p, start, opt.seed + static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r),
                                       table, opt);
            std::int64_t guard = 0;
            while (!corners.corner(rs.config).has_value() && guard++ < 100'000'000) step(rs);
            auto it = target_index.find(rs.config.counts);
            if (it == target_index.end())
                ++stray;
            else
                ++hits[it->second];
            steps[static_cast<std::size_t>(r)] = static_cast<double>(rs.step);
        }
        const auto N = static_cast<double>(K.oracle_runs);
        double z_max = 0;
        nlohmann::json probs = nlohmann::json::array();
        for (std::size_t t = 0; t < exact.targets.size(); ++t) {
            const double pr = exact.probability[t];
            const double f = static_cast<double>(hits[t]) / N;
            const double sd = std::sqrt(pr * (1 - pr) / N);
            const double z = sd > 0 ? std::abs(f - pr) / sd : (std::abs(f - pr) == 0 ? 0.0 : 1e300);
            z_max = std::max(z_max, z);
            probs.push_back({{"exact", exact.probability_exact[t]}, {"value", pr}, {"empirical", f}, {"z", z}});
        }
        const double m = stats::mean(steps);
        const double se = stats::stddev(steps) / std::sqrt(N);
        const double zt = std::abs(m - exact.expected_steps) / se;
        z_max = std::max(z_max, zt);
        worst_z = std::max(worst_z, z_max);
        if (z_max > K.oracle_sigmas || stray > 0) pass = false;
        per.push_back({{"n", n},
                       {"absorbing_configurations", exact.targets.size()},
                       {"probabilities", probs},
                       {"expected_steps", exact.expected_steps},
                       {"expected_steps_exact", exact.expected_steps_exact},
                       {"mean_steps", m},
                       {"steps_z", zt},
                       {"runs_outside_oracle_targets", stray}});
    }
    res.pass = pass;
    res.detail["max_z"] = worst_z;
    res.summary = "P_o, #X=0, n in {3,4,5}, " + std::to_string(K.oracle_runs) +
                  " runs each; max |z| over absorption probabilities and mean steps = " + detail::fmt("%.2f", worst_z) +
                  " (limit 3)";
    return res;
}

// ---------------------------------------------------------------------------
// 4. absorption without a source

inline CriterionResult absorption_at_scale(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{4, "corner absorption without source"};
    const auto p = build("po");
    const auto table = compile(p);
    const OscillatorProjector corners(p);
    bool all_absorbed = true;
    double c_fit = 0;
    std::vector<double> means;
    auto& per = res.detail["sizes"] = nlohmann::json::array();
    for (std::int64_t n : {1000, 10000}) {
        const double cap_rounds = K.absorption_cap_c * detail::ln2(static_cast<double>(n));
        std::vector<double> rounds(static_cast<std::size_t>(K.absorption_runs), -1.0);
        parallel_for(
            static_cast<std::size_t>(K.absorption_runs),
            [&](std::size_t r) {
                const auto c = canonical_init(p, "uniform-random", n, 0, opt.seed + 7 * r + static_cast<std::uint64_t>(n));
                auto rs = detail::make_run(p, c, opt.seed + static_cast<std::uint64_t>(n), r, table, opt);
                RunOptions ro;
                ro.max_steps = static_cast<std::int64_t>(std::ceil(cap_rounds)) * n;
                ro.cadence = ro.max_steps;
                ro.check_every = n;
                ro.stop = [&](const RunState& s) { return corners.corner(s.config).has_value(); };
                const auto rec = run(rs, ro);
                rounds[r] = rec.stopped ? rs.round() : -1.0;
            },
            opt.workers);
        int absorbed = 0;
        double mx = 0;
        std::vector<double> ok;
        for (double t : rounds)
            if (t >= 0) {
                ++absorbed;
                ok.push_back(t);
                mx = std::max(mx, t);
            }
        all_absorbed = all_absorbed && absorbed == K.absorption_runs;
        const double c_n = mx / detail::ln2(static_cast<double>(n));
        c_fit = std::max(c_fit, c_n);
        means.push_back(stats::mean(ok));
        per.push_back({{"n", n},
                       {"absorbed", absorbed},
                       {"runs", K.absorption_runs},
                       {"mean_rounds", stats::mean(ok)},
                       {"ci95", stats::ci95(ok)},
                       {"max_rounds", mx},
                       {"max_over_ln2n", c_n}});
    }
    const bool monotone = means.size() == 2 && means[1] > means[0];
    res.pass = all_absorbed && monotone;
    res.detail["C"] = c_fit;
    res.detail["monotone"] = monotone;
    res.summary = std::string(all_absorbed ? "all" : "NOT all") + " 2x" + std::to_string(K.absorption_runs) +
                  " runs absorbed; mean rounds " + detail::fmt("%.0f", means[0]) + " (n=1e3) -> " +
                  detail::fmt("%.0f", means.size() > 1 ? means[1] : 0.0) + " (n=1e4)" +
                  (monotone ? "" : " not increasing") + "; fitted C = " + detail::fmt("%.2f", c_fit) +
                  " (absorption rounds <= C ln^2 n)";
    return res;
}

// ---------------------------------------------------------------------------
// 5. perpetual oscillation with a source

inline CriterionResult perpetual_oscillation(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{5, "perpetual oscillation with source"};
    const auto p = build("po");
    const auto table = compile(p);
    const OscillatorProjector corners(p);
    const std::int64_t n = 10000;
    const double window = K.window_c * std::log(static_cast<double>(n));
    struct Out {
        double corner_stay = 0;  ///< longest run of consecutive rounds at a corner
        double max_gap = 0;
        double min_changed = 1;
    };
    std::vector<Out> outs(static_cast<std::size_t>(K.perpetual_seeds));
    std::vector<StateId> osc;
    for (StateId s = 0; s < p.size(); ++s)
        if (!p.is_source(s)) osc.push_back(s);
    parallel_for(
        outs.size(),
        [&](std::size_t r) {
            auto& o = outs[r];
            const auto c = canonical_init(p, "corner", n, 1);
            auto rs = detail::make_run(p, c, opt.seed + 55, r, table, opt);
            RunOptions ro;
            ro.max_steps = K.perpetual_rounds * n;
            ro.cadence = n;
            std::vector<double> last(p.size(), 0.0);
            std::vector<std::int64_t> window_start = c.counts;
            double window_begin = 0, changed = 0, corner_since = -1;
            ro.sink = [&](const RunState& s) {
                const double t = s.round();
                if (corners.corner(s.config) || is_silent(*s.compiled, s.config)) {
                    if (corner_since < 0) corner_since = t;
                    o.corner_stay = std::max(o.corner_stay, t - corner_since);
                } else {
                    corner_since = -1;
                }
                for (auto st : osc)
                    if (static_cast<double>(s.config[st]) > K.concentration * static_cast<double>(n)) {
                        o.max_gap = std::max(o.max_gap, t - last[st]);
                        last[st] = t;
                    }
                if (t - window_begin >= window) {
                    o.min_changed = std::min(o.min_changed, changed);
                    window_begin = t;
                    window_start = s.config.counts;
                    changed = 0;
                }
                std::int64_t l1 = 0;
                for (std::size_t st = 0; st < p.size(); ++st) l1 += std::abs(s.config[st] - window_start[st]);
                // agents that changed state since the window began, at least
                changed = std::max(changed, static_cast<double>(l1) / 2.0 / static_cast<double>(n));
            };
            run(rs, ro);
            for (auto st : osc) o.max_gap = std::max(o.max_gap, static_cast<double>(K.perpetual_rounds) - last[st]);
        },
        opt.workers);
    double corner_stay = 0, max_gap = 0, min_changed = 1;
    for (const auto& o : outs) {
        corner_stay = std::max(corner_stay, o.corner_stay);
        max_gap = std::max(max_gap, o.max_gap);
        min_changed = std::min(min_changed, o.min_changed);
    }
    // absorbed: still at a corner a full window after arriving there
    const bool corner = corner_stay >= window;
    res.pass = !corner && max_gap <= window && min_changed >= K.min_changed_fraction;
    res.detail["corner_absorption"] = corner;
    res.detail["longest_corner_stay_rounds"] = corner_stay;
    res.detail["window_rounds"] = window;
    res.detail["c"] = K.window_c;
    res.detail["max_gap_rounds"] = max_gap;
    res.detail["gap_over_ln_n"] = max_gap / std::log(static_cast<double>(n));
    res.detail["min_changed_fraction_per_window"] = min_changed;
    res.summary = std::string(corner ? "corner absorption in " : "no corner absorption in ") +
                  std::to_string(K.perpetual_seeds) + " runs x " + std::to_string(K.perpetual_rounds) +
                  " rounds (longest corner stay " + detail::fmt("%.0f", corner_stay) + " rounds); every A-state above 10% at least every " +
                  detail::fmt("%.0f", max_gap) + " rounds (window c ln n = " + detail::fmt("%.0f", window) +
                  ", c = " + detail::fmt("%.0f", K.window_c) + "); min fraction of agents changed per window " +
                  detail::fmt("%.2f", min_changed);
    return res;
}

// ---------------------------------------------------------------------------
// 6. period scaling

struct PeriodPoint {
    std::int64_t n = 0, sources = 0;
    int runs = 0, runs_without_cycles = 0;
    double period = 0, ci = 0;
    int cycles = 0;
};

/// Mean hysteresis period from the corner with `sources` agents in the first
/// source state, sampled every round.
inline PeriodPoint measure_period(const Protocol& p, std::int64_t n, std::int64_t sources, int runs,
                                  std::int64_t rounds, const SuiteOptions& opt) {
    const auto table = compile(p);
    PeriodPoint pt{n, sources, runs};
    std::vector<PeriodEstimate> est(static_cast<std::size_t>(runs));
    parallel_for(
        est.size(),
        [&](std::size_t r) {
            const auto c = canonical_init(p, "corner", n, sources);
            auto rs = detail::make_run(p, c, opt.seed + 66 + static_cast<std::uint64_t>(sources), r, table, opt);
            RunOptions ro;
            ro.max_steps = rounds * n;
            ro.cadence = n;
            std::vector<double> t;
            std::array<std::vector<double>, 3> a;
            double s_sum = 0;
            const OscillatorProjector proj(p);
            ro.sink = [&](const RunState& s) {
                const auto v = proj.view(s.config);
                t.push_back(s.round());
                for (int i = 0; i < 3; ++i) a[i].push_back(v.a[i]);
                s_sum += v.s;
            };
            run(rs, ro);
            est[r] = estimate_period(t, a, s_sum / static_cast<double>(t.size()));
        },
        opt.workers);
    std::vector<double> periods;
    for (const auto& e : est) {
        if (!e.valid) {
            ++pt.runs_without_cycles;
            continue;
        }
        periods.push_back(e.period);
        pt.cycles += e.cycles;
    }
    pt.period = stats::mean(periods);
    pt.ci = stats::ci95(periods);
    return pt;
}

inline PeriodPoint measure_period(std::int64_t n, std::int64_t sources, int runs, std::int64_t rounds,
                                  const SuiteOptions& opt) {
    return measure_period(build("po"), n, sources, runs, rounds, opt);
}

inline nlohmann::json to_json(const PeriodPoint& p) {
    return {{"n", p.n},
            {"sources", p.sources},
            {"runs", p.runs},
            {"runs_without_cycles", p.runs_without_cycles},
            {"mean_period_rounds", p.period},
            {"ci95", p.ci},
            {"cycles", p.cycles},
            {"period_over_ln_n", p.period / std::log(static_cast<double>(p.n))},
            {"ln_n_over_x", std::log(static_cast<double>(p.n) / static_cast<double>(std::max<std::int64_t>(1, p.sources)))}};
}

inline CriterionResult period_scaling(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{6, "period scaling"};
    const std::vector<std::int64_t> sizes = opt.quick ? std::vector<std::int64_t>{1000, 10000}
                                                      : std::vector<std::int64_t>{1000, 10000, 100000};
    auto runs_for = [](std::int64_t n) { return n <= 1000 ? 10 : n <= 10000 ? 6 : 3; };
    auto rounds_for = [&](std::int64_t n) {
        return static_cast<std::int64_t>(K.period_rounds_per_ln_n * std::log(static_cast<double>(n)));
    };
    std::vector<PeriodPoint> by_n;
    for (auto n : sizes) by_n.push_back(measure_period(n, 1, runs_for(n), rounds_for(n), opt));
    std::vector<double> ratios;
    bool all_cycle = true;
    for (const auto& pt : by_n) {
        ratios.push_back(pt.period / std::log(static_cast<double>(pt.n)));
        all_cycle = all_cycle && pt.runs_without_cycles == 0;
    }
    const double mean_ratio = stats::mean(ratios);
    double spread = 0;
    for (double r : ratios) spread = std::max(spread, std::abs(r / mean_ratio - 1));
    const bool part_a = all_cycle && spread <= K.period_tolerance;

    // source sweep at the largest n: #X = 1, n^0.4, n^0.8 (1, 1e2, 1e4 at n = 1e5).
    // The quick suite stays at x <= n^-0.6, where P_o still cycles at n = 1e4.
    const auto big = sizes.back();
    std::vector<PeriodPoint> by_x{by_n.back()};
    const auto exponents = opt.quick ? std::vector<double>{0.2, 0.4} : std::vector<double>{0.4, 0.8};
    for (double e : exponents) {
        const auto x = static_cast<std::int64_t>(std::llround(std::pow(static_cast<double>(big), e)));
        by_x.push_back(measure_period(big, x, runs_for(big), rounds_for(big), opt));
    }
    bool sweep_cycles = true, decreasing = true;
    std::vector<double> periods, logs;
    for (std::size_t i = 0; i < by_x.size(); ++i) {
        sweep_cycles = sweep_cycles && by_x[i].runs_without_cycles == 0;
        periods.push_back(by_x[i].period);
        logs.push_back(std::log(static_cast<double>(big) / static_cast<double>(by_x[i].sources)));
        if (i > 0 && !(by_x[i].period < by_x[i - 1].period)) decreasing = false;
    }
    const double rho = sweep_cycles ? stats::spearman(periods, logs) : 0.0;
    const bool part_b = sweep_cycles && decreasing && rho == 1.0;
    res.pass = part_a && part_b;
    for (const auto& pt : by_n) res.detail["by_n"].push_back(to_json(pt));
    for (const auto& pt : by_x) res.detail["by_sources"].push_back(to_json(pt));
    res.detail["max_relative_deviation"] = spread;
    res.detail["spearman"] = rho;
    std::string ratio_text;
    for (std::size_t i = 0; i < by_n.size(); ++i)
        ratio_text += (i ? ", " : "") + detail::fmt("%.1f", ratios[i]);
    std::string sweep_text;
    for (const auto& pt : by_x)
        sweep_text += (sweep_text.empty() ? "" : ", ") + std::string("#X=") + std::to_string(pt.sources) + ": " +
                      (pt.runs_without_cycles ? std::to_string(pt.runs_without_cycles) + "/" + std::to_string(pt.runs) +
                                                    " runs without cycles"
                                              : detail::fmt("%.0f", pt.period));
    res.summary = "period/ln n = " + ratio_text + " (max deviation " + detail::fmt("%.0f%%", 100 * spread) +
                  ", limit 25%); n=" + std::to_string(big) + " sweep " + sweep_text + "; Spearman " +
                  (sweep_cycles ? detail::fmt("%.2f", rho) : std::string("undefined"));
    return res;
}

// ---------------------------------------------------------------------------
// 7. BitBroadcast

inline CriterionResult bit_broadcast(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{7, "BitBroadcast"};
    const auto p = build("bitbroadcast");
    const auto table = compile(p);
    const std::int64_t n = 10000;
    const auto burn = static_cast<std::int64_t>(std::ceil(K.broadcast_burn_c * detail::ln2(static_cast<double>(n))));
    bool pass = true;
    double worst_last_wrong = 0;
    for (const std::string answer : {"1", "2"}) {
        const std::string src = "X[" + answer + "]";
        const auto right = detail::states_answering(p, answer);
        std::vector<double> last_wrong(static_cast<std::size_t>(K.broadcast_seeds), 0);
        std::vector<char> ok(last_wrong.size(), 1);
        parallel_for(
            last_wrong.size(),
            [&](std::size_t r) {
                const auto c = canonical_init(p, "uniform-random", n, {{src, 1}}, opt.seed + 77 * r + answer[0]);
                auto rs = detail::make_run(p, c, opt.seed + 70 + static_cast<std::uint64_t>(answer[0]), r, table, opt);
                RunOptions ro;
                ro.max_steps = (burn + K.broadcast_hold_rounds) * n;
                ro.cadence = n;
                ro.sink = [&](const RunState& s) {
                    if (detail::count_in(s.config, right) != detail::non_source(p, s.config)) {
                        last_wrong[r] = s.round();
                        if (s.round() >= static_cast<double>(burn)) ok[r] = 0;
                    }
                };
                run(rs, ro);
            },
            opt.workers);
        int good = 0;
        double worst = 0;
        for (std::size_t r = 0; r < ok.size(); ++r) {
            good += ok[r];
            worst = std::max(worst, last_wrong[r]);
        }
        pass = pass && good == K.broadcast_seeds;
        worst_last_wrong = std::max(worst_last_wrong, worst);
        res.detail["sources"][src] = {{"correct_runs", good}, {"runs", K.broadcast_seeds}, {"latest_wrong_round", worst}};
    }
    res.pass = pass;
    res.detail["burn_in_rounds"] = burn;
    res.detail["C"] = K.broadcast_burn_c;
    res.detail["achieved_C"] = worst_last_wrong / detail::ln2(static_cast<double>(n));
    res.summary = std::string(pass ? "all" : "NOT all") + " 2x" + std::to_string(K.broadcast_seeds) +
                  " runs answer correctly from round " + std::to_string(burn) + " (C = " +
                  detail::fmt("%.0f", K.broadcast_burn_c) + ") through +" + std::to_string(K.broadcast_hold_rounds) +
                  "; last wrong answer at round " + detail::fmt("%.0f", worst_last_wrong) + " (C = " +
                  detail::fmt("%.1f", worst_last_wrong / detail::ln2(static_cast<double>(n))) + ")";
    return res;
}

// ---------------------------------------------------------------------------
// 8. Detect

inline CriterionResult detect(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{8, "Detect"};
    const auto params = default_params();
    const auto p = build("detect", params);
    const auto table = compile(p);
    const std::int64_t n = 10000;
    const auto yes = detail::states_answering(p, "yes");
    const double eps = params.epsilon;

    // (a) source present
    const auto burn = static_cast<std::int64_t>(std::ceil(K.detect_burn_c * detail::ln2(static_cast<double>(n))));
    std::vector<std::vector<double>> fr(static_cast<std::size_t>(K.detect_seeds));
    parallel_for(
        fr.size(),
        [&](std::size_t r) {
            const auto c = canonical_init(p, "corner", n, 1);
            auto rs = detail::make_run(p, c, opt.seed + 88, r, table, opt);
            RunOptions ro;
            ro.max_steps = (burn + K.detect_samples * K.detect_sample_every) * n;
            ro.cadence = K.detect_sample_every * n;
            ro.sink = [&](const RunState& s) {
                if (s.step <= burn * n || fr[r].size() >= static_cast<std::size_t>(K.detect_samples)) return;
                fr[r].push_back(static_cast<double>(detail::count_in(s.config, yes)) /
                                static_cast<double>(detail::non_source(p, s.config)));
            };
            run(rs, ro);
        },
        opt.workers);
    std::vector<double> all;
    for (const auto& v : fr) all.insert(all.end(), v.begin(), v.end());
    int good = 0;
    for (double f : all) good += f >= 1 - eps;
    const double share = all.empty() ? 0.0 : static_cast<double>(good) / static_cast<double>(all.size());
    const double achieved_eps = 1 - stats::quantile(all, 1 - K.detect_sample_share);
    const bool part_a = share >= K.detect_sample_share;

    // (b) source removed at round 0
    const auto off_bound = K.detect_off_c * detail::ln2(static_cast<double>(n));
    struct Off {
        double all_no = -1;
        bool relit = false;
    };
    std::vector<Off> offs(static_cast<std::size_t>(K.detect_seeds));
    parallel_for(
        offs.size(),
        [&](std::size_t r) {
            auto& o = offs[r];
            const auto c = canonical_init(p, "uniform-random", n, 1, opt.seed + 99 * r);
            auto rs = detail::make_run(p, c, opt.seed + 89, r, table, opt);
            RunOptions ro;
            ro.events = {ScenarioEvent{0, ScenarioEvent::Action::RemoveSource, p.at("X"), p.at("(A1+,M0,L-1)"), 0}};
            ro.max_steps = static_cast<std::int64_t>(std::ceil(off_bound) + static_cast<double>(K.detect_quiet_rounds) + 1) * n;
            ro.cadence = n;
            ro.sink = [&](const RunState& s) {
                const bool any_yes = detail::count_in(s.config, yes) > 0;
                if (o.all_no < 0 && !any_yes) o.all_no = s.round();
                if (o.all_no >= 0 && any_yes) o.relit = true;
            };
            ro.stop = [&](const RunState& s) {
                return o.all_no >= 0 && s.round() >= o.all_no + static_cast<double>(K.detect_quiet_rounds);
            };
            run(rs, ro);
        },
        opt.workers);
    bool part_b = true;
    double worst_off = 0;
    for (const auto& o : offs) {
        if (o.all_no < 0 || o.all_no > off_bound || o.relit) part_b = false;
        worst_off = std::max(worst_off, o.all_no < 0 ? std::numeric_limits<double>::infinity() : o.all_no);
    }
    res.pass = part_a && part_b;
    res.detail["a"] = {{"samples", all.size()},
                       {"share_at_least_1_minus_eps", share},
                       {"epsilon", eps},
                       {"achieved_epsilon", achieved_eps},
                       {"min_yes_fraction", all.empty() ? 0.0 : *std::min_element(all.begin(), all.end())},
                       {"burn_in_rounds", burn},
                       {"q", params.q}};
    res.detail["b"] = {{"bound_rounds", off_bound},
                       {"C", K.detect_off_c},
                       {"latest_all_no_round", worst_off},
                       {"achieved_C", worst_off / detail::ln2(static_cast<double>(n))},
                       {"quiet_rounds", K.detect_quiet_rounds}};
    res.summary = "(a) " + detail::fmt("%.1f%%", 100 * share) + " of " + std::to_string(all.size()) +
                  " samples with yes >= 0.95 (need 95%), achieved eps " + detail::fmt("%.4f", achieved_eps) +
                  " at q = " + detail::fmt("%g", params.q) + "; (b) " + (part_b ? "all" : "NOT all") + " " +
                  std::to_string(K.detect_seeds) + " runs all-no by round " + detail::fmt("%.0f", worst_off) +
                  " (bound " + detail::fmt("%.0f", off_bound) + ") and dark for " +
                  std::to_string(K.detect_quiet_rounds) + " more rounds";
    return res;
}

// ---------------------------------------------------------------------------
// 9. silent two-source variant

inline CriterionResult silent_stabilization(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{9, "silent stabilization of P_o'"};
    const auto p = build("po_prime");
    const auto table = compile(p);
    const std::int64_t n = 10000;
    const double bound = K.silent_c * detail::ln2(static_cast<double>(n));
    bool pass = true;
    double worst = 0;
    for (const std::string z : {"1", "2"}) {
        const std::string src = "X[" + z + "]";
        const auto target = p.at("A" + z + "++");
        std::vector<double> when(static_cast<std::size_t>(K.silent_seeds), -1);
        parallel_for(
            when.size(),
            [&](std::size_t r) {
                const auto c = canonical_init(p, "uniform-random", n, {{src, 1}}, opt.seed + 31 * r + z[0]);
                auto rs = detail::make_run(p, c, opt.seed + 90 + static_cast<std::uint64_t>(z[0]), r, table, opt);
                RunOptions ro;
                ro.max_steps = static_cast<std::int64_t>(std::ceil(bound)) * n;
                ro.cadence = ro.max_steps;
                ro.check_every = n;
                ro.stop = [&](const RunState& s) { return is_silent(*s.compiled, s.config); };
                const auto rec = run(rs, ro);
                if (rec.stopped && rs.config[target] == n - 1) when[r] = rs.round();
            },
            opt.workers);
        int good = 0;
        for (double w : when) {
            good += w >= 0;
            worst = std::max(worst, w < 0 ? std::numeric_limits<double>::infinity() : w);
        }
        pass = pass && good == K.silent_seeds;
        res.detail["sources"][src] = {{"silent_at_target", good}, {"runs", K.silent_seeds}};
    }
    res.pass = pass;
    res.detail["bound_rounds"] = bound;
    res.detail["latest_round"] = worst;
    res.detail["achieved_C"] = worst / detail::ln2(static_cast<double>(n));
    res.summary = std::string(pass ? "all" : "NOT all") + " 2x" + std::to_string(K.silent_seeds) +
                  " runs silent in the source's corner; latest at round " + detail::fmt("%.0f", worst) + " (C = " +
                  detail::fmt("%.1f", worst / detail::ln2(static_cast<double>(n))) + ", bound C = " +
                  detail::fmt("%.0f", K.silent_c) + ")";
    return res;
}

// ---------------------------------------------------------------------------
// 10. performance

/// Null stream used to include CSV formatting in the timing.
struct NullBuffer : std::streambuf {
    int overflow(int c) override { return c; }
    std::streamsize xsputn(const char*, std::streamsize n) override { return n; }
};

inline CriterionResult performance(const SuiteOptions& opt, const Constants& K = {}) {
    CriterionResult res{10, "performance"};
    const auto p = build("detect");
    const auto table = compile(p);
    const std::int64_t n = opt.quick ? 10000 : K.perf_n;
    const auto c = canonical_init(p, "corner", n, 1);
    auto rs = detail::make_run(p, c, opt.seed + 100, 0, table, opt);
    const MetricsTable metrics(p);
    NullBuffer buf;
    std::ostream out(&buf);
    metrics.write_header(out);
    RunOptions ro;
    ro.max_steps = K.perf_rounds * n;
    ro.cadence = std::max<std::int64_t>(1, n / 100);
    ro.sink = [&](const RunState& s) { metrics.write_row(out, s.config, s.step); };
    detail::Timer timer;
    const auto rec = run(rs, ro);
    const double sec = timer.seconds();
    const double per_step = sec / static_cast<double>(rec.steps);
    const double full_steps = static_cast<double>(K.perf_n) * static_cast<double>(K.perf_rounds);
    const double projected = per_step * full_steps;
    res.pass = projected <= K.perf_budget_seconds;
    res.detail = {{"n", n},
                  {"rounds", K.perf_rounds},
                  {"steps", rec.steps},
                  {"seconds", sec},
                  {"ns_per_step", per_step * 1e9},
                  {"seconds_for_full_run", projected},
                  {"measured_full_run", !opt.quick},
                  {"budget_seconds", K.perf_budget_seconds}};
    res.summary = std::string(opt.quick ? "projected " : "") + "Detect n=1e6, 2500 rounds (" +
                  detail::fmt("%.2g", full_steps) + " steps) with metrics every n/100 steps: " +
                  detail::fmt("%.0f", projected) + " s (" + detail::fmt("%.0f", per_step * 1e9) +
                  " ns/step; budget 900 s)";
    return res;
}

// ---------------------------------------------------------------------------

inline std::vector<std::pair<int, std::function<CriterionResult(const SuiteOptions&)>>> criteria() {
    return {{1, [](const SuiteOptions& o) { return single_step_exactness(o); }},
            {2, [](const SuiteOptions& o) { return drift_oracle(o); }},
            {3, [](const SuiteOptions& o) { return oracle_equivalence(o); }},
            {4, [](const SuiteOptions& o) { return absorption_at_scale(o); }},
            {5, [](const SuiteOptions& o) { return perpetual_oscillation(o); }},
            {6, [](const SuiteOptions& o) { return period_scaling(o); }},
            {7, [](const SuiteOptions& o) { return bit_broadcast(o); }},
            {8, [](const SuiteOptions& o) { return detect(o); }},
            {9, [](const SuiteOptions& o) { return silent_stabilization(o); }},
            {10, [](const SuiteOptions& o) { return performance(o); }}};
}

inline std::string format_line(const CriterionResult& r) {
    char head[96];
    std::snprintf(head, sizeof head, "[%s] %2d %-34s", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str());
    return std::string(head) + " " + r.summary + detail::fmt(" (%.1f s)", r.seconds);
}

inline std::vector<CriterionResult> run_suite(const SuiteOptions& opt) {
    std::vector<CriterionResult> out;
    for (const auto& [id, fn] : criteria()) {
        if (!opt.only.empty() && !opt.only.count(id)) continue;
        detail::Timer t;
        CriterionResult r;
        try {
            r = fn(opt);
        } catch (const std::exception& e) {
            r.id = id;
            r.name = "criterion " + std::to_string(id);
            r.pass = false;
            r.summary = std::string("error: ") + e.what();
        }
        r.seconds = t.seconds();
        if (opt.on_result) opt.on_result(r);
        out.push_back(std::move(r));
    }
    return out;
}

inline nlohmann::json to_json(const std::vector<CriterionResult>& results, const SuiteOptions& opt) {
    nlohmann::json j;
    j["suite"] = opt.quick ? "quick" : "full";
    j["seed"] = opt.seed;
    j["fault"] = opt.fault == SamplerFault::None ? "none" : "with-replacement";
    j["constants"] = constants_json(Constants{});
    bool all = true;
    for (const auto& r : results) {
        all = all && r.pass;
        j["criteria"].push_back(
            {{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"summary", r.summary}, {"seconds", r.seconds}, {"detail", r.detail}});
    }
    j["pass"] = all;
    return j;
}

}  // namespace popproto::acceptance
