#pragma once

// Subcommand implementations behind tools/popproto. Argument parsing lives in
// the tool; everything here takes plain structs so it can be tested directly.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "acceptance.hpp"
#include "analytics.hpp"
#include "dsl.hpp"
#include "engine.hpp"
#include "io.hpp"
#include "library.hpp"
#include "oracle.hpp"
#include "pool.hpp"
#include "scenario.hpp"
#include "stats.hpp"

#ifndef POPPROTO_VERSION
#define POPPROTO_VERSION "0.1.0"
#endif

namespace popproto::cli {

/// Invalid command line or experiment description (exit code 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string version() { return POPPROTO_VERSION; }

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::pair<std::string, double> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw UsageError("expected NAME=VALUE, got '" + text + "'");
    const auto name = scenario_detail::trim(text.substr(0, eq));
    const auto value = scenario_detail::trim(text.substr(eq + 1));
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (name.empty() || used != value.size() || value.empty())
        throw UsageError("malformed parameter '" + text + "'");
    return {name, v};
}

inline LibraryParams library_params(const std::vector<std::string>& overrides) {
    auto params = default_params();
    for (const auto& o : overrides) {
        const auto [name, v] = split_assignment(o);
        if (name == "p")
            params.p = v;
        else if (name == "r")
            params.r = v;
        else if (name == "q")
            params.q = v;
        else if (name == "s")
            params.s = v;
        else if (name == "epsilon")
            params.epsilon = v;
        else
            throw UsageError("unknown parameter '" + name + "' (known: p, r, q, s, epsilon)");
    }
    return params;
}

/// A library protocol by name, or a protocol file. Overrides replace
/// `param` lines of a file, or fields of the library parameters.
inline Protocol load_protocol(const std::string& name_or_path, const std::vector<std::string>& overrides = {}) {
    const auto& names = library_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
        try {
            return build(name_or_path, library_params(overrides));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (!std::filesystem::exists(name_or_path))
        throw UsageError("'" + name_or_path + "' is neither a library protocol nor a file");
    auto text = read_file(name_or_path);
    for (const auto& o : overrides) {
        const auto [name, v] = split_assignment(o);
        const std::regex line("^([ \\t]*param[ \\t]+" + name + "[ \\t]*=)[^\\n#]*", std::regex::multiline);
        if (!std::regex_search(text, line)) throw UsageError("'" + name_or_path + "' declares no parameter '" + name + "'");
        text = std::regex_replace(text, line, "$1 " + Probability::from_double(v).str());
    }
    try {
        return parse(text);
    } catch (const ParseError& e) {
        throw UsageError(name_or_path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// run

struct RunSpec {
    std::string protocol;
    std::vector<std::string> params;
    std::int64_t n = 0;
    std::string init = "corner";
    std::string sources;  ///< "X=1" or "X[1]=1,X[2]=0"
    std::string events;   ///< ';'-separated scenario events
    std::int64_t rounds = 0;
    std::optional<std::int64_t> steps;  ///< overrides rounds
    std::vector<std::uint64_t> seeds{1};
    std::int64_t cadence = 0;  ///< steps between samples, 0 = max(1, n/100)
    std::string out_dir = ".";
    std::string prefix;  ///< file prefix, default the protocol name
    unsigned workers = worker_count();
};

inline std::string csv_path(const RunSpec& spec, const std::string& prefix, std::uint64_t seed) {
    return (std::filesystem::path(spec.out_dir) / (prefix + "_seed" + std::to_string(seed) + ".csv")).string();
}

/// Runs every seed, writes one CSV per seed and `<prefix>_manifest.json`.
/// Returns the manifest.
inline nlohmann::json cmd_run(const RunSpec& spec) {
    const auto p = load_protocol(spec.protocol, spec.params);
    if (spec.n < 2) throw UsageError("--n must be at least 2");
    if (spec.rounds < 0 || (spec.steps && *spec.steps < 0)) throw UsageError("duration must be nonnegative");
    if (spec.cadence < 0) throw UsageError("--cadence must be nonnegative");
    if (spec.seeds.empty()) throw UsageError("no seeds");
    if (std::set<std::uint64_t>(spec.seeds.begin(), spec.seeds.end()).size() != spec.seeds.size())
        throw UsageError("seeds must be distinct");
    std::map<std::string, std::int64_t> sources;
    std::vector<ScenarioEvent> events;
    try {
        sources = parse_sources(spec.sources);
        events = parse_events(p, spec.events, spec.n);
        canonical_init(p, spec.init, spec.n, sources, 0);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    } catch (const std::out_of_range& e) {
        throw UsageError(e.what());
    }
    std::filesystem::create_directories(spec.out_dir);
    const auto prefix = spec.prefix.empty() ? std::filesystem::path(p.name).stem().string() : spec.prefix;
    const auto max_steps = spec.steps ? *spec.steps : spec.rounds * spec.n;
    const auto cadence = spec.cadence > 0 ? spec.cadence : default_cadence(spec.n);
    const auto table = compile(p);
    const MetricsTable metrics(p);

    std::vector<nlohmann::json> records(spec.seeds.size());
    parallel_for(
        spec.seeds.size(),
        [&](std::size_t i) {
            const auto seed = spec.seeds[i];
            const auto init = canonical_init(p, spec.init, spec.n, sources, seed);
            auto rs = init_run(p, init, seed, 0, table);
            std::ofstream out(csv_path(spec, prefix, seed), std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + csv_path(spec, prefix, seed));
            metrics.write_header(out);
            RunOptions ro;
            ro.max_steps = max_steps;
            ro.cadence = cadence;
            ro.events = events;
            ro.sink = [&](const RunState& s) { metrics.write_row(out, s.config, s.step); };
            records[i] = to_json(run(rs, ro), p);
            records[i]["csv"] = std::filesystem::path(csv_path(spec, prefix, seed)).filename().string();
        },
        spec.workers);

    nlohmann::json m;
    m["version"] = version();
    m["command"] = "run";
    m["protocol"] = p.name;
    m["protocol_source"] = spec.protocol;
    m["params"] = p.params;
    m["n"] = spec.n;
    m["init"] = spec.init;
    m["sources"] = sources;
    m["events"] = nlohmann::json::array();
    for (const auto& e : events) m["events"].push_back(format_event(p, e));
    m["max_steps"] = max_steps;
    m["rounds"] = static_cast<double>(max_steps) / static_cast<double>(spec.n);
    m["cadence_steps"] = cadence;
    m["seeds"] = spec.seeds;
    m["columns"] = metrics.header();
    m["runs"] = records;
    std::ofstream(std::filesystem::path(spec.out_dir) / (prefix + "_manifest.json")) << m.dump(2) << '\n';
    return m;
}

// ---------------------------------------------------------------------------
// scaling

struct ScalingSpec {
    std::string protocol = "po";
    std::vector<std::string> params;
    std::vector<std::int64_t> sizes;
    std::vector<std::int64_t> sources;
    int seeds = 5;
    std::optional<std::int64_t> rounds;  ///< default 250 ln n (period), 40 ln^2 n (absorption cap)
    double regime_fraction = 0.005;      ///< #X/n above this is flagged
    std::uint64_t seed = 1;
    unsigned workers = worker_count();
};

struct ScalingRow {
    std::int64_t n = 0, sources = 0;
    int runs = 0;
    std::optional<double> period, period_ci;
    int runs_without_cycles = 0;
    std::optional<double> absorption, absorption_ci;
    int absorbed = 0;
    bool outside_regime = false;
    std::string note;
};

inline std::vector<ScalingRow> cmd_scaling(const ScalingSpec& spec) {
    if (spec.sizes.empty() || spec.sources.empty()) throw UsageError("--n and --sources lists must be nonempty");
    if (spec.seeds < 1) throw UsageError("--seeds must be positive");
    const auto p = load_protocol(spec.protocol, spec.params);
    if (oscillator_tags(p).empty() || p.source_states().empty())
        throw UsageError("protocol '" + p.name + "' has no oscillator with a source");
    const auto table = compile(p);
    const OscillatorProjector corners(p);
    acceptance::SuiteOptions opt;
    opt.seed = spec.seed;
    opt.workers = spec.workers;
    std::vector<ScalingRow> rows;
    for (auto n : spec.sizes)
        for (auto x : spec.sources) {
            if (n < 2 || x < 0 || x >= n) throw UsageError("need 0 <= #X < n for n=" + std::to_string(n));
            ScalingRow row;
            row.n = n;
            row.sources = x;
            row.runs = spec.seeds;
            const double ln = std::log(static_cast<double>(n));
            if (x == 0) {
                const auto cap = spec.rounds ? *spec.rounds : static_cast<std::int64_t>(std::ceil(40 * ln * ln));
                std::vector<double> t(static_cast<std::size_t>(spec.seeds), -1);
                parallel_for(
                    t.size(),
                    [&](std::size_t r) {
                        const auto c = canonical_init(p, "uniform-random", n, 0, spec.seed + r);
                        auto rs = init_run(p, c, spec.seed, r, table);
                        RunOptions ro;
                        ro.max_steps = cap * n;
                        ro.cadence = ro.max_steps;
                        ro.check_every = n;
                        ro.stop = [&](const RunState& s) { return corners.corner(s.config).has_value(); };
                        if (run(rs, ro).stopped) t[r] = rs.round();
                    },
                    spec.workers);
                std::vector<double> ok;
                for (double v : t)
                    if (v >= 0) ok.push_back(v);
                row.absorbed = static_cast<int>(ok.size());
                if (!ok.empty()) {
                    row.absorption = stats::mean(ok);
                    row.absorption_ci = stats::ci95(ok);
                }
                row.note = "no source: period undefined";
                if (row.absorbed < row.runs)
                    row.note += "; " + std::to_string(row.runs - row.absorbed) + " runs not absorbed in " +
                                std::to_string(cap) + " rounds";
            } else {
                const auto rounds = spec.rounds ? *spec.rounds : static_cast<std::int64_t>(250 * ln);
                const auto pt = acceptance::measure_period(p, n, x, spec.seeds, rounds, opt);
                row.runs_without_cycles = pt.runs_without_cycles;
                if (pt.runs_without_cycles < pt.runs) {
                    row.period = pt.period;
                    row.period_ci = pt.ci;
                }
                row.outside_regime = static_cast<double>(x) / static_cast<double>(n) > spec.regime_fraction;
                std::vector<std::string> notes;
                if (row.outside_regime) notes.push_back("outside analyzed regime");
                if (pt.runs_without_cycles)
                    notes.push_back(std::to_string(pt.runs_without_cycles) + "/" + std::to_string(pt.runs) +
                                    " runs without cycles");
                for (std::size_t i = 0; i < notes.size(); ++i) row.note += (i ? "; " : "") + notes[i];
            }
            rows.push_back(row);
        }
    return rows;
}

inline nlohmann::json to_json(const std::vector<ScalingRow>& rows, const ScalingSpec& spec) {
    nlohmann::json j;
    j["version"] = version();
    j["command"] = "scaling";
    j["protocol"] = spec.protocol;
    j["params"] = spec.params;
    j["seed"] = spec.seed;
    j["regime_fraction"] = spec.regime_fraction;
    j["rows"] = nlohmann::json::array();
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    for (const auto& r : rows) {
        const double ln = std::log(static_cast<double>(r.n));
        j["rows"].push_back(
            {{"n", r.n},
             {"sources", r.sources},
             {"x", static_cast<double>(r.sources) / static_cast<double>(r.n)},
             {"runs", r.runs},
             {"period_rounds", opt(r.period)},
             {"period_ci95", opt(r.period_ci)},
             {"period_over_ln_n", r.period ? nlohmann::json(*r.period / ln) : nlohmann::json(nullptr)},
             {"ln_n_over_sources",
              r.sources ? nlohmann::json(std::log(static_cast<double>(r.n) / static_cast<double>(r.sources)))
                        : nlohmann::json(nullptr)},
             {"runs_without_cycles", r.runs_without_cycles},
             {"absorption_rounds", opt(r.absorption)},
             {"absorption_ci95", opt(r.absorption_ci)},
             {"absorbed", r.absorbed},
             {"outside_analyzed_regime", r.outside_regime},
             {"note", r.note}});
    }
    return j;
}

inline void print_table(std::ostream& os, const std::vector<ScalingRow>& rows) {
    auto num = [](const std::optional<double>& v, int prec) {
        if (!v) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(prec) << *v;
        return s.str();
    };
    os << std::left << std::setw(10) << "n" << std::setw(8) << "#X" << std::right << std::setw(10) << "period"
       << std::setw(8) << "ci95" << std::setw(11) << "period/ln" << std::setw(12) << "absorption" << std::setw(8)
       << "ci95" << "  note\n";
    for (const auto& r : rows) {
        const double ln = std::log(static_cast<double>(r.n));
        os << std::left << std::setw(10) << r.n << std::setw(8) << r.sources << std::right << std::setw(10)
           << num(r.period, 1) << std::setw(8) << num(r.period_ci, 1) << std::setw(11)
           << num(r.period ? std::optional<double>(*r.period / ln) : std::nullopt, 2) << std::setw(12)
           << num(r.absorption, 1) << std::setw(8) << num(r.absorption_ci, 1) << "  " << r.note << '\n';
    }
}

// ---------------------------------------------------------------------------
// oracle

struct OracleSpec {
    std::string protocol;
    std::vector<std::string> params;
    std::int64_t n = 0;
    std::string sources;
    std::string start;  ///< "STATE=COUNT,..." including sources; empty: no absorption solve
    std::uint64_t cap = 1'000'000;
    std::size_t exact_limit = 10'000;
    std::string triplets;  ///< path for the sparse transition export
    std::size_t list_limit = 20;
};

inline nlohmann::json config_json(const Protocol& p, const Configuration& c) {
    nlohmann::json j = nlohmann::json::object();
    for (StateId s = 0; s < p.size(); ++s)
        if (c[s]) j[p.label(s)] = c[s];
    return j;
}

inline nlohmann::json cmd_oracle(const OracleSpec& spec) {
    const auto p = load_protocol(spec.protocol, spec.params);
    std::map<std::string, std::int64_t> sources;
    try {
        sources = parse_sources(spec.sources);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto chain = enumerate(p, spec.n, sources, spec.cap);
    nlohmann::json j;
    j["version"] = version();
    j["protocol"] = p.name;
    j["n"] = spec.n;
    j["sources"] = sources;
    j["configurations"] = chain.size();
    j["exact"] = chain.exact;
    j["max_row_defect"] = max_row_defect(chain);
    const auto sets = absorbing_sets(chain);
    auto& js = j["closed_classes"] = nlohmann::json::array();
    for (const auto& set : sets) {
        nlohmann::json c{{"size", set.size()}, {"configurations", nlohmann::json::array()}};
        for (std::size_t i = 0; i < set.size() && i < spec.list_limit; ++i)
            c["configurations"].push_back(config_json(p, chain.configs[set[i]]));
        js.push_back(c);
    }
    j["absorbing_configurations"] = absorbing_configurations(chain).size();
    if (!spec.start.empty()) {
        Configuration start(std::vector<std::int64_t>(p.size(), 0));
        try {
            for (const auto& [name, count] : parse_sources(spec.start)) start[resolve_state(p, name)] += count;
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        if (!chain.index.count(start.counts))
            throw UsageError("start configuration is not in the chain (check n and source counts)");
        AbsorptionOptions ao;
        ao.exact_limit = spec.exact_limit;
        const auto r = absorption(chain, start, ao);
        nlohmann::json a{{"start", config_json(p, start)}, {"absorbing", r.absorbing}, {"exact", r.exact}};
        if (r.absorbing) {
            a["targets"] = nlohmann::json::array();
            for (std::size_t t = 0; t < r.targets.size(); ++t)
                a["targets"].push_back({{"configuration", config_json(p, chain.configs[r.targets[t]])},
                                        {"probability", r.probability[t]},
                                        {"probability_exact", r.probability_exact[t]}});
            a["expected_steps"] = r.expected_steps;
            a["expected_steps_exact"] = r.expected_steps_exact;
            a["residual"] = r.residual;
        }
        j["absorption"] = a;
    }
    if (!spec.triplets.empty()) {
        std::ofstream out(spec.triplets);
        if (!out) throw UsageError("cannot write '" + spec.triplets + "'");
        write_triplets(chain, p, out);
        j["triplets"] = spec.triplets;
    }
    return j;
}

// ---------------------------------------------------------------------------
// parse-check

inline bool is_extension_text(const std::string& text) {
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        const auto t = scenario_detail::trim(line.substr(0, line.find('#')));
        if (t.empty()) continue;
        return t.rfind("extension", 0) == 0;
    }
    return false;
}

/// Parses and validates protocol files; extensions are parsed against
/// `base` (a library name or a protocol file). Returns false on any error.
inline bool cmd_parse_check(const std::vector<std::string>& files, const std::string& base, std::ostream& out,
                            std::ostream& err) {
    bool ok = true;
    std::optional<Protocol> base_protocol;
    for (const auto& file : files) {
        try {
            const auto text = read_file(file);
            Protocol p;
            std::string kind = "protocol";
            if (is_extension_text(text)) {
                if (base.empty()) throw UsageError("extension needs --base");
                if (!base_protocol) base_protocol = load_protocol(base);
                const auto e = parse_extension(text, *base_protocol);
                p = e.law;
                kind = "extension over " + base_protocol->name;
            } else {
                p = parse(text);
            }
            const auto report = validate(p);
            out << file << ": " << kind << " '" << p.name << "', " << p.size() << " states, " << p.rules.size()
                << " rules, initiator-preserving " << (report.initiator_preserving ? "yes" : "no") << '\n';
            if (!report.ok()) {
                ok = false;
                err << file << ": " << report.summary() << '\n';
            }
        } catch (const std::exception& e) {
            ok = false;
            err << file << ": " << e.what() << '\n';
        }
    }
    return ok;
}

}  // namespace popproto::cli
