#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "configuration.hpp"
#include "protocol.hpp"
#include "rng.hpp"

namespace popproto {

struct LibraryParams {
    double p = 0.06;        ///< attack probability of the oscillator
    double r = 0.1;         ///< majority-layer rule probability
    double q = 0.005;       ///< light turn-off probability, calibrated for epsilon
    double s = 1.0;         ///< oscillator concentration budget
    double epsilon = 0.05;  ///< target one-sided error for Detect
};

inline LibraryParams default_params() { return LibraryParams{}; }

inline const std::vector<std::string>& library_names() {
    static const std::vector<std::string> names{"rps", "po", "po_prime", "bitbroadcast", "detect"};
    return names;
}

/// An oscillator component label such as "A2++" or "A1+[1]".
struct OscillatorAtom {
    int species = 0;  ///< 1..3
    bool aggressive = false;
    bool flavored = true;
    std::string tag;
};

inline std::optional<OscillatorAtom> parse_oscillator_atom(const std::string& label) {
    static const std::regex re(R"(^A([1-3])(\+\+|\+)?(?:\[([^\]]+)\])?$)");
    std::smatch m;
    if (!std::regex_match(label, m, re)) return std::nullopt;
    OscillatorAtom a;
    a.species = m[1].str()[0] - '0';
    a.flavored = m[2].matched;
    a.aggressive = m[2].str() == "++";
    a.tag = m[3].matched ? m[3].str() : "";
    return a;
}

inline std::string oscillator_label(int species, bool aggressive, const std::string& tag = "") {
    return "A" + std::to_string(species) + (aggressive ? "++" : "+") + (tag.empty() ? "" : "[" + tag + "]");
}

namespace library_detail {

inline int cyc(int i) { return ((i - 1) % 3 + 3) % 3 + 1; }

inline Probability prob(double v) { return Probability::from_double(v); }

/// Rules (1)-(4) shared by P_o and P_o'.
inline void add_oscillator_rules(Protocol& p, double attack) {
    const auto one = Probability(Rational(1));
    const auto pa = prob(attack);
    const auto pa2 = prob(attack) * Probability(Rational(2));
    for (int i = 1; i <= 3; ++i)
        for (bool fi : {false, true})
            for (bool fr : {false, true}) {
                const auto init = oscillator_label(i, fi);
                p.add_rule(init, oscillator_label(i, fr), oscillator_label(i, true), one);
                p.add_rule(init, oscillator_label(cyc(i + 1), fr), oscillator_label(cyc(i + 1), false), one);
                const auto prey = oscillator_label(cyc(i - 1), fr);
                const auto hit = fi ? pa2 : pa;
                p.add_rule(init, prey, oscillator_label(i, false), hit);
                p.add_rule(init, prey, oscillator_label(cyc(i - 1), false), hit.complement());
            }
}

inline void add_oscillator_states(Protocol& p) {
    for (int i = 1; i <= 3; ++i)
        for (bool aggressive : {false, true}) p.add_state(oscillator_label(i, aggressive));
}

}  // namespace library_detail

inline Protocol build_rps(const LibraryParams& params) {
    Protocol p;
    p.name = "rps";
    p.params["p"] = params.p;
    p.initiator_preserving = true;
    for (int i = 1; i <= 3; ++i) p.add_state("A" + std::to_string(i));
    for (int i = 1; i <= 3; ++i)
        p.add_rule("A" + std::to_string(i), "A" + std::to_string(library_detail::cyc(i - 1)), "A" + std::to_string(i),
                   library_detail::prob(params.p));
    p.canonicalize();
    return p;
}

inline Protocol build_po(const LibraryParams& params) {
    Protocol p;
    p.name = "po";
    p.params["p"] = params.p;
    p.initiator_preserving = true;
    library_detail::add_oscillator_states(p);
    p.add_state("X", true);
    library_detail::add_oscillator_rules(p, params.p);
    const auto third = Probability(Rational(1, 3));
    for (int j = 1; j <= 3; ++j)
        for (bool f : {false, true})
            for (int target = 1; target <= 3; ++target)
                p.add_rule("X", oscillator_label(j, f), oscillator_label(target, false), third);
    p.canonicalize();
    return p;
}

inline Protocol build_po_prime(const LibraryParams& params) {
    Protocol p;
    p.name = "po_prime";
    p.params["p"] = params.p;
    p.initiator_preserving = true;
    library_detail::add_oscillator_states(p);
    p.add_state("X[1]", true);
    p.add_state("X[2]", true);
    library_detail::add_oscillator_rules(p, params.p);
    const auto one = Probability(Rational(1));
    for (bool f : {false, true}) {
        p.add_rule("X[1]", oscillator_label(3, f), oscillator_label(1, false), one);
        p.add_rule("X[1]", oscillator_label(2, f), oscillator_label(3, false), one);
        p.add_rule("X[2]", oscillator_label(1, f), oscillator_label(2, false), one);
        p.add_rule("X[2]", oscillator_label(3, f), oscillator_label(1, false), one);
        p.set_answer(p.at(oscillator_label(1, f)), "1");
        p.set_answer(p.at(oscillator_label(2, f)), "2");
    }
    p.canonicalize();
    return p;
}

/// Majority extension over P_o: an initiator of another species (or the
/// source) resets the receiver's M uniformly to +-1; within a species the
/// three-state approximate majority runs with probability r.
inline Extension build_pm_extension(const Protocol& po, const LibraryParams& params) {
    auto e = make_extension_skeleton(po, "pm", {"M-1", "M0", "M+1"});
    e.law.params["r"] = params.r;
    const auto half = Probability(Rational(1, 2));
    const auto r = library_detail::prob(params.r);
    auto species = [&](StateId u) -> int {
        if (e.ext_of[u] < 0) return 0;
        return parse_oscillator_atom(e.law.states[u].components[0])->species;
    };
    auto with_m = [&](StateId u, int m) { return *e.product(static_cast<std::size_t>(e.base_of[u]), static_cast<std::size_t>(m + 1)); };
    for (StateId u = 0; u < e.law.size(); ++u)
        for (StateId v = 0; v < e.law.size(); ++v) {
            if (e.ext_of[v] < 0) continue;
            const int su = species(u), sv = species(v);
            const int mu = e.ext_of[u] - 1, mv = e.ext_of[v] - 1;
            if (su != sv) {  // includes the source initiator (species 0)
                e.law.add_rule(u, v, u, with_m(v, +1), half);
                e.law.add_rule(u, v, u, with_m(v, -1), half);
                continue;
            }
            if (mu == -1 && mv == +1) e.law.add_rule(u, v, u, with_m(v, 0), r);
            if (mu == +1 && mv == -1) e.law.add_rule(u, v, u, with_m(v, 0), r);
            if (mu == +1 && mv == 0) e.law.add_rule(u, v, u, with_m(v, +1), r);
            if (mu == -1 && mv == 0) e.law.add_rule(u, v, u, with_m(v, -1), r);
        }
    e.law.canonicalize();
    return e;
}

/// Light extension over (P_o o P_m): L-1 -> L+1 via an M-1 initiator,
/// L+1 -> Lon via an M+1 initiator, Lon -> L-1 with probability q.
inline Extension build_pl_extension(const Protocol& po_pm, const LibraryParams& params) {
    auto e = make_extension_skeleton(po_pm, "pl", {"L-1", "L+1", "Lon"});
    e.law.params["q"] = params.q;
    const auto one = Probability(Rational(1));
    const auto q = library_detail::prob(params.q);
    enum { kOff = 0, kArmed = 1, kOn = 2 };
    auto with_l = [&](StateId u, int l) { return *e.product(static_cast<std::size_t>(e.base_of[u]), static_cast<std::size_t>(l)); };
    for (StateId u = 0; u < e.law.size(); ++u) {
        if (e.ext_of[u] < 0) continue;
        const auto& m = e.law.states[u].components[1];
        for (StateId v = 0; v < e.law.size(); ++v) {
            if (e.ext_of[v] < 0) continue;
            const int lv = e.ext_of[v];
            if (m == "M-1" && lv == kOff) e.law.add_rule(u, v, u, with_l(v, kArmed), one);
            if (m == "M+1" && lv == kArmed) e.law.add_rule(u, v, u, with_l(v, kOn), one);
            if (lv == kOn) e.law.add_rule(u, v, u, with_l(v, kOff), q);
        }
    }
    for (StateId s = 0; s < e.law.size(); ++s)
        if (e.ext_of[s] >= 0) e.law.set_answer(s, e.ext_of[s] == kOn ? "yes" : "no");
    e.law.canonicalize();
    return e;
}

/// Output extension Y over (P_o[1] + P_o[2]).
inline Extension build_pb_extension(const Protocol& pair, const LibraryParams&) {
    auto e = make_extension_skeleton(pair, "pb", {"Y1", "Y2"});
    const auto one = Probability(Rational(1));
    for (StateId u = 0; u < e.law.size(); ++u) {
        if (e.ext_of[u] < 0) continue;
        const auto a1 = parse_oscillator_atom(e.law.states[u].components[0]);
        const auto a2 = parse_oscillator_atom(e.law.states[u].components[1]);
        int target = -1;
        if (!a1->aggressive && a2->aggressive) target = 0;
        if (a1->aggressive && !a2->aggressive) target = 1;
        if (target < 0) continue;
        for (StateId v = 0; v < e.law.size(); ++v) {
            if (e.ext_of[v] < 0) continue;
            e.law.add_rule(u, v, u, *e.product(static_cast<std::size_t>(e.base_of[v]), static_cast<std::size_t>(target)), one);
        }
    }
    for (StateId s = 0; s < e.law.size(); ++s)
        if (e.ext_of[s] >= 0) e.law.set_answer(s, e.ext_of[s] == 0 ? "1" : "2");
    e.law.canonicalize();
    return e;
}

inline Protocol build_bitbroadcast(const LibraryParams& params) {
    const auto po = build_po(params);
    const auto first = tagged(po, "1");
    const auto second = tagged(po, "2");
    auto pair = compose_independent(first, lift(second, first));
    auto p = compose_independent(pair, build_pb_extension(pair, params));
    p.name = "bitbroadcast";
    return p;
}

inline Protocol build_detect(const LibraryParams& params) {
    const auto po = build_po(params);
    auto po_pm = compose(po, build_pm_extension(po, params));
    auto p = compose_independent(po_pm, build_pl_extension(po_pm, params));
    p.name = "detect";
    return p;
}

inline Protocol build(std::string_view name, const LibraryParams& params = default_params()) {
    for (double v : {params.p, params.r, params.q, params.epsilon})
        if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("library parameters p, r, q, epsilon must lie in (0,1)");
    if (!(params.s > 0.0 && params.s <= 1.0)) throw std::invalid_argument("s must lie in (0,1]");
    if (2 * params.p > 1.0) throw std::invalid_argument("attack probability 2p exceeds 1");
    if (name == "rps") return build_rps(params);
    if (name == "po") return build_po(params);
    if (name == "po_prime") return build_po_prime(params);
    if (name == "bitbroadcast") return build_bitbroadcast(params);
    if (name == "detect") return build_detect(params);
    throw std::invalid_argument("unknown protocol '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// canonical initial configurations

namespace library_detail {

/// Component values per layer, in state order, over non-source states.
inline std::vector<std::vector<std::string>> layer_values(const Protocol& p) {
    std::vector<std::vector<std::string>> layers;
    for (const auto& s : p.states) {
        if (s.source) continue;
        if (layers.empty()) layers.resize(s.components.size());
        if (s.components.size() != layers.size()) throw std::invalid_argument("non-source states of mixed arity");
        for (std::size_t l = 0; l < layers.size(); ++l)
            if (std::find(layers[l].begin(), layers[l].end(), s.components[l]) == layers[l].end())
                layers[l].push_back(s.components[l]);
    }
    return layers;
}

inline bool is_oscillator_layer(const std::vector<std::string>& values) {
    return !values.empty() && parse_oscillator_atom(values.front()).has_value();
}

/// Value a layer takes in a "corner" configuration.
inline std::string resting_value(const std::vector<std::string>& values) {
    if (is_oscillator_layer(values)) {
        for (const auto& v : values) {
            auto a = parse_oscillator_atom(v);
            if (a->species == 1 && (a->aggressive || !a->flavored)) return v;
        }
    }
    for (const char* preferred : {"M0", "L-1"})
        if (std::find(values.begin(), values.end(), preferred) != values.end()) return preferred;
    return values.front();
}

/// Values a layer is spread over in a "center" configuration.
inline std::vector<std::string> center_values(const std::vector<std::string>& values) {
    if (is_oscillator_layer(values)) {
        std::vector<std::string> out;
        for (const auto& v : values) {
            auto a = parse_oscillator_atom(v);
            if (!a->aggressive) out.push_back(v);
        }
        return out;
    }
    if (std::find(values.begin(), values.end(), "L-1") != values.end()) return {"L-1"};
    return values;
}

inline void split_evenly(const Protocol& p, const std::vector<std::vector<std::string>>& choices, std::size_t layer,
                         std::vector<std::string>& prefix, std::int64_t count, Configuration& out) {
    if (layer == choices.size()) {
        out[p.at(product_label(prefix))] += count;
        return;
    }
    const auto parts = static_cast<std::int64_t>(choices[layer].size());
    for (std::int64_t i = 0; i < parts; ++i) {
        const std::int64_t share = count / parts + (i < count % parts ? 1 : 0);
        if (share == 0) continue;
        prefix.push_back(choices[layer][static_cast<std::size_t>(i)]);
        split_evenly(p, choices, layer + 1, prefix, share, out);
        prefix.pop_back();
    }
}

}  // namespace library_detail

/// Named initial configurations: "corner" (all agents in the resting state
/// with species A1 aggressive), "center" (species split evenly, lazy flavor,
/// other layers spread evenly, lights off) and "uniform-random" (each agent
/// uniform over the non-source states).
inline Configuration canonical_init(const Protocol& p, std::string_view init, std::int64_t n,
                                    const std::map<std::string, std::int64_t>& sources = {}, std::uint64_t seed = 0) {
    Configuration c(std::vector<std::int64_t>(p.size(), 0));
    std::int64_t placed = 0;
    for (const auto& [label, count] : sources) {
        const auto s = p.at(label);
        if (!p.is_source(s)) throw std::invalid_argument("'" + label + "' is not a source state");
        if (count < 0) throw std::invalid_argument("negative source count");
        c[s] += count;
        placed += count;
    }
    if (placed > n) throw std::invalid_argument("more sources than agents");
    const std::int64_t rest = n - placed;
    const auto layers = library_detail::layer_values(p);
    if (init == "corner") {
        std::vector<std::string> comps;
        for (const auto& values : layers) comps.push_back(library_detail::resting_value(values));
        c[p.at(product_label(comps))] += rest;
    } else if (init == "center") {
        std::vector<std::vector<std::string>> choices;
        for (const auto& values : layers) choices.push_back(library_detail::center_values(values));
        std::vector<std::string> prefix;
        library_detail::split_evenly(p, choices, 0, prefix, rest, c);
    } else if (init == "uniform-random") {
        std::vector<StateId> pool;
        for (StateId s = 0; s < p.size(); ++s)
            if (!p.is_source(s)) pool.push_back(s);
        Rng rng(seed, 0x1417);
        for (std::int64_t a = 0; a < rest; ++a) ++c[pool[rng.below(pool.size())]];
    } else {
        throw std::invalid_argument("unknown initial configuration '" + std::string(init) + "'");
    }
    return c;
}

/// Convenience overload placing `source_count` agents in the first source state.
inline Configuration canonical_init(const Protocol& p, std::string_view init, std::int64_t n, std::int64_t source_count,
                                    std::uint64_t seed = 0) {
    std::map<std::string, std::int64_t> sources;
    if (source_count > 0) {
        const auto src = p.source_states();
        if (src.empty()) throw std::invalid_argument("protocol '" + p.name + "' has no source state");
        sources[p.label(src.front())] = source_count;
    }
    return canonical_init(p, init, n, sources, seed);
}

}  // namespace popproto
