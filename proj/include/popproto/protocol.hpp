#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "probability.hpp"

namespace popproto {

using StateId = std::uint32_t;

inline constexpr int kIdentityRule = -1;
inline constexpr int kNoAnswer = -1;
inline const std::string kNoneAnswer = "none";

struct State {
    std::string label;
    /// Layer components of a product state, e.g. {"A1+", "M0", "L-1"}.
    /// Atomic states have a single component equal to the label.
    std::vector<std::string> components;
    bool source = false;
};

struct Rule {
    StateId initiator_in = 0;
    StateId receiver_in = 0;
    StateId initiator_out = 0;
    StateId receiver_out = 0;
    Probability prob;

    auto key() const { return std::tie(initiator_in, receiver_in, initiator_out, receiver_out); }
    bool is_identity() const { return initiator_in == initiator_out && receiver_in == receiver_out; }
};

inline std::string product_label(const std::vector<std::string>& components) {
    if (components.size() == 1) return components.front();
    std::string s = "(";
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i) s += ',';
        s += components[i];
    }
    return s + ")";
}

/// Splits "(A1+,M0,L-1)" into its components; atomic labels give one.
inline std::vector<std::string> split_components(const std::string& label) {
    if (label.size() < 2 || label.front() != '(' || label.back() != ')') return {label};
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (std::size_t i = 1; i + 1 < label.size(); ++i) {
        const char c = label[i];
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

class Protocol {
public:
    std::string name;
    std::vector<State> states;
    std::vector<Rule> rules;
    /// Named answers; answer_of[state] indexes into it or is kNoAnswer.
    std::vector<std::string> answers;
    std::vector<int> answer_of;
    std::map<std::string, double> params;
    /// Declared property checked by validate().
    bool initiator_preserving = false;

    std::size_t size() const { return states.size(); }

    StateId add_state(std::string label, bool source = false, std::vector<std::string> components = {}) {
        if (index_.count(label)) throw std::invalid_argument("duplicate state label '" + label + "'");
        if (components.empty()) components = split_components(label);
        const auto id = static_cast<StateId>(states.size());
        index_.emplace(label, id);
        states.push_back(State{std::move(label), std::move(components), source});
        answer_of.push_back(kNoAnswer);
        return id;
    }

    std::optional<StateId> find(const std::string& label) const {
        if (index_.size() != states.size()) reindex();
        auto it = index_.find(label);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    StateId at(const std::string& label) const {
        if (auto id = find(label)) return *id;
        throw std::out_of_range("protocol '" + name + "' has no state '" + label + "'");
    }

    const std::string& label(StateId s) const { return states.at(s).label; }
    bool is_source(StateId s) const { return states.at(s).source; }
    std::vector<StateId> source_states() const {
        std::vector<StateId> out;
        for (StateId s = 0; s < states.size(); ++s)
            if (states[s].source) out.push_back(s);
        return out;
    }

    void add_rule(StateId i1, StateId i2, StateId o1, StateId o2, Probability prob) {
        rules.push_back(Rule{i1, i2, o1, o2, prob});
    }
    /// Initiator-preserving shorthand for `init : recv -> out`.
    void add_rule(const std::string& init, const std::string& recv, const std::string& out, Probability prob) {
        const auto i = at(init);
        add_rule(i, at(recv), i, at(out), prob);
    }

    int answer_index(const std::string& answer) {
        auto it = std::find(answers.begin(), answers.end(), answer);
        if (it != answers.end()) return static_cast<int>(it - answers.begin());
        answers.push_back(answer);
        return static_cast<int>(answers.size() - 1);
    }
    void set_answer(StateId s, const std::string& answer) { answer_of.at(s) = answer_index(answer); }
    const std::string& answer(StateId s) const {
        const int a = answer_of.at(s);
        return a == kNoAnswer ? kNoneAnswer : answers.at(static_cast<std::size_t>(a));
    }

    /// Drops identity rules, merges rules with equal inputs and outputs and
    /// orders them by (initiator_in, receiver_in, initiator_out, receiver_out).
    void canonicalize() {
        std::map<std::tuple<StateId, StateId, StateId, StateId>, Probability> merged;
        for (const auto& r : rules) {
            if (r.is_identity() || r.prob.is_zero()) continue;
            auto [it, fresh] = merged.try_emplace({r.initiator_in, r.receiver_in, r.initiator_out, r.receiver_out},
                                                  r.prob);
            if (!fresh) it->second += r.prob;
        }
        rules.clear();
        for (const auto& [k, p] : merged)
            rules.push_back(Rule{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), p});
    }

private:
    void reindex() const {
        index_.clear();
        for (StateId s = 0; s < states.size(); ++s) index_.emplace(states[s].label, s);
    }
    mutable std::unordered_map<std::string, StateId> index_;
};

// ---------------------------------------------------------------------------
// validation

struct Violation {
    enum class Kind { BadProbability, Normalization, SourceModified, BadStateId, DuplicateLabel, InitiatorChanged, OutputMap };
    Kind kind;
    std::string message;
    std::optional<std::size_t> rule;
    std::optional<std::pair<StateId, StateId>> pair;
};

struct ValidationReport {
    std::vector<Violation> violations;
    /// Whether every rule keeps the initiator's state (computed, not declared).
    bool initiator_preserving = true;

    bool ok() const { return violations.empty(); }
    std::string summary() const {
        std::string s;
        for (const auto& v : violations) s += v.message + "\n";
        return s;
    }
};

inline ValidationReport validate(const Protocol& protocol) {
    ValidationReport report;
    const auto k = protocol.size();
    auto add = [&](Violation::Kind kind, std::string msg, std::optional<std::size_t> rule = {},
                   std::optional<std::pair<StateId, StateId>> pair = {}) {
        report.violations.push_back(Violation{kind, std::move(msg), rule, pair});
    };

    std::set<std::string> labels;
    for (const auto& s : protocol.states)
        if (s.label.empty() || !labels.insert(s.label).second)
            add(Violation::Kind::DuplicateLabel, "empty or duplicate state label '" + s.label + "'");
    if (protocol.answer_of.size() != k) add(Violation::Kind::OutputMap, "output map does not cover every state");

    std::map<std::pair<StateId, StateId>, Probability> pair_sum;
    for (std::size_t j = 0; j < protocol.rules.size(); ++j) {
        const auto& r = protocol.rules[j];
        if (r.initiator_in >= k || r.receiver_in >= k || r.initiator_out >= k || r.receiver_out >= k) {
            add(Violation::Kind::BadStateId, "rule " + std::to_string(j) + " references an unknown state", j);
            continue;
        }
        const auto& L = protocol.states;
        const std::string where = "(" + L[r.initiator_in].label + "," + L[r.receiver_in].label + ")";
        if (r.prob.value() <= 0.0 || exceeds(r.prob, Probability(Rational(1))))
            add(Violation::Kind::BadProbability,
                "probability " + r.prob.str() + " outside (0,1] on " + where, j, std::pair{r.initiator_in, r.receiver_in});
        if (r.initiator_out != r.initiator_in) report.initiator_preserving = false;
        const bool touches_source = (L[r.initiator_in].source && r.initiator_out != r.initiator_in) ||
                                    (L[r.receiver_in].source && r.receiver_out != r.receiver_in) ||
                                    (!L[r.initiator_in].source && L[r.initiator_out].source) ||
                                    (!L[r.receiver_in].source && L[r.receiver_out].source);
        if (touches_source)
            add(Violation::Kind::SourceModified, "rule " + std::to_string(j) + " modifies a source state on " + where, j,
                std::pair{r.initiator_in, r.receiver_in});
        auto [it, fresh] = pair_sum.try_emplace({r.initiator_in, r.receiver_in}, r.prob);
        if (!fresh) it->second += r.prob;
    }
    for (const auto& [pair, sum] : pair_sum) {
        if (exceeds(sum, Probability(Rational(1)))) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%g", sum.value());
            add(Violation::Kind::Normalization,
                "normalization exceeded on (" + protocol.label(pair.first) + "," + protocol.label(pair.second) +
                    "): " + buf,
                {}, pair);
        }
    }
    if (protocol.initiator_preserving && !report.initiator_preserving)
        add(Violation::Kind::InitiatorChanged, "protocol is declared initiator-preserving but a rule changes its initiator");
    return report;
}

// ---------------------------------------------------------------------------
// rule table

struct Outcome {
    StateId initiator_out;
    StateId receiver_out;
    Probability prob;
    int rule;  ///< index into Protocol::rules, kIdentityRule for the remainder
};

/// Dense ordered-pair transition law. Every row is a normalized categorical
/// distribution whose last entry (when positive) is the identity remainder.
class RuleTable {
public:
    RuleTable() = default;
    explicit RuleTable(const Protocol& protocol) : k_(protocol.size()), rows_(k_ * k_) {
        for (std::size_t j = 0; j < protocol.rules.size(); ++j) {
            const auto& r = protocol.rules[j];
            if (r.is_identity()) continue;
            rows_[r.initiator_in * k_ + r.receiver_in].push_back(
                Outcome{r.initiator_out, r.receiver_out, r.prob, static_cast<int>(j)});
        }
        for (StateId a = 0; a < k_; ++a)
            for (StateId b = 0; b < k_; ++b) {
                auto& row = rows_[a * k_ + b];
                Probability total;
                for (const auto& o : row) total += o.prob;
                const auto rest = total.complement();
                if (!rest.is_zero() && rest.value() > 0.0) row.push_back(Outcome{a, b, rest, kIdentityRule});
            }
    }

    std::size_t size() const { return k_; }
    const std::vector<Outcome>& row(StateId initiator, StateId receiver) const {
        return rows_.at(initiator * k_ + receiver);
    }

    /// Probability of the identity outcome on a pair.
    Probability identity(StateId initiator, StateId receiver) const {
        const auto& r = row(initiator, receiver);
        if (!r.empty() && r.back().rule == kIdentityRule) return r.back().prob;
        return Probability(Rational(0));
    }

    /// Law of a pair aggregated by output pair (identity included under its
    /// own output pair).
    std::map<std::pair<StateId, StateId>, Probability> law(StateId initiator, StateId receiver) const {
        std::map<std::pair<StateId, StateId>, Probability> out;
        for (const auto& o : row(initiator, receiver)) {
            auto [it, fresh] = out.try_emplace({o.initiator_out, o.receiver_out}, o.prob);
            if (!fresh) it->second += o.prob;
        }
        return out;
    }

private:
    std::size_t k_ = 0;
    std::vector<std::vector<Outcome>> rows_;
};

/// Validates and builds the dense transition law. Throws on violations.
inline RuleTable rule_table(const Protocol& protocol) {
    if (auto report = validate(protocol); !report.ok())
        throw std::invalid_argument("protocol '" + protocol.name + "' is invalid:\n" + report.summary());
    return RuleTable(protocol);
}

/// Entry-wise comparison of two transition laws over identically labelled
/// state sets (exact for rationals, 1e-12 otherwise).
inline bool same_rule_table(const Protocol& a, const Protocol& b, std::string* why = nullptr) {
    auto fail = [&](std::string msg) {
        if (why) *why = std::move(msg);
        return false;
    };
    if (a.size() != b.size()) return fail("state counts differ");
    std::vector<StateId> map(a.size());
    for (StateId s = 0; s < a.size(); ++s) {
        auto t = b.find(a.label(s));
        if (!t) return fail("state '" + a.label(s) + "' missing");
        if (a.is_source(s) != b.is_source(*t)) return fail("source flag differs on '" + a.label(s) + "'");
        if (a.answer(s) != b.answer(*t)) return fail("answer differs on '" + a.label(s) + "'");
        map[s] = *t;
    }
    const RuleTable ta(a), tb(b);
    for (StateId x = 0; x < a.size(); ++x)
        for (StateId y = 0; y < a.size(); ++y) {
            auto la = ta.law(x, y);
            auto lb = tb.law(map[x], map[y]);
            if (la.size() != lb.size())
                return fail("outcome sets differ on (" + a.label(x) + "," + a.label(y) + ")");
            for (const auto& [out, p] : la) {
                auto it = lb.find({map[out.first], map[out.second]});
                if (it == lb.end() || !same_probability(p, it->second))
                    return fail("probabilities differ on (" + a.label(x) + "," + a.label(y) + ")");
            }
        }
    return true;
}

// ---------------------------------------------------------------------------
// composition algebra

/// A protocol extension over a base state set B with extra components C.
///
/// The extension is stored as its own law on the product state set
/// (B_nonsource x C) u sources(B) u ext_sources, i.e. as the extension applied
/// to the identity protocol on B. Its rules may only change C components.
struct Extension {
    std::string name;
    std::vector<std::string> base_labels;
    std::vector<std::string> ext_labels;
    std::vector<std::string> ext_source_labels;
    /// For each product state: base state index (or -1 for an extension
    /// source) and C index (or -1 for any source).
    std::vector<int> base_of;
    std::vector<int> ext_of;
    /// base * |C| + c -> product state, -1 for base sources
    std::vector<int> product_index;
    Protocol law;

    std::optional<StateId> product(std::size_t base, std::size_t ext) const {
        const auto i = base * ext_labels.size() + ext;
        if (ext >= ext_labels.size() || i >= product_index.size() || product_index[i] < 0) return std::nullopt;
        return static_cast<StateId>(product_index[i]);
    }
};

/// Product state set for `base` extended by `ext_labels`: non-source base
/// states become tuples, sources stay atomic, extension sources come last.
inline Extension make_extension_skeleton(const Protocol& base, std::string name, std::vector<std::string> ext_labels,
                                         std::vector<std::string> ext_source_labels = {}) {
    Extension e;
    e.name = std::move(name);
    e.ext_labels = std::move(ext_labels);
    e.ext_source_labels = std::move(ext_source_labels);
    e.law.name = e.name;
    e.law.params = base.params;
    e.law.initiator_preserving = true;
    e.product_index.assign(base.size() * e.ext_labels.size(), -1);
    for (StateId b = 0; b < base.size(); ++b) {
        const auto& st = base.states[b];
        e.base_labels.push_back(st.label);
        if (st.source) {
            e.law.add_state(st.label, true, st.components);
            e.base_of.push_back(static_cast<int>(b));
            e.ext_of.push_back(-1);
            continue;
        }
        for (std::size_t c = 0; c < e.ext_labels.size(); ++c) {
            auto comps = st.components;
            comps.push_back(e.ext_labels[c]);
            e.product_index[b * e.ext_labels.size() + c] = static_cast<int>(e.law.add_state(product_label(comps), false, comps));
            e.base_of.push_back(static_cast<int>(b));
            e.ext_of.push_back(static_cast<int>(c));
        }
    }
    for (const auto& src : e.ext_source_labels) {
        e.law.add_state(src, true);
        e.base_of.push_back(-1);
        e.ext_of.push_back(-1);
    }
    return e;
}

/// Lifts a stand-alone protocol into an extension over `base` that ignores
/// the base component (used for independent stacking of oscillators).
inline Extension lift(const Protocol& layer, const Protocol& base) {
    std::vector<std::string> labels, sources;
    std::vector<int> layer_index;  // C index -> layer state
    for (StateId s = 0; s < layer.size(); ++s) {
        if (layer.is_source(s)) {
            sources.push_back(layer.label(s));
        } else {
            labels.push_back(layer.label(s));
            layer_index.push_back(static_cast<int>(s));
        }
    }
    auto e = make_extension_skeleton(base, layer.name, labels, sources);
    e.law.params.insert(layer.params.begin(), layer.params.end());
    const RuleTable table(layer);
    // layer state seen by the lifted layer, -1 when the product state has none
    std::vector<int> seen(e.law.size(), -1);
    for (StateId u = 0; u < e.law.size(); ++u) {
        if (e.ext_of[u] >= 0)
            seen[u] = layer_index[static_cast<std::size_t>(e.ext_of[u])];
        else if (e.base_of[u] < 0)
            seen[u] = static_cast<int>(layer.at(e.law.label(u)));
    }
    for (StateId u = 0; u < e.law.size(); ++u)
        for (StateId v = 0; v < e.law.size(); ++v) {
            if (seen[u] < 0 || seen[v] < 0) continue;
            for (const auto& o : table.row(static_cast<StateId>(seen[u]), static_cast<StateId>(seen[v]))) {
                if (o.rule == kIdentityRule) continue;
                auto map_out = [&](StateId w, StateId layer_out) -> StateId {
                    if (e.ext_of[w] < 0) return w;
                    const auto c = std::find(layer_index.begin(), layer_index.end(), static_cast<int>(layer_out)) -
                                   layer_index.begin();
                    return *e.product(static_cast<std::size_t>(e.base_of[w]), static_cast<std::size_t>(c));
                };
                e.law.add_rule(u, v, map_out(u, o.initiator_out), map_out(v, o.receiver_out), o.prob);
            }
        }
    e.law.canonicalize();
    return e;
}

inline Protocol identity(const Protocol& base) {
    Protocol p;
    p.name = "1";
    p.params = base.params;
    p.initiator_preserving = true;
    for (const auto& s : base.states) p.add_state(s.label, s.source, s.components);
    p.answers = base.answers;
    p.answer_of = base.answer_of;
    return p;
}

namespace detail {

inline void check_matches(const Protocol& base, const Extension& ext) {
    bool ok = ext.base_labels.size() == base.size();
    for (StateId b = 0; ok && b < base.size(); ++b) ok = ext.base_labels[b] == base.label(b);
    if (!ok) throw std::invalid_argument("extension '" + ext.name + "' does not match the state set of '" + base.name + "'");
}

/// Maps a base outcome and an extension outcome for one agent onto the
/// resulting product state.
inline StateId combine(const Extension& ext, StateId pre, StateId base_out, StateId ext_out) {
    if (ext.ext_of[pre] < 0) return pre;  // sources are immutable in both layers
    return *ext.product(base_out, static_cast<std::size_t>(ext.ext_of[ext_out]));
}

template <typename Emit>
void for_each_product_pair(const Protocol& base, const Extension& ext, Emit&& emit) {
    const RuleTable base_table = rule_table(base);
    const RuleTable ext_table = rule_table(ext.law);
    const std::vector<Outcome> none;
    for (StateId u = 0; u < ext.law.size(); ++u)
        for (StateId v = 0; v < ext.law.size(); ++v) {
            const bool base_defined = ext.base_of[u] >= 0 && ext.base_of[v] >= 0;
            const auto& base_row =
                base_defined ? base_table.row(static_cast<StateId>(ext.base_of[u]), static_cast<StateId>(ext.base_of[v]))
                             : none;
            emit(u, v, base_row, ext_table.row(u, v));
        }
}

inline Protocol product_shell(const Protocol& base, const Extension& ext, std::string name) {
    Protocol p = ext.law;
    p.name = std::move(name);
    p.rules.clear();
    p.params = base.params;
    p.params.insert(ext.law.params.begin(), ext.law.params.end());
    p.initiator_preserving = base.initiator_preserving && ext.law.initiator_preserving;
    if (ext.law.answers.empty()) {
        p.answers = base.answers;
        for (StateId s = 0; s < p.size(); ++s)
            p.answer_of[s] = ext.base_of[s] >= 0 ? base.answer_of[static_cast<std::size_t>(ext.base_of[s])] : kNoAnswer;
    }
    return p;
}

}  // namespace detail

/// Layered composition: both layers act on the same scheduled pair in the
/// same step, each reading the pre-transition states of both agents.
inline Protocol compose(const Protocol& base, const Extension& ext) {
    detail::check_matches(base, ext);
    Protocol p = detail::product_shell(base, ext, "(" + base.name + " o " + ext.name + ")");
    detail::for_each_product_pair(base, ext, [&](StateId u, StateId v, const auto& base_row, const auto& ext_row) {
        std::vector<Outcome> base_out = base_row;
        if (base_out.empty())
            base_out.push_back(Outcome{static_cast<StateId>(std::max(ext.base_of[u], 0)),
                                       static_cast<StateId>(std::max(ext.base_of[v], 0)), Probability(Rational(1)),
                                       kIdentityRule});
        for (const auto& bo : base_out)
            for (const auto& eo : ext_row) {
                if (bo.rule == kIdentityRule && eo.rule == kIdentityRule) continue;
                const auto o1 = ext.ext_of[u] < 0 ? u : detail::combine(ext, u, bo.initiator_out, eo.initiator_out);
                const auto o2 = ext.ext_of[v] < 0 ? v : detail::combine(ext, v, bo.receiver_out, eo.receiver_out);
                p.add_rule(u, v, o1, o2, bo.prob * eo.prob);
            }
    });
    p.canonicalize();
    return p;
}

/// Independent composition P_B + P_BC: per step a fair coin picks which layer
/// acts; the other layer performs the identity. Realized by halving each
/// layer's rule probabilities in the product table.
inline Protocol compose_independent(const Protocol& base, const Extension& ext) {
    detail::check_matches(base, ext);
    Protocol p = detail::product_shell(base, ext, "(" + base.name + " + " + ext.name + ")");
    detail::for_each_product_pair(base, ext, [&](StateId u, StateId v, const auto& base_row, const auto& ext_row) {
        for (const auto& bo : base_row) {
            if (bo.rule == kIdentityRule) continue;
            const auto o1 = ext.ext_of[u] < 0 ? u : *ext.product(bo.initiator_out, static_cast<std::size_t>(ext.ext_of[u]));
            const auto o2 = ext.ext_of[v] < 0 ? v : *ext.product(bo.receiver_out, static_cast<std::size_t>(ext.ext_of[v]));
            p.add_rule(u, v, o1, o2, bo.prob.half());
        }
        for (const auto& eo : ext_row) {
            if (eo.rule == kIdentityRule) continue;
            p.add_rule(u, v, eo.initiator_out, eo.receiver_out, eo.prob.half());
        }
    });
    p.canonicalize();
    return p;
}

/// P/2: every rule fires with half its probability.
inline Protocol lazy(const Protocol& protocol) {
    Protocol p = protocol;
    p.name = protocol.name + "/2";
    for (auto& r : p.rules) r.prob = r.prob.half();
    return p;
}

/// Renames every state by appending "[tag]" to each atomic component
/// (A1+ -> A1+[1], X -> X[1]).
inline Protocol tagged(const Protocol& protocol, const std::string& tag) {
    Protocol p;
    p.name = protocol.name + "[" + tag + "]";
    p.params = protocol.params;
    p.initiator_preserving = protocol.initiator_preserving;
    for (const auto& s : protocol.states) {
        auto comps = s.components;
        for (auto& c : comps) c += "[" + tag + "]";
        p.add_state(product_label(comps), s.source, comps);
    }
    p.rules = protocol.rules;
    p.answers = protocol.answers;
    p.answer_of = protocol.answer_of;
    return p;
}

}  // namespace popproto
