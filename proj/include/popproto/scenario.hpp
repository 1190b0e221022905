#pragma once

#include <charconv>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "engine.hpp"
#include "library.hpp"
#include "protocol.hpp"

namespace popproto {

namespace scenario_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Splits at `sep` outside parentheses and brackets.
inline std::vector<std::string> split_top(std::string_view s, char sep) {
    std::vector<std::string> out;
    int depth = 0;
    std::string cur;
    for (char c : s) {
        if (c == '(' || c == '[') ++depth;
        if (c == ')' || c == ']') --depth;
        if (c == sep && depth == 0) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::int64_t to_int(const std::string& s, const std::string& what) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw std::invalid_argument("bad " + what + " '" + s + "'");
    return v;
}

}  // namespace scenario_detail

/// Resolves a state name. Besides full labels, a single component such as
/// "A1+" names the product state whose other layers hold their resting
/// values (M0, L-1, Y1).
inline StateId resolve_state(const Protocol& p, const std::string& name) {
    if (auto id = p.find(name)) return *id;
    const auto layers = library_detail::layer_values(p);
    const auto comps = split_components(name);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (std::find(layers[l].begin(), layers[l].end(), comps.front()) == layers[l].end()) continue;
        if (comps.size() != 1) break;
        std::vector<std::string> full;
        for (std::size_t m = 0; m < layers.size(); ++m)
            full.push_back(m == l ? comps.front() : library_detail::resting_value(layers[m]));
        if (auto id = p.find(product_label(full))) return *id;
    }
    throw std::invalid_argument("protocol '" + p.name + "' has no state '" + name + "'");
}

/// Parses one event "action:ARGS@roundN" or "...@stepN".
///   remove_source:X->A1+      remove_source:X,A1+
///   insert_source:X,A1++,1
///   set_count:STATE,VALUE,FILLER
inline ScenarioEvent parse_event(const Protocol& p, std::string_view text, std::int64_t n) {
    using namespace scenario_detail;
    const auto full = trim(text);
    const auto colon = full.find(':');
    const auto at = full.rfind('@');
    if (colon == std::string::npos || at == std::string::npos || at < colon)
        throw std::invalid_argument("event '" + full + "' is not of the form action:ARGS@roundN");
    const auto action = trim(full.substr(0, colon));
    auto args_text = full.substr(colon + 1, at - colon - 1);
    const auto when = trim(full.substr(at + 1));

    ScenarioEvent e;
    if (when.rfind("round", 0) == 0)
        e.at_step = to_int(when.substr(5), "round") * n;
    else if (when.rfind("step", 0) == 0)
        e.at_step = to_int(when.substr(4), "step");
    else
        throw std::invalid_argument("event time '" + when + "' must be roundN or stepN");
    if (e.at_step < 0) throw std::invalid_argument("event time must be nonnegative");

    if (auto arrow = args_text.find("->"); arrow != std::string::npos) args_text.replace(arrow, 2, ",");
    const auto args = split_top(args_text, ',');
    auto need = [&](std::size_t k) {
        if (args.size() != k)
            throw std::invalid_argument("event '" + action + "' takes " + std::to_string(k) + " arguments, got " +
                                        std::to_string(args.size()));
    };
    if (action == "remove_source") {
        need(2);
        e.action = ScenarioEvent::Action::RemoveSource;
        e.state = resolve_state(p, args[0]);
        e.other = resolve_state(p, args[1]);
        if (!p.is_source(e.state)) throw std::invalid_argument("'" + args[0] + "' is not a source state");
    } else if (action == "insert_source") {
        need(3);
        e.action = ScenarioEvent::Action::InsertSource;
        e.state = resolve_state(p, args[0]);
        e.other = resolve_state(p, args[1]);
        e.count = to_int(args[2], "count");
        if (!p.is_source(e.state)) throw std::invalid_argument("'" + args[0] + "' is not a source state");
    } else if (action == "set_count") {
        need(3);
        e.action = ScenarioEvent::Action::SetCount;
        e.state = resolve_state(p, args[0]);
        e.count = to_int(args[1], "value");
        e.other = resolve_state(p, args[2]);
    } else {
        throw std::invalid_argument("unknown event action '" + action + "'");
    }
    return e;
}

/// Parses a ';'-separated event list and sorts it by step (stable).
inline std::vector<ScenarioEvent> parse_events(const Protocol& p, std::string_view text, std::int64_t n) {
    std::vector<ScenarioEvent> out;
    for (const auto& part : scenario_detail::split_top(text, ';'))
        if (!part.empty()) out.push_back(parse_event(p, part, n));
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.at_step < b.at_step; });
    return out;
}

inline std::string format_event(const Protocol& p, const ScenarioEvent& e) {
    std::string s = action_name(e.action);
    s += ":" + p.label(e.state);
    switch (e.action) {
        case ScenarioEvent::Action::RemoveSource: s += "->" + p.label(e.other); break;
        case ScenarioEvent::Action::InsertSource: s += "," + p.label(e.other) + "," + std::to_string(e.count); break;
        case ScenarioEvent::Action::SetCount: s += "," + std::to_string(e.count) + "," + p.label(e.other); break;
    }
    return s + "@step" + std::to_string(e.at_step);
}

/// Parses "X=1" or "X[1]=1,X[2]=0".
inline std::map<std::string, std::int64_t> parse_sources(std::string_view text) {
    std::map<std::string, std::int64_t> out;
    for (const auto& part : scenario_detail::split_top(text, ',')) {
        if (part.empty()) continue;
        const auto eq = part.rfind('=');
        if (eq == std::string::npos) throw std::invalid_argument("source count '" + part + "' must be STATE=COUNT");
        out[scenario_detail::trim(part.substr(0, eq))] = scenario_detail::to_int(scenario_detail::trim(part.substr(eq + 1)), "source count");
    }
    return out;
}

}  // namespace popproto
