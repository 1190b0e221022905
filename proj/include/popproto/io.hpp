#pragma once

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analytics.hpp"
#include "configuration.hpp"
#include "engine.hpp"
#include "protocol.hpp"
#include "scenario.hpp"

namespace popproto {

/// Shortest round-trip text for a double; "nan", "inf", "-inf" otherwise.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// Column layout for sampled metrics of one protocol:
/// round,step,<state counts>,<oscillator metrics per tag>,<layer fractions>,frac_<answer>...
class MetricsTable {
public:
    explicit MetricsTable(const Protocol& p, double attack = -1) : protocol_(&p) {
        attack_ = attack >= 0 ? attack : (p.params.count("p") ? p.params.at("p") : 0.0);
        tags_ = oscillator_tags(p);
        for (const auto& t : tags_) projectors_.emplace_back(p, t);
        for (const auto& l : library_detail::layer_values(p)) {
            auto has = [&](const char* x) { return std::find(l.begin(), l.end(), x) != l.end(); };
            if (has("M-1")) layers_.push_back({"m", {"M-1", "M0", "M+1"}, {"minus", "zero", "plus"}, {}});
            if (has("L-1")) layers_.push_back({"l", {"L-1", "L+1", "Lon"}, {"minus", "plus", "on"}, {}});
            if (has("Y1")) layers_.push_back({"y", {"Y1", "Y2"}, {"1", "2"}, {}});
        }
        for (auto& layer : layers_) {
            layer.index.assign(p.size(), -1);
            for (StateId s = 0; s < p.size(); ++s)
                for (const auto& c : p.states[s].components) {
                    auto it = std::find(layer.values.begin(), layer.values.end(), c);
                    if (it != layer.values.end()) layer.index[s] = static_cast<int>(it - layer.values.begin());
                }
        }
        answers_ = p.answers;
        for (StateId s = 0; s < p.size(); ++s)
            if (p.answer_of[s] == kNoAnswer) {
                answers_.push_back(kNoneAnswer);
                break;
            }
        for (StateId s = 0; s < p.size(); ++s)
            answer_slot_.push_back(static_cast<std::size_t>(
                std::find(answers_.begin(), answers_.end(), p.answer(s)) - answers_.begin()));
    }

    std::vector<std::string> header() const {
        std::vector<std::string> h{"round", "step"};
        for (const auto& s : protocol_->states) h.push_back(s.label);
        for (const auto& t : tags_) {
            const std::string suf = t.empty() ? "" : "_o" + t;
            for (const char* m : {"a1", "a2", "a3", "a1pp", "a2pp", "a3pp", "x", "phi", "delta", "kappa", "eta", "psi"})
                h.push_back(m + suf);
        }
        for (const auto& layer : layers_)
            for (const auto& name : layer.column_names) h.push_back(layer.prefix + "_" + name);
        for (const auto& a : answers_) h.push_back("frac_" + a);
        return h;
    }

    std::vector<double> values(const Configuration& c, std::int64_t step) const {
        const double n = static_cast<double>(c.n());
        std::vector<double> row{n > 0 ? static_cast<double>(step) / n : 0.0, static_cast<double>(step)};
        for (auto x : c.counts) row.push_back(static_cast<double>(x));
        for (const auto& projector : projectors_) {
            const auto v = projector.view(c);
            const auto pot = potentials(v, attack_);
            for (double x : {v.a[0], v.a[1], v.a[2], v.pp[0], v.pp[1], v.pp[2], v.x, pot.phi, pot.delta, pot.kappa,
                             pot.eta, pot.psi})
                row.push_back(x);
        }
        for (const auto& layer : layers_) {
            std::vector<double> f(layer.values.size(), 0.0);
            for (StateId s = 0; s < c.size(); ++s)
                if (layer.index[s] >= 0) f[static_cast<std::size_t>(layer.index[s])] += static_cast<double>(c[s]) / n;
            row.insert(row.end(), f.begin(), f.end());
        }
        std::vector<double> fr(answers_.size(), 0.0);
        for (StateId s = 0; s < c.size(); ++s) fr[answer_slot_[s]] += static_cast<double>(c[s]) / n;
        row.insert(row.end(), fr.begin(), fr.end());
        return row;
    }

    void write_header(std::ostream& os) const {
        const auto h = header();
        const auto k = protocol_->size();
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (i) os << ',';
            os << (i >= 2 && i < 2 + k ? csv_quote(h[i]) : h[i]);
        }
        os << '\n';
    }

    void write_row(std::ostream& os, const Configuration& c, std::int64_t step) const {
        const auto v = values(c, step);
        const auto k = protocol_->size();
        os << format_double(v[0]) << ',' << step;
        for (std::size_t i = 0; i < k; ++i) os << ',' << c[i];
        for (std::size_t i = 2 + k; i < v.size(); ++i) os << ',' << format_double(v[i]);
        os << '\n';
    }

private:
    struct Layer {
        std::string prefix;
        std::vector<std::string> values;
        std::vector<std::string> column_names;
        std::vector<int> index;
    };
    const Protocol* protocol_;
    double attack_ = 0;
    std::vector<std::string> tags_;
    std::vector<OscillatorProjector> projectors_;
    std::vector<Layer> layers_;
    std::vector<std::string> answers_;
    std::vector<std::size_t> answer_slot_;
};

inline std::string rule_text(const Protocol& p, const Rule& r) {
    return p.label(r.initiator_in) + " : " + p.label(r.receiver_in) + " -> " + p.label(r.initiator_out) + " : " +
           p.label(r.receiver_out) + " @ " + r.prob.str();
}

inline nlohmann::json to_json(const RunRecord& rec, const Protocol& p) {
    nlohmann::json j;
    j["seed"] = rec.seed;
    j["stream"] = rec.stream;
    j["protocol"] = rec.protocol;
    j["n"] = rec.n;
    j["steps"] = rec.steps;
    j["rounds"] = rec.n ? static_cast<double>(rec.steps) / static_cast<double>(rec.n) : 0.0;
    j["stopped"] = rec.stopped;
    j["bound_reached"] = rec.bound_reached;
    j["fired"] = rec.fired;
    auto& ev = j["events"] = nlohmann::json::array();
    for (const auto& e : rec.events)
        ev.push_back({{"action", action_name(e.action)},
                      {"at_step", e.at_step},
                      {"state", p.label(e.state)},
                      {"other", p.label(e.other)},
                      {"count", e.count},
                      {"text", format_event(p, e)}});
    auto& rc = j["rule_counters"] = nlohmann::json::array();
    for (std::size_t r = 0; r < rec.rule_counts.size(); ++r)
        if (rec.rule_counts[r]) rc.push_back({{"rule", r}, {"text", rule_text(p, p.rules[r])}, {"count", rec.rule_counts[r]}});
    return j;
}

}  // namespace popproto
