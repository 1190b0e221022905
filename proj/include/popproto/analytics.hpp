#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "configuration.hpp"
#include "protocol.hpp"

namespace popproto {

/// Oscillator concentrations projected out of a (possibly product) state set.
struct OscillatorView {
    std::array<double, 3> a{}, plus{}, pp{};
    double x = 0;  ///< source concentration
    double s = 0;  ///< a1 + a2 + a3

    double a_min() const { return std::min({a[0], a[1], a[2]}); }
    double a_max() const { return std::max({a[0], a[1], a[2]}); }
};

namespace analytics_detail {

struct Component {
    int species = 0;  // 0..2
    int flavor = 0;   // 0 none, 1 lazy, 2 aggressive
};

/// For each state: its oscillator component with the given tag, if any.
inline std::vector<std::optional<Component>> oscillator_components(const Protocol& p, const std::string& tag) {
    static const std::regex re(R"(^A([1-9])(\+\+|\+)?(?:\[([^\]]+)\])?$)");
    std::vector<std::optional<Component>> out(p.size());
    for (StateId s = 0; s < p.size(); ++s) {
        if (p.is_source(s)) continue;
        for (const auto& c : p.states[s].components) {
            std::smatch m;
            if (!std::regex_match(c, m, re)) continue;
            if ((m[3].matched ? m[3].str() : std::string()) != tag) continue;
            const int sp = m[1].str()[0] - '1';
            if (sp > 2) continue;
            out[s] = Component{sp, !m[2].matched ? 0 : (m[2].str() == "++" ? 2 : 1)};
            break;
        }
    }
    return out;
}

inline bool is_tagged_source(const Protocol& p, StateId s, const std::string& tag) {
    if (!p.is_source(s)) return false;
    if (tag.empty()) return true;
    const auto& l = p.label(s);
    const auto suffix = "[" + tag + "]";
    return l.size() >= suffix.size() && l.compare(l.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace analytics_detail

/// Projection onto oscillator coordinates with the state classification
/// computed once. With a tag, only components "A<i>...[tag]" and sources
/// "...[tag]" are used.
class OscillatorProjector {
public:
    OscillatorProjector(const Protocol& p, const std::string& tag = "")
        : comps_(analytics_detail::oscillator_components(p, tag)), source_(p.size()) {
        for (StateId s = 0; s < p.size(); ++s) source_[s] = analytics_detail::is_tagged_source(p, s, tag);
    }

    /// Sums per-state weights.
    OscillatorView project(const std::vector<double>& weights) const {
        OscillatorView v;
        for (std::size_t s = 0; s < comps_.size(); ++s) {
            if (source_[s]) v.x += weights[s];
            if (!comps_[s]) continue;
            const auto [sp, flavor] = *comps_[s];
            v.a[sp] += weights[s];
            if (flavor == 1) v.plus[sp] += weights[s];
            if (flavor == 2) v.pp[sp] += weights[s];
        }
        v.s = v.a[0] + v.a[1] + v.a[2];
        return v;
    }

    OscillatorView view(const Configuration& config) const {
        const double n = static_cast<double>(config.n());
        std::vector<double> w(config.size());
        for (std::size_t s = 0; s < w.size(); ++s) w[s] = n > 0 ? static_cast<double>(config[s]) / n : 0.0;
        return project(w);
    }

    /// Species (0..2) holding every non-source agent in its aggressive
    /// flavor, if the configuration is such a corner. Exact on counts.
    std::optional<int> corner(const Configuration& config) const {
        std::array<std::int64_t, 3> pp{};
        std::int64_t others = 0;
        for (std::size_t s = 0; s < comps_.size(); ++s) {
            if (source_[s] || config[s] == 0) continue;
            if (comps_[s] && comps_[s]->flavor == 2)
                pp[static_cast<std::size_t>(comps_[s]->species)] += config[s];
            else
                others += config[s];
        }
        if (others > 0) return std::nullopt;
        int held = -1;
        for (int i = 0; i < 3; ++i)
            if (pp[i] > 0) {
                if (held >= 0) return std::nullopt;
                held = i;
            }
        if (held < 0) return std::nullopt;
        return held;
    }

private:
    std::vector<std::optional<analytics_detail::Component>> comps_;
    std::vector<char> source_;
};

inline OscillatorView project(const Protocol& p, const std::vector<double>& weights, const std::string& tag = "") {
    return OscillatorProjector(p, tag).project(weights);
}

inline OscillatorView view(const Configuration& config, const Protocol& p, const std::string& tag = "") {
    return OscillatorProjector(p, tag).view(config);
}

/// Oscillator tags present in a protocol: {""} for a single oscillator,
/// {"1","2"} for the BitBroadcast stack, empty when there is none.
inline std::vector<std::string> oscillator_tags(const Protocol& p) {
    static const std::regex re(R"(^A[1-9](?:\+\+|\+)?(?:\[([^\]]+)\])?$)");
    std::vector<std::string> tags;
    for (const auto& st : p.states)
        for (const auto& c : st.components) {
            std::smatch m;
            if (!std::regex_match(c, m, re)) continue;
            auto t = m[1].matched ? m[1].str() : std::string();
            if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
        }
    std::sort(tags.begin(), tags.end());
    return tags;
}

// ---------------------------------------------------------------------------
// potentials

struct PotentialRecord {
    double phi = 0;
    bool phi_valid = false;  ///< false: some a_i = 0 and phi = -inf
    std::array<double, 3> delta_i{};
    double delta = 0;
    std::array<double, 3> kappa_i{};
    std::array<bool, 3> kappa_valid{};
    double kappa = 0;
    bool kappa_all_valid = false;
    double eta = 0;
    bool eta_valid = false;
    double psi = 0;
    bool psi_valid = false;
};

inline PotentialRecord potentials(const OscillatorView& v, double p) {
    PotentialRecord r;
    const double s = v.s;
    r.phi_valid = v.a_min() > 0;
    r.phi = r.phi_valid ? std::log(v.a[0] * v.a[1] * v.a[2]) : -std::numeric_limits<double>::infinity();
    double d2 = 0, k2 = 0;
    r.kappa_all_valid = true;
    for (int i = 0; i < 3; ++i) {
        r.delta_i[i] = v.a[i] - v.a[(i + 2) % 3];
        d2 += r.delta_i[i] * r.delta_i[i];
        r.kappa_valid[i] = v.a[i] > 0;
        if (r.kappa_valid[i]) {
            r.kappa_i[i] = s * v.pp[i] / v.a[i] - v.a[i];
            k2 += r.kappa_i[i] * r.kappa_i[i];
        } else {
            r.kappa_i[i] = std::numeric_limits<double>::quiet_NaN();
            r.kappa_all_valid = false;
        }
    }
    r.delta = std::sqrt(d2);
    r.kappa = r.kappa_all_valid ? std::sqrt(k2) : std::numeric_limits<double>::quiet_NaN();
    r.eta_valid = r.phi_valid && s > 0;
    if (r.eta_valid) {
        // rounding can leave ln(s^3/27) - phi slightly below zero at the center
        const double eta2 = std::log(s * s * s / 27.0) - r.phi;
        r.eta = std::sqrt(std::max(0.0, eta2));
        r.psi = eta2 - 4.0 * p / (s * s) * k2;
        r.psi_valid = true;
    } else {
        r.eta = std::numeric_limits<double>::quiet_NaN();
        r.psi = std::numeric_limits<double>::quiet_NaN();
    }
    return r;
}

// ---------------------------------------------------------------------------
// drift

/// E[change of each state's count] over one step from `config`, i.e.
/// n * E[delta u] with u = count / n. Exact scheduler law (distinct agents).
inline std::vector<double> drift(const Configuration& config, const RuleTable& table) {
    const auto k = config.size();
    const double n = static_cast<double>(config.n());
    std::vector<double> d(k, 0.0);
    if (n < 2) return d;
    for (StateId a = 0; a < k; ++a) {
        if (config[a] == 0) continue;
        for (StateId b = 0; b < k; ++b) {
            const double pair = static_cast<double>(config[a]) * static_cast<double>(config[b] - (a == b)) / (n * (n - 1));
            if (pair <= 0) continue;
            for (const auto& o : table.row(a, b)) {
                if (o.rule == kIdentityRule) continue;
                const double w = pair * o.prob.value();
                d[a] -= w;
                d[b] -= w;
                d[o.initiator_out] += w;
                d[o.receiver_out] += w;
            }
        }
    }
    return d;
}

inline std::vector<double> drift(const Configuration& config, const Protocol& p) { return drift(config, rule_table(p)); }

/// n -> infinity limit of the drift at concentrations u (pairs drawn with
/// probability u_a * u_b): du/dt with time in rounds.
inline std::vector<double> limit_drift(const std::vector<double>& u, const RuleTable& table) {
    const auto k = u.size();
    std::vector<double> d(k, 0.0);
    for (StateId a = 0; a < k; ++a)
        for (StateId b = 0; b < k; ++b) {
            const double pair = u[a] * u[b];
            if (pair == 0) continue;
            for (const auto& o : table.row(a, b)) {
                if (o.rule == kIdentityRule) continue;
                const double w = pair * o.prob.value();
                d[a] -= w;
                d[b] -= w;
                d[o.initiator_out] += w;
                d[o.receiver_out] += w;
            }
        }
    return d;
}

// ---------------------------------------------------------------------------
// period estimation

struct PeriodEstimate {
    std::array<std::vector<double>, 3> rise_times;  ///< per species, in rounds
    double period = 0;                               ///< mean interval between rises, rounds
    int cycles = 0;                                  ///< number of full cycles used
    bool valid = false;                              ///< false: fewer than two rises in every species
};

/// Hysteresis cycle detector: a cycle of species i starts when a_i rises
/// above high*s after having been below low*s. The period is the mean time
/// between consecutive starts, pooled over the three species.
inline PeriodEstimate estimate_period(const std::vector<double>& rounds, const std::array<std::vector<double>, 3>& a,
                                      double s, double low = 0.1, double high = 0.4) {
    PeriodEstimate est;
    double total = 0;
    for (int i = 0; i < 3; ++i) {
        bool armed = false;
        for (std::size_t t = 0; t < rounds.size() && t < a[i].size(); ++t) {
            if (a[i][t] < low * s) armed = true;
            if (armed && a[i][t] > high * s) {
                est.rise_times[i].push_back(rounds[t]);
                armed = false;
            }
        }
        const auto& r = est.rise_times[i];
        for (std::size_t j = 1; j < r.size(); ++j) {
            total += r[j] - r[j - 1];
            ++est.cycles;
        }
    }
    est.valid = est.cycles > 0;
    est.period = est.valid ? total / est.cycles : 0.0;
    return est;
}

// ---------------------------------------------------------------------------
// answers

/// Fraction of agents per answer; states without an answer count as "none".
inline std::map<std::string, double> answer_fractions(const Configuration& config, const Protocol& p) {
    std::map<std::string, double> out;
    for (const auto& a : p.answers) out[a] = 0.0;
    const double n = static_cast<double>(config.n());
    for (StateId s = 0; s < p.size(); ++s) {
        if (p.answer_of[s] == kNoAnswer) out.try_emplace(kNoneAnswer, 0.0);
        if (config[s] > 0) out[p.answer(s)] += static_cast<double>(config[s]) / n;
    }
    return out;
}

/// ln applied to counts, with ln(0) taken as -1.
inline std::vector<double> log_config(const Configuration& config) {
    std::vector<double> out(config.size());
    for (std::size_t s = 0; s < out.size(); ++s)
        out[s] = config[s] > 0 ? std::log(static_cast<double>(config[s])) : -1.0;
    return out;
}

}  // namespace popproto
