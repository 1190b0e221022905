#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <gmpxx.h>

#include "configuration.hpp"
#include "protocol.hpp"

namespace popproto {

struct CapExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Number of ways to place `agents` agents into `bins` states, saturating at
/// UINT64_MAX.
inline std::uint64_t count_compositions(std::int64_t agents, std::size_t bins) {
    if (bins == 0) return agents == 0 ? 1 : 0;
    // C(agents + bins - 1, bins - 1), built incrementally; every partial product is an integer
    unsigned __int128 c = 1;
    const std::uint64_t kMax = UINT64_MAX;
    for (std::size_t i = 1; i < bins; ++i) {
        c = c * static_cast<unsigned __int128>(static_cast<std::uint64_t>(agents) + i) / i;
        if (c > kMax) return kMax;
    }
    return static_cast<std::uint64_t>(c);
}

/// Exact one-step law from a configuration: successor configurations and
/// their probabilities (identity mass included on `config` itself).
inline std::vector<std::pair<Configuration, Probability>> single_step_law(const RuleTable& table,
                                                                          const Configuration& config) {
    const auto k = config.size();
    const std::int64_t n = config.n();
    if (n < 2) throw std::invalid_argument("single_step_law needs n >= 2");
    std::map<std::vector<std::int64_t>, Probability> acc;
    Probability moved;
    for (StateId a = 0; a < k; ++a) {
        if (config[a] == 0) continue;
        for (StateId b = 0; b < k; ++b) {
            const auto cb = config[b] - (a == b);
            if (cb <= 0) continue;
            const Probability pair(Rational(config[a] * cb, n * (n - 1)));
            for (const auto& o : table.row(a, b)) {
                if (o.rule == kIdentityRule) continue;
                auto next = config.counts;
                --next[a];
                --next[b];
                ++next[o.initiator_out];
                ++next[o.receiver_out];
                if (next == config.counts) continue;
                const auto w = pair * o.prob;
                auto [it, fresh] = acc.try_emplace(std::move(next), w);
                if (!fresh) it->second += w;
                moved += w;
            }
        }
    }
    std::vector<std::pair<Configuration, Probability>> out;
    const auto stay = moved.complement();
    for (auto& [c, p] : acc) out.emplace_back(Configuration(c), p);
    if (stay.value() > Probability::kFloatTolerance || (stay.is_exact() && !stay.is_zero()))
        out.emplace_back(config, stay);
    return out;
}

// ---------------------------------------------------------------------------
// enumerated chain

struct VectorHash {
    std::size_t operator()(const std::vector<std::int64_t>& v) const {
        std::size_t h = 0xcbf29ce484222325ULL;
        for (auto x : v) h = (h ^ static_cast<std::size_t>(x)) * 0x100000001b3ULL;
        return h;
    }
};

struct ExactChain {
    std::string protocol;
    std::int64_t n = 0;
    std::vector<Configuration> configs;
    /// rows[i]: (successor index, probability), self-loop included.
    std::vector<std::vector<std::pair<std::size_t, Probability>>> rows;
    bool exact = true;  ///< every transition probability is rational
    std::unordered_map<std::vector<std::int64_t>, std::size_t, VectorHash> index;

    std::size_t size() const { return configs.size(); }
    std::size_t at(const Configuration& c) const {
        auto it = index.find(c.counts);
        if (it == index.end()) throw std::out_of_range("configuration not in chain");
        return it->second;
    }
};

/// Enumerates every configuration of `n` agents with the given source counts
/// and its exact transition row.
inline ExactChain enumerate(const Protocol& protocol, std::int64_t n,
                            const std::map<std::string, std::int64_t>& fixed_source_counts = {},
                            std::uint64_t cap = 1'000'000) {
    const RuleTable table = rule_table(protocol);
    std::vector<std::int64_t> base(protocol.size(), 0);
    std::int64_t placed = 0;
    for (const auto& [label, c] : fixed_source_counts) {
        const auto s = protocol.at(label);
        if (!protocol.is_source(s)) throw std::invalid_argument("'" + label + "' is not a source state");
        base[s] = c;
        placed += c;
    }
    if (placed > n) throw std::invalid_argument("more sources than agents");
    std::vector<StateId> free;
    for (StateId s = 0; s < protocol.size(); ++s)
        if (!protocol.is_source(s)) free.push_back(s);
    const auto rest = n - placed;
    const auto total = count_compositions(rest, free.size());
    if (total > cap)
        throw CapExceeded("chain for '" + protocol.name + "' at n=" + std::to_string(n) + " has " +
                          (total == UINT64_MAX ? std::string("more than 2^64") : std::to_string(total)) +
                          " configurations, above the cap of " + std::to_string(cap));

    ExactChain chain;
    chain.protocol = protocol.name;
    chain.n = n;
    chain.configs.reserve(total);
    // compositions in lexicographic order of the free counts
    std::vector<std::int64_t> parts(free.size(), 0);
    std::function<void(std::size_t, std::int64_t)> gen = [&](std::size_t i, std::int64_t left) {
        if (free.empty()) {
            if (left == 0) chain.configs.emplace_back(base);
            return;
        }
        if (i + 1 == free.size()) {
            parts[i] = left;
            auto c = base;
            for (std::size_t j = 0; j < free.size(); ++j) c[free[j]] = parts[j];
            chain.configs.emplace_back(std::move(c));
            return;
        }
        for (std::int64_t v = 0; v <= left; ++v) {
            parts[i] = v;
            gen(i + 1, left - v);
        }
    };
    gen(0, rest);
    for (std::size_t i = 0; i < chain.configs.size(); ++i) chain.index.emplace(chain.configs[i].counts, i);

    chain.rows.resize(chain.configs.size());
    if (n < 2) {
        for (std::size_t i = 0; i < chain.size(); ++i) chain.rows[i] = {{i, Probability(Rational(1))}};
        return chain;
    }
    for (std::size_t i = 0; i < chain.size(); ++i) {
        for (auto& [c, p] : single_step_law(table, chain.configs[i])) {
            if (!p.is_exact()) chain.exact = false;
            chain.rows[i].emplace_back(chain.at(c), p);
        }
        std::sort(chain.rows[i].begin(), chain.rows[i].end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
    }
    return chain;
}

/// Largest deviation of a row sum from 1 (0 when all rows are exact and stochastic).
inline double max_row_defect(const ExactChain& chain) {
    double worst = 0;
    for (const auto& row : chain.rows) {
        Probability sum;
        for (const auto& [j, p] : row) sum += p;
        worst = std::max(worst, std::abs(sum.complement().value()));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// closed classes

/// Strongly connected components with no outgoing transitions (Tarjan,
/// iterative). Each class is sorted; classes are ordered by smallest member.
inline std::vector<std::vector<std::size_t>> absorbing_sets(const ExactChain& chain) {
    const auto N = chain.size();
    std::vector<std::int64_t> idx(N, -1), low(N, 0), comp(N, -1);
    std::vector<char> on_stack(N, 0);
    std::vector<std::size_t> stack;
    std::vector<std::vector<std::size_t>> comps;
    std::int64_t counter = 0;
    struct Frame {
        std::size_t v, next;
    };
    for (std::size_t root = 0; root < N; ++root) {
        if (idx[root] >= 0) continue;
        std::vector<Frame> call{{root, 0}};
        idx[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& f = call.back();
            const auto& row = chain.rows[f.v];
            if (f.next < row.size()) {
                const auto w = row[f.next++].first;
                if (idx[w] < 0) {
                    idx[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.push_back({w, 0});
                } else if (on_stack[w]) {
                    low[f.v] = std::min(low[f.v], idx[w]);
                }
                continue;
            }
            const auto v = f.v;
            call.pop_back();
            if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            if (low[v] == idx[v]) {
                std::vector<std::size_t> members;
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = static_cast<std::int64_t>(comps.size());
                    members.push_back(w);
                } while (w != v);
                comps.push_back(std::move(members));
            }
        }
    }
    std::vector<std::vector<std::size_t>> closed;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        bool leaves = false;
        for (auto v : comps[c])
            for (const auto& [w, p] : chain.rows[v])
                if (comp[w] != static_cast<std::int64_t>(c)) leaves = true;
        if (!leaves) {
            std::sort(comps[c].begin(), comps[c].end());
            closed.push_back(comps[c]);
        }
    }
    std::sort(closed.begin(), closed.end());
    return closed;
}

/// Configurations that are closed classes on their own.
inline std::vector<std::size_t> absorbing_configurations(const ExactChain& chain) {
    std::vector<std::size_t> out;
    for (const auto& c : absorbing_sets(chain))
        if (c.size() == 1) out.push_back(c.front());
    return out;
}

// ---------------------------------------------------------------------------
// absorption

struct AbsorptionResult {
    bool absorbing = false;  ///< every closed class reachable from start is a single configuration
    bool exact = false;      ///< solved in rational arithmetic
    std::vector<std::size_t> targets;       ///< absorbing configuration per entry below
    std::vector<double> probability;        ///< absorption probability per target
    std::vector<std::string> probability_exact;
    double expected_steps = 0;
    std::string expected_steps_exact;
    double residual = 0;  ///< max residual of the float solve
};

struct AbsorptionOptions {
    /// Rational elimination when the chain is exact and has at most this many
    /// transient configurations reachable from the start.
    std::size_t exact_limit = 10'000;
    double residual_tolerance = 1e-10;
    int max_refinements = 10;
};

namespace oracle_detail {

inline mpq_class to_mpq(const Probability& p) {
    mpq_class q(static_cast<long>(p.rational().num()), static_cast<unsigned long>(p.rational().den()));
    q.canonicalize();
    return q;
}

/// Sparse Gaussian elimination over the rationals for (I - Q) X = B with
/// several right-hand sides. Rows are eliminated in index order.
inline std::vector<std::vector<mpq_class>> solve_exact(std::vector<std::map<std::size_t, mpq_class>> A,
                                                       std::vector<std::vector<mpq_class>> B) {
    const auto m = A.size();
    const auto r = B.empty() ? 0 : B[0].size();
    for (std::size_t piv = 0; piv < m; ++piv) {
        auto pit = A[piv].find(piv);
        if (pit == A[piv].end() || sgn(pit->second) == 0) throw std::runtime_error("singular absorption system");
        const mpq_class inv = 1 / pit->second;
        for (auto& [c, v] : A[piv]) v *= inv;
        for (auto& b : B[piv]) b *= inv;
        // eliminate piv from later rows that reference it
        for (std::size_t row = piv + 1; row < m; ++row) {
            auto it = A[row].find(piv);
            if (it == A[row].end()) continue;
            const mpq_class f = it->second;
            A[row].erase(it);
            for (const auto& [c, v] : A[piv]) {
                if (c == piv) continue;
                auto& dst = A[row][c];
                dst -= f * v;
                if (sgn(dst) == 0) A[row].erase(c);
            }
            for (std::size_t j = 0; j < r; ++j) B[row][j] -= f * B[piv][j];
        }
    }
    for (std::size_t piv = m; piv-- > 0;)
        for (const auto& [c, v] : A[piv]) {
            if (c == piv) continue;
            for (std::size_t j = 0; j < r; ++j) B[piv][j] -= v * B[c][j];
        }
    return B;
}

}  // namespace oracle_detail

/// Absorption probabilities into each absorbing configuration reachable from
/// `start` and the expected number of steps until absorption.
inline AbsorptionResult absorption(const ExactChain& chain, const Configuration& start,
                                   const AbsorptionOptions& opt = {}) {
    AbsorptionResult res;
    const auto s0 = chain.at(start);
    // reachable set from the start
    std::vector<char> seen(chain.size(), 0);
    std::vector<std::size_t> order{s0};
    seen[s0] = 1;
    for (std::size_t h = 0; h < order.size(); ++h)
        for (const auto& [w, p] : chain.rows[order[h]])
            if (!seen[w]) {
                seen[w] = 1;
                order.push_back(w);
            }
    std::vector<char> in_closed(chain.size(), 0);
    for (const auto& cls : absorbing_sets(chain)) {
        if (!seen[cls.front()]) continue;
        if (cls.size() > 1) return res;  // a recurrent class that is not a single configuration
        res.targets.push_back(cls.front());
        in_closed[cls.front()] = 1;
    }
    res.absorbing = true;
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> transient;
    std::unordered_map<std::size_t, std::size_t> local;
    for (auto v : order)
        if (!in_closed[v]) {
            local.emplace(v, transient.size());
            transient.push_back(v);
        }
    const auto T = res.targets.size();
    res.probability.assign(T, 0.0);
    if (in_closed[s0]) {
        for (std::size_t t = 0; t < T; ++t) res.probability[t] = res.targets[t] == s0 ? 1.0 : 0.0;
        res.exact = true;
        for (auto p : res.probability) res.probability_exact.push_back(p == 1.0 ? "1" : "0");
        res.expected_steps_exact = "0";
        return res;
    }
    std::unordered_map<std::size_t, std::size_t> target_of;
    for (std::size_t t = 0; t < T; ++t) target_of.emplace(res.targets[t], t);
    const auto m = transient.size();
    const auto start_local = local.at(s0);

    if (chain.exact && m <= opt.exact_limit) {
        std::vector<std::map<std::size_t, mpq_class>> A(m);
        std::vector<std::vector<mpq_class>> B(m, std::vector<mpq_class>(T + 1, mpq_class(0)));
        for (std::size_t i = 0; i < m; ++i) {
            A[i][i] = 1;
            B[i][T] = 1;
            for (const auto& [w, p] : chain.rows[transient[i]]) {
                const auto q = oracle_detail::to_mpq(p);
                if (auto it = local.find(w); it != local.end()) {
                    A[i][it->second] -= q;
                    if (sgn(A[i][it->second]) == 0) A[i].erase(it->second);
                } else {
                    B[i][target_of.at(w)] += q;
                }
            }
        }
        const auto X = oracle_detail::solve_exact(std::move(A), std::move(B));
        res.exact = true;
        for (std::size_t t = 0; t < T; ++t) {
            res.probability[t] = X[start_local][t].get_d();
            res.probability_exact.push_back(X[start_local][t].get_str());
        }
        res.expected_steps = X[start_local][T].get_d();
        res.expected_steps_exact = X[start_local][T].get_str();
        return res;
    }

    using SpMat = Eigen::SparseMatrix<double>;
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(T + 1));
    for (std::size_t i = 0; i < m; ++i) {
        const auto I = static_cast<Eigen::Index>(i);
        trips.emplace_back(I, I, 1.0);
        B(I, static_cast<Eigen::Index>(T)) = 1.0;
        for (const auto& [w, p] : chain.rows[transient[i]]) {
            if (auto it = local.find(w); it != local.end())
                trips.emplace_back(I, static_cast<Eigen::Index>(it->second), -p.value());
            else
                B(I, static_cast<Eigen::Index>(target_of.at(w))) += p.value();
        }
    }
    SpMat A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw std::runtime_error("sparse LU failed on absorption system");
    Eigen::MatrixXd X = lu.solve(B);
    Eigen::MatrixXd R = B - A * X;
    for (int it = 0; it < opt.max_refinements && R.cwiseAbs().maxCoeff() > opt.residual_tolerance; ++it) {
        X += lu.solve(R);
        R = B - A * X;
    }
    res.residual = R.cwiseAbs().maxCoeff();
    if (res.residual > opt.residual_tolerance)
        throw std::runtime_error("absorption solve residual " + std::to_string(res.residual) + " above tolerance");
    const auto S = static_cast<Eigen::Index>(start_local);
    for (std::size_t t = 0; t < T; ++t) res.probability[t] = X(S, static_cast<Eigen::Index>(t));
    res.expected_steps = X(S, static_cast<Eigen::Index>(T));
    return res;
}

/// Sparse triplet export: a header, one "# config <index> <counts...>" line
/// per configuration, then "<row> <col> <probability>" per transition.
inline void write_triplets(const ExactChain& chain, const Protocol& protocol, std::ostream& os) {
    os << "# chain " << chain.protocol << " n=" << chain.n << " configurations=" << chain.size() << "\n# states";
    for (const auto& s : protocol.states) os << ' ' << s.label;
    os << '\n';
    for (std::size_t i = 0; i < chain.size(); ++i) {
        os << "# config " << i;
        for (auto c : chain.configs[i].counts) os << ' ' << c;
        os << '\n';
    }
    for (std::size_t i = 0; i < chain.size(); ++i)
        for (const auto& [j, p] : chain.rows[i]) os << i << ' ' << j << ' ' << p.str() << '\n';
}

}  // namespace popproto
