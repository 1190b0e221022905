#pragma once

// Line-oriented text format for protocols and protocol extensions (.pp).
//
//   protocol <name>                      | extension <name>
//   param <name> = <number>
//   cycle <m>                            (default 3)
//   [base] species A[i] flavors +,++ [tag 1]
//   [base] state <label> [source]
//   initiator-preserving
//   rule <init> : <recv> -> <out> [@ <prob>] [else <out2>]
//   rule <init> : <recv> -> <init_out> : <recv_out> [@ <prob>]
//   output <answer> = <pattern>, <pattern>, ...
//
// Atoms: `A[i]+`, `A[i+1]?`, `A[?]++[1]`, `M-1`, `X`. `?` is a wildcard set
// independently per agent; index arithmetic is cyclic. Tuple patterns
// `(A[i]?, M+1)` match product states component-wise. An index variable that
// occurs only on the output side spreads the probability over every binding
// (`X : A[?]? -> A[j]+ @ 1/3`). `base` declarations in an extension describe
// the base protocol's vocabulary without creating states.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "probability.hpp"
#include "protocol.hpp"

namespace popproto {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
          line_(line),
          column_(column) {}
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

namespace dsl_detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

/// Splits on `sep` at parenthesis depth 0.
inline std::vector<std::string> split_top(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
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

/// Position of `token` (surrounded by whitespace) at depth 0, or npos.
inline std::size_t find_keyword(std::string_view s, std::string_view token, std::size_t from = 0) {
    int depth = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '(') ++depth;
        if (s[i] == ')') --depth;
        if (i < from || depth != 0) continue;
        if (s.substr(i, token.size()) != token) continue;
        const bool left = i == 0 || std::isspace(static_cast<unsigned char>(s[i - 1]));
        const bool right = i + token.size() >= s.size() || std::isspace(static_cast<unsigned char>(s[i + token.size()]));
        if (left && right) return i;
    }
    return std::string_view::npos;
}

struct Species {
    std::string stem;
    bool indexed = false;
    std::vector<std::string> flavors;
    std::string tag;
    bool base = false;
};

using Binding = std::map<std::string, int>;

struct Line {
    int number;
    std::string raw;
    std::string text;  // comment stripped, trimmed
};

class Parser {
public:
    explicit Parser(std::string_view source) {
        std::istringstream in{std::string(source)};
        std::string raw;
        int number = 0;
        while (std::getline(in, raw)) {
            ++number;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            auto hash = raw.find('#');
            auto text = trim(hash == std::string::npos ? raw : std::string_view(raw).substr(0, hash));
            if (!text.empty()) lines_.push_back(Line{number, raw, text});
        }
    }

    Protocol parse_protocol() {
        declarations();
        if (is_extension_) fail(extension_line_, "extension", "extension file parsed as a protocol");
        Protocol p;
        p.name = name_.empty() ? "protocol" : name_;
        p.initiator_preserving = initiator_preserving_;
        for (const auto& [k, v] : params_) p.params[k] = v.value();
        for (const auto& decl : state_order_) {
            if (decl.base) continue;
            p.add_state(decl.label, decl.source);
        }
        target_ = &p;
        rules_and_outputs(p, nullptr);
        p.canonicalize();
        return p;
    }

    Extension parse_extension(const Protocol& base) {
        declarations();
        if (!is_extension_) fail(lines_.empty() ? 1 : lines_.front().number, "", "file does not declare an extension");
        std::vector<std::string> ext_labels, ext_sources;
        for (const auto& decl : state_order_) {
            if (decl.base) continue;
            (decl.source ? ext_sources : ext_labels).push_back(decl.label);
        }
        Extension e = make_extension_skeleton(base, name_.empty() ? "extension" : name_, ext_labels, ext_sources);
        for (const auto& [k, v] : params_) e.law.params[k] = v.value();
        e.law.initiator_preserving = initiator_preserving_;
        target_ = &e.law;
        rules_and_outputs(e.law, &e);
        e.law.canonicalize();
        return e;
    }

private:
    struct StateDecl {
        std::string label;
        bool source = false;
        bool base = false;
    };

    [[noreturn]] void fail(int line, std::string_view needle, const std::string& what) const {
        int column = 1;
        for (const auto& l : lines_)
            if (l.number == line && !needle.empty())
                if (auto pos = l.raw.find(needle); pos != std::string::npos) column = static_cast<int>(pos) + 1;
        throw ParseError(line, column, what);
    }

    // --- pass 1: declarations -------------------------------------------------

    void declarations() {
        for (const auto& line : lines_) {
            std::istringstream in(line.text);
            std::string kw;
            in >> kw;
            bool base = false;
            if (kw == "base") {
                base = true;
                in >> kw;
            }
            if (kw == "protocol") {
                name_ = trim(line.text.substr(8));
            } else if (kw == "extension") {
                name_ = trim(line.text.substr(9));
                is_extension_ = true;
                extension_line_ = line.number;
            } else if (kw == "initiator-preserving") {
                initiator_preserving_ = true;
            } else if (kw == "cycle") {
                int m = 0;
                if (!(in >> m) || m < 1) fail(line.number, "cycle", "cycle length must be a positive integer");
                cycle_ = m;
            } else if (kw == "param") {
                param(line);
            } else if (kw == "species") {
                species(line, in, base);
            } else if (kw == "state") {
                std::string label, flag;
                in >> label >> flag;
                if (label.empty()) fail(line.number, "state", "state declaration without a label");
                if (!flag.empty() && flag != "source") fail(line.number, flag, "unexpected '" + flag + "'");
                declare(line, StateDecl{label, flag == "source", base});
            } else if (kw == "rule" || kw == "output") {
                continue;
            } else {
                fail(line.number, kw, "unknown directive '" + kw + "'");
            }
        }
        // species are expanded after cycle is known
        for (const auto& sp : species_) {
            const int count = sp.indexed ? cycle_ : 1;
            for (int i = 1; i <= count; ++i) {
                std::vector<std::string> flavors = sp.flavors.empty() ? std::vector<std::string>{""} : sp.flavors;
                for (const auto& f : flavors) {
                    auto label = sp.stem + (sp.indexed ? std::to_string(i) : "") + f + (sp.tag.empty() ? "" : "[" + sp.tag + "]");
                    pending_species_states_.push_back(StateDecl{label, false, sp.base});
                }
            }
        }
        // order: species-generated states first, explicit states afterwards
        std::vector<StateDecl> ordered = pending_species_states_;
        ordered.insert(ordered.end(), explicit_states_.begin(), explicit_states_.end());
        state_order_ = ordered;
        for (const auto& d : explicit_states_) explicit_labels_.insert(d.label);
    }

    void param(const Line& line) {
        auto eq = line.text.find('=');
        if (eq == std::string::npos) fail(line.number, "param", "expected 'param <name> = <number>'");
        auto name = trim(std::string_view(line.text).substr(5, eq - 5));
        auto value = trim(std::string_view(line.text).substr(eq + 1));
        auto prob = Probability::parse(value);
        if (name.empty() || !prob) fail(line.number, value, "malformed parameter value '" + value + "'");
        params_[name] = *prob;
    }

    void species(const Line& line, std::istringstream& in, bool base) {
        Species sp;
        sp.base = base;
        std::string head;
        in >> head;
        if (auto br = head.find('['); br != std::string::npos) {
            sp.stem = head.substr(0, br);
            sp.indexed = true;
        } else {
            sp.stem = head;
        }
        if (sp.stem.empty()) fail(line.number, "species", "species without a name");
        std::string kw;
        while (in >> kw) {
            std::string arg;
            in >> arg;
            if (kw == "flavors") {
                sp.flavors = split_top(arg, ',');
            } else if (kw == "tag") {
                sp.tag = arg;
            } else {
                fail(line.number, kw, "unexpected '" + kw + "' in species declaration");
            }
        }
        species_.push_back(sp);
    }

    void declare(const Line& line, StateDecl d) {
        for (const auto& e : explicit_states_)
            if (e.label == d.label) fail(line.number, d.label, "state '" + d.label + "' declared twice");
        explicit_states_.push_back(std::move(d));
    }

    // --- patterns -------------------------------------------------------------

    static void collect_vars(std::string_view text, std::set<std::string>& vars) {
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text[i] != '[') continue;
            auto close = text.find(']', i);
            if (close == std::string_view::npos) return;
            auto expr = text.substr(i + 1, close - i - 1);
            std::string name;
            for (char c : expr) {
                if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                    name += c;
                } else {
                    break;
                }
            }
            if (!name.empty()) vars.insert(name);
            i = close;
        }
    }

    std::vector<int> eval_index(int line, std::string_view expr, const Binding& b) const {
        auto e = trim(expr);
        if (e == "?") {
            std::vector<int> all;
            for (int i = 1; i <= cycle_; ++i) all.push_back(i);
            return all;
        }
        if (!e.empty() && std::isdigit(static_cast<unsigned char>(e[0]))) {
            const int v = std::stoi(e);
            if (v < 1 || v > cycle_) fail(line, e, "index " + e + " out of range 1.." + std::to_string(cycle_));
            return {v};
        }
        std::size_t pos = 0;
        while (pos < e.size() && (std::isalpha(static_cast<unsigned char>(e[pos])) || e[pos] == '_')) ++pos;
        const auto var = e.substr(0, pos);
        auto it = b.find(var);
        if (var.empty() || it == b.end()) fail(line, e, "malformed index expression '" + e + "'");
        int offset = 0;
        if (pos < e.size()) {
            const char sign = e[pos];
            if ((sign != '+' && sign != '-') || pos + 1 >= e.size())
                fail(line, e, "malformed index expression '" + e + "'");
            offset = std::stoi(e.substr(pos + 1)) * (sign == '-' ? -1 : 1);
        }
        const int v = ((it->second - 1 + offset) % cycle_ + cycle_) % cycle_ + 1;
        return {v};
    }

    /// Expands one atom to concrete component labels.
    std::vector<std::string> expand_atom(int line, const std::string& atom, const Binding& b) const {
        if (explicit_labels_.count(atom)) return {atom};
        // longest stem wins; among equal stems the one whose tag suffix matches
        const Species* best = nullptr;
        auto tag_matches = [&](const Species& sp) {
            if (sp.tag.empty()) return true;
            const std::string suffix = "[" + sp.tag + "]";
            return atom.size() >= suffix.size() && atom.compare(atom.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        for (const auto& sp : species_) {
            if (atom.compare(0, sp.stem.size(), sp.stem) != 0) continue;
            if (!best || sp.stem.size() > best->stem.size() ||
                (sp.stem.size() == best->stem.size() && !tag_matches(*best) && tag_matches(sp)))
                best = &sp;
        }
        if (!best) fail(line, atom, "undeclared state '" + atom + "'");
        const auto& sp = *best;
        std::size_t pos = sp.stem.size();
        std::vector<int> indices{0};
        if (sp.indexed) {
            if (pos >= atom.size() || atom[pos] != '[') fail(line, atom, "species '" + sp.stem + "' needs an index");
            auto close = atom.find(']', pos);
            if (close == std::string::npos) fail(line, atom, "unterminated index in '" + atom + "'");
            indices = eval_index(line, std::string_view(atom).substr(pos + 1, close - pos - 1), b);
            pos = close + 1;
        }
        std::string rest = atom.substr(pos);
        if (!sp.tag.empty()) {
            const std::string suffix = "[" + sp.tag + "]";
            if (rest.size() < suffix.size() || rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) != 0)
                fail(line, atom, "'" + atom + "' lacks tag " + suffix);
            rest.resize(rest.size() - suffix.size());
        }
        std::vector<std::string> flavors;
        if (rest == "?") {
            flavors = sp.flavors.empty() ? std::vector<std::string>{""} : sp.flavors;
        } else if ((rest.empty() && sp.flavors.empty()) ||
                   std::find(sp.flavors.begin(), sp.flavors.end(), rest) != sp.flavors.end()) {
            flavors = {rest};
        } else {
            fail(line, atom, "unknown flavor '" + rest + "' for species '" + sp.stem + "'");
        }
        std::vector<std::string> out;
        for (int i : indices)
            for (const auto& f : flavors)
                out.push_back(sp.stem + (sp.indexed ? std::to_string(i) : "") + f +
                              (sp.tag.empty() ? "" : "[" + sp.tag + "]"));
        return out;
    }

    /// Expands a side (atom or tuple) to state labels of the target.
    std::vector<StateId> expand_side(int line, const std::string& side, const Binding& b) const {
        std::vector<std::string> labels;
        if (target_->find(side) || explicit_labels_.count(side)) {
            labels = {side};
        } else if (side.size() >= 2 && side.front() == '(' && side.back() == ')') {
            labels = {""};
            std::vector<std::vector<std::string>> parts;
            for (const auto& comp : split_top(std::string_view(side).substr(1, side.size() - 2), ','))
                parts.push_back(expand_atom(line, comp, b));
            std::vector<std::vector<std::string>> combos{{}};
            for (const auto& options : parts) {
                std::vector<std::vector<std::string>> next;
                for (const auto& c : combos)
                    for (const auto& o : options) {
                        auto n = c;
                        n.push_back(o);
                        next.push_back(std::move(n));
                    }
                combos = std::move(next);
            }
            labels.clear();
            for (const auto& c : combos) labels.push_back(product_label(c));
        } else {
            labels = expand_atom(line, side, b);
        }
        std::vector<StateId> ids;
        for (const auto& l : labels) {
            auto id = target_->find(l);
            if (!id) fail(line, side, "undeclared state '" + l + "'");
            ids.push_back(*id);
        }
        return ids;
    }

    Probability eval_prob(int line, const std::string& expr) const {
        auto e = trim(expr);
        std::string coef = "1", name;
        if (auto star = e.find('*'); star != std::string::npos) {
            coef = trim(std::string_view(e).substr(0, star));
            name = trim(std::string_view(e).substr(star + 1));
        } else if (!e.empty() && (std::isalpha(static_cast<unsigned char>(e[0])) || e[0] == '_')) {
            name = e;
        } else {
            coef = e;
        }
        auto c = Probability::parse(coef);
        if (!c) fail(line, coef, "malformed probability '" + e + "'");
        if (name.empty()) return *c;
        auto it = params_.find(name);
        if (it == params_.end()) fail(line, name, "unbound parameter '" + name + "'");
        return *c * it->second;
    }

    // --- pass 2: rules and outputs -------------------------------------------

    void rules_and_outputs(Protocol& p, Extension* ext) {
        for (const auto& line : lines_) {
            if (line.text.rfind("rule", 0) == 0 && (line.text.size() == 4 || std::isspace(static_cast<unsigned char>(line.text[4]))))
                rule(line, p, ext);
            else if (line.text.rfind("output", 0) == 0)
                output(line, p);
        }
    }

    static std::vector<Binding> bindings(const std::set<std::string>& vars, int m) {
        std::vector<Binding> out{{}};
        for (const auto& v : vars) {
            std::vector<Binding> next;
            for (const auto& b : out)
                for (int i = 1; i <= m; ++i) {
                    auto n = b;
                    n[v] = i;
                    next.push_back(std::move(n));
                }
            out = std::move(next);
        }
        return out;
    }

    /// Resolves an output atom for one agent to a product state.
    StateId resolve_output(int line, const std::string& atom, const Binding& b, StateId pre, const Extension* ext) const {
        if (!ext) {
            auto ids = expand_side(line, atom, b);
            std::set<StateId> distinct(ids.begin(), ids.end());
            if (distinct.size() != 1)
                fail(line, atom, "wildcard in '" + atom + "' produces conflicting rule outputs");
            return *distinct.begin();
        }
        auto labels = expand_atom(line, atom, b);
        std::set<std::string> distinct(labels.begin(), labels.end());
        if (distinct.size() != 1) fail(line, atom, "wildcard in '" + atom + "' produces conflicting rule outputs");
        auto c = std::find(ext->ext_labels.begin(), ext->ext_labels.end(), *distinct.begin());
        if (c == ext->ext_labels.end())
            fail(line, atom, "extension rule output '" + atom + "' is not a component of this extension");
        if (ext->ext_of[pre] < 0) fail(line, atom, "extension rule modifies a source state");
        return *ext->product(static_cast<std::size_t>(ext->base_of[pre]), static_cast<std::size_t>(c - ext->ext_labels.begin()));
    }

    void rule(const Line& line, Protocol& p, const Extension* ext) {
        const std::string body = trim(std::string_view(line.text).substr(4));
        const auto arrow = find_keyword(body, "->");
        if (arrow == std::string::npos) fail(line.number, "rule", "rule without '->'");
        const auto lhs = split_top(std::string_view(body).substr(0, arrow), ':');
        if (lhs.size() != 2 || lhs[0].empty() || lhs[1].empty())
            fail(line.number, "rule", "expected '<initiator> : <receiver>' before '->'");
        std::string rhs = trim(std::string_view(body).substr(arrow + 2));
        std::string prob_text = "1", else_text;
        if (auto at = find_keyword(rhs, "@"); at != std::string::npos) {
            prob_text = trim(std::string_view(rhs).substr(at + 1));
            rhs = trim(std::string_view(rhs).substr(0, at));
            if (auto el = find_keyword(prob_text, "else"); el != std::string::npos) {
                else_text = trim(std::string_view(prob_text).substr(el + 4));
                prob_text = trim(std::string_view(prob_text).substr(0, el));
            }
        } else if (auto el = find_keyword(rhs, "else"); el != std::string::npos) {
            fail(line.number, "else", "'else' requires an explicit '@ <prob>'");
        }
        const auto outs = split_top(rhs, ':');
        const auto else_outs = else_text.empty() ? std::vector<std::string>{} : split_top(else_text, ':');
        if (outs.size() > 2 || else_outs.size() > 2 || outs.front().empty())
            fail(line.number, rhs, "malformed rule output '" + rhs + "'");
        const Probability prob = eval_prob(line.number, prob_text);
        if (prob.value() <= 0.0 || exceeds(prob, Probability(Rational(1))))
            fail(line.number, prob_text, "rule probability " + prob.str() + " outside (0,1]");

        std::set<std::string> lhs_vars, out_vars;
        collect_vars(lhs[0], lhs_vars);
        collect_vars(lhs[1], lhs_vars);
        for (const auto& o : outs) collect_vars(o, out_vars);
        for (const auto& o : else_outs) collect_vars(o, out_vars);
        for (const auto& v : lhs_vars) out_vars.erase(v);
        if (!out_vars.empty() && !else_outs.empty())
            fail(line.number, "else", "'else' cannot be combined with output-only index variables");

        // (initiator, receiver, output binding) -> outputs, to catch conflicts
        std::map<std::tuple<StateId, StateId, Binding>, std::pair<StateId, StateId>> seen;
        for (const auto& lb : bindings(lhs_vars, cycle_)) {
            const auto inits = expand_side(line.number, lhs[0], lb);
            const auto recvs = expand_side(line.number, lhs[1], lb);
            for (StateId a : inits)
                for (StateId r : recvs)
                    for (const auto& ob : bindings(out_vars, cycle_)) {
                        Binding full = lb;
                        full.insert(ob.begin(), ob.end());
                        auto emit = [&](const std::vector<std::string>& o, Probability q, bool record) {
                            StateId o1 = a, o2;
                            if (o.size() == 2) {
                                o1 = resolve_output(line.number, o[0], full, a, ext);
                                o2 = resolve_output(line.number, o[1], full, r, ext);
                            } else {
                                o2 = resolve_output(line.number, o[0], full, r, ext);
                            }
                            if (record) {
                                auto [it, fresh] = seen.try_emplace({a, r, ob}, std::pair{o1, o2});
                                if (!fresh) {
                                    if (it->second != std::pair{o1, o2})
                                        fail(line.number, lhs[0],
                                             "wildcard expansion produces conflicting rule outputs on (" + p.label(a) +
                                                 "," + p.label(r) + ")");
                                    return false;
                                }
                            }
                            p.add_rule(a, r, o1, o2, q);
                            return true;
                        };
                        if (emit(outs, prob, true) && !else_outs.empty()) emit(else_outs, prob.complement(), false);
                    }
        }
    }

    void output(const Line& line, Protocol& p) {
        const auto eq = line.text.find('=');
        if (eq == std::string::npos) fail(line.number, "output", "expected 'output <answer> = <patterns>'");
        const auto answer = trim(std::string_view(line.text).substr(6, eq - 6));
        if (answer.empty() || answer == kNoneAnswer) fail(line.number, "output", "invalid answer name");
        std::set<std::string> vars;
        const auto patterns = split_top(std::string_view(line.text).substr(eq + 1), ',');
        for (const auto& pat : patterns) collect_vars(pat, vars);
        for (const auto& b : bindings(vars, cycle_))
            for (const auto& pat : patterns)
                for (StateId s : expand_side(line.number, pat, b)) {
                    if (p.answer_of[s] != kNoAnswer && p.answer(s) != answer)
                        fail(line.number, pat, "state '" + p.label(s) + "' assigned to two answers");
                    p.set_answer(s, answer);
                }
    }

    std::vector<Line> lines_;
    std::string name_;
    bool is_extension_ = false;
    int extension_line_ = 0;
    bool initiator_preserving_ = false;
    int cycle_ = 3;
    std::map<std::string, Probability> params_;
    std::vector<Species> species_;
    std::vector<StateDecl> explicit_states_;
    std::vector<StateDecl> pending_species_states_;
    std::vector<StateDecl> state_order_;
    std::set<std::string> explicit_labels_;
    const Protocol* target_ = nullptr;
};

}  // namespace dsl_detail

/// Parses a protocol file into a fully expanded protocol.
inline Protocol parse(std::string_view text) { return dsl_detail::Parser(text).parse_protocol(); }

/// Parses an extension file against the protocol it extends.
inline Extension parse_extension(std::string_view text, const Protocol& base) {
    return dsl_detail::Parser(text).parse_extension(base);
}

/// Canonical explicit listing; parse(serialize(p)) has p's rule table.
inline std::string serialize(const Protocol& p) {
    std::ostringstream out;
    out << "protocol " << p.name << "\n";
    if (p.initiator_preserving) out << "initiator-preserving\n";
    for (const auto& [k, v] : p.params) out << "param " << k << " = " << Probability::from_double(v).str() << "\n";
    for (const auto& s : p.states) out << "state " << s.label << (s.source ? " source" : "") << "\n";
    for (const auto& r : p.rules) {
        out << "rule " << p.label(r.initiator_in) << " : " << p.label(r.receiver_in) << " -> ";
        if (r.initiator_out != r.initiator_in) out << p.label(r.initiator_out) << " : ";
        out << p.label(r.receiver_out) << " @ " << r.prob.str() << "\n";
    }
    for (std::size_t a = 0; a < p.answers.size(); ++a) {
        std::vector<std::string> members;
        for (StateId s = 0; s < p.size(); ++s)
            if (p.answer_of[s] == static_cast<int>(a)) members.push_back(p.label(s));
        if (members.empty()) continue;
        out << "output " << p.answers[a] << " =";
        for (std::size_t i = 0; i < members.size(); ++i) out << (i ? ", " : " ") << members[i];
        out << "\n";
    }
    return out.str();
}

}  // namespace popproto
