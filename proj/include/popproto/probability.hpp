#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace popproto {

/// Exact rational with 64-bit numerator and denominator. Arithmetic that
/// would overflow returns std::nullopt through the checked_* helpers.
class Rational {
public:
    constexpr Rational() = default;
    Rational(std::int64_t num, std::int64_t den = 1) {
        if (den == 0) throw std::domain_error("rational with zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const auto g = std::gcd(num < 0 ? -num : num, den);
        num_ = g ? num / g : 0;
        den_ = g ? den / g : 1;
    }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    friend bool operator==(const Rational&, const Rational&) = default;
    friend bool operator<(const Rational& a, const Rational& b) {
        return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
    }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }

    static std::optional<Rational> from_wide(__int128 num, __int128 den) {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        __int128 a = num < 0 ? -num : num, b = den;
        while (b != 0) {
            auto t = a % b;
            a = b;
            b = t;
        }
        if (a > 1) {
            num /= a;
            den /= a;
        }
        constexpr __int128 lim = INT64_MAX;
        if (num > lim || num < -lim || den > lim || den == 0) return std::nullopt;
        return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
    }

    friend std::optional<Rational> checked_add(const Rational& a, const Rational& b) {
        return from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                         static_cast<__int128>(a.den_) * b.den_);
    }
    friend std::optional<Rational> checked_sub(const Rational& a, const Rational& b) {
        return from_wide(static_cast<__int128>(a.num_) * b.den_ - static_cast<__int128>(b.num_) * a.den_,
                         static_cast<__int128>(a.den_) * b.den_);
    }
    friend std::optional<Rational> checked_mul(const Rational& a, const Rational& b) {
        return from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
    }

    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

/// Parses a decimal literal ("0.06", "1e-12", "3") exactly. Returns nullopt
/// when the literal is malformed or the value does not fit a Rational.
inline std::optional<Rational> parse_decimal(std::string_view text) {
    if (text.empty()) return std::nullopt;
    std::size_t pos = 0;
    bool negative = false;
    if (text[pos] == '+' || text[pos] == '-') negative = text[pos++] == '-';
    __int128 mantissa = 0;
    int exponent = 0;
    bool any_digit = false;
    bool seen_point = false;
    constexpr __int128 kMantissaLimit = static_cast<__int128>(1) << 100;
    for (; pos < text.size(); ++pos) {
        const char c = text[pos];
        if (c >= '0' && c <= '9') {
            any_digit = true;
            if (mantissa > kMantissaLimit) return std::nullopt;
            mantissa = mantissa * 10 + (c - '0');
            if (seen_point) --exponent;
        } else if (c == '.' && !seen_point) {
            seen_point = true;
        } else {
            break;
        }
    }
    if (!any_digit) return std::nullopt;
    if (pos < text.size()) {
        if (text[pos] != 'e' && text[pos] != 'E') return std::nullopt;
        ++pos;
        int e = 0;
        const auto* first = text.data() + pos;
        const auto* last = text.data() + text.size();
        if (first != last && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, e);
        if (ec != std::errc() || ptr != last) return std::nullopt;
        exponent += e;
    }
    if (negative) mantissa = -mantissa;
    __int128 den = 1;
    while (exponent > 0) {
        mantissa *= 10;
        --exponent;
        if (mantissa > kMantissaLimit || mantissa < -kMantissaLimit) return std::nullopt;
    }
    while (exponent < 0) {
        den *= 10;
        ++exponent;
        if (den > kMantissaLimit) return std::nullopt;
    }
    return Rational::from_wide(mantissa, den);
}

/// A rule probability: an exact rational when one is known, a double
/// otherwise. Arithmetic stays exact while both operands are exact and the
/// result fits; anything else degrades to floating point.
class Probability {
public:
    /// Tolerance used when at least one side of a comparison is inexact.
    static constexpr double kFloatTolerance = 1e-12;

    Probability() : Probability(Rational(0)) {}
    Probability(Rational r) : value_(r.value()), exact_(r) {}

    static Probability exact(std::int64_t num, std::int64_t den = 1) { return Probability(Rational(num, den)); }
    static Probability real(double v) {
        Probability p;
        p.value_ = v;
        p.exact_.reset();
        return p;
    }

    /// Recovers the exact decimal behind a double when one exists with at
    /// most 15 significant digits (0.06 -> 3/50); otherwise keeps the double.
    static Probability from_double(double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.15g", v);
        if (auto r = parse_decimal(buf); r && r->value() == v) return Probability(*r);
        return real(v);
    }

    /// Parses "1/3", "0.06", "1e-12" as exact values and "~0.3" as a double.
    static std::optional<Probability> parse(std::string_view text) {
        if (!text.empty() && text.front() == '~') {
            text.remove_prefix(1);
            double v = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
            return real(v);
        }
        if (auto slash = text.find('/'); slash != std::string_view::npos) {
            auto a = parse_decimal(text.substr(0, slash));
            auto b = parse_decimal(text.substr(slash + 1));
            if (!a || !b || b->num() == 0) return std::nullopt;
            if (auto q = checked_mul(*a, Rational(b->den(), b->num()))) return Probability(*q);
            return real(a->value() / b->value());
        }
        if (auto r = parse_decimal(text)) return Probability(*r);
        double v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
        return real(v);
    }

    bool is_exact() const { return exact_.has_value(); }
    double value() const { return value_; }
    const Rational& rational() const { return *exact_; }
    bool is_zero() const { return exact_ ? exact_->num() == 0 : value_ == 0.0; }

    friend Probability operator+(const Probability& a, const Probability& b) {
        if (a.exact_ && b.exact_)
            if (auto r = checked_add(*a.exact_, *b.exact_)) return Probability(*r);
        return real(a.value_ + b.value_);
    }
    friend Probability operator-(const Probability& a, const Probability& b) {
        if (a.exact_ && b.exact_)
            if (auto r = checked_sub(*a.exact_, *b.exact_)) return Probability(*r);
        return real(a.value_ - b.value_);
    }
    friend Probability operator*(const Probability& a, const Probability& b) {
        if (a.exact_ && b.exact_)
            if (auto r = checked_mul(*a.exact_, *b.exact_)) return Probability(*r);
        return real(a.value_ * b.value_);
    }
    Probability& operator+=(const Probability& o) { return *this = *this + o; }

    Probability half() const { return *this * Probability(Rational(1, 2)); }
    Probability complement() const { return Probability(Rational(1)) - *this; }

    /// Exact comparison when both are exact, tolerance comparison otherwise.
    friend bool same_probability(const Probability& a, const Probability& b) {
        if (a.exact_ && b.exact_) return *a.exact_ == *b.exact_;
        return std::abs(a.value_ - b.value_) <= kFloatTolerance;
    }
    /// a > b beyond the comparison tolerance.
    friend bool exceeds(const Probability& a, const Probability& b) {
        if (a.exact_ && b.exact_) return *b.exact_ < *a.exact_;
        return a.value_ > b.value_ + kFloatTolerance;
    }

    std::string str() const {
        if (exact_) return exact_->str();
        // "~" marks an inexact value so that parse() keeps it a double
        char buf[64];
        std::snprintf(buf, sizeof buf, "~%.17g", value_);
        return buf;
    }

private:
    double value_ = 0.0;
    std::optional<Rational> exact_;
};

}  // namespace popproto
