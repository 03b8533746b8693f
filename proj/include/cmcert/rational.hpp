#pragma once

#include <boost/multiprecision/gmp.hpp>

#include <cctype>
#include <cmath>
#include <string>
#include <string_view>

#include "error.hpp"

namespace cmcert {

/// Arbitrary precision rational; expression templates are off so `auto` is safe.
using Rational = boost::multiprecision::number<boost::multiprecision::gmp_rational,
                                               boost::multiprecision::et_off>;
using Integer = boost::multiprecision::number<boost::multiprecision::gmp_int,
                                              boost::multiprecision::et_off>;

inline Integer numerator(const Rational& r) { return boost::multiprecision::numerator(r); }
inline Integer denominator(const Rational& r) { return boost::multiprecision::denominator(r); }

inline Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

inline Rational rpow(const Rational& base, unsigned e) {
    Rational out = 1;
    Rational b = base;
    while (e) {
        if (e & 1u) out *= b;
        b *= b;
        e >>= 1u;
    }
    return out;
}

/// Parses "3", "-3/2", "0.125", "7.6e-5" exactly.
inline Rational parse_rational(std::string_view text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
    require(!s.empty(), "empty rational literal");
    if (auto slash = s.find('/'); slash != std::string::npos) {
        Rational num = parse_rational(std::string_view(s).substr(0, slash));
        Rational den = parse_rational(std::string_view(s).substr(slash + 1));
        require(den != 0, "zero denominator in '" + s + "'");
        return num / den;
    }
    std::size_t i = 0;
    bool negative = false;
    if (s[i] == '+' || s[i] == '-') negative = s[i++] == '-';
    std::string digits;
    long exponent = 0;
    bool seen_digit = false;
    for (; i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.'); ++i) {
        if (s[i] == '.') {
            require(exponent == 0 && digits.find('.') == std::string::npos,
                    "malformed rational '" + s + "'");
            digits.push_back('.');
            continue;
        }
        seen_digit = true;
        digits.push_back(s[i]);
    }
    require(seen_digit, "malformed rational '" + s + "'");
    if (i < s.size()) {
        require(s[i] == 'e' || s[i] == 'E', "malformed rational '" + s + "'");
        ++i;
        std::size_t used = 0;
        try {
            exponent = std::stol(s.substr(i), &used);
        } catch (const std::exception&) {
            fail(ErrorKind::precondition, "malformed exponent in '" + s + "'");
        }
        require(i + used == s.size(), "malformed rational '" + s + "'");
    }
    long frac_digits = 0;
    if (auto dot = digits.find('.'); dot != std::string::npos) {
        frac_digits = static_cast<long>(digits.size() - dot - 1);
        digits.erase(dot, 1);
    }
    // a leading zero would make the integer parser read octal
    std::size_t nz = digits.find_first_not_of('0');
    digits = nz == std::string::npos ? "0" : digits.substr(nz);
    Rational out{Integer(digits)};
    long shift = exponent - frac_digits;
    Rational ten_pow = rpow(Rational(10), static_cast<unsigned>(std::labs(shift)));
    out = shift >= 0 ? out * ten_pow : out / ten_pow;
    return negative ? Rational(-out) : out;
}

inline std::string to_string(const Rational& r) { return r.str(); }

/// Exact decimal form when the denominator is 2^a 5^b, otherwise "p/q".
inline std::string to_decimal(const Rational& r) {
    Integer d = denominator(r);
    unsigned twos = 0, fives = 0;
    while (d % 2 == 0) {
        d /= 2;
        ++twos;
    }
    while (d % 5 == 0) {
        d /= 5;
        ++fives;
    }
    if (d != 1) return r.str();
    unsigned digits = std::max(twos, fives);
    Integer scaled = numerator(abs(r) * rpow(Rational(10), digits));
    std::string s = scaled.str();
    if (digits > 0) {
        if (s.size() <= digits) s.insert(0, digits - s.size() + 1, '0');
        s.insert(s.size() - digits, ".");
    }
    return (r < 0 ? "-" : "") + s;
}

/// Exact value of a finite double.
inline Rational from_double(double d) {
    require(std::isfinite(d), "non-finite double cannot be made rational");
    return Rational(d);
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline long double to_long_double(const Rational& r) {
    long double n = numerator(r).convert_to<long double>();
    long double d = denominator(r).convert_to<long double>();
    long double q = n / d;
    return std::isfinite(q) ? q : static_cast<long double>(to_double(r));
}

}  // namespace cmcert
