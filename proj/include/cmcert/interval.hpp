#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "error.hpp"
#include "rational.hpp"

namespace cmcert {

namespace detail {

inline double down(double x) { return std::nextafter(x, -std::numeric_limits<double>::infinity()); }
inline double up(double x) { return std::nextafter(x, std::numeric_limits<double>::infinity()); }

// Results below this magnitude are widened unconditionally because the
// error-free transformations lose exactness in the subnormal range.
inline constexpr double tiny = 1e-280;

// Rounded-to-nearest value s of an exact quantity whose error exact - s has sign `err_sign`.
inline double lower_of(double s, double err) {
    if (std::fabs(s) < tiny) return down(s);
    return err < 0 ? down(s) : s;
}
inline double upper_of(double s, double err) {
    if (std::fabs(s) < tiny) return up(s);
    return err > 0 ? up(s) : s;
}

inline double two_sum_err(double a, double b, double s) {
    double bb = s - a;
    return (a - (s - bb)) + (b - bb);
}

inline double add_down(double a, double b) {
    double s = a + b;
    if (!std::isfinite(s)) return s;
    return lower_of(s, two_sum_err(a, b, s));
}
inline double add_up(double a, double b) {
    double s = a + b;
    if (!std::isfinite(s)) return s;
    return upper_of(s, two_sum_err(a, b, s));
}
inline double mul_down(double a, double b) {
    if (a == 0 || b == 0) return 0.0;
    double p = a * b;
    if (!std::isfinite(p)) return p;
    return lower_of(p, std::fma(a, b, -p));
}
inline double mul_up(double a, double b) {
    if (a == 0 || b == 0) return 0.0;
    double p = a * b;
    if (!std::isfinite(p)) return p;
    return upper_of(p, std::fma(a, b, -p));
}
inline double div_down(double a, double b) {
    if (a == 0) return 0.0;
    double q = a / b;
    if (!std::isfinite(q)) return q;
    double r = std::fma(-q, b, a);  // a - q*b exactly; sign(a/b - q) = sign(r)*sign(b)
    return lower_of(q, b > 0 ? r : -r);
}
inline double div_up(double a, double b) {
    if (a == 0) return 0.0;
    double q = a / b;
    if (!std::isfinite(q)) return q;
    double r = std::fma(-q, b, a);
    return upper_of(q, b > 0 ? r : -r);
}
inline double sqrt_down(double a) {
    if (a <= 0) return 0.0;
    double s = std::sqrt(a);
    return lower_of(s, std::fma(-s, s, a));
}
inline double sqrt_up(double a) {
    if (a <= 0) return 0.0;
    double s = std::sqrt(a);
    return upper_of(s, std::fma(-s, s, a));
}

}  // namespace detail

/// Closed interval [lo, hi] of reals with outward rounded endpoints.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    constexpr Interval() = default;
    constexpr Interval(double v) : lo(v), hi(v) {}  // NOLINT: implicit point interval
    Interval(double l, double h) : lo(l), hi(h) {
        require(!(l > h) && !std::isnan(l) && !std::isnan(h), "interval with lo > hi");
    }

    static Interval from_rational(const Rational& r) {
        double d = to_double(r);
        if (from_double(d) == r) return Interval(d);
        Rational dr = from_double(d);
        return dr < r ? Interval(d, detail::up(d)) : Interval(detail::down(d), d);
    }
    static Interval hull(const Rational& a, const Rational& b) {
        Interval x = from_rational(a), y = from_rational(b);
        return Interval(std::min(x.lo, y.lo), std::max(x.hi, y.hi));
    }
    static Interval entire() {
        return Interval(-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
    }

    double mid() const { return lo == hi ? lo : 0.5 * lo + 0.5 * hi; }
    double width() const { return detail::add_up(hi, -lo); }
    double rad() const { return 0.5 * width(); }
    /// Largest absolute value in the interval.
    double mag() const { return std::max(std::fabs(lo), std::fabs(hi)); }
    /// Smallest absolute value in the interval.
    double mig() const {
        if (lo <= 0 && hi >= 0) return 0.0;
        return std::min(std::fabs(lo), std::fabs(hi));
    }
    bool contains(double v) const { return lo <= v && v <= hi; }
    bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    bool contains_zero() const { return lo <= 0 && 0 <= hi; }
    bool is_point() const { return lo == hi; }

    Interval operator-() const { return Interval(-hi, -lo); }
    Interval& operator+=(const Interval& o);
    Interval& operator-=(const Interval& o);
    Interval& operator*=(const Interval& o);
    Interval& operator/=(const Interval& o);
};

inline Interval operator+(const Interval& a, const Interval& b) {
    return Interval(detail::add_down(a.lo, b.lo), detail::add_up(a.hi, b.hi));
}
inline Interval operator-(const Interval& a, const Interval& b) {
    return Interval(detail::add_down(a.lo, -b.hi), detail::add_up(a.hi, -b.lo));
}
inline Interval operator*(const Interval& a, const Interval& b) {
    if ((a.lo == 0 && a.hi == 0) || (b.lo == 0 && b.hi == 0)) return Interval(0.0);
    double lo = std::min({detail::mul_down(a.lo, b.lo), detail::mul_down(a.lo, b.hi),
                          detail::mul_down(a.hi, b.lo), detail::mul_down(a.hi, b.hi)});
    double hi = std::max({detail::mul_up(a.lo, b.lo), detail::mul_up(a.lo, b.hi),
                          detail::mul_up(a.hi, b.lo), detail::mul_up(a.hi, b.hi)});
    return Interval(lo, hi);
}
inline Interval operator/(const Interval& a, const Interval& b) {
    require(!b.contains_zero(), "interval division by an interval containing zero");
    double lo = std::min({detail::div_down(a.lo, b.lo), detail::div_down(a.lo, b.hi),
                          detail::div_down(a.hi, b.lo), detail::div_down(a.hi, b.hi)});
    double hi = std::max({detail::div_up(a.lo, b.lo), detail::div_up(a.lo, b.hi),
                          detail::div_up(a.hi, b.lo), detail::div_up(a.hi, b.hi)});
    return Interval(lo, hi);
}
inline Interval& Interval::operator+=(const Interval& o) { return *this = *this + o; }
inline Interval& Interval::operator-=(const Interval& o) { return *this = *this - o; }
inline Interval& Interval::operator*=(const Interval& o) { return *this = *this * o; }
inline Interval& Interval::operator/=(const Interval& o) { return *this = *this / o; }

inline bool operator==(const Interval& a, const Interval& b) { return a.lo == b.lo && a.hi == b.hi; }

/// Certainly a < b for every pair of members.
inline bool certainly_less(const Interval& a, const Interval& b) { return a.hi < b.lo; }
inline bool certainly_leq(const Interval& a, const Interval& b) { return a.hi <= b.lo; }

inline Interval hull(const Interval& a, const Interval& b) {
    return Interval(std::min(a.lo, b.lo), std::max(a.hi, b.hi));
}

inline Interval abs(const Interval& a) { return Interval(a.mig(), a.mag()); }

inline Interval sqr(const Interval& a) {
    Interval m = abs(a);
    return Interval(detail::mul_down(m.lo, m.lo), detail::mul_up(m.hi, m.hi));
}

inline Interval pow(const Interval& a, unsigned n) {
    if (n == 0) return Interval(1.0);
    if (n % 2 == 0) {
        Interval m = abs(a);
        double lo = 1.0, hi = 1.0;
        for (unsigned i = 0; i < n; ++i) {
            lo = detail::mul_down(lo, m.lo);
            hi = detail::mul_up(hi, m.hi);
        }
        return Interval(lo, hi);
    }
    // odd powers are monotone
    auto odd_pow_down = [n](double x) {
        double m = std::fabs(x), r = 1.0;
        for (unsigned i = 0; i < n; ++i) r = x >= 0 ? detail::mul_down(r, m) : detail::mul_up(r, m);
        return x >= 0 ? r : -r;
    };
    auto odd_pow_up = [n](double x) {
        double m = std::fabs(x), r = 1.0;
        for (unsigned i = 0; i < n; ++i) r = x >= 0 ? detail::mul_up(r, m) : detail::mul_down(r, m);
        return x >= 0 ? r : -r;
    };
    return Interval(odd_pow_down(a.lo), odd_pow_up(a.hi));
}

inline Interval sqrt(const Interval& a) {
    require(a.hi >= 0, "sqrt of a negative interval");
    return Interval(detail::sqrt_down(std::max(a.lo, 0.0)), detail::sqrt_up(a.hi));
}

inline Interval exp(const Interval& a) {
    auto lo_of = [](double x) {
        if (x == 0) return 1.0;
        return std::max(0.0, detail::down(detail::down(std::exp(x))));
    };
    auto hi_of = [](double x) {
        if (x == 0) return 1.0;
        return detail::up(detail::up(std::exp(x)));
    };
    return Interval(lo_of(a.lo), hi_of(a.hi));
}

inline Interval min(const Interval& a, const Interval& b) {
    return Interval(std::min(a.lo, b.lo), std::min(a.hi, b.hi));
}
inline Interval max(const Interval& a, const Interval& b) {
    return Interval(std::max(a.lo, b.lo), std::max(a.hi, b.hi));
}

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
    return os << '[' << a.lo << ", " << a.hi << ']';
}

using Box = std::vector<Interval>;

inline double width(const Box& b) {
    double w = 0.0;
    for (const auto& i : b) w = std::max(w, i.width());
    return w;
}

inline bool contains(const Box& outer, const Box& inner) {
    if (outer.size() != inner.size()) return false;
    for (std::size_t i = 0; i < outer.size(); ++i)
        if (!outer[i].contains(inner[i])) return false;
    return true;
}

/// Max-norm enclosure of a vector of intervals.
inline Interval norm_inf(const Box& v) {
    Interval out(0.0);
    for (const auto& x : v) out = max(out, abs(x));
    return out;
}

}  // namespace cmcert
