#pragma once

#include <algorithm>
#include <complex>
#include <vector>

#include "error.hpp"
#include "interval.hpp"
#include "matrix.hpp"
#include "rational.hpp"

namespace cmcert {

/// Univariate polynomial with rational coefficients, lowest degree first.
class UPoly {
public:
    UPoly() = default;
    explicit UPoly(std::vector<Rational> c) : c_(std::move(c)) { trim(); }
    UPoly(std::initializer_list<Rational> c) : c_(c) { trim(); }

    static UPoly monomial(const Rational& c, int deg) {
        std::vector<Rational> v(static_cast<std::size_t>(deg) + 1, Rational(0));
        v.back() = c;
        return UPoly(v);
    }

    int degree() const { return static_cast<int>(c_.size()) - 1; }
    bool is_zero() const { return c_.empty(); }
    const std::vector<Rational>& coeffs() const { return c_; }
    Rational operator[](std::size_t i) const { return i < c_.size() ? c_[i] : Rational(0); }
    Rational lead() const { return c_.empty() ? Rational(0) : c_.back(); }

    friend UPoly operator+(const UPoly& a, const UPoly& b) {
        std::vector<Rational> v(std::max(a.c_.size(), b.c_.size()), Rational(0));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
        return UPoly(v);
    }
    friend UPoly operator-(const UPoly& a, const UPoly& b) {
        std::vector<Rational> v(std::max(a.c_.size(), b.c_.size()), Rational(0));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
        return UPoly(v);
    }
    friend UPoly operator*(const UPoly& a, const UPoly& b) {
        if (a.is_zero() || b.is_zero()) return UPoly();
        std::vector<Rational> v(a.c_.size() + b.c_.size() - 1, Rational(0));
        for (std::size_t i = 0; i < a.c_.size(); ++i)
            for (std::size_t j = 0; j < b.c_.size(); ++j) v[i + j] += a.c_[i] * b.c_[j];
        return UPoly(v);
    }
    friend bool operator==(const UPoly& a, const UPoly& b) { return a.c_ == b.c_; }

    /// Quotient and remainder.
    std::pair<UPoly, UPoly> divmod(const UPoly& d) const {
        require(!d.is_zero(), "polynomial division by zero");
        std::vector<Rational> r = c_;
        int dd = d.degree();
        if (degree() < dd) return {UPoly(), *this};
        std::vector<Rational> q(static_cast<std::size_t>(degree() - dd) + 1, Rational(0));
        for (int i = degree(); i >= dd; --i) {
            Rational f = r[i] / d.lead();
            q[i - dd] = f;
            if (f == 0) continue;
            for (int j = 0; j <= dd; ++j) r[i - dd + j] -= f * d.c_[j];
        }
        r.resize(static_cast<std::size_t>(dd));
        return {UPoly(q), UPoly(r)};
    }

    UPoly monic() const {
        if (is_zero()) return *this;
        std::vector<Rational> v = c_;
        Rational l = lead();
        for (auto& x : v) x /= l;
        return UPoly(v);
    }

    UPoly derivative() const {
        if (c_.size() <= 1) return UPoly();
        std::vector<Rational> v(c_.size() - 1);
        for (std::size_t i = 1; i < c_.size(); ++i) v[i - 1] = c_[i] * static_cast<long>(i);
        return UPoly(v);
    }

    /// z^deg p(1/z).
    UPoly reversed() const {
        std::vector<Rational> v(c_.rbegin(), c_.rend());
        return UPoly(v);
    }

    Rational eval(const Rational& x) const {
        Rational out = 0;
        for (std::size_t i = c_.size(); i-- > 0;) out = out * x + c_[i];
        return out;
    }

    Interval eval(const Interval& x) const {
        Interval out(0.0);
        for (std::size_t i = c_.size(); i-- > 0;) out = out * x + Interval::from_rational(c_[i]);
        return out;
    }

    template <class C>
    C eval_complex(const C& z) const {
        C out(0);
        for (std::size_t i = c_.size(); i-- > 0;) out = out * z + C(to_long_double(c_[i]));
        return out;
    }

private:
    void trim() {
        while (!c_.empty() && c_.back() == 0) c_.pop_back();
    }
    std::vector<Rational> c_;
};

inline UPoly gcd(UPoly a, UPoly b) {
    while (!b.is_zero()) {
        auto r = a.divmod(b).second;
        a = std::move(b);
        b = std::move(r);
    }
    return a.monic();
}

inline UPoly squarefree_part(const UPoly& p) {
    if (p.degree() < 1) return p.monic();
    UPoly g = gcd(p, p.derivative());
    return p.divmod(g).first.monic();
}

/// Characteristic polynomial det(zI - A) by the Faddeev-LeVerrier recursion.
inline UPoly characteristic_polynomial(const RMatrix& a) {
    require(a.square(), "characteristic polynomial of a non-square matrix");
    std::size_t n = a.rows();
    std::vector<Rational> c(n + 1, Rational(0));
    c[n] = 1;
    RMatrix m = RMatrix(n, n);
    RMatrix id = RMatrix::identity(n);
    for (std::size_t k = 1; k <= n; ++k) {
        m = a * m + c[n - k + 1] * id;
        RMatrix am = a * m;
        Rational tr = 0;
        for (std::size_t i = 0; i < n; ++i) tr += am(i, i);
        c[n - k] = -tr / static_cast<long>(k);
    }
    return UPoly(c);
}

/// Evaluates a polynomial at a square matrix.
inline RMatrix eval_matrix(const UPoly& p, const RMatrix& a) {
    std::size_t n = a.rows();
    RMatrix out(n, n);
    for (std::size_t i = p.coeffs().size(); i-- > 0;) out = a * out + p.coeffs()[i] * RMatrix::identity(n);
    return out;
}

namespace detail {

// Aberth-Ehrlich simultaneous iteration on a squarefree polynomial.
inline std::vector<std::complex<long double>> aberth_roots(const UPoly& p) {
    using C = std::complex<long double>;
    int n = p.degree();
    std::vector<C> z;
    if (n < 1) return z;
    UPoly dp = p.derivative();
    long double radius = 0;
    for (int i = 0; i < n; ++i)
        radius = std::max(radius, std::abs(to_long_double(p[i]) / to_long_double(p.lead())));
    radius = 1 + radius;
    for (int i = 0; i < n; ++i) {
        long double ang = 2 * 3.14159265358979323846L * (i + 0.25L) / n;
        z.push_back(std::polar(0.5L * radius, ang));
    }
    for (int it = 0; it < 500; ++it) {
        long double moved = 0;
        for (int i = 0; i < n; ++i) {
            C pv = p.eval_complex(z[i]);
            C dv = dp.eval_complex(z[i]);
            if (pv == C(0)) continue;
            C ratio = pv / dv;
            C sum(0);
            for (int j = 0; j < n; ++j)
                if (j != i) sum += C(1) / (z[i] - z[j]);
            C w = ratio / (C(1) - ratio * sum);
            z[i] -= w;
            moved = std::max(moved, std::abs(w) / std::max(1.0L, std::abs(z[i])));
        }
        if (moved < 1e-30L) break;
    }
    return z;
}

}  // namespace detail

/// Exact rational roots (with multiplicity) found by numeric approximation and
/// continued-fraction reconstruction, each confirmed by exact evaluation.
inline std::vector<Rational> rational_roots(UPoly p) {
    std::vector<Rational> roots;
    if (p.degree() < 1) return roots;
    // the zero root is handled exactly
    while (p.degree() >= 1 && p[0] == 0) {
        roots.push_back(0);
        p = p.divmod(UPoly{0, 1}).first;
    }
    bool found = true;
    while (found && p.degree() >= 1) {
        found = false;
        UPoly sf = squarefree_part(p);
        for (const auto& z : detail::aberth_roots(sf)) {
            if (std::fabs(static_cast<double>(z.imag())) > 1e-6 * (1 + std::abs(z))) continue;
            long double x = z.real();
            // continued fraction convergents of x
            Integer h0 = 0, h1 = 1, k0 = 1, k1 = 0;
            long double rem = x;
            for (int step = 0; step < 40; ++step) {
                long double fl = std::floor(rem);
                if (std::fabs(fl) > 1e15L) break;
                Integer a(static_cast<long long>(fl));
                Integer h2 = a * h1 + h0, k2 = a * k1 + k0;
                h0 = h1;
                h1 = h2;
                k0 = k1;
                k1 = k2;
                Rational cand = Rational(h1) / Rational(k1);
                if (sf.eval(cand) == 0) {
                    while (p.degree() >= 1 && p.eval(cand) == 0) {
                        roots.push_back(cand);
                        p = p.divmod(UPoly{-cand, 1}).first;
                    }
                    found = true;
                    break;
                }
                long double frac = rem - fl;
                if (frac < 1e-18L) break;
                rem = 1 / frac;
            }
            if (found) break;
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

/// A certified disk {|z - center| <= radius} containing exactly one root of a
/// squarefree polynomial.
struct RootDisk {
    std::complex<long double> center;
    long double radius;
};

/// Disks for all roots of a squarefree polynomial. The radius n|p(z)/p'(z)|
/// encloses a root; disjointness of the n disks makes the enclosure one-to-one.
inline std::vector<RootDisk> root_disks(const UPoly& sf) {
    std::vector<RootDisk> out;
    int n = sf.degree();
    if (n < 1) return out;
    UPoly dp = sf.derivative();
    for (const auto& z : detail::aberth_roots(sf)) {
        // rigorous evaluation of |p(z)| and |p'(z)| with interval real and imaginary parts
        Interval re(static_cast<double>(z.real())), im(static_cast<double>(z.imag()));
        auto eval_c = [&](const UPoly& q) {
            Interval pr(0.0), pi(0.0);
            for (std::size_t i = q.coeffs().size(); i-- > 0;) {
                Interval nr = pr * re - pi * im + Interval::from_rational(q.coeffs()[i]);
                Interval ni = pr * im + pi * re;
                pr = nr;
                pi = ni;
            }
            return sqrt(sqr(pr) + sqr(pi));
        };
        Interval pv = eval_c(sf), dv = eval_c(dp);
        if (dv.lo <= 0) fail(ErrorKind::indeterminate_splitting, "root enclosure failed: derivative vanishes");
        Interval r = Interval(static_cast<double>(n)) * pv / dv;
        long double rad = static_cast<long double>(r.hi) * (1 + 1e-12L) + 1e-300L;
        out.push_back({std::complex<long double>(static_cast<double>(z.real()), static_cast<double>(z.imag())), rad});
    }
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t j = i + 1; j < out.size(); ++j)
            if (std::abs(out[i].center - out[j].center) <= out[i].radius + out[j].radius)
                fail(ErrorKind::indeterminate_splitting, "eigenvalue enclosures overlap");
    return out;
}

}  // namespace cmcert
