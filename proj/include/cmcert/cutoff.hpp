#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "error.hpp"
#include "interval.hpp"
#include "jet.hpp"
#include "rational.hpp"
#include "upoly.hpp"

namespace cmcert {

/// C^3 cutoff that is the identity on [a1, a2], ramps over widths d1 and d2,
/// and is constant a1 - d1/2 to the left and a2 + d2/2 to the right.
struct CutoffSpec {
    Rational a1, d1, a2, d2;

    void validate() const {
        require(d1 > 0 && d2 > 0, "cutoff ramp widths must be positive");
        require(a1 <= a2, "cutoff knees must satisfy a1 <= a2");
    }
    Rational lower() const { return a1 - d1 / 2; }
    Rational upper() const { return a2 + d2 / 2; }
    Interval range() const { return Interval::hull(lower(), upper()); }
};

namespace detail {

// phi(x) = x + D q(s) on a ramp, s = (x - knee) / D, s in [-1, 0] (left) or [0, 1] (right).
inline UPoly ramp_offset(bool left) {
    if (left) return UPoly{0, 0, 0, 0, Rational(5, 2), 3, 1};
    return UPoly{0, 0, 0, 0, Rational(-5, 2), 3, -1};
}

inline UPoly nth_derivative(UPoly p, int k) {
    for (int i = 0; i < k; ++i) p = p.derivative();
    return p;
}

// phi^(k) on a ramp as a polynomial in s, before the D^(1-k) scale.
inline UPoly ramp_derivative(bool left, int k) {
    UPoly p = nth_derivative(ramp_offset(left), k);
    if (k == 0 || k == 1) p = p + UPoly{1};
    return p;
}

inline Interval eval_upoly(const UPoly& p, const Interval& s, int splits) {
    if (s.is_point() || splits <= 1) return p.eval(s);
    Interval out = p.eval(Interval(s.lo, s.lo));
    double prev = s.lo;
    for (int i = 1; i <= splits; ++i) {
        double next = i == splits ? s.hi : std::clamp(s.lo + (s.hi - s.lo) * (double(i) / splits), prev, s.hi);
        out = hull(out, p.eval(Interval(prev, next)));
        prev = next;
    }
    return out;
}

}  // namespace detail

/// Exact value of the k-th derivative (k = 0..3) at a rational point.
inline Rational eval_cutoff(const CutoffSpec& c, const Rational& x, int k = 0) {
    c.validate();
    require(k >= 0 && k <= 3, "cutoff derivatives are available through order 3");
    auto ramp = [&](bool left, const Rational& knee, const Rational& d) {
        Rational s = (x - knee) / d;
        Rational v = detail::nth_derivative(detail::ramp_offset(left), k).eval(s);
        if (k == 0) return x + d * v;
        return (k == 1 ? Rational(1) : Rational(0)) + v / rpow(d, static_cast<unsigned>(k - 1));
    };
    if (x <= c.a1 - c.d1) return k == 0 ? c.lower() : Rational(0);
    if (x < c.a1) return ramp(true, c.a1, c.d1);
    if (x <= c.a2) return k == 0 ? x : Rational(k == 1 ? 1 : 0);
    if (x < c.a2 + c.d2) return ramp(false, c.a2, c.d2);
    return k == 0 ? c.upper() : Rational(0);
}

inline double eval_cutoff(const CutoffSpec& c, double x, int k = 0) {
    require(k >= 0 && k <= 3, "cutoff derivatives are available through order 3");
    double a1 = to_double(c.a1), d1 = to_double(c.d1), a2 = to_double(c.a2), d2 = to_double(c.d2);
    auto ramp = [&](bool left, double knee, double d) {
        double s = (x - knee) / d;
        const auto& q = detail::nth_derivative(detail::ramp_offset(left), k).coeffs();
        double v = 0;
        for (std::size_t i = q.size(); i-- > 0;) v = v * s + to_double(q[i]);
        if (k == 0) return x + d * v;
        return (k == 1 ? 1.0 : 0.0) + v / std::pow(d, k - 1);
    };
    if (x <= a1 - d1) return k == 0 ? a1 - d1 / 2 : 0.0;
    if (x < a1) return ramp(true, a1, d1);
    if (x <= a2) return k == 0 ? x : (k == 1 ? 1.0 : 0.0);
    if (x < a2 + d2) return ramp(false, a2, d2);
    return k == 0 ? a2 + d2 / 2 : 0.0;
}

/// Enclosure of the k-th derivative over an interval argument.
inline Interval eval_cutoff(const CutoffSpec& c, const Interval& x, int k = 0, int splits = 16) {
    c.validate();
    require(k >= 0 && k <= 3, "cutoff derivatives are available through order 3");
    Interval l0 = Interval::from_rational(c.a1 - c.d1), l1 = Interval::from_rational(c.a1);
    Interval r0 = Interval::from_rational(c.a2), r1 = Interval::from_rational(c.a2 + c.d2);
    Interval out;
    bool have = false;
    auto add = [&](const Interval& v) {
        out = have ? hull(out, v) : v;
        have = true;
    };
    auto piece = [&](double lo, double hi) -> std::optional<Interval> {
        double a = std::max(lo, x.lo), b = std::min(hi, x.hi);
        if (a > b) return std::nullopt;
        return Interval(a, b);
    };
    double inf = std::numeric_limits<double>::infinity();
    if (auto p = piece(-inf, l0.hi)) add(k == 0 ? Interval::from_rational(c.lower()) : Interval(0.0));
    if (auto p = piece(r1.lo, inf)) add(k == 0 ? Interval::from_rational(c.upper()) : Interval(0.0));
    if (auto p = piece(l1.lo, r0.hi)) add(k == 0 ? *p : Interval(k == 1 ? 1.0 : 0.0));
    auto ramp = [&](bool left, const Rational& knee, const Rational& d, const Interval& p) {
        Interval D = Interval::from_rational(d);
        Interval s = (p - Interval::from_rational(knee)) / D;
        s = left ? Interval(std::clamp(s.lo, -1.0, 0.0), std::clamp(s.hi, -1.0, 0.0))
                 : Interval(std::clamp(s.lo, 0.0, 1.0), std::clamp(s.hi, 0.0, 1.0));
        Interval v = detail::eval_upoly(detail::nth_derivative(detail::ramp_offset(left), k), s, splits);
        if (k == 0) return p + D * v;
        return Interval(k == 1 ? 1.0 : 0.0) + v / pow(D, static_cast<unsigned>(k - 1));
    };
    if (auto p = piece(l0.lo, l1.hi)) add(ramp(true, c.a1, c.d1, *p));
    if (auto p = piece(r0.lo, r1.hi)) add(ramp(false, c.a2, c.d2, *p));
    return out;
}

/// Rigorous enclosure [lower, upper] of the supremum of a function over a box:
/// lower from center evaluations, upper from the maximum over an adaptive partition.
/// Refinement stops once upper <= lower + rel_tol |lower| + abs_tol.
inline Interval sup_enclosure(const Box& domain, const std::function<Interval(const Box&)>& f,
                              double rel_tol = 1e-9, std::size_t max_evals = 200000, double abs_tol = 0) {
    struct Cell {
        double upper;
        Box box;
        bool operator<(const Cell& o) const { return upper < o.upper; }
    };
    auto center = [](const Box& b) {
        Box c;
        for (const auto& x : b) c.push_back(Interval(x.mid()));
        return c;
    };
    double lower = f(center(domain)).lo;
    std::priority_queue<Cell> open;
    open.push({f(domain).hi, domain});
    double upper = lower;
    std::size_t evals = 2;
    while (!open.empty()) {
        Cell cell = open.top();
        if (cell.upper <= lower + rel_tol * std::fabs(lower) + abs_tol || evals >= max_evals) break;
        open.pop();
        std::size_t axis = 0;
        double wmax = -1;
        for (std::size_t v = 0; v < cell.box.size(); ++v)
            if (cell.box[v].width() > wmax) {
                wmax = cell.box[v].width();
                axis = v;
            }
        double m = wmax > 0 ? cell.box[axis].mid() : 0.0;
        if (wmax <= 0 || m <= cell.box[axis].lo || m >= cell.box[axis].hi) {
            upper = std::max(upper, cell.upper);
            continue;
        }
        for (int side = 0; side < 2; ++side) {
            Box b = cell.box;
            b[axis] = side == 0 ? Interval(b[axis].lo, m) : Interval(m, b[axis].hi);
            lower = std::max(lower, f(center(b)).lo);
            open.push({std::min(cell.upper, f(b).hi), b});
            evals += 2;
        }
    }
    if (!open.empty()) upper = std::max(upper, open.top().upper);
    return Interval(lower, std::max(lower, upper));
}

namespace detail {

// Mean-value form p(m) + p'(X)(X - m), intersected with the naive Horner enclosure.
inline Interval eval_centered(const UPoly& p, const Interval& x) {
    Interval naive = p.eval(x);
    if (x.is_point()) return naive;
    Interval m(x.mid());
    Interval mv = p.eval(m) + p.derivative().eval(x) * (x - m);
    return Interval(std::max(naive.lo, mv.lo), std::min(naive.hi, mv.hi));
}

// Exact when every critical point is rational, otherwise a branch-and-bound enclosure.
inline Interval sup_abs_on(const UPoly& p, const Rational& a, const Rational& b) {
    UPoly dp = p.derivative();
    std::vector<Rational> crit = rational_roots(dp);
    Rational best = std::max(abs(p.eval(a)), abs(p.eval(b)));
    for (const Rational& r : crit)
        if (r >= a && r <= b) best = std::max(best, abs(p.eval(r)));
    if (static_cast<int>(crit.size()) == dp.degree() || dp.degree() < 1) return Interval::from_rational(best);
    Box dom{Interval::hull(a, b)};
    Interval s = sup_enclosure(dom, [&](const Box& x) { return abs(eval_centered(p, x[0])); }, 1e-13);
    Interval e = Interval::from_rational(best);
    return Interval(std::max(s.lo, e.lo), std::max(s.hi, e.hi));
}

}  // namespace detail

/// Enclosures of sup|phi'|, sup|phi''| and sup|phi'''| over the real line.
struct CutoffDerivativeBounds {
    std::array<Interval, 3> sup;  // index k-1 for the k-th derivative
};

inline CutoffDerivativeBounds cutoff_derivative_sup(const CutoffSpec& c) {
    c.validate();
    CutoffDerivativeBounds out;
    for (int k = 1; k <= 3; ++k) {
        Interval best(k == 1 ? 1.0 : 0.0);
        for (bool left : {true, false}) {
            Interval s = detail::sup_abs_on(detail::ramp_derivative(left, k), left ? -1 : 0, left ? 0 : 1);
            Interval d = Interval::from_rational(left ? c.d1 : c.d2);
            if (k > 1) s = s / pow(d, static_cast<unsigned>(k - 1));
            best = max(best, s);
        }
        out.sup[static_cast<std::size_t>(k - 1)] = best;
    }
    return out;
}

/// Upper bound on sup ||D_x (g o Phi)|| in the induced max-norm, where Phi applies
/// one cutoff per phase axis and the parameters range over `params`. Uses
/// phi' in [0, 1], so the bound is the sup of the row sums of |D_x g| over the
/// range box of Phi.
inline Interval bound_composed_nonlinearity(const JetMap& g, const std::vector<CutoffSpec>& specs,
                                            const Box& params, double rel_tol = 1e-9) {
    require(!g.empty(), "empty nonlinearity");
    std::size_t k = g.front().num_params(), m = g.front().num_phase();
    require(specs.size() == m, "one cutoff per phase axis is required");
    require(params.size() == k, "parameter box has the wrong dimension");
    Box dom = params;
    for (const auto& s : specs) dom.push_back(s.range());
    std::vector<std::vector<TaylorJet>> dg(g.size());
    bool all_zero = true;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < m; ++j) {
            dg[i].push_back(jet_derivative(g[i], k + j));
            all_zero = all_zero && dg[i].back().is_zero();
        }
    if (all_zero) return Interval(0.0);
    auto rows = [&](const Box& b) {
        Interval best(0.0);
        for (const auto& row : dg) {
            Interval s(0.0);
            for (const auto& d : row) s += abs(d.eval_interval_naive(b));
            best = max(best, s);
        }
        return best;
    };
    return sup_enclosure(dom, rows, rel_tol);
}

inline Interval bound_composed_nonlinearity(const TaylorJet& g, const std::vector<CutoffSpec>& specs,
                                            const Box& params, double rel_tol = 1e-9) {
    return bound_composed_nonlinearity(JetMap{g}, specs, params, rel_tol);
}

inline nlohmann::json to_json(const CutoffSpec& c) {
    return {{"a1", to_decimal(c.a1)}, {"d1", to_decimal(c.d1)}, {"a2", to_decimal(c.a2)}, {"d2", to_decimal(c.d2)}};
}

inline CutoffSpec cutoff_from_json(const nlohmann::json& j) {
    auto get = [&](const char* key) {
        require(j.contains(key) && j.at(key).is_string(), std::string("cutoff JSON needs string field ") + key);
        return parse_rational(j.at(key).get<std::string>());
    };
    CutoffSpec c{get("a1"), get("d1"), get("a2"), get("d2")};
    c.validate();
    return c;
}

}  // namespace cmcert
