#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bounds.hpp"
#include "conjugacy.hpp"
#include "cutoff.hpp"
#include "error.hpp"
#include "interval.hpp"
#include "jet.hpp"
#include "matrix.hpp"
#include "rational.hpp"
#include "splitting.hpp"

namespace cmcert::rdt {

template <class T>
T from_rational(const Rational& r) {
    if constexpr (std::is_same_v<T, Rational>)
        return r;
    else if constexpr (std::is_same_v<T, Interval>)
        return Interval::from_rational(r);
    else if constexpr (std::is_same_v<T, long double>)
        return to_long_double(r);
    else
        return static_cast<T>(to_double(r));
}

template <class T>
using Point = std::array<T, 2>;

/// Linearization at the origin for lambda = 0 in (u_{n-1}, u_n).
inline RMatrix lattice_linearization() { return RMatrix{{0, 1}, {-2, -3}}; }

/// (x, y) = chart (u_{n-1}, u_n), diagonalizing the linearization to diag(-1, -2).
inline RMatrix chart() { return RMatrix{{-2, -1}, {2, 2}}; }
inline RMatrix chart_inverse() { return RMatrix{{-1, Rational(-1, 2)}, {1, 1}}; }

/// The stationary lattice map at a fixed parameter, in both charts.
struct RdtSystem {
    Rational lambda;

    template <class T>
    Point<T> step_u(const Point<T>& u) const {
        T l = from_rational<T>(lambda), p = u[1];
        return {p, -(T(3) + l) * p - T(2) * u[0] - T(3) * p * p + p * p * p};
    }

    /// Exact inverse of step_u: (u_n, u_{n+1}) to (u_{n-1}, u_n).
    template <class T>
    Point<T> back_u(const Point<T>& v) const {
        T l = from_rational<T>(lambda), p = v[0];
        return {(-(T(3) + l) * p - T(3) * p * p + p * p * p - v[1]) / T(2), p};
    }

    template <class T>
    T g_c(const T& x, const T& y) const {
        T s = x + y, l = from_rational<T>(lambda);
        return -(s * s * s - T(3) * s * s - l * s);
    }
    template <class T>
    T g_u(const T& x, const T& y) const {
        return T(-2) * g_c(x, y);
    }

    template <class T>
    Point<T> step_xy(const Point<T>& p) const {
        return {-p[0] + g_c(p[0], p[1]), T(-2) * p[1] + g_u(p[0], p[1])};
    }

    template <class T>
    static Point<T> to_xy(const Point<T>& u) {
        return {T(-2) * u[0] - u[1], T(2) * u[0] + T(2) * u[1]};
    }
    template <class T>
    static Point<T> to_u(const Point<T>& p) {
        return {-p[0] - p[1] / T(2), p[0] + p[1]};
    }
};

inline RdtSystem build_rdt(const Rational& lambda) { return RdtSystem{lambda}; }

/// The map in (u_{n-1}, u_n) as jets in (lambda, u_{n-1}, u_n).
inline JetMap lattice_jets(int order, const std::vector<int>& w = {2, 1, 1}) {
    TaylorJet f1(1, 2, order, w), f2(1, 2, order, w);
    f1.set({0, 0, 1}, 1);
    f2.set({0, 0, 1}, -3);
    f2.set({0, 1, 0}, -2);
    if (f2.degree_of({1, 0, 1}) <= order) f2.set({1, 0, 1}, -1);
    if (f2.degree_of({0, 0, 2}) <= order) f2.set({0, 0, 2}, -3);
    if (f2.degree_of({0, 0, 3}) <= order) f2.set({0, 0, 3}, 1);
    return {f1, f2};
}

/// (g_c, g_u) as jets in (lambda, x, y).
inline JetMap nonlinearity_jets(const std::vector<int>& w = {1, 1, 1}) {
    int order = 3;
    for (int v : w) order = std::max(order, v + 1);
    TaylorJet q(1, 2, order, w);  // q = s^3 - 3 s^2 - lambda s with s = x + y
    for (int i = 0; i <= 3; ++i) {
        Rational b = i == 0 || i == 3 ? 1 : 3;
        q.add_to({0, i, 3 - i}, b);
    }
    for (int i = 0; i <= 2; ++i) q.add_to({0, i, 2 - i}, i == 1 ? -6 : -3);
    q.add_to({1, 1, 0}, -1);
    q.add_to({1, 0, 1}, -1);
    JetMap out{q.zero_like() - q, q + q};
    return out;
}

/// The map in the diagonal chart as jets in (lambda, x, y).
inline JetMap xy_jets(const std::vector<int>& w = {2, 1, 1}) {
    JetMap g = nonlinearity_jets(w);
    g[0].add_to({0, 1, 0}, -1);
    g[1].add_to({0, 0, 1}, -2);
    return g;
}

/// Closed form -1 + lambda + (-3 lambda - 1 + sqrt(lambda^2 + 6 lambda + 1)) / 2.
inline Interval dR_at_zero(const Interval& lambda) {
    Interval disc = sqr(lambda) + Interval(6.0) * lambda + Interval(1.0);
    if (disc.lo <= 0) fail(ErrorKind::precondition, "lambda^2 + 6 lambda + 1 must be positive");
    return Interval(-1.0) + lambda + (Interval(-3.0) * lambda - Interval(1.0) + sqrt(disc)) / Interval(2.0);
}

/// Coefficients of the closed form in powers of lambda through `order`,
/// by the binomial series of sqrt(1 + t) with t = 6 lambda + lambda^2.
inline std::vector<Rational> dR_at_zero_series(int order) {
    require(order >= 0, "series order must be nonnegative");
    std::size_t n = static_cast<std::size_t>(order) + 1;
    auto mul = [n](const std::vector<Rational>& a, const std::vector<Rational>& b) {
        std::vector<Rational> c(n, Rational(0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; i + j < n; ++j) c[i + j] += a[i] * b[j];
        return c;
    };
    std::vector<Rational> t(n, Rational(0)), tk(n, Rational(0)), root(n, Rational(0));
    if (n > 1) t[1] = 6;
    if (n > 2) t[2] = 1;
    tk[0] = 1;
    Rational binom = 1;  // binomial(1/2, k)
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) root[i] += binom * tk[i];
        binom = binom * (Rational(1, 2) - Rational(static_cast<long>(k))) / Rational(static_cast<long>(k + 1));
        tk = mul(tk, t);
    }
    std::vector<Rational> out(n, Rational(0));
    out[0] = -1 + (root[0] - 1) / 2;
    if (n > 1) out[1] = 1 + (root[1] - 3) / 2;
    for (std::size_t i = 2; i < n; ++i) out[i] = root[i] / 2;
    return out;
}

/// The same coefficients read off the solver's total-degree jet of R with
/// k_c = (3/2) x^2.
inline std::vector<Rational> dR_at_zero_from_jets(int order) {
    std::vector<int> w{1, 1, 1};
    LinearSplitting s = split_spectrum(chart() * lattice_linearization() * chart_inverse());
    SolveOptions opt;
    opt.targets = {parse_monomial("x2", 1, 1)};
    JetMap F = xy_jets(w);
    for (auto& j : F) j = j.promote(order + 1);
    ConjugacySolution sol = solve_order_by_order(F, s, {}, order + 1, opt);
    std::vector<Rational> out;
    for (int k = 0; k <= order; ++k) out.push_back(sol.R[0].coeff({k, 1}));
    return out;
}

enum class OrbitMode { existence, dynamics };

inline const char* to_string(OrbitMode m) { return m == OrbitMode::existence ? "existence" : "dynamics"; }

struct CenterEnclosure {
    Interval lambda_plus, lambda_minus;  // sqrt(1 +- E_R) sqrt(lambda) / 2
    Interval I;                          // [-lambda_+, lambda_+] outward
    Interval W_minus, W_plus;
    OrbitMode mode = OrbitMode::existence;
};

inline Interval sqrt_lambda(const Rational& lambda) {
    require(lambda >= 0, "lambda must be nonnegative");
    return sqrt(Interval::from_rational(lambda));
}

inline CenterEnclosure enclose_center_orbit(const Rational& lambda, const Interval& E_R) {
    require(E_R.lo >= 0, "E_R must be nonnegative");
    if (E_R.hi >= 1) fail(ErrorKind::precondition, "E_R must be below 1 for the orbit enclosure");
    CenterEnclosure c;
    Interval sl = sqrt_lambda(lambda);
    c.lambda_plus = sqrt(Interval(1.0) + E_R) * sl / Interval(2.0);
    c.lambda_minus = sqrt(Interval(1.0) - E_R) * sl / Interval(2.0);
    c.I = Interval(-c.lambda_plus.hi, c.lambda_plus.hi);
    c.W_plus = Interval(c.lambda_minus.lo, c.lambda_plus.hi);
    c.W_minus = -c.W_plus;
    c.mode = E_R.hi < 0.5 && lambda < Rational(4, 3) ? OrbitMode::dynamics : OrbitMode::existence;
    return c;
}

/// P_R(lambda, x) = (-1 + lambda) x - 4 x^3 and P_K(lambda, x) = -2 lambda x - 2 x^2 + 8 x^3.
template <class T>
T P_R(const T& lambda, const T& x) {
    return (T(-1) + lambda) * x - T(4) * x * x * x;
}
template <class T>
T P_K(const T& lambda, const T& x) {
    return T(-2) * lambda * x - T(2) * x * x + T(8) * x * x * x;
}

struct KuRange {
    Interval inf_formula, sup_formula;      // closed forms
    Interval inf_optimizer, sup_optimizer;  // certified optimization of P_K -+ 2 E_K lambda x
    Interval argmax;                        // 1/12 - sqrt(1 + 12 lambda + 12 E_K lambda) / 12
    bool agree = false;
    /// Both pairs enclose the same extrema, so their intersection does too.
    Interval range() const {
        return Interval(std::max(inf_formula.lo, inf_optimizer.lo), std::min(sup_formula.hi, sup_optimizer.hi));
    }
};

struct HypothesisFlags {
    bool E_R_below_half = false, E_K_at_most_nine_halves = false, lambda_below_1_43 = false,
         lambda_below_4_3 = false;
    bool all() const { return E_R_below_half && E_K_at_most_nine_halves && lambda_below_1_43 && lambda_below_4_3; }
};

inline HypothesisFlags hypothesis_flags(const Rational& lambda, const Interval& E_R, const Interval& E_K) {
    HypothesisFlags f;
    f.E_R_below_half = E_R.hi < 0.5;
    f.E_K_at_most_nine_halves = E_K.hi <= 4.5;
    f.lambda_below_1_43 = lambda < Rational(1, 43);
    f.lambda_below_4_3 = lambda < Rational(4, 3);
    return f;
}

inline KuRange enclose_ku_range(const Rational& lambda, const Interval& E_R, const Interval& E_K) {
    require(E_K.lo >= 0, "E_K must be nonnegative");
    HypothesisFlags f = hypothesis_flags(lambda, E_R, E_K);
    if (!f.all()) fail(ErrorKind::precondition, "k_u range needs E_R < 1/2, E_K <= 9/2 and lambda < 1/43");
    KuRange k;
    Interval l = Interval::from_rational(lambda), sl = sqrt_lambda(lambda);
    Interval root = sqrt(Interval(1.0) + Interval(12.0) * l + Interval(12.0) * E_K * l);
    k.sup_formula = sqr(root - Interval(1.0)) * (Interval(2.0) * root + Interval(1.0)) / Interval(216.0);
    Interval s = sqrt(Interval(1.0) + E_R) * sl;
    k.inf_formula = -(l / Interval(2.0)) * (Interval(1.0) + E_R + Interval(2.0) * E_R * s + Interval(2.0) * E_K * s);
    k.argmax = (Interval(1.0) - root) / Interval(12.0);

    CenterEnclosure c = enclose_center_orbit(lambda, E_R);
    double lp = c.lambda_plus.hi;
    Interval eks = Interval(2.0) * E_K * l;
    auto upper_pos = [&](const Box& b) { return P_K(l, b[0]) + eks * b[0]; };
    auto upper_neg = [&](const Box& b) { return P_K(l, b[0]) - eks * b[0]; };
    auto lower_pos = [&](const Box& b) { return -(P_K(l, b[0]) - eks * b[0]); };
    auto lower_neg = [&](const Box& b) { return -(P_K(l, b[0]) + eks * b[0]); };
    Box pos{Interval(0.0, lp)}, neg{Interval(-lp, 0.0)};
    auto sup = [](const Box& b, const std::function<Interval(const Box&)>& f) {
        return sup_enclosure(b, f, 1e-10, 200000, 1e-10);
    };
    k.sup_optimizer = max(sup(pos, upper_pos), sup(neg, upper_neg));
    Interval m = max(sup(pos, lower_pos), sup(neg, lower_neg));
    k.inf_optimizer = -m;
    auto close = [](const Interval& a, const Interval& b) {
        double slack = 1e-8 * std::max(a.mag(), b.mag()) + 1e-300;
        return a.lo <= b.hi + slack && b.lo <= a.hi + slack;
    };
    k.agree = close(k.sup_formula, k.sup_optimizer) && close(k.inf_formula, k.inf_optimizer) &&
              k.argmax.lo >= -lp;
    return k;
}

struct BoxCorners {
    Interval c_minus, c_plus, u_minus, u_plus;
    Box box() const { return Box{Interval(c_minus.lo, c_plus.hi), Interval(u_minus.lo, u_plus.hi)}; }
};

inline BoxCorners build_box(const Rational& lambda, const Interval& E_R, const Interval& E_K) {
    CenterEnclosure c = enclose_center_orbit(lambda, E_R);
    KuRange k = enclose_ku_range(lambda, E_R, E_K);
    Interval l = Interval::from_rational(lambda);
    Interval shift = Interval(3.0) * (Interval(1.0) + E_R) * l / Interval(8.0);
    BoxCorners b;
    b.c_minus = -c.lambda_plus + shift;
    b.c_plus = c.lambda_plus + shift;
    b.u_minus = k.inf_formula;
    b.u_plus = k.sup_formula;
    return b;
}

struct EnclosureReport {
    Rational lambda;
    Interval E_R, E_K;
    CenterEnclosure center;
    BoxCorners corners;
    Box B;
    HypothesisFlags flags;
    bool optimizer_agrees = false;
    std::string provenance;
    bool accepted() const { return flags.all() && optimizer_agrees; }
};

inline EnclosureReport enclosure_report(const Rational& lambda, const Interval& E_R, const Interval& E_K,
                                        const std::string& provenance) {
    EnclosureReport r;
    r.lambda = lambda;
    r.E_R = E_R;
    r.E_K = E_K;
    r.provenance = provenance;
    r.flags = hypothesis_flags(lambda, E_R, E_K);
    r.center = enclose_center_orbit(lambda, E_R);
    r.corners = build_box(lambda, E_R, E_K);
    r.B = r.corners.box();
    r.optimizer_agrees = enclose_ku_range(lambda, E_R, E_K).agree;
    return r;
}

inline nlohmann::json to_json(const EnclosureReport& r) {
    return {{"lambda", to_decimal(r.lambda)},
            {"E_R", to_json(r.E_R)},
            {"E_K", to_json(r.E_K)},
            {"I_lambda", to_json(r.center.I)},
            {"W_minus", to_json(r.center.W_minus)},
            {"W_plus", to_json(r.center.W_plus)},
            {"mode", to_string(r.center.mode)},
            {"lambda_c_minus", to_json(r.corners.c_minus)},
            {"lambda_c_plus", to_json(r.corners.c_plus)},
            {"lambda_u_minus", to_json(r.corners.u_minus)},
            {"lambda_u_plus", to_json(r.corners.u_plus)},
            {"flags",
             {{"E_R < 1/2", r.flags.E_R_below_half},
              {"E_K <= 9/2", r.flags.E_K_at_most_nine_halves},
              {"lambda < 1/43", r.flags.lambda_below_1_43},
              {"lambda < 4/3", r.flags.lambda_below_4_3},
              {"k_u optimizer agrees", r.optimizer_agrees}}},
            {"provenance", r.provenance}};
}

inline std::string csv_header() {
    return "lambda,W_minus_lo,W_minus_hi,W_plus_lo,W_plus_hi,lambda_c_minus,lambda_c_plus,lambda_u_minus,"
           "lambda_u_plus,E_R_below_half,E_K_at_most_nine_halves,lambda_below_1_43,lambda_below_4_3,accepted";
}

inline std::string csv_row(const EnclosureReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << to_double(r.lambda) << ',' << r.center.W_minus.lo << ',' << r.center.W_minus.hi << ','
       << r.center.W_plus.lo << ',' << r.center.W_plus.hi << ',' << r.corners.c_minus.lo << ','
       << r.corners.c_plus.hi << ',' << r.corners.u_minus.lo << ',' << r.corners.u_plus.hi << ','
       << r.flags.E_R_below_half << ',' << r.flags.E_K_at_most_nine_halves << ',' << r.flags.lambda_below_1_43
       << ',' << r.flags.lambda_below_4_3 << ',' << r.accepted();
    return os.str();
}

struct PipelineOptions {
    Rational lambda_max = parse_rational("7.6e-5");
    Rational er_coef = parse_rational("57.1");
    Rational ek_coef = parse_rational("61.9");
    Rational delta = parse_rational("1e-6");
    Rational W_lo = parse_rational("-1e-6"), W_hi = parse_rational("7.61e-5");
    Rational Wt_lo = parse_rational("-1e-7");
    Rational grid_min = parse_rational("1e-7");
    Rational L_g_target = parse_rational("0.13"), L_c_target = parse_rational("0.017");
    int grid_points = 16;
    int refine_iters = 5;
    int bisect_iters = 8;
    bool bisect = true;
    std::vector<Rational> extra_lambdas;
};

/// One certified inequality lhs (relation) rhs with its interval values.
struct Inequality {
    std::string name;
    Interval lhs;
    std::string relation;
    Interval rhs;
    bool passed = false;
};

inline Inequality check_less(const std::string& name, const Interval& lhs, const Interval& rhs, bool strict = true) {
    Inequality q{name, lhs, strict ? "<" : "<=", rhs, strict ? lhs.hi < rhs.lo : lhs.hi <= rhs.lo};
    return q;
}

inline Inequality check_flag(const std::string& name, bool ok) {
    return Inequality{name, Interval(ok ? 1.0 : 0.0), "==", Interval(1.0), ok};
}

struct Stage {
    int index = 0;
    std::string name;
    bool ran = false, passed = false;
    std::string note;
    std::vector<Inequality> checks;

    void add(Inequality q) {
        passed = passed && q.passed;
        checks.push_back(std::move(q));
    }
};

/// Stage-4 output at one parameter value.
struct RemainderCertificate {
    Rational lambda;
    BoundCertificate cert;
    std::vector<Inequality> checks;
    bool passed = false;
};

struct CertificationBundle {
    PipelineOptions options;
    Interval E_R, E_K, sqrt_lambda_max;
    std::vector<CutoffSpec> h_specs;  // per axis cutoffs of the nonlinearity
    CutoffSpec kc_spec;
    Interval L_g, L_c, L_r, L_u;
    Rational W_hi;
    std::vector<Stage> stages;
    std::vector<RemainderCertificate> remainders;
    std::vector<EnclosureReport> reports;
    bool passed = false;
    std::vector<std::string> failures;  // "stage k: inequality"
    std::optional<Rational> largest_certifiable;
    std::string note;
};

/// Rational outward enclosure of an interval: [lo, hi] exactly representable.
inline std::pair<Rational, Rational> rational_hull(const Interval& x) { return {from_double(x.lo), from_double(x.hi)}; }

/// Conjugacy jets of the diagonal chart with k_c = (3/2) x^2, weighted degree 3.
inline std::pair<ConjugacySolution, LinearSplitting> normal_form_solution() {
    LinearSplitting s = split_spectrum(RMatrix{{-1, 0}, {0, -2}});
    SolveOptions opt;
    opt.targets = {parse_monomial("x2", 1, 1)};
    return {solve_order_by_order(xy_jets(), s, {}, 3, opt), s};
}

struct PipelineContext {
    PipelineOptions opt;
    ConjugacySolution sol;
    LinearSplitting split;
    Interval E_R, E_K;
    Interval L_g, L_c;
    Rational d1, d2;
    Box core;  // [b1, b2] x [c1, c2], rational knees
};

/// Certificate for |R - P_R| <= C_R lambda |x| and |k_u - P_K| <= C_K,u lambda |x| on I_lambda,
/// checked against E_R and 2 E_K.
inline RemainderCertificate certify_remainder_at(const PipelineContext& ctx, const Rational& lambda) {
    RemainderCertificate rc;
    rc.lambda = lambda;
    CenterEnclosure c = enclose_center_orbit(lambda, ctx.E_R);
    Box U{c.I};
    FixedProblem P = fix_parameters(ctx.sol, ctx.split, {lambda}, U, BoundShape{lambda, 1});
    Interval twoEK = Interval(2.0) * ctx.E_K;
    BoundInputs in;
    in.lip = derive_lipschitz(P, ctx.L_g, ctx.L_c, {ctx.E_R.hi, twoEK.hi, 0.0});
    try {
        BoundCertificate cert = certify_bounds(P, in);
        cert = refine_with_taylor(cert, P, ctx.opt.refine_iters);
        Box ansatz{ctx.E_R, twoEK, Interval(0.0)};
        DerivativeCertificate d = derivative_bound_system(P, cert, 1, ansatz);
        cert.derivative_certs.push_back(d);
        rc.cert = cert;
    } catch (const Error& e) {
        rc.checks.push_back(check_flag(std::string("bound system solvable: ") + e.what(), false));
        rc.passed = false;
        return rc;
    }
    const BoundCertificate& cert = rc.cert;
    const Box& C1 = cert.derivative_certs.front().C;
    rc.checks.push_back(check_flag("fixed-point containment", fixed_point_contained(cert.system.A, cert.system.b, cert.C)));
    rc.checks.push_back(check_flag("derivative fixed-point containment",
                                   fixed_point_contained(cert.derivative_certs.front().system.A,
                                                         cert.derivative_certs.front().system.b, C1)));
    rc.checks.push_back(check_less("C_R <= E_R", Interval(cert.C[0].hi), ctx.E_R, false));
    rc.checks.push_back(check_less("C_K,u <= 2 E_K", Interval(cert.C[1].hi), twoEK, false));
    rc.checks.push_back(check_less("C_R,1 <= E_R", Interval(C1[0].hi), ctx.E_R, false));
    rc.checks.push_back(check_less("C_K,u,1 <= 2 E_K", Interval(C1[1].hi), twoEK, false));
    Interval l = Interval::from_rational(lambda);
    // R = P_R + remainder with |remainder| <= C_R lambda |x|; P_R decreasing gives its range at the endpoints
    TaylorJet PR = substitute_params(ctx.sol.R[0], {lambda});
    Interval poly = jet_eval_interval(PR, U, 64);
    if (jet_eval_interval(jet_derivative(PR, 0), U, 64).hi < 0) {
        Interval left = PR.eval_interval_naive(Box{Interval(c.I.lo)});
        Interval right = PR.eval_interval_naive(Box{Interval(c.I.hi)});
        poly = Interval(right.lo, left.hi);
    }
    Interval Rimg = poly + Interval(-1.0, 1.0) * Interval(cert.C[0].hi) * l * Interval(c.I.mag());
    rc.checks.push_back(check_less("d_1 <= inf R(I_lambda)", Interval::from_rational(ctx.d1), Interval(Rimg.lo), false));
    rc.checks.push_back(check_less("sup R(I_lambda) <= d_2", Interval(Rimg.hi), Interval::from_rational(ctx.d2), false));
    Box B = build_box(lambda, ctx.E_R, ctx.E_K).box();
    rc.checks.push_back(check_flag("B_lambda inside the cutoff core", contains(ctx.core, B)));
    rc.passed = true;
    for (const auto& q : rc.checks) rc.passed = rc.passed && q.passed;
    return rc;
}

/// Geometric grid of `count` points on (lo, hi], largest first.
inline std::vector<Rational> geometric_grid(const Rational& lo, const Rational& hi, int count) {
    require(lo > 0 && hi > lo && count >= 1, "grid needs 0 < lo < hi and at least one point");
    std::vector<Rational> out;
    double ratio = std::pow(to_double(lo) / to_double(hi), 1.0 / count);
    for (int i = 0; i < count; ++i) {
        if (i == 0) {
            out.push_back(hi);
            continue;
        }
        std::ostringstream os;
        os.precision(6);
        os << std::scientific << to_double(hi) * std::pow(ratio, i);
        out.push_back(parse_rational(os.str()));
    }
    return out;
}

namespace detail {

inline CertificationBundle run_pipeline(const PipelineOptions& opt, const ConjugacySolution& sol,
                                    const LinearSplitting& split) {
    CertificationBundle bn;
    bn.options = opt;
    bn.note = "E_R and E_K are uniform in lambda: coefficient times sqrt(lambda_max)";
    for (int i = 1; i <= 6; ++i) {
        Stage s;
        s.index = i;
        bn.stages.push_back(s);
    }
    bn.stages[0].name = "cutoffs";
    bn.stages[1].name = "nonlinearity bounds";
    bn.stages[2].name = "smallness";
    bn.stages[3].name = "remainder certificates";
    bn.stages[4].name = "consistency";
    bn.stages[5].name = "enclosure reports";
    auto start = [&](int i) -> Stage& {
        Stage& s = bn.stages[static_cast<std::size_t>(i - 1)];
        s.ran = true;
        s.passed = true;
        return s;
    };
    require(opt.lambda_max > 0, "lambda_max must be positive");
    require(opt.er_coef > 0 && opt.ek_coef > 0, "coefficients must be positive");
    require(opt.delta > 0, "delta must be positive");
    bn.sqrt_lambda_max = sqrt_lambda(opt.lambda_max);
    bn.E_R = Interval::from_rational(opt.er_coef) * bn.sqrt_lambda_max;
    bn.E_K = Interval::from_rational(opt.ek_coef) * bn.sqrt_lambda_max;
    bn.W_hi = std::max(opt.W_hi, opt.lambda_max);

    PipelineContext ctx;
    ctx.opt = opt;
    ctx.sol = sol;
    ctx.split = split;
    ctx.E_R = bn.E_R;
    ctx.E_K = bn.E_K;

    // stage 1: cutoffs on B_lambda_max and [d1, d2]
    bool have_cutoffs = false;
    {
        Stage& s = start(1);
        s.add(check_less("E_R < 1", bn.E_R, Interval(1.0)));
        HypothesisFlags f = hypothesis_flags(opt.lambda_max, bn.E_R, bn.E_K);
        s.add(check_flag("k_u range hypotheses (E_R < 1/2, E_K <= 9/2, lambda_max < 1/43)",
                         f.E_R_below_half && f.E_K_at_most_nine_halves && f.lambda_below_1_43));
        if (s.passed) {
            CenterEnclosure c = enclose_center_orbit(opt.lambda_max, bn.E_R);
            BoxCorners B = build_box(opt.lambda_max, bn.E_R, bn.E_K);
            auto [b1, b2] = rational_hull(Interval(B.c_minus.lo, B.c_plus.hi));
            auto [c1, c2] = rational_hull(Interval(B.u_minus.lo, B.u_plus.hi));
            Interval shift = Interval(2.0) * bn.E_R * Interval::from_rational(opt.lambda_max) * c.lambda_plus;
            Interval d1 = -c.lambda_plus - shift, d2 = c.lambda_plus + shift;
            ctx.d1 = from_double(d1.lo);
            ctx.d2 = from_double(d2.hi);
            bn.h_specs = {CutoffSpec{b1, opt.delta, b2, opt.delta}, CutoffSpec{c1, opt.delta, c2, opt.delta}};
            bn.kc_spec = CutoffSpec{ctx.d1, opt.delta, ctx.d2, opt.delta};
            for (const auto& sp : bn.h_specs) sp.validate();
            bn.kc_spec.validate();
            ctx.core = Box{Interval::hull(b1, b2), Interval::hull(c1, c2)};
            have_cutoffs = true;
        }
    }

    // stage 2: L_g and L_c
    if (have_cutoffs) {
        Stage& s = start(2);
        Box mu{Interval::hull(opt.W_lo, bn.W_hi)};
        bn.L_g = bound_composed_nonlinearity(nonlinearity_jets(), bn.h_specs, mu, 1e-9);
        TaylorJet kc(0, 1, 2);
        kc.set({2}, Rational(3, 2));
        bn.L_c = bound_composed_nonlinearity(kc, {bn.kc_spec}, Box{}, 1e-12);
        s.add(check_less("L_g < " + to_decimal(opt.L_g_target), bn.L_g, Interval::from_rational(opt.L_g_target)));
        s.add(check_less("L_c < " + to_decimal(opt.L_c_target), bn.L_c, Interval::from_rational(opt.L_c_target)));
        ctx.L_g = Interval(bn.L_g.hi);
        ctx.L_c = Interval(bn.L_c.hi);
    } else {
        bn.stages[1].note = "skipped: needs stage 1";
    }

    // stage 3: smallness at n = 3 with the certified L_g
    if (have_cutoffs) {
        Stage& s = start(3);
        CenterEnclosure c = enclose_center_orbit(opt.lambda_max, bn.E_R);
        Box dom{Interval::hull(opt.Wt_lo, opt.lambda_max), c.I};
        TaylorJet r = ctx.sol.R[0];
        r.add_to({0, 1}, 1);  // r = R - A_c x
        TaylorJet dr = jet_derivative(r, 1), dk = jet_derivative(ctx.sol.K[1], 1);
        Interval lm = Interval::from_rational(opt.lambda_max);
        bn.L_r = sup_enclosure(dom, [&](const Box& b) { return abs(dr.eval_interval_naive(b)); }, 1e-9) + bn.E_R * lm;
        bn.L_u = sup_enclosure(dom, [&](const Box& b) { return abs(dk.eval_interval_naive(b)); }, 1e-9) +
                 Interval(2.0) * bn.E_K * lm;
        LipschitzInputs L;
        L.L_g = Interval::from_rational(opt.L_g_target);
        L.L_c = Interval::from_rational(opt.L_c_target);
        L.L_r = bn.L_r;
        L.L_u = bn.L_u;
        SmallnessReport rep = check_smallness(exact_norms(ctx.split), L, 3, true, false);
        s.add(check_less("|A_u^-1| (max{1, |A_c| + L_r}^3 + L_g + L_u) < 1", rep.unstable_lhs, Interval(1.0)));
        RateReport rates = check_rate_conditions(exact_norms(ctx.split), 3);
        s.add(check_flag("rate conditions at n = 3", rates.all_pass()));
    } else {
        bn.stages[2].note = "skipped: needs stage 1";
    }

    // stage 4: remainder certificates over the grid
    std::vector<Rational> grid;
    if (opt.lambda_max > opt.grid_min) grid = geometric_grid(opt.grid_min, opt.lambda_max, opt.grid_points);
    for (const auto& e : opt.extra_lambdas)
        if (e > 0 && e <= opt.lambda_max) grid.push_back(e);
    if (have_cutoffs) {
        Stage& s = start(4);
        for (const auto& l : grid) {
            RemainderCertificate rc = certify_remainder_at(ctx, l);
            for (const auto& q : rc.checks) {
                Inequality named = q;
                named.name = "lambda = " + to_decimal(l) + ": " + q.name;
                s.add(named);
            }
            bn.remainders.push_back(std::move(rc));
        }
    } else {
        bn.stages[3].note = "skipped: needs stage 1";
    }

    // stage 5: hypotheses of the orbit and box enclosures
    {
        Stage& s = start(5);
        HypothesisFlags f = hypothesis_flags(opt.lambda_max, bn.E_R, bn.E_K);
        s.add(check_less("E_R < 1/2", bn.E_R, Interval(0.5)));
        s.add(check_less("E_K <= 9/2", bn.E_K, Interval(4.5), false));
        s.add(check_flag("lambda_max < 1/43", f.lambda_below_1_43));
        s.add(check_flag("lambda_max < 4/3", f.lambda_below_4_3));
    }

    // stage 6: enclosure reports
    if (bn.stages[4].passed && have_cutoffs) {
        Stage& s = start(6);
        for (const auto& l : grid) {
            EnclosureReport r = enclosure_report(l, bn.E_R, bn.E_K, "certificate-checked ansatz");
            s.add(check_flag("lambda = " + to_decimal(l) + ": report accepted", r.accepted()));
            bn.reports.push_back(r);
        }
    } else {
        bn.stages[5].note = "skipped: needs stage 5";
    }

    bn.passed = true;
    for (const auto& s : bn.stages) {
        bn.passed = bn.passed && s.ran && s.passed;
        for (const auto& q : s.checks)
            if (!q.passed) bn.failures.push_back("stage " + std::to_string(s.index) + " (" + s.name + "): " + q.name);
        if (!s.ran) bn.failures.push_back("stage " + std::to_string(s.index) + " (" + s.name + "): " + s.note);
    }
    return bn;
}

inline Rational round_sig(double v, int digits) {
    std::ostringstream os;
    os.precision(digits - 1);
    os << std::scientific << v;
    return parse_rational(os.str());
}

}  // namespace detail

/// Runs the full pipeline; on failure bisects lambda_max downward (geometric
/// midpoints) and records the largest value for which every stage passes.
inline CertificationBundle certify_pipeline(const PipelineOptions& opt) {
    auto [sol, split] = normal_form_solution();
    CertificationBundle bn = detail::run_pipeline(opt, sol, split);
    if (bn.passed) {
        bn.largest_certifiable = opt.lambda_max;
        return bn;
    }
    if (!opt.bisect) return bn;
    PipelineOptions o = opt;
    o.bisect = false;
    o.extra_lambdas.clear();
    double hi = to_double(opt.lambda_max), lo = hi / 1024;
    o.lambda_max = detail::round_sig(lo, 4);
    if (!detail::run_pipeline(o, sol, split).passed) return bn;
    Rational best = o.lambda_max;
    for (int i = 0; i < opt.bisect_iters; ++i) {
        double mid = std::sqrt(lo * hi);
        o.lambda_max = detail::round_sig(mid, 4);
        if (detail::run_pipeline(o, sol, split).passed) {
            lo = mid;
            best = o.lambda_max;
        } else {
            hi = mid;
        }
    }
    bn.largest_certifiable = best;
    return bn;
}

inline nlohmann::json to_json(const Inequality& q) {
    return {{"name", q.name}, {"lhs", to_json(q.lhs)}, {"relation", q.relation}, {"rhs", to_json(q.rhs)}, {"passed", q.passed}};
}

inline nlohmann::json to_json(const CertificationBundle& b) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : b.stages) {
        nlohmann::json checks = nlohmann::json::array();
        for (const auto& q : s.checks) checks.push_back(to_json(q));
        stages.push_back({{"stage", s.index}, {"name", s.name}, {"ran", s.ran}, {"passed", s.ran && s.passed},
                          {"note", s.note}, {"checks", checks}});
    }
    nlohmann::json rem = nlohmann::json::array();
    for (const auto& r : b.remainders) {
        nlohmann::json checks = nlohmann::json::array();
        for (const auto& q : r.checks) checks.push_back(to_json(q));
        nlohmann::json e{{"lambda", to_decimal(r.lambda)}, {"passed", r.passed}, {"checks", checks},
                         {"shape", "lambda |x|"}, {"conversion_factor", "1"}};
        if (!r.cert.C.empty()) e["certificate"] = to_json(r.cert);
        rem.push_back(e);
    }
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : b.reports) reps.push_back(to_json(r));
    nlohmann::json specs = nlohmann::json::array();
    for (const auto& s : b.h_specs) specs.push_back(to_json(s));
    const auto& o = b.options;
    nlohmann::json j{{"options",
                      {{"lambda_max", to_decimal(o.lambda_max)},
                       {"er_coef", to_decimal(o.er_coef)},
                       {"ek_coef", to_decimal(o.ek_coef)},
                       {"delta", to_decimal(o.delta)},
                       {"W", {to_decimal(o.W_lo), to_decimal(b.W_hi)}},
                       {"W_tilde", {to_decimal(o.Wt_lo), to_decimal(o.lambda_max)}},
                       {"grid_points", o.grid_points}}},
                     {"E_R", to_json(b.E_R)},
                     {"E_K", to_json(b.E_K)},
                     {"L_g", to_json(b.L_g)},
                     {"L_c", to_json(b.L_c)},
                     {"L_r", to_json(b.L_r)},
                     {"L_u", to_json(b.L_u)},
                     {"h_cutoffs", specs},
                     {"kc_cutoff", to_json(b.kc_spec)},
                     {"stages", stages},
                     {"remainder_certificates", rem},
                     {"reports", reps},
                     {"passed", b.passed},
                     {"failures", b.failures},
                     {"note", b.note}};
    j["largest_certifiable_lambda_max"] = b.largest_certifiable ? nlohmann::json(to_decimal(*b.largest_certifiable)) : nlohmann::json(nullptr);
    return j;
}

}  // namespace cmcert::rdt
