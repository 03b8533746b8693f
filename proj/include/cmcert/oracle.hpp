#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "rdt.hpp"

namespace cmcert::oracle {

using rdt::Point;
using rdt::RdtSystem;

enum class OrbitKind { forward, backward, period2 };
enum class Direction { forward, backward };
enum class Precision { float64, extended };

inline const char* to_string(OrbitKind k) {
    switch (k) {
        case OrbitKind::forward: return "forward";
        case OrbitKind::backward: return "backward";
        default: return "period-2";
    }
}

struct OrbitPoint {
    Point<long double> u, xy;
    long double residual = 0;  // |F(previous) - this| in the u chart
};

struct Orbit {
    Rational lambda;
    OrbitKind kind = OrbitKind::forward;
    Precision precision = Precision::float64;
    std::vector<OrbitPoint> points;
    long double residual = 0;  // max step residual, or |F^2(p) - p| for period-2 orbits
};

/// Extended precision below lambda = 1e-6, where F^2 - id degrades like lambda.
inline Precision precision_for(const Rational& lambda) {
    return abs(lambda) < Rational(1, 1000000) ? Precision::extended : Precision::float64;
}

namespace detail {

template <class T>
T norm_inf(const Point<T>& p) {
    return std::max(std::fabs(p[0]), std::fabs(p[1]));
}

template <class T>
Point<T> diff(const Point<T>& a, const Point<T>& b) {
    return {a[0] - b[0], a[1] - b[1]};
}

template <class T>
Point<long double> widen(const Point<T>& p) {
    return {static_cast<long double>(p[0]), static_cast<long double>(p[1])};
}

template <class T>
OrbitPoint make_point(const Point<T>& u, long double residual) {
    OrbitPoint o;
    o.u = widen(u);
    o.xy = RdtSystem::to_xy(o.u);
    o.residual = residual;
    return o;
}

template <class T>
using Mat2 = std::array<std::array<T, 2>, 2>;

template <class T>
Mat2<T> jacobian_u(const RdtSystem& sys, const Point<T>& u) {
    T l = rdt::from_rational<T>(sys.lambda), p = u[1];
    return {{{T(0), T(1)}, {T(-2), -(T(3) + l) - T(6) * p + T(3) * p * p}}};
}

template <class T>
Mat2<T> mul(const Mat2<T>& a, const Mat2<T>& b) {
    Mat2<T> c{};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
    return c;
}

template <class T>
Orbit iterate(const RdtSystem& sys, const Point<T>& p0, std::size_t n, Direction dir) {
    Orbit o;
    o.lambda = sys.lambda;
    o.kind = dir == Direction::forward ? OrbitKind::forward : OrbitKind::backward;
    o.precision = std::is_same_v<T, double> ? Precision::float64 : Precision::extended;
    o.points.reserve(n + 1);
    Point<T> p = p0;
    o.points.push_back(make_point(p, 0));
    for (std::size_t i = 0; i < n; ++i) {
        Point<T> q = dir == Direction::forward ? sys.step_u(p) : sys.back_u(p);
        if (!std::isfinite(q[0]) || !std::isfinite(q[1]))
            fail(ErrorKind::oracle, "orbit left the floating-point range at step " + std::to_string(i + 1));
        Point<T> check = dir == Direction::forward ? sys.back_u(q) : sys.step_u(q);
        long double r = norm_inf(widen(diff(check, p)));
        o.residual = std::max(o.residual, r);
        o.points.push_back(make_point(q, r));
        p = q;
    }
    return o;
}

template <class T>
Orbit period2(const RdtSystem& sys, const Point<T>& seed) {
    if (sys.lambda <= 0) fail(ErrorKind::oracle, "no nontrivial period-2 orbit for lambda <= 0");
    T scale = std::sqrt(rdt::from_rational<T>(sys.lambda)) / T(2);
    Point<T> p = seed;
    bool converged = false;
    T last = std::numeric_limits<T>::infinity();
    for (int it = 0; it < 60; ++it) {
        Point<T> q = sys.step_u(p), g = diff(sys.step_u(q), p);
        Mat2<T> J = mul(jacobian_u(sys, q), jacobian_u(sys, p));
        J[0][0] -= 1;
        J[1][1] -= 1;
        T det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        if (det == 0 || !std::isfinite(det)) fail(ErrorKind::oracle, "singular Newton matrix for F^2 - id");
        Point<T> d{(J[1][1] * g[0] - J[0][1] * g[1]) / det, (-J[1][0] * g[0] + J[0][0] * g[1]) / det};
        p = diff(p, d);
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) fail(ErrorKind::oracle, "Newton diverged");
        T step = norm_inf(d);
        // D(F^2) - id has an eigenvalue near 4 lambda, so steps stall at eps / lambda, not eps
        if (step <= T(64) * std::numeric_limits<T>::epsilon() * std::max(norm_inf(p), scale) ||
            (step < T(1e-6) * scale && step >= T(0.5) * last)) {
            converged = true;
            break;
        }
        last = step;
    }
    if (!converged) fail(ErrorKind::oracle, "Newton did not converge for the period-2 orbit");
    if (norm_inf(p) < T(1e-3) * scale) fail(ErrorKind::oracle, "Newton converged to the trivial fixed point at the origin");
    Point<T> q = sys.step_u(p);
    long double res = std::max(norm_inf(widen(diff(sys.step_u(q), p))), norm_inf(widen(diff(q, sys.step_u(p)))));
    if (res > 1e-12L) fail(ErrorKind::oracle, "period-2 residual above 1e-12");
    Orbit o;
    o.lambda = sys.lambda;
    o.kind = OrbitKind::period2;
    o.precision = std::is_same_v<T, double> ? Precision::float64 : Precision::extended;
    o.points = {make_point(p, 0), make_point(q, res)};
    o.residual = res;
    return o;
}

}  // namespace detail

/// K-image of a center coordinate under the normal-form polynomials, in the u chart.
inline Point<long double> center_point(const Rational& lambda, long double x) {
    long double l = to_long_double(lambda);
    return RdtSystem::to_u(Point<long double>{x + 1.5L * x * x, rdt::P_K(l, x)});
}

/// Local inverse of x + (3/2) x^2 near 0.
inline long double center_preimage(long double X) { return (-1 + std::sqrt(1 + 6 * X)) / 3; }

inline Orbit iterate_map(const RdtSystem& sys, const Point<long double>& p0, std::size_t n, Direction dir) {
    if (precision_for(sys.lambda) == Precision::extended) return detail::iterate<long double>(sys, p0, n, dir);
    return detail::iterate<double>(sys, Point<double>{static_cast<double>(p0[0]), static_cast<double>(p0[1])}, n, dir);
}

/// Newton on F^2(p) = p in the u chart; the default seed is the K-image of sqrt(lambda)/2.
inline Orbit find_period2(const RdtSystem& sys, std::optional<Point<long double>> seed = std::nullopt) {
    if (sys.lambda <= 0) fail(ErrorKind::oracle, "no nontrivial period-2 orbit for lambda <= 0");
    Point<long double> s = seed ? *seed : center_point(sys.lambda, std::sqrt(to_long_double(sys.lambda)) / 2);
    if (precision_for(sys.lambda) == Precision::extended) return detail::period2<long double>(sys, s);
    return detail::period2<double>(sys, Point<double>{static_cast<double>(s[0]), static_cast<double>(s[1])});
}

/// Eigenvalues of D(F^2) at the first orbit point.
inline std::array<std::complex<long double>, 2> period2_multipliers(const RdtSystem& sys, const Orbit& o) {
    require(o.kind == OrbitKind::period2 && o.points.size() == 2, "needs a period-2 orbit");
    auto J = detail::mul(detail::jacobian_u(sys, o.points[1].u), detail::jacobian_u(sys, o.points[0].u));
    long double tr = J[0][0] + J[1][1], det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    std::complex<long double> root = std::sqrt(std::complex<long double>(tr * tr / 4 - det));
    return {tr / 2 - root, tr / 2 + root};
}

struct VerificationResult {
    bool passed = false;
    bool vacuous = false;
    std::vector<long double> box_margins;     // per point: min distance to the faces of B_lambda
    std::vector<long double> window_margins;  // per point: min distance to the ends of W_- or W_+
    std::vector<long double> center_coords;
    std::string detail;
};

inline long double margin_in(const Interval& I, long double v) { return std::min(v - I.lo, I.hi - v); }

inline VerificationResult verify_enclosure(const Orbit& orbit, const rdt::EnclosureReport& report) {
    if (orbit.lambda != report.lambda) fail(ErrorKind::precondition, "orbit and enclosure are for different lambda");
    VerificationResult v;
    bool trivial = std::all_of(orbit.points.begin(), orbit.points.end(),
                               [](const OrbitPoint& p) { return p.xy[0] == 0 && p.xy[1] == 0; });
    if (report.lambda == 0 && trivial) {
        v.passed = v.vacuous = true;
        v.detail = "lambda = 0: the orbit is the origin";
        return v;
    }
    v.passed = !orbit.points.empty();
    std::ostringstream msg;
    for (std::size_t i = 0; i < orbit.points.size(); ++i) {
        const auto& p = orbit.points[i];
        long double m = std::min(margin_in(report.B[0], p.xy[0]), margin_in(report.B[1], p.xy[1]));
        long double x = center_preimage(p.xy[0]);
        const Interval& W = x >= 0 ? report.center.W_plus : report.center.W_minus;
        long double w = margin_in(W, x);
        v.box_margins.push_back(m);
        v.window_margins.push_back(w);
        v.center_coords.push_back(x);
        if (!(m > 0)) {
            v.passed = false;
            msg << "point " << i << " outside B_lambda (margin " << static_cast<double>(m) << "); ";
        }
        if (!(w > 0)) {
            v.passed = false;
            msg << "point " << i << " center coordinate outside " << (x >= 0 ? "W_+" : "W_-") << " (margin "
                << static_cast<double>(w) << "); ";
        }
    }
    if (orbit.kind == OrbitKind::period2 && v.center_coords.size() == 2 && v.center_coords[0] * v.center_coords[1] >= 0) {
        v.passed = false;
        msg << "orbit does not alternate between W_- and W_+; ";
    }
    v.detail = v.passed ? "inside with positive margins" : msg.str();
    return v;
}

struct HeteroclinicOptions {
    std::size_t steps = 10000;
    long double origin_tol = 1e-10L;
    long double pair_tol = 1e-8L;
};

struct HeteroclinicTrace {
    Orbit period2, forward, backward;
    long double start_center = 0;  // midpoint of the center coordinates of the period-2 pair
    Point<long double> start_xy{};
    long double shooting_offset = 0;  // |p_0 - K(midpoint)| for the shot forward orbit
    std::optional<std::size_t> forward_hit, backward_hit;
    long double forward_final = 0, backward_distance = 0;
    bool forward_inside = false, backward_inside = false;
    bool passed() const { return forward_hit && backward_hit && forward_inside && backward_inside; }
};

namespace detail {

inline bool inside(const Box& B, const Point<long double>& xy) {
    return B[0].contains(static_cast<double>(xy[0])) && B[1].contains(static_cast<double>(xy[1]));
}

/// Orbit p_0..p_N with p_N = K(xN) built by exact backward steps.
inline std::vector<Point<long double>> shoot(const RdtSystem& sys, long double xN, std::size_t N) {
    std::vector<Point<long double>> pts(N + 1);
    pts[N] = center_point(sys.lambda, xN);
    for (std::size_t i = N; i > 0; --i) pts[i - 1] = sys.back_u(pts[i]);
    return pts;
}

inline long double shoot_center(const RdtSystem& sys, long double xN, std::size_t N) {
    Point<long double> p = center_point(sys.lambda, xN);
    for (std::size_t i = 0; i < N; ++i) p = sys.back_u(p);
    return RdtSystem::to_xy(p)[0];
}

}  // namespace detail

/// Forward orbit of length N on the center manifold through the point whose first
/// (x, y) coordinate is X0. Direct forward iteration amplifies rounding by the
/// unstable multiplier -2, so the orbit is shot backward from K(x_{N+pad}); the
/// padding steps damp the transverse error of the polynomial K before step N.
inline Orbit forward_on_manifold(const RdtSystem& sys, long double X0, std::size_t N, std::size_t pad = 200) {
    std::size_t M = N + pad;
    long double l = to_long_double(sys.lambda);
    long double x0 = center_preimage(X0);
    for (std::size_t i = 0; i < M; ++i) x0 = rdt::P_R(l, x0);
    long double f0 = detail::shoot_center(sys, x0, M) - X0;
    long double x1 = x0 == 0 ? 1e-30L : x0 * (1 + 1e-6L), f1 = detail::shoot_center(sys, x1, M) - X0;
    if (f0 == 0) {
        x1 = x0;
        f1 = 0;
    }
    for (int it = 0; it < 80 && f1 != 0 && f1 != f0; ++it) {
        long double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = detail::shoot_center(sys, x1, M) - X0;
        if (std::fabs(f1) <= 8 * std::numeric_limits<long double>::epsilon() * std::fabs(X0)) break;
    }
    if (!std::isfinite(f1)) fail(ErrorKind::oracle, "shooting for the forward orbit diverged");
    std::vector<Point<long double>> pts = detail::shoot(sys, x1, M);
    Orbit o;
    o.lambda = sys.lambda;
    o.kind = OrbitKind::forward;
    o.precision = Precision::extended;
    for (std::size_t n = 0; n <= N; ++n) {
        long double r = n == 0 ? 0 : detail::norm_inf(detail::diff(sys.step_u(pts[n - 1]), pts[n]));
        o.residual = std::max(o.residual, r);
        o.points.push_back(detail::make_point(pts[n], r));
    }
    return o;
}

/// Heteroclinic trace from the K-image of the midpoint between the period-2 points.
inline HeteroclinicTrace trace_heteroclinic(const RdtSystem& sys, const Box& B, const HeteroclinicOptions& opt = {}) {
    require(opt.steps >= 1, "at least one step is required");
    HeteroclinicTrace t;
    t.period2 = find_period2(sys);
    long double a = center_preimage(t.period2.points[0].xy[0]), b = center_preimage(t.period2.points[1].xy[0]);
    t.start_center = (a + b) / 2;
    Point<long double> start = center_point(sys.lambda, t.start_center);
    t.start_xy = RdtSystem::to_xy(start);

    t.backward = iterate_map(sys, start, opt.steps, Direction::backward);
    t.backward_inside = true;
    t.backward_distance = std::numeric_limits<long double>::infinity();
    std::size_t keep = t.backward.points.size();
    for (std::size_t n = 0; n < t.backward.points.size(); ++n) {
        const auto& q = t.backward.points[n].xy;
        t.backward_inside = t.backward_inside && detail::inside(B, q);
        t.backward_distance = std::min(detail::norm_inf(detail::diff(q, t.period2.points[0].xy)),
                                       detail::norm_inf(detail::diff(q, t.period2.points[1].xy)));
        if (t.backward_distance < opt.pair_tol) {
            t.backward_hit = n;
            keep = n + 1;
            break;
        }
    }
    t.backward.points.resize(keep);

    if (detail::norm_inf(t.start_xy) < opt.origin_tol) {
        t.forward = iterate_map(sys, start, 0, Direction::forward);
    } else {
        t.forward = forward_on_manifold(sys, t.start_xy[0], opt.steps);
    }
    t.shooting_offset = detail::norm_inf(detail::diff(t.forward.points.front().xy, t.start_xy));
    t.forward_inside = true;
    for (std::size_t n = 0; n < t.forward.points.size(); ++n) {
        const auto& q = t.forward.points[n].xy;
        t.forward_inside = t.forward_inside && detail::inside(B, q);
        t.forward_final = detail::norm_inf(q);
        if (t.forward_final < opt.origin_tol) {
            t.forward_hit = n;
            t.forward.points.resize(n + 1);
            break;
        }
    }
    return t;
}

inline std::string orbit_csv(const Orbit& o) {
    std::ostringstream os;
    os.precision(21);
    os << "step,u_prev,u_cur,x,y,residual\n";
    for (std::size_t n = 0; n < o.points.size(); ++n) {
        const auto& p = o.points[n];
        os << n << ',' << p.u[0] << ',' << p.u[1] << ',' << p.xy[0] << ',' << p.xy[1] << ',' << p.residual << '\n';
    }
    return os.str();
}

inline nlohmann::json to_json(const VerificationResult& v) {
    std::vector<double> bm, wm, cc;
    for (auto m : v.box_margins) bm.push_back(static_cast<double>(m));
    for (auto m : v.window_margins) wm.push_back(static_cast<double>(m));
    for (auto m : v.center_coords) cc.push_back(static_cast<double>(m));
    return {{"passed", v.passed}, {"vacuous", v.vacuous}, {"box_margins", bm}, {"window_margins", wm},
            {"center_coordinates", cc}, {"detail", v.detail}};
}

inline nlohmann::json summary_json(const Orbit& o) {
    return {{"lambda", to_decimal(o.lambda)},
            {"kind", to_string(o.kind)},
            {"precision", o.precision == Precision::extended ? "extended" : "double"},
            {"points", o.points.size()},
            {"residual", static_cast<double>(o.residual)}};
}

inline nlohmann::json to_json(const HeteroclinicTrace& t) {
    auto hit = [](const std::optional<std::size_t>& h) { return h ? nlohmann::json(*h) : nlohmann::json(nullptr); };
    return {{"start_center", static_cast<double>(t.start_center)},
            {"start_xy", {static_cast<double>(t.start_xy[0]), static_cast<double>(t.start_xy[1])}},
            {"shooting_offset", static_cast<double>(t.shooting_offset)},
            {"forward", summary_json(t.forward)},
            {"backward", summary_json(t.backward)},
            {"forward_hit_step", hit(t.forward_hit)},
            {"backward_hit_step", hit(t.backward_hit)},
            {"forward_final_norm", static_cast<double>(t.forward_final)},
            {"backward_final_distance", static_cast<double>(t.backward_distance)},
            {"forward_inside", t.forward_inside},
            {"backward_inside", t.backward_inside},
            {"passed", t.passed()}};
}

}  // namespace cmcert::oracle
