#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "conjugacy.hpp"
#include "cutoff.hpp"
#include "error.hpp"
#include "interval.hpp"
#include "jet.hpp"
#include "matrix.hpp"
#include "splitting.hpp"

namespace cmcert {

/// Remainder shape w(x) = mu ||x||^p on the center block; the generic
/// certificate uses mu = 1 and p = n.
struct BoundShape {
    Rational mu = 1;
    int p = 2;
};

/// Global derivative bounds of the cut-off problem. Only upper endpoints are used.
struct LipschitzInputs {
    Interval L_g{0.0}, L_c{0.0}, L_u{0.0}, L_s{0.0}, L_r{0.0}, L_inv{1.0};
};

struct BoundInputs {
    LipschitzInputs lip;
    Interval C_F{0.0}, C_F1{0.0};    // remainder of F beyond its polynomial part, value and first derivative
    Interval C_Kc{0.0}, C_Kc1{0.0};  // remainder of the chosen k_c
};

/// A conjugacy frozen at fixed parameter values. All maps are exact
/// polynomials in split coordinates.
struct FixedProblem {
    std::size_t dim = 0, dim_c = 0, dim_u = 0, dim_s = 0;
    std::vector<Rational> params;
    JetMap PF;  // F - A, in all phase variables
    JetMap Pk;  // K - iota, in the center variables
    JetMap Pr;  // R - A_c x
    JetMap Tp;  // polynomial inverse of R
    JetMap Q1;  // F(K_poly) - K_poly(R_poly), exact
    RMatrix A, A_c;
    ExactNorms norms;
    BoundShape shape;
    Box U;
};

namespace detail {

inline int poly_degree(const TaylorJet& p) {
    int d = 0;
    for (const auto& [e, c] : p.terms()) {
        int s = 0;
        for (int x : e) s += x;
        d = std::max(d, s);
    }
    return d;
}

inline int poly_degree(const JetMap& m) {
    int d = 0;
    for (const auto& j : m) d = std::max(d, poly_degree(j));
    return d;
}

inline JetMap with_order(const JetMap& m, int order) {
    JetMap out;
    for (const auto& j : m) out.push_back(j.max_order() >= order ? j.truncate(order) : j.promote(order));
    return out;
}

inline JetMap substitute(const JetMap& m, const std::vector<Rational>& params) {
    JetMap out;
    for (const auto& j : m) out.push_back(substitute_params(j, params));
    return out;
}

inline JetMap linear_map(const RMatrix& M, std::size_t vars, int order) {
    JetMap out;
    for (std::size_t i = 0; i < M.rows(); ++i) {
        TaylorJet j(0, vars, order);
        for (std::size_t v = 0; v < M.cols(); ++v) {
            Exponents e(vars, 0);
            e[v] = 1;
            if (M(i, v) != 0) j.set(e, M(i, v));
        }
        out.push_back(j);
    }
    return out;
}

inline JetMap sub(const JetMap& a, const JetMap& b) {
    int order = std::max(a.front().max_order(), b.front().max_order());
    JetMap A = with_order(a, order), B = with_order(b, order), out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(A[i] - B[i]);
    return out;
}

inline JetMap add(const JetMap& a, const JetMap& b) {
    int order = std::max(a.front().max_order(), b.front().max_order());
    JetMap A = with_order(a, order), B = with_order(b, order), out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(A[i] + B[i]);
    return out;
}

// Exact composition of polynomial maps.
inline JetMap compose_exact(const JetMap& outer, const JetMap& inner) {
    int d = std::max(1, poly_degree(outer)) * std::max(1, poly_degree(inner));
    return jet_compose(with_order(outer, std::max(d, outer.front().max_order())), with_order(inner, d), d);
}

// Peels q factors off every monomial: |p(x)| <= ||x||^q sum |cofactor(x)|.
inline std::vector<TaylorJet> peel(const TaylorJet& p, int q) {
    std::map<Exponents, TaylorJet> groups;
    for (const auto& [e, c] : p.terms()) {
        Exponents nu(e.size(), 0), rho = e;
        int left = q;
        for (std::size_t v = 0; v < e.size() && left > 0; ++v) {
            int t = std::min(left, e[v]);
            nu[v] = t;
            rho[v] -= t;
            left -= t;
        }
        if (left > 0) fail(ErrorKind::precondition, "polynomial does not vanish to the order of the bound shape");
        auto it = groups.find(nu);
        if (it == groups.end()) it = groups.emplace(nu, TaylorJet(0, p.num_phase(), p.max_order())).first;
        it->second.add_to(rho, c);
    }
    std::vector<TaylorJet> out;
    for (auto& [nu, j] : groups) out.push_back(j);
    return out;
}

inline Interval sup_of(const Box& dom, const std::function<Interval(const Box&)>& f) {
    return sup_enclosure(dom, f, 1e-7, 4000);
}

inline Interval row_peeled(const std::vector<std::vector<TaylorJet>>& rows, const Box& b) {
    Interval best(0.0);
    for (const auto& r : rows) {
        Interval s(0.0);
        for (const auto& j : r) s += abs(j.eval_interval_naive(b));
        best = max(best, s);
    }
    return best;
}

// sup over dom of max over `rows` of sum_{j in cols} |d_j p_i|
inline Interval sup_row_sum_D(const JetMap& p, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                              const Box& dom) {
    std::vector<std::vector<TaylorJet>> d;
    bool zero = true;
    for (std::size_t i : rows) {
        d.emplace_back();
        for (std::size_t j : cols) {
            d.back().push_back(jet_derivative(p[i], j));
            zero = zero && d.back().back().is_zero();
        }
    }
    if (zero || rows.empty()) return Interval(0.0);
    return sup_of(dom, [&](const Box& b) { return row_peeled(d, b); });
}

inline Interval sup_row_sum_D2(const JetMap& p, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                               const Box& dom) {
    std::vector<std::vector<TaylorJet>> d;
    bool zero = true;
    for (std::size_t i : rows) {
        d.emplace_back();
        for (std::size_t j : cols)
            for (std::size_t l : cols) {
                d.back().push_back(jet_derivative(jet_derivative(p[i], j), l));
                zero = zero && d.back().back().is_zero();
            }
    }
    if (zero || rows.empty()) return Interval(0.0);
    return sup_of(dom, [&](const Box& b) { return row_peeled(d, b); });
}

// sup over U of max_i sum |cofactors of p_i| after peeling q factors
inline Interval sup_peeled(const JetMap& p, const std::vector<std::size_t>& rows, int q, const Box& U) {
    std::vector<std::vector<TaylorJet>> groups;
    bool zero = true;
    for (std::size_t i : rows) {
        groups.push_back(peel(p[i], q));
        zero = zero && groups.back().empty();
    }
    if (zero || rows.empty()) return Interval(0.0);
    return sup_of(U, [&](const Box& b) { return row_peeled(groups, b); });
}

// sup over U of max_i sum_j |peeled cofactors of d_j p_i|
inline Interval sup_peeled_D(const JetMap& p, const std::vector<std::size_t>& rows, std::size_t vars, int q,
                             const Box& U) {
    std::vector<std::vector<TaylorJet>> groups;
    bool zero = true;
    for (std::size_t i : rows) {
        groups.emplace_back();
        for (std::size_t j = 0; j < vars; ++j)
            for (auto& g : peel(jet_derivative(p[i], j), q)) groups.back().push_back(g);
        zero = zero && groups.back().empty();
    }
    if (zero || rows.empty()) return Interval(0.0);
    return sup_of(U, [&](const Box& b) { return row_peeled(groups, b); });
}

inline Box image_box(const JetMap& m, const Box& U) {
    Box out;
    for (const auto& j : m) out.push_back(j.is_zero() ? Interval(0.0) : jet_eval_interval(j, U, 16));
    return out;
}

inline std::vector<std::size_t> range(std::size_t start, std::size_t len) {
    std::vector<std::size_t> v;
    for (std::size_t i = 0; i < len; ++i) v.push_back(start + i);
    return v;
}

inline Interval pos(const Rational& r) { return Interval::from_rational(r); }

inline double rmax(const Box& U) {
    double r = 0;
    for (const auto& x : U) r = std::max(r, x.mag());
    return r;
}

}  // namespace detail

/// Freezes the parameters of a solved conjugacy and assembles the exact
/// polynomial data the certificate needs. `F_full` is the whole polynomial
/// map in original coordinates; without it the solver's truncated jet of F is
/// used and C_F must cover the rest.
inline FixedProblem fix_parameters(const ConjugacySolution& sol, const LinearSplitting& s,
                                   const std::vector<Rational>& params, const Box& U, const BoundShape& shape,
                                   const JetMap& F_full = {}) {
    require(params.size() == sol.num_params, "wrong number of parameter values");
    require(sol.dim_c >= 1, "the certificate needs a nontrivial center block");
    require(U.size() == sol.dim_c, "box dimension must equal the center dimension");
    require(shape.mu > 0 && shape.p >= 1, "bound shape needs mu > 0 and p >= 1");
    for (const auto& x : U) {
        require(std::isfinite(x.lo) && std::isfinite(x.hi), "the box must be bounded");
        require(x.contains(0.0), "the box must contain the origin");
    }
    FixedProblem P;
    P.dim = sol.dim;
    P.dim_c = sol.dim_c;
    P.dim_u = sol.dim_u;
    P.dim_s = sol.dim_s;
    P.params = params;
    P.A = s.A_split;
    P.A_c = s.A_c();
    P.norms = exact_norms(s);
    P.shape = shape;
    P.U = U;

    JetMap F = detail::substitute(F_full.empty() ? sol.F : to_split_coordinates(F_full, s), params);
    JetMap K = detail::substitute(sol.K, params);
    JetMap R = detail::substitute(sol.R, params);
    P.Tp = detail::substitute(sol.T, params);
    int of = F.front().max_order(), oc = K.front().max_order();
    P.PF = detail::sub(F, detail::linear_map(P.A, P.dim, of));
    JetMap iota;
    for (std::size_t i = 0; i < P.dim; ++i) {
        TaylorJet j(0, P.dim_c, oc);
        if (i < P.dim_c) {
            Exponents e(P.dim_c, 0);
            e[i] = 1;
            j.set(e, 1);
        }
        iota.push_back(j);
    }
    P.Pk = detail::sub(K, iota);
    P.Pr = detail::sub(R, detail::linear_map(P.A_c, P.dim_c, oc));
    P.Q1 = detail::sub(detail::compose_exact(F, K), detail::compose_exact(K, R));
    return P;
}

/// Polynomial quantities of the certificate that do not depend on C.
struct BoundTerms {
    Interval r_U;
    Box E_K, E_R;                        // enclosures of K and R along the remainder segment
    std::array<Interval, 3> C_P, C_DP;   // per block: c, u, s
    std::array<Interval, 3> CQF, CQK;    // sup ||D P_F|| on E_K and ||D P_K|| on E_R
    std::array<Interval, 3> D2F, D2K;
    Interval delta_K, delta_R;           // sup ||D K_poly||, ||D R_poly|| on U
    Interval growth_R_poly, growth_K_poly, growth_T_poly;  // sup ||poly(x)|| / ||x|| on U
    Interval inverse_defect;             // sup ||x - R_poly(T_poly(x))|| / ||x|| on U
};

inline BoundTerms compute_bound_terms(const FixedProblem& P, const BoundInputs& in) {
    using namespace detail;
    BoundTerms t;
    const Box& U = P.U;
    double r = rmax(U);
    t.r_U = Interval(r);
    int p = P.shape.p;
    Interval mu = pos(P.shape.mu);
    std::array<std::vector<std::size_t>, 3> blocks{range(0, P.dim_c), range(P.dim_c, P.dim_u),
                                                   range(P.dim_c + P.dim_u, P.dim_s)};
    std::vector<std::size_t> all = range(0, P.dim), center = range(0, P.dim_c);

    // a priori radii of h_K and h_R on U from the Lipschitz constants
    Box Kimg = image_box(P.Pk, U);
    Box Rimg = image_box(P.Pr, U);
    t.E_K.resize(P.dim);
    for (std::size_t i = 0; i < P.dim; ++i) {
        Interval base = Kimg[i] + (i < P.dim_c ? U[i] : Interval(0.0));
        double rho;
        if (i < P.dim_c)
            rho = (in.C_Kc * mu * pow(Interval(r), static_cast<unsigned>(p))).hi;
        else {
            Interval L = i < P.dim_c + P.dim_u ? in.lip.L_u : in.lip.L_s;
            rho = (L * Interval(r) + Interval(Kimg[i].mag())).hi;
        }
        t.E_K[i] = base + Interval(-rho, rho);
    }
    t.E_R.resize(P.dim_c);
    for (std::size_t i = 0; i < P.dim_c; ++i) {
        Interval lin(0.0);
        for (std::size_t j = 0; j < P.dim_c; ++j) lin += pos(P.A_c(i, j)) * U[j];
        double rho = (in.lip.L_r * Interval(r) + Interval(Rimg[i].mag())).hi;
        t.E_R[i] = lin + Rimg[i] + Interval(-rho, rho);
    }

    for (std::size_t b = 0; b < 3; ++b) {
        t.C_P[b] = sup_peeled(P.Q1, blocks[b], p, U) / mu;
        t.C_DP[b] = sup_peeled_D(P.Q1, blocks[b], P.dim_c, p - 1, U) / mu;
        t.CQF[b] = sup_row_sum_D(P.PF, blocks[b], all, t.E_K);
        t.CQK[b] = sup_row_sum_D(P.Pk, blocks[b], center, t.E_R);
        t.D2F[b] = sup_row_sum_D2(P.PF, blocks[b], all, t.E_K);
        t.D2K[b] = sup_row_sum_D2(P.Pk, blocks[b], center, t.E_R);
    }

    JetMap Kfull = P.Pk, Rfull = add(P.Pr, linear_map(P.A_c, P.dim_c, P.Pr.front().max_order()));
    for (std::size_t i = 0; i < P.dim_c; ++i) {
        Exponents e(P.dim_c, 0);
        e[i] = 1;
        Kfull[i].add_to(e, 1);
    }
    t.delta_K = sup_row_sum_D(Kfull, all, center, U);
    t.delta_R = sup_row_sum_D(Rfull, center, center, U);
    t.growth_K_poly = sup_peeled(Kfull, all, 1, U);
    t.growth_R_poly = sup_peeled(Rfull, center, 1, U);
    t.growth_T_poly = sup_peeled(P.Tp, center, 1, U);
    JetMap RT = compose_exact(Rfull, P.Tp);
    JetMap id = linear_map(RMatrix::identity(P.dim_c), P.dim_c, RT.front().max_order());
    t.inverse_defect = sup_peeled(sub(id, RT), center, 1, U);
    return t;
}

/// Growth factors gamma with ||map(x)|| <= gamma ||x|| on U, and derivative bounds.
struct Growth {
    Interval R, K, T, DR, DT;
};

inline Growth crude_growth(const FixedProblem& P, const BoundInputs& in) {
    Growth g;
    g.R = detail::pos(P.norms.Ac) + in.lip.L_r;
    g.K = Interval(1.0) + in.lip.L_c;
    g.T = in.lip.L_inv;
    g.DR = g.R;
    g.DT = in.lip.L_inv;
    return g;
}

inline Interval upper_min(const Interval& a, const Interval& b) { return a.hi <= b.hi ? a : b; }

/// Growth factors improved with the polynomial parts and the current certificate.
inline Growth refined_growth(const FixedProblem& P, const BoundInputs& in, const BoundTerms& t, const Box& C,
                             const std::optional<Box>& C1 = std::nullopt) {
    Growth g = crude_growth(P, in);
    Interval mu = detail::pos(P.shape.mu);
    Interval rp1 = pow(t.r_U, static_cast<unsigned>(P.shape.p - 1));
    Interval CR(C[0].hi), CK(C[1].hi + C[2].hi + in.C_Kc.hi);
    g.R = upper_min(g.R, t.growth_R_poly + CR * mu * rp1);
    g.K = upper_min(g.K, t.growth_K_poly + CK * mu * rp1);
    Interval tpoly = t.growth_T_poly;
    Interval tdef = in.lip.L_inv * (t.inverse_defect + CR * mu * pow(tpoly, static_cast<unsigned>(P.shape.p)) * rp1);
    g.T = upper_min(g.T, tpoly + tdef);
    if (C1) {
        g.DR = upper_min(g.DR, t.delta_R + Interval((*C1)[0].hi) * mu * rp1);
    }
    return g;
}

/// The 3x3 system C -> A C + b for (C_R, C_K,u, C_K,s).
struct BoundSystem {
    Matrix<Interval> A{3, 3};
    Box b = Box(3, Interval(0.0));
};

// Every entry is a bound on a nonnegative quantity; rounding may leave a subnormal negative lower end.
inline void clamp_nonnegative(BoundSystem& S) {
    auto c = [](Interval& x) { x = Interval(std::max(x.lo, 0.0), std::max(x.hi, 0.0)); };
    for (std::size_t i = 0; i < 3; ++i) {
        c(S.b[i]);
        for (std::size_t j = 0; j < 3; ++j) c(S.A(i, j));
    }
}

/// Assembles the value system. Empty blocks produce zero rows.
inline BoundSystem assemble_bound_system(const FixedProblem& P, const BoundInputs& in, const BoundTerms& t,
                                         const Growth& g) {
    using detail::pos;
    BoundSystem S;
    unsigned p = static_cast<unsigned>(P.shape.p);
    Interval gR = pow(g.R, p), gK = pow(g.K, p), gT = pow(g.T, p);
    Interval Ac = pos(P.norms.Ac), Aui = pos(P.norms.Au_inv), As = pos(P.norms.As);
    Interval Ckc(in.C_Kc.hi), F = in.C_F * gK;
    if (P.dim_c) {
        S.A(0, 0) = t.CQK[0];
        S.A(0, 1) = t.CQF[0];
        S.A(0, 2) = t.CQF[0];
        S.b[0] = Ac * Ckc + t.C_P[0] + t.CQF[0] * Ckc + F + Ckc * gR;
    }
    if (P.dim_u) {
        S.A(1, 0) = Aui * t.CQK[1];
        S.A(1, 1) = Aui * (t.CQF[1] + gR);
        S.A(1, 2) = Aui * t.CQF[1];
        S.b[1] = Aui * (t.C_P[1] + t.CQF[1] * Ckc + F);
    }
    if (P.dim_s) {
        S.A(2, 0) = gT * t.CQK[2];
        S.A(2, 1) = gT * t.CQF[2];
        S.A(2, 2) = gT * (t.CQF[2] + As);
        S.b[2] = gT * (t.C_P[2] + t.CQF[2] * Ckc + F);
    }
    if (!P.dim_u)
        for (int i = 0; i < 3; ++i) S.A(i, 1) = 0.0;
    if (!P.dim_s)
        for (int i = 0; i < 3; ++i) S.A(i, 2) = 0.0;
    clamp_nonnegative(S);
    return S;
}

/// Core diagonal entry of the m-th derivative system for the unstable block.
inline Interval derivative_core_entry(const Interval& Au_inv, const Interval& growth, int n, int m) {
    require(m >= 1 && m < n, "derivative order must satisfy 1 <= m < n");
    return Au_inv * pow(growth, static_cast<unsigned>(n - m));
}

/// First-derivative system for (C_R,1, C_K,u,1, C_K,s,1) with shape mu ||x||^(p-1),
/// given the value certificate C.
inline BoundSystem assemble_derivative_system(const FixedProblem& P, const BoundInputs& in, const BoundTerms& t,
                                              const Growth& g, const Box& C) {
    using detail::pos;
    BoundSystem S;
    unsigned p1 = static_cast<unsigned>(P.shape.p - 1);
    Interval gR = pow(g.R, p1) * g.DR, gK = pow(g.K, p1) * t.delta_K, gT = pow(g.T, p1) * g.DT;
    Interval Ac = pos(P.norms.Ac), Aui = pos(P.norms.Au_inv), As = pos(P.norms.As);
    Interval Ckc1(in.C_Kc1.hi), F = in.C_F1 * gK;
    Interval sumK(C[1].hi + C[2].hi + in.C_Kc.hi), CR(C[0].hi);
    std::array<Interval, 3> D;
    for (std::size_t b = 0; b < 3; ++b)
        D[b] = t.C_DP[b] + t.D2F[b] * t.delta_K * sumK * t.r_U + t.D2K[b] * t.delta_R * CR * t.r_U +
               t.CQF[b] * Ckc1 + F;
    if (P.dim_c) {
        S.A(0, 0) = t.CQK[0];
        S.A(0, 1) = t.CQF[0];
        S.A(0, 2) = t.CQF[0];
        S.b[0] = Ac * Ckc1 + D[0] + Ckc1 * gR;
    }
    if (P.dim_u) {
        S.A(1, 0) = Aui * t.CQK[1];
        S.A(1, 1) = Aui * (t.CQF[1] + gR);
        S.A(1, 2) = Aui * t.CQF[1];
        S.b[1] = Aui * D[1];
    }
    if (P.dim_s) {
        S.A(2, 0) = gT * t.CQK[2];
        S.A(2, 1) = gT * t.CQF[2];
        S.A(2, 2) = gT * (t.CQF[2] + As);
        S.b[2] = gT * D[2];
    }
    if (!P.dim_u)
        for (int i = 0; i < 3; ++i) S.A(i, 1) = 0.0;
    if (!P.dim_s)
        for (int i = 0; i < 3; ++i) S.A(i, 2) = 0.0;
    clamp_nonnegative(S);
    return S;
}

struct FixedPointResult {
    Box C;
    Box witness;
    bool ansatz_verified = false;
};

namespace detail {

inline Box affine_upper(const Matrix<Interval>& A, const Box& b, const std::vector<double>& c) {
    Box out(3);
    for (std::size_t i = 0; i < 3; ++i) {
        Interval s(b[i].hi);
        for (std::size_t j = 0; j < 3; ++j)
            if (A(i, j).hi != 0 && c[j] != 0) s += Interval(A(i, j).hi) * Interval(c[j]);
        out[i] = s;
    }
    return out;
}

inline Box affine_lower(const Matrix<Interval>& A, const Box& b, const std::vector<double>& c) {
    Box out(3);
    for (std::size_t i = 0; i < 3; ++i) {
        Interval s(b[i].lo);
        for (std::size_t j = 0; j < 3; ++j)
            if (A(i, j).lo != 0 && c[j] != 0) s += Interval(A(i, j).lo) * Interval(c[j]);
        out[i] = s;
    }
    return out;
}

}  // namespace detail

/// Containment A C + b in C, checked with outward rounding. A zero lower end
/// needs no check since A and b are nonnegative.
inline bool fixed_point_contained(const Matrix<Interval>& A, const Box& b, const Box& C) {
    std::vector<double> lo, hi;
    for (const auto& c : C) {
        lo.push_back(c.lo);
        hi.push_back(c.hi);
    }
    Box up = detail::affine_upper(A, b, hi), dn = detail::affine_lower(A, b, lo);
    for (std::size_t i = 0; i < 3; ++i)
        if (up[i].hi > C[i].hi || (C[i].lo > 0 && dn[i].lo < C[i].lo)) return false;
    return true;
}

/// Solves C = A C + b for nonnegative A and b. An ansatz, when given, is
/// verified to satisfy A C~ + b < C~ strictly.
inline FixedPointResult solve_bound_fixed_point(const Matrix<Interval>& A, const Box& b,
                                                const std::optional<std::vector<double>>& ansatz = std::nullopt) {
    require(A.rows() == 3 && A.cols() == 3 && b.size() == 3, "the bound system is 3x3");
    for (std::size_t i = 0; i < 3; ++i) {
        require(b[i].lo >= 0 && std::isfinite(b[i].hi), "right-hand side must be nonnegative and finite");
        for (std::size_t j = 0; j < 3; ++j)
            require(A(i, j).lo >= 0 && std::isfinite(A(i, j).hi), "system matrix must be nonnegative and finite");
    }
    FixedPointResult res;
    if (ansatz) {
        require(ansatz->size() == 3, "ansatz must have three entries");
        Box up = detail::affine_upper(A, b, *ansatz);
        res.ansatz_verified = true;
        for (std::size_t i = 0; i < 3; ++i) res.ansatz_verified = res.ansatz_verified && up[i].hi < (*ansatz)[i];
    }
    // floating solve of (I - A) C = b with partial pivoting
    double M[3][4];
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) M[i][j] = (i == j ? 1.0 : 0.0) - A(i, j).hi;
        M[i][3] = b[i].hi;
    }
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(M[r][col]) > std::fabs(M[piv][col])) piv = r;
        std::swap(M[piv], M[col]);
        if (M[col][col] == 0) fail(ErrorKind::not_contraction, "bound system is singular; shrink the box");
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            double f = M[r][col] / M[col][col];
            for (int j = col; j < 4; ++j) M[r][j] -= f * M[col][j];
        }
    }
    std::vector<double> c(3);
    for (int i = 0; i < 3; ++i) c[i] = M[i][3] / M[i][i];
    for (double v : c)
        if (!std::isfinite(v) || v < -1e-300)
            fail(ErrorKind::not_contraction, "bound system is not a contraction on this box; shrink the box");
    for (double& v : c) v = std::max(v, 0.0);

    // strict witness w with A w + b < w proves spectral radius < 1 and bounds the fixed point;
    // rows of an empty block are identically zero and pin their component to 0
    std::array<bool, 3> null_row{};
    for (std::size_t i = 0; i < 3; ++i)
        null_row[i] = b[i].hi == 0 && A(i, 0).hi == 0 && A(i, 1).hi == 0 && A(i, 2).hi == 0;
    double scale = std::max({c[0], c[1], c[2], 1e-300});
    std::vector<double> w;
    bool ok = false;
    for (double eta : {1e-12, 1e-9, 1e-6, 1e-3}) {
        w.clear();
        for (std::size_t i = 0; i < 3; ++i) w.push_back(null_row[i] ? 0.0 : c[i] * (1 + eta) + eta * scale + 1e-300);
        Box up = detail::affine_upper(A, b, w);
        ok = true;
        for (std::size_t i = 0; i < 3; ++i) ok = ok && (null_row[i] || up[i].hi < w[i]);
        if (ok) break;
    }
    if (!ok) fail(ErrorKind::not_contraction, "bound system is not a contraction on this box; shrink the box");
    std::vector<double> lo;
    for (double v : c) lo.push_back(v * (1 - 1e-9));
    Box dn = detail::affine_lower(A, b, lo);
    bool lower_ok = true;
    for (std::size_t i = 0; i < 3; ++i) lower_ok = lower_ok && (lo[i] <= 0 || dn[i].lo >= lo[i]);
    if (!lower_ok) lo.assign(3, 0.0);
    res.C.clear();
    res.witness.clear();
    for (std::size_t i = 0; i < 3; ++i) {
        res.C.push_back(Interval(std::min(lo[i], w[i]), w[i]));
        res.witness.push_back(Interval(ansatz && res.ansatz_verified ? (*ansatz)[i] : w[i]));
    }
    if (!fixed_point_contained(A, b, res.C))
        fail(ErrorKind::certification, "fixed-point containment failed after the solve");
    return res;
}

struct DerivativeCertificate {
    int m = 1;
    BoundSystem system;
    Box C;  // C_R,m, C_K,u,m, C_K,s,m
};

struct BoundCertificate {
    Box box;
    BoundShape shape;
    std::vector<Rational> params;
    BoundSystem system;
    Box C;
    Box contraction_witness;
    bool ansatz_verified = false;
    std::vector<DerivativeCertificate> derivative_certs;
    BoundInputs inputs;
    BoundTerms terms;
    Growth growth;
    ExactNorms norms;
    int refinements = 0;
};

/// Value certificate with the crude growth bounds.
inline BoundCertificate certify_bounds(const FixedProblem& P, const BoundInputs& in,
                                       const std::optional<std::vector<double>>& ansatz = std::nullopt) {
    BoundCertificate cert;
    cert.box = P.U;
    cert.shape = P.shape;
    cert.params = P.params;
    cert.inputs = in;
    cert.norms = P.norms;
    cert.terms = compute_bound_terms(P, in);
    cert.growth = crude_growth(P, in);
    cert.system = assemble_bound_system(P, in, cert.terms, cert.growth);
    FixedPointResult fp = solve_bound_fixed_point(cert.system.A, cert.system.b, ansatz);
    cert.C = fp.C;
    cert.contraction_witness = fp.witness;
    cert.ansatz_verified = fp.ansatz_verified;
    return cert;
}

/// Adds the first-derivative certificate. Orders m >= 2 are not supported.
inline DerivativeCertificate derivative_bound_system(const FixedProblem& P, BoundCertificate& cert, int m = 1,
                                                     const std::optional<Box>& C1_prior = std::nullopt) {
    require(m >= 1, "derivative order must be at least 1");
    if (m != 1) fail(ErrorKind::precondition, "only first-derivative certificates are implemented");
    Growth g = C1_prior ? refined_growth(P, cert.inputs, cert.terms, cert.C, C1_prior) : cert.growth;
    DerivativeCertificate d;
    d.m = m;
    d.system = assemble_derivative_system(P, cert.inputs, cert.terms, g, cert.C);
    d.C = solve_bound_fixed_point(d.system.A, d.system.b).C;
    return d;
}

/// Replaces the crude growth bounds by polynomial ones plus the current
/// certificate and re-solves while C improves by more than 1%.
inline BoundCertificate refine_with_taylor(const BoundCertificate& cert, const FixedProblem& P, int max_iters) {
    BoundCertificate best = cert;
    for (int it = 0; it < max_iters; ++it) {
        Growth g = refined_growth(P, best.inputs, best.terms, best.C);
        BoundSystem S = assemble_bound_system(P, best.inputs, best.terms, g);
        FixedPointResult fp;
        try {
            fp = solve_bound_fixed_point(S.A, S.b);
        } catch (const Error&) {
            break;
        }
        bool monotone = true;
        double gain = 0;
        for (std::size_t i = 0; i < 3; ++i) {
            monotone = monotone && fp.C[i].hi <= best.C[i].hi;
            if (best.C[i].hi > 0) gain = std::max(gain, 1 - fp.C[i].hi / best.C[i].hi);
        }
        if (!monotone) break;
        best.system = S;
        best.growth = g;
        best.C = fp.C;
        best.contraction_witness = fp.witness;
        best.refinements = it + 1;
        if (gain < 0.01) break;
    }
    return best;
}

/// Derives the Lipschitz constants L_r, L_u, L_s from the polynomial parts on U
/// plus ansatz derivative bounds (C_R,1, C_K,u,1, C_K,s,1) in the shape mu ||x||^(p-1).
inline LipschitzInputs derive_lipschitz(const FixedProblem& P, const Interval& L_g, const Interval& L_c,
                                        const std::array<double, 3>& ansatz_derivative) {
    using namespace detail;
    LipschitzInputs L;
    L.L_g = L_g;
    L.L_c = L_c;
    Interval mu = pos(P.shape.mu);
    Interval w1 = mu * (P.shape.p >= 2 ? pow(Interval(rmax(P.U)), static_cast<unsigned>(P.shape.p - 1)) : Interval(1.0));
    std::vector<std::size_t> center = range(0, P.dim_c);
    L.L_r = sup_row_sum_D(P.Pr, center, center, P.U) + Interval(ansatz_derivative[0]) * w1;
    L.L_u = P.dim_u ? sup_row_sum_D(P.Pk, range(P.dim_c, P.dim_u), center, P.U) + Interval(ansatz_derivative[1]) * w1
                    : Interval(0.0);
    L.L_s = P.dim_s ? sup_row_sum_D(P.Pk, range(P.dim_c + P.dim_u, P.dim_s), center, P.U) +
                          Interval(ansatz_derivative[2]) * w1
                    : Interval(0.0);
    if (P.dim_c == 1) {
        // |DT| = 1/|DR| on the image; R is evaluated on a doubled box
        Box U2{Interval(2.0) * P.U[0]};
        JetMap Rfull = add(P.Pr, linear_map(P.A_c, 1, P.Pr.front().max_order()));
        Interval dr = jet_eval_interval(jet_derivative(Rfull[0], 0), U2, 64);
        Interval lo = Interval(dr.mig()) - Interval(ansatz_derivative[0]) * w1;
        L.L_inv = lo.lo > 0 ? Interval(1.0) / lo : Interval::entire();
    } else {
        L.L_inv = Interval::entire();
    }
    return L;
}

/// The smallness conditions on L_g, L_c, L_u, L_s, L_r, L_inv at order n,
/// with max{1, .} on the center norms as in the parameter setting.
struct SmallnessReport {
    Interval unstable_lhs, stable_lhs;
    bool unstable_ok = true, stable_ok = true;
    bool ok() const { return unstable_ok && stable_ok; }
};

inline SmallnessReport check_smallness(const ExactNorms& e, const LipschitzInputs& L, int n, bool has_u, bool has_s) {
    using detail::pos;
    SmallnessReport r;
    if (has_u) {
        Interval g = max(Interval(1.0), pos(e.Ac) + L.L_r);
        r.unstable_lhs = pos(e.Au_inv) * (pow(g, static_cast<unsigned>(n)) + L.L_g + L.L_u);
        r.unstable_ok = r.unstable_lhs.hi < 1;
    }
    if (has_s) {
        Interval Li = max(Interval(1.0), L.L_inv);
        r.stable_lhs = pow(Li, static_cast<unsigned>(n)) *
                       (pos(e.As) * (Interval(1.0) + Li * L.L_s) + L.L_g * (Interval(1.0) + Li * (Interval(1.0) + L.L_c)));
        r.stable_ok = r.stable_lhs.hi < 1;
    }
    return r;
}

/// Enclosure of ||exp(A t)|| for t in an interval.
using ExpNormFn = std::function<Interval(const Interval&)>;

/// L_G = tau |Dg| sup_{s<=tau} ||e^{As}||^2 exp(|Dg| int_0^tau ||e^{A(tau-s)}|| ds),
/// with the sup and the integral enclosed on a uniform partition.
inline Interval compute_LG(const Interval& Dg, const Interval& tau, const ExpNormFn& expA_norm,
                           std::size_t pieces = 1u << 16) {
    require(tau.lo >= 0, "tau must be nonnegative");
    require(Dg.lo >= 0, "derivative bound must be nonnegative");
    if (tau.hi == 0 || Dg.hi == 0) return Interval(0.0);
    Interval sup_lo(0.0), sup_hi(0.0), integral(0.0);
    double T = tau.hi;
    Interval h = Interval(T) / Interval(static_cast<double>(pieces));
    for (std::size_t i = 0; i < pieces; ++i) {
        Interval a = Interval(static_cast<double>(i)) * h, b = Interval(static_cast<double>(i + 1)) * h;
        Interval piece(a.lo, std::min(b.hi, T));
        Interval v = expA_norm(piece);
        sup_hi = max(sup_hi, Interval(v.hi));
        sup_lo = max(sup_lo, Interval(expA_norm(Interval(a.lo)).lo));
        integral += v * (b - a);
    }
    sup_lo = max(sup_lo, Interval(expA_norm(Interval(T)).lo));
    // the integral over [0, tau] for an interval tau: tau.lo uses the lower sums
    Interval S(sup_lo.lo, sup_hi.hi);
    if (!tau.is_point()) integral = Interval(0.0, integral.hi);
    return tau * Dg * sqr(S) * exp(Dg * integral);
}

inline nlohmann::json to_json(const BoundSystem& S) {
    nlohmann::json A = nlohmann::json::array(), b = nlohmann::json::array();
    for (std::size_t i = 0; i < 3; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < 3; ++j) row.push_back(to_json(S.A(i, j)));
        A.push_back(row);
        b.push_back(to_json(S.b[i]));
    }
    return {{"system_matrix", A}, {"system_rhs", b}};
}

inline nlohmann::json to_json(const Box& b) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& x : b) j.push_back(to_json(x));
    return j;
}

inline nlohmann::json to_json(const BoundCertificate& c) {
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : c.params) params.push_back(to_decimal(p));
    nlohmann::json j = to_json(c.system);
    j["box"] = to_json(c.box);
    j["shape"] = {{"mu", to_decimal(c.shape.mu)}, {"p", c.shape.p}};
    j["params"] = params;
    j["C"] = to_json(c.C);
    j["contraction_witness"] = to_json(c.contraction_witness);
    j["ansatz_verified"] = c.ansatz_verified;
    j["refinements"] = c.refinements;
    j["fixed_point_contained"] = fixed_point_contained(c.system.A, c.system.b, c.C);
    nlohmann::json d = nlohmann::json::array();
    for (const auto& dc : c.derivative_certs) {
        nlohmann::json e = to_json(dc.system);
        e["m"] = dc.m;
        e["C"] = to_json(dc.C);
        e["fixed_point_contained"] = fixed_point_contained(dc.system.A, dc.system.b, dc.C);
        d.push_back(e);
    }
    j["derivative_certs"] = d;
    const auto& L = c.inputs.lip;
    j["inputs"] = {{"L_g", to_json(L.L_g)},   {"L_c", to_json(L.L_c)},       {"L_u", to_json(L.L_u)},
                   {"L_s", to_json(L.L_s)},   {"L_r", to_json(L.L_r)},       {"L_inv", to_json(L.L_inv)},
                   {"C_F", to_json(c.inputs.C_F)}, {"C_Kc", to_json(c.inputs.C_Kc)},
                   {"norm_Ac", to_decimal(c.norms.Ac)}, {"norm_As", to_decimal(c.norms.As)},
                   {"norm_Au_inv", to_decimal(c.norms.Au_inv)}, {"norm_Ac_inv", to_decimal(c.norms.Ac_inv)}};
    const auto& t = c.terms;
    nlohmann::json per_block = nlohmann::json::object();
    const char* names[3] = {"c", "u", "s"};
    for (std::size_t b = 0; b < 3; ++b)
        per_block[names[b]] = {{"C_P", to_json(t.C_P[b])}, {"C_DP", to_json(t.C_DP[b])}, {"C_Q_F", to_json(t.CQF[b])},
                               {"C_Q_K", to_json(t.CQK[b])}, {"D2_F", to_json(t.D2F[b])}, {"D2_K", to_json(t.D2K[b])}};
    j["terms"] = per_block;
    j["growth"] = {{"R", to_json(c.growth.R)}, {"K", to_json(c.growth.K)}, {"T", to_json(c.growth.T)},
                   {"DR", to_json(c.growth.DR)}};
    return j;
}

}  // namespace cmcert
