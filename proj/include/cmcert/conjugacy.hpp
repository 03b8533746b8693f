#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "jet.hpp"
#include "matrix.hpp"
#include "splitting.hpp"

namespace cmcert {

/// A monomial in one component of a jet map.
struct Monomial {
    std::size_t component = 0;
    Exponents exps;
};

struct SolveOptions {
    /// Monomials of R to annihilate by choosing the matching coefficients of k_c.
    std::vector<Monomial> targets;
    /// Shuffles unknown and equation order in every linear solve.
    std::optional<std::uint64_t> permutation_seed;
};

/// Jets of K = iota + (k_c, k_u, k_s) and R = A_c + r in split coordinates,
/// on the domain (lambda, x_c).
struct ConjugacySolution {
    int order = 0;
    std::size_t num_params = 0;
    std::size_t dim = 0, dim_c = 0, dim_u = 0, dim_s = 0;
    std::vector<int> weights;  // domain weights: params then center variables
    JetMap F;                  // the map in split coordinates
    JetMap K;
    JetMap R;
    JetMap kc;
    JetMap T;
    std::vector<Monomial> targets;
    std::string splitting_hash;

    std::vector<std::string> domain_names() const {
        std::vector<std::string> n;
        for (std::size_t i = 0; i < num_params; ++i)
            n.push_back(num_params == 1 ? "lambda" : "lambda" + std::to_string(i + 1));
        for (std::size_t i = 0; i < dim_c; ++i) n.push_back(dim_c == 1 ? "x" : "x" + std::to_string(i + 1));
        return n;
    }
};

namespace detail {

inline std::string monomial_name(const Exponents& e, std::size_t k) {
    std::ostringstream os;
    bool any = false;
    for (std::size_t v = 0; v < e.size(); ++v) {
        if (!e[v]) continue;
        if (any) os << "*";
        any = true;
        os << (v < k ? "lambda" : "x");
        if (k > 1 && v < k) os << v + 1;
        if (v >= k && e.size() - k > 1) os << v - k + 1;
        if (e[v] > 1) os << "^" << e[v];
    }
    if (!any) os << "1";
    return os.str();
}

inline bool is_phase_linear(const Exponents& e, std::size_t k) {
    int lam = 0, x = 0;
    for (std::size_t v = 0; v < e.size(); ++v) (v < k ? lam : x) += e[v];
    return lam == 0 && x == 1;
}

// Exact Gaussian elimination that reports the first column without a pivot.
struct SolveResult {
    bool ok = true;
    std::size_t bad_column = 0;
    RVector x;
};

inline SolveResult solve_reporting(RMatrix M, RVector b) {
    std::size_t n = M.rows();
    std::vector<std::size_t> piv_row(n, n);
    std::size_t row = 0;
    SolveResult res;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t p = row;
        while (p < n && M(p, col) == 0) ++p;
        if (p == n) {
            res.ok = false;
            res.bad_column = col;
            return res;
        }
        for (std::size_t j = 0; j < n; ++j) std::swap(M(p, j), M(row, j));
        std::swap(b[p], b[row]);
        Rational inv = 1 / M(row, col);
        for (std::size_t j = col; j < n; ++j) M(row, j) *= inv;
        b[row] *= inv;
        for (std::size_t i = 0; i < n; ++i) {
            if (i == row || M(i, col) == 0) continue;
            Rational f = M(i, col);
            for (std::size_t j = col; j < n; ++j) M(i, j) -= f * M(row, j);
            b[i] -= f * b[row];
        }
        piv_row[col] = row++;
    }
    res.x.assign(n, Rational(0));
    for (std::size_t col = 0; col < n; ++col) res.x[col] = b[piv_row[col]];
    return res;
}

inline JetMap identity_map(std::size_t k, std::size_t m, int order, const std::vector<int>& w) {
    JetMap id;
    for (std::size_t i = 0; i < m; ++i) id.push_back(TaylorJet::variable(k, m, order, k + i, w));
    return id;
}

inline JetMap lift_order(const JetMap& jets, int order) {
    JetMap out;
    for (const auto& j : jets) out.push_back(j.max_order() >= order ? j.truncate(order) : j.promote(order));
    return out;
}

}  // namespace detail

/// F(lambda, z) expressed in split coordinates: T F(lambda, T^-1 z).
inline JetMap to_split_coordinates(const JetMap& F, const LinearSplitting& s) {
    require(F.size() == s.dim, "map has the wrong number of components");
    std::size_t k = F.front().num_params();
    int order = F.front().max_order();
    const auto& w = F.front().weights();
    JetMap inner;
    for (std::size_t i = 0; i < s.dim; ++i) {
        TaylorJet q(k, s.dim, order, w);
        for (std::size_t j = 0; j < s.dim; ++j) {
            Exponents e(k + s.dim, 0);
            e[k + j] = 1;
            if (s.T_inv(i, j) != 0) q.set(e, s.T_inv(i, j));
        }
        inner.push_back(q);
    }
    JetMap G = jet_compose(F, inner, order);
    JetMap out;
    for (std::size_t i = 0; i < s.dim; ++i) {
        TaylorJet acc(k, s.dim, order, w);
        for (std::size_t j = 0; j < s.dim; ++j)
            if (s.T(i, j) != 0) acc += s.T(i, j) * G[j];
        out.push_back(acc);
    }
    return out;
}

/// Phase-linear part of a jet map as a matrix (rows: components).
inline RMatrix phase_linear_part(const JetMap& F) {
    std::size_t k = F.front().num_params(), m = F.front().num_phase();
    RMatrix A(F.size(), m);
    for (std::size_t i = 0; i < F.size(); ++i)
        for (std::size_t j = 0; j < m; ++j) {
            Exponents e(k + m, 0);
            e[k + j] = 1;
            A(i, j) = F[i].coeff(e);
        }
    return A;
}

/// Jet T with R(T) = T(R) = id through `order`.
inline JetMap invert_R_jet(const JetMap& R, int order) {
    require(!R.empty(), "empty map cannot be inverted");
    std::size_t k = R.front().num_params(), m = R.front().num_phase();
    require(R.size() == m, "only maps of a space to itself can be inverted");
    const auto& w = R.front().weights();
    order = std::min(order, R.front().max_order());
    RMatrix Ac = phase_linear_part(R);
    if (rank(Ac) < m) fail(ErrorKind::precondition, "linear part of R is singular");
    RMatrix Ai = inverse(Ac);
    JetMap Rt = detail::lift_order(R, order);
    JetMap N;  // R minus its phase-linear part
    for (std::size_t i = 0; i < m; ++i) {
        TaylorJet n = Rt[i];
        for (std::size_t j = 0; j < m; ++j) {
            Exponents e(k + m, 0);
            e[k + j] = 1;
            n.set(e, 0);
        }
        N.push_back(n);
    }
    JetMap id = detail::identity_map(k, m, order, w);
    JetMap T(m, TaylorJet(k, m, order, w));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) T[i] += Ai(i, j) * id[j];
    for (int it = 0; it <= order + 1; ++it) {
        JetMap NT = jet_compose(N, T, order);
        JetMap next(m, TaylorJet(k, m, order, w));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j)
                if (Ai(i, j) != 0) next[i] += Ai(i, j) * (id[j] - NT[j]);
        bool same = true;
        for (std::size_t i = 0; i < m; ++i) same = same && next[i] == T[i];
        T = next;
        if (same) break;
    }
    JetMap RT = jet_compose(Rt, T, order), TR = jet_compose(T, Rt, order);
    for (std::size_t i = 0; i < m; ++i)
        if (!(RT[i] == id[i]) || !(TR[i] == id[i]))
            fail(ErrorKind::certification, "series reversion did not converge");
    return T;
}

namespace detail {

// Operator h -> A_b h - (h o L)_d on degree-d monomials of one block, as a matrix.
inline RMatrix homological_matrix(const RMatrix& Ab, const std::vector<Exponents>& monos,
                                  const JetMap& L, std::size_t k, std::size_t mc, int d,
                                  const std::vector<int>& w) {
    std::size_t nb = Ab.rows(), nm = monos.size();
    RMatrix M(nb * nm, nb * nm);
    TaylorJet probe(k, mc, d, w);
    for (std::size_t a = 0; a < nm; ++a) {
        TaylorJet mono = probe;
        mono.set(monos[a], 1);
        TaylorJet img = jet_compose(mono, L, d);
        for (std::size_t j = 0; j < nb; ++j) {
            std::size_t col = j * nm + a;
            for (std::size_t i = 0; i < nb; ++i)
                if (Ab(i, j) != 0) M(i * nm + a, col) += Ab(i, j);
            for (std::size_t b = 0; b < nm; ++b) {
                Rational c = img.coeff(monos[b]);
                if (c != 0) M(j * nm + b, col) -= c;
            }
        }
    }
    return M;
}

inline std::vector<std::size_t> permutation(std::size_t n, std::optional<std::uint64_t> seed, int salt) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    if (seed) {
        std::mt19937_64 rng(*seed + static_cast<std::uint64_t>(salt) * 7919u);
        std::shuffle(p.begin(), p.end(), rng);
    }
    return p;
}

// Solves M c = rhs with rows and columns permuted; reports resonance through `name_of`.
inline RVector permuted_solve(const RMatrix& M, const RVector& rhs, std::optional<std::uint64_t> seed, int salt,
                              const std::function<std::string(std::size_t)>& name_of, int degree) {
    std::size_t n = M.rows();
    auto pr = permutation(n, seed, 2 * salt), pc = permutation(n, seed, 2 * salt + 1);
    RMatrix P(n, n);
    RVector b(n);
    for (std::size_t i = 0; i < n; ++i) {
        b[i] = rhs[pr[i]];
        for (std::size_t j = 0; j < n; ++j) P(i, j) = M(pr[i], pc[j]);
    }
    SolveResult r = solve_reporting(P, b);
    if (!r.ok)
        fail(ErrorKind::resonance, "resonance obstruction at order " + std::to_string(degree) + ": " +
                                       name_of(pc[r.bad_column]));
    RVector x(n);
    for (std::size_t j = 0; j < n; ++j) x[pc[j]] = r.x[j];
    return x;
}

}  // namespace detail

/// Solves F o K = K o R order by order for the jets of K and R, with k_c prescribed
/// (and optionally adjusted on the target monomials). F is given in the original
/// coordinates of the splitting, on (lambda, x).
inline ConjugacySolution solve_order_by_order(const JetMap& F_orig, const LinearSplitting& s, const JetMap& kc_in,
                                              int order, const SolveOptions& opt = {}) {
    require(order >= 1, "order must be at least 1");
    require(F_orig.size() == s.dim, "map has the wrong number of components");
    require(s.dim_c > 0, "the splitting has no center directions");
    std::size_t k = F_orig.front().num_params();
    for (const auto& f : F_orig)
        require(f.num_params() == k && f.num_phase() == s.dim && f.weights() == F_orig.front().weights(),
                "map components do not share a layout");
    for (std::size_t v = k; v < k + s.dim; ++v)
        require(F_orig.front().weights()[v] == 1, "phase variables must have weight 1");
    require(F_orig.front().max_order() >= order, "map jet is shorter than the requested order");
    for (const auto& f : F_orig) require(f.coeff(Exponents(k + s.dim, 0)) == 0, "map has a nonzero constant term");
    if (!(phase_linear_part(F_orig) == s.A)) fail(ErrorKind::precondition, "linear part of the map differs from A");

    ConjugacySolution sol;
    sol.order = order;
    sol.num_params = k;
    sol.dim = s.dim;
    sol.dim_c = s.dim_c;
    sol.dim_u = s.dim_u;
    sol.dim_s = s.dim_s;
    sol.targets = opt.targets;
    sol.splitting_hash = splitting_hash(s);
    std::vector<int> w(F_orig.front().weights().begin(), F_orig.front().weights().begin() + static_cast<long>(k));
    w.resize(k + s.dim_c, 1);
    sol.weights = w;
    std::size_t mc = s.dim_c;

    sol.F = to_split_coordinates(detail::lift_order(F_orig, order), s);

    JetMap kc;
    if (kc_in.empty()) {
        kc.assign(mc, TaylorJet(k, mc, order, w));
    } else {
        require(kc_in.size() == mc, "k_c must have one component per center direction");
        for (const auto& c : kc_in) {
            require(c.num_params() == k && c.num_phase() == mc && c.weights() == w, "k_c has the wrong layout");
            for (const auto& [e, v] : c.terms()) {
                int xdeg = 0;
                for (std::size_t i = k; i < e.size(); ++i) xdeg += e[i];
                require(!(xdeg <= 1 && std::accumulate(e.begin(), e.begin() + static_cast<long>(k), 0) == 0),
                        "k_c must have zero constant and phase-linear parts");
            }
            kc.push_back(c.max_order() >= order ? c.truncate(order) : c.promote(order));
        }
    }
    for (const auto& t : opt.targets) {
        require(t.component < mc && t.exps.size() == k + mc, "malformed normal-form target");
        require(!detail::is_phase_linear(t.exps, k), "phase-linear coefficients of R cannot be targeted");
    }

    JetMap id = detail::identity_map(k, mc, order, w);
    JetMap K(s.dim, TaylorJet(k, mc, order, w));
    for (std::size_t i = 0; i < mc; ++i) K[i] = id[i] + kc[i];
    RMatrix Ac = s.A_c();
    JetMap R(mc, TaylorJet(k, mc, order, w));
    for (std::size_t i = 0; i < mc; ++i)
        for (std::size_t j = 0; j < mc; ++j)
            if (Ac(i, j) != 0) R[i] += Ac(i, j) * id[j];

    const MonomialBasis& basis = R.front().basis();
    int salt = 0;
    for (int d = 1; d <= order; ++d) {
        auto [b0, b1] = basis.degree_range(d);
        std::vector<Exponents> monos;
        for (std::size_t i = b0; i < b1; ++i)
            if (!detail::is_phase_linear(basis.exps(i), k)) monos.push_back(basis.exps(i));
        if (monos.empty()) continue;

        // linear part of R known so far: phase-linear A_c plus any parameter-linear terms
        JetMap L(mc);
        for (std::size_t i = 0; i < mc; ++i) {
            TaylorJet lin(k, mc, d, w);
            for (const auto& [e, c] : R[i].truncate(d).terms()) {
                int tot = std::accumulate(e.begin(), e.end(), 0);
                if (tot == 1) lin.set(e, c);
            }
            L[i] = lin;
        }

        auto residual = [&](const JetMap& Kc, const JetMap& Rc) {
            JetMap Kd = detail::lift_order(Kc, d), Rd = detail::lift_order(Rc, d);
            JetMap FK = jet_compose(detail::lift_order(sol.F, d), Kd, d);
            JetMap KR = jet_compose(Kd, Rd, d);
            JetMap E;
            for (std::size_t i = 0; i < s.dim; ++i) E.push_back((FK[i] - KR[i]).homogeneous_part(d));
            return E;
        };

        // targeted k_c coefficients at this degree
        std::vector<Monomial> tgt;
        for (const auto& t : opt.targets)
            if (K.front().degree_of(t.exps) == d) tgt.push_back(t);
        if (!tgt.empty()) {
            for (const auto& t : tgt) K[t.component].set(t.exps, 0);
            JetMap E0 = residual(K, R);
            // R_d = E_c + (A_c h - h o L) on the target coordinates; choose h to zero them
            std::size_t nt = tgt.size();
            RMatrix M(nt, nt);
            RVector rhs(nt);
            for (std::size_t a = 0; a < nt; ++a) {
                TaylorJet mono(k, mc, d, w);
                mono.set(tgt[a].exps, 1);
                TaylorJet img = jet_compose(mono, L, d);
                for (std::size_t b = 0; b < nt; ++b) {
                    Rational v = 0;
                    if (tgt[b].exps == tgt[a].exps) v += Ac(tgt[b].component, tgt[a].component);
                    if (tgt[b].component == tgt[a].component) v -= img.coeff(tgt[b].exps);
                    M(b, a) = v;
                }
            }
            for (std::size_t b = 0; b < nt; ++b) rhs[b] = -E0[tgt[b].component].coeff(tgt[b].exps);
            RVector h = detail::permuted_solve(
                M, rhs, opt.permutation_seed, salt++,
                [&](std::size_t a) {
                    return "target R[" + std::to_string(tgt[a].component) + "] " +
                           detail::monomial_name(tgt[a].exps, k) + " does not depend on k_c";
                },
                d);
            for (std::size_t a = 0; a < nt; ++a) K[tgt[a].component].add_to(tgt[a].exps, h[a]);
        }

        JetMap E = residual(K, R);
        for (std::size_t i = 0; i < mc; ++i) {
            TaylorJet Ed = E[i].promote(order);
            for (const auto& e : monos) R[i].set(e, Ed.coeff(e));
        }
        for (SpectralClass cls : {SpectralClass::unstable, SpectralClass::stable}) {
            auto idx = s.block_indices(cls);
            if (idx.empty()) continue;
            RMatrix Ab = cls == SpectralClass::unstable ? s.A_u() : s.A_s();
            RMatrix M = detail::homological_matrix(Ab, monos, L, k, mc, d, w);
            std::size_t nm = monos.size();
            RVector rhs(idx.size() * nm);
            for (std::size_t j = 0; j < idx.size(); ++j)
                for (std::size_t a = 0; a < nm; ++a) rhs[j * nm + a] = -E[idx[j]].coeff(monos[a]);
            RVector h = detail::permuted_solve(
                M, rhs, opt.permutation_seed, salt++,
                [&](std::size_t col) {
                    std::string block = cls == SpectralClass::unstable ? "k_u[" : "k_s[";
                    return block + std::to_string(col / nm) + "] " + detail::monomial_name(monos[col % nm], k);
                },
                d);
            for (std::size_t j = 0; j < idx.size(); ++j)
                for (std::size_t a = 0; a < nm; ++a)
                    if (h[j * nm + a] != 0) K[idx[j]].set(monos[a], h[j * nm + a]);
        }
    }

    // the residual must vanish identically through the order
    JetMap FK = jet_compose(sol.F, K, order), KR = jet_compose(K, R, order);
    for (std::size_t i = 0; i < s.dim; ++i)
        if (!(FK[i] == KR[i])) fail(ErrorKind::certification, "conjugacy residual does not vanish");

    sol.K = K;
    sol.R = R;
    sol.kc.clear();
    for (std::size_t i = 0; i < mc; ++i) sol.kc.push_back(K[i] - id[i]);
    sol.T = invert_R_jet(R, order);
    return sol;
}

/// The k_c making the targeted coefficients of R vanish.
inline JetMap normal_form_kc(const JetMap& F, const LinearSplitting& s, const std::vector<Monomial>& targets,
                             int order) {
    SolveOptions opt;
    opt.targets = targets;
    return solve_order_by_order(F, s, {}, order, opt).kc;
}

/// Evaluates a jet map at a real point.
template <class Real>
std::vector<Real> eval_map(const JetMap& m, const std::vector<Real>& point) {
    std::vector<Real> out;
    for (const auto& j : m) out.push_back(j.template eval_real<Real>(point));
    return out;
}

struct NumericResidual {
    double max_scaled = 0.0;
    std::vector<double> location;
    std::size_t samples = 0;
};

/// Evaluable map in split coordinates: (lambda, z) -> F(lambda, z).
using EvaluableMap = std::function<std::vector<double>(const std::vector<double>& lambda, const std::vector<double>& z)>;

/// Largest sampled ||F(K(p)) - K(R(p))|| / rho(p)^(N+1), where rho is the max of
/// |p_i|^(1/w_i) over the domain variables (lambda, x).
inline NumericResidual conjugacy_residual_numeric(const EvaluableMap& F, const ConjugacySolution& sol,
                                                  const Box& samples, std::size_t count,
                                                  std::uint64_t seed = 1) {
    std::size_t k = sol.num_params, nv = k + sol.dim_c;
    require(samples.size() == nv, "sample box must cover (lambda, x)");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    NumericResidual out;
    for (std::size_t n = 0; n < count; ++n) {
        std::vector<double> p(nv);
        for (std::size_t i = 0; i < nv; ++i) p[i] = samples[i].lo + u(rng) * (samples[i].hi - samples[i].lo);
        double rho = 0;
        for (std::size_t i = 0; i < nv; ++i) rho = std::max(rho, std::pow(std::fabs(p[i]), 1.0 / sol.weights[i]));
        if (rho == 0) continue;
        std::vector<double> lam(p.begin(), p.begin() + static_cast<long>(k));
        auto Kp = eval_map(sol.K, p);
        auto Rp = eval_map(sol.R, p);
        std::vector<double> q = lam;
        q.insert(q.end(), Rp.begin(), Rp.end());
        auto KR = eval_map(sol.K, q);
        auto FK = F(lam, Kp);
        double err = 0;
        for (std::size_t i = 0; i < FK.size(); ++i) err = std::max(err, std::fabs(FK[i] - KR[i]));
        double scaled = err / std::pow(rho, sol.order + 1);
        ++out.samples;
        if (scaled > out.max_scaled || out.location.empty()) {
            out.max_scaled = std::max(out.max_scaled, scaled);
            out.location = p;
        }
    }
    return out;
}

/// Parses target monomials such as "x2", "x^3", "lambda*x" for a one-parameter,
/// one-center-variable layout, or "x1^2" / "lambda1*x2" in general.
inline Monomial parse_monomial(const std::string& text, std::size_t k, std::size_t mc, std::size_t component = 0) {
    Monomial m;
    m.component = component;
    m.exps.assign(k + mc, 0);
    std::string s;
    for (char c : text)
        if (c != ' ') s.push_back(c);
    std::size_t i = 0;
    auto read_int = [&](int def) {
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        if (j == i) return def;
        int v = std::stoi(s.substr(i, j - i));
        i = j;
        return v;
    };
    require(!s.empty(), "empty monomial");
    while (i < s.size()) {
        std::size_t var;
        if (s.compare(i, 6, "lambda") == 0 || s[i] == 'l') {
            i += s.compare(i, 6, "lambda") == 0 ? 6 : 1;
            int idx = k > 1 ? read_int(1) : 1;
            require(idx >= 1 && static_cast<std::size_t>(idx) <= k, "parameter index out of range in '" + text + "'");
            var = static_cast<std::size_t>(idx - 1);
        } else if (s[i] == 'x') {
            ++i;
            int idx = mc > 1 ? read_int(1) : 1;
            require(idx >= 1 && static_cast<std::size_t>(idx) <= mc, "phase index out of range in '" + text + "'");
            var = k + static_cast<std::size_t>(idx - 1);
        } else {
            fail(ErrorKind::precondition, "cannot parse monomial '" + text + "'");
        }
        if (i < s.size() && s[i] == '^') ++i;
        int p = read_int(1);
        m.exps[var] += p;
        if (i < s.size()) {
            require(s[i] == '*', "cannot parse monomial '" + text + "'");
            ++i;
        }
    }
    return m;
}

inline nlohmann::json to_json(const JetMap& m) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& j : m) a.push_back(to_json(j));
    return a;
}

inline nlohmann::json to_json(const ConjugacySolution& sol) {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : sol.targets) targets.push_back({{"component", t.component}, {"exps", t.exps}});
    auto names = sol.domain_names();
    nlohmann::json pretty = {{"R", nlohmann::json::array()}, {"K", nlohmann::json::array()}};
    for (const auto& r : sol.R) pretty["R"].push_back(r.to_string(names));
    for (const auto& kk : sol.K) pretty["K"].push_back(kk.to_string(names));
    return {{"order", sol.order},
            {"params", sol.num_params},
            {"blocks", {{"center", sol.dim_c}, {"unstable", sol.dim_u}, {"stable", sol.dim_s}}},
            {"weights", sol.weights},
            {"splitting_hash", sol.splitting_hash},
            {"targets", targets},
            {"kc", to_json(sol.kc)},
            {"K", to_json(sol.K)},
            {"R", to_json(sol.R)},
            {"T", to_json(sol.T)},
            {"pretty", pretty}};
}

}  // namespace cmcert
