#pragma once

#include <nlohmann/json.hpp>

#include <complex>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "interval.hpp"
#include "matrix.hpp"
#include "rational.hpp"
#include "upoly.hpp"

namespace cmcert {

enum class SpectralClass { center, unstable, stable };

inline const char* to_string(SpectralClass c) {
    switch (c) {
    case SpectralClass::center: return "center";
    case SpectralClass::unstable: return "unstable";
    case SpectralClass::stable: return "stable";
    }
    return "?";
}

/// One eigenvalue: exact when rational, otherwise a certified disk.
struct Eigenvalue {
    SpectralClass cls;
    bool exact = false;
    Rational value;
    std::complex<long double> center;
    long double radius = 0;
    int multiplicity = 1;

    std::string describe() const {
        std::ostringstream os;
        if (exact)
            os << value.str();
        else
            os << "disk(" << static_cast<double>(center.real()) << (center.imag() < 0 ? "" : "+")
               << static_cast<double>(center.imag()) << "i, r=" << static_cast<double>(radius) << ")";
        if (multiplicity > 1) os << " x" << multiplicity;
        return os.str();
    }
};

struct BlockNorms {
    Interval Ac, Au, As, Ac_inv, Au_inv;
};

/// Linearization with its center/unstable/stable splitting. In split
/// coordinates z = T v the center block comes first, then unstable, then stable.
struct LinearSplitting {
    std::size_t dim = 0;
    RMatrix A;
    RMatrix T;
    RMatrix T_inv;
    RMatrix A_split;
    std::size_t dim_c = 0, dim_u = 0, dim_s = 0;
    std::vector<Eigenvalue> eigenvalues;
    BlockNorms norms;

    std::vector<std::size_t> block_indices(SpectralClass c) const {
        std::size_t start = c == SpectralClass::center ? 0 : c == SpectralClass::unstable ? dim_c : dim_c + dim_u;
        std::size_t len = c == SpectralClass::center ? dim_c : c == SpectralClass::unstable ? dim_u : dim_s;
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < len; ++i) idx.push_back(start + i);
        return idx;
    }
    RMatrix A_c() const { return A_split.block(0, 0, dim_c, dim_c); }
    RMatrix A_u() const { return A_split.block(dim_c, dim_c, dim_u, dim_u); }
    RMatrix A_s() const { return A_split.block(dim_c + dim_u, dim_c + dim_u, dim_s, dim_s); }
};

namespace detail {

inline SpectralClass classify_rational(const Rational& r) {
    Rational a = abs(r);
    if (a == 1) return SpectralClass::center;
    return a > 1 ? SpectralClass::unstable : SpectralClass::stable;
}

// Image of the disk |z - c| <= r under z -> 1/conj(z), assuming 0 is outside the disk.
inline RootDisk reflect(const RootDisk& d) {
    long double c2 = std::norm(d.center);
    long double den = c2 - d.radius * d.radius;
    return {d.center / den, d.radius / std::fabs(den) * (1 + 1e-15L)};
}

inline bool disks_meet(const RootDisk& a, const RootDisk& b) {
    return std::abs(a.center - b.center) <= (a.radius + b.radius) * (1 + 1e-15L);
}

// Classifies each root disk of a squarefree polynomial whose root set is
// closed under z -> 1/conj(z). A disk straddling the unit circle whose
// reflection meets no other disk encloses a root exactly on the circle.
inline std::vector<SpectralClass> classify_disks(const std::vector<RootDisk>& disks, bool reflection_closed) {
    std::vector<SpectralClass> out;
    for (std::size_t i = 0; i < disks.size(); ++i) {
        long double m = std::abs(disks[i].center);
        long double r = disks[i].radius * (1 + 1e-15L);
        if (m + r < 1) {
            out.push_back(SpectralClass::stable);
            continue;
        }
        if (m - r > 1) {
            out.push_back(SpectralClass::unstable);
            continue;
        }
        bool on_circle = false;
        if (reflection_closed && m > r) {
            RootDisk refl = reflect(disks[i]);
            on_circle = true;
            for (std::size_t j = 0; j < disks.size(); ++j)
                if (j != i && disks_meet(refl, disks[j])) on_circle = false;
        }
        if (!on_circle)
            fail(ErrorKind::indeterminate_splitting,
                 "eigenvalue enclosure straddles the unit circle without certifying a point on it");
        out.push_back(SpectralClass::center);
    }
    return out;
}

// Tries to split a squarefree rational polynomial into the product of its
// roots of one class and the rest, reconstructing the factor's coefficients
// as rationals and confirming by exact division.
inline std::optional<UPoly> class_factor(const UPoly& p, const std::vector<RootDisk>& disks,
                                         const std::vector<SpectralClass>& cls, SpectralClass want) {
    using C = std::complex<long double>;
    std::vector<C> f{C(1)};
    for (std::size_t i = 0; i < disks.size(); ++i) {
        if (cls[i] != want) continue;
        std::vector<C> g(f.size() + 1, C(0));
        for (std::size_t j = 0; j < f.size(); ++j) {
            g[j + 1] += f[j];
            g[j] -= f[j] * disks[i].center;
        }
        f = g;
    }
    if (f.size() == 1) return UPoly{1};
    UPoly monic_p = p.monic();
    std::vector<Rational> coeffs;
    for (const auto& c : f) {
        long double x = c.real();
        Integer h0 = 0, h1 = 1, k0 = 1, k1 = 0;
        long double rem = x;
        std::optional<Rational> best;
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
            if (std::fabs(static_cast<long double>(to_double(cand)) - x) <= 1e-12L * (1 + std::fabs(x))) {
                best = cand;
                break;
            }
            long double frac = rem - fl;
            if (frac < 1e-18L) break;
            rem = 1 / frac;
        }
        if (!best) return std::nullopt;
        coeffs.push_back(*best);
    }
    UPoly cand(coeffs);
    auto [q, r] = monic_p.divmod(cand);
    if (!r.is_zero()) return std::nullopt;
    return cand;
}

}  // namespace detail

/// Splits the spectrum of A into center, unstable and stable parts with an
/// exact rational change of basis.
inline LinearSplitting split_spectrum(const RMatrix& A) {
    require(A.square() && A.rows() > 0, "split_spectrum needs a nonempty square matrix");
    std::size_t n = A.rows();
    LinearSplitting s;
    s.dim = n;
    s.A = A;

    UPoly q = characteristic_polynomial(A);
    std::vector<Rational> rroots = rational_roots(q);
    UPoly rest = q;
    // group rational roots with multiplicity
    std::vector<std::pair<Rational, int>> grouped;
    for (const auto& r : rroots) {
        if (!grouped.empty() && grouped.back().first == r)
            ++grouped.back().second;
        else
            grouped.emplace_back(r, 1);
        rest = rest.divmod(UPoly{-r, 1}).first;
    }

    // exact factors per class: (polynomial, exponent)
    struct Factor {
        UPoly f;
        int power;
        SpectralClass cls;
    };
    std::vector<Factor> factors;
    for (const auto& [r, mult] : grouped) {
        SpectralClass c = detail::classify_rational(r);
        factors.push_back({UPoly{-r, 1}, mult, c});
        Eigenvalue e;
        e.cls = c;
        e.exact = true;
        e.value = r;
        e.center = to_long_double(r);
        e.multiplicity = mult;
        s.eigenvalues.push_back(e);
    }

    if (rest.degree() >= 1) {
        UPoly sf = squarefree_part(rest);
        UPoly g = gcd(sf, sf.reversed());
        UPoly h = sf.divmod(g).first;
        for (const auto& [part, closed] : {std::pair<UPoly, bool>{g, true}, std::pair<UPoly, bool>{h, false}}) {
            if (part.degree() < 1) continue;
            auto disks = root_disks(part);
            auto cls = detail::classify_disks(disks, closed);
            for (std::size_t i = 0; i < disks.size(); ++i) {
                Eigenvalue e;
                e.cls = cls[i];
                e.center = disks[i].center;
                e.radius = disks[i].radius;
                s.eigenvalues.push_back(e);
            }
            for (SpectralClass c : {SpectralClass::center, SpectralClass::unstable, SpectralClass::stable}) {
                if (std::find(cls.begin(), cls.end(), c) == cls.end()) continue;
                bool all_same = std::all_of(cls.begin(), cls.end(), [&](SpectralClass x) { return x == c; });
                if (all_same) {
                    factors.push_back({part, static_cast<int>(n), c});
                    continue;
                }
                auto f = detail::class_factor(part, disks, cls, c);
                if (!f)
                    fail(ErrorKind::indeterminate_splitting,
                         "an irreducible factor of the characteristic polynomial mixes spectral classes; "
                         "no rational invariant splitting exists");
                factors.push_back({*f, static_cast<int>(n), c});
            }
        }
    }

    std::vector<RVector> basis;
    std::size_t counts[3] = {0, 0, 0};
    int slot = 0;
    for (SpectralClass c : {SpectralClass::center, SpectralClass::unstable, SpectralClass::stable}) {
        UPoly prod{1};
        bool any = false;
        for (const auto& f : factors)
            if (f.cls == c) {
                for (int p = 0; p < f.power; ++p) prod = prod * f.f;
                any = true;
            }
        if (any) {
            auto vs = nullspace(eval_matrix(prod, A));
            counts[slot] = vs.size();
            basis.insert(basis.end(), vs.begin(), vs.end());
        }
        ++slot;
    }
    if (basis.size() != n)
        fail(ErrorKind::indeterminate_splitting, "invariant subspaces do not span the phase space");
    s.dim_c = counts[0];
    s.dim_u = counts[1];
    s.dim_s = counts[2];
    s.T_inv = RMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) s.T_inv(i, j) = basis[j][i];
    s.T = inverse(s.T_inv);
    s.A_split = s.T * A * s.T_inv;

    // the blocks must decouple exactly
    auto cls_of = [&](std::size_t i) { return i < s.dim_c ? 0 : i < s.dim_c + s.dim_u ? 1 : 2; };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (cls_of(i) != cls_of(j) && s.A_split(i, j) != 0)
                fail(ErrorKind::indeterminate_splitting, "change of basis does not block-diagonalize A");

    auto nrm = [](const RMatrix& m) { return Interval::from_rational(m.rows() ? norm_inf(m) : Rational(0)); };
    s.norms.Ac = nrm(s.A_c());
    s.norms.Au = nrm(s.A_u());
    s.norms.As = nrm(s.A_s());
    require(s.dim_c == 0 || rank(s.A_c()) == s.dim_c, "center block is singular");
    require(s.dim_u == 0 || rank(s.A_u()) == s.dim_u, "unstable block is singular");
    s.norms.Ac_inv = s.dim_c ? nrm(inverse(s.A_c())) : Interval(0.0);
    s.norms.Au_inv = s.dim_u ? nrm(inverse(s.A_u())) : Interval(0.0);
    return s;
}

/// Exact block norms for the rate conditions.
struct ExactNorms {
    Rational Ac, As, Ac_inv, Au_inv;
};

inline ExactNorms exact_norms(const LinearSplitting& s) {
    ExactNorms e;
    e.Ac = s.dim_c ? norm_inf(s.A_c()) : Rational(0);
    e.As = s.dim_s ? norm_inf(s.A_s()) : Rational(0);
    e.Ac_inv = s.dim_c ? norm_inf(inverse(s.A_c())) : Rational(0);
    e.Au_inv = s.dim_u ? norm_inf(inverse(s.A_u())) : Rational(0);
    return e;
}

struct RateCondition {
    std::string name;
    Interval value;
    bool pass = false;
};

struct RateReport {
    int order = 0;
    std::vector<RateCondition> conditions;
    bool plain_pass() const { return conditions[0].pass && conditions[1].pass; }
    bool param_pass() const { return conditions[2].pass && conditions[3].pass; }
    bool all_pass() const { return plain_pass() && param_pass(); }
};

/// Rate conditions from block norms: the plain variant for every order up to
/// n and the parameter variant with max{1, .} at order n.
inline RateReport check_rate_conditions(const ExactNorms& e, int n) {
    require(n >= 1, "rate conditions need n >= 1");
    RateReport rep;
    rep.order = n;
    Rational worst_s = 0, worst_u = 0;
    for (int k = 1; k <= n; ++k) {
        worst_s = std::max(worst_s, rpow(e.Ac_inv, k) * e.As);
        worst_u = std::max(worst_u, e.Au_inv * rpow(e.Ac, k));
    }
    Rational param_s = rpow(std::max(Rational(1), e.Ac_inv), n) * e.As;
    Rational param_u = e.Au_inv * rpow(std::max(Rational(1), e.Ac), n);
    auto add = [&](const std::string& name, const Rational& v) {
        rep.conditions.push_back({name, Interval::from_rational(v), v < 1});
    };
    add("max_k ||A_c^-1||^k ||A_s|| < 1", worst_s);
    add("max_k ||A_u^-1|| ||A_c||^k < 1", worst_u);
    add("max{1,||A_c^-1||}^n ||A_s|| < 1", param_s);
    add("||A_u^-1|| max{1,||A_c||}^n < 1", param_u);
    return rep;
}

inline RateReport check_rate_conditions(const LinearSplitting& s, int n) {
    return check_rate_conditions(exact_norms(s), n);
}

/// Parameter-extended linear system on R^k x X.
struct ExtendedSystem {
    LinearSplitting base;
    std::size_t k = 0;
    RMatrix C;                      // D_lambda F(0,0), original coordinates
    std::vector<RVector> x_vecs;    // hyperbolic parts, original coordinates
    std::vector<RVector> y_vecs;    // center parts, original coordinates
    Rational M = 1;
    RMatrix A_ext;                  // [[I, 0], [C, A]]
    LinearSplitting extended_splitting;
    RMatrix Ac_ext_inv;             // inverse of the extended center block in its basis
    Rational C_x = 0, C_y = 0;
};

namespace detail {

inline Rational extended_center_norm_bound(const ExactNorms& e, const Rational& M, const Rational& Cy) {
    return std::max(Rational(1), e.Ac + Cy / M);
}
inline Rational extended_center_inv_norm_bound(const ExactNorms& e, const Rational& M, const Rational& Cy) {
    return std::max(Rational(1), e.Ac_inv + e.Ac_inv * Cy / M);
}

}  // namespace detail

/// Builds the extended system for F(lambda, x) with D_lambda F(0,0) = C.
inline ExtendedSystem extend_with_parameters(const LinearSplitting& s, const RMatrix& C, const Rational& M = 1) {
    require(C.rows() == s.dim, "parameter matrix must have one row per phase variable");
    require(M > 0, "norm scale M must be positive");
    ExtendedSystem e;
    e.base = s;
    e.k = C.cols();
    e.C = C;
    e.M = M;
    std::size_t n = s.dim, k = e.k, nh = s.dim_u + s.dim_s;
    RMatrix Cs = s.T * C;  // split coordinates
    RMatrix Ahyp = s.A_split.block(s.dim_c, s.dim_c, nh, nh);
    RMatrix I_minus = RMatrix::identity(nh) - Ahyp;
    if (nh && rank(I_minus) < nh)
        fail(ErrorKind::precondition, "resonant parameter extension: 1 is an eigenvalue of a hyperbolic block");
    std::vector<RVector> xs_split, ys_split;
    for (std::size_t i = 0; i < k; ++i) {
        RVector ch(nh), cc(s.dim_c);
        for (std::size_t r = 0; r < s.dim_c; ++r) cc[r] = Cs(r, i);
        for (std::size_t r = 0; r < nh; ++r) ch[r] = Cs(s.dim_c + r, i);
        RVector xh = nh ? solve(I_minus, ch) : RVector{};
        RVector xz(n, Rational(0)), yz(n, Rational(0));
        for (std::size_t r = 0; r < nh; ++r) xz[s.dim_c + r] = xh[r];
        for (std::size_t r = 0; r < s.dim_c; ++r) yz[r] = cc[r];
        xs_split.push_back(xz);
        ys_split.push_back(yz);
        e.x_vecs.push_back(s.T_inv * xz);
        e.y_vecs.push_back(s.T_inv * yz);
        e.C_x = std::max(e.C_x, norm_inf(xz));
        e.C_y = std::max(e.C_y, norm_inf(yz));
    }

    e.A_ext = RMatrix(k + n, k + n);
    for (std::size_t i = 0; i < k; ++i) e.A_ext(i, i) = 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) e.A_ext(k + i, j) = C(i, j);
        for (std::size_t j = 0; j < n; ++j) e.A_ext(k + i, k + j) = s.A(i, j);
    }

    // basis of the extended center space: (e_i, x_i) then (0, center basis); then u, s
    RMatrix Tinv(k + n, k + n);
    for (std::size_t i = 0; i < k; ++i) {
        Tinv(i, i) = 1;
        for (std::size_t r = 0; r < n; ++r) Tinv(k + r, i) = e.x_vecs[i][r];
    }
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t r = 0; r < n; ++r) Tinv(k + r, k + j) = s.T_inv(r, j);
    LinearSplitting& x = e.extended_splitting;
    x.dim = k + n;
    x.A = e.A_ext;
    x.T_inv = Tinv;
    x.T = inverse(Tinv);
    x.A_split = x.T * x.A * x.T_inv;
    x.dim_c = k + s.dim_c;
    x.dim_u = s.dim_u;
    x.dim_s = s.dim_s;
    x.eigenvalues = s.eigenvalues;
    for (std::size_t i = 0; i < k; ++i) {
        Eigenvalue one;
        one.cls = SpectralClass::center;
        one.exact = true;
        one.value = 1;
        one.center = 1;
        x.eigenvalues.push_back(one);
    }
    auto cls_of = [&](std::size_t i) { return i < x.dim_c ? 0 : i < x.dim_c + x.dim_u ? 1 : 2; };
    for (std::size_t i = 0; i < x.dim; ++i)
        for (std::size_t j = 0; j < x.dim; ++j)
            if (cls_of(i) != cls_of(j) && x.A_split(i, j) != 0)
                fail(ErrorKind::certification, "extended subspaces are not invariant");
    e.Ac_ext_inv = inverse(x.A_split.block(0, 0, x.dim_c, x.dim_c));

    ExactNorms en = exact_norms(s);
    x.norms.Ac = Interval::from_rational(detail::extended_center_norm_bound(en, M, e.C_y));
    x.norms.Ac_inv = Interval::from_rational(detail::extended_center_inv_norm_bound(en, M, e.C_y));
    x.norms.Au = s.norms.Au;
    x.norms.Au_inv = s.norms.Au_inv;
    x.norms.As = s.norms.As;
    return e;
}

struct NormScaleReport {
    Rational M;
    Rational epsilon;
    bool epsilon_from_margin = true;
    Rational Ac_ext_bound, Ac_ext_inv_bound;
    RateReport extended_rates;
    std::vector<std::string> notes;
};

/// Smallest power of two M >= 1 making the extended center norms at most
/// max{1, ||A_c|| + eps} and max{1, ||A_c^-1|| + eps}.
inline NormScaleReport select_norm_scale(const ExtendedSystem& e, int n,
                                         std::optional<Rational> epsilon = std::nullopt) {
    ExactNorms en = exact_norms(e.base);
    RateReport base = check_rate_conditions(en, n);
    if (!base.param_pass())
        fail(ErrorKind::precondition, "parameter rate condition fails for the base splitting; no norm scale exists");
    NormScaleReport rep;
    rep.notes.push_back(
        "bound on the inverse extended center block uses ||A_c^-1|| + eps; epsilon and M are conventions");
    auto eps_ok = [&](const Rational& eps) {
        bool u = en.Au_inv * rpow(std::max(Rational(1), en.Ac + eps), n) < 1;
        bool s = rpow(std::max(Rational(1), en.Ac_inv + eps), n) * en.As < 1;
        return u && s;
    };
    if (epsilon) {
        require(*epsilon > 0, "epsilon must be positive");
        rep.epsilon = *epsilon;
        rep.epsilon_from_margin = false;
    } else {
        double mu = en.Au_inv > 0 ? std::pow(to_double(en.Au_inv), -1.0 / n) - to_double(en.Ac)
                                  : std::numeric_limits<double>::infinity();
        double ms = en.As > 0 ? std::pow(to_double(en.As), -1.0 / n) - to_double(en.Ac_inv)
                              : std::numeric_limits<double>::infinity();
        double margin = std::min(mu, ms);
        Rational eps = std::isfinite(margin) ? from_double(margin / 2) : Rational(1);
        while (!eps_ok(eps)) eps /= 2;
        rep.epsilon = eps;
    }
    if (!eps_ok(rep.epsilon)) fail(ErrorKind::precondition, "epsilon too large for the parameter rate condition");
    Rational M = 1;
    for (int guard = 0; guard < 4096; ++guard) {
        if (e.C_y / M <= rep.epsilon && en.Ac_inv * e.C_y / M <= rep.epsilon) break;
        M *= 2;
    }
    rep.M = M;
    rep.Ac_ext_bound = detail::extended_center_norm_bound(en, M, e.C_y);
    rep.Ac_ext_inv_bound = detail::extended_center_inv_norm_bound(en, M, e.C_y);
    ExactNorms ext = en;
    ext.Ac = rep.Ac_ext_bound;
    ext.Ac_inv = rep.Ac_ext_inv_bound;
    rep.extended_rates = check_rate_conditions(ext, n);
    if (!rep.extended_rates.all_pass())
        fail(ErrorKind::certification, "extended rate conditions fail at the selected norm scale");
    return rep;
}

inline nlohmann::json to_json(const RateReport& r) {
    nlohmann::json c = nlohmann::json::array();
    for (const auto& x : r.conditions) c.push_back({{"condition", x.name}, {"value", to_json(x.value)}, {"pass", x.pass}});
    return {{"order", r.order}, {"conditions", c}, {"pass", r.all_pass()}};
}

inline nlohmann::json to_json(const LinearSplitting& s) {
    nlohmann::json eig = nlohmann::json::array();
    for (const auto& e : s.eigenvalues) eig.push_back({{"value", e.describe()}, {"class", to_string(e.cls)}});
    return {{"dim", s.dim},
            {"A", to_json(s.A)},
            {"T", to_json(s.T)},
            {"T_inv", to_json(s.T_inv)},
            {"A_split", to_json(s.A_split)},
            {"blocks", {{"center", s.dim_c}, {"unstable", s.dim_u}, {"stable", s.dim_s}}},
            {"eigenvalues", eig},
            {"norms",
             {{"A_c", to_json(s.norms.Ac)},
              {"A_u", to_json(s.norms.Au)},
              {"A_s", to_json(s.norms.As)},
              {"A_c_inv", to_json(s.norms.Ac_inv)},
              {"A_u_inv", to_json(s.norms.Au_inv)}}}};
}

/// FNV-1a over the exact entries of A and T.
inline std::string splitting_hash(const LinearSplitting& s) {
    std::uint64_t h = 1469598103934665603ull;
    auto feed = [&](const std::string& str) {
        for (unsigned char c : str) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0xff;
        h *= 1099511628211ull;
    };
    for (const RMatrix* m : {&s.A, &s.T})
        for (std::size_t i = 0; i < m->rows(); ++i)
            for (std::size_t j = 0; j < m->cols(); ++j) feed((*m)(i, j).str());
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace cmcert
