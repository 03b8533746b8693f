#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "interval.hpp"
#include "rational.hpp"

namespace cmcert {

using Exponents = std::vector<int>;

/// All exponent vectors with weighted degree at most `order`, sorted by
/// weighted degree and then lexicographically (descending in the first variable).
class MonomialBasis {
public:
    static std::shared_ptr<const MonomialBasis> get(const std::vector<int>& weights, int order) {
        static std::mutex mutex;
        static std::map<std::pair<std::vector<int>, int>, std::shared_ptr<const MonomialBasis>> cache;
        std::lock_guard<std::mutex> lock(mutex);
        auto key = std::make_pair(weights, order);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        auto basis = std::shared_ptr<const MonomialBasis>(new MonomialBasis(weights, order));
        cache.emplace(key, basis);
        return basis;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::size_t size() const { return exps_.size(); }
    std::size_t num_vars() const { return weights_.size(); }
    int order() const { return order_; }
    const std::vector<int>& weights() const { return weights_; }
    const Exponents& exps(std::size_t i) const { return exps_[i]; }
    int degree(std::size_t i) const { return degrees_[i]; }
    std::uint64_t key(std::size_t i) const { return keys_[i]; }

    int degree_of(const Exponents& e) const {
        int d = 0;
        for (std::size_t v = 0; v < e.size(); ++v) d += weights_[v] * e[v];
        return d;
    }

    std::size_t index(const Exponents& e) const {
        if (e.size() != weights_.size()) return npos;
        std::uint64_t k = 0;
        for (std::size_t v = e.size(); v-- > 0;) {
            if (e[v] < 0 || e[v] > order_) return npos;
            k = k * radix_ + static_cast<std::uint64_t>(e[v]);
        }
        return index_of_key(k);
    }

    /// Keys add when exponents add, as long as no exponent exceeds the order.
    std::size_t index_of_key(std::uint64_t k) const {
        if (!dense_.empty()) return k < dense_.size() ? dense_[k] : npos;
        auto it = sparse_.find(k);
        return it == sparse_.end() ? npos : it->second;
    }

    /// Indices of the monomials of weighted degree exactly d.
    std::pair<std::size_t, std::size_t> degree_range(int d) const {
        if (d < 0 || d > order_) return {0, 0};
        return {start_[d], start_[d + 1]};
    }

private:
    MonomialBasis(std::vector<int> weights, int order)
        : weights_(std::move(weights)), order_(order), radix_(static_cast<std::uint64_t>(order) + 1) {
        require(order >= 0, "negative truncation order");
        for (int w : weights_) require(w >= 1, "variable weights must be positive");
        std::size_t n = weights_.size();
        Exponents e(n, 0);
        enumerate(e, 0, 0);
        std::stable_sort(exps_.begin(), exps_.end(), [this](const Exponents& a, const Exponents& b) {
            int da = degree_of(a), db = degree_of(b);
            if (da != db) return da < db;
            return a > b;
        });
        double table = std::pow(static_cast<double>(radix_), static_cast<double>(n));
        if (table <= static_cast<double>(1u << 22)) dense_.assign(static_cast<std::size_t>(table), npos);
        start_.assign(static_cast<std::size_t>(order_) + 2, 0);
        for (std::size_t i = 0; i < exps_.size(); ++i) {
            std::uint64_t k = 0;
            for (std::size_t v = n; v-- > 0;) k = k * radix_ + static_cast<std::uint64_t>(exps_[i][v]);
            keys_.push_back(k);
            degrees_.push_back(degree_of(exps_[i]));
            if (!dense_.empty())
                dense_[k] = i;
            else
                sparse_.emplace(k, i);
            ++start_[degrees_.back() + 1];
        }
        for (std::size_t d = 1; d < start_.size(); ++d) start_[d] += start_[d - 1];
    }

    void enumerate(Exponents& e, std::size_t v, int used) {
        if (v == e.size()) {
            exps_.push_back(e);
            return;
        }
        for (int p = 0; used + p * weights_[v] <= order_; ++p) {
            e[v] = p;
            enumerate(e, v + 1, used + p * weights_[v]);
        }
        e[v] = 0;
    }

    std::vector<int> weights_;
    int order_;
    std::uint64_t radix_;
    std::vector<Exponents> exps_;
    std::vector<int> degrees_;
    std::vector<std::uint64_t> keys_;
    std::vector<std::size_t> dense_;
    std::unordered_map<std::uint64_t, std::size_t> sparse_;
    std::vector<std::size_t> start_;
};

/// Truncated polynomial in k parameter variables followed by m phase
/// variables, with exact rational coefficients. Truncation is by weighted
/// degree; all weights are 1 unless a weighted layout is requested.
class TaylorJet {
public:
    TaylorJet() : TaylorJet(0, 0, 0) {}

    TaylorJet(std::size_t params, std::size_t phase, int order, std::vector<int> weights = {})
        : k_(params), m_(phase) {
        if (weights.empty()) weights.assign(params + phase, 1);
        require(weights.size() == params + phase, "weight vector does not match variable count");
        basis_ = MonomialBasis::get(weights, order);
        c_.assign(basis_->size(), Rational(0));
    }

    static TaylorJet constant(std::size_t params, std::size_t phase, int order, const Rational& value,
                              std::vector<int> weights = {}) {
        TaylorJet j(params, phase, order, std::move(weights));
        j.set(Exponents(params + phase, 0), value);
        return j;
    }

    /// The jet of the coordinate function for variable `var` (params first).
    static TaylorJet variable(std::size_t params, std::size_t phase, int order, std::size_t var,
                              std::vector<int> weights = {}) {
        TaylorJet j(params, phase, order, std::move(weights));
        require(var < params + phase, "variable index out of range");
        Exponents e(params + phase, 0);
        e[var] = 1;
        if (j.basis_->degree_of(e) <= order) j.set(e, 1);
        return j;
    }

    TaylorJet zero_like() const { return TaylorJet(k_, m_, max_order(), weights()); }

    std::size_t num_params() const { return k_; }
    std::size_t num_phase() const { return m_; }
    std::size_t num_vars() const { return k_ + m_; }
    int max_order() const { return basis_->order(); }
    const std::vector<int>& weights() const { return basis_->weights(); }
    const MonomialBasis& basis() const { return *basis_; }
    bool same_layout(const TaylorJet& o) const {
        return k_ == o.k_ && m_ == o.m_ && weights() == o.weights();
    }

    int degree_of(const Exponents& e) const { return basis_->degree_of(e); }

    Rational coeff(const Exponents& e) const {
        std::size_t i = basis_->index(e);
        return i == MonomialBasis::npos ? Rational(0) : c_[i];
    }

    void set(const Exponents& e, const Rational& value) {
        require(e.size() == num_vars(), "exponent vector has wrong length");
        std::size_t i = basis_->index(e);
        require(i != MonomialBasis::npos, "monomial exceeds the truncation order");
        c_[i] = value;
    }

    void add_to(const Exponents& e, const Rational& value) {
        std::size_t i = basis_->index(e);
        require(i != MonomialBasis::npos, "monomial exceeds the truncation order");
        c_[i] += value;
    }

    const Rational& coeff_at(std::size_t i) const { return c_[i]; }
    Rational& coeff_at(std::size_t i) { return c_[i]; }

    /// Nonzero terms in basis order.
    std::vector<std::pair<Exponents, Rational>> terms() const {
        std::vector<std::pair<Exponents, Rational>> out;
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (c_[i] != 0) out.emplace_back(basis_->exps(i), c_[i]);
        return out;
    }

    bool is_zero() const {
        return std::all_of(c_.begin(), c_.end(), [](const Rational& r) { return r == 0; });
    }

    /// Lowest weighted degree carrying a nonzero coefficient, or -1 for the zero jet.
    int valuation() const {
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (c_[i] != 0) return basis_->degree(i);
        return -1;
    }

    TaylorJet truncate(int order) const {
        TaylorJet out(k_, m_, std::min(order, max_order()), weights());
        for (std::size_t i = 0; i < out.c_.size(); ++i) out.c_[i] = coeff(out.basis_->exps(i));
        return out;
    }

    /// Same coefficients in a layout with a larger truncation order.
    TaylorJet promote(int order) const {
        require(order >= max_order(), "promote cannot lower the order");
        TaylorJet out(k_, m_, order, weights());
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (c_[i] != 0) out.set(basis_->exps(i), c_[i]);
        return out;
    }

    TaylorJet homogeneous_part(int d) const {
        TaylorJet out = zero_like();
        auto [b, e] = basis_->degree_range(d);
        for (std::size_t i = b; i < e; ++i) out.c_[i] = c_[i];
        return out;
    }

    /// Terms of weighted degree in [lo, hi].
    TaylorJet degree_band(int lo, int hi) const {
        TaylorJet out = zero_like();
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (basis_->degree(i) >= lo && basis_->degree(i) <= hi) out.c_[i] = c_[i];
        return out;
    }

    TaylorJet operator-() const {
        TaylorJet out = *this;
        for (auto& c : out.c_) c = -c;
        return out;
    }

    TaylorJet& operator+=(const TaylorJet& o) { return *this = *this + o; }
    TaylorJet& operator-=(const TaylorJet& o) { return *this = *this - o; }
    TaylorJet& operator*=(const TaylorJet& o) { return *this = *this * o; }

    friend TaylorJet operator+(const TaylorJet& a, const TaylorJet& b) { return combine(a, b, 1); }
    friend TaylorJet operator-(const TaylorJet& a, const TaylorJet& b) { return combine(a, b, -1); }

    friend TaylorJet operator*(const TaylorJet& a, const TaylorJet& b) {
        require(a.same_layout(b), "jet layouts differ");
        int order = std::min(a.max_order(), b.max_order());
        const TaylorJet& x = a.max_order() == order ? a : b;
        const TaylorJet& y = a.max_order() == order ? b : a;
        TaylorJet out = x.zero_like();
        const MonomialBasis& bx = *x.basis_;
        const MonomialBasis& by = *y.basis_;
        std::vector<std::pair<std::size_t, const Rational*>> ys;
        for (std::size_t j = 0; j < y.c_.size(); ++j)
            if (y.c_[j] != 0 && by.degree(j) <= order) ys.emplace_back(bx.index(by.exps(j)), &y.c_[j]);
        for (std::size_t i = 0; i < x.c_.size(); ++i) {
            if (x.c_[i] == 0) continue;
            int di = bx.degree(i);
            for (const auto& [j, cy] : ys) {
                if (di + bx.degree(j) > order) continue;
                out.c_[bx.index_of_key(bx.key(i) + bx.key(j))] += x.c_[i] * *cy;
            }
        }
        return out;
    }

    friend TaylorJet operator*(const Rational& s, const TaylorJet& a) {
        TaylorJet out = a;
        for (auto& c : out.c_) c *= s;
        return out;
    }
    friend TaylorJet operator*(const TaylorJet& a, const Rational& s) { return s * a; }

    friend bool operator==(const TaylorJet& a, const TaylorJet& b) {
        if (!a.same_layout(b)) return false;
        int order = std::max(a.max_order(), b.max_order());
        const TaylorJet& big = a.max_order() == order ? a : b;
        const TaylorJet& small = a.max_order() == order ? b : a;
        for (std::size_t i = 0; i < big.c_.size(); ++i) {
            const Exponents& e = big.basis_->exps(i);
            if (big.c_[i] != small.coeff(e)) return false;
        }
        return true;
    }

    Rational eval(const std::vector<Rational>& point) const {
        require(point.size() == num_vars(), "evaluation point has wrong dimension");
        std::vector<std::vector<Rational>> pw(num_vars());
        for (std::size_t v = 0; v < num_vars(); ++v) {
            pw[v].push_back(Rational(1));
            for (int p = 1; p <= max_order(); ++p) pw[v].push_back(pw[v].back() * point[v]);
        }
        Rational out = 0;
        for (std::size_t i = 0; i < c_.size(); ++i) {
            if (c_[i] == 0) continue;
            Rational t = c_[i];
            const Exponents& e = basis_->exps(i);
            for (std::size_t v = 0; v < e.size(); ++v)
                if (e[v]) t *= pw[v][e[v]];
            out += t;
        }
        return out;
    }

    template <class Real>
    Real eval_real(const std::vector<Real>& point) const {
        require(point.size() == num_vars(), "evaluation point has wrong dimension");
        Real out = 0;
        for (std::size_t i = 0; i < c_.size(); ++i) {
            if (c_[i] == 0) continue;
            Real t = static_cast<Real>(to_long_double(c_[i]));
            const Exponents& e = basis_->exps(i);
            for (std::size_t v = 0; v < e.size(); ++v)
                for (int p = 0; p < e[v]; ++p) t *= point[v];
            out += t;
        }
        return out;
    }

    double eval_double(const std::vector<double>& point) const { return eval_real<double>(point); }

    /// Enclosure of the jet over a box by summing interval monomials.
    Interval eval_interval_naive(const Box& box) const {
        require(box.size() == num_vars(), "box dimension does not match jet variables");
        std::vector<std::vector<Interval>> pw(num_vars());
        for (std::size_t v = 0; v < num_vars(); ++v)
            for (int p = 0; p <= max_order(); ++p) pw[v].push_back(pow(box[v], static_cast<unsigned>(p)));
        Interval out(0.0);
        for (std::size_t i = 0; i < c_.size(); ++i) {
            if (c_[i] == 0) continue;
            Interval t = Interval::from_rational(c_[i]);
            const Exponents& e = basis_->exps(i);
            for (std::size_t v = 0; v < e.size(); ++v)
                if (e[v]) t *= pw[v][e[v]];
            out += t;
        }
        return out;
    }

    std::string to_string(const std::vector<std::string>& names = {}) const {
        std::vector<std::string> n = names;
        if (n.empty()) n = default_names();
        std::ostringstream os;
        bool first = true;
        for (std::size_t i = 0; i < c_.size(); ++i) {
            if (c_[i] == 0) continue;
            Rational c = c_[i];
            bool neg = c < 0;
            if (neg) c = -c;
            os << (first ? (neg ? "-" : "") : (neg ? " - " : " + "));
            first = false;
            const Exponents& e = basis_->exps(i);
            std::string mono;
            for (std::size_t v = 0; v < e.size(); ++v) {
                if (!e[v]) continue;
                if (!mono.empty()) mono += "*";
                mono += n[v];
                if (e[v] > 1) mono += "^" + std::to_string(e[v]);
            }
            if (mono.empty())
                os << c.str();
            else if (c == 1)
                os << mono;
            else
                os << c.str() << "*" << mono;
        }
        if (first) os << "0";
        return os.str();
    }

    std::vector<std::string> default_names() const {
        std::vector<std::string> n;
        for (std::size_t i = 0; i < k_; ++i) n.push_back(k_ == 1 ? "lambda" : "lambda" + std::to_string(i + 1));
        for (std::size_t i = 0; i < m_; ++i) n.push_back(m_ == 1 ? "x" : "x" + std::to_string(i + 1));
        return n;
    }

private:
    static TaylorJet combine(const TaylorJet& a, const TaylorJet& b, int sign) {
        require(a.same_layout(b), "jet layouts differ");
        int order = std::min(a.max_order(), b.max_order());
        TaylorJet out = a.max_order() == order ? a : a.truncate(order);
        for (std::size_t i = 0; i < out.c_.size(); ++i) {
            Rational v = b.coeff(out.basis_->exps(i));
            if (v != 0) out.c_[i] += sign > 0 ? v : Rational(-v);
        }
        return out;
    }

    std::size_t k_ = 0;
    std::size_t m_ = 0;
    std::shared_ptr<const MonomialBasis> basis_;
    std::vector<Rational> c_;
};

using JetMap = std::vector<TaylorJet>;

/// Substitutes `inners` for the phase variables of `outer`; parameters pass through.
/// The result lives in the layout of the inners, truncated at `order`.
inline TaylorJet jet_compose(const TaylorJet& outer, const std::vector<TaylorJet>& inners, int order,
                             bool allow_constant_shift = false) {
    require(outer.num_phase() == inners.size(),
            "composition arity mismatch: outer has " + std::to_string(outer.num_phase()) +
                " phase variables but " + std::to_string(inners.size()) + " inner jets were given");
    std::size_t k = outer.num_params();
    const TaylorJet* ref = inners.empty() ? &outer : &inners.front();
    for (const auto& q : inners) {
        require(q.same_layout(*ref), "inner jets do not share a variable layout");
        if (!allow_constant_shift)
            require(q.coeff(Exponents(q.num_vars(), 0)) == 0,
                    "inner jet has a nonzero constant term; composition would need an infinite series");
    }
    require(ref->num_params() == k, "parameter blocks of outer and inner jets differ");
    int inner_order = ref->max_order();
    for (const auto& q : inners) inner_order = std::min(inner_order, q.max_order());
    require(order <= inner_order, "composition order exceeds the order of the inner jets");

    std::size_t kk = ref->num_params(), mm = ref->num_phase();
    const std::vector<int>& w = ref->weights();
    std::vector<TaylorJet> subs;
    for (std::size_t i = 0; i < k; ++i) subs.push_back(TaylorJet::variable(kk, mm, order, i, w));
    for (const auto& q : inners) subs.push_back(q.truncate(order));

    std::vector<std::vector<TaylorJet>> pw(subs.size());
    auto power = [&](std::size_t v, int p) -> const TaylorJet& {
        auto& cache = pw[v];
        if (cache.empty()) cache.push_back(TaylorJet::constant(kk, mm, order, 1, w));
        while (static_cast<int>(cache.size()) <= p) cache.push_back(cache.back() * subs[v]);
        return cache[p];
    };

    TaylorJet out(kk, mm, order, w);
    for (const auto& [e, c] : outer.terms()) {
        TaylorJet t = TaylorJet::constant(kk, mm, order, c, w);
        for (std::size_t v = 0; v < e.size(); ++v)
            if (e[v]) t = t * power(v, e[v]);
        out += t;
    }
    return out;
}

inline JetMap jet_compose(const JetMap& outer, const std::vector<TaylorJet>& inners, int order,
                          bool allow_constant_shift = false) {
    JetMap out;
    for (const auto& o : outer) out.push_back(jet_compose(o, inners, order, allow_constant_shift));
    return out;
}

/// Formal partial derivative; the truncation order drops by the variable's weight.
inline TaylorJet jet_derivative(const TaylorJet& p, std::size_t var) {
    require(var < p.num_vars(), "derivative variable index out of range");
    int order = std::max(0, p.max_order() - p.weights()[var]);
    TaylorJet out(p.num_params(), p.num_phase(), order, p.weights());
    for (auto [e, c] : p.terms()) {
        if (e[var] == 0) continue;
        Rational f = c * e[var];
        e[var] -= 1;
        if (p.degree_of(e) <= order) out.add_to(e, f);
    }
    return out;
}

/// Enclosure of the range of p over `domain`, subdividing each nondegenerate
/// axis into `splits` pieces (fewer if the total box count would exceed `max_boxes`).
inline Interval jet_eval_interval(const TaylorJet& p, const Box& domain, int splits = 8,
                                  std::size_t max_boxes = 1u << 16) {
    require(domain.size() == p.num_vars(), "box dimension does not match jet variables");
    std::vector<std::size_t> axes;
    for (std::size_t v = 0; v < domain.size(); ++v)
        if (domain[v].width() > 0) axes.push_back(v);
    int s = std::max(1, splits);
    while (s > 1 && std::pow(static_cast<double>(s), static_cast<double>(axes.size())) > max_boxes) --s;
    std::vector<std::vector<Interval>> pieces(domain.size());
    for (std::size_t v = 0; v < domain.size(); ++v) {
        if (std::find(axes.begin(), axes.end(), v) == axes.end() || s == 1) {
            pieces[v].push_back(domain[v]);
            continue;
        }
        double lo = domain[v].lo, hi = domain[v].hi;
        double prev = lo;
        for (int i = 1; i <= s; ++i) {
            double next = i == s ? hi : lo + (hi - lo) * (static_cast<double>(i) / s);
            next = std::clamp(next, prev, hi);
            pieces[v].push_back(Interval(prev, next));
            prev = next;
        }
    }
    std::vector<std::size_t> idx(domain.size(), 0);
    Box sub(domain.size());
    bool have = false;
    Interval out(0.0);
    while (true) {
        for (std::size_t v = 0; v < domain.size(); ++v) sub[v] = pieces[v][idx[v]];
        Interval r = p.eval_interval_naive(sub);
        out = have ? hull(out, r) : r;
        have = true;
        std::size_t v = 0;
        while (v < domain.size() && ++idx[v] == pieces[v].size()) idx[v++] = 0;
        if (v == domain.size()) break;
    }
    return out;
}

/// Substitutes exact values for the parameter block, leaving a jet in the phase variables.
inline TaylorJet substitute_params(const TaylorJet& p, const std::vector<Rational>& values) {
    require(values.size() == p.num_params(), "wrong number of parameter values");
    std::vector<int> w(p.weights().begin() + static_cast<long>(p.num_params()), p.weights().end());
    int order = 0;
    for (const auto& [e, c] : p.terms()) {
        int d = 0;
        for (std::size_t v = p.num_params(); v < e.size(); ++v) d += p.weights()[v] * e[v];
        order = std::max(order, d);
    }
    order = std::max(order, p.max_order());
    TaylorJet out(0, p.num_phase(), order, w);
    for (const auto& [e, c] : p.terms()) {
        Rational t = c;
        for (std::size_t v = 0; v < p.num_params(); ++v) t *= rpow(values[v], static_cast<unsigned>(e[v]));
        Exponents x(e.begin() + static_cast<long>(p.num_params()), e.end());
        out.add_to(x, t);
    }
    return out;
}

inline nlohmann::json to_json(const TaylorJet& p) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [e, c] : p.terms())
        terms.push_back({{"exps", e}, {"num", numerator(c).str()}, {"den", denominator(c).str()}});
    nlohmann::json j = {{"vars", {{"params", p.num_params()}, {"phase", p.num_phase()}}},
                        {"order", p.max_order()},
                        {"terms", terms}};
    bool unit = std::all_of(p.weights().begin(), p.weights().end(), [](int w) { return w == 1; });
    if (!unit) j["weights"] = p.weights();
    return j;
}

inline TaylorJet jet_from_json(const nlohmann::json& j) {
    try {
        std::size_t k = j.at("vars").at("params").get<std::size_t>();
        std::size_t m = j.at("vars").at("phase").get<std::size_t>();
        int order = j.at("order").get<int>();
        std::vector<int> w;
        if (j.contains("weights")) w = j.at("weights").get<std::vector<int>>();
        TaylorJet p(k, m, order, w);
        for (const auto& t : j.at("terms")) {
            Exponents e = t.at("exps").get<Exponents>();
            Rational num = parse_rational(t.at("num").get<std::string>());
            Rational den = t.contains("den") ? parse_rational(t.at("den").get<std::string>()) : Rational(1);
            require(den != 0, "zero denominator in jet term");
            require(e.size() == k + m, "jet term has wrong exponent length");
            require(p.degree_of(e) <= order, "jet term exceeds the declared order");
            p.add_to(e, num / den);
        }
        return p;
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::precondition, std::string("malformed jet JSON: ") + ex.what());
    }
}

}  // namespace cmcert
