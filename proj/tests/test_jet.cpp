#include <gtest/gtest.h>

#include <random>

#include "cmcert/jet.hpp"

using namespace cmcert;

namespace {

// Jet in (lambda, x) from a list of (lambda-exp, x-exp, value) terms.
TaylorJet lx(int order, std::initializer_list<std::tuple<int, int, Rational>> terms) {
    TaylorJet p(1, 1, order);
    for (const auto& [a, b, c] : terms) p.add_to({a, b}, c);
    return p;
}

TaylorJet random_jet(std::mt19937_64& rng, std::size_t k, std::size_t m, int order, bool zero_constant = false) {
    std::uniform_int_distribution<int> num(-9, 9), den(1, 5), keep(0, 2);
    TaylorJet p(k, m, order);
    for (std::size_t i = 0; i < p.basis().size(); ++i) {
        if (zero_constant && p.basis().degree(i) == 0) continue;
        if (keep(rng) == 0) continue;
        p.coeff_at(i) = Rational(num(rng)) / den(rng);
    }
    return p;
}

}  // namespace

TEST(JetCompose, IdentityOuterReturnsInner) {
    std::mt19937_64 rng(7);
    TaylorJet q = random_jet(rng, 1, 1, 5, true);
    TaylorJet x = TaylorJet::variable(1, 1, 5, 1);
    EXPECT_EQ(jet_compose(x, {q}, 5), q);
}

TEST(JetCompose, SelfCompositionOfCenterNormalForm) {
    TaylorJet p(0, 1, 3);
    p.set({1}, -1);
    p.set({3}, -4);
    TaylorJet expected(0, 1, 3);
    expected.set({1}, 1);
    expected.set({3}, 8);
    EXPECT_EQ(jet_compose(p, {p}, 3), expected);
}

TEST(JetCompose, ParametersPassThroughAndPhaseScales) {
    TaylorJet outer = lx(3, {{0, 1, -1}, {1, 1, 1}, {0, 3, -4}});
    TaylorJet two_x = lx(3, {{0, 1, 2}});
    TaylorJet expected = lx(3, {{0, 1, -2}, {1, 1, 2}, {0, 3, -32}});
    EXPECT_EQ(jet_compose(outer, {two_x}, 3), expected);
}

TEST(JetCompose, ArityMismatchAndConstantShiftAreRejected) {
    TaylorJet outer(0, 2, 3);
    TaylorJet q = TaylorJet::variable(0, 1, 3, 0);
    EXPECT_THROW(jet_compose(outer, {q}, 3), Error);
    TaylorJet shifted = q + TaylorJet::constant(0, 1, 3, 1);
    TaylorJet sq = TaylorJet::variable(0, 1, 3, 0) * TaylorJet::variable(0, 1, 3, 0);
    EXPECT_THROW(jet_compose(sq, {shifted}, 3), Error);
    // permitted shift of a polynomial outer is exact: (x+1)^2 = 1 + 2x + x^2
    TaylorJet r = jet_compose(sq, {shifted}, 3, true);
    EXPECT_EQ(r.coeff({0}), 1);
    EXPECT_EQ(r.coeff({1}), 2);
    EXPECT_EQ(r.coeff({2}), 1);
}

TEST(JetDerivative, PowerRule) {
    TaylorJet pk = lx(3, {{1, 1, -2}, {0, 2, -2}, {0, 3, 8}});
    TaylorJet d = jet_derivative(pk, 1);
    EXPECT_EQ(d, lx(2, {{1, 0, -2}, {0, 1, -4}, {0, 2, 24}}));
    EXPECT_EQ(d.max_order(), 2);
}

TEST(JetDerivative, ConstantHasZeroDerivative) {
    TaylorJet c = TaylorJet::constant(1, 1, 3, 5);
    EXPECT_TRUE(jet_derivative(c, 0).is_zero());
}

TEST(JetDerivative, MixedPartialOfCenterMapIsOne) {
    TaylorJet pr = lx(3, {{0, 1, -1}, {1, 1, 1}, {0, 3, -4}});
    TaylorJet d = jet_derivative(jet_derivative(pr, 0), 1);
    EXPECT_EQ(d.eval({0, 0}), 1);
}

TEST(JetEvalInterval, IdentityOnUnitInterval) {
    TaylorJet x = TaylorJet::variable(0, 1, 1, 0);
    Interval r = jet_eval_interval(x, {Interval(-1, 1)});
    EXPECT_EQ(r.lo, -1.0);
    EXPECT_EQ(r.hi, 1.0);
}

TEST(JetEvalInterval, CubicEnclosesTrueRangeOnSmallInterval) {
    TaylorJet p(0, 1, 3);
    p.set({2}, -2);
    p.set({3}, 8);
    Box b{Interval(0.0, 0.1)};
    Interval naive = p.eval_interval_naive(b);
    EXPECT_LE(naive.lo, -0.02);
    EXPECT_GE(naive.hi, 0.008);
    Interval r = jet_eval_interval(p, b);
    for (int i = 0; i <= 10000; ++i) {
        double x = 0.1 * i / 10000.0;
        double v = -2 * x * x + 8 * x * x * x;
        ASSERT_TRUE(r.contains(v)) << x;
    }
    EXPECT_TRUE(naive.contains(r));
}

TEST(JetEvalInterval, DimensionMismatchThrows) {
    TaylorJet p(1, 1, 2);
    EXPECT_THROW(jet_eval_interval(p, {Interval(0, 1)}), Error);
}

TEST(JetProperties, RingAxiomsHoldExactly) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        int order = 1 + trial % 6;
        TaylorJet a = random_jet(rng, 1, 2, order), b = random_jet(rng, 1, 2, order),
                  c = random_jet(rng, 1, 2, order);
        ASSERT_EQ((a * b) * c, a * (b * c));
        ASSERT_EQ(a * (b + c), a * b + a * c);
        ASSERT_EQ((a + b) * c, a * c + b * c);
        ASSERT_EQ(a * b, b * a);
        ASSERT_EQ((a + b) + c, a + (b + c));
        ASSERT_TRUE((a - a).is_zero());
        TaylorJet one = TaylorJet::constant(1, 2, order, 1);
        ASSERT_EQ(a * one, a);
    }
}

TEST(JetProperties, IntervalEvaluationContainsSamples) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        TaylorJet p = random_jet(rng, 1, 2, 4);
        Box b{Interval(-0.5, 0.25), Interval(-1, 1), Interval(0.1, 0.3)};
        Interval r = jet_eval_interval(p, b, 4);
        for (int i = 0; i < 1000; ++i) {
            std::vector<double> s;
            std::vector<Rational> sr;
            for (const auto& iv : b) {
                s.push_back(iv.lo + u(rng) * (iv.hi - iv.lo));
                sr.push_back(from_double(s.back()));
            }
            Rational exact = p.eval(sr);
            ASSERT_LE(from_double(r.lo), exact);
            ASSERT_GE(from_double(r.hi), exact);
        }
    }
}

TEST(JetProperties, CompositionTruncationConsistency) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        int N = 3, high = 6;
        TaylorJet outer = random_jet(rng, 1, 2, high);
        TaylorJet q1 = random_jet(rng, 1, 2, high, true), q2 = random_jet(rng, 1, 2, high, true);
        TaylorJet lo = jet_compose(outer.truncate(N), {q1.truncate(N), q2.truncate(N)}, N);
        TaylorJet hi = jet_compose(outer, {q1, q2}, high).truncate(N);
        ASSERT_EQ(lo, hi);
    }
}

TEST(JetProperties, MixedPartialsCommute) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        TaylorJet p = random_jet(rng, 1, 2, 6);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                ASSERT_EQ(jet_derivative(jet_derivative(p, i), j), jet_derivative(jet_derivative(p, j), i));
    }
}

TEST(JetWeighted, LambdaCountsTwice) {
    TaylorJet lam = TaylorJet::variable(1, 1, 3, 0, {2, 1});
    TaylorJet x = TaylorJet::variable(1, 1, 3, 1, {2, 1});
    TaylorJet p = lam * x + lam * lam + x * x * x;
    // lambda^2 has weighted degree 4 and is truncated away
    EXPECT_EQ(p.coeff({2, 0}), 0);
    EXPECT_EQ(p.coeff({1, 1}), 1);
    EXPECT_EQ(p.coeff({0, 3}), 1);
    EXPECT_EQ(jet_derivative(p, 0).max_order(), 1);
}

TEST(JetJson, RoundTrip) {
    std::mt19937_64 rng(23);
    TaylorJet p = random_jet(rng, 1, 2, 4);
    nlohmann::json j = to_json(p);
    EXPECT_EQ(jet_from_json(j), p);
    EXPECT_EQ(j["vars"]["params"], 1);
    EXPECT_EQ(j["order"], 4);
    TaylorJet w = TaylorJet::variable(1, 1, 3, 0, {2, 1});
    EXPECT_EQ(jet_from_json(to_json(w)), w);
    EXPECT_THROW(jet_from_json(nlohmann::json{{"order", 2}}), Error);
}

TEST(JetSubstitute, FixingParameterGivesPhaseJet) {
    TaylorJet pr = lx(3, {{0, 1, -1}, {1, 1, 1}, {0, 3, -4}});
    TaylorJet fixed = substitute_params(pr, {Rational(1, 10)});
    EXPECT_EQ(fixed.num_params(), 0u);
    EXPECT_EQ(fixed.coeff({1}), Rational(-9, 10));
    EXPECT_EQ(fixed.coeff({3}), -4);
}
