#include <gtest/gtest.h>

#include <cmcert/rdt.hpp>

#include <algorithm>
#include <random>

using namespace cmcert;
using namespace cmcert::rdt;

namespace {

Rational random_rational(std::mt19937_64& rng) {
    std::uniform_int_distribution<long> num(-40, 40), den(1, 17);
    return Rational(num(rng), den(rng));
}

bool names_failure(const CertificationBundle& b, const std::string& needle) {
    return std::any_of(b.failures.begin(), b.failures.end(),
                       [&](const std::string& f) { return f.find(needle) != std::string::npos; });
}

PipelineOptions quick_options() {
    PipelineOptions o;
    o.grid_points = 4;
    o.bisect = false;
    return o;
}

}  // namespace

TEST(RdtChart, ConjugatesTheLatticeMapExactly) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 100; ++i) {
        RdtSystem sys{random_rational(rng)};
        Point<Rational> u{random_rational(rng), random_rational(rng)};
        Point<Rational> lhs = RdtSystem::to_xy(sys.step_u(u));
        Point<Rational> rhs = sys.step_xy(RdtSystem::to_xy(u));
        EXPECT_EQ(lhs[0], rhs[0]);
        EXPECT_EQ(lhs[1], rhs[1]);
        Point<Rational> back = sys.back_u(sys.step_u(u));
        EXPECT_EQ(back[0], u[0]);
        EXPECT_EQ(back[1], u[1]);
        Point<Rational> round = RdtSystem::to_u(RdtSystem::to_xy(u));
        EXPECT_EQ(round[0], u[0]);
        EXPECT_EQ(round[1], u[1]);
    }
}

TEST(RdtChart, ChartDiagonalizesTheLinearization) {
    EXPECT_EQ(chart() * chart_inverse(), RMatrix::identity(2));
    RMatrix D = chart() * lattice_linearization() * chart_inverse();
    EXPECT_EQ(D, (RMatrix{{-1, 0}, {0, -2}}));
}

TEST(RdtChart, JetsAgreeWithTheMap) {
    JetMap L = lattice_jets(3, {1, 1, 1});
    JetMap X = xy_jets({1, 1, 1});
    std::mt19937_64 rng(11);
    for (int i = 0; i < 20; ++i) {
        Rational l = random_rational(rng);
        RdtSystem sys{l};
        Point<Rational> u{random_rational(rng), random_rational(rng)};
        Point<Rational> v = sys.step_u(u);
        EXPECT_EQ(L[0].eval({l, u[0], u[1]}), v[0]);
        EXPECT_EQ(L[1].eval({l, u[0], u[1]}), v[1]);
        Point<Rational> p = RdtSystem::to_xy(u), q = sys.step_xy(p);
        EXPECT_EQ(X[0].eval({l, p[0], p[1]}), q[0]);
        EXPECT_EQ(X[1].eval({l, p[0], p[1]}), q[1]);
    }
}

TEST(RdtNormalForm, SolverReproducesTheClosedFormPolynomials) {
    auto [sol, s] = normal_form_solution();
    EXPECT_EQ(s.T, RMatrix::identity(2));
    EXPECT_EQ(sol.R[0].coeff({0, 2}), 0);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        Rational l = random_rational(rng), x = random_rational(rng);
        EXPECT_EQ(sol.R[0].eval({l, x}), P_R(l, x));
        EXPECT_EQ(sol.K[1].eval({l, x}), P_K(l, x));
        EXPECT_EQ(sol.K[0].eval({l, x}), x + Rational(3, 2) * x * x);
    }
}

TEST(RdtNormalForm, CenterMultiplierSeriesAgreesThroughCubicOrder) {
    std::vector<Rational> series = dR_at_zero_series(3);
    std::vector<Rational> jets = dR_at_zero_from_jets(3);
    ASSERT_EQ(series.size(), jets.size());
    for (std::size_t k = 0; k < series.size(); ++k) EXPECT_EQ(series[k], jets[k]) << "lambda^" << k;
    EXPECT_EQ(series, (std::vector<Rational>{-1, 1, -2, 6}));
    for (double l : {1e-6, 1e-5, 1e-4}) {
        Interval c = dR_at_zero(Interval(l));
        double partial = -1 + l - 2 * l * l + 6 * l * l * l;
        EXPECT_NEAR(c.mid(), partial, 30 * l * l * l * l + 1e-15);
    }
    EXPECT_THROW(dR_at_zero(Interval(-3.0)), Error);
}

TEST(RdtEnclosure, MatchesTheWorkedExample) {
    Rational lmax = parse_rational("7.6e-5");
    Interval E_R = Interval::from_rational(parse_rational("57.1")) * sqrt_lambda(lmax);
    Interval E_K = Interval::from_rational(parse_rational("61.9")) * sqrt_lambda(lmax);
    EXPECT_NEAR(E_R.mid(), 0.49779, 5e-6);
    EnclosureReport r = enclosure_report(lmax, E_R, E_K, "test");
    long double sl = std::sqrt(7.6e-5L), er = 57.1L * sl;
    long double lo = std::sqrt(1 - er) * sl / 2, hi = std::sqrt(1 + er) * sl / 2;
    EXPECT_TRUE(r.center.W_plus.contains(Interval(static_cast<double>(lo), static_cast<double>(hi))) ||
                std::fabs(r.center.W_plus.lo - static_cast<double>(lo)) < 1e-17);
    EXPECT_NEAR(r.center.W_plus.lo, static_cast<double>(lo), 1e-17);
    EXPECT_NEAR(r.center.W_plus.hi, static_cast<double>(hi), 1e-17);
    EXPECT_NEAR(r.center.W_plus.lo, 3.0891e-3, 2e-7);
    EXPECT_NEAR(r.center.W_plus.hi, 5.3347e-3, 2e-7);
    EXPECT_EQ(r.center.W_minus, -r.center.W_plus);
    EXPECT_EQ(r.center.mode, OrbitMode::dynamics);
    EXPECT_TRUE(r.accepted());
}

TEST(RdtEnclosure, OrbitWindowsLieInsideTheCenterInterval) {
    Interval E_R(0.3);
    for (const char* l : {"1e-7", "1e-5", "7.6e-5", "0.02"}) {
        CenterEnclosure c = enclose_center_orbit(parse_rational(l), E_R);
        EXPECT_TRUE(c.I.contains(c.W_plus)) << l;
        EXPECT_TRUE(c.I.contains(c.W_minus)) << l;
        EXPECT_GT(c.W_plus.lo, 0.0) << l;
    }
    EXPECT_THROW(enclose_center_orbit(parse_rational("1e-5"), Interval(1.0)), Error);
}

TEST(RdtEnclosure, BoxGrowsWithLambda) {
    Interval E_R(0.45), E_K(0.5);
    Box prev;
    for (const char* l : {"1e-7", "1e-6", "1e-5", "5e-5", "1e-4", "1e-3"}) {
        Box B = build_box(parse_rational(l), E_R, E_K).box();
        if (!prev.empty()) EXPECT_TRUE(contains(B, prev)) << l;
        EXPECT_TRUE(B[0].contains(0.0));
        EXPECT_TRUE(B[1].contains(0.0));
        prev = B;
    }
}

TEST(RdtEnclosure, KuRangeMatchesDenseSampling) {
    for (const char* ls : {"1e-6", "3e-5", "7.6e-5", "0.01"}) {
        Rational lr = parse_rational(ls);
        Interval E_R(0.4), E_K(1.5);
        KuRange k = enclose_ku_range(lr, E_R, E_K);
        EXPECT_TRUE(k.agree) << ls;
        double l = to_double(lr), lp = enclose_center_orbit(lr, E_R).lambda_plus.mid();
        double lo = 0, hi = 0;
        const int n = 200001;
        for (int i = 0; i < n; ++i) {
            double x = -lp + 2 * lp * i / (n - 1);
            double p = -2 * l * x - 2 * x * x + 8 * x * x * x, e = 2 * E_K.mid() * l * std::fabs(x);
            lo = std::min(lo, p - e);
            hi = std::max(hi, p + e);
        }
        Interval R = k.range();
        EXPECT_LE(R.lo, lo) << ls;
        EXPECT_GE(R.hi, hi) << ls;
        EXPECT_NEAR(R.lo, lo, 1e-5 * std::fabs(lo) + 1e-18) << ls;
        EXPECT_NEAR(R.hi, hi, 1e-5 * std::fabs(hi) + 1e-18) << ls;
    }
}

TEST(RdtEnclosure, HypothesisFlagsGateTheKuRange) {
    EXPECT_THROW(enclose_ku_range(parse_rational("0.03"), Interval(0.3), Interval(1.0)), Error);
    EXPECT_THROW(enclose_ku_range(parse_rational("1e-5"), Interval(0.6), Interval(1.0)), Error);
    EXPECT_THROW(enclose_ku_range(parse_rational("1e-5"), Interval(0.3), Interval(5.0)), Error);
    HypothesisFlags f = hypothesis_flags(parse_rational("0.03"), Interval(0.3), Interval(1.0));
    EXPECT_FALSE(f.lambda_below_1_43);
    EXPECT_TRUE(f.lambda_below_4_3);
}

TEST(RdtPipeline, CertifiesTheDefaultParameters) {
    CertificationBundle b = certify_pipeline(quick_options());
    ASSERT_TRUE(b.passed) << (b.failures.empty() ? "" : b.failures.front());
    EXPECT_LT(b.L_g.hi, 0.13);
    EXPECT_GT(b.L_g.lo, 0.128);
    EXPECT_LT(b.L_c.hi, 0.017);
    EXPECT_NEAR(b.L_c.mid(), 3 * b.kc_spec.range().mag(), 1e-9);
    for (const auto& r : b.remainders) {
        ASSERT_TRUE(r.passed) << to_decimal(r.lambda);
        EXPECT_LE(r.cert.C[0].hi, b.E_R.lo);
        EXPECT_LE(r.cert.C[1].hi, 2 * b.E_K.lo);
    }
    ASSERT_TRUE(b.largest_certifiable);
    EXPECT_EQ(*b.largest_certifiable, parse_rational("7.6e-5"));
}

TEST(RdtPipeline, RejectsLargeLambdaNamingTheInequality) {
    PipelineOptions o = quick_options();
    o.lambda_max = parse_rational("0.03");
    CertificationBundle b = certify_pipeline(o);
    EXPECT_FALSE(b.passed);
    EXPECT_TRUE(names_failure(b, "lambda_max < 1/43"));
}

TEST(RdtPipeline, RejectsDoubledRemainderCoefficient) {
    PipelineOptions o = quick_options();
    o.er_coef = parse_rational("114.2");
    CertificationBundle b = certify_pipeline(o);
    EXPECT_FALSE(b.passed);
    EXPECT_TRUE(names_failure(b, "E_R < 1/2"));
}

TEST(RdtPipeline, ReportsEveryViolatedBound) {
    PipelineOptions o = quick_options();
    o.L_g_target = parse_rational("0.12");
    o.L_c_target = parse_rational("0.01");
    CertificationBundle b = certify_pipeline(o);
    EXPECT_FALSE(b.passed);
    EXPECT_TRUE(names_failure(b, "L_g < 0.12"));
    EXPECT_TRUE(names_failure(b, "L_c < 0.01"));
}

TEST(RdtPipeline, BisectionFindsACertifiableValue) {
    PipelineOptions o = quick_options();
    o.bisect = true;
    o.lambda_max = parse_rational("1e-4");
    CertificationBundle b = certify_pipeline(o);
    EXPECT_FALSE(b.passed);
    ASSERT_TRUE(b.largest_certifiable);
    Rational best = *b.largest_certifiable;
    EXPECT_LT(best, o.lambda_max);
    EXPECT_GT(best, parse_rational("3.8e-5"));
    PipelineOptions again = quick_options();
    again.lambda_max = best;
    EXPECT_TRUE(certify_pipeline(again).passed);
}

TEST(RdtPipeline, BundleSerializes) {
    CertificationBundle b = certify_pipeline(quick_options());
    nlohmann::json j = to_json(b);
    for (const char* key : {"options", "E_R", "E_K", "L_g", "L_c", "L_r", "L_u", "h_cutoffs", "kc_cutoff", "stages",
                            "remainder_certificates", "reports", "passed", "failures", "largest_certifiable_lambda_max"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["stages"].size(), 6u);
    EXPECT_EQ(j["remainder_certificates"][0]["conversion_factor"], "1");
    std::string header = csv_header(), row = csv_row(b.reports.front());
    EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

TEST(RdtPipeline, GeometricGridIsDecreasingAndInRange) {
    auto g = geometric_grid(parse_rational("1e-7"), parse_rational("7.6e-5"), 16);
    ASSERT_EQ(g.size(), 16u);
    EXPECT_EQ(g.front(), parse_rational("7.6e-5"));
    for (std::size_t i = 1; i < g.size(); ++i) {
        EXPECT_LT(g[i], g[i - 1]);
        EXPECT_GT(g[i], parse_rational("1e-7"));
    }
}

TEST(RdtCertificates, MonotoneUnderBoxShrinking) {
    CertificationBundle b = certify_pipeline(quick_options());
    auto [sol, split] = normal_form_solution();
    for (const char* ls : {"1e-5", "7.6e-5"}) {
        Rational l = parse_rational(ls);
        Rational r = from_double(enclose_center_orbit(l, b.E_R).I.hi);
        FixedProblem big = fix_parameters(sol, split, {l}, Box{Interval::hull(-r, r)}, BoundShape{l, 1});
        BoundInputs in;
        in.lip = derive_lipschitz(big, Interval(b.L_g.hi), Interval(b.L_c.hi), {b.E_R.hi, 2 * b.E_K.hi, 0.0});
        Box prev = certify_bounds(big, in).C;
        for (int k = 1; k <= 4; ++k) {
            Rational rk = r * Rational(4 - k, 4) + r * Rational(k, 64);
            BoundCertificate c = certify_bounds(fix_parameters(sol, split, {l}, Box{Interval::hull(-rk, rk)}, BoundShape{l, 1}), in);
            EXPECT_TRUE(fixed_point_contained(c.system.A, c.system.b, c.C));
            for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(c.C[i].hi, prev[i].hi * (1 + 1e-9)) << ls << " " << k;
            prev = c.C;
        }
    }
}
