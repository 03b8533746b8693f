#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cmcert/interval.hpp"
#include "cmcert/rational.hpp"

using namespace cmcert;

namespace {

bool encloses(const Interval& x, const Rational& exact) {
    return from_double(x.lo) <= exact && exact <= from_double(x.hi);
}

class RandomIntervals : public ::testing::Test {
protected:
    std::mt19937_64 rng{20240611};

    Interval random_interval(double scale = 10.0) {
        std::uniform_real_distribution<double> u(-scale, scale);
        double a = u(rng), b = u(rng);
        return Interval(std::min(a, b), std::max(a, b));
    }
    double sample(const Interval& x) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double t = u(rng);
        return std::clamp(x.lo + t * (x.hi - x.lo), x.lo, x.hi);
    }
};

}  // namespace

TEST(RationalParse, DecimalAndFractionForms) {
    EXPECT_EQ(parse_rational("7.6e-5"), Rational(76) / 1000000);
    EXPECT_EQ(parse_rational("-3/2"), Rational(-3) / 2);
    EXPECT_EQ(parse_rational("57.1"), Rational(571) / 10);
    EXPECT_EQ(parse_rational("1e-6"), Rational(1) / 1000000);
    EXPECT_EQ(parse_rational("+0.125"), Rational(1) / 8);
    EXPECT_THROW(parse_rational("1.2.3"), Error);
    EXPECT_THROW(parse_rational("abc"), Error);
    EXPECT_THROW(parse_rational("1/0"), Error);
}

TEST(IntervalBasics, FromRationalEnclosesExactValue) {
    Rational tenth = parse_rational("0.1");
    Interval x = Interval::from_rational(tenth);
    EXPECT_TRUE(encloses(x, tenth));
    EXPECT_LT(x.lo, x.hi);
    EXPECT_TRUE(Interval::from_rational(Rational(3) / 4).is_point());
}

TEST(IntervalBasics, ExactOperationsStayPoints) {
    Interval a(0.5), b(0.25);
    EXPECT_TRUE((a + b).is_point());
    EXPECT_TRUE((a * b).is_point());
    EXPECT_TRUE((a / b).is_point());
    EXPECT_EQ(Interval(0.0) * Interval(-1, 1), Interval(0.0));
}

TEST(IntervalBasics, DivisionByZeroIntervalThrows) {
    EXPECT_THROW(Interval(1.0) / Interval(-1, 1), Error);
}

TEST(IntervalBasics, EvenPowerOfStraddlingInterval) {
    Interval p = pow(Interval(-2, 1), 2);
    EXPECT_EQ(p.lo, 0.0);
    EXPECT_EQ(p.hi, 4.0);
    Interval q = pow(Interval(-2, 1), 3);
    EXPECT_EQ(q.lo, -8.0);
    EXPECT_EQ(q.hi, 1.0);
}

TEST_F(RandomIntervals, ArithmeticContainsExactResults) {
    for (int i = 0; i < 1000; ++i) {
        Interval a = random_interval(), b = random_interval();
        double x = sample(a), y = sample(b);
        Rational rx = from_double(x), ry = from_double(y);
        ASSERT_TRUE(encloses(a + b, rx + ry));
        ASSERT_TRUE(encloses(a - b, rx - ry));
        ASSERT_TRUE(encloses(a * b, rx * ry));
        if (!b.contains_zero()) ASSERT_TRUE(encloses(a / b, rx / ry));
        ASSERT_TRUE(encloses(sqr(a), rx * rx));
        ASSERT_TRUE(encloses(pow(a, 3), rx * rx * rx));
        ASSERT_TRUE(encloses(pow(a, 4), rx * rx * rx * rx));
        ASSERT_TRUE(encloses(abs(a), abs(rx)));
    }
}

TEST_F(RandomIntervals, SqrtContainsExactRoot) {
    for (int i = 0; i < 1000; ++i) {
        Interval a = abs(random_interval(1e3));
        double x = sample(a);
        Interval r = sqrt(a);
        Rational rx = from_double(x);
        // lo^2 <= x <= hi^2 certifies lo <= sqrt(x) <= hi
        ASSERT_LE(from_double(r.lo) * from_double(r.lo), rx);
        ASSERT_GE(from_double(r.hi) * from_double(r.hi), rx);
    }
}

TEST_F(RandomIntervals, ExpContainsHighPrecisionValue) {
    for (int i = 0; i < 1000; ++i) {
        Interval a = random_interval(20.0);
        double x = sample(a);
        Interval e = exp(a);
        long double ref = std::exp(static_cast<long double>(x));
        ASSERT_LE(static_cast<long double>(e.lo), ref);
        ASSERT_GE(static_cast<long double>(e.hi), ref);
    }
}
