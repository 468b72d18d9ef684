#include <gtest/gtest.h>

#include <random>

#include "picard_lod/graded_core.hpp"

using namespace picard_lod;
using namespace picard_lod::graded_core;

namespace {

// Root of x + x^3 = y from a 30-digit bisection run.
constexpr double kRoot01 = 0.0990288524054573137916597726753;
constexpr double kRoot005 = 0.0498759282311060655101871427007;

struct SeqSpace {
    using element = std::vector<double>;
    double seminorm(const element& a, int k) const {
        double m = 0.0;
        for (int i = 0; i <= k && i < static_cast<int>(a.size()); ++i) m = std::max(m, std::abs(a[i]));
        return m;
    }
    element difference(const element& a, const element& b) const {
        element c(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
        return c;
    }
};

}  // namespace

TEST(ProductConstants, Examples) {
    auto base = [](int k) { return 1.0 / (k + 1); };
    EXPECT_EQ(product_constants(base, 3, 7, 0), 1.0);
    EXPECT_DOUBLE_EQ(product_constants(base, 1, 0, 2), 0.5);
    EXPECT_DOUBLE_EQ(product_constants([](int) { return 0.7; }, 4, 3, 5), std::pow(0.7, 5));
}

TEST(ProductConstants, ShortTableIsError) {
    std::vector<double> base{0.5, 0.5, 0.5};
    EXPECT_NO_THROW(product_constants(base, 1, 0, 3));
    EXPECT_THROW(product_constants(base, 1, 1, 3), error);
}

TEST(ProductConstants, Recursion) {
    auto base = [](int k) { return 0.3 + 0.1 * std::sin(k); };
    for (int L = 0; L <= 3; ++L)
        for (int k = 0; k <= 5; ++k)
            for (int n = 0; n <= 6; ++n)
                EXPECT_NEAR(product_constants(base, L, k, n + 1), base(k) * product_constants(base, L, k + L, n), 1e-15);
}

TEST(Weissinger, GeometricConverges) {
    auto row = weissinger_sum(LodConstants::geometric(0.5), [](int) { return 1.0; }, 0, 60);
    EXPECT_EQ(row.verdict, Verdict::converged);
    EXPECT_NEAR(row.partial_sums.back(), 2.0, 1e-15);
    for (std::size_t i = 1; i < row.partial_sums.size(); ++i) EXPECT_GE(row.partial_sums[i], row.partial_sums[i - 1]);
}

TEST(Weissinger, FactorialDiverges) {
    LodConstants c{1, [](int, int) { return 1.0; }};
    auto row = weissinger_sum(c, [](int K) { return std::tgamma(K + 1.0); }, 0, 30);
    EXPECT_EQ(row.verdict, Verdict::diverging);
}

TEST(Weissinger, ZeroIncrementsConverge) {
    auto row = weissinger_sum(LodConstants::geometric(1.0), [](int) { return 0.0; }, 2, 20);
    EXPECT_EQ(row.verdict, Verdict::converged);
    EXPECT_EQ(row.partial_sums.back(), 0.0);
}

TEST(Weissinger, NonFiniteIsError) {
    EXPECT_THROW(weissinger_sum(LodConstants::geometric(0.5), [](int) { return kInf; }, 0, 20), error);
}

TEST(Weissinger, InconclusiveWhenTooShort) {
    auto row = weissinger_sum(LodConstants::geometric(0.5), [](int) { return 1.0; }, 0, 5);
    EXPECT_EQ(row.verdict, Verdict::inconclusive);
}

TEST(Iterate, HalfPlusOne) {
    ScalarSpace sp;
    StopRule stop;
    stop.tol = 1e-12;
    stop.n_max = 100;
    auto res = iterate_to_fixed_point(sp, [](double x) { return x / 2 + 1; }, 0.0, stop);
    EXPECT_EQ(res.status, Verdict::converged);
    EXPECT_LE(res.steps, 45);
    EXPECT_NEAR(res.candidate, 2.0, 1e-12);
    EXPECT_EQ(res.iterates[1], 1.0);
    EXPECT_EQ(res.iterates[2], 1.5);
    EXPECT_EQ(res.iterates[3], 1.75);
    EXPECT_LE(std::abs(res.candidate / 2 + 1 - res.candidate), 2 * stop.tol);
    EXPECT_EQ(res.membership, "unchecked");
}

TEST(Iterate, IdentityStopsAfterOneCheck) {
    ScalarSpace sp;
    auto res = iterate_to_fixed_point(sp, [](double x) { return x; }, 3.25, StopRule{});
    EXPECT_EQ(res.status, Verdict::converged);
    EXPECT_EQ(res.steps, 1);
    EXPECT_EQ(res.candidate, 3.25);
    EXPECT_EQ(res.increments[0][0], 0.0);
}

TEST(Iterate, SequenceShift) {
    SeqSpace sp;
    std::vector<double> y0(80, 1.0);
    StopRule stop;
    stop.k_check = {0, 3, 10};
    stop.tol = 1e-12;
    auto P = [](const std::vector<double>& x) {
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i + 1 < x.size(); ++i) y[i] = x[i + 1] / 2;
        y.back() = x.back() / 2;
        return y;
    };
    auto res = iterate_to_fixed_point(sp, P, y0, stop);
    EXPECT_EQ(res.status, Verdict::converged);
    for (std::size_t n = 0; n < res.iterates.size(); ++n)
        for (int i = 0; i <= 10; ++i) EXPECT_EQ(res.iterates[n][i], std::ldexp(1.0, -static_cast<int>(n)));
    EXPECT_LE(sp.seminorm(res.candidate, 10), 1e-11);
}

TEST(Iterate, MembershipViolationReportsStep) {
    ScalarSpace sp;
    Membership<double> below = [](const double& x, int) { return x <= 1.6 ? std::string() : std::string("above 1.6"); };
    try {
        iterate_to_fixed_point(sp, [](double x) { return x / 2 + 1; }, 0.0, StopRule{}, below);
        FAIL();
    } catch (const membership_violation& e) {
        EXPECT_EQ(e.n(), 3);
    }
}

TEST(Iterate, ExhaustionIsInconclusive) {
    ScalarSpace sp;
    StopRule stop;
    stop.n_max = 5;
    auto res = iterate_to_fixed_point(sp, [](double x) { return x / 2 + 1; }, 0.0, stop);
    EXPECT_EQ(res.status, Verdict::inconclusive);
    EXPECT_EQ(res.steps, 5);
}

TEST(Iterate, NonMonotoneSeminormIsError) {
    struct Bad {
        using element = double;
        double seminorm(double a, int k) const { return std::abs(a) / (k + 1); }
        double difference(double a, double b) const { return a - b; }
    } sp;
    StopRule stop;
    stop.k_check = {0, 1};
    EXPECT_THROW(iterate_to_fixed_point(sp, [](double x) { return x / 2 + 1; }, 1.0, stop), error);
}

TEST(APosteriori, HalfPlusOneIsTight) {
    auto row = weissinger_sum(LodConstants::geometric(0.5), [](int) { return 1.0; }, 0, 80);
    double x = 0.0;
    for (int n = 0; n <= 30; ++n) {
        auto b = a_posteriori_bound(row, n);
        EXPECT_NEAR(b.total, std::ldexp(1.0, 1 - n), 1e-15 * std::ldexp(1.0, 1 - n) + 1e-24);
        EXPECT_GE(b.total * (1 + 1e-14), std::abs(2.0 - x));
        x = x / 2 + 1;
    }
}

TEST(APosteriori, GeometricThirdTail) {
    auto b = a_posteriori_bound(LodConstants::geometric(1.0 / 3.0), [](int) { return 1.0; }, 0, 2, 60);
    EXPECT_NEAR(b.total, 1.0 / 6.0, 1e-15);
}

TEST(APosteriori, ZeroIncrementsGiveZero) {
    auto b = a_posteriori_bound(LodConstants::geometric(0.5), [](int) { return 0.0; }, 0, 40, 20);
    EXPECT_EQ(b.total, 0.0);
    EXPECT_FALSE(b.is_estimate);
}

TEST(APosteriori, RejectsUnconverged) {
    LodConstants c{1, [](int, int) { return 1.0; }};
    EXPECT_THROW(a_posteriori_bound(c, [](int K) { return std::tgamma(K + 1.0); }, 0, 2, 30), error);
}

TEST(SolveEquation, Linear) {
    ScalarSpace sp;
    StopRule stop;
    stop.tol = 1e-13;
    auto res = solve_equation(sp, [](double x) { return 1.5 * x; }, 3.0, stop);
    EXPECT_EQ(res.status, Verdict::converged);
    EXPECT_NEAR(res.candidate, 2.0, 1e-12);
}

TEST(SolveEquation, IdentityIsOneStep) {
    ScalarSpace sp;
    auto res = solve_equation(sp, [](double x) { return x; }, -0.7, StopRule{});
    EXPECT_EQ(res.steps, 1);
    EXPECT_EQ(res.candidate, -0.7);
}

TEST(SolveEquation, CubicMatchesBisection) {
    ScalarSpace sp;
    StopRule stop;
    stop.tol = 1e-15;
    Membership<double> box = [](const double& x, int) { return std::abs(x) <= 0.5 ? "" : "outside [-0.5, 0.5]"; };
    auto res = solve_equation(sp, [](double x) { return x + x * x * x; }, 0.1, stop, box);
    EXPECT_EQ(res.membership, "ok");
    EXPECT_NEAR(res.candidate, kRoot01, 1e-14);
}

TEST(InvertLocally, ExactInverse) {
    ScalarSpace sp;
    InverseData data;
    data.alpha = [](int) { return 0.0; };
    data.delta = [](int) { return 0.5; };
    data.radius = [](int) { return 10.0; };
    auto rep = invert_locally(
        sp, [](double x) { return 2 * x; }, [](double y) { return y / 2; }, [](double x) { return 2 * x; }, 0.0, 4.0,
        data, {1.0, -3.0}, StopRule{});
    EXPECT_NEAR(rep.iteration.candidate, 2.0, 1e-15);
    EXPECT_LE(rep.iteration.steps, 2);
}

TEST(InvertLocally, CubicNearZero) {
    ScalarSpace sp;
    InverseData data;
    data.alpha = [](int) { return 0.27; };
    data.delta = [](int) { return 1.0; };
    data.radius = [](int) { return 0.3; };
    data.sigma = [](int) { return 2.0; };
    auto f = [](double x) { return x + x * x * x; };
    auto id = [](double x) { return x; };
    StopRule stop;
    stop.tol = 1e-15;
    auto zero = invert_locally(sp, f, id, id, 0.0, 0.0, data, {1.0}, stop);
    EXPECT_EQ(zero.iteration.candidate, 0.0);
    auto rep = invert_locally(sp, f, id, id, 0.0, 0.05, data, {1.0, 0.2}, stop);
    EXPECT_NEAR(rep.iteration.candidate, kRoot005, 1e-14);
    EXPECT_NEAR(rep.rbar[0], 0.3 * 0.73, 1e-15);
    EXPECT_TRUE(rep.ball_step[0]);
    EXPECT_TRUE(rep.iterates_in_ball);
    EXPECT_LE(rep.lipschitz_ratio, 1.0);
}

TEST(InvertLocally, Preconditions) {
    ScalarSpace sp;
    InverseData data;
    data.alpha = [](int) { return 1.0; };
    data.delta = [](int) { return 1.0; };
    data.radius = [](int) { return 0.3; };
    auto f = [](double x) { return x + x * x * x; };
    auto id = [](double x) { return x; };
    EXPECT_THROW(invert_locally(sp, f, id, id, 0.0, 0.05, data, {1.0}, StopRule{}), error);
    data.alpha = [](int) { return 0.27; };
    EXPECT_THROW(invert_locally(sp, f, id, id, 0.0, 0.5, data, {1.0}, StopRule{}), error);
    EXPECT_THROW(invert_locally(sp, f, id, [](double x) { return 2 * x; }, 0.0, 0.05, data, {1.0}, StopRule{}), error);
}

TEST(WPrime, GeometricIncrements) {
    std::vector<std::vector<double>> inc;
    for (int n = 0; n < 60; ++n) inc.push_back({std::ldexp(1.0, -n)});
    auto rep = w_prime_diagnostic(inc, {0});
    EXPECT_EQ(rep.verdict, Verdict::converged);
    for (int n = 0; n < 60; ++n) EXPECT_EQ(rep.alpha[0][n], std::ldexp(1.0, -n));
}

TEST(WPrime, VanishingUsesFallback) {
    std::vector<std::vector<double>> inc{{0.5}, {0.25}, {0.1}};
    for (int n = 3; n < 20; ++n) inc.push_back({0.0});
    auto rep = w_prime_diagnostic(inc, {0});
    EXPECT_EQ(rep.verdict, Verdict::converged);
    EXPECT_EQ(rep.vanishing_from[0], 3);
    EXPECT_DOUBLE_EQ(rep.alpha[0][2], 0.2);
    for (int n = 3; n < 20; ++n) EXPECT_DOUBLE_EQ(rep.alpha[0][n], 1.0 / (n * n * 0.5));
}

TEST(WPrime, FactorialDiverges) {
    std::vector<std::vector<double>> inc;
    for (int n = 0; n < 20; ++n) inc.push_back({std::tgamma(n + 1.0)});
    EXPECT_EQ(w_prime_diagnostic(inc, {0}).verdict, Verdict::diverging);
}

TEST(Property, CauchyChainAndUniqueness) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(-5.0, 5.0);
    ScalarSpace sp;
    for (int trial = 0; trial < 20; ++trial) {
        double q = 0.1 + 0.8 * (trial / 20.0);
        double c = U(rng);
        auto P = [&](double x) { return q * std::sin(x) + c; };
        StopRule stop;
        stop.tol = 1e-14;
        stop.n_max = 2000;
        double y0 = U(rng), y1 = U(rng);
        auto a = iterate_to_fixed_point(sp, P, y0, stop);
        auto b = iterate_to_fixed_point(sp, P, y1, stop);
        ASSERT_EQ(a.status, Verdict::converged);
        ASSERT_EQ(b.status, Verdict::converged);
        EXPECT_NEAR(a.candidate, b.candidate, 1e-10);
        double inc0 = std::abs(P(y0) - y0);
        auto c0 = LodConstants::geometric(q);
        const auto& it = a.iterates;
        for (std::size_t n = 0; n < it.size(); n += 3)
            for (std::size_t m = n + 1; m < it.size(); m += 5) {
                double bound = 0.0;
                for (std::size_t j = n; j < m; ++j) bound += c0.alpha(0, static_cast<int>(j)) * inc0;
                EXPECT_LE(std::abs(it[m] - it[n]), bound + 1e-9);
            }
        auto row = weissinger_sum(c0, [&](int) { return inc0; }, 0, 2000);
        if (row.verdict == Verdict::converged)
            for (std::size_t n = 0; n < it.size(); n += 7)
                EXPECT_GE(a_posteriori_bound(row, static_cast<int>(n)).total + 1e-12, std::abs(a.candidate - it[n]));
    }
}
