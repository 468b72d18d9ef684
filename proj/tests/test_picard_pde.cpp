#include <gtest/gtest.h>

#include "picard_lod/picard_pde.hpp"

using namespace picard_lod;
using namespace picard_lod::picard_pde;
using funcspace::Interval;

namespace {

Domain box(double t0, double a, double b, std::vector<Interval> S) {
    Domain d;
    d.t0 = t0;
    d.a = a;
    d.b = b;
    d.S = std::move(S);
    return d;
}

CauchyProblem make(const Domain& dom, int d, int p, int L, const std::string& F, const std::vector<std::string>& y0) {
    CauchyProblem pb;
    pb.dom = dom;
    pb.d = d;
    pb.p = p;
    pb.L = L;
    expr::Arity a;
    a.s = static_cast<int>(dom.s());
    a.L = L;
    a.p = p;
    pb.F = {expr::parse(F, a)};
    expr::Arity ax;
    ax.s = a.s;
    for (auto& s : y0) pb.y0.push_back({expr::parse(s, ax)});
    return pb;
}

double max_coef_diff(const SepFunc& a, const SepFunc& b) {
    SepFunc d = a - b;
    double w = 0.0;
    for (auto& c : d.coef)
        for (double v : c) w = std::max(w, std::abs(v));
    return w;
}

template <class Fn>
double sup_error(const SepFunc& f, Fn&& exact, int pts = 41) {
    double w = 0.0;
    auto T = f.dom.T();
    auto S = f.dom.S[0];
    for (int i = 0; i < pts; ++i)
        for (int j = 0; j < pts; ++j) {
            double t = T.lo + (T.hi - T.lo) * i / (pts - 1);
            double x = S.lo + (S.hi - S.lo) * j / (pts - 1);
            w = std::max(w, std::abs(f.eval(t, {x}) - exact(t, x)));
        }
    return w;
}

const Domain kUnit = box(0.0, 0.5, 0.5, {{-1.0, 1.0}});
const Domain kPi = box(0.0, 0.1, 0.1, {{-M_PI, M_PI}});

}  // namespace

TEST(InitialPolynomial, SingleTerm) {
    auto pb = make(kPi, 1, 0, 2, "Dx2(y1)", {"sin(x)"});
    SepFunc i0 = initial_polynomial(pb);
    EXPECT_EQ(i0.deg[0], 0);
    EXPECT_LE(sup_error(i0, [](double, double x) { return std::sin(x); }), 1e-14);
}

TEST(InitialPolynomial, LinearTerm) {
    auto pb = make(kUnit, 2, 0, 2, "Dx2(y1)", {"0", "x"});
    SepFunc i0 = initial_polynomial(pb);
    EXPECT_LE(sup_error(i0, [](double t, double x) { return x * t; }), 1e-15);
}

TEST(InitialPolynomial, QuadraticTerm) {
    auto pb = make(kUnit, 3, 0, 1, "Dx1(y1)", {"1", "0", "2"});
    SepFunc i0 = initial_polynomial(pb);
    EXPECT_LE(sup_error(i0, [](double t, double) { return 1 + t * t; }), 1e-15);
}

TEST(EvalG, HeatOnSquare) {
    auto pb = make(kUnit, 1, 0, 2, "Dx2(y1)", {"x^2"});
    PicardOperator op(pb);
    SepFunc G = op.G(op.i0());
    EXPECT_LE(sup_error(G, [](double, double) { return 2.0; }), 1e-13);
}

TEST(EvalG, ZeroPlaceholdersGiveZero) {
    auto pb = make(kUnit, 1, 0, 1, "y1*Dx1(y1) + sin(y1)", {"0"});
    PicardOperator op(pb);
    EXPECT_LE(sup_error(op.G(op.i0()), [](double, double) { return 0.0; }), 1e-300);
}

TEST(EvalG, BurgersProduct) {
    auto pb = make(kUnit, 1, 0, 1, "y1*Dx1(y1)", {"x"});
    PicardOperator op(pb);
    EXPECT_LE(sup_error(op.G(op.i0()), [](double, double x) { return x; }), 1e-15);
}

TEST(EvalG, DivisionByZeroIsError) {
    auto pb = make(kUnit, 1, 0, 0, "1/y1", {"x"});
    PicardOperator op(pb);
    SepFunc zero = SepFunc::zeros(kUnit, 1, 0, {0, 0});
    EXPECT_THROW(op.G(zero), domain_error);
}

TEST(ApplyP, Heat) {
    auto pb = make(kUnit, 1, 0, 2, "Dx2(y1)", {"x^2"});
    PicardOperator op(pb);
    EXPECT_LE(sup_error(op.P(op.i0()), [](double t, double x) { return x * x + 2 * t; }), 1e-14);
}

TEST(ApplyP, HarmonicDataIsFixed) {
    auto pb = make(kUnit, 1, 0, 2, "Dx2(y1)", {"x"});
    PicardOperator op(pb);
    EXPECT_LE(max_coef_diff(op.P(op.i0()), op.i0()), 1e-15);
}

TEST(ApplyP, Transport) {
    auto pb = make(kPi, 1, 0, 1, "Dx1(y1)", {"sin(x)"});
    PicardOperator op(pb);
    EXPECT_LE(sup_error(op.P(op.i0()), [](double t, double x) { return std::sin(x) + t * std::cos(x); }), 1e-14);
}

TEST(Validate, RejectsBadProblems) {
    auto pb = make(kUnit, 1, 0, 2, "Dx2(y1)", {"x"});
    pb.p = 1;
    EXPECT_THROW(pb.validate(), error);
    auto pb2 = make(kUnit, 2, 0, 2, "Dx2(y1)", {"x", "0"});
    pb2.y0.pop_back();
    EXPECT_THROW(pb2.validate(), error);
    auto pb3 = make(kUnit, 2, 1, 2, "Dt1(y1)", {"x", "0"});
    EXPECT_NO_THROW(pb3.validate());
    EXPECT_EQ(pb3.lhat(), 6);
}

TEST(Lipschitz, HeatIsOne) {
    auto pb = make(kUnit, 1, 0, 2, "Dx2(y1)", {"sin(x)"});
    auto lf = estimate_lipschitz_linear(pb);
    for (int k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(lf.at(k), 1.0);
    EXPECT_TRUE(lf.certified);
}

TEST(Lipschitz, RowSumOfTimeCoefficients) {
    auto pb = make(kUnit, 1, 0, 2, "cos(t)*Dx2(y1) - 2*Dx1(y1) + x", {"sin(x)"});
    auto lf = estimate_lipschitz_linear(pb);
    EXPECT_NEAR(lf.at(0), 3.0, 1e-12);
    EXPECT_NEAR(lf.at(0, 0.5, {0.0}), std::cos(0.5) + 2.0, 1e-12);
}

TEST(Lipschitz, ConstantRhsUsesFloor) {
    auto pb = make(kUnit, 1, 0, 0, "3", {"x"});
    auto lf = estimate_lipschitz_linear(pb);
    EXPECT_EQ(lf.at(3), kEpsFloor);
}

TEST(Lipschitz, NonlinearRejectedByLinearMethod) {
    auto pb = make(kUnit, 1, 0, 1, "y1*Dx1(y1)", {"x"});
    EXPECT_THROW(estimate_lipschitz_linear(pb), error);
}

TEST(Lipschitz, SampledBurgersAgainstClosedForm) {
    Domain dom = box(0.0, 0.25, 0.25, {{0.0, 1.0}});
    auto pb = make(dom, 1, 0, 1, "y1*Dx1(y1)", {"x"});
    PicardOperator op(pb);
    Radii R = Radii::constant(0.5);
    SamplingConfig sc;
    sc.pairs = 12;
    sc.k_max = 2;
    auto lf = estimate_lipschitz_sampled(op, R, sc);
    EXPECT_FALSE(lf.certified);
    EXPECT_EQ(lf.meta["pairs"], 12);
    for (int k = 0; k <= 2; ++k) {
        double closed = std::ldexp(1.0, k + 1) * (R.at(k + 1) + funcspace::graded_norm(op.i0(), k + 1));
        EXPECT_LE(lf.at(k), sc.inflation * closed) << k;
        EXPECT_GE(lf.at(k), 0.5) << k;
    }
    EXPECT_THROW(estimate_lipschitz_sampled(op, Radii::infinite(), sc), error);
}

TEST(LambdaRecursion, ZeroIsOne) {
    auto tab = lambda_table(LipschitzFactors::constant(3.0), kUnit, 2, 1, 0, 0);
    EXPECT_EQ(tab.bar(0), 1.0);
}

TEST(LambdaRecursion, HandUnrolled) {
    auto lf = LipschitzFactors::constant(2.0);
    for (auto mode : {LambdaMode::conservative, LambdaMode::quadrature, LambdaMode::paper}) {
        auto tab = lambda_table(lf, kUnit, 1, 2, 0, 2, mode);
        EXPECT_NEAR(tab.bar(1), 1.0, 1e-12) << to_string(mode);
        EXPECT_NEAR(tab.bar(2), 0.5, 1e-12) << to_string(mode);
    }
}

TEST(LambdaRecursion, PaperModeClosedForm) {
    auto lf = LipschitzFactors::from_rule([](int k) { return 1.0 + k; });
    Domain dom = box(0.0, 0.3, 0.7, {{0.0, 1.0}});
    auto tab = lambda_table(lf, dom, 2, 1, 1, 5, LambdaMode::paper);
    for (int n = 0; n <= 5; ++n) {
        double prod = 1.0;
        for (int j = 0; j < n; ++j) prod *= 2.0 + j;
        EXPECT_NEAR(tab.bar(n), std::pow(0.7, 2 * n) / factorial(2 * n) * prod, 1e-12 * prod);
    }
}

TEST(LambdaRecursion, HigherOrderShortIntervalUsesFirstIntegral) {
    auto lf = LipschitzFactors::constant(1.5);
    for (int d = 2; d <= 3; ++d) {
        auto tab = lambda_table(lf, kUnit, d, 1, 0, 12);
        for (int n = 0; n <= 12; ++n)
            EXPECT_NEAR(tab.bar(n), std::pow(1.5 * 0.5, n) / factorial(n), 1e-12 * tab.bar(n));
    }
}

TEST(LambdaRecursion, LongIntervalSwitchesBranch) {
    auto lf = LipschitzFactors::constant(1.0);
    Domain dom = box(0.0, 2.0, 2.0, {{0.0, 1.0}});
    auto tab = lambda_table(lf, dom, 2, 0, 0, 3);
    EXPECT_NEAR(tab.bar(1), 2.0, 1e-12);
    // n = 2: M_1 = tau on [0, 2]; candidates tau^2/2 and tau^3/6, both 2 and 4/3 at tau = 2.
    EXPECT_NEAR(tab.bar(2), 2.0, 1e-12);
    Domain dom3 = box(0.0, 3.0, 3.0, {{0.0, 1.0}});
    auto tab3 = lambda_table(lf, dom3, 2, 0, 0, 2);
    // n = 1: max(3, 4.5); n = 2: M_1 = max(tau, tau^2/2), switch at tau = 2.
    EXPECT_NEAR(tab3.bar(1), 4.5, 1e-12);
    double i1 = 2.0 + (27.0 - 8.0) / 6.0;
    double i2 = 10.0 / 3.0 + 11.0 / 8.0;
    EXPECT_NEAR(tab3.bar(2), std::max(i1, i2), 1e-9);
    auto q = lambda_table(lf, dom3, 2, 0, 0, 2, LambdaMode::quadrature);
    EXPECT_NEAR(q.bar(2), tab3.bar(2), 1e-3 * tab3.bar(2));
}

TEST(LambdaRecursion, QuadratureFollowsTimeDependentFactor) {
    auto pb = make(kUnit, 1, 0, 2, "(1+t)*Dx2(y1)", {"sin(x)"});
    auto lf = estimate_lipschitz_linear(pb);
    lf.mode = LipschitzFactors::Mode::function;
    auto tab = lambda_table(lf, kUnit, 1, 2, 0, 2, LambdaMode::quadrature);
    // tau-profile max(1 + tau, 1 - tau) = 1 + tau: n = 1 gives 0.5 + 0.125, n = 2 integrates (1+s)(s + s^2/2).
    EXPECT_NEAR(tab.bar(1), 0.625, 1e-12);
    double T = 0.5;
    double n2 = T * T / 2 + T * T * T / 3 + T * T * T / 6 + T * T * T * T / 8;
    EXPECT_NEAR(tab.bar(2), n2, 1e-12);
}

TEST(ConstantBounds, LinearInBall) {
    auto pb = make(kUnit, 1, 0, 0, "y1", {"x"});
    PicardOperator op(pb);
    EXPECT_NEAR(constant_bounds(op, Radii::constant(1.0), 0), 2.0, 1e-12);
}

TEST(ConstantBounds, ConstantRhs) {
    auto pb = make(kUnit, 1, 0, 1, "-3.5", {"x"});
    PicardOperator op(pb);
    for (int k = 0; k <= 2; ++k) EXPECT_NEAR(constant_bounds(op, Radii::constant(1.0), k), 3.5, 1e-15);
}

TEST(ConstantBounds, Square) {
    auto pb = make(kUnit, 1, 0, 0, "y1^2", {"x"});
    PicardOperator op(pb);
    EXPECT_NEAR(constant_bounds(op, Radii::constant(1.0), 0), 4.0, 1e-12);
    EXPECT_THROW(constant_bounds(op, Radii::infinite(), 0), error);
}

TEST(BallInvariance, Examples) {
    Domain dom = box(0.0, 0.5, 0.5, {{0.0, 1.0}});
    auto one = check_ball_invariance(dom, 1, Radii::constant(1.0), [](int) { return 1.0; }, 5);
    EXPECT_TRUE(one.all_pass);
    EXPECT_DOUBLE_EQ(one.admissible_tbar, 1.0);
    auto inf = check_ball_invariance(dom, 2, Radii::infinite(), [](int k) { return 1e6 * (k + 1); }, 5);
    EXPECT_TRUE(inf.all_pass);
    auto grow = check_ball_invariance(dom, 1, Radii::constant(1.0), [](int k) { return k + 1.0; }, 8);
    EXPECT_FALSE(grow.all_pass);
    EXPECT_TRUE(grow.trend_to_zero);
    EXPECT_EQ(grow.witness_k, 8);
    EXPECT_NEAR(grow.admissible_tbar, 1.0 / 9.0, 1e-15);
}

TEST(Residual, Examples) {
    auto zero = make(kUnit, 1, 0, 0, "0", {"sin(x)"});
    auto r0 = residual(zero, initial_polynomial(zero));
    EXPECT_LE(r0.pde, 1e-15);
    EXPECT_LE(r0.ic[0], 1e-15);
    auto heat = make(kUnit, 1, 0, 2, "Dx2(y1)", {"x^2"});
    PicardOperator op(heat);
    EXPECT_LE(residual(heat, op.P(op.i0())).pde, 1e-13);
    EXPECT_NEAR(residual(heat, op.i0()).pde, 2.0, 1e-13);
}

TEST(Certify, OdeAlwaysConverges) {
    Domain dom = box(0.0, 0.0, 1.0, {});
    for (double lam : {0.5, 4.0}) {
        auto pb = make(dom, 1, 0, 0, std::to_string(lam) + "*y1", {"1"});
        PicardOperator op(pb);
        CertifyOptions opt;
        opt.n_max = 80;
        auto pc = certify(op, estimate_lipschitz_linear(pb), 12, {}, opt);
        EXPECT_EQ(pc.cert.overall, Verdict::converged);
    }
}

TEST(Certify, HeatWithGrowthModels) {
    auto pb = make(box(0.0, 0.5, 0.5, {{-M_PI, M_PI}}), 1, 0, 2, "Dx2(y1)", {"sin(x)"});
    PicardOperator op(pb);
    auto lf = estimate_lipschitz_linear(pb);
    CertifyOptions opt;
    opt.n_max = 40;
    auto expo = certify(op, lf, 8, [](int) { return std::log(0.5); }, opt);
    EXPECT_EQ(expo.cert.overall, Verdict::converged);
    auto analytic = certify(op, lf, 8, [](int K) { return std::log(0.5) + log_factorial(K); }, opt);
    EXPECT_EQ(analytic.cert.overall, Verdict::diverging);
    EXPECT_THROW(certify(op, lf, 8, {}, opt), error);
}

TEST(Solve, HeatMatchesExponentialDecay) {
    auto pb = make(kPi, 1, 0, 2, "Dx2(y1)", {"sin(x)"});
    SolveConfig cfg;
    cfg.k_check = {0, 1};
    cfg.n_max = 20;
    auto rep = solve(pb, cfg);
    EXPECT_EQ(rep.status, Verdict::converged);
    EXPECT_LE(sup_error(rep.solution, [](double t, double x) { return std::exp(-t) * std::sin(x); }), 1e-8);
    EXPECT_LE(rep.residual.pde, 1e-7);
    for (double r : rep.residual.ic) EXPECT_LE(r, 1e-13);
    ASSERT_TRUE(rep.certificate.has_value());
}

TEST(Solve, TransportMatchesShift) {
    Domain dom = box(0.0, 0.5, 0.5, {{-M_PI, M_PI}});
    auto pb = make(dom, 1, 0, 1, "Dx1(y1)", {"sin(x)"});
    SolveConfig cfg;
    cfg.n_max = 40;
    auto rep = solve(pb, cfg);
    EXPECT_EQ(rep.status, Verdict::converged);
    EXPECT_LE(sup_error(rep.solution, [](double t, double x) { return std::sin(x + t); }), 1e-8);
}

TEST(Solve, ZeroRhsIsOneStep) {
    auto pb = make(kUnit, 2, 0, 1, "0", {"x", "x^2"});
    auto rep = solve(pb, SolveConfig{});
    EXPECT_EQ(rep.steps, 1);
    EXPECT_LE(max_coef_diff(rep.solution, rep.i0), 0.0);
}

TEST(Solve, BallEscapeIsReported) {
    auto pb = make(kPi, 1, 0, 2, "Dx2(y1)", {"sin(x)"});
    SolveConfig cfg;
    cfg.R = Radii::constant(0.01);
    cfg.certify = false;
    try {
        solve(pb, cfg);
        FAIL();
    } catch (const graded_core::membership_violation& e) {
        EXPECT_EQ(e.n(), 1);
    }
}

TEST(Solve, CertifyFirstRejectsDivergence) {
    auto pb = make(box(0.0, 0.5, 0.5, {{-M_PI, M_PI}}), 1, 0, 2, "Dx2(y1)", {"1/(1+x^2)"});
    SolveConfig cfg;
    cfg.certify_first = true;
    cfg.k_cap = 6;
    cfg.log_growth_model = [](int K) { return log_factorial(K + 2); };
    EXPECT_THROW(solve(pb, cfg), certificate_rejected);
}

TEST(Property, IncrementContractionAndInitialConditions) {
    struct Case {
        Domain dom;
        int d, L;
        std::string F;
        std::vector<std::string> y0;
    };
    std::vector<Case> cases = {
        {box(0.0, 0.3, 0.3, {{-1.0, 1.0}}), 1, 2, "Dx2(y1)", {"sin(x)"}},
        {box(0.1, 0.2, 0.4, {{-1.0, 2.0}}), 1, 1, "cos(t)*Dx1(y1) + x", {"x^3"}},
        {box(0.0, 0.5, 0.5, {{-1.0, 1.0}}), 2, 2, "Dx2(y1)", {"sin(x)", "cos(x)"}},
        {box(0.0, 0.4, 0.4, {{0.0, 1.0}}), 3, 1, "2*Dx1(y1) - y1", {"exp(x)", "x", "1"}},
    };
    for (auto& c : cases) {
        auto pb = make(c.dom, c.d, 0, c.L, c.F, c.y0);
        PicardOperator op(pb);
        auto lf = estimate_lipschitz_linear(pb);
        SepFunc D = op.P(op.i0()) - op.i0();
        std::vector<SepFunc> it{op.i0()};
        for (int n = 0; n < 5; ++n) it.push_back(op.P(it.back()));
        int k_cap = 8;
        for (int k = 0; k <= 2; ++k) {
            auto tab = lambda_table(lf, pb.dom, pb.d, pb.L, k, 5);
            for (int n = 0; n + 1 < static_cast<int>(it.size()) && k + (n + 1) * pb.L <= k_cap; ++n) {
                double lhs = funcspace::graded_norm(it[n + 1] - it[n], k);
                double rhs = tab.bar(n) * funcspace::graded_norm(D, k + n * pb.L);
                EXPECT_LE(lhs, rhs * (1 + 1e-6) + 1e-14) << c.F << " k=" << k << " n=" << n;
            }
        }
        for (auto& y : it)
            for (int j = 0; j < pb.d; ++j) {
                std::vector<int> b{j, 0};
                SepFunc a = funcspace::restrict_time(funcspace::partial_derivative(y, b), pb.dom.t0);
                SepFunc e = funcspace::restrict_time(funcspace::partial_derivative(op.i0(), b), pb.dom.t0);
                EXPECT_LE(max_coef_diff(a, e), 1e-13);
            }
    }
}

TEST(Property, ModesCoincideForFirstOrder) {
    for (double tb : {0.2, 0.7, 1.0}) {
        Domain dom = box(0.0, tb, tb, {{0.0, 1.0}});
        auto lf = LipschitzFactors::from_rule([](int k) { return 0.5 + 0.25 * k; });
        for (int k = 0; k <= 3; ++k) {
            auto a = lambda_table(lf, dom, 1, 1, k, 10, LambdaMode::conservative);
            auto b = lambda_table(lf, dom, 1, 1, k, 10, LambdaMode::paper);
            for (int n = 0; n <= 10; ++n) EXPECT_NEAR(a.bar(n), b.bar(n), 1e-8 * b.bar(n));
        }
    }
}

TEST(Property, ApplyPIsAffineForLinearClass) {
    auto pb = make(box(0.0, 0.3, 0.3, {{-1.0, 1.0}}), 2, 1, 2, "(1+t^2)*Dt1x1(y1) - Dx2(y1) + sin(x)", {"x^2", "cos(x)"});
    PicardOperator op(pb);
    SepFunc u = op.P(op.i0());
    SepFunc v = op.i0();
    double lam = 0.3;
    SepFunc lhs = op.P(combine(lam, u, 1 - lam, v));
    SepFunc rhs = combine(lam, op.P(u), 1 - lam, op.P(v));
    EXPECT_LE(max_coef_diff(lhs, rhs), 1e-10);
}

TEST(Property, ConvergedRunsStayInBall) {
    auto pb = make(kPi, 1, 0, 2, "Dx2(y1)", {"sin(x)"});
    SolveConfig cfg;
    cfg.R = Radii::constant(0.2);
    cfg.k_check = {0, 2};
    auto rep = solve(pb, cfg);
    EXPECT_EQ(rep.status, Verdict::converged);
    EXPECT_EQ(static_cast<int>(rep.ball_log.size()), rep.steps + 1);
    for (auto& b : rep.ball_log) EXPECT_TRUE(b.all_inside);
}
