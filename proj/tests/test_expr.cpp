#include <gtest/gtest.h>

#include <random>

#include "picard_lod/expr.hpp"

using namespace picard_lod;
using namespace picard_lod::expr;

namespace {

Arity pde_arity(int L, int p = 0) {
    Arity a;
    a.s = 1;
    a.m = 1;
    a.L = L;
    a.p = p;
    return a;
}

// n-th central difference in quad precision.
double quad_fd(const Expr& e, double x0, int n) {
    auto slotted = with_slots(e, {});
    const wide h = 1e-6;
    wide acc = 0;
    wide binom = 1;
    for (int i = 0; i <= n; ++i) {
        wide x = wide(x0) + (wide(n) / 2 - i) * h;
        wide tx[2] = {0, x};
        wide v = eval_slots<wide>(*slotted, tx, nullptr);
        acc += (i % 2 ? -binom : binom) * v;
        binom = binom * (n - i) / (i + 1);
    }
    wide hn = 1;
    for (int i = 0; i < n; ++i) hn *= h;
    return static_cast<double>(acc / hn);
}

}  // namespace

TEST(ExprParse, ScaledSecondDerivativePlaceholder) {
    Arity a = pde_arity(2);
    a.params["a"] = 1.0;
    Expr e = parse("a*Dx2(y1)", a);
    auto u = usage(e);
    ASSERT_EQ(u.placeholders.size(), 1u);
    EXPECT_EQ(u.placeholders.begin()->alpha, std::vector<int>{2});
    EXPECT_EQ(u.placeholders.begin()->gamma, 0);
    Bindings b;
    b.z[*u.placeholders.begin()] = 3.5;
    EXPECT_DOUBLE_EQ(eval(e, b), 3.5);
}

TEST(ExprParse, SineOfSpace) {
    Expr e = parse("sin(x1)", pde_arity(0));
    Bindings b;
    b.x = {0.0};
    EXPECT_EQ(eval(e, b), 0.0);
}

TEST(ExprParse, BurgersProduct) {
    Expr e = parse("y1*Dx1(y1)", pde_arity(1));
    auto keys = placeholders({e});
    ASSERT_EQ(keys.size(), 2u);
    Bindings b;
    b.z[keys[0]] = 2.0;
    b.z[keys[1]] = 5.0;
    EXPECT_DOUBLE_EQ(eval(e, b), 10.0);
}

TEST(ExprParse, DiffSyntaxEqualsShorthand) {
    Expr a = parse("Dt1x2(y1)", pde_arity(2, 1));
    Expr b = parse("diff(y1, t, x, 2)", pde_arity(2, 1));
    EXPECT_TRUE(structurally_equal(a, b));
}

TEST(ExprParse, MultiDimensionalPlaceholder) {
    Arity a;
    a.s = 2;
    a.m = 2;
    a.L = 2;
    Expr e = parse("diff(y2, x1, x2) + x2", a);
    auto keys = placeholders({e});
    ASSERT_EQ(keys.size(), 1u);
    EXPECT_EQ(keys[0].h, 1);
    EXPECT_EQ(keys[0].alpha, (std::vector<int>{1, 1}));
}

TEST(ExprParse, RejectsOrderAboveL) { EXPECT_THROW(parse("Dx3(y1)", pde_arity(2)), parse_error); }

TEST(ExprParse, RejectsTimeOrderAboveP) { EXPECT_THROW(parse("Dt1(y1)", pde_arity(2, 0)), parse_error); }

TEST(ExprParse, RejectsFractionalPower) { EXPECT_THROW(parse("x^0.5", pde_arity(0)), parse_error); }

TEST(ExprParse, RejectsUndeclaredVariable) {
    try {
        parse("x + q", pde_arity(0));
        FAIL();
    } catch (const parse_error& e) {
        EXPECT_EQ(e.column(), 5u);
    }
}

TEST(ExprParse, RejectsUnknownFunction) { EXPECT_THROW(parse("tan(x)", pde_arity(0)), parse_error); }

TEST(ExprEval, AffineInFreeSymbol) {
    Arity a;
    a.free = {"z"};
    Expr e = parse("2*z + 1", a);
    Bindings b;
    b.named["z"] = 3.0;
    EXPECT_DOUBLE_EQ(eval(e, b), 7.0);
}

TEST(ExprEval, Rational) {
    Expr e = parse("1/(1+x1^2)", pde_arity(0));
    Bindings b;
    b.x = {1.0};
    EXPECT_DOUBLE_EQ(eval(e, b), 0.5);
}

TEST(ExprEval, DivisionByZeroIsError) {
    Expr e = parse("1/x", pde_arity(0));
    Bindings b;
    b.x = {0.0};
    EXPECT_THROW(eval(e, b), domain_error);
}

TEST(ExprEval, UnboundSymbolIsError) {
    Arity a;
    a.free = {"z"};
    Expr e = parse("z*t", a);
    Bindings b;
    b.t = 1.0;
    EXPECT_THROW(eval(e, b), domain_error);
}

TEST(ExprEval, NegativeIntegerPower) {
    Expr e = parse("x^(-2)", pde_arity(0));
    Bindings b;
    b.x = {2.0};
    EXPECT_DOUBLE_EQ(eval(e, b), 0.25);
}

TEST(ExprDiff, Cubic) {
    Expr d = symbolic_partial(parse("x1^3", pde_arity(0)), Var::x(0));
    for (double x : {-1.5, 0.0, 0.3, 2.0}) {
        Bindings b;
        b.x = {x};
        EXPECT_NEAR(eval(d, b), 3 * x * x, 1e-14);
    }
}

TEST(ExprDiff, SineSecondDerivative) {
    Expr e = parse("sin(x1)", pde_arity(0));
    Expr d = symbolic_partial(e, Var::x(0), 2);
    for (double x : {-1.0, 0.2, 1.3}) {
        Bindings b;
        b.x = {x};
        EXPECT_NEAR(eval(d, b), -std::sin(x), 1e-15);
    }
}

TEST(ExprDiff, RationalDerivative) {
    Expr d = symbolic_partial(parse("1/(1+x1^2)", pde_arity(0)), Var::x(0));
    for (double x : {-2.0, 0.5, 1.0}) {
        Bindings b;
        b.x = {x};
        EXPECT_NEAR(eval(d, b), -2 * x / std::pow(1 + x * x, 2), 1e-15);
    }
}

TEST(ExprDiff, PlaceholdersAreOpaque) {
    Expr e = parse("x*Dx1(y1)", pde_arity(1));
    Expr d = symbolic_partial(e, Var::x(0));
    auto keys = placeholders({e});
    Bindings b;
    b.x = {4.0};
    b.z[keys[0]] = 3.0;
    EXPECT_DOUBLE_EQ(eval(d, b), 3.0);
}

TEST(ExprDiff, TotalDerivativeRaisesPlaceholderOrder) {
    Expr e = parse("y1*y1", pde_arity(0));
    Expr d = total_space_derivative(e, 0);
    auto keys = placeholders({d});
    ASSERT_EQ(keys.size(), 2u);
    Bindings b;
    b.z[keys[0]] = 2.0;
    b.z[keys[1]] = 3.0;
    EXPECT_DOUBLE_EQ(eval(d, b), 12.0);
}

TEST(ExprPrint, RoundTripIsStructural) {
    Arity a = pde_arity(2, 1);
    a.s = 1;
    a.params["c"] = -1.5;
    const char* cases[] = {"a - (b - c)",
                           "x^2 - -3",
                           "-(x+t)*sin(x)",
                           "(x - 1)^(-2)/(2 + t)",
                           "exp(-x^2)*cos(t)",
                           "c*Dx2(y1) + Dt1x1(y1)*y",
                           "1e-3*x - 2.5e10",
                           "-2^2",
                           "x/(t/x)",
                           "x*(t*x)",
                           "--x"};
    Arity b = a;
    b.free = {"a", "b"};
    b.params.erase("a");
    for (const char* text : cases) {
        Expr e = parse(text, b);
        std::string printed = to_string(e);
        Expr again = parse(printed, b);
        EXPECT_TRUE(structurally_equal(e, again)) << text << " -> " << printed;
        EXPECT_EQ(to_string(again), printed);
    }
}

TEST(ExprProperty, DerivativesMatchFiniteDifferences) {
    const char* catalog[] = {"sin(x)*exp(x/3)", "1/(1+x^2)", "x^5 - 3*x^2 + 1", "cos(2*x)/(2+sin(x))",
                             "exp(-x^2)", "(x+3)^(-3)", "x*cos(x)^2"};
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    int points = 0;
    for (const char* text : catalog) {
        Expr e = parse(text, pde_arity(0));
        for (int order = 1; order <= 4; ++order) {
            Expr d = symbolic_partial(e, Var::x(0), order);
            for (int i = 0; i < 15; ++i, ++points) {
                double x = U(rng);
                Bindings b;
                b.x = {x};
                double exact = eval(d, b);
                double fd = quad_fd(e, x, order);
                EXPECT_LE(std::abs(fd - exact), 1e-6 * std::max(1.0, std::abs(exact))) << text << " order " << order;
            }
        }
    }
    EXPECT_GE(points, 100);
}
