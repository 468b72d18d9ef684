#pragma once

#include <map>
#include <optional>
#include <unordered_map>

#include "picard_pde.hpp"

/// Linear problems d_t^d y = p(t) d_x^mu d_t^gamma y + q(t, x): closed forms, series and growth classes.
namespace picard_lod::linear_series {

using funcspace::Domain;
using funcspace::SepFunc;
using picard_pde::CauchyProblem;
using picard_pde::Discretization;

/// Chebyshev series on T and m x m matrices of them.
using Series = std::vector<double>;
using TimeMatrix = std::vector<std::vector<Series>>;

inline constexpr int kMaxTimeDegree = 4096;

struct LinearProblem {
    Domain dom;
    int m = 1;
    int d = 1;
    int gamma = 0;
    std::vector<int> mu;
    /// p_coef[h][h'] depends on t only.
    std::vector<std::vector<expr::Expr>> p_coef;
    std::vector<expr::Expr> q;
    /// Declared uniform bound on |d_x^nu q|; measured on a probe grid when absent.
    std::optional<double> Q;
    /// y0[j][h]
    std::vector<std::vector<expr::Expr>> y0;

    std::size_t s() const { return dom.s(); }
    int L() const {
        int n = 0;
        for (int v : mu) n += v;
        return n;
    }

    void validate() const {
        dom.validate();
        if (m < 1) throw error("m must be at least 1");
        if (d < 1) throw error("d must be at least 1");
        if (gamma < 0 || gamma >= d) throw error("gamma must satisfy 0 <= gamma < d");
        if (mu.size() != s()) throw error("mu must have s entries");
        for (int v : mu)
            if (v < 0) throw error("mu entries must be non-negative");
        if (L() <= 0) throw error("|mu| must be positive");
        if (p_coef.size() != static_cast<std::size_t>(m)) throw error("p must be an m x m matrix");
        for (auto& row : p_coef) {
            if (row.size() != static_cast<std::size_t>(m)) throw error("p must be an m x m matrix");
            for (auto& e : row) {
                auto u = expr::usage(e);
                if (!u.space.empty() || !u.placeholders.empty() || !u.named.empty())
                    throw error("p may depend on t only");
            }
        }
        if (q.size() != static_cast<std::size_t>(m)) throw error("q must have m components");
        for (auto& e : q) {
            auto u = expr::usage(e);
            if (!u.placeholders.empty() || !u.named.empty()) throw error("q may depend on (t, x) only");
            for (int i : u.space)
                if (static_cast<std::size_t>(i) >= s()) throw error("q uses x beyond s");
        }
        if (Q && !(*Q >= 0.0 && std::isfinite(*Q))) throw error("Q must be finite and non-negative");
        if (y0.size() != static_cast<std::size_t>(d)) throw error("expected d initial conditions");
        for (auto& row : y0) {
            if (row.size() != static_cast<std::size_t>(m)) throw error("initial condition must have m components");
            for (auto& e : row) {
                auto u = expr::usage(e);
                if (u.time || !u.placeholders.empty() || !u.named.empty())
                    throw error("initial conditions may depend on x only");
                for (int i : u.space)
                    if (static_cast<std::size_t>(i) >= s()) throw error("initial condition uses x beyond s");
            }
        }
    }

    expr::PlaceholderKey key(int h) const { return {h, gamma, mu}; }

    CauchyProblem to_cauchy() const {
        validate();
        CauchyProblem pb;
        pb.dom = dom;
        pb.m = m;
        pb.d = d;
        pb.p = gamma;
        pb.L = L();
        for (int h = 0; h < m; ++h) {
            expr::Expr f = q[static_cast<std::size_t>(h)];
            for (int c = 0; c < m; ++c) {
                const auto& pc = p_coef[static_cast<std::size_t>(h)][static_cast<std::size_t>(c)];
                if (expr::is_const(pc, 0.0)) continue;
                f = expr::add(expr::mul(pc, expr::placeholder(key(c))), f);
            }
            pb.F.push_back(f);
        }
        pb.y0 = y0;
        return pb;
    }
};

/// Recognises F = p(t) z_{mu,gamma} + q(t, x) with one shared (mu, gamma) and |mu| > 0.
inline std::optional<LinearProblem> from_cauchy(const CauchyProblem& pb) {
    auto coeffs = picard_pde::linear_coefficients(pb);
    if (!coeffs) return std::nullopt;
    std::optional<std::pair<int, std::vector<int>>> shape;
    for (auto& row : *coeffs)
        for (auto& [k, c] : row) {
            std::vector<int> a = k.alpha;
            a.resize(pb.s(), 0);
            if (shape && (shape->first != k.gamma || shape->second != a)) return std::nullopt;
            shape = std::make_pair(k.gamma, a);
        }
    if (!shape) return std::nullopt;
    LinearProblem lp;
    lp.dom = pb.dom;
    lp.m = pb.m;
    lp.d = pb.d;
    lp.gamma = shape->first;
    lp.mu = shape->second;
    if (lp.L() == 0 || lp.gamma >= lp.d) return std::nullopt;
    lp.p_coef.assign(static_cast<std::size_t>(pb.m), std::vector<expr::Expr>(static_cast<std::size_t>(pb.m), expr::constant(0.0)));
    for (int h = 0; h < pb.m; ++h) {
        for (auto& [k, c] : (*coeffs)[static_cast<std::size_t>(h)]) {
            if (k.h < 0 || k.h >= pb.m) return std::nullopt;
            lp.p_coef[static_cast<std::size_t>(h)][static_cast<std::size_t>(k.h)] = c;
        }
        auto q = expr::substitute(pb.F[static_cast<std::size_t>(h)], [](const expr::Node& n) -> std::optional<expr::Expr> {
            if (n.kind == expr::Kind::placeholder) return expr::constant(0.0);
            return std::nullopt;
        });
        if (!expr::usage(q).placeholders.empty()) return std::nullopt;
        lp.q.push_back(q);
    }
    lp.y0 = pb.y0;
    return lp;
}

/// Scalar instance from expression strings (x is x1 for s = 1).
inline LinearProblem scalar_problem(const Domain& dom, int d, int gamma, std::vector<int> mu, const std::string& p,
                                    const std::string& q, const std::vector<std::string>& y0,
                                    std::optional<double> Q = std::nullopt) {
    expr::Arity a;
    a.s = static_cast<int>(dom.s());
    LinearProblem lp;
    lp.dom = dom;
    lp.d = d;
    lp.gamma = gamma;
    lp.mu = std::move(mu);
    lp.p_coef = {{expr::parse(p, a)}};
    lp.q = {expr::parse(q, a)};
    lp.Q = Q;
    for (auto& s : y0) lp.y0.push_back({expr::parse(s, a)});
    lp.validate();
    return lp;
}

// ---------------------------------------------------------------- time series

namespace detail {

inline Series integrate(const Series& c, const Domain& dom, int times) {
    Series r = c;
    auto T = dom.T();
    for (int i = 0; i < times; ++i) r = cheb::antiderivative(r, T.half(), T.to_ref(dom.t0));
    return r;
}

inline Series differentiate(const Series& c, const Domain& dom, int times) {
    Series r = c;
    for (int i = 0; i < times; ++i) r = cheb::derivative(r, 1.0 / dom.T().half());
    return r;
}

inline bool is_zero(const Series& c) {
    for (double v : c)
        if (v != 0.0) return false;
    return true;
}

inline void check_degree(const Series& c) {
    if (static_cast<int>(c.size()) - 1 > kMaxTimeDegree)
        throw error("time degree cap " + std::to_string(kMaxTimeDegree) + " exceeded");
}

inline TimeMatrix zeros(int m) {
    return TimeMatrix(static_cast<std::size_t>(m), std::vector<Series>(static_cast<std::size_t>(m), Series{0.0}));
}

inline TimeMatrix scalar_matrix(const Series& c, int m) {
    auto M = zeros(m);
    for (int h = 0; h < m; ++h) M[h][h] = c;
    return M;
}

inline TimeMatrix mat_mul(const TimeMatrix& A, const TimeMatrix& B) {
    std::size_t m = A.size();
    auto C = zeros(static_cast<int>(m));
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t k = 0; k < m; ++k) {
                if (is_zero(A[r][k]) || is_zero(B[k][c])) continue;
                C[r][c] = cheb::add(C[r][c], cheb::multiply(A[r][k], B[k][c]));
                check_degree(C[r][c]);
            }
    return C;
}

template <class Fn>
TimeMatrix map(const TimeMatrix& A, Fn&& fn) {
    TimeMatrix B = A;
    for (auto& row : B)
        for (auto& c : row) c = fn(c);
    return B;
}

/// Series of a t-only expression on T.
inline Series time_series(const expr::Expr& e, const Domain& dom, const funcspace::AdaptiveConfig& cfg) {
    Domain td = dom;
    td.S.clear();
    auto slotted = expr::with_slots(e, {});
    auto r = funcspace::interpolate_adaptive(
        td, 1, 0, {0}, [&](const wide* tx, wide* out) { out[0] = expr::eval_slots<wide>(*slotted, tx, nullptr); }, cfg);
    if (r.truncation_residual > 1e-14) throw error("coefficient p(t) is not resolved within the degree cap");
    return r.f.coef[0];
}

inline TimeMatrix p_matrix(const LinearProblem& lp, const funcspace::AdaptiveConfig& cfg) {
    auto P = zeros(lp.m);
    for (int r = 0; r < lp.m; ++r)
        for (int c = 0; c < lp.m; ++c) {
            const auto& e = lp.p_coef[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            P[r][c] = expr::is_const(e) ? Series{e->value} : time_series(e, lp.dom, cfg);
        }
    return P;
}

inline SepFunc component(const SepFunc& f, int h) {
    SepFunc g = f;
    g.m = 1;
    g.coef = {f.coef[static_cast<std::size_t>(h)]};
    return g;
}

inline SepFunc pack(const std::vector<SepFunc>& comps) {
    std::vector<int> deg = comps[0].deg;
    for (auto& c : comps)
        for (std::size_t i = 0; i < deg.size(); ++i) deg[i] = std::max(deg[i], c.deg[i]);
    SepFunc out = comps[0];
    out.m = static_cast<int>(comps.size());
    out.deg = deg;
    out.coef.clear();
    for (auto& c : comps) out.coef.push_back(funcspace::with_degrees(c, deg).coef[0]);
    return out;
}

/// w_r = sum_c M[r][c](t) v_c(t, x).
inline SepFunc apply_time_matrix(const TimeMatrix& M, const SepFunc& v) {
    std::vector<SepFunc> comps;
    for (std::size_t r = 0; r < M.size(); ++r) {
        std::optional<SepFunc> acc;
        for (std::size_t c = 0; c < M.size(); ++c) {
            if (is_zero(M[r][c])) continue;
            SepFunc term = funcspace::multiply_time(M[r][c], component(v, static_cast<int>(c)));
            acc = acc ? *acc + term : term;
        }
        comps.push_back(acc ? *acc : 0.0 * component(v, 0));
    }
    SepFunc out = pack(comps);
    out.p = v.p;
    return out;
}

/// x-only function of m expressions, interpolated in quad precision (t-degree 0).
inline SepFunc spatial(const std::vector<expr::Expr>& es, const Domain& dom, int p, const Discretization& disc) {
    std::vector<expr::Expr> slotted;
    for (auto& e : es) slotted.push_back(expr::with_slots(e, {}));
    std::vector<int> start(1 + dom.s(), disc.x_start);
    start[0] = 0;
    int m = static_cast<int>(es.size());
    auto v = funcspace::interpolate_adaptive(
        dom, m, p, start,
        [&](const wide* tx, wide* out) {
            for (int h = 0; h < m; ++h) out[h] = expr::eval_slots<wide>(*slotted[h], tx, nullptr);
        },
        disc.cfg);
    if (v.truncation_residual > disc.max_truncation) throw error("spatial data not resolved within the degree cap");
    auto deg = v.f.deg;
    deg[0] = 0;
    return funcspace::with_degrees(v.f, deg);
}

inline SepFunc joint(const std::vector<expr::Expr>& es, const Domain& dom, int p, const Discretization& disc) {
    std::vector<expr::Expr> slotted;
    for (auto& e : es) slotted.push_back(expr::with_slots(e, {}));
    std::vector<int> start(1 + dom.s(), disc.x_start);
    int m = static_cast<int>(es.size());
    auto v = funcspace::interpolate_adaptive(
        dom, m, p, start,
        [&](const wide* tx, wide* out) {
            for (int h = 0; h < m; ++h) out[h] = expr::eval_slots<wide>(*slotted[h], tx, nullptr);
        },
        disc.cfg);
    if (v.truncation_residual > disc.max_truncation) throw error("data not resolved within the degree cap");
    return v.f;
}

/// Tree size with shared subtrees counted once per occurrence (evaluation cost).
inline double tree_size(const expr::Node& n, std::unordered_map<const expr::Node*, double>& memo) {
    auto it = memo.find(&n);
    if (it != memo.end()) return it->second;
    double s = 1.0;
    for (auto& a : n.args) s += tree_size(*a, memo);
    memo[&n] = s;
    return s;
}

inline double tree_size(const expr::Expr& e) {
    std::unordered_map<const expr::Node*, double> memo;
    return tree_size(*e, memo);
}

inline expr::Expr apply_mu(const expr::Expr& e, const std::vector<int>& mu) {
    expr::Expr r = e;
    for (std::size_t i = 0; i < mu.size(); ++i) r = expr::symbolic_partial(r, expr::Var::x(static_cast<int>(i)), mu[i]);
    return r;
}

inline bool all_zero(const std::vector<expr::Expr>& es) {
    for (auto& e : es)
        if (!expr::is_const(e, 0.0)) return false;
    return true;
}

inline std::vector<int> beta(const LinearProblem& lp) {
    std::vector<int> b{lp.gamma};
    b.insert(b.end(), lp.mu.begin(), lp.mu.end());
    return b;
}

/// Successive d_x^{h mu} y0j, h = 0, 1, ...: symbolic while the tree stays small, spectral afterwards.
class SpatialDerivatives {
public:
    SpatialDerivatives(const LinearProblem& lp, int j, const Discretization& disc) : lp_(lp), disc_(disc) {
        exprs_ = lp.y0[static_cast<std::size_t>(j)];
        funcs_.push_back(spatial(exprs_, lp.dom, lp.gamma, disc));
    }

    const SepFunc& at(int h) {
        while (static_cast<int>(funcs_.size()) <= h) {
            if (symbolic_) {
                std::vector<expr::Expr> next;
                double size = 0.0;
                for (auto& e : exprs_) {
                    next.push_back(apply_mu(e, lp_.mu));
                    size += tree_size(next.back());
                }
                if (size <= kTreeCap) {
                    exprs_ = next;
                    funcs_.push_back(spatial(exprs_, lp_.dom, lp_.gamma, disc_));
                    continue;
                }
                symbolic_ = false;
            }
            std::vector<int> b{0};
            b.insert(b.end(), lp_.mu.begin(), lp_.mu.end());
            funcs_.push_back(funcspace::partial_derivative(funcs_.back(), b));
        }
        return funcs_[static_cast<std::size_t>(h)];
    }
    bool symbolic() const { return symbolic_; }

private:
    static constexpr double kTreeCap = 2e5;
    const LinearProblem& lp_;
    Discretization disc_;
    std::vector<expr::Expr> exprs_;
    std::vector<SepFunc> funcs_;
    bool symbolic_ = true;
};

}  // namespace detail

// ---------------------------------------------------------------- recursions

struct MuEta {
    /// mu[j - gamma][h], h = 0..h_max, as matrices of series on T.
    std::vector<std::vector<TimeMatrix>> mu;
    /// eta[h], h = 0..h_max.
    std::vector<SepFunc> eta;

    double mu_at(int jg, int h, double t, const Domain& dom, int r = 0, int c = 0) const {
        return cheb::eval(mu.at(static_cast<std::size_t>(jg)).at(static_cast<std::size_t>(h))[r][c], dom.T().to_ref(t));
    }
};

/// The displayed recursions: mu_{j-g,0} = p (t-t0)^{j-g}, mu_{j-g,h+1} = I_d[p d_t^g mu_{j-g,h}];
/// eta_0 = q, eta_{h+1} = I_d[p d_x^mu d_t^g eta_h].
inline MuEta mu_eta_recursions(const LinearProblem& lp, int h_max, const Discretization& disc = {}) {
    lp.validate();
    if (h_max < 0) throw error("h_max must be non-negative");
    auto P = detail::p_matrix(lp, disc.cfg);
    MuEta out;
    for (int j = lp.gamma; j < lp.d; ++j) {
        int e = j - lp.gamma;
        Series mono = funcspace::time_monomial(lp.dom, e);
        for (auto& v : mono) v *= factorial(e);
        std::vector<TimeMatrix> seq{detail::mat_mul(P, detail::scalar_matrix(mono, lp.m))};
        for (int h = 0; h < h_max; ++h) {
            auto D = detail::map(seq.back(), [&](const Series& c) { return detail::differentiate(c, lp.dom, lp.gamma); });
            seq.push_back(detail::map(detail::mat_mul(P, D),
                                      [&](const Series& c) { return detail::integrate(c, lp.dom, lp.d); }));
        }
        out.mu.push_back(std::move(seq));
    }
    SepFunc eta = detail::joint(lp.q, lp.dom, lp.gamma, disc);
    out.eta.push_back(eta);
    auto b = detail::beta(lp);
    for (int h = 0; h < h_max; ++h) {
        eta = funcspace::iterated_time_integral(detail::apply_time_matrix(P, funcspace::partial_derivative(eta, b)), lp.d);
        if (eta.deg[0] > kMaxTimeDegree) throw error("time degree cap exceeded in eta recursion");
        out.eta.push_back(eta);
    }
    return out;
}

// ---------------------------------------------------------------- closed form

struct ClosedForm {
    SepFunc i0;
    /// blocks[h-1]: contribution of level h (kernels times d_x^{h mu} y0j plus eta_h).
    std::vector<SepFunc> blocks;
    bool constant_case = false;
    bool symbolic_derivatives = true;

    SepFunc sum() const {
        SepFunc y = i0;
        for (auto& b : blocks) y = y + b;
        return y;
    }
};

inline bool constant_coefficients(const LinearProblem& lp) {
    if (lp.m != 1) return false;
    return expr::is_const(lp.p_coef[0][0]) && expr::is_const(lp.q[0]);
}

/// i0 plus levels h = 1..n of the n-th Picard iterate, with kernels nu_{j,0} = (t-t0)^j/j!,
/// nu_{j,h+1} = I_d[p d_t^g nu_{j,h}] and eta_1 = I_d[q], eta_{h+1} = I_d[p d_x^mu d_t^g eta_h].
inline ClosedForm closed_form_parts(const LinearProblem& lp, int n, const Discretization& disc = {}) {
    lp.validate();
    if (n < 0) throw error("n must be non-negative");
    ClosedForm cf;
    auto pb = lp.to_cauchy();
    cf.i0 = picard_pde::initial_polynomial(pb, disc);
    cf.constant_case = constant_coefficients(lp);
    auto P = detail::p_matrix(lp, disc.cfg);
    std::vector<detail::SpatialDerivatives> derivs;
    std::vector<TimeMatrix> nu;
    std::vector<bool> skip;
    for (int j = lp.gamma; j < lp.d; ++j) {
        skip.push_back(detail::all_zero(lp.y0[static_cast<std::size_t>(j)]));
        derivs.emplace_back(lp, j, disc);
        nu.push_back(detail::scalar_matrix(funcspace::time_monomial(lp.dom, j), lp.m));
    }
    bool q_zero = detail::all_zero(lp.q);
    SepFunc eta = q_zero ? 0.0 * cf.i0 : detail::joint(lp.q, lp.dom, lp.gamma, disc);
    auto b = detail::beta(lp);
    double a = cf.constant_case ? lp.p_coef[0][0]->value : 0.0;
    for (int h = 1; h <= n; ++h) {
        std::optional<SepFunc> block;
        for (std::size_t i = 0; i < nu.size(); ++i) {
            int j = lp.gamma + static_cast<int>(i);
            if (cf.constant_case) {
                Series k = funcspace::time_monomial(lp.dom, j + h * (lp.d - lp.gamma));
                for (auto& v : k) v *= std::pow(a, h);
                nu[i] = detail::scalar_matrix(k, 1);
            } else {
                auto D = detail::map(nu[i], [&](const Series& c) { return detail::differentiate(c, lp.dom, lp.gamma); });
                nu[i] = detail::map(detail::mat_mul(P, D), [&](const Series& c) { return detail::integrate(c, lp.dom, lp.d); });
            }
            if (skip[i]) continue;
            SepFunc term = detail::apply_time_matrix(nu[i], derivs[i].at(h));
            block = block ? *block + term : term;
        }
        if (!q_zero) {
            eta = h == 1 ? funcspace::iterated_time_integral(eta, lp.d)
                         : funcspace::iterated_time_integral(
                               detail::apply_time_matrix(P, funcspace::partial_derivative(eta, b)), lp.d);
            block = block ? *block + eta : eta;
        }
        SepFunc out = block ? *block : 0.0 * cf.i0;
        out.p = lp.gamma;
        cf.blocks.push_back(out);
    }
    for (auto& d : derivs) cf.symbolic_derivatives = cf.symbolic_derivatives && d.symbolic();
    return cf;
}

/// P^n(i0) as a finite sum.
inline SepFunc picard_closed_form(const LinearProblem& lp, int n, const Discretization& disc = {}) {
    return closed_form_parts(lp, n, disc).sum();
}

// ---------------------------------------------------------------- growth classes

struct GrowthClass {
    enum class Kind { free, exponential, analytic, sigma };
    Kind kind = Kind::free;
    double C = 1.0;
    double sigma = 1.0;

    static GrowthClass make_free() { return {}; }
    static GrowthClass exponential(double C) { return GrowthClass{Kind::exponential, C, 1.0}.checked(); }
    static GrowthClass analytic(double C) { return GrowthClass{Kind::analytic, C, 1.0}.checked(); }
    static GrowthClass sigma_class(double sigma, double C = 1.0) { return GrowthClass{Kind::sigma, C, sigma}.checked(); }

    GrowthClass checked() const {
        if (!(C > 0.0) || !std::isfinite(C)) throw error("growth constant C must be positive");
        if (!(sigma > 0.0) || !std::isfinite(sigma)) throw error("growth exponent sigma must be positive");
        return *this;
    }

    /// log of the model value for ||y0j||_K.
    double log_model(int K) const {
        double k = static_cast<double>(K);
        switch (kind) {
            case Kind::exponential: return k * std::log(C);
            case Kind::analytic: return k * std::log(C) + log_factorial(k);
            case Kind::sigma: return k * std::log(C) + (K > 0 ? sigma * k * std::log(k) : 0.0);
            case Kind::free: break;
        }
        throw error("free initial data has no growth model");
    }
    double model(int K) const { return std::exp(log_model(K)); }

    std::string name() const {
        switch (kind) {
            case Kind::exponential: return "exponential";
            case Kind::analytic: return "analytic";
            case Kind::sigma: return "sigma";
            case Kind::free: return "free";
        }
        return "?";
    }
};

namespace detail {

inline void check_growth(const LinearProblem& lp, const std::vector<GrowthClass>& growth) {
    if (growth.size() != static_cast<std::size_t>(lp.d))
        throw error("expected one growth class per initial condition (d = " + std::to_string(lp.d) + ")");
    for (int j = lp.gamma; j < lp.d; ++j)
        if (growth[static_cast<std::size_t>(j)].kind == GrowthClass::Kind::free)
            throw error("missing growth class for y0" + std::to_string(j));
}

}  // namespace detail

/// Spot check of declared classes: ||y0j||_K on the dense grid against the model, K <= k_cap.
struct GrowthCheck {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

inline GrowthCheck spot_check_growth(const LinearProblem& lp, const std::vector<GrowthClass>& growth, int k_cap = 8,
                                     const Discretization& disc = {}) {
    detail::check_growth(lp, growth);
    GrowthCheck out;
    for (int j = lp.gamma; j < lp.d; ++j) {
        SepFunc y = detail::spatial(lp.y0[static_cast<std::size_t>(j)], lp.dom, 0, disc);
        for (int K = 0; K <= k_cap; ++K) {
            double v = funcspace::graded_norm(y, K);
            double model = growth[static_cast<std::size_t>(j)].model(K);
            if (v > model * (1.0 + 1e-9) + 1e-12)
                out.violations.push_back("||y0" + std::to_string(j) + "||_" + std::to_string(K) + " = " +
                                         std::to_string(v) + " exceeds the " + growth[static_cast<std::size_t>(j)].name() +
                                         " model " + std::to_string(model));
        }
    }
    return out;
}

// ---------------------------------------------------------------- norms of the data

/// sup_t max-row-sum |p(t)|.
inline double p_norm(const LinearProblem& lp) {
    return picard_pde::estimate_lipschitz_linear(lp.to_cauchy()).value(0);
}

/// Largest |d_x^nu q| for |nu| <= k_probe on a Lobatto probe grid of T x S.
inline double measured_q_bound(const LinearProblem& lp, int k_probe = 4, int pts = 17) {
    double best = 0.0;
    std::vector<int> g(1 + lp.s(), pts);
    auto grid = picard_pde::detail::grid_points(lp.dom, g);
    for (auto& q : lp.q) {
        if (expr::is_const(q)) {
            best = std::max(best, std::abs(q->value));
            continue;
        }
        for (auto& nu : funcspace::multi_indices(1 + lp.s(), k_probe, 0)) {
            expr::Expr e = q;
            for (std::size_t i = 1; i < nu.size(); ++i)
                e = expr::symbolic_partial(e, expr::Var::x(static_cast<int>(i - 1)), nu[i]);
            if (expr::is_const(e)) {
                best = std::max(best, std::abs(e->value));
                continue;
            }
            auto slotted = expr::with_slots(e, {});
            picard_pde::detail::for_grid(grid, [&](std::size_t, const std::vector<double>& tx) {
                best = std::max(best, std::abs(expr::eval_slots<double>(*slotted, tx.data(), nullptr)));
            });
        }
    }
    return best;
}

/// Declared Q (checked against the probe grid) or the measured value.
inline double q_bound(const LinearProblem& lp, int k_probe = 4) {
    double measured = measured_q_bound(lp, k_probe);
    if (!lp.Q) return measured;
    if (*lp.Q < measured * (1.0 - 1e-12) - 1e-14)
        throw error("declared Q = " + std::to_string(*lp.Q) + " is below the measured derivative bound " +
                    std::to_string(measured));
    return *lp.Q;
}

// ---------------------------------------------------------------- increment bound

/// Tbar > 1 keeps the T powers of the pre-simplification bound.
inline bool extended_mode(const LinearProblem& lp) { return lp.dom.tbar() > 1.0; }

/// log of the bound on ||P(i0) - i0||_{k+nL}: ||p||_0 sum_j model_j(k+(n+1)L) f_j + Q f_q, where for Tbar <= 1
/// f_j = max_{beta_1 <= min(g, k+nL)} 1/(j-g+d-beta_1)! and f_q = 1 (extended mode: T powers restored).
namespace detail {

inline double log_increment(const LinearProblem& lp, const std::vector<GrowthClass>& growth, int k, int n, double pn,
                            double Q) {
    if (k < 0 || n < 0) throw error("increment_bound: negative index");
    int L = lp.L();
    int K = k + n * L;
    int bmax = std::min(lp.gamma, K);
    double ltbar = std::log(lp.dom.tbar());
    bool ext = extended_mode(lp);
    auto log_factor = [&](int e0) {
        double best = -kInf;
        for (int b = 0; b <= bmax; ++b) {
            int e = e0 - b;
            best = std::max(best, (ext ? e * ltbar : 0.0) - log_factorial(e));
        }
        return best;
    };
    double lsum = -kInf;
    for (int j = lp.gamma; j < lp.d; ++j) {
        if (all_zero(lp.y0[static_cast<std::size_t>(j)])) continue;
        lsum = log_add(lsum, growth[static_cast<std::size_t>(j)].log_model(k + (n + 1) * L) +
                                 log_factor(j - lp.gamma + lp.d));
    }
    double lq = safe_log(Q) + (ext ? log_factor(lp.d) : 0.0);
    return log_add(safe_log(pn) + lsum, lq);
}

}  // namespace detail

inline double log_increment_bound(const LinearProblem& lp, const std::vector<GrowthClass>& growth, int k, int n) {
    lp.validate();
    detail::check_growth(lp, growth);
    return detail::log_increment(lp, growth, k, n, p_norm(lp), q_bound(lp));
}

inline double increment_bound(const LinearProblem& lp, const std::vector<GrowthClass>& growth, int k, int n) {
    return std::exp(log_increment_bound(lp, growth, k, n));
}

/// log model of ||P(i0) - i0||_K for certification beyond the numeric range.
inline std::function<double(int)> increment_log_model(const LinearProblem& lp, const std::vector<GrowthClass>& growth) {
    lp.validate();
    detail::check_growth(lp, growth);
    double pn = p_norm(lp), Q = q_bound(lp);
    return [lp, growth, pn, Q](int K) { return detail::log_increment(lp, growth, K, 0, pn, Q); };
}

// ---------------------------------------------------------------- convergence classes

struct Classification {
    Verdict verdict = Verdict::inconclusive;
    /// Tbar below which the class rules give convergence (+inf: no constraint, 0: never).
    double admissible_tbar = kInf;
    std::string reason;
    /// Windowed test on the terms (Tbar^d ||p||_0)^n sum_j model_j(k+(n+1)L) / ((nd)! (j-g+d)!).
    graded_core::SeriesRow numeric;
    bool corroborated = false;
};

inline Classification classify_convergence(const LinearProblem& lp, const std::vector<GrowthClass>& growth, double tbar,
                                           int n_max = 40, int k = 0, const graded_core::WindowRule& rule = {}) {
    lp.validate();
    detail::check_growth(lp, growth);
    if (!(tbar > 0.0)) throw error("Tbar must be positive");
    int d = lp.d, L = lp.L(), g = lp.gamma;
    double pn = p_norm(lp);
    Classification c;
    bool diverging = false, boundary = false;
    double threshold = kInf;
    std::string why;
    for (int j = g; j < d; ++j) {
        const auto& gc = growth[static_cast<std::size_t>(j)];
        std::string tag = "y0" + std::to_string(j) + " " + gc.name() + ": ";
        if (detail::all_zero(lp.y0[static_cast<std::size_t>(j)])) continue;
        switch (gc.kind) {
            case GrowthClass::Kind::exponential: why += tag + "no constraint on d, L; "; break;
            case GrowthClass::Kind::analytic:
                if (d > L) why += tag + "d > L; ";
                else if (d == L) {
                    double t = pn > 0.0 ? std::pow(pn * std::pow(gc.C, L), -1.0 / d) : kInf;
                    threshold = std::min(threshold, t);
                    why += tag + "d = L, ratio limit Tbar^d ||p|| C^L; ";
                } else {
                    diverging = true;
                    int nn = std::max(1, n_max);
                    double w = log_factorial(k + (nn + 1) * L) - log_factorial(nn * d);
                    why += tag + "d = " + std::to_string(d) + " < L = " + std::to_string(L) +
                           ", (k+(n+1)L)! ~ (nL)^(k+L) (nL)! outgrows (nd)! (log ratio " + std::to_string(w) +
                           " at n = " + std::to_string(nn) + "); ";
                }
                break;
            case GrowthClass::Kind::sigma:
                if (d > gc.sigma * L) why += tag + "d > sigma L; ";
                else if (d < gc.sigma * L) {
                    diverging = true;
                    why += tag + "d < sigma L, (nL)^(sigma nL) outgrows (nd)!; ";
                } else {
                    boundary = true;
                    why += tag + "d = sigma L is not covered; ";
                }
                break;
            case GrowthClass::Kind::free: break;
        }
    }
    if (pn == 0.0) {
        diverging = boundary = false;
        threshold = kInf;
        why += "p vanishes; ";
    }
    if (diverging) {
        c.verdict = Verdict::diverging;
        c.admissible_tbar = 0.0;
    } else if (boundary) {
        c.verdict = Verdict::inconclusive;
        c.admissible_tbar = 0.0;
    } else {
        c.admissible_tbar = threshold;
        c.verdict = tbar < threshold ? Verdict::converged : tbar > threshold ? Verdict::diverging : Verdict::inconclusive;
    }
    if (!why.empty()) why.resize(why.size() - 2);
    c.reason = why.empty() ? "all initial data vanish" : why;

    std::vector<double> lt;
    for (int n = 0; n <= n_max; ++n) {
        double inner = -kInf;
        for (int j = g; j < d; ++j) {
            if (detail::all_zero(lp.y0[static_cast<std::size_t>(j)])) continue;
            inner = log_add(inner, growth[static_cast<std::size_t>(j)].log_model(k + (n + 1) * L) - log_factorial(j - g + d));
        }
        double lead = n == 0 ? 0.0 : n * (d * std::log(tbar) + safe_log(pn));
        lt.push_back(inner == -kInf || lead == -kInf ? -kInf : lead - log_factorial(n * d) + inner);
    }
    c.numeric = graded_core::row_from_log_terms(k, lt, rule);
    c.corroborated = c.numeric.verdict == c.verdict;
    return c;
}

// ---------------------------------------------------------------- radii

/// r_k = sum_{h>=1} sum_j ||p||^h Tbar^{h(d-g)+j} / [(d-g)!]^h model_j(k+hL)/(j-g)!
///     + sum_{h>=1} ||p||^h Q Tbar^{(h+1)(d-g)} / [(h+1)(d-g)]!, +inf when the first series diverges.
inline double radii_from_series(const LinearProblem& lp, const std::vector<GrowthClass>& growth, int k,
                                int h_max = 400) {
    lp.validate();
    detail::check_growth(lp, growth);
    int d = lp.d, g = lp.gamma, L = lp.L();
    double tbar = lp.dom.tbar(), pn = p_norm(lp), Q = q_bound(lp);
    double lrho = safe_log(pn) + (d - g) * std::log(tbar) - log_factorial(d - g);
    double total = 0.0;
    for (int j = g; j < d; ++j) {
        if (detail::all_zero(lp.y0[static_cast<std::size_t>(j)]) || pn == 0.0) continue;
        const auto& gc = growth[static_cast<std::size_t>(j)];
        double lpre = j * std::log(tbar) - log_factorial(j - g);
        if (gc.kind == GrowthClass::Kind::exponential) {
            double q = std::exp(lrho + L * std::log(gc.C));
            if (q >= 1.0) return kInf;
            total += std::exp(lpre + k * std::log(gc.C)) * q / (1.0 - q);
            continue;
        }
        std::vector<double> lt;
        for (int h = 1; h <= h_max; ++h) lt.push_back(h * lrho + lpre + gc.log_model(k + h * L));
        auto row = graded_core::row_from_log_terms(k, lt);
        if (row.verdict != Verdict::converged) return kInf;
        total += row.partial_sums.back() + graded_core::a_posteriori_bound(row, h_max).extrapolated;
    }
    if (Q > 0.0 && pn > 0.0) {
        double lead = std::log(Q);
        for (int h = 1; h <= h_max; ++h) {
            int e = (h + 1) * (d - g);
            double term = std::exp(lead + h * safe_log(pn) + e * std::log(tbar) - log_factorial(e));
            total += term;
            if (term <= 1e-17 * total) break;
        }
    }
    if (!std::isfinite(total)) return kInf;
    return total > 0.0 ? total : kEpsFloor;
}

inline funcspace::Radii series_radii(const LinearProblem& lp, const std::vector<GrowthClass>& growth) {
    auto cache = std::make_shared<std::map<int, double>>();
    return funcspace::Radii::from_rule([lp, growth, cache](int k) {
        auto it = cache->find(k);
        if (it != cache->end()) return it->second;
        double r = radii_from_series(lp, growth, k);
        (*cache)[k] = r;
        return r;
    });
}

// ---------------------------------------------------------------- series solution

struct SeriesSolution {
    SepFunc y;
    int N = 0;
    /// Sup-grid norm of the h = N block.
    double last_term = 0.0;
    bool constant_case = false;
    bool symbolic_derivatives = true;
    std::optional<Classification> classification;
};

inline SeriesSolution series_solution(const LinearProblem& lp, int N, const std::vector<GrowthClass>* growth = nullptr,
                                      const Discretization& disc = {}) {
    if (N < 1) throw error("series truncation N must be at least 1");
    SeriesSolution out;
    out.N = N;
    if (growth) {
        out.classification = classify_convergence(lp, *growth, lp.dom.tbar());
        if (out.classification->verdict == Verdict::diverging)
            throw error("series diverges under the declared growth classes: " + out.classification->reason);
    }
    auto cf = closed_form_parts(lp, N, disc);
    out.y = cf.sum();
    out.last_term = funcspace::graded_norm(cf.blocks.back(), 0);
    out.constant_case = cf.constant_case;
    out.symbolic_derivatives = cf.symbolic_derivatives;
    return out;
}

// ---------------------------------------------------------------- catalog

struct CatalogCase {
    std::string name;
    LinearProblem problem;
    /// Reference solution in (t, x).
    expr::Expr reference;
    std::string oracle_source;
    std::vector<GrowthClass> growth;

    SepFunc oracle(const Discretization& disc = {}) const {
        return detail::joint({reference}, problem.dom, problem.gamma, disc);
    }
};

inline const std::vector<std::string>& catalog_names() {
    static const std::vector<std::string> names{"heat", "wave", "transport", "mixed_dt_dx", "dt2_dx"};
    return names;
}

inline CatalogCase example_catalog(const std::string& name, double a = 1.0) {
    using funcspace::Interval;
    auto dom = [](double lo, double hi) {
        Domain d;
        d.t0 = 0.0;
        d.a = 0.5;
        d.b = 0.5;
        d.S = {Interval{lo, hi}};
        return d;
    };
    std::string as = expr::detail::number(a);
    auto ref = [](const std::string& s) {
        expr::Arity ar;
        return expr::parse(s, ar);
    };
    CatalogCase c;
    c.name = name;
    auto E = GrowthClass::exponential;
    if (name == "heat") {
        c.problem = scalar_problem(dom(-1.0, 1.0), 1, 0, {2}, as, "0", {"x^2"});
        c.reference = ref("x^2 + 2*" + as + "*t");
        c.oracle_source = "finite heat series";
        c.growth = {E(2.0)};
    } else if (name == "wave") {
        c.problem = scalar_problem(dom(-M_PI, M_PI), 2, 0, {2}, as, "0", {"sin(x)", "0"});
        c.reference = ref("cos(" + expr::detail::number(std::sqrt(a)) + "*t)*sin(x)");
        c.oracle_source = "directly computed Picard series";
        c.growth = {E(1.0), E(1.0)};
    } else if (name == "transport") {
        c.problem = scalar_problem(dom(-M_PI, M_PI), 1, 0, {1}, as, "0", {"sin(x)"});
        c.reference = ref("sin(x + " + as + "*t)");
        c.oracle_source = "transport series";
        c.growth = {E(1.0)};
    } else if (name == "mixed_dt_dx") {
        c.problem = scalar_problem(dom(-1.0, 1.0), 2, 1, {1}, as, "0", {"0", "x"});
        c.reference = ref("x*t + " + as + "*t^2/2");
        c.oracle_source = "series y0 + sum d_x^n y01 a^n t^(n+1)/(n+1)!";
        c.growth = {GrowthClass::make_free(), E(1.0)};
    } else if (name == "dt2_dx") {
        c.problem = scalar_problem(dom(-1.0, 1.0), 2, 0, {1}, as, "0", {"x^2", "0"});
        c.reference = ref("x^2 + " + as + "*x*t^2 + " + expr::detail::number(a * a) + "*t^4/12");
        c.oracle_source = "series sum d_x^n y00 a^n t^(2n)/(2n)!";
        c.growth = {E(2.0), E(1.0)};
    } else {
        throw error("unknown catalog case '" + name + "'");
    }
    return c;
}

// ---------------------------------------------------------------- parameter limit

struct ParameterLimitRow {
    double eps = 0.0;
    double distance = 0.0;
};

struct ParameterLimitReport {
    std::vector<ParameterLimitRow> rows;
    bool monotone = true;
    bool premise_checked = false;
    bool premise_ok = true;
    std::vector<std::string> warnings;
};

/// Dominator g(h, x) for |d_x^{h mu} y0j(x; eps)|, used for the premise check.
using Dominator = std::function<double(int, const std::vector<double>&)>;

inline ParameterLimitReport parameter_limit_experiment(const std::function<LinearProblem(double)>& family,
                                                       const std::vector<double>& eps_list, int N,
                                                       const Dominator& dominating = {},
                                                       const Discretization& disc = {}) {
    ParameterLimitReport rep;
    LinearProblem base = family(0.0);
    SepFunc y_ref = series_solution(base, N, nullptr, disc).y;
    if (dominating) {
        rep.premise_checked = true;
        int h_probe = std::min(N, 6);
        std::vector<int> g(1 + base.s(), 17);
        g[0] = 1;
        auto grid = picard_pde::detail::grid_points(base.dom, g);
        for (double eps : eps_list) {
            LinearProblem lp = family(eps);
            for (auto& row : lp.y0)
                for (auto& e0 : row) {
                    expr::Expr e = e0;
                    for (int h = 0; h <= h_probe; ++h) {
                        if (h > 0) e = detail::apply_mu(e, lp.mu);
                        if (detail::tree_size(e) > 2e5) break;
                        auto slotted = expr::with_slots(e, {});
                        picard_pde::detail::for_grid(grid, [&](std::size_t, const std::vector<double>& tx) {
                            std::vector<double> x(tx.begin() + 1, tx.end());
                            double v = std::abs(expr::eval_slots<double>(*slotted, tx.data(), nullptr));
                            double dom_v = dominating(h, x);
                            if (!std::isfinite(dom_v) || v > dom_v * (1.0 + 1e-12) + 1e-14) rep.premise_ok = false;
                        });
                    }
                }
        }
        if (!rep.premise_ok) rep.warnings.push_back("dominated-convergence premise fails on the probe grid");
    }
    for (double eps : eps_list) {
        SepFunc y = series_solution(family(eps), N, nullptr, disc).y;
        rep.rows.push_back({eps, funcspace::graded_norm(y - y_ref, 0)});
    }
    auto sorted = rep.rows;
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return std::abs(a.eps) > std::abs(b.eps); });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i].distance > sorted[i - 1].distance * (1.0 + 1e-9) + 1e-14) rep.monotone = false;
    if (!rep.monotone) rep.warnings.push_back("distances do not decrease monotonically as eps -> 0");
    return rep;
}

// ---------------------------------------------------------------- Burgers-type demo

/// log H(n) = sum_{j=1}^{n} j log j.
inline double log_hyperfactorial(int n) {
    double s = 0.0;
    for (int j = 2; j <= n; ++j) s += j * std::log(static_cast<double>(j));
    return s;
}

/// Weissinger terms for d_t^d y = y d_x^mu y with Lambda_bar_{k,n} = Tbar^{nd}/(nd)! 2^n prod_{i<n} (r_{k+iL} + m_{k+iL}),
/// m_K = sum_j Tbar^j/j! model(K) bounding ||i0||_K, and ||P(i0) - i0||_K <= 2^K m_K m_{K+L} max_b Tbar^{d-b}/(d-b)!.
inline graded_core::LodCertificate burgers_demo(const CauchyProblem& pb, const funcspace::Radii& R,
                                                const std::vector<int>& k_list, int n_max,
                                                const GrowthClass& growth = GrowthClass::sigma_class(1.0),
                                                const graded_core::WindowRule& rule = {}) {
    pb.validate();
    if (pb.m != 1 || pb.L < 1) throw error("burgers_demo expects a scalar problem with L >= 1");
    int d = pb.d, L = pb.L;
    double tbar = pb.dom.tbar();
    bool zero = true;
    for (auto& row : pb.y0) zero = zero && detail::all_zero(row);
    double ltf = -kInf;
    for (int j = 0; j < d; ++j) ltf = log_add(ltf, j * std::log(tbar) - log_factorial(j));
    auto log_m = [&](int K) { return zero ? -kInf : ltf + growth.log_model(K); };
    auto log_lambda = [&](int K) {
        double r = R.at(K);
        if (std::isinf(r)) throw error("burgers_demo needs finite radii");
        return log_add(safe_log(r), log_m(K));
    };
    graded_core::LodCertificate cert;
    for (int k : k_list) {
        std::vector<double> lt;
        double lprod = 0.0;
        for (int n = 0; n <= n_max; ++n) {
            int K = k + n * L;
            double tf = -kInf;
            for (int b = 0; b <= std::min(pb.p, K); ++b) tf = std::max(tf, (d - b) * std::log(tbar) - log_factorial(d - b));
            double linc = zero ? -kInf : K * std::log(2.0) + log_m(K) + log_m(K + L) + tf;
            double lbar = n * d * std::log(tbar) - log_factorial(n * d) + n * std::log(2.0) + lprod;
            lt.push_back(linc == -kInf || lbar == -kInf ? -kInf : lbar + linc);
            lprod += log_lambda(K);
        }
        auto row = graded_core::row_from_log_terms(k, lt, rule);
        double lh = log_hyperfactorial(n_max - 1);
        double lp_last = 0.0;
        for (int i = 0; i < n_max; ++i) lp_last += log_lambda(k + i * L);
        std::string w = "k = " + std::to_string(k) + ": log prod (r + ||i0||) = " + std::to_string(lp_last) +
                        ", log H(" + std::to_string(n_max - 1) + ") = " + std::to_string(lh);
        if (lp_last >= lh) w += " (hyperfactorial growth)";
        cert.notes.push_back(w);
        cert.rows.push_back(std::move(row));
    }
    cert.overall = graded_core::combine(cert.rows);
    return cert;
}

}  // namespace picard_lod::linear_series
