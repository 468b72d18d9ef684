#pragma once

#include <map>
#include <random>

#include "funcspace.hpp"
#include "graded_core.hpp"

/// Picard iteration for Cauchy problems d_t^d y = F[t, x, (d_x^alpha d_t^gamma y)] in normal form.
namespace picard_lod::picard_pde {

using funcspace::Domain;
using funcspace::Radii;
using funcspace::SepFunc;

struct CauchyProblem {
    Domain dom;
    int m = 1;
    int d = 1;
    int p = 0;
    int L = 0;
    std::vector<expr::Expr> F;
    /// y0[j][h]: j-th time derivative of component h at t0.
    std::vector<std::vector<expr::Expr>> y0;

    std::size_t s() const { return dom.s(); }

    /// Number of pairs (alpha, gamma) with |alpha| <= L and gamma <= p.
    long lhat() const {
        long n = 1;
        for (std::size_t i = 1; i <= s(); ++i) n = n * static_cast<long>(L + i) / static_cast<long>(i);
        return n * (p + 1);
    }

    void validate() const {
        dom.validate();
        if (m < 1) throw error("m must be at least 1");
        if (d < 1) throw error("d must be at least 1");
        if (p < 0 || p >= d) throw error("p must satisfy 0 <= p < d");
        if (L < 0) throw error("L must be non-negative");
        if (F.size() != static_cast<std::size_t>(m)) throw error("F must have m components");
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
        for (auto& f : F) {
            auto u = expr::usage(f);
            if (!u.named.empty()) throw error("right-hand side has unbound symbol '" + *u.named.begin() + "'");
            for (int i : u.space)
                if (static_cast<std::size_t>(i) >= s()) throw error("right-hand side uses x beyond s");
            for (auto& k : u.placeholders) {
                if (k.h < 0 || k.h >= m) throw error("placeholder component out of range");
                if (k.gamma > p) throw error("placeholder time order exceeds p");
                if (k.order() > L) throw error("placeholder spatial order exceeds L");
                if (k.alpha.size() > s()) throw error("placeholder has more spatial indices than s");
            }
        }
    }
};

struct Discretization {
    funcspace::AdaptiveConfig cfg{};
    int x_start = 16;
    double max_truncation = 1e-6;
};

namespace detail {

inline std::vector<int> beta_of(const expr::PlaceholderKey& k, std::size_t s) {
    std::vector<int> b(1 + s, 0);
    b[0] = k.gamma;
    for (std::size_t i = 0; i < k.alpha.size(); ++i) b[1 + i] = k.alpha[i];
    return b;
}

/// Tensor grid of points; calls f(flat, tx) in row-major order.
template <class Fn>
void for_grid(const std::vector<std::vector<double>>& pts, Fn&& f) {
    std::size_t dims = pts.size(), vol = 1;
    for (auto& p : pts) vol *= p.size();
    std::vector<std::size_t> idx(dims, 0);
    std::vector<double> tx(dims);
    for (std::size_t flat = 0; flat < vol; ++flat) {
        for (std::size_t ax = 0; ax < dims; ++ax) tx[ax] = pts[ax][idx[ax]];
        f(flat, tx);
        for (std::size_t ax = dims; ax-- > 0;) {
            if (++idx[ax] < pts[ax].size()) break;
            idx[ax] = 0;
        }
    }
}

inline std::vector<std::vector<double>> grid_points(const Domain& dom, const std::vector<int>& g) {
    std::vector<std::vector<double>> pts;
    for (std::size_t ax = 0; ax < g.size(); ++ax) pts.push_back(funcspace::lobatto_points(dom, ax, g[ax]));
    return pts;
}

}  // namespace detail

/// i0 = sum_j y0j(x) (t - t0)^j / j!.
inline SepFunc initial_polynomial(const CauchyProblem& pb, const Discretization& disc = {}) {
    pb.validate();
    std::vector<int> start(1 + pb.s(), disc.x_start);
    start[0] = 0;
    SepFunc total;
    for (int j = 0; j < pb.d; ++j) {
        std::vector<expr::Expr> slotted;
        for (auto& e : pb.y0[static_cast<std::size_t>(j)]) slotted.push_back(expr::with_slots(e, {}));
        auto v = funcspace::interpolate_adaptive(
            pb.dom, pb.m, pb.p, start,
            [&](const wide* tx, wide* out) {
                for (int h = 0; h < pb.m; ++h) out[h] = expr::eval_slots<wide>(*slotted[h], tx, nullptr);
            },
            disc.cfg);
        if (v.truncation_residual > disc.max_truncation) throw error("initial condition " + std::to_string(j) +
                                                                     " is not resolved within the degree cap");
        funcspace::SepFunc vj = funcspace::with_degrees(v.f, [&] {
            auto deg = v.f.deg;
            deg[0] = 0;
            return deg;
        }());
        SepFunc term = funcspace::outer_time(funcspace::time_monomial(pb.dom, j), vj);
        total = j == 0 ? term : total + term;
    }
    total.p = pb.p;
    return total;
}

/// Holds a problem with its initial polynomial and compiled right-hand side.
class PicardOperator {
public:
    explicit PicardOperator(CauchyProblem pb, Discretization disc = {})
        : pb_(std::move(pb)), disc_(disc), i0_(initial_polynomial(pb_, disc_)) {
        keys_ = expr::placeholders(pb_.F);
        for (auto& f : pb_.F) slotted_.push_back(expr::with_slots(f, keys_));
    }

    const CauchyProblem& problem() const { return pb_; }
    const SepFunc& i0() const { return i0_; }
    const std::vector<expr::PlaceholderKey>& keys() const { return keys_; }
    const Discretization& discretization() const { return disc_; }
    double last_truncation() const { return truncation_; }

    /// G(t, x) = F[t, x, (d_x^alpha d_t^gamma y)], re-interpolated adaptively in quad precision.
    SepFunc G(const SepFunc& y) const {
        if (!(y.dom == pb_.dom) || y.m != pb_.m) throw error("iterate does not match the problem");
        std::vector<SepFunc> derivs;
        for (auto& k : keys_) derivs.push_back(funcspace::partial_derivative(y, detail::beta_of(k, pb_.s())));
        auto make = [&](const std::vector<int>& npts) {
            std::vector<std::vector<wide>> vals;
            for (std::size_t i = 0; i < keys_.size(); ++i)
                vals.push_back(funcspace::values_on_gauss(derivs[i].coef[static_cast<std::size_t>(keys_[i].h)],
                                                          derivs[i].deg, npts));
            return [this, vals = std::move(vals), z = std::vector<wide>(keys_.size())](
                       std::size_t flat, const wide* tx, wide* out) mutable {
                for (std::size_t i = 0; i < z.size(); ++i) z[i] = vals[i][flat];
                for (int h = 0; h < pb_.m; ++h) out[h] = expr::eval_slots<wide>(*slotted_[h], tx, z.data());
            };
        };
        std::vector<int> start = y.deg;
        auto r = funcspace::interpolate_on_grids(pb_.dom, pb_.m, pb_.p, start, make, disc_.cfg);
        truncation_ = r.truncation_residual;
        if (r.truncation_residual > disc_.max_truncation)
            throw error("degree cap exceeded while representing G (relative tail " +
                        std::to_string(r.truncation_residual) + ")");
        return r.f;
    }

    /// P(y) = i0 + I_d[G(y)].
    SepFunc P(const SepFunc& y) const {
        SepFunc out = i0_ + funcspace::iterated_time_integral(G(y), pb_.d);
        out.p = pb_.p;
        return out;
    }

private:
    CauchyProblem pb_;
    Discretization disc_;
    SepFunc i0_;
    std::vector<expr::PlaceholderKey> keys_;
    std::vector<expr::Expr> slotted_;
    mutable double truncation_ = 0.0;
};

inline SepFunc eval_G(const CauchyProblem& pb, const SepFunc& y, const Discretization& disc = {}) {
    return PicardOperator(pb, disc).G(y);
}

inline SepFunc apply_P(const CauchyProblem& pb, const SepFunc& y, const Discretization& disc = {}) {
    return PicardOperator(pb, disc).P(y);
}

// ---------------------------------------------------------------- residuals

struct Residual {
    double pde = 0.0;
    std::vector<double> ic;
};

/// max |d_t^d y - F[...]| on a Lobatto grid (4x degree, at least 128 points per axis) and IC residuals.
inline Residual residual(const CauchyProblem& pb, const SepFunc& y) {
    pb.validate();
    auto keys = expr::placeholders(pb.F);
    std::vector<expr::Expr> slotted;
    for (auto& f : pb.F) slotted.push_back(expr::with_slots(f, keys));
    std::vector<int> g;
    for (int dg : y.deg) g.push_back(std::max(128, 4 * (dg + 1)));
    std::vector<std::vector<double>> zvals;
    for (auto& k : keys)
        zvals.push_back(funcspace::lobatto_values(funcspace::partial_derivative(y, detail::beta_of(k, pb.s())), k.h, g));
    std::vector<int> bd(1 + pb.s(), 0);
    bd[0] = pb.d;
    SepFunc dty = funcspace::partial_derivative(y, bd);
    auto pts = detail::grid_points(pb.dom, g);
    Residual res;
    for (int h = 0; h < pb.m; ++h) {
        auto lhs = funcspace::lobatto_values(dty, h, g);
        std::vector<double> z(keys.size());
        detail::for_grid(pts, [&](std::size_t flat, const std::vector<double>& tx) {
            for (std::size_t i = 0; i < keys.size(); ++i) z[i] = zvals[i][flat];
            double rhs = expr::eval_slots<double>(*slotted[h], tx.data(), z.data());
            res.pde = std::max(res.pde, std::abs(lhs[flat] - rhs));
        });
    }
    std::vector<int> gx = g;
    gx[0] = 1;
    auto xpts = detail::grid_points(pb.dom, gx);
    for (int j = 0; j < pb.d; ++j) {
        std::vector<int> bj(1 + pb.s(), 0);
        bj[0] = j;
        SepFunc at0 = funcspace::restrict_time(funcspace::partial_derivative(y, bj), pb.dom.t0);
        double worst = 0.0;
        for (int h = 0; h < pb.m; ++h) {
            auto vals = funcspace::lobatto_values(at0, h, gx);
            auto e = expr::with_slots(pb.y0[static_cast<std::size_t>(j)][static_cast<std::size_t>(h)], {});
            detail::for_grid(xpts, [&](std::size_t flat, const std::vector<double>& tx) {
                worst = std::max(worst, std::abs(vals[flat] - expr::eval_slots<double>(*e, tx.data(), nullptr)));
            });
        }
        res.ic.push_back(worst);
    }
    return res;
}

// ---------------------------------------------------------------- Lipschitz factors

struct LipschitzFactors {
    enum class Mode { constant, function };
    Mode mode = Mode::constant;
    /// Lambda_k as a constant (constant mode; also the sup over T x S in function mode when known).
    std::function<double(int)> value;
    /// Lambda_k(t, x) (function mode).
    std::function<double(int, double, const std::vector<double>&)> pointwise;
    bool certified = false;
    std::string method;
    nlohmann::json meta = nlohmann::json::object();

    static LipschitzFactors constant(double v) { return from_rule([v](int) { return v; }); }
    static LipschitzFactors from_rule(std::function<double(int)> f) {
        LipschitzFactors lf;
        lf.value = std::move(f);
        lf.method = "declared";
        lf.certified = true;
        return lf;
    }

    bool has_constant() const { return static_cast<bool>(value); }

    /// Running maximum over k' <= k with the epsilon floor.
    double at(int k) const {
        if (!value) throw error("Lipschitz factors have no constant form");
        double r = kEpsFloor;
        for (int i = 0; i <= k; ++i) {
            double v = value(i);
            if (!(v >= 0.0) || std::isnan(v)) throw error("Lipschitz factor must be non-negative");
            r = std::max(r, v);
        }
        return r;
    }

    double at(int k, double t, const std::vector<double>& x) const {
        if (pointwise) return std::max(kEpsFloor, pointwise(k, t, x));
        return at(k);
    }
};

/// Coefficients c_z(t) of an F affine in the placeholders with t-only coefficients; nullopt otherwise.
inline std::optional<std::vector<std::vector<std::pair<expr::PlaceholderKey, expr::Expr>>>> linear_coefficients(
    const CauchyProblem& pb) {
    std::vector<std::vector<std::pair<expr::PlaceholderKey, expr::Expr>>> out;
    for (auto& f : pb.F) {
        std::vector<std::pair<expr::PlaceholderKey, expr::Expr>> row;
        for (auto& k : expr::usage(f).placeholders) {
            expr::Expr c = expr::symbolic_partial(f, expr::Var::z(k));
            auto u = expr::usage(c);
            if (!u.placeholders.empty() || !u.space.empty() || !u.named.empty()) return std::nullopt;
            row.emplace_back(k, c);
        }
        out.push_back(row);
    }
    return out;
}

/// Lambda_k = max_h sup_t sum_z |c_z(t)| (max-row-sum norm) for F affine in the placeholders.
inline LipschitzFactors estimate_lipschitz_linear(const CauchyProblem& pb, int t_points = 513) {
    auto coeffs = linear_coefficients(pb);
    if (!coeffs) throw error("linear_exact requires F affine in the placeholders with coefficients depending on t only");
    auto tpts = funcspace::lobatto_points(pb.dom, 0, t_points);
    auto rows = std::make_shared<std::vector<std::vector<expr::Expr>>>();
    for (auto& row : *coeffs) {
        std::vector<expr::Expr> r;
        for (auto& [k, c] : row) r.push_back(expr::with_slots(c, {}));
        rows->push_back(r);
    }
    auto row_sum = [rows](double t) {
        double best = 0.0;
        for (auto& row : *rows) {
            double s = 0.0;
            double tx[1] = {t};
            for (auto& c : row) s += std::abs(expr::eval_slots<double>(*c, tx, nullptr));
            best = std::max(best, s);
        }
        return best;
    };
    double sup = 0.0;
    for (double t : tpts) sup = std::max(sup, row_sum(t));
    LipschitzFactors lf;
    lf.value = [sup](int) { return sup; };
    lf.pointwise = [row_sum](int, double t, const std::vector<double>&) { return row_sum(t); };
    lf.certified = true;
    lf.method = "linear_exact";
    lf.meta = {{"norm", "max-row-sum"}, {"sup", sup}, {"t_points", t_points}};
    return lf;
}

struct SamplingConfig {
    int pairs = 64;
    std::uint64_t seed = 20240611;
    double inflation = 1.25;
    int k_max = 4;
    int x_degree = 6;
};

/// Sampled Lipschitz factors: max over random pairs u, v in the ball around i0 of
/// max_{|nu| <= k} sup |d_x^nu (G(u) - G(v))| / ||u - v||_{k+L}, inflated. Not certified.
inline LipschitzFactors estimate_lipschitz_sampled(const PicardOperator& op, const Radii& R, const SamplingConfig& cfg = {}) {
    const auto& pb = op.problem();
    if (cfg.pairs < 1) throw error("sampled Lipschitz estimation needs at least one pair");
    for (int K = pb.L; K <= cfg.k_max + pb.L; ++K)
        if (R.is_infinite(K)) throw error("sampled Lipschitz estimation needs finite radii");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0), V(0.05, 1.0);
    const SepFunc& c = op.i0();
    std::vector<int> deg = c.deg;
    deg[0] = std::max(deg[0], pb.d);
    for (std::size_t i = 1; i < deg.size(); ++i) deg[i] = std::max(deg[i], cfg.x_degree);
    auto perturb = [&] {
        SepFunc delta = SepFunc::zeros(pb.dom, pb.m, pb.p, deg);
        for (auto& comp : delta.coef)
            for (auto& v : comp) v = U(rng);
        double scale = kInf;
        for (int K = 0; K <= cfg.k_max + pb.L; ++K) {
            double n = funcspace::graded_norm(delta, K);
            if (n > 0.0) scale = std::min(scale, R.at(K) / n);
        }
        return (V(rng) * scale) * delta;
    };
    std::vector<std::pair<SepFunc, SepFunc>> pairs;
    for (int i = 0; i < cfg.pairs; ++i) {
        SepFunc u = c + perturb();
        SepFunc v = c + perturb();
        pairs.emplace_back(std::move(u), std::move(v));
    }
    std::vector<std::vector<double>> ratios(pairs.size(), std::vector<double>(static_cast<std::size_t>(cfg.k_max + 1), 0.0));
    parallel_for(pairs.size(), [&](std::size_t i) {
        const auto& [u, v] = pairs[i];
        PicardOperator local = op;
        SepFunc dG = local.G(u) - local.G(v);
        SepFunc duv = u - v;
        for (int k = 0; k <= cfg.k_max; ++k) {
            double num = funcspace::sup_over(dG, funcspace::multi_indices(dG.dims(), k, 0));
            double den = funcspace::graded_norm(duv, k + pb.L);
            if (den > 0.0) ratios[i][static_cast<std::size_t>(k)] = num / den;
        }
    });
    std::vector<double> best(static_cast<std::size_t>(cfg.k_max + 1), 0.0);
    for (auto& r : ratios)
        for (std::size_t k = 0; k < best.size(); ++k) best[k] = std::max(best[k], r[k]);
    for (std::size_t k = 1; k < best.size(); ++k) best[k] = std::max(best[k], best[k - 1]);
    for (auto& b : best) b *= cfg.inflation;
    LipschitzFactors lf;
    lf.value = [best](int k) { return best[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(best.size()) - 1))]; };
    lf.certified = false;
    lf.method = "sampled";
    lf.meta = {{"pairs", cfg.pairs}, {"seed", cfg.seed}, {"inflation", cfg.inflation}, {"k_max", cfg.k_max},
               {"values", best}, {"note", "indices above k_max reuse the k_max value"}};
    return lf;
}

// ---------------------------------------------------------------- Lambda recursion

/// Piecewise polynomial on [0, 1] in monomial form per piece.
struct PiecewisePoly {
    std::vector<double> breaks{0.0, 1.0};
    std::vector<std::vector<double>> coef{{1.0}};

    static double horner(const std::vector<double>& c, double u) {
        double r = 0.0;
        for (std::size_t i = c.size(); i-- > 0;) r = r * u + c[i];
        return r;
    }
    std::size_t piece(double u) const {
        std::size_t i = 0;
        while (i + 2 < breaks.size() && u > breaks[i + 1]) ++i;
        return i;
    }
    double eval(double u) const { return horner(coef[piece(u)], u); }
};

/// int_0^u f, scaled by factor.
inline PiecewisePoly integrate(const PiecewisePoly& f, double factor) {
    PiecewisePoly g;
    g.breaks = f.breaks;
    g.coef.clear();
    double acc = 0.0;
    for (std::size_t i = 0; i < f.coef.size(); ++i) {
        std::vector<double> a(f.coef[i].size() + 1, 0.0);
        for (std::size_t j = 0; j < f.coef[i].size(); ++j) a[j + 1] = factor * f.coef[i][j] / static_cast<double>(j + 1);
        a[0] = acc - PiecewisePoly::horner(a, f.breaks[i]);
        acc = PiecewisePoly::horner(a, f.breaks[i + 1]);
        g.coef.push_back(a);
    }
    return g;
}

/// Pointwise maximum; switches are located by bisection between sample midpoints.
inline PiecewisePoly pointwise_max(const std::vector<PiecewisePoly>& fs, int samples = 32) {
    std::vector<double> br;
    for (auto& f : fs) br.insert(br.end(), f.breaks.begin(), f.breaks.end());
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());
    PiecewisePoly out;
    out.breaks = {br.front()};
    out.coef.clear();
    for (std::size_t b = 0; b + 1 < br.size(); ++b) {
        double lo = br[b], hi = br[b + 1];
        double mid = 0.5 * (lo + hi);
        std::vector<const std::vector<double>*> cand;
        for (auto& f : fs) cand.push_back(&f.coef[f.piece(mid)]);
        auto arg = [&](double u) {
            std::size_t best = 0;
            double bv = PiecewisePoly::horner(*cand[0], u);
            for (std::size_t i = 1; i < cand.size(); ++i) {
                double v = PiecewisePoly::horner(*cand[i], u);
                if (v > bv) {
                    bv = v;
                    best = i;
                }
            }
            return best;
        };
        double prev_u = lo + (hi - lo) * 0.5 / samples;
        std::size_t cur = arg(prev_u);
        for (int sIdx = 1; sIdx < samples; ++sIdx) {
            double u = lo + (hi - lo) * (sIdx + 0.5) / samples;
            std::size_t a = arg(u);
            if (a != cur) {
                double l = prev_u, r = u;
                for (int it = 0; it < 80; ++it) {
                    double m = 0.5 * (l + r);
                    if (PiecewisePoly::horner(*cand[a], m) > PiecewisePoly::horner(*cand[cur], m)) r = m;
                    else l = m;
                }
                out.coef.push_back(*cand[cur]);
                out.breaks.push_back(0.5 * (l + r));
                cur = a;
            }
            prev_u = u;
        }
        out.coef.push_back(*cand[cur]);
        out.breaks.push_back(hi);
    }
    return out;
}

/// log max_j f^j_n(Tbar) for n = 0..n_max where f^j_0 = 1 and f^j_{n+1} = I_j[max_l f^l_n].
/// With constant factors, Lambda_bar_{k,n} = prod_{i<n} Lambda_{k+iL} * exp(result[n]).
inline std::vector<double> constant_profile_logs(int d, double tbar, int n_max) {
    if (d < 1 || !(tbar > 0.0)) throw error("constant_profile_logs: need d >= 1 and Tbar > 0");
    std::vector<double> out{0.0};
    PiecewisePoly M;
    double log_scale = 0.0;
    for (int n = 1; n <= n_max; ++n) {
        std::vector<PiecewisePoly> cands;
        PiecewisePoly cur = M;
        for (int j = 1; j <= d; ++j) {
            cur = integrate(cur, tbar);
            cands.push_back(cur);
        }
        M = d == 1 ? cands[0] : pointwise_max(cands);
        double top = M.eval(1.0);
        if (!(top > 0.0)) throw error("constant_profile_logs: degenerate profile");
        for (auto& c : M.coef)
            for (auto& v : c) v /= top;
        log_scale += std::log(top);
        out.push_back(log_scale);
    }
    return out;
}

enum class LambdaMode { conservative, quadrature, paper };

inline const char* to_string(LambdaMode m) {
    switch (m) {
        case LambdaMode::conservative: return "conservative";
        case LambdaMode::quadrature: return "quadrature";
        case LambdaMode::paper: return "paper";
    }
    return "?";
}

struct QuadratureConfig {
    int tau_nodes = 64;
    int x_nodes = 17;
    int t_sup_nodes = 65;
};

struct LambdaTable {
    int k = 0;
    std::vector<double> log_bar;
    std::string method;
    double bar(int n) const { return std::exp(log_bar.at(static_cast<std::size_t>(n))); }
};

namespace detail {

/// Function-mode recursion in tau = |t - t0| on Gauss nodes of [0, Tbar], per spatial node.
class QuadratureRecursion {
public:
    QuadratureRecursion(const LipschitzFactors& lf, const Domain& dom, int d, int L, const QuadratureConfig& cfg)
        : lf_(lf), dom_(dom), d_(d), L_(L), cfg_(cfg) {
        const auto& tab = cheb::cached<cheb::GaussTable<double>>(cfg.tau_nodes);
        for (int i = 0; i < cfg.tau_nodes; ++i) tau_.push_back(dom.tbar() * 0.5 * (1.0 + tab.nodes[i]));
        std::vector<std::vector<double>> pts;
        for (std::size_t ax = 0; ax < dom.s(); ++ax)
            pts.push_back(funcspace::lobatto_points(dom, ax + 1, cfg.x_nodes));
        if (pts.empty()) xs_.push_back({});
        else {
            std::vector<std::vector<double>> with_t{{0.0}};
            with_t.insert(with_t.end(), pts.begin(), pts.end());
            for_grid(with_t, [&](std::size_t, const std::vector<double>& tx) {
                xs_.emplace_back(tx.begin() + 1, tx.end());
            });
        }
    }

    double log_bar(int k, int n) { return level(k, n).log_bar; }

private:
    struct Level {
        std::vector<std::vector<double>> vals;
        double log_scale = 0.0;
        double log_bar = 0.0;
    };

    const std::vector<std::vector<double>>& factor(int K) {
        auto it = lam_.find(K);
        if (it != lam_.end()) return it->second;
        auto Tint = dom_.T();
        auto tgrid = funcspace::lobatto_points(dom_, 0, cfg_.t_sup_nodes);
        std::vector<std::vector<double>> v(xs_.size(), std::vector<double>(tau_.size()));
        parallel_for(xs_.size(), [&](std::size_t xi) {
            const auto& x = xs_[xi];
            double sup = 0.0;
            for (double t : tgrid) sup = std::max(sup, lf_.at(K, t, x));
            auto side = [&](double t) { return (t < Tint.lo || t > Tint.hi) ? sup : lf_.at(K, t, x); };
            for (std::size_t i = 0; i < tau_.size(); ++i)
                v[xi][i] = std::max(side(dom_.t0 + tau_[i]), side(dom_.t0 - tau_[i]));
        });
        return lam_.emplace(K, std::move(v)).first->second;
    }

    const Level& level(int K, int n) {
        auto key = std::make_pair(K, n);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Level lv;
        int N = cfg_.tau_nodes;
        if (n == 0) {
            lv.vals.assign(xs_.size(), std::vector<double>(static_cast<std::size_t>(N), 1.0));
            return memo_.emplace(key, std::move(lv)).first->second;
        }
        const Level& prev = level(K + L_, n - 1);
        const auto& lam = factor(K);
        lv.vals.assign(xs_.size(), std::vector<double>(static_cast<std::size_t>(N), 0.0));
        std::vector<double> ends(xs_.size(), 0.0);
        double half = 0.5 * dom_.tbar();
        parallel_for(xs_.size(), [&](std::size_t xi) {
            std::vector<double> h(static_cast<std::size_t>(N)), c(static_cast<std::size_t>(N));
            for (int i = 0; i < N; ++i) h[i] = lam[xi][i] * prev.vals[xi][i];
            cheb::coeffs_from_gauss(h.data(), N, c.data());
            std::vector<double> series = c, vals(static_cast<std::size_t>(N));
            auto& best = lv.vals[xi];
            double end = 0.0;
            for (int j = 1; j <= d_; ++j) {
                series = cheb::antiderivative(series, half, -1.0);
                cheb::values_at_gauss(series.data(), static_cast<int>(series.size()), N, vals.data());
                for (int i = 0; i < N; ++i) best[i] = std::max(best[i], std::abs(vals[i]));
                end = std::max(end, std::abs(cheb::eval(series, 1.0)));
            }
            ends[xi] = end;
        });
        double top = *std::max_element(ends.begin(), ends.end());
        for (auto& row : lv.vals) top = std::max(top, *std::max_element(row.begin(), row.end()));
        if (top > 0.0)
            for (auto& row : lv.vals)
                for (auto& v : row) v /= top;
        double end_max = *std::max_element(ends.begin(), ends.end());
        lv.log_scale = prev.log_scale + safe_log(top);
        lv.log_bar = prev.log_scale + safe_log(end_max);
        return memo_.emplace(key, std::move(lv)).first->second;
    }

    const LipschitzFactors& lf_;
    Domain dom_;
    int d_, L_;
    QuadratureConfig cfg_;
    std::vector<double> tau_;
    std::vector<std::vector<double>> xs_;
    std::map<int, std::vector<std::vector<double>>> lam_;
    std::map<std::pair<int, int>, Level> memo_;
};

}  // namespace detail

/// Lambda_bar_{k,n} for n = 0..n_max in log form.
/// conservative: the nested-integral recursion (exact piecewise polynomials for constant factors, quadrature otherwise);
/// quadrature: the recursion by Gauss-node quadrature per spatial node; paper: Tbar^{nd}/(nd)! prod Lambda.
inline LambdaTable lambda_table(const LipschitzFactors& lf, const Domain& dom, int d, int L, int k, int n_max,
                                LambdaMode mode = LambdaMode::conservative, const QuadratureConfig& qcfg = {}) {
    if (n_max < 0 || k < 0 || d < 1 || L < 0) throw error("lambda_table: invalid arguments");
    LambdaTable tab;
    tab.k = k;
    double tbar = dom.tbar();
    bool constant = lf.mode == LipschitzFactors::Mode::constant && lf.has_constant();
    if (mode == LambdaMode::conservative && !constant) mode = LambdaMode::quadrature;
    if (mode == LambdaMode::paper) {
        if (!lf.has_constant()) throw error("paper mode needs constant Lipschitz factors");
        double lp = 0.0;
        for (int n = 0; n <= n_max; ++n) {
            tab.log_bar.push_back(lp + n * d * std::log(tbar) - log_factorial(n * d));
            lp += std::log(lf.at(k + n * L));
        }
        tab.method = "paper-closed-form";
    } else if (mode == LambdaMode::conservative) {
        auto prof = constant_profile_logs(d, tbar, n_max);
        double lp = 0.0;
        for (int n = 0; n <= n_max; ++n) {
            tab.log_bar.push_back(lp + prof[static_cast<std::size_t>(n)]);
            lp += std::log(lf.at(k + n * L));
        }
        tab.method = "recursion-exact";
    } else {
        detail::QuadratureRecursion rec(lf, dom, d, L, qcfg);
        for (int n = 0; n <= n_max; ++n) tab.log_bar.push_back(rec.log_bar(k, n));
        tab.method = "recursion-quadrature";
    }
    return tab;
}

// ---------------------------------------------------------------- M_k bounds

struct BoundsConfig {
    int grid_points = 9;
    int combo_cap = 20000;
    std::uint64_t seed = 7;
};

/// M_k = max over the sampled box C_k of max_{|nu| <= k} |d_x^nu G| (total derivatives, placeholders swept over
/// the range of the matching derivative of i0 widened by r_{k+L+p}).
inline double constant_bounds(const PicardOperator& op, const Radii& R, int k, const BoundsConfig& cfg = {}) {
    const auto& pb = op.problem();
    double r = R.at(k + pb.L + pb.p);
    if (std::isinf(r)) throw error("constant_bounds needs a finite radius r_" + std::to_string(k + pb.L + pb.p));
    std::vector<expr::Expr> exprs;
    for (auto& f : pb.F)
        for (auto& nu : funcspace::multi_indices(pb.s(), k, k)) {
            expr::Expr e = f;
            for (std::size_t i = 0; i < nu.size(); ++i)
                for (int c = 0; c < nu[i]; ++c) e = expr::total_space_derivative(e, static_cast<int>(i));
            exprs.push_back(e);
        }
    auto keys = expr::placeholders(exprs);
    std::vector<std::vector<double>> zgrid;
    std::size_t per = keys.size() <= 8 ? 3 : 2;
    for (auto& key : keys) {
        auto [lo, hi] = funcspace::value_range(op.i0(), key.h, detail::beta_of(key, pb.s()));
        lo -= r;
        hi += r;
        zgrid.push_back(per == 3 ? std::vector<double>{lo, 0.5 * (lo + hi), hi} : std::vector<double>{lo, hi});
    }
    std::vector<std::vector<double>> combos;
    double total = std::pow(static_cast<double>(per), static_cast<double>(keys.size()));
    if (total <= cfg.combo_cap) {
        std::vector<std::size_t> idx(keys.size(), 0);
        for (;;) {
            std::vector<double> z;
            for (std::size_t i = 0; i < keys.size(); ++i) z.push_back(zgrid[i][idx[i]]);
            combos.push_back(z);
            std::size_t i = keys.size();
            while (i-- > 0) {
                if (++idx[i] < per) break;
                idx[i] = 0;
            }
            if (i == static_cast<std::size_t>(-1)) break;
        }
    } else {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_int_distribution<std::size_t> pick(0, per - 1);
        for (int c = 0; c < cfg.combo_cap; ++c) {
            std::vector<double> z;
            for (std::size_t i = 0; i < keys.size(); ++i) z.push_back(zgrid[i][pick(rng)]);
            combos.push_back(z);
        }
    }
    std::vector<expr::Expr> slotted;
    for (auto& e : exprs) slotted.push_back(expr::with_slots(e, keys));
    std::vector<int> g(1 + pb.s(), cfg.grid_points);
    auto pts = detail::grid_points(pb.dom, g);
    std::vector<std::vector<double>> txs;
    detail::for_grid(pts, [&](std::size_t, const std::vector<double>& tx) { txs.push_back(tx); });
    std::vector<double> best(txs.size(), 0.0);
    parallel_for(txs.size(), [&](std::size_t i) {
        double mx = 0.0;
        for (auto& z : combos)
            for (auto& e : slotted) mx = std::max(mx, std::abs(expr::eval_slots<double>(*e, txs[i].data(), z.data())));
        best[i] = mx;
    });
    return *std::max_element(best.begin(), best.end());
}

struct BallInvariance {
    std::vector<bool> pass;
    std::vector<double> ratio;
    double admissible_tbar = kInf;
    int witness_k = -1;
    bool trend_to_zero = false;
    bool all_pass = true;
};

/// Checks max_j M_k Tbar^j / j! <= r_k for k = 0..k_max; admissible Tbar = min_k r_k / M_k.
inline BallInvariance check_ball_invariance(const Domain& dom, int d, const Radii& R,
                                            const std::function<double(int)>& M, int k_max) {
    BallInvariance bi;
    double tbar = dom.tbar();
    for (int k = 0; k <= k_max; ++k) {
        double r = R.at(k), mk = M(k);
        if (!(mk >= 0.0) || std::isinf(mk)) throw error("M_k must be finite and non-negative");
        double mbar = 0.0;
        for (int j = 1; j <= d; ++j) mbar = std::max(mbar, mk * std::pow(tbar, j) / factorial(j));
        bool ok = std::isinf(r) || mbar <= r * (1.0 + 1e-12);
        double ratio = (std::isinf(r) || mk == 0.0) ? kInf : r / mk;
        bi.pass.push_back(ok);
        bi.ratio.push_back(ratio);
        bi.all_pass = bi.all_pass && ok;
        if (ratio < bi.admissible_tbar) {
            bi.admissible_tbar = ratio;
            bi.witness_k = k;
        }
    }
    if (k_max >= 2 && std::isfinite(bi.ratio.front())) {
        bool decreasing = true;
        for (std::size_t i = 1; i < bi.ratio.size(); ++i) decreasing = decreasing && bi.ratio[i] < bi.ratio[i - 1];
        bi.trend_to_zero = decreasing && bi.ratio.back() <= 0.5 * bi.ratio.front();
    }
    return bi;
}

// ---------------------------------------------------------------- certification

/// Values of ||P(i0) - i0||_K: numeric up to k_cap, log-domain model beyond (or everywhere when preferred).
struct IncrementSource {
    int k_cap = 12;
    std::function<double(int)> numeric;
    std::function<double(int)> log_model;
    std::string model_name;

    static IncrementSource from_difference(const SepFunc& diff, int k_cap) {
        IncrementSource src;
        src.k_cap = k_cap;
        auto cache = std::make_shared<std::map<int, double>>();
        src.numeric = [diff, cache](int K) {
            auto it = cache->find(K);
            if (it != cache->end()) return it->second;
            double v = funcspace::graded_norm(diff, K);
            (*cache)[K] = v;
            return v;
        };
        return src;
    }

    bool available(int K) const { return (numeric && K <= k_cap) || static_cast<bool>(log_model); }
    double log_value(int K) const {
        if (numeric && K <= k_cap) return safe_log(numeric(K));
        if (log_model) return log_model(K);
        throw error("missing growth model beyond k_cap = " + std::to_string(k_cap) + " (needed K = " +
                    std::to_string(K) + ")");
    }
};

struct CertifyOptions {
    std::vector<int> k_list{0};
    int n_max = 40;
    LambdaMode mode = LambdaMode::conservative;
    graded_core::WindowRule rule{};
    QuadratureConfig quadrature{};
    /// Without a growth model, shorten each row to the numerically available indices instead of failing.
    bool truncate_to_available = false;
};

struct PdeCertificate {
    graded_core::LodCertificate cert;
    std::string lambda_method;
    LambdaMode mode = LambdaMode::conservative;
    std::vector<std::vector<double>> log_lambda;
    std::vector<std::vector<double>> log_increment;
    bool factors_certified = false;
};

/// Terms Lambda_bar_{k,n} * ||P(i0) - i0||_{k+nL} with verdicts per k.
inline PdeCertificate certify_weissinger(const CauchyProblem& pb, const LipschitzFactors& lf, const IncrementSource& src,
                                         const CertifyOptions& opt) {
    PdeCertificate pc;
    pc.mode = opt.mode;
    pc.factors_certified = lf.certified;
    for (int k : opt.k_list) {
        int n_max = opt.n_max;
        if (!src.log_model && pb.L > 0 && k + n_max * pb.L > src.k_cap) {
            if (!opt.truncate_to_available)
                throw error("missing growth model beyond k_cap = " + std::to_string(src.k_cap));
            n_max = std::max(0, (src.k_cap - k) / pb.L);
            pc.cert.notes.push_back("k = " + std::to_string(k) + ": row shortened to n <= " + std::to_string(n_max) +
                                    " (numeric norms end at k_cap)");
        }
        auto tab = lambda_table(lf, pb.dom, pb.d, pb.L, k, n_max, opt.mode, opt.quadrature);
        pc.lambda_method = tab.method;
        std::vector<double> li, lt;
        for (int n = 0; n <= n_max; ++n) {
            double inc = src.log_value(k + n * pb.L);
            if (std::isnan(inc) || inc == kInf) throw error("non-finite increment norm");
            li.push_back(inc);
            double lam = tab.log_bar[static_cast<std::size_t>(n)];
            lt.push_back(lam <= std::log(kEpsFloor) * std::max(1, n) && n > 0 ? -kInf : lam + inc);
        }
        pc.cert.rows.push_back(graded_core::row_from_log_terms(k, lt, opt.rule));
        pc.log_lambda.push_back(tab.log_bar);
        pc.log_increment.push_back(li);
    }
    pc.cert.overall = graded_core::combine(pc.cert.rows);
    return pc;
}

// ---------------------------------------------------------------- solve

struct SolveConfig {
    Radii R = Radii::infinite();
    std::vector<int> k_check{0};
    double tol = 1e-12;
    int n_max = 40;
    bool certify = true;
    bool certify_first = false;
    CertifyOptions cert{};
    int k_cap = 12;
    std::function<double(int)> log_growth_model;
    std::optional<LipschitzFactors> factors;
    double residual_tol = 1e-7;
    bool keep_iterates = true;
    Discretization disc{};
};

struct SolveReport {
    Verdict status = Verdict::inconclusive;
    int steps = 0;
    SepFunc i0;
    SepFunc solution;
    std::vector<SepFunc> iterates;
    std::vector<int> k_check;
    std::vector<std::vector<double>> increments;
    std::optional<PdeCertificate> certificate;
    std::string lipschitz_method;
    /// a_posteriori[i][n] bounds ||y - P^n(i0)||_{k_check[i]} (empty when no converged certificate row).
    std::vector<std::vector<double>> a_posteriori;
    std::vector<bool> a_posteriori_estimate;
    Residual residual;
    std::vector<funcspace::BallReport> ball_log;
    double truncation = 0.0;
};

class certificate_rejected : public error {
public:
    explicit certificate_rejected(PdeCertificate c)
        : error("Weissinger certificate diverges; iteration not started"), cert_(std::move(c)) {}
    const PdeCertificate& certificate() const { return cert_; }

private:
    PdeCertificate cert_;
};

struct FuncSpace {
    using element = SepFunc;
    double seminorm(const SepFunc& f, int k) const { return funcspace::graded_norm(f, k); }
    SepFunc difference(const SepFunc& a, const SepFunc& b) const { return a - b; }
};

inline std::optional<LipschitzFactors> default_factors(const PicardOperator& op, const Radii& R) {
    if (linear_coefficients(op.problem())) return estimate_lipschitz_linear(op.problem());
    bool finite = true;
    for (int K = op.problem().L; K <= 4 + op.problem().L; ++K) finite = finite && !R.is_infinite(K);
    if (finite) {
        SamplingConfig sc;
        sc.pairs = 16;
        return estimate_lipschitz_sampled(op, R, sc);
    }
    return std::nullopt;
}

/// Certificate for a prepared operator; P(i0) - i0 is computed once.
inline PdeCertificate certify(const PicardOperator& op, const LipschitzFactors& lf, int k_cap,
                              const std::function<double(int)>& log_model, CertifyOptions opt) {
    IncrementSource src = IncrementSource::from_difference(op.P(op.i0()) - op.i0(), k_cap);
    src.log_model = log_model;
    return certify_weissinger(op.problem(), lf, src, opt);
}

inline SolveReport solve(const CauchyProblem& pb, const SolveConfig& cfg) {
    PicardOperator op(pb, cfg.disc);
    SolveReport rep;
    rep.i0 = op.i0();
    rep.k_check = cfg.k_check;
    std::optional<LipschitzFactors> lf = cfg.factors ? cfg.factors : std::optional<LipschitzFactors>{};
    if (cfg.certify || cfg.certify_first) {
        if (!lf) lf = default_factors(op, cfg.R);
        if (lf) {
            CertifyOptions opt = cfg.cert;
            opt.k_list = cfg.k_check;
            opt.truncate_to_available = true;
            rep.certificate = certify(op, *lf, cfg.k_cap, cfg.log_growth_model, opt);
            rep.lipschitz_method = lf->method;
            if (cfg.certify_first && rep.certificate->cert.overall == Verdict::diverging)
                throw certificate_rejected(*rep.certificate);
        } else if (cfg.certify_first) {
            throw error("certify-first needs Lipschitz factors (linear right-hand side or finite radii)");
        }
    }
    int k_ball = *std::max_element(cfg.k_check.begin(), cfg.k_check.end());
    graded_core::Membership<SepFunc> in_ball = [&](const SepFunc& y, int n) -> std::string {
        auto br = funcspace::ball_check(y, op.i0(), cfg.R, k_ball);
        rep.ball_log.push_back(br);
        if (br.all_inside) return {};
        return "k = " + std::to_string(br.first_violation) + " (distance " +
               std::to_string(br.distance[static_cast<std::size_t>(br.first_violation)]) + " > radius " +
               std::to_string(br.radius[static_cast<std::size_t>(br.first_violation)]) + ") at n = " + std::to_string(n);
    };
    graded_core::StopRule stop;
    stop.k_check = cfg.k_check;
    stop.tol = cfg.tol;
    stop.n_max = cfg.n_max;
    stop.keep_iterates = true;
    auto it = graded_core::iterate_to_fixed_point(FuncSpace{}, [&](const SepFunc& y) {
        SepFunc next = op.P(y);
        rep.truncation = std::max(rep.truncation, op.last_truncation());
        return next;
    }, op.i0(), stop, in_ball);
    rep.status = it.status;
    rep.steps = it.steps;
    rep.solution = it.candidate;
    rep.increments = it.increments;
    if (cfg.keep_iterates) rep.iterates = it.iterates;
    if (rep.certificate) {
        for (auto& row : rep.certificate->cert.rows) {
            std::vector<double> b;
            bool est = false;
            if (row.verdict == Verdict::converged)
                for (int n = 0; n <= it.steps; ++n) {
                    auto ap = graded_core::a_posteriori_bound(row, n);
                    b.push_back(ap.total);
                    est = est || ap.is_estimate;
                }
            rep.a_posteriori.push_back(b);
            rep.a_posteriori_estimate.push_back(est);
        }
    }
    if (rep.status == Verdict::converged) {
        rep.residual = residual(pb, rep.solution);
        if (rep.residual.pde > cfg.residual_tol)
            throw error("PDE residual " + std::to_string(rep.residual.pde) +
                        " exceeds tolerance after convergence; representation degree is insufficient");
    }
    return rep;
}

}  // namespace picard_lod::picard_pde
