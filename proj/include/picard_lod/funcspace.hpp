#pragma once

#include <json.hpp>

#include <array>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cheb.hpp"
#include "common.hpp"
#include "expr.hpp"

namespace picard_lod::funcspace {

struct Interval {
    double lo = -1.0;
    double hi = 1.0;

    double mid() const { return 0.5 * (lo + hi); }
    double half() const { return 0.5 * (hi - lo); }
    double to_ref(double v) const { return (v - mid()) / half(); }
    double from_ref(double r) const { return mid() + half() * r; }
};

/// T x S with T = [t0 - a, t0 + b] and S a box in R^s.
struct Domain {
    double t0 = 0.0;
    double a = 1.0;
    double b = 1.0;
    std::vector<Interval> S;

    std::size_t s() const { return S.size(); }
    Interval T() const { return {t0 - a, t0 + b}; }
    double tbar() const { return std::max(a, b); }
    Interval axis(std::size_t i) const { return i == 0 ? T() : S[i - 1]; }

    void validate() const {
        if (!(std::isfinite(t0) && std::isfinite(a) && std::isfinite(b)) || a < 0.0 || b < 0.0 || a + b <= 0.0)
            throw error("domain: a and b must be finite, non-negative and not both zero");
        for (auto& iv : S)
            if (!(std::isfinite(iv.lo) && std::isfinite(iv.hi)) || !(iv.lo < iv.hi))
                throw error("domain: every S interval needs finite lo < hi");
    }

    bool operator==(const Domain& o) const {
        if (t0 != o.t0 || a != o.a || b != o.b || S.size() != o.S.size()) return false;
        for (std::size_t i = 0; i < S.size(); ++i)
            if (S[i].lo != o.S[i].lo || S[i].hi != o.S[i].hi) return false;
        return true;
    }
};

/// Radii r_k of a graded ball: explicit list, constant, rule or +inf.
struct Radii {
    std::vector<double> values;
    std::function<double(int)> rule;

    static Radii infinite() { return {{}, [](int) { return kInf; }}; }
    static Radii constant(double r) { return {{}, [r](int) { return r; }}; }
    static Radii list(std::vector<double> v) { return {std::move(v), {}}; }
    static Radii from_rule(std::function<double(int)> f) { return {{}, std::move(f)}; }

    double at(int k) const {
        if (rule) return rule(k);
        if (k < 0 || static_cast<std::size_t>(k) >= values.size())
            throw error("radius r_" + std::to_string(k) + " not provided");
        return values[static_cast<std::size_t>(k)];
    }
    bool is_infinite(int k) const { return std::isinf(at(k)); }
};

/// Vector-valued function on T x S as a tensor Chebyshev series per component.
/// Axis 0 is t, axes 1..s are x1..xs; coefficients are row-major with the last axis fastest.
struct SepFunc {
    Domain dom;
    int m = 1;
    int p = 0;
    std::vector<int> deg;
    std::vector<std::vector<double>> coef;

    std::size_t dims() const { return deg.size(); }
    cheb::Shape shape() const {
        cheb::Shape sh;
        for (int d : deg) sh.push_back(static_cast<std::size_t>(d + 1));
        return sh;
    }

    static SepFunc zeros(const Domain& dom, int m, int p, std::vector<int> deg) {
        SepFunc f{dom, m, p, std::move(deg), {}};
        f.coef.assign(static_cast<std::size_t>(m), std::vector<double>(cheb::volume(f.shape()), 0.0));
        return f;
    }

    /// Value of component h at (t, x); points outside the domain extrapolate the polynomial.
    double eval(double t, const std::vector<double>& x, int h = 0) const {
        std::vector<double> data = coef[static_cast<std::size_t>(h)];
        cheb::Shape sh = shape();
        for (std::size_t ax = dims(); ax-- > 0;) {
            double r = dom.axis(ax).to_ref(ax == 0 ? t : x[ax - 1]);
            data = cheb::map_axis<double, double>(data, sh, ax, 1, [&](const double* in, double* out) {
                *out = cheb::clenshaw(in, sh[ax], 1, r);
            });
            sh[ax] = 1;
        }
        return data[0];
    }
};

inline void check_compatible(const SepFunc& f, const SepFunc& g) {
    if (!(f.dom == g.dom) || f.m != g.m || f.dims() != g.dims()) throw error("incompatible SepFunc operands");
}

/// Coefficient tensor padded (or truncated) to new degrees.
inline std::vector<double> resize_tensor(const std::vector<double>& c, const std::vector<int>& from,
                                         const std::vector<int>& to) {
    cheb::Shape sh;
    for (int d : from) sh.push_back(static_cast<std::size_t>(d + 1));
    std::vector<double> data = c;
    for (std::size_t ax = 0; ax < from.size(); ++ax) {
        std::size_t nl = static_cast<std::size_t>(to[ax] + 1);
        std::size_t ol = sh[ax];
        data = cheb::map_axis<double, double>(data, sh, ax, nl, [&](const double* in, double* out) {
            for (std::size_t i = 0; i < nl; ++i) out[i] = i < ol ? in[i] : 0.0;
        });
        sh[ax] = nl;
    }
    return data;
}

inline SepFunc with_degrees(const SepFunc& f, const std::vector<int>& deg) {
    SepFunc g = f;
    g.deg = deg;
    for (auto& c : g.coef) c = resize_tensor(c, f.deg, deg);
    return g;
}

/// a*f + b*g on the union of degrees.
inline SepFunc combine(double a, const SepFunc& f, double b, const SepFunc& g) {
    check_compatible(f, g);
    std::vector<int> deg(f.dims());
    for (std::size_t i = 0; i < deg.size(); ++i) deg[i] = std::max(f.deg[i], g.deg[i]);
    SepFunc F = with_degrees(f, deg), G = with_degrees(g, deg);
    for (std::size_t h = 0; h < F.coef.size(); ++h)
        for (std::size_t i = 0; i < F.coef[h].size(); ++i) F.coef[h][i] = a * F.coef[h][i] + b * G.coef[h][i];
    F.p = std::max(f.p, g.p);
    return F;
}

inline SepFunc operator+(const SepFunc& f, const SepFunc& g) { return combine(1.0, f, 1.0, g); }
inline SepFunc operator-(const SepFunc& f, const SepFunc& g) { return combine(1.0, f, -1.0, g); }
inline SepFunc operator*(double a, const SepFunc& f) {
    SepFunc g = f;
    for (auto& c : g.coef)
        for (auto& v : c) v *= a;
    return g;
}

// ---------------------------------------------------------------- calculus

/// partial_t^{beta_0} partial_x^{beta_1..s}; beta has 1 + s entries.
inline SepFunc partial_derivative(const SepFunc& f, const std::vector<int>& beta) {
    if (beta.size() != f.dims()) throw error("derivative multi-index has wrong length");
    SepFunc g = f;
    for (std::size_t ax = 0; ax < beta.size(); ++ax) {
        if (beta[ax] < 0) throw error("negative derivative order");
        for (int r = 0; r < beta[ax]; ++r) {
            cheb::Shape sh = g.shape();
            std::size_t len = sh[ax];
            std::size_t nl = len > 1 ? len - 1 : 1;
            double scale = 1.0 / f.dom.axis(ax).half();
            for (auto& c : g.coef)
                c = cheb::map_axis<double, double>(c, sh, ax, nl, [&](const double* in, double* out) {
                    auto d = cheb::derivative(std::vector<double>(in, in + len), scale);
                    std::copy(d.begin(), d.end(), out);
                });
            g.deg[ax] = static_cast<int>(nl) - 1;
        }
    }
    return g;
}

/// j-fold integral in t from t0: I_j f(t) = int_{t0}^{t} ... int_{t0}^{s_2} f.
inline SepFunc iterated_time_integral(const SepFunc& f, int j) {
    if (j < 0) throw error("negative integral order");
    SepFunc g = f;
    Interval T = f.dom.T();
    double tau0 = T.to_ref(f.dom.t0);
    for (int r = 0; r < j; ++r) {
        cheb::Shape sh = g.shape();
        std::size_t len = sh[0];
        for (auto& c : g.coef)
            c = cheb::map_axis<double, double>(c, sh, 0, len + 1, [&](const double* in, double* out) {
                auto a = cheb::antiderivative(std::vector<double>(in, in + len), T.half(), tau0);
                std::copy(a.begin(), a.end(), out);
            });
        g.deg[0] += 1;
    }
    return g;
}

/// f restricted to t = t_value, kept as a t-constant function on the same domain.
inline SepFunc restrict_time(const SepFunc& f, double t_value) {
    SepFunc g = f;
    cheb::Shape sh = f.shape();
    double r = f.dom.T().to_ref(t_value);
    for (auto& c : g.coef)
        c = cheb::map_axis<double, double>(c, sh, 0, 1, [&](const double* in, double* out) {
            *out = cheb::clenshaw(in, sh[0], 1, r);
        });
    g.deg[0] = 0;
    return g;
}

/// Product a(t) * f(t, x) for a time series a on T (applied to every component).
inline SepFunc multiply_time(const std::vector<double>& a, const SepFunc& f) {
    SepFunc g = f;
    cheb::Shape sh = f.shape();
    std::size_t len = sh[0], nl = len + a.size() - 1;
    for (auto& c : g.coef)
        c = cheb::map_axis<double, double>(c, sh, 0, nl, [&](const double* in, double* out) {
            auto prod = cheb::multiply(a, std::vector<double>(in, in + len));
            std::copy(prod.begin(), prod.end(), out);
        });
    g.deg[0] = static_cast<int>(nl) - 1;
    return g;
}

/// Outer product a(t) * v(x): v has t-degree 0.
inline SepFunc outer_time(const std::vector<double>& a, const SepFunc& v) {
    if (v.deg[0] != 0) throw error("outer_time expects a t-independent factor");
    return multiply_time(a, v);
}

/// Series on T of (t - t0)^j / j!.
inline std::vector<double> time_monomial(const Domain& dom, int j) {
    Interval T = dom.T();
    auto c = cheb::linear_power(T.mid() - dom.t0, T.half(), j);
    double f = factorial(j);
    for (auto& v : c) v /= f;
    return c;
}

// ---------------------------------------------------------------- sampling and interpolation

/// Samples fn at the Gauss tensor grid with npts[ax] points per axis (quad precision), returning quad coefficients.
template <class Fn>
std::vector<std::vector<wide>> sample_coefficients(const Domain& dom, int m, const std::vector<int>& npts, Fn&& fn) {
    std::size_t dims = npts.size();
    cheb::Shape sh(npts.begin(), npts.end());
    std::size_t vol = cheb::volume(sh);
    std::vector<std::vector<wide>> coords(dims);
    for (std::size_t ax = 0; ax < dims; ++ax) {
        const auto& tab = cheb::cached<cheb::GaussTable<wide>>(npts[ax]);
        Interval iv = dom.axis(ax);
        for (int j = 0; j < npts[ax]; ++j) coords[ax].push_back(wide(iv.mid()) + wide(iv.half()) * tab.nodes[j]);
    }
    std::vector<std::vector<wide>> vals(static_cast<std::size_t>(m), std::vector<wide>(vol));
    std::vector<wide> tx(dims), out(static_cast<std::size_t>(m));
    std::vector<std::size_t> idx(dims, 0);
    for (std::size_t flat = 0; flat < vol; ++flat) {
        for (std::size_t ax = 0; ax < dims; ++ax) tx[ax] = coords[ax][idx[ax]];
        fn(flat, tx.data(), out.data());
        for (int h = 0; h < m; ++h) vals[h][flat] = out[h];
        for (std::size_t ax = dims; ax-- > 0;) {
            if (++idx[ax] < sh[ax]) break;
            idx[ax] = 0;
        }
    }
    for (auto& v : vals)
        for (std::size_t ax = 0; ax < dims; ++ax)
            v = cheb::map_axis<wide, wide>(v, sh, ax, sh[ax], [&](const wide* in, wide* o) {
                cheb::coeffs_from_gauss(in, npts[ax], o);
            });
    return vals;
}

/// Values of a quad coefficient tensor at the Gauss grid of npts per axis.
inline std::vector<wide> values_on_gauss(const std::vector<double>& c, const std::vector<int>& deg,
                                         const std::vector<int>& npts) {
    cheb::Shape sh;
    for (int d : deg) sh.push_back(static_cast<std::size_t>(d + 1));
    std::vector<wide> data(c.begin(), c.end());
    for (std::size_t ax = 0; ax < deg.size(); ++ax) {
        int nc = static_cast<int>(sh[ax]);
        data = cheb::map_axis<wide, wide>(data, sh, ax, static_cast<std::size_t>(npts[ax]),
                                          [&](const wide* in, wide* o) { cheb::values_at_gauss(in, nc, npts[ax], o); });
        sh[ax] = static_cast<std::size_t>(npts[ax]);
    }
    return data;
}

inline std::vector<double> round_to_double(const std::vector<wide>& c) {
    return std::vector<double>(c.begin(), c.end());
}

/// Largest |c| over the slab with index i along axis ax, for every i.
inline std::vector<double> slab_max(const std::vector<std::vector<wide>>& comps, const cheb::Shape& sh, std::size_t ax) {
    std::vector<double> out(sh[ax], 0.0);
    std::size_t inner = 1;
    for (std::size_t i = ax + 1; i < sh.size(); ++i) inner *= sh[i];
    for (auto& c : comps)
        for (std::size_t flat = 0; flat < c.size(); ++flat) {
            std::size_t i = (flat / inner) % sh[ax];
            out[i] = std::max(out[i], static_cast<double>(wmath::abs(c[flat])));
        }
    return out;
}

struct AdaptiveConfig {
    int deg_cap = 128;
    int min_start = 8;
    double tail_tol = 1e-24;
    double chop_tol = 1e-28;
};

struct Interpolated {
    SepFunc f;
    double max_error = 0.0;
    double truncation_residual = 0.0;
};

/// Drops trailing coefficient slabs below chop_tol * scale along every axis.
inline std::vector<int> chop_degrees(const std::vector<std::vector<wide>>& comps, const cheb::Shape& sh, double rel) {
    double scale = 0.0;
    for (auto& c : comps)
        for (auto& v : c) scale = std::max(scale, static_cast<double>(wmath::abs(v)));
    std::vector<int> deg;
    for (std::size_t ax = 0; ax < sh.size(); ++ax) {
        auto sm = slab_max(comps, sh, ax);
        int d = static_cast<int>(sh[ax]) - 1;
        while (d > 0 && sm[static_cast<std::size_t>(d)] <= rel * scale + kEpsFloor) --d;
        deg.push_back(d);
    }
    return deg;
}

/// Adaptive quad-precision interpolation on Gauss grids. make_sampler(npts) returns a callable
/// (flat, t_and_x, out) filling the m component values at one grid point; flat is the row-major grid index.
/// start gives initial degrees; axes whose coefficient tail is not negligible are refined by doubling.
template <class Factory>
Interpolated interpolate_on_grids(const Domain& dom, int m, int p, std::vector<int> start, Factory&& make_sampler,
                                  const AdaptiveConfig& cfg = {}) {
    std::size_t dims = start.size();
    for (auto& d : start) d = std::min(cfg.deg_cap, std::max(d, cfg.min_start));
    std::vector<std::vector<wide>> coeffs;
    double residual = 0.0;
    for (;;) {
        std::vector<int> npts;
        for (int d : start) npts.push_back(d + 1);
        auto sampler = make_sampler(npts);
        coeffs = sample_coefficients(dom, m, npts, sampler);
        cheb::Shape sh(npts.begin(), npts.end());
        double scale = 0.0;
        for (auto& c : coeffs)
            for (auto& v : c) {
                if (!wmath::isfinite(v)) throw domain_error("non-finite sample during interpolation");
                scale = std::max(scale, static_cast<double>(wmath::abs(v)));
            }
        bool refined = false;
        residual = 0.0;
        for (std::size_t ax = 0; ax < dims; ++ax) {
            auto sm = slab_max(coeffs, sh, ax);
            std::size_t n = sm.size();
            std::size_t tail = std::max<std::size_t>(3, n / 10);
            if (n <= tail) tail = n > 1 ? n - 1 : 0;
            double tmax = 0.0;
            for (std::size_t i = n - tail; i < n; ++i) tmax = std::max(tmax, sm[i]);
            if (tmax > cfg.tail_tol * scale + kEpsFloor) {
                if (start[ax] < cfg.deg_cap) {
                    start[ax] = std::min(cfg.deg_cap, 2 * start[ax]);
                    refined = true;
                } else {
                    residual = std::max(residual, tmax / std::max(scale, kEpsFloor));
                }
            }
        }
        if (!refined) {
            auto deg = chop_degrees(coeffs, sh, cfg.chop_tol);
            SepFunc f{dom, m, p, deg, {}};
            std::vector<int> full;
            for (auto n : sh) full.push_back(static_cast<int>(n) - 1);
            for (auto& c : coeffs) f.coef.push_back(resize_tensor(round_to_double(c), full, deg));
            return {f, 0.0, residual};
        }
    }
}

/// Adaptive interpolation of a pointwise function fn(t_and_x, out).
template <class Fn>
Interpolated interpolate_adaptive(const Domain& dom, int m, int p, std::vector<int> start, Fn&& fn,
                                  const AdaptiveConfig& cfg = {}) {
    return interpolate_on_grids(
        dom, m, p, std::move(start),
        [&](const std::vector<int>&) { return [&](std::size_t, const wide* tx, wide* out) { fn(tx, out); }; }, cfg);
}

/// Values of component h (after derivative beta) on the Lobatto grid with g[ax] points per axis.
inline std::vector<double> lobatto_values(const SepFunc& f, int h, const std::vector<int>& g) {
    cheb::Shape sh = f.shape();
    std::vector<double> data = f.coef[static_cast<std::size_t>(h)];
    for (std::size_t ax = 0; ax < f.dims(); ++ax) {
        int nc = static_cast<int>(sh[ax]);
        data = cheb::map_axis<double, double>(data, sh, ax, static_cast<std::size_t>(g[ax]),
                                              [&](const double* in, double* o) { cheb::values_at_lobatto(in, nc, g[ax], o); });
        sh[ax] = static_cast<std::size_t>(g[ax]);
    }
    return data;
}

/// Lobatto points of axis ax mapped to the domain.
inline std::vector<double> lobatto_points(const Domain& dom, std::size_t ax, int g) {
    const auto& tab = cheb::cached<cheb::LobattoTable<double>>(g);
    std::vector<double> pts;
    for (int i = 0; i < g; ++i) pts.push_back(dom.axis(ax).from_ref(tab.nodes[static_cast<std::size_t>(i)]));
    return pts;
}

/// Default dense grid: 4x degree, at least min_pts, one point for constant axes.
inline std::vector<int> norm_grid(const std::vector<int>& deg, int factor = 4, int min_pts = 64) {
    std::vector<int> g;
    for (int d : deg) g.push_back(d == 0 ? 1 : std::max(min_pts, factor * (d + 1)));
    return g;
}

/// Interpolates m expressions over (t, x) at fixed degrees; max_error is measured on a 3x finer grid.
inline Interpolated interpolate(const std::vector<expr::Expr>& e, const Domain& dom, int p, const std::vector<int>& degrees) {
    dom.validate();
    if (degrees.size() != 1 + dom.s()) throw error("degrees must have 1 + s entries");
    for (int d : degrees)
        if (d < 0) throw error("negative degree");
    for (auto& ex : e) {
        auto u = expr::usage(ex);
        if (!u.placeholders.empty() || !u.named.empty()) throw error("interpolate: expression has unbound variables");
        for (int i : u.space)
            if (static_cast<std::size_t>(i) >= dom.s()) throw error("interpolate: expression uses x beyond s");
    }
    int m = static_cast<int>(e.size());
    std::vector<int> npts;
    for (int d : degrees) npts.push_back(d + 1);
    auto coeffs = sample_coefficients(dom, m, npts, [&](std::size_t, const wide* tx, wide* out) {
        for (int h = 0; h < m; ++h) out[h] = expr::eval_slots<wide>(*e[h], tx, nullptr);
    });
    SepFunc f{dom, m, p, degrees, {}};
    for (auto& c : coeffs) {
        for (auto& v : c)
            if (!wmath::isfinite(v)) throw domain_error("interpolate: non-finite sample");
        f.coef.push_back(round_to_double(c));
    }
    std::vector<int> g;
    for (int d : degrees) g.push_back(std::max(2, 3 * (d + 1)));
    double err = 0.0;
    std::vector<std::vector<double>> pts;
    for (std::size_t ax = 0; ax < f.dims(); ++ax) pts.push_back(lobatto_points(dom, ax, g[ax]));
    for (int h = 0; h < m; ++h) {
        auto vals = lobatto_values(f, h, g);
        std::vector<std::size_t> idx(f.dims(), 0);
        std::vector<double> tx(f.dims());
        for (std::size_t flat = 0; flat < vals.size(); ++flat) {
            for (std::size_t ax = 0; ax < f.dims(); ++ax) tx[ax] = pts[ax][idx[ax]];
            double exact = expr::eval_slots<double>(*e[h], tx.data(), nullptr);
            err = std::max(err, std::abs(exact - vals[flat]));
            for (std::size_t ax = f.dims(); ax-- > 0;) {
                if (++idx[ax] < static_cast<std::size_t>(g[ax])) break;
                idx[ax] = 0;
            }
        }
    }
    return {f, err, 0.0};
}

inline Interpolated interpolate(const expr::Expr& e, const Domain& dom, int p, const std::vector<int>& degrees) {
    return interpolate(std::vector<expr::Expr>{e}, dom, p, degrees);
}

// ---------------------------------------------------------------- norms

/// All multi-indices (beta_t, beta_x) with |beta| <= k and beta_t <= tmax.
inline std::vector<std::vector<int>> multi_indices(std::size_t dims, int k, int tmax) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(dims, 0);
    std::function<void(std::size_t, int)> rec = [&](std::size_t ax, int left) {
        if (ax == dims) {
            out.push_back(cur);
            return;
        }
        int hi = ax == 0 ? std::min(left, tmax) : left;
        for (int v = 0; v <= hi; ++v) {
            cur[ax] = v;
            rec(ax + 1, left - v);
        }
        cur[ax] = 0;
    };
    rec(0, k);
    return out;
}

/// Largest |d^beta f^h| on the dense grid over all components and the given multi-indices.
inline double sup_over(const SepFunc& f, const std::vector<std::vector<int>>& betas) {
    auto g = norm_grid(f.deg);
    std::vector<double> best(betas.size(), 0.0);
    parallel_for(betas.size(), [&](std::size_t i) {
        SepFunc d = partial_derivative(f, betas[i]);
        double mx = 0.0;
        for (int h = 0; h < f.m; ++h)
            for (double v : lobatto_values(d, h, g)) {
                if (!std::isfinite(v)) throw domain_error("non-finite value in norm evaluation");
                mx = std::max(mx, std::abs(v));
            }
        best[i] = mx;
    });
    return betas.empty() ? 0.0 : *std::max_element(best.begin(), best.end());
}

/// ||f||_k = max_h max_{|beta| <= k, beta_1 <= p} sup |d^beta f^h| on the dense grid.
inline double graded_norm(const SepFunc& f, int k) {
    if (k < 0) throw error("negative norm index");
    return sup_over(f, multi_indices(f.dims(), k, f.p));
}

/// Joint norm: every multi-index with |beta| <= k, time derivatives unrestricted.
inline double joint_norm(const SepFunc& f, int k) {
    if (k < 0) throw error("negative norm index");
    return sup_over(f, multi_indices(f.dims(), k, k));
}

/// Range [min, max] of d^beta f^h over the dense grid.
inline std::pair<double, double> value_range(const SepFunc& f, int h, const std::vector<int>& beta) {
    auto vals = lobatto_values(partial_derivative(f, beta), h, norm_grid(f.deg));
    auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    return {*lo, *hi};
}

struct BallReport {
    std::vector<double> distance;
    std::vector<double> radius;
    std::vector<bool> inside;
    bool all_inside = true;
    int first_violation = -1;
};

/// Checks ||f - c||_k <= r_k for k = 0..k_max.
inline BallReport ball_check(const SepFunc& f, const SepFunc& center, const Radii& R, int k_max) {
    BallReport rep;
    SepFunc diff = f - center;
    for (int k = 0; k <= k_max; ++k) {
        double r = R.at(k);
        double dist = graded_norm(diff, k);
        bool ok = dist <= r * (1.0 + 1e-12) + 1e-15;
        rep.distance.push_back(dist);
        rep.radius.push_back(r);
        rep.inside.push_back(ok);
        if (!ok && rep.all_inside) {
            rep.all_inside = false;
            rep.first_violation = k;
        }
    }
    return rep;
}

/// Clips degrees to cap; returns the sum of dropped |coefficients| as truncation residual.
inline double cap_degrees(SepFunc& f, int cap) {
    std::vector<int> deg = f.deg;
    bool changed = false;
    for (auto& d : deg)
        if (d > cap) {
            d = cap;
            changed = true;
        }
    if (!changed) return 0.0;
    SepFunc g = with_degrees(f, deg);
    double kept = 0.0, all = 0.0;
    for (auto& c : g.coef)
        for (double v : c) kept += std::abs(v);
    for (auto& c : f.coef)
        for (double v : c) all += std::abs(v);
    f = g;
    return std::max(0.0, all - kept);
}

// ---------------------------------------------------------------- serialization

inline nlohmann::json domain_to_json(const Domain& d) {
    nlohmann::json S = nlohmann::json::array();
    for (auto& iv : d.S) S.push_back({iv.lo, iv.hi});
    return {{"t0", d.t0}, {"a", d.a}, {"b", d.b}, {"S", S}};
}

inline Domain domain_from_json(const nlohmann::json& j) {
    Domain d;
    d.t0 = j.at("t0").get<double>();
    d.a = j.at("a").get<double>();
    d.b = j.at("b").get<double>();
    for (auto& iv : j.at("S")) {
        if (!iv.is_array() || iv.size() != 2) throw error("S entries must be [lo, hi] pairs");
        d.S.push_back({iv[0].get<double>(), iv[1].get<double>()});
    }
    d.validate();
    return d;
}

inline nlohmann::json to_json(const SepFunc& f) {
    return {{"format", "sepfunc"}, {"version", 1},     {"domain", domain_to_json(f.dom)},
            {"m", f.m},            {"p", f.p},         {"degrees", f.deg},
            {"coefficients", f.coef}};
}

inline SepFunc from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "sepfunc") throw error("not a serialized SepFunc");
    SepFunc f;
    f.dom = domain_from_json(j.at("domain"));
    f.m = j.at("m").get<int>();
    f.p = j.at("p").get<int>();
    f.deg = j.at("degrees").get<std::vector<int>>();
    f.coef = j.at("coefficients").get<std::vector<std::vector<double>>>();
    if (f.deg.size() != 1 + f.dom.s() || static_cast<int>(f.coef.size()) != f.m) throw error("malformed SepFunc");
    for (auto& c : f.coef)
        if (c.size() != cheb::volume(f.shape())) throw error("malformed SepFunc coefficient tensor");
    return f;
}

inline std::string serialize(const SepFunc& f) { return to_json(f).dump(1); }
inline SepFunc deserialize(const std::string& text) { return from_json(nlohmann::json::parse(text)); }

}  // namespace picard_lod::funcspace
