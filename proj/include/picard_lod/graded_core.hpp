#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

/// Fixed points of maps on graded Frechet spaces that contract with loss of derivatives.
namespace picard_lod::graded_core {

/// A graded space: monotone seminorms indexed by k and a difference of elements.
template <class S>
concept GradedSpace = requires(const S& s, const typename S::element& a, const typename S::element& b, int k) {
    { s.seminorm(a, k) } -> std::convertible_to<double>;
    { s.difference(a, b) } -> std::convertible_to<typename S::element>;
};

/// Scalars with |.| for every k; handy for toy problems.
struct ScalarSpace {
    using element = double;
    double seminorm(double a, int) const { return std::abs(a); }
    double difference(double a, double b) const { return a - b; }
};

/// Contraction constants alpha(k, n) with loss of derivatives L.
struct LodConstants {
    int L = 0;
    std::function<double(int, int)> alpha;

    /// alpha(k, n) = prod_{j<n} base(k + jL).
    static LodConstants products(std::function<double(int)> base, int L);
    /// alpha(k, n) = q^n.
    static LodConstants geometric(double q, int L = 0) {
        if (!(q >= 0.0) || !std::isfinite(q)) throw error("geometric ratio must be finite and non-negative");
        return {L, [q](int, int n) { return std::pow(q, n); }};
    }
};

/// prod_{j=0}^{n-1} base(k + jL); the empty product is 1.
inline double product_constants(const std::function<double(int)>& base, int L, int k, int n) {
    if (n < 0 || k < 0 || L < 0) throw error("product_constants: negative index");
    double r = 1.0;
    for (int j = 0; j < n; ++j) {
        double a = base(k + j * L);
        if (!(a >= 0.0) || !std::isfinite(a))
            throw error("product_constants: alpha_" + std::to_string(k + j * L) + " must be finite and non-negative");
        r *= a;
    }
    return r;
}

/// Table form; throws when the base sequence is too short for index k + (n-1)L.
inline double product_constants(const std::vector<double>& base, int L, int k, int n) {
    if (n > 0 && static_cast<std::size_t>(k + (n - 1) * L) >= base.size())
        throw error("product_constants: base sequence needs index " + std::to_string(k + (n - 1) * L));
    return product_constants([&](int i) { return base[static_cast<std::size_t>(i)]; }, L, k, n);
}

inline LodConstants LodConstants::products(std::function<double(int)> base, int L) {
    return {L, [base = std::move(base), L](int k, int n) { return product_constants(base, L, k, n); }};
}

/// Windowed test deciding a series verdict from its last terms.
struct WindowRule {
    int window = 10;
    double margin = 0.05;
    double rel_tol = 1e-14;
};

/// Terms, partial sums and verdict of sum_n alpha(k, n) ||P y0 - y0||_{k+nL} for one k.
struct SeriesRow {
    int k = 0;
    std::vector<double> terms;
    std::vector<double> log_terms;
    std::vector<double> partial_sums;
    Verdict verdict = Verdict::inconclusive;
    double ratio_limsup = kInf;
    std::string reason;
};

struct LodCertificate {
    std::vector<SeriesRow> rows;
    Verdict overall = Verdict::inconclusive;
    std::vector<std::string> notes;
};

/// Combines per-k verdicts: any diverging row makes the whole certificate diverge.
inline Verdict combine(const std::vector<SeriesRow>& rows) {
    if (rows.empty()) return Verdict::inconclusive;
    bool all = true;
    for (auto& r : rows) {
        if (r.verdict == Verdict::diverging) return Verdict::diverging;
        if (r.verdict != Verdict::converged) all = false;
    }
    return all ? Verdict::converged : Verdict::inconclusive;
}

/// Verdict from log terms (-inf for zero terms) and log of the partial sum.
inline Verdict window_verdict(const std::vector<double>& lt, double log_sum, const WindowRule& rule, double& ratio,
                              std::string& reason) {
    ratio = kInf;
    std::size_t w = static_cast<std::size_t>(rule.window);
    if (lt.size() < w) {
        reason = "fewer than " + std::to_string(w) + " terms available";
        return Verdict::inconclusive;
    }
    std::size_t start = lt.size() - w;
    bool all_zero = true, increasing = true;
    ratio = 0.0;
    for (std::size_t i = start; i < lt.size(); ++i) {
        if (lt[i] != -kInf) all_zero = false;
        if (i > start) {
            double a = lt[i - 1], b = lt[i];
            double r = b == -kInf ? 0.0 : (a == -kInf ? kInf : std::exp(b - a));
            ratio = std::max(ratio, r);
            if (!(b > a)) increasing = false;
        }
    }
    if (all_zero) {
        reason = "terms vanish over the final window";
        ratio = 0.0;
        return Verdict::converged;
    }
    double last = lt.back();
    if (ratio < 1.0 - rule.margin && last <= std::log(rule.rel_tol) + log_sum) {
        reason = "ratio limsup below 1 - margin and final term negligible";
        return Verdict::converged;
    }
    if (increasing) {
        reason = "terms strictly increasing over the final window";
        return Verdict::diverging;
    }
    reason = "no decision from the final window";
    return Verdict::inconclusive;
}

/// Builds a row from log terms; partial sums may overflow to +inf for diverging series.
inline SeriesRow row_from_log_terms(int k, const std::vector<double>& log_terms, const WindowRule& rule = {}) {
    SeriesRow row;
    row.k = k;
    row.log_terms = log_terms;
    double log_sum = -kInf, sum = 0.0;
    for (double l : log_terms) {
        if (std::isnan(l)) throw error("series term is not a number");
        double t = std::exp(l);
        row.terms.push_back(t);
        sum += t;
        log_sum = log_add(log_sum, l);
        row.partial_sums.push_back(sum);
    }
    row.verdict = window_verdict(row.log_terms, log_sum, rule, row.ratio_limsup, row.reason);
    return row;
}

/// Weissinger sum for index k. increment(K) returns ||P y0 - y0||_K.
inline SeriesRow weissinger_sum(const LodConstants& c, const std::function<double(int)>& increment, int k, int n_max,
                                const WindowRule& rule = {}) {
    std::vector<double> lt;
    for (int n = 0; n <= n_max; ++n) {
        double a = c.alpha(k, n);
        double inc = increment(k + n * c.L);
        double term = a * inc;
        if (!std::isfinite(term) || term < 0.0)
            throw error("weissinger_sum: non-finite or negative term at n = " + std::to_string(n));
        lt.push_back(safe_log(term));
    }
    return row_from_log_terms(k, lt, rule);
}

struct APosteriori {
    int n = 0;
    double partial_tail = 0.0;
    double extrapolated = 0.0;
    double total = 0.0;
    bool is_estimate = false;
};

/// Bound sum_{j >= n} alpha(k, j) ||P y0 - y0||_{k+jL} from a converged row: the stored tail plus a
/// geometric extrapolation of the remainder (labelled as estimate when nonzero).
inline APosteriori a_posteriori_bound(const SeriesRow& row, int n) {
    if (row.verdict != Verdict::converged) throw error("a_posteriori_bound requires a converged series");
    if (n < 0) throw error("a_posteriori_bound: negative n");
    APosteriori b;
    b.n = n;
    for (std::size_t j = static_cast<std::size_t>(n); j < row.terms.size(); ++j) b.partial_tail += row.terms[j];
    double r = row.ratio_limsup;
    double last = row.terms.empty() ? 0.0 : row.terms.back();
    if (last > 0.0 && r < 1.0) b.extrapolated = last * r / (1.0 - r);
    if (static_cast<std::size_t>(n) >= row.terms.size() && last > 0.0)
        b.extrapolated = last * std::pow(r, static_cast<double>(n - static_cast<int>(row.terms.size()) + 1)) / (1.0 - r);
    b.total = b.partial_tail + b.extrapolated;
    b.is_estimate = b.extrapolated > 0.0;
    return b;
}

inline APosteriori a_posteriori_bound(const LodConstants& c, const std::function<double(int)>& increment, int k, int n,
                                      int n_max, const WindowRule& rule = {}) {
    return a_posteriori_bound(weissinger_sum(c, increment, k, n_max, rule), n);
}

// ---------------------------------------------------------------- iteration

class membership_violation : public error {
public:
    membership_violation(int n, const std::string& what)
        : error("iterate " + std::to_string(n) + " left the admissible set: " + what), n_(n) {}
    int n() const { return n_; }

private:
    int n_;
};

struct StopRule {
    std::vector<int> k_check{0};
    double tol = 1e-12;
    int n_max = 100;
    bool keep_iterates = true;
};

template <class E>
struct IterationResult {
    std::vector<E> iterates;
    /// increments[n][i] = ||P^{n+1} y0 - P^n y0||_{k_check[i]}
    std::vector<std::vector<double>> increments;
    std::vector<int> k_check;
    Verdict status = Verdict::inconclusive;
    int steps = 0;
    E candidate{};
    std::string membership = "unchecked";
};

/// Membership predicate: returns an empty string when the iterate is admissible, otherwise a description.
template <class E>
using Membership = std::function<std::string(const E&, int)>;

/// Iterates y_{n+1} = P(y_n) until max_k ||y_{n+1} - y_n||_k <= tol or n_max steps.
template <GradedSpace S, class Map>
IterationResult<typename S::element> iterate_to_fixed_point(const S& space, Map&& P, const typename S::element& y0,
                                                            const StopRule& stop,
                                                            const Membership<typename S::element>& member = {}) {
    using E = typename S::element;
    if (stop.k_check.empty()) throw error("iterate_to_fixed_point: empty k_check");
    IterationResult<E> res;
    res.k_check = stop.k_check;
    std::vector<int> ks = stop.k_check;
    std::sort(ks.begin(), ks.end());
    auto check = [&](const E& y, int n) {
        for (std::size_t i = 1; i < ks.size(); ++i) {
            double lo = space.seminorm(y, ks[i - 1]), hi = space.seminorm(y, ks[i]);
            if (lo > hi * (1.0 + 1e-12) + 1e-300)
                throw error("seminorms are not monotone in k at iterate " + std::to_string(n));
        }
        if (!member) return;
        std::string why = member(y, n);
        if (!why.empty()) throw membership_violation(n, why);
    };
    check(y0, 0);
    E y = y0;
    if (stop.keep_iterates) res.iterates.push_back(y);
    for (int n = 0; n < stop.n_max; ++n) {
        E next = P(y);
        E diff = space.difference(next, y);
        std::vector<double> inc;
        double worst = 0.0;
        for (int k : stop.k_check) {
            double v = space.seminorm(diff, k);
            if (!std::isfinite(v)) throw error("non-finite increment at step " + std::to_string(n + 1));
            inc.push_back(v);
            worst = std::max(worst, v);
        }
        res.increments.push_back(inc);
        check(next, n + 1);
        y = std::move(next);
        if (stop.keep_iterates) res.iterates.push_back(y);
        res.steps = n + 1;
        if (worst <= stop.tol) {
            res.status = Verdict::converged;
            break;
        }
    }
    res.candidate = y;
    if (member) res.membership = "ok";
    return res;
}

/// Solves f(x) = y0 by iterating P(x) = x - f(x) + y0 from y0.
template <GradedSpace S, class F>
IterationResult<typename S::element> solve_equation(const S& space, F&& f, const typename S::element& y0,
                                                    const StopRule& stop,
                                                    const Membership<typename S::element>& member = {}) {
    using E = typename S::element;
    auto P = [&](const E& x) { return space.difference(x, space.difference(f(x), y0)); };
    return iterate_to_fixed_point(space, P, y0, stop, member);
}

// ---------------------------------------------------------------- local inversion

struct InverseData {
    std::vector<int> k_check{0};
    std::function<double(int)> alpha;
    std::function<double(int)> delta;
    std::function<double(int)> radius;
    int L = 0;
    int L_D = 0;
    std::function<double(int)> sigma;
    int L_S = 0;
};

template <class E>
struct InversionReport {
    std::vector<int> k;
    std::vector<double> rbar;
    std::vector<double> target_distance;
    std::vector<bool> ball_step;
    double left_inverse_residual = 0.0;
    bool iterates_in_ball = false;
    double lipschitz_ratio = kInf;
    IterationResult<E> iteration;
};

/// Solves f(x) = y near x0 by iterating P_y(x) = x - D[f(x) - y] inside the ball of radii r_k around x0.
/// Requires 0 <= alpha_k < 1, S o D = id on the probes and ||f(x0) - y||_{k+L_D} <= rbar_{k+L_D}.
template <GradedSpace Sp, class F, class DMap, class SMap>
InversionReport<typename Sp::element> invert_locally(const Sp& space, F&& f, DMap&& D, SMap&& Sinv,
                                                     const typename Sp::element& x0, const typename Sp::element& y,
                                                     const InverseData& data,
                                                     const std::vector<typename Sp::element>& probes,
                                                     const StopRule& stop) {
    using E = typename Sp::element;
    InversionReport<E> rep;
    for (auto& v : probes)
        for (int k : data.k_check) {
            double res = space.seminorm(space.difference(Sinv(D(v)), v), k);
            double scale = 1.0 + space.seminorm(v, k);
            rep.left_inverse_residual = std::max(rep.left_inverse_residual, res / scale);
        }
    if (rep.left_inverse_residual > 1e-10) throw error("invert_locally: S o D is not the identity on the probes");
    E fx0 = f(x0);
    for (int k : data.k_check) {
        double a = data.alpha(k);
        if (!(a >= 0.0 && a < 1.0)) throw error("invert_locally: alpha_" + std::to_string(k) + " must lie in [0, 1)");
        double dlt = data.delta(k + data.L_D);
        if (!(dlt > 0.0)) throw error("invert_locally: delta must be positive");
        double r = data.radius(k + data.L);
        double rbar = r * (1.0 - a) / dlt;
        double dist = space.seminorm(space.difference(fx0, y), k + data.L_D);
        rep.k.push_back(k);
        rep.rbar.push_back(rbar);
        rep.target_distance.push_back(dist);
        rep.ball_step.push_back(a * r + dlt * rbar <= data.radius(k) * (1.0 + 1e-12));
        if (dist > rbar * (1.0 + 1e-12))
            throw error("invert_locally: y lies outside the image ball for k = " + std::to_string(k));
    }
    auto P = [&](const E& x) { return space.difference(x, D(space.difference(f(x), y))); };
    Membership<E> in_ball = [&](const E& x, int) -> std::string {
        for (int k : data.k_check) {
            double d = space.seminorm(space.difference(x, x0), k);
            if (d > data.radius(k) * (1.0 + 1e-12)) return "distance " + std::to_string(d) + " at k = " + std::to_string(k);
        }
        return {};
    };
    rep.iteration = iterate_to_fixed_point(space, P, x0, stop, in_ball);
    rep.iterates_in_ball = true;
    if (data.sigma) {
        double worst = 0.0;
        const auto& it = rep.iteration.iterates;
        for (std::size_t i = 0; i < it.size(); ++i)
            for (std::size_t j = i + 1; j < it.size(); ++j)
                for (int k : data.k_check) {
                    E dx = space.difference(it[i], it[j]);
                    double lhs = space.seminorm(space.difference(f(it[i]), f(it[j])), k);
                    double rhs = data.sigma(k) * (data.alpha(k) * space.seminorm(dx, k + data.L_S + data.L) +
                                                  space.seminorm(dx, k + data.L_S));
                    if (rhs > 0.0) worst = std::max(worst, lhs / rhs);
                }
        rep.lipschitz_ratio = worst;
    }
    return rep;
}

// ---------------------------------------------------------------- converse diagnostic

struct WPrimeReport {
    std::vector<SeriesRow> rows;
    /// alpha[i][n] reconstructed LOD-0 constants for k_check[i]
    std::vector<std::vector<double>> alpha;
    std::vector<int> vanishing_from;
    Verdict verdict = Verdict::inconclusive;
};

/// Sums realised increments ||P^{n+1} y0 - P^n y0||_k and, when they are summable, reconstructs LOD-0 constants:
/// alpha_{k,n} = inc_n / inc_0, or 1 / (n^2 inc_0) once the increments vanish from some N on.
inline WPrimeReport w_prime_diagnostic(const std::vector<std::vector<double>>& increments, const std::vector<int>& k_check,
                                       const WindowRule& rule = {}) {
    WPrimeReport rep;
    for (std::size_t i = 0; i < k_check.size(); ++i) {
        std::vector<double> lt;
        for (auto& row : increments) {
            if (i >= row.size()) throw error("w_prime_diagnostic: ragged increment table");
            if (!std::isfinite(row[i]) || row[i] < 0.0) throw error("w_prime_diagnostic: invalid increment");
            lt.push_back(safe_log(row[i]));
        }
        SeriesRow r = row_from_log_terms(k_check[i], lt, rule);
        int N = -1;
        for (std::size_t n = increments.size(); n-- > 0;) {
            if (increments[n][i] != 0.0) break;
            N = static_cast<int>(n);
        }
        std::vector<double> alpha;
        if (r.verdict == Verdict::converged) {
            double inc0 = increments.empty() ? 0.0 : increments[0][i];
            for (std::size_t n = 0; n < increments.size(); ++n) {
                if (n == 0) alpha.push_back(1.0);
                else if (inc0 == 0.0) alpha.push_back(0.0);
                else if (N >= 0 && static_cast<int>(n) >= N) alpha.push_back(1.0 / (static_cast<double>(n * n) * inc0));
                else alpha.push_back(increments[n][i] / inc0);
            }
        }
        rep.rows.push_back(r);
        rep.alpha.push_back(alpha);
        rep.vanishing_from.push_back(N);
    }
    rep.verdict = combine(rep.rows);
    return rep;
}

}  // namespace picard_lod::graded_core
