#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <vector>

#include "common.hpp"

/// Chebyshev series on [-1, 1] and tensor helpers. Coefficients use f = sum_k c_k T_k.
namespace picard_lod::cheb {

template <class T>
T clenshaw(const T* c, std::size_t n, std::size_t stride, T x) {
    if (n == 0) return T(0);
    T b1 = 0, b2 = 0;
    for (std::size_t k = n; k-- > 1;) {
        T b0 = c[k * stride] + T(2) * x * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    return c[0] + x * b1 - b2;
}

inline double eval(const std::vector<double>& c, double x) { return clenshaw(c.data(), c.size(), 1, x); }

/// d/dtau of the series, multiplied by scale.
inline std::vector<double> derivative(const std::vector<double>& c, double scale = 1.0) {
    std::size_t n = c.size();
    if (n <= 1) return {0.0};
    std::vector<double> d(n + 1, 0.0);
    for (std::size_t k = n - 1; k >= 1; --k) d[k - 1] = d[k + 1] + 2.0 * static_cast<double>(k) * c[k];
    d.resize(n - 1);
    d[0] *= 0.5;
    for (auto& v : d) v *= scale;
    return d;
}

/// Antiderivative times scale, normalised to vanish at tau0.
inline std::vector<double> antiderivative(const std::vector<double>& c, double scale, double tau0) {
    std::size_t n = c.size();
    std::vector<double> b(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double ck = c[k] * scale;
        if (k == 0) {
            b[1] += ck;
        } else if (k == 1) {
            b[2] += ck / 4.0;
        } else {
            b[k + 1] += ck / (2.0 * static_cast<double>(k + 1));
            b[k - 1] -= ck / (2.0 * static_cast<double>(k - 1));
        }
    }
    b[0] -= eval(b, tau0);
    return b;
}

/// Exact product of two series.
inline std::vector<double> multiply(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) return {0.0};
    std::vector<double> c(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) continue;
        for (std::size_t j = 0; j < b.size(); ++j) {
            double v = 0.5 * a[i] * b[j];
            c[i + j] += v;
            c[i > j ? i - j : j - i] += v;
        }
    }
    return c;
}

inline std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b, double sb = 1.0) {
    std::vector<double> c(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) c[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i) c[i] += sb * b[i];
    return c;
}

/// Series of (c0 + c1 tau)^j.
inline std::vector<double> linear_power(double c0, double c1, int j) {
    std::vector<double> r{1.0};
    for (int i = 0; i < j; ++i) r = multiply(r, {c0, c1});
    return r;
}

// ---------------------------------------------------------------- transforms

/// Gauss-Chebyshev nodes x_j = cos(pi (2j+1) / (2n)), j < n, with cos(k theta_j) served from a 4n table.
template <class T>
struct GaussTable {
    int n = 0;
    std::vector<T> cosines;
    std::vector<T> nodes;

    explicit GaussTable(int count) : n(count), cosines(static_cast<std::size_t>(4 * count)), nodes(count) {
        for (int m = 0; m < 4 * n; ++m) {
            if constexpr (std::is_same_v<T, wide>) cosines[m] = ::cosq(M_PIq * m / (2 * n));
            else cosines[m] = std::cos(3.14159265358979323846 * m / (2.0 * n));
        }
        for (int j = 0; j < n; ++j) nodes[j] = cosines[(2 * j + 1) % (4 * n)];
    }
    T cos_k(int k, int j) const { return cosines[static_cast<std::size_t>((k * (2 * j + 1)) % (4 * n))]; }
};

/// Chebyshev-Lobatto points x_i = cos(pi i / (g-1)); g = 1 gives the single point 1.
template <class T>
struct LobattoTable {
    int g = 1;
    std::vector<T> cosines;
    std::vector<T> nodes;

    explicit LobattoTable(int count) : g(count) {
        int period = std::max(1, 2 * (g - 1));
        cosines.resize(static_cast<std::size_t>(period));
        for (int m = 0; m < period; ++m)
            cosines[m] = g == 1 ? T(1) : T(std::cos(3.14159265358979323846 * m / (g - 1)));
        nodes.resize(static_cast<std::size_t>(g));
        for (int i = 0; i < g; ++i) nodes[i] = cosines[static_cast<std::size_t>(i % period)];
    }
    T cos_k(int k, int i) const {
        if (g == 1) return T(1);
        return cosines[static_cast<std::size_t>((static_cast<long>(k) * i) % (2 * (g - 1)))];
    }
};

template <class Table>
const Table& cached(int n) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<Table>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<Table>(n);
    return *slot;
}

/// Values at n Gauss nodes of the series c[0..nc).
template <class T>
void values_at_gauss(const T* c, int nc, int n, T* out) {
    const auto& tab = cached<GaussTable<T>>(n);
    for (int j = 0; j < n; ++j) {
        T s = 0;
        for (int k = 0; k < nc; ++k) s += c[k] * tab.cos_k(k, j);
        out[j] = s;
    }
}

/// Coefficients of the degree n-1 interpolant through values at n Gauss nodes.
template <class T>
void coeffs_from_gauss(const T* f, int n, T* out) {
    const auto& tab = cached<GaussTable<T>>(n);
    for (int k = 0; k < n; ++k) {
        T s = 0;
        for (int j = 0; j < n; ++j) s += f[j] * tab.cos_k(k, j);
        out[k] = s * (k == 0 ? T(1) : T(2)) / T(n);
    }
}

template <class T>
void values_at_lobatto(const T* c, int nc, int g, T* out) {
    const auto& tab = cached<LobattoTable<T>>(g);
    for (int i = 0; i < g; ++i) {
        T s = 0;
        for (int k = 0; k < nc; ++k) s += c[k] * tab.cos_k(k, i);
        out[i] = s;
    }
}

// ---------------------------------------------------------------- tensors

using Shape = std::vector<std::size_t>;

inline std::size_t volume(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Applies f(in, out) to every fibre along axis; the axis length changes to new_len.
template <class T, class U, class F>
std::vector<U> map_axis(const std::vector<T>& data, const Shape& shape, std::size_t axis, std::size_t new_len, F&& f) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    std::size_t len = shape[axis];
    std::vector<U> out(outer * new_len * inner);
    std::vector<T> fin(len);
    std::vector<U> fout(new_len);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            for (std::size_t a = 0; a < len; ++a) fin[a] = data[(o * len + a) * inner + i];
            f(fin.data(), fout.data());
            for (std::size_t a = 0; a < new_len; ++a) out[(o * new_len + a) * inner + i] = fout[a];
        }
    return out;
}

}  // namespace picard_lod::cheb
