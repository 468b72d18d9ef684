#pragma once

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace picard_lod {

/// Error raised for invalid input, unsupported constructs and failed preconditions.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluation hit a point outside the domain of an expression (zero denominator, non-finite value).
class domain_error : public error {
public:
    using error::error;
};

using wide = __float128;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kEpsFloor = 1e-300;

namespace wmath {

template <class T> T sin(T v) {
    if constexpr (std::is_same_v<T, wide>) return ::sinq(v);
    else return std::sin(v);
}
template <class T> T cos(T v) {
    if constexpr (std::is_same_v<T, wide>) return ::cosq(v);
    else return std::cos(v);
}
template <class T> T exp(T v) {
    if constexpr (std::is_same_v<T, wide>) return ::expq(v);
    else return std::exp(v);
}
template <class T> T abs(T v) { return v < T(0) ? -v : v; }
template <class T> bool isfinite(T v) {
    if constexpr (std::is_same_v<T, wide>) return ::finiteq(v) != 0;
    else return std::isfinite(v);
}
template <class T> T pi() {
    if constexpr (std::is_same_v<T, wide>) return M_PIq;
    else return 3.14159265358979323846;
}

}  // namespace wmath

enum class Verdict { converged, diverging, inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::converged: return "converged";
        case Verdict::diverging: return "diverging";
        default: return "inconclusive";
    }
}

/// Thread budget, read once from PICARD_LOD_THREADS (default: hardware concurrency).
inline unsigned max_threads() {
    static const unsigned n = [] {
        unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("PICARD_LOD_THREADS")) {
            char* end = nullptr;
            long v = std::strtol(env, &end, 10);
            if (end != env && v > 0) return static_cast<unsigned>(v);
        }
        return hw;
    }();
    return n;
}

/// Runs body(i) for i in [0, n). Work is split into contiguous blocks so results are order independent.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    unsigned workers = static_cast<unsigned>(std::min<std::size_t>(max_threads(), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(workers);
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, w, &body, &failures] {
            try {
                for (std::size_t i = lo; i < hi; ++i) body(i);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
}

/// log(n!) for n >= 0.
inline double log_factorial(double n) { return std::lgamma(n + 1.0); }

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

/// log(exp(a) + exp(b)) without overflow.
inline double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double safe_log(double v) { return v <= 0.0 ? -kInf : std::log(v); }

}  // namespace picard_lod
