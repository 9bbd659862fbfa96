// SPDX-License-Identifier: Apache-2.0
//
// Shared vocabulary types: shapes, seeded random numbers, error types and the
// kernel-level parallel loop.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace climgan {

/// Raised when operand shapes cannot be reconciled.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an archive, config or checkpoint file is malformed.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

//------------------------------------------------------------------------------
// Shape
//------------------------------------------------------------------------------

class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { check(); }
    explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { check(); }

    std::size_t rank() const { return dims_.size(); }
    std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    const std::vector<std::size_t>& dims() const { return dims_; }

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto d : dims_) n *= d;
        return n;
    }

    /// Row-major strides.
    std::vector<std::size_t> strides() const {
        std::vector<std::size_t> s(dims_.size(), 1);
        for (std::size_t i = dims_.size(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
        return s;
    }

    std::string str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? ", " : "") << dims_[i];
        os << ')';
        return os.str();
    }

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    void check() const {
        for (auto d : dims_)
            if (d == 0) throw ShapeError("shape " + str() + " has a zero extent");
    }

    std::vector<std::size_t> dims_;
};

//------------------------------------------------------------------------------
// Random numbers
//------------------------------------------------------------------------------

/// SplitMix64 finalizer, used to derive independent per-trial seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seeded generator with portable transforms. The distribution helpers keep no
/// cached state, so the engine state alone determines every future draw.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: empty range");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (one value per pair of uniforms).
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
        if (is.fail()) throw FormatError("invalid rng state");
    }

    friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

private:
    std::mt19937_64 engine_;
};

//------------------------------------------------------------------------------
// Parallelism
//------------------------------------------------------------------------------

namespace detail {
inline std::size_t& thread_cap() {
    static std::size_t cap = [] {
        if (const char* env = std::getenv("CLIMGAN_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<std::size_t>(v);
        }
        return std::size_t{1};
    }();
    return cap;
}
}  // namespace detail

/// Maximum worker threads for kernels; read from CLIMGAN_THREADS (default 1).
inline std::size_t max_threads() { return detail::thread_cap(); }
inline void set_max_threads(std::size_t n) { detail::thread_cap() = std::max<std::size_t>(1, n); }

/// Runs body(i) for i in [0, n). Callers must make every index write a
/// disjoint output region with a fixed arithmetic order, which keeps results
/// bitwise identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         std::size_t min_per_thread = 1) {
    const std::size_t workers =
        std::min(max_threads(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_per_thread)));
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace climgan
