#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spectraforge {

// Validation failures (bad arguments, broken invariants). CLI maps these to exit 1.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / parse failures. CLI maps these to exit 2.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ValidationError(msg);
}

// Global worker-thread cap, set once by the CLI (--threads). Defaults to 1;
// kernels stay bit-deterministic at any setting because parallel regions
// only ever write disjoint output slices.
inline int& thread_count() {
    static int n = 1;
    return n;
}

// Runs fn(i) for i in [0, jobs). Splits into contiguous chunks across at most
// thread_count() threads. Each index must touch disjoint output. The first
// exception thrown by any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::int64_t jobs, Fn&& fn) {
    const int nt = std::min<std::int64_t>(thread_count(), jobs);
    if (nt <= 1) {
        for (std::int64_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nt));
    const std::int64_t chunk = (jobs + nt - 1) / nt;
    std::exception_ptr err;
    std::mutex err_mu;
    for (int t = 0; t < nt; ++t) {
        const std::int64_t lo = t * chunk;
        const std::int64_t hi = std::min(jobs, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn, &err, &err_mu] {
            try {
                for (std::int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mu);
                if (!err) err = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

inline bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

template <typename T>
T clamp(T v, T lo, T hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// A single-channel float image. Shared by band slices, flat-field references,
// template matching and mismatch maps.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> v;

    Image() = default;
    Image(int w, int h, float fill = 0.0f)
        : width(w), height(h), v(static_cast<size_t>(w) * h, fill) {}

    float& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
    float at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return v.size(); }
};

}  // namespace spectraforge
