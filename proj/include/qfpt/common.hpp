// common.hpp: shared types, error classes, seed derivation and a small parallel loop

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qfpt {

using cplx = std::complex<double>;
using Rng = std::mt19937_64;

inline constexpr double kPi = 3.14159265358979323846;

// ------------------------------- error classes ------------------------------

// Invalid user input (bad config, unknown key, missing file).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical check failed (grid too coarse, optimizer stalled, model mismatch).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Population leaked into the top Fock level beyond the configured cap.
class TruncationError : public std::runtime_error {
public:
    TruncationError(const std::string& where, double tail, double cap)
        : std::runtime_error(where + ": tail population " + std::to_string(tail) +
                             " exceeds truncation cap " + std::to_string(cap) +
                             " (increase n_cut)"),
          tail_population(tail),
          cap(cap) {}
    double tail_population;
    double cap;
};

// ------------------------------ random streams ------------------------------

// splitmix64 finalizer; maps (master_seed, index) to a well-mixed stream seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t index) {
    return Rng(derive_seed(master, index));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// ------------------------------- parallel loop ------------------------------

inline unsigned resolve_threads(unsigned requested) noexcept {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Runs body(i) for i in [0, n) on up to `threads` workers with a static
// contiguous partition. Bodies must write only to index-owned slots, so the
// result never depends on scheduling. The first exception is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = n * w / workers;
        const std::size_t end = n * (w + 1) / workers;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace qfpt
