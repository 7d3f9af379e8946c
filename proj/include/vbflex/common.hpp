#pragma once

// Shared small utilities: deterministic RNG, index-parallel loops, time-grid
// helpers. Everything in vbflex is keyed on seconds for time and kW/kWh for
// power/energy; conversions happen at call boundaries, never implicitly.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vbflex {

inline constexpr double kSecondsPerHour = 3600.0;

inline double hours(double seconds) { return seconds / kSecondsPerHour; }

/// Number of steps on a uniform grid. Throws if horizon is not a multiple of dt.
inline std::size_t step_count(double horizon_s, double dt_s) {
    if (dt_s <= 0.0) throw std::invalid_argument("dt must be positive");
    const double ratio = horizon_s / dt_s;
    const auto steps = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(steps)) > 1e-9)
        throw std::invalid_argument("horizon must be a multiple of dt");
    return steps;
}

/// SplitMix64 mix step. Used to derive independent stream seeds from a base
/// seed so that per-signal/per-device draws do not depend on evaluation order.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic RNG wrapper. std::mt19937_64 has a standardized bit stream,
/// but the std distributions do not, so uniform/gaussian are hand-rolled here
/// to keep sampled ensembles and synthesized signals identical across
/// toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1) with 53-bit resolution.
    double unit() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    /// Standard normal via Box-Muller (polar-free, deterministic).
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = unit();
        while (u1 <= 0.0) u1 = unit();
        const double u2 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Closed range used for ensemble parameter sampling.
struct Range {
    double lo = 0.0;
    double hi = 0.0;

    bool degenerate() const { return lo == hi; }
    double width() const { return hi - lo; }
};

/// Runs fn(i) for i in [0, n). Work items must be independent; results are
/// written into caller-owned slots so the outcome does not depend on thread
/// count or scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned max_threads = 0) {
    if (n == 0) return;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    unsigned workers = max_threads == 0 ? hw : std::min(max_threads, hw);
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace vbflex
