#pragma once

// Regulation-signal handling: ingestion of normalized signals from CSV,
// deterministic synthesis of PJM-like normalized signals, construction of
// ensemble-level regulation targets from the baseline, and envelope-based
// screening.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vbflex/common.hpp"
#include "vbflex/csv.hpp"

namespace vbflex {

/// Dimensionless signal with samples in [-1, 1] on a uniform grid.
struct NormalizedSignal {
    std::vector<double> values;
    double dt_s = 1.0;
    std::string source;

    double horizon_s() const { return static_cast<double>(values.size()) * dt_s; }
};

/// Ensemble-level target power series in kW.
struct RegulationSignal {
    std::vector<double> values_kw;
    double dt_s = 1.0;
    double gamma = 0.0;
    std::string id;

    double horizon_s() const { return static_cast<double>(values_kw.size()) * dt_s; }
};

/// Reads a (time_s, value) CSV, validates uniform spacing and the [-1, 1]
/// range, and resamples to the scenario step by zero-order hold.
inline NormalizedSignal load_normalized(const std::string& path, double target_dt_s) {
    const csv::Table t = csv::read(path);
    const auto time = t.column_values("time_s");
    const auto value = t.column_values("value");
    if (time.size() < 2) throw std::runtime_error("load_normalized: need at least 2 rows");

    const double src_dt = time[1] - time[0];
    if (src_dt <= 0.0) throw std::runtime_error("load_normalized: non-increasing time");
    for (std::size_t i = 1; i < time.size(); ++i) {
        if (std::abs((time[i] - time[i - 1]) - src_dt) > 1e-6)
            throw std::runtime_error("load_normalized: non-uniform sample spacing");
    }
    for (double v : value) {
        if (!(std::abs(v) <= 1.0 + 1e-9))
            throw std::runtime_error("load_normalized: sample outside [-1, 1]");
    }

    NormalizedSignal sig;
    sig.dt_s = target_dt_s;
    sig.source = path;
    const double horizon = static_cast<double>(value.size()) * src_dt;
    const std::size_t steps = step_count(horizon, target_dt_s);
    sig.values.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        const double tau = static_cast<double>(k) * target_dt_s;
        auto idx = static_cast<std::size_t>(tau / src_dt);
        if (idx >= value.size()) idx = value.size() - 1;
        sig.values.push_back(std::clamp(value[idx], -1.0, 1.0));
    }
    return sig;
}

/// Synthesizes a normalized regulation signal: a clipped random walk with a
/// per-seed low-pass time constant, centered and rescaled so max|p| is
/// exactly 1. The walk saturates at its clip bounds often enough to produce
/// the sustained excursions real regulation traces show.
inline NormalizedSignal synth_normalized(std::uint64_t seed, double horizon_s, double dt_s) {
    const std::size_t steps = step_count(horizon_s, dt_s);
    NormalizedSignal sig;
    sig.dt_s = dt_s;
    sig.source = "synth:" + std::to_string(seed);
    if (steps == 0) return sig;

    Rng walk_rng(mix_seed(seed, 17));
    const double tau_s = 60.0 * std::pow(20.0, walk_rng.unit());  // 60 s .. 20 min
    const double sigma = 0.045 * std::sqrt(dt_s);
    const double alpha = dt_s / (tau_s + dt_s);

    std::vector<double>& v = sig.values;
    v.resize(steps);
    double w = 0.0;
    double y = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        w = std::clamp(w + sigma * walk_rng.gaussian(), -1.0, 1.0);
        y += alpha * (w - y);
        v[k] = y;
    }

    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(steps);
    double peak = 0.0;
    for (double& x : v) {
        x -= mean;
        peak = std::max(peak, std::abs(x));
    }
    if (peak <= 0.0) throw std::runtime_error("synth_normalized: degenerate draw");
    for (double& x : v) x /= peak;
    return sig;
}

/// P_reg(t) = P_base(t) + gamma * mean(P_base) * p_hat(t).
inline RegulationSignal build_regulation(const std::vector<double>& baseline_kw,
                                         const NormalizedSignal& normalized, double gamma,
                                         const std::string& id) {
    if (baseline_kw.size() != normalized.values.size())
        throw std::invalid_argument("build_regulation: grid mismatch");
    double mean = 0.0;
    for (double v : baseline_kw) mean += v;
    if (!baseline_kw.empty()) mean /= static_cast<double>(baseline_kw.size());

    RegulationSignal reg;
    reg.dt_s = normalized.dt_s;
    reg.gamma = gamma;
    reg.id = id;
    reg.values_kw.reserve(baseline_kw.size());
    const double scale = gamma * mean;
    for (std::size_t k = 0; k < baseline_kw.size(); ++k)
        reg.values_kw.push_back(baseline_kw[k] + scale * normalized.values[k]);
    return reg;
}

/// Deviation u(t) = P_reg(t) - P_base(t), the VB input.
inline std::vector<double> deviation(const RegulationSignal& reg,
                                     const std::vector<double>& baseline_kw) {
    if (reg.values_kw.size() != baseline_kw.size())
        throw std::invalid_argument("deviation: grid mismatch");
    std::vector<double> u(reg.values_kw.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = reg.values_kw[k] - baseline_kw[k];
    return u;
}

/// Indices of the signals whose deviation stays inside [P-, P+] at every
/// step. The comparison is inclusive; any overshoot rejects the signal.
inline std::vector<std::size_t> filter_by_envelope(
    const std::vector<RegulationSignal>& signals, const std::vector<double>& p_minus_kw,
    const std::vector<double>& p_plus_kw, const std::vector<double>& baseline_kw) {
    std::vector<std::size_t> accepted;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        const auto u = deviation(signals[i], baseline_kw);
        if (u.size() > p_minus_kw.size() || u.size() > p_plus_kw.size())
            throw std::invalid_argument("filter_by_envelope: envelope grid too short");
        bool ok = true;
        for (std::size_t k = 0; k < u.size() && ok; ++k)
            ok = (u[k] >= p_minus_kw[k] && u[k] <= p_plus_kw[k]);
        if (ok) accepted.push_back(i);
    }
    return accepted;
}

}  // namespace vbflex
