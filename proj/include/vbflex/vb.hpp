#pragma once

// First-order virtual battery: exact state integration, capacity and power
// violation times, and the analytic band-referenced state of charge of AC/EWH
// ensembles.
//
// Sign convention: the VB input u is the ensemble's power deviation from its
// baseline (kW). Consuming above baseline (u > 0) discharges the state, which
// matches the analytic SOC where extra cooling drives AC temperatures, and
// hence stored band energy, down.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vbflex/common.hpp"
#include "vbflex/devices.hpp"

namespace vbflex {

/// Power-limit reference on the simulation grid, one entry per step.
struct PowerBounds {
    std::vector<double> p_minus_kw;
    std::vector<double> p_plus_kw;
};

/// The parameter vector of the first-order VB.
struct VbParams {
    double dissipation_per_h = 0.0;  // a
    double capacity_low_kwh = 0.0;   // C1
    double capacity_high_kwh = 0.0;  // C2
    double initial_soc_kwh = 0.0;    // x0
    std::optional<PowerBounds> bounds;
};

/// One state step under piecewise-constant input,
///   x' = x e^{-a h} - (u/a)(1 - e^{-a h}),  h = dt in hours,
/// evaluated with expm1 so the a -> 0 limit degrades gracefully to x - u h.
inline double vb_step(double x_kwh, double a_per_h, double u_kw, double dt_s) {
    if (dt_s < 0.0) throw std::invalid_argument("vb_step: dt must be nonnegative");
    const double h = hours(dt_s);
    if (a_per_h == 0.0) return x_kwh - u_kw * h;
    const double em1 = std::expm1(-a_per_h * h);  // e^{-ah} - 1
    return x_kwh * (1.0 + em1) + (u_kw / a_per_h) * em1;
}

/// Tolerance for "the state touched a capacity rail". Touching counts as a
/// violation: a battery sitting exactly at its bound has no margin left for
/// the input that drove it there.
inline constexpr double kCapacityTolKwh = 1e-9;

/// Simulates the VB against a deviation series and returns the first
/// violation time in seconds: the step start time when the input leaves
/// [P-, P+], or the step end time when the state reaches a capacity bound.
/// Returns horizon_s if neither occurs.
inline double vb_violation_time(const VbParams& p, const std::vector<double>& u_kw,
                                double dt_s, double horizon_s) {
    const std::size_t steps = step_count(horizon_s, dt_s);
    if (u_kw.size() < steps)
        throw std::invalid_argument("vb_violation_time: input shorter than horizon");

    double x = p.initial_soc_kwh;
    if (x <= p.capacity_low_kwh + kCapacityTolKwh ||
        x >= p.capacity_high_kwh - kCapacityTolKwh)
        return 0.0;  // no usable headroom from the start

    for (std::size_t k = 0; k < steps; ++k) {
        if (p.bounds) {
            const auto& b = *p.bounds;
            if (k < b.p_minus_kw.size() &&
                (u_kw[k] < b.p_minus_kw[k] || u_kw[k] > b.p_plus_kw[k]))
                return static_cast<double>(k) * dt_s;
        }
        x = vb_step(x, p.dissipation_per_h, u_kw[k], dt_s);
        if (x <= p.capacity_low_kwh + kCapacityTolKwh ||
            x >= p.capacity_high_kwh - kCapacityTolKwh)
            return static_cast<double>(k + 1) * dt_s;
    }
    return horizon_s;
}

/// Full SOC trajectory (K+1 samples) of the VB model, ignoring bounds.
inline std::vector<double> vb_soc_series(const VbParams& p, const std::vector<double>& u_kw,
                                         double dt_s) {
    std::vector<double> x(u_kw.size() + 1);
    x[0] = p.initial_soc_kwh;
    for (std::size_t k = 0; k < u_kw.size(); ++k)
        x[k + 1] = vb_step(x[k], p.dissipation_per_h, u_kw[k], dt_s);
    return x;
}

// ---------------------------------------------------------------------------
// Analytic state of charge
// ---------------------------------------------------------------------------

/// AC ensemble stored energy referenced to the lower band edge:
///   x = sum_i (T_i - (T_set_i - dT_i/2)) / (eta_i / C_i).
inline double initial_soc_ac(const std::vector<double>& temps,
                             const std::vector<AcParams>& acs) {
    if (temps.size() != acs.size())
        throw std::invalid_argument("initial_soc_ac: size mismatch");
    double x = 0.0;
    for (std::size_t i = 0; i < acs.size(); ++i)
        x += (temps[i] - acs[i].band_low()) / (acs[i].cop / acs[i].thermal_capacitance);
    return x;
}

/// EWH headroom below the upper band edge:
///   x_w = sum_i (T_set_i + dT_i/2 - T_i) * C_i.
inline double initial_soc_ewh(const std::vector<double>& temps,
                              const std::vector<EwhParams>& ewhs) {
    if (temps.size() != ewhs.size())
        throw std::invalid_argument("initial_soc_ewh: size mismatch");
    double x = 0.0;
    for (std::size_t i = 0; i < ewhs.size(); ++i)
        x += (ewhs[i].band_high() - temps[i]) * ewhs[i].thermal_capacitance;
    return x;
}

/// Upper bound of the analytic SOC when every temperature sits at the far
/// band edge; the in-band state lives in [0, this].
inline double analytic_soc_band(const Ensemble& ens) {
    double cap = 0.0;
    for (const auto& a : ens.acs)
        cap += a.deadband / (a.cop / a.thermal_capacitance);
    for (const auto& w : ens.ewhs) cap += w.deadband * w.thermal_capacitance;
    return cap;
}

struct SocTrace {
    std::vector<double> soc_kwh;
    double dt_s = 1.0;
    std::string source;  // "vb-model" or "analytic"
};

/// Applies the band-referenced SOC sums at every trajectory sample; the
/// heterogeneous state is the plain sum of the AC and EWH contributions.
inline SocTrace analytic_soc_trace(const std::vector<std::vector<double>>& ac_temps,
                                   const std::vector<std::vector<double>>& ewh_temps,
                                   const Ensemble& ens, double dt_s) {
    const std::size_t n = std::max(ac_temps.size(), ewh_temps.size());
    SocTrace trace;
    trace.dt_s = dt_s;
    trace.source = "analytic";
    trace.soc_kwh.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        double x = 0.0;
        if (!ens.acs.empty()) x += initial_soc_ac(ac_temps[k], ens.acs);
        if (!ens.ewhs.empty()) x += initial_soc_ewh(ewh_temps[k], ens.ewhs);
        trace.soc_kwh.push_back(x);
    }
    return trace;
}

/// Root-mean-square gap between two equally gridded traces.
inline double soc_rms_error(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("soc_rms_error: grid mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace vbflex
