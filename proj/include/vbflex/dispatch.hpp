#pragma once

// Per-step control design: decide device ON/OFF statuses so the ensemble
// power matches a target within a tolerance while every next-step temperature
// stays inside its deadband.
//
// The binary problem is relaxed to s in [0,1]^N with an s(1-s) penalty and
// solved by projected gradient from a feasibility-seeded start; the relaxed
// point is rounded and repaired by greedy flips and pairwise swaps over the
// devices whose next-step temperature is safe under either status. Small free
// pools fall back to exact subset enumeration when the local search stalls. A
// returned feasible solution is always re-verified against the original
// constraints before being reported, so a "feasible" verdict never depends on
// solver internals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "vbflex/common.hpp"
#include "vbflex/devices.hpp"

namespace vbflex {

struct DispatchConfig {
    double epsilon_kw = 1.0;       // tracking tolerance
    double w1 = 0.1;               // AC temperature weight
    double w2 = 0.1;               // EWH temperature weight
    double penalty_weight = 1.0;   // weight on sum s(1-s)
    int max_iterations = 150;      // projected-gradient cap
    double rounding_threshold = 0.5;

    void validate() const {
        if (!(epsilon_kw > 0.0)) throw std::invalid_argument("dispatch: epsilon must be > 0");
        if (w1 < 0.0 || w2 < 0.0) throw std::invalid_argument("dispatch: weights must be >= 0");
    }
};

/// Index sets over the combined device vector (ACs first, then EWHs).
/// must_on/must_off hold devices whose opposite status would leave the band
/// next step; free devices are safe either way; conflicts are safe neither
/// way and make the step infeasible.
struct Classification {
    std::vector<std::size_t> must_on;
    std::vector<std::size_t> must_off;
    std::vector<std::size_t> free_devices;
    std::vector<std::size_t> conflicts;
};

/// Per-device one-step data: next-step temperature under both statuses plus
/// band edges. T(s) is affine in s for the exact-exponential step, so band
/// membership of the two endpoints fully determines feasibility of any
/// fractional status.
struct StepModel {
    std::vector<double> t_off;      // next-step temperature if OFF
    std::vector<double> t_on;       // next-step temperature if ON
    std::vector<double> band_low;
    std::vector<double> band_high;
    std::vector<double> setpoint;
    std::vector<double> weight;     // W1 for ACs, W2 for EWHs
    std::vector<double> power;      // rated electrical power
};

inline StepModel build_step_model(const Ensemble& ens, const EnsembleState& state,
                                  double draw_lpm, double dt_s, const DispatchConfig& cfg) {
    const std::size_t n = ens.size();
    StepModel m;
    m.t_off.resize(n);
    m.t_on.resize(n);
    m.band_low.resize(n);
    m.band_high.resize(n);
    m.setpoint.resize(n);
    m.weight.resize(n);
    m.power.resize(n);
    for (std::size_t i = 0; i < ens.acs.size(); ++i) {
        const auto& p = ens.acs[i];
        m.t_off[i] = ac_step(state.ac_temps[i], p, 0, dt_s);
        m.t_on[i] = ac_step(state.ac_temps[i], p, 1, dt_s);
        m.band_low[i] = p.band_low();
        m.band_high[i] = p.band_high();
        m.setpoint[i] = p.setpoint;
        m.weight[i] = cfg.w1;
        m.power[i] = p.rated_power;
    }
    const std::size_t off = ens.acs.size();
    for (std::size_t i = 0; i < ens.ewhs.size(); ++i) {
        const auto& p = ens.ewhs[i];
        m.t_off[off + i] = ewh_step(state.ewh_temps[i], p, draw_lpm, 0, dt_s);
        m.t_on[off + i] = ewh_step(state.ewh_temps[i], p, draw_lpm, 1, dt_s);
        m.band_low[off + i] = p.band_low();
        m.band_high[off + i] = p.band_high();
        m.setpoint[off + i] = p.setpoint;
        m.weight[off + i] = cfg.w2;
        m.power[off + i] = p.rated_power;
    }
    return m;
}

/// Same, with each EWH reading the draw profile at its own phase offset. Only
/// the EWH next-step temperatures depend on the draw, so those rows are
/// rebuilt on top of the shared model.
inline StepModel build_step_model(const Ensemble& ens, const EnsembleState& state,
                                  const WaterDrawProfile& draw, std::size_t step,
                                  double dt_s, const DispatchConfig& cfg) {
    StepModel m = build_step_model(ens, state, 0.0, dt_s, cfg);
    const std::size_t off = ens.acs.size();
    for (std::size_t i = 0; i < ens.ewhs.size(); ++i) {
        const double lpm = draw.at(i, step);
        m.t_off[off + i] = ewh_step(state.ewh_temps[i], ens.ewhs[i], lpm, 0, dt_s);
        m.t_on[off + i] = ewh_step(state.ewh_temps[i], ens.ewhs[i], lpm, 1, dt_s);
    }
    return m;
}

inline Classification classify_step_model(const StepModel& m) {
    Classification c;
    for (std::size_t i = 0; i < m.power.size(); ++i) {
        const bool off_ok = m.t_off[i] >= m.band_low[i] && m.t_off[i] <= m.band_high[i];
        const bool on_ok = m.t_on[i] >= m.band_low[i] && m.t_on[i] <= m.band_high[i];
        if (off_ok && on_ok)
            c.free_devices.push_back(i);
        else if (on_ok)
            c.must_on.push_back(i);
        else if (off_ok)
            c.must_off.push_back(i);
        else
            c.conflicts.push_back(i);
    }
    return c;
}

/// One-step temperature-bound classification of every device.
inline Classification classify_devices(const Ensemble& ens, const EnsembleState& state,
                                       double draw_lpm, double dt_s,
                                       const DispatchConfig& cfg = {}) {
    return classify_step_model(build_step_model(ens, state, draw_lpm, dt_s, cfg));
}

inline Classification classify_devices(const Ensemble& ens, const EnsembleState& state,
                                       const WaterDrawProfile& draw, std::size_t step,
                                       double dt_s, const DispatchConfig& cfg = {}) {
    return classify_step_model(build_step_model(ens, state, draw, step, dt_s, cfg));
}

struct DispatchSolution {
    std::vector<double> relaxed;          // s in [0,1]^N after projected gradient
    std::vector<std::uint8_t> statuses;   // rounded/repaired binary statuses
    double achieved_kw = 0.0;
    double objective = 0.0;
    bool feasible = false;
};

namespace detail {

/// Next-step temperature at fractional status: affine between the endpoints.
inline double temp_at(const StepModel& m, std::size_t i, double s) {
    return m.t_off[i] + s * (m.t_on[i] - m.t_off[i]);
}

/// Full control-design objective at a status vector (W1/W2 temperature terms
/// plus the integrality penalty).
inline double objective_value(const StepModel& m, const std::vector<double>& s,
                              double penalty_weight) {
    double val = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = temp_at(m, i, s[i]) - m.setpoint[i];
        val += m.weight[i] * d * d + penalty_weight * s[i] * (1.0 - s[i]);
    }
    return val;
}

/// Projects y onto {s in box} intersected with {lo <= p.s <= hi}, where the
/// box is [0,1] for free devices and a fixed point otherwise. Euclidean
/// projection via a monotone one-dimensional dual search on p.s(lambda).
inline void project_onto_slab(std::vector<double>& s, const StepModel& m,
                              const std::vector<std::size_t>& free_devices,
                              const std::vector<std::uint8_t>& fixed_status,
                              const std::vector<std::uint8_t>& is_free, double target_lo,
                              double target_hi) {
    double dot = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (is_free[i])
            s[i] = std::clamp(s[i], 0.0, 1.0);
        else
            s[i] = static_cast<double>(fixed_status[i]);
        dot += s[i] * m.power[i];
    }
    if (dot >= target_lo && dot <= target_hi) return;

    const double bound = dot < target_lo ? target_lo : target_hi;
    auto dot_at = [&](double lambda) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (is_free[i])
                acc += std::clamp(s[i] + lambda * m.power[i], 0.0, 1.0) * m.power[i];
            else
                acc += s[i] * m.power[i];
        }
        return acc;
    };
    // p.s(lambda) is nondecreasing; bracket then bisect.
    double lo = 0.0, hi = 0.0;
    if (dot < bound) {
        hi = 1.0;
        while (dot_at(hi) < bound && hi < 1e6) hi *= 2.0;
    } else {
        lo = -1.0;
        while (dot_at(lo) > bound && lo > -1e6) lo *= 2.0;
    }
    for (int it = 0; it < 64; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (dot_at(mid) < bound)
            lo = mid;
        else
            hi = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    for (std::size_t i : free_devices) s[i] = std::clamp(s[i] + lambda * m.power[i], 0.0, 1.0);
}

/// Margin to the nearest band edge at the given binary status; used to order
/// repair flips (most comfortable flip first).
inline double flip_slack(const StepModel& m, std::size_t i, int status) {
    const double t = status ? m.t_on[i] : m.t_off[i];
    return std::min(t - m.band_low[i], m.band_high[i] - t);
}

}  // namespace detail

/// Solves the relaxed tracking problem for one step on an already-built step
/// model and rounds/repairs to a binary status vector. Infeasibility
/// (conflicting devices, unreachable target) is reported in the solution, not
/// thrown.
inline DispatchSolution solve_dispatch_model(const StepModel& m, double target_kw,
                                             const DispatchConfig& cfg,
                                             const std::vector<double>* warm_start = nullptr) {
    cfg.validate();
    if (!std::isfinite(target_kw)) throw std::invalid_argument("dispatch: target not finite");

    const Classification cls = classify_step_model(m);
    const std::size_t n = m.power.size();

    DispatchSolution sol;
    sol.relaxed.assign(n, 0.0);
    sol.statuses.assign(n, 0);

    std::vector<std::uint8_t> is_free(n, 0);
    for (std::size_t i : cls.free_devices) is_free[i] = 1;
    std::vector<std::uint8_t> fixed(n, 0);
    for (std::size_t i : cls.must_on) fixed[i] = 1;

    if (!cls.conflicts.empty()) {
        for (std::size_t i = 0; i < n; ++i)
            sol.statuses[i] = is_free[i] ? 0 : fixed[i];
        sol.achieved_kw = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (sol.statuses[i]) sol.achieved_kw += m.power[i];
        sol.feasible = false;
        return sol;
    }

    double p_fixed = 0.0;
    for (std::size_t i : cls.must_on) p_fixed += m.power[i];
    double p_free = 0.0;
    for (std::size_t i : cls.free_devices) p_free += m.power[i];

    const double lo = target_kw - cfg.epsilon_kw;
    const double hi = target_kw + cfg.epsilon_kw;
    if (p_fixed > hi || p_fixed + p_free < lo) {
        for (std::size_t i = 0; i < n; ++i) sol.statuses[i] = fixed[i];
        sol.achieved_kw = p_fixed;
        sol.feasible = false;
        return sol;
    }

    // Feasibility-seeded start: uniform fractional fill of the free devices.
    std::vector<double>& s = sol.relaxed;
    const double fill =
        p_free > 0.0 ? std::clamp((target_kw - p_fixed) / p_free, 0.0, 1.0) : 0.0;
    for (std::size_t i = 0; i < n; ++i) s[i] = is_free[i] ? fill : fixed[i];
    if (warm_start && warm_start->size() == n) {
        for (std::size_t i : cls.free_devices) s[i] = std::clamp((*warm_start)[i], 0.0, 1.0);
    }
    detail::project_onto_slab(s, m, cls.free_devices, fixed, is_free, lo, hi);

    // Projected gradient on the relaxed objective. The per-device curvature
    // bounds the gradient Lipschitz constant; a fixed 1/L step suffices.
    double lipschitz = 1e-12;
    for (std::size_t i : cls.free_devices) {
        const double slope = m.t_on[i] - m.t_off[i];
        lipschitz = std::max(lipschitz,
                             2.0 * m.weight[i] * slope * slope + 2.0 * cfg.penalty_weight);
    }
    const double step_size = 1.0 / lipschitz;
    std::vector<double> grad(n, 0.0);
    for (int it = 0; it < cfg.max_iterations; ++it) {
        for (std::size_t i : cls.free_devices) {
            const double slope = m.t_on[i] - m.t_off[i];
            const double d = detail::temp_at(m, i, s[i]) - m.setpoint[i];
            grad[i] = 2.0 * m.weight[i] * d * slope + cfg.penalty_weight * (1.0 - 2.0 * s[i]);
        }
        double shift = 0.0;
        for (std::size_t i : cls.free_devices) {
            const double prev = s[i];
            s[i] -= step_size * grad[i];
            shift += std::abs(s[i] - prev);
        }
        detail::project_onto_slab(s, m, cls.free_devices, fixed, is_free, lo, hi);
        if (shift < 1e-10 * static_cast<double>(cls.free_devices.size() + 1)) break;
    }

    // Round to binary.
    for (std::size_t i = 0; i < n; ++i)
        sol.statuses[i] = is_free[i] ? (s[i] >= cfg.rounding_threshold ? 1 : 0) : fixed[i];

    auto achieved = [&]() {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (sol.statuses[i]) acc += m.power[i];
        return acc;
    };

    // Repair and polish: greedy single flips in slack order while they reduce
    // the tracking gap, then pairwise ON/OFF swaps. Free devices are safe
    // under either status, so only the power balance matters here.
    std::vector<std::size_t> order = cls.free_devices;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = detail::flip_slack(m, a, sol.statuses[a] ? 0 : 1);
        const double sb = detail::flip_slack(m, b, sol.statuses[b] ? 0 : 1);
        if (sa != sb) return sa > sb;
        return a < b;
    });

    double gap = target_kw - achieved();
    bool improved = true;
    while (improved && std::abs(gap) > 1e-12) {
        improved = false;
        for (std::size_t i : order) {
            const double delta = sol.statuses[i] ? -m.power[i] : m.power[i];
            if (std::abs(gap - delta) < std::abs(gap) - 1e-12) {
                sol.statuses[i] ^= 1;
                gap -= delta;
                improved = true;
            }
        }
        if (improved) continue;
        // Pairwise swaps: exchange one ON free device against one OFF one.
        double best_gain = 1e-12;
        std::size_t best_on = n, best_off = n;
        for (std::size_t i : cls.free_devices) {
            if (!sol.statuses[i]) continue;
            for (std::size_t j : cls.free_devices) {
                if (sol.statuses[j]) continue;
                const double delta = m.power[j] - m.power[i];
                const double gain = std::abs(gap) - std::abs(gap - delta);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_on = i;
                    best_off = j;
                }
            }
        }
        if (best_on < n) {
            sol.statuses[best_on] = 0;
            sol.statuses[best_off] = 1;
            gap += m.power[best_on] - m.power[best_off];
            improved = true;
        }
    }

    sol.achieved_kw = achieved();

    // Independent feasibility check of the binary vector.
    auto verify = [&]() {
        bool ok = std::abs(target_kw - sol.achieved_kw) <= cfg.epsilon_kw;
        for (std::size_t i = 0; i < n && ok; ++i) {
            const double t = sol.statuses[i] ? m.t_on[i] : m.t_off[i];
            ok = t >= m.band_low[i] && t <= m.band_high[i];
        }
        return ok;
    };
    sol.feasible = verify();

    // Exact fallback: flip/swap local search can stall outside the window
    // even when a solution exists. Free devices are temperature-safe under
    // either status, so feasibility is a pure subset-sum window test and
    // enumeration is affordable for small free pools.
    if (!sol.feasible && cls.free_devices.size() <= 16) {
        const std::size_t nf = cls.free_devices.size();
        const std::uint32_t lim = 1u << nf;
        double best_dev = std::numeric_limits<double>::infinity();
        std::uint32_t best_mask = 0;
        for (std::uint32_t mask = 0; mask < lim; ++mask) {
            double acc = p_fixed;
            for (std::size_t b = 0; b < nf; ++b)
                if (mask & (1u << b)) acc += m.power[cls.free_devices[b]];
            const double dev = std::abs(acc - target_kw);
            if (dev < best_dev) {
                best_dev = dev;
                best_mask = mask;
            }
        }
        if (best_dev <= cfg.epsilon_kw) {
            for (std::size_t b = 0; b < nf; ++b)
                sol.statuses[cls.free_devices[b]] = (best_mask >> b) & 1u;
            for (std::size_t i : cls.free_devices)
                s[i] = static_cast<double>(sol.statuses[i]);
            sol.achieved_kw = achieved();
            sol.feasible = verify();
        }
    }

    std::vector<double> s_bin(n);
    for (std::size_t i = 0; i < n; ++i) s_bin[i] = static_cast<double>(sol.statuses[i]);
    sol.objective = detail::objective_value(m, s_bin, cfg.penalty_weight);
    return sol;
}

inline DispatchSolution solve_dispatch(const Ensemble& ens, const EnsembleState& state,
                                       double target_kw, const DispatchConfig& cfg,
                                       double draw_lpm, double dt_s,
                                       const std::vector<double>* warm_start = nullptr) {
    return solve_dispatch_model(build_step_model(ens, state, draw_lpm, dt_s, cfg), target_kw,
                                cfg, warm_start);
}

inline DispatchSolution solve_dispatch(const Ensemble& ens, const EnsembleState& state,
                                       double target_kw, const DispatchConfig& cfg,
                                       const WaterDrawProfile& draw, std::size_t step,
                                       double dt_s,
                                       const std::vector<double>* warm_start = nullptr) {
    return solve_dispatch_model(build_step_model(ens, state, draw, step, dt_s, cfg), target_kw,
                                cfg, warm_start);
}

/// Exhaustive ground truth for small instances: enumerates the binary
/// statuses of the free devices and returns the feasible vector minimizing
/// the control-design objective. Refuses ensembles larger than 20 devices.
inline DispatchSolution enumerate_oracle(const Ensemble& ens, const EnsembleState& state,
                                         double target_kw, const DispatchConfig& cfg,
                                         double draw_lpm, double dt_s) {
    if (ens.size() > 20) throw std::invalid_argument("enumerate_oracle: ensemble too large");
    const StepModel m = build_step_model(ens, state, draw_lpm, dt_s, cfg);
    const Classification cls = classify_step_model(m);
    const std::size_t n = m.power.size();

    DispatchSolution best;
    best.statuses.assign(n, 0);
    best.relaxed.assign(n, 0.0);
    best.feasible = false;
    if (!cls.conflicts.empty()) return best;

    std::vector<std::uint8_t> base(n, 0);
    for (std::size_t i : cls.must_on) base[i] = 1;

    const std::size_t k = cls.free_devices.size();
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (1ULL << k); ++mask) {
        std::vector<std::uint8_t> cand = base;
        double power = 0.0;
        for (std::size_t b = 0; b < k; ++b)
            if (mask & (1ULL << b)) cand[cls.free_devices[b]] = 1;
        for (std::size_t i = 0; i < n; ++i)
            if (cand[i]) power += m.power[i];
        if (std::abs(target_kw - power) > cfg.epsilon_kw) continue;
        std::vector<double> sv(n);
        for (std::size_t i = 0; i < n; ++i) sv[i] = static_cast<double>(cand[i]);
        const double obj = detail::objective_value(m, sv, cfg.penalty_weight);
        if (obj < best_obj) {
            best_obj = obj;
            best.statuses = cand;
            best.relaxed = sv;
            best.achieved_kw = power;
            best.objective = obj;
            best.feasible = true;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Signal tracking
// ---------------------------------------------------------------------------

/// Outcome of tracking one regulation signal. violation_time_s equals the
/// horizon when the signal was tracked throughout; otherwise it is the end
/// time of the first step whose control design problem had no solution.
struct TrackResult {
    double violation_time_s = 0.0;
    std::vector<double> achieved_kw;
    std::vector<double> rel_err_pct;
    std::vector<std::vector<double>> ac_temps;   // per-instant trajectories
    std::vector<std::vector<double>> ewh_temps;
    bool tracked_all = false;
};

/// Iterates solve_dispatch over the target series, advancing temperatures
/// with the rounded statuses. Infeasibility is data: the loop stops and the
/// violation time records it.
inline TrackResult track_signal(const Ensemble& ens, const EnsembleState& start,
                                const std::vector<double>& target_kw,
                                const DispatchConfig& cfg, const WaterDrawProfile& draw,
                                double dt_s) {
    TrackResult out;
    const std::size_t steps = target_kw.size();
    out.achieved_kw.reserve(steps);
    out.rel_err_pct.reserve(steps);
    out.ac_temps.reserve(steps + 1);
    out.ewh_temps.reserve(steps + 1);

    EnsembleState state = start;
    std::vector<double> warm;
    for (std::size_t k = 0; k < steps; ++k) {
        out.ac_temps.push_back(state.ac_temps);
        out.ewh_temps.push_back(state.ewh_temps);
        const DispatchSolution sol = solve_dispatch(ens, state, target_kw[k], cfg,
                                                    draw, k, dt_s,
                                                    warm.empty() ? nullptr : &warm);
        if (!sol.feasible) {
            out.violation_time_s = static_cast<double>(k + 1) * dt_s;
            out.tracked_all = false;
            return out;
        }
        warm = sol.relaxed;
        state.statuses = sol.statuses;
        out.achieved_kw.push_back(sol.achieved_kw);
        const double denom = std::max(std::abs(target_kw[k]), 1e-6);
        out.rel_err_pct.push_back(100.0 * std::abs(sol.achieved_kw - target_kw[k]) / denom);
        advance_temperatures(state, ens, draw, k, dt_s);
    }
    out.ac_temps.push_back(state.ac_temps);
    out.ewh_temps.push_back(state.ewh_temps);
    out.violation_time_s = static_cast<double>(steps) * dt_s;
    out.tracked_all = true;
    return out;
}

}  // namespace vbflex
