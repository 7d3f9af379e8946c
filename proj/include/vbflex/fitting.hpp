#pragma once

// Identification of the VB dissipation rate and symmetric capacity from
// ensemble violation times: minimize the l2 norm of log-gaps between VB and
// ensemble violation times subject to the VB never violating later than the
// ensemble (B <= F elementwise).
//
// The violation-time map is piecewise constant in (a, C), so gradient methods
// do not apply; the solver is an exhaustive feasible grid search over
// log-spaced (a, C) followed by shrinking two-dimensional grid refinement. For
// fixed a the state trajectory is independent of C, so one simulation per
// signal serves every capacity candidate through its running |x| maximum.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vbflex/common.hpp"
#include "vbflex/vb.hpp"

namespace vbflex {

struct FitProblem {
    std::vector<double> ensemble_violation_s;      // F
    std::vector<std::vector<double>> deviations_kw;  // u_i, one series per signal
    double dt_s = 1.0;
    double horizon_s = 7200.0;
    double x0_kwh = 0.0;
    std::optional<PowerBounds> bounds;

    void validate() const {
        if (ensemble_violation_s.empty() ||
            ensemble_violation_s.size() != deviations_kw.size())
            throw std::invalid_argument("fit: need one violation time per signal");
        for (double f : ensemble_violation_s)
            if (!(f > 0.0) || f > horizon_s + 1e-9)
                throw std::invalid_argument("fit: violation times must lie in (0, horizon]");
    }
};

struct FitConfig {
    double a_lo = 1e-3, a_hi = 10.0;   // 1/h
    double c_lo = 0.1, c_hi = 1e4;     // kWh
    std::size_t a_points = 25;
    std::size_t c_points = 31;
    int refine_rounds = 3;
    std::size_t refine_points = 17;
    double eps_log_s = 1.0;            // floor inside the log

    std::vector<double> a_grid() const { return log_grid(a_lo, a_hi, a_points); }
    std::vector<double> c_grid() const { return log_grid(c_lo, c_hi, c_points); }

    static std::vector<double> log_grid(double lo, double hi, std::size_t n) {
        std::vector<double> g(n);
        const double llo = std::log(lo), lhi = std::log(hi);
        for (std::size_t i = 0; i < n; ++i)
            g[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) /
                                      static_cast<double>(n - 1));
        g.front() = lo;
        g.back() = hi;
        return g;
    }
};

struct FitResult {
    double a_per_h = 0.0;
    double c_kwh = 0.0;
    double x0_kwh = 0.0;
    double objective = 0.0;
    std::vector<double> vb_violation_s;  // B at the optimum
    bool saturated = false;              // optimum pinned at a search bound
    std::size_t n_signals = 0;
    std::string ic_mode = "analytic";
};

inline VbParams vb_params_for(double a_per_h, double c_kwh, const FitProblem& problem) {
    VbParams p;
    p.dissipation_per_h = a_per_h;
    p.capacity_low_kwh = -c_kwh;
    p.capacity_high_kwh = c_kwh;
    p.initial_soc_kwh = problem.x0_kwh;
    p.bounds = problem.bounds;
    return p;
}

struct FitObjective {
    double cost = std::numeric_limits<double>::infinity();
    std::vector<double> vb_violation_s;
    bool feasible = false;
};

inline double log_gap_cost(const std::vector<double>& F, const std::vector<double>& B,
                           double eps_log_s) {
    double acc = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) {
        const double g = std::log(std::max(std::abs(F[i] - B[i]), eps_log_s));
        acc += g * g;
    }
    return std::sqrt(acc);
}

/// Direct evaluation of the fit objective at one (a, C): simulates every
/// signal through the generic violation-time path.
inline FitObjective fit_objective(double a_per_h, double c_kwh, const FitProblem& problem,
                                  double eps_log_s = 1.0) {
    problem.validate();
    if (!(a_per_h >= 0.0) || !(c_kwh > 0.0))
        throw std::invalid_argument("fit_objective: need a >= 0 and C > 0");
    FitObjective out;
    out.vb_violation_s.reserve(problem.deviations_kw.size());
    const VbParams params = vb_params_for(a_per_h, c_kwh, problem);
    out.feasible = true;
    for (std::size_t i = 0; i < problem.deviations_kw.size(); ++i) {
        const double b = vb_violation_time(params, problem.deviations_kw[i], problem.dt_s,
                                           problem.horizon_s);
        out.vb_violation_s.push_back(b);
        if (b > problem.ensemble_violation_s[i]) out.feasible = false;
    }
    out.cost = log_gap_cost(problem.ensemble_violation_s, out.vb_violation_s, eps_log_s);
    return out;
}

namespace detail {

/// Capacity-independent per-signal data at fixed a: the first power-bound
/// violation and the running max of |x| after each step.
struct SignalProfile {
    double power_violation_s = std::numeric_limits<double>::infinity();
    std::vector<double> running_abs_max;  // index j-1 holds max over x_1..x_j
};

inline SignalProfile profile_signal(double a_per_h, const FitProblem& problem,
                                    std::size_t signal) {
    const std::size_t steps = step_count(problem.horizon_s, problem.dt_s);
    const auto& u = problem.deviations_kw[signal];
    SignalProfile prof;
    prof.running_abs_max.resize(steps);
    // Same recurrence as vb_step with the per-a constants hoisted out; the
    // operation order is kept identical so results match bit for bit.
    const double h = hours(problem.dt_s);
    const double em1 = (a_per_h == 0.0) ? 0.0 : std::expm1(-a_per_h * h);
    const double decay = 1.0 + em1;
    double x = problem.x0_kwh;
    double peak = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        if (problem.bounds && prof.power_violation_s ==
                                  std::numeric_limits<double>::infinity()) {
            const auto& b = *problem.bounds;
            if (k < b.p_minus_kw.size() &&
                (u[k] < b.p_minus_kw[k] || u[k] > b.p_plus_kw[k]))
                prof.power_violation_s = static_cast<double>(k) * problem.dt_s;
        }
        x = (a_per_h == 0.0) ? x - u[k] * h : x * decay + (u[k] / a_per_h) * em1;
        peak = std::max(peak, std::abs(x));
        prof.running_abs_max[k] = peak;
    }
    return prof;
}

inline double violation_from_profile(const SignalProfile& prof, double c_kwh, double x0_kwh,
                                     double dt_s, double horizon_s) {
    if (std::abs(x0_kwh) >= c_kwh - kCapacityTolKwh) return 0.0;
    double b = prof.power_violation_s;
    const auto it = std::lower_bound(prof.running_abs_max.begin(),
                                     prof.running_abs_max.end(), c_kwh - kCapacityTolKwh);
    if (it != prof.running_abs_max.end()) {
        const double cap_s =
            static_cast<double>(std::distance(prof.running_abs_max.begin(), it) + 1) * dt_s;
        b = std::min(b, cap_s);
    }
    return std::min(b, horizon_s);
}

struct Candidate {
    double cost = std::numeric_limits<double>::infinity();
    double a = 0.0;
    double c = 0.0;
    bool valid = false;

    /// Lexicographic (cost, a, C) preference.
    bool better_than(const Candidate& other) const {
        if (!other.valid) return valid;
        if (cost != other.cost) return cost < other.cost;
        if (a != other.a) return a < other.a;
        return c < other.c;
    }
};

}  // namespace detail

/// Grid-plus-refinement solve of the violation-time fit. Deterministic:
/// identical problems yield identical results. Throws when no grid point is
/// feasible.
inline FitResult fit_vb(const FitProblem& problem, const FitConfig& cfg = {}) {
    problem.validate();
    const std::size_t n = problem.deviations_kw.size();

    auto evaluate_for_a = [&](double a, const std::vector<double>& c_values,
                              detail::Candidate& best) {
        std::vector<detail::SignalProfile> profiles(n);
        for (std::size_t i = 0; i < n; ++i) profiles[i] = detail::profile_signal(a, problem, i);

        // For fixed a the cost is weakly decreasing in C on the feasible set:
        // raising C delays every violation toward its target. The exact per-a
        // optimum therefore sits at the largest feasible capacity, which is
        // known in closed form from the profiles; it joins the candidate list
        // so C-grid aliasing cannot hide a good dissipation value. A signal
        // constrains C only when it must still violate by its target time.
        double c_upper = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            const double target_s = problem.ensemble_violation_s[i];
            if (target_s >= problem.horizon_s ||
                profiles[i].power_violation_s <= target_s)
                continue;
            const auto& m = profiles[i].running_abs_max;
            const auto last =
                static_cast<long long>(std::floor(target_s / problem.dt_s + 1e-9)) - 1;
            double lim = std::abs(problem.x0_kwh);
            if (last >= 0)
                lim = std::max(
                    lim, m[std::min(static_cast<std::size_t>(last), m.size() - 1)]);
            c_upper = std::min(c_upper, lim + kCapacityTolKwh);
        }

        std::vector<double> cs = c_values;
        if (std::isfinite(c_upper) && c_upper >= cfg.c_lo && c_upper <= cfg.c_hi)
            cs.push_back(c_upper);

        std::vector<double> B(n);
        for (double c : cs) {
            bool feasible = true;
            for (std::size_t i = 0; i < n; ++i) {
                B[i] = detail::violation_from_profile(profiles[i], c, problem.x0_kwh,
                                                      problem.dt_s, problem.horizon_s);
                if (B[i] > problem.ensemble_violation_s[i]) {
                    feasible = false;
                    break;
                }
            }
            if (!feasible) continue;
            detail::Candidate cand{log_gap_cost(problem.ensemble_violation_s, B,
                                                cfg.eps_log_s),
                                   a, c, true};
            if (cand.better_than(best)) best = cand;
        }
    };

    detail::Candidate best;
    const auto a_grid = cfg.a_grid();
    const auto c_grid = cfg.c_grid();
    for (double a : a_grid) evaluate_for_a(a, c_grid, best);
    if (!best.valid)
        throw std::runtime_error("ensemble violation times unattainable by first-order VB");

    // Pattern-search refinement around the incumbent. Violation steps realign
    // shelf by shelf, so the objective is a sawtooth staircase in (a, C) whose
    // descending valley can run across many coarse cells; both parameters must
    // move jointly (larger C compensated by smaller a). While the best point
    // keeps landing on the probe-box boundary the box is re-centered at full
    // size to chase the valley; it shrinks only once the best point is
    // interior or nothing improved, and stops after cfg.refine_rounds shrinks.
    double a_span = std::log(a_grid[1] / a_grid[0]);
    double c_span = std::log(c_grid[1] / c_grid[0]);
    for (int iter = 0, shrinks = 0; iter < 64 && shrinks < cfg.refine_rounds; ++iter) {
        const double a_lo = std::max(cfg.a_lo, best.a * std::exp(-a_span));
        const double a_hi = std::min(cfg.a_hi, best.a * std::exp(a_span));
        const double c_lo = std::max(cfg.c_lo, best.c * std::exp(-c_span));
        const double c_hi = std::min(cfg.c_hi, best.c * std::exp(c_span));
        const auto a_ref = FitConfig::log_grid(a_lo, a_hi, cfg.refine_points);
        const auto c_ref = FitConfig::log_grid(c_lo, c_hi, cfg.refine_points);
        const detail::Candidate before = best;
        for (double a : a_ref) evaluate_for_a(a, c_ref, best);
        const bool on_edge = best.a == a_ref.front() || best.a == a_ref.back() ||
                             best.c == c_ref.front() || best.c == c_ref.back();
        if (best.better_than(before) && on_edge) continue;
        a_span = 2.0 * std::log(a_hi / a_lo) / static_cast<double>(cfg.refine_points - 1);
        c_span = 2.0 * std::log(c_hi / c_lo) / static_cast<double>(cfg.refine_points - 1);
        ++shrinks;
    }

    // Final values are re-verified through the generic simulation path rather
    // than trusted from the search structures.
    const FitObjective check = fit_objective(best.a, best.c, problem, cfg.eps_log_s);
    if (!check.feasible)
        throw std::logic_error("fit_vb: optimizer result failed independent re-verification");

    FitResult res;
    res.a_per_h = best.a;
    res.c_kwh = best.c;
    res.x0_kwh = problem.x0_kwh;
    res.objective = check.cost;
    res.vb_violation_s = check.vb_violation_s;
    res.n_signals = n;
    const double rel = 1e-9;
    res.saturated = std::abs(best.a - cfg.a_lo) <= rel * cfg.a_lo ||
                    std::abs(best.a - cfg.a_hi) <= rel * cfg.a_hi ||
                    std::abs(best.c - cfg.c_lo) <= rel * cfg.c_lo ||
                    std::abs(best.c - cfg.c_hi) <= rel * cfg.c_hi;
    return res;
}

/// Fits nested prefixes of the signal set; shows how the identified
/// parameters settle as regulation signals accumulate.
inline std::vector<FitResult> parameter_evolution(const FitProblem& problem,
                                                  const std::vector<std::size_t>& sizes,
                                                  const FitConfig& cfg = {}) {
    problem.validate();
    std::vector<FitResult> out;
    out.reserve(sizes.size());
    for (std::size_t size : sizes) {
        if (size == 0 || size > problem.deviations_kw.size())
            throw std::invalid_argument("parameter_evolution: bad subset size");
        FitProblem sub = problem;
        sub.ensemble_violation_s.assign(problem.ensemble_violation_s.begin(),
                                        problem.ensemble_violation_s.begin() +
                                            static_cast<std::ptrdiff_t>(size));
        sub.deviations_kw.assign(problem.deviations_kw.begin(),
                                 problem.deviations_kw.begin() +
                                     static_cast<std::ptrdiff_t>(size));
        out.push_back(fit_vb(sub, cfg));
    }
    return out;
}

/// Runs the fit with zero and with the provided (analytic) initial SOC.
inline std::pair<FitResult, FitResult> compare_ic_modes(const FitProblem& problem,
                                                        const FitConfig& cfg = {}) {
    FitProblem zero = problem;
    zero.x0_kwh = 0.0;
    FitResult rz = fit_vb(zero, cfg);
    rz.ic_mode = "zero";
    FitResult ra = fit_vb(problem, cfg);
    ra.ic_mode = "analytic";
    return {std::move(rz), std::move(ra)};
}

}  // namespace vbflex
