#pragma once

// Time-varying power limits of the ensemble, found by binary search over
// sustained power offsets added to the baseline. An offset is "trackable
// through t" when the dispatch controller follows baseline-plus-offset at
// every step of [0, t]; the limit at t is the largest such offset, located by
// a doubling phase followed by bisection.
//
// Sustained-offset semantics make the limits monotone (flexibility can only
// deplete as the offset is held longer). A per-step alternative, where the
// offset is applied only at the probed instant, is available behind the
// semantics switch for comparison.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vbflex/common.hpp"
#include "vbflex/devices.hpp"
#include "vbflex/dispatch.hpp"

namespace vbflex {

enum class EnvelopeSemantics { Sustained, Instantaneous };

struct EnvelopeConfig {
    double stride_s = 300.0;
    double epsilon_kw = 0.1;  // bisection stop width
    EnvelopeSemantics semantics = EnvelopeSemantics::Sustained;
    int max_doublings = 40;
    bool enforce_monotone = true;
};

struct PowerEnvelope {
    std::vector<double> probe_times_s;
    std::vector<double> probe_p_plus_kw;
    std::vector<double> probe_p_minus_kw;
    std::vector<double> p_plus_kw;   // per fine-grid step
    std::vector<double> p_minus_kw;  // per fine-grid step
    double dt_s = 1.0;
    double stride_s = 300.0;
    double epsilon_kw = 0.1;
};

namespace detail {

/// Doubling-then-bisection search for the largest trackable magnitude.
/// `trackable(magnitude)` probes magnitudes >= 0; the sign is applied by the
/// caller. Returns the last magnitude confirmed trackable (alpha).
template <class Probe>
double search_limit_magnitude(Probe&& trackable, double epsilon_kw, int max_doublings) {
    if (!(epsilon_kw > 0.0)) throw std::invalid_argument("envelope: epsilon must be > 0");
    double alpha = 0.0;
    double beta = 1.0;
    int doublings = 0;
    while (trackable(beta)) {
        alpha = beta;
        beta *= 2.0;
        if (++doublings > max_doublings)
            throw std::runtime_error("envelope: doubling phase did not terminate");
    }
    if (alpha == 0.0 && !trackable(0.0))
        throw std::runtime_error("envelope: baseline itself is not trackable");
    while (beta - alpha > epsilon_kw) {
        const double mid = 0.5 * (alpha + beta);
        if (trackable(mid))
            alpha = mid;
        else
            beta = mid;
    }
    return alpha;
}

}  // namespace detail

/// Upper power limit at one probe instant. `trackable(offset_kw)` must report
/// whether the ensemble tracks baseline-plus-offset through that instant.
template <class Probe>
double upper_limit_at(Probe&& trackable, double epsilon_kw, int max_doublings = 40) {
    return detail::search_limit_magnitude(
        [&](double mag) { return trackable(mag); }, epsilon_kw, max_doublings);
}

/// Lower power limit: same search run on negated offsets; the result is
/// returned with its sign, i.e. a value <= 0.
template <class Probe>
double lower_limit_at(Probe&& trackable, double epsilon_kw, int max_doublings = 40) {
    return -detail::search_limit_magnitude(
        [&](double mag) { return trackable(-mag); }, epsilon_kw, max_doublings);
}

/// Builds the production probe for one grid time: simulate the dispatch
/// controller against the offset baseline and ask whether it survived to t.
inline std::function<bool(double)> make_offset_probe(
    const Ensemble& ens, const EnsembleState& start, const std::vector<double>& baseline_kw,
    double t_s, const DispatchConfig& dispatch_cfg, const WaterDrawProfile& draw,
    double dt_s, EnvelopeSemantics semantics) {
    const std::size_t probe_steps = step_count(t_s, dt_s);
    if (probe_steps == 0 || probe_steps > baseline_kw.size())
        throw std::invalid_argument("envelope: probe time outside the baseline grid");
    return [=, &ens, &baseline_kw, &draw](double offset_kw) {
        std::vector<double> target(baseline_kw.begin(),
                                   baseline_kw.begin() + static_cast<std::ptrdiff_t>(probe_steps));
        if (semantics == EnvelopeSemantics::Sustained) {
            for (double& v : target) v += offset_kw;
        } else {
            target.back() += offset_kw;
        }
        const TrackResult r = track_signal(ens, start, target, dispatch_cfg, draw, dt_s);
        return r.tracked_all;
    };
}

/// Evaluates both limits on the coarse probe grid and holds each coarse value
/// across the fine-grid steps it covers. A fine step at time tau uses the
/// probe at the next grid instant >= tau, which under sustained semantics is
/// the conservative side. With enforce_monotone the probe-grid series are
/// clamped to the running min/max, removing up-to-epsilon bisection jitter.
inline PowerEnvelope compute_envelope(const Ensemble& ens, const EnsembleState& start,
                                      const std::vector<double>& baseline_kw,
                                      double horizon_s, double dt_s,
                                      const DispatchConfig& dispatch_cfg,
                                      const WaterDrawProfile& draw,
                                      const EnvelopeConfig& cfg) {
    const std::size_t fine_steps = step_count(horizon_s, dt_s);
    const std::size_t grid_points = step_count(horizon_s, cfg.stride_s);
    if (grid_points == 0) throw std::invalid_argument("envelope: stride larger than horizon");

    PowerEnvelope env;
    env.dt_s = dt_s;
    env.stride_s = cfg.stride_s;
    env.epsilon_kw = cfg.epsilon_kw;
    env.probe_times_s.resize(grid_points);
    env.probe_p_plus_kw.resize(grid_points);
    env.probe_p_minus_kw.resize(grid_points);

    parallel_for(grid_points, [&](std::size_t j) {
        const double t = static_cast<double>(j + 1) * cfg.stride_s;
        auto probe = make_offset_probe(ens, start, baseline_kw, t, dispatch_cfg, draw, dt_s,
                                       cfg.semantics);
        env.probe_times_s[j] = t;
        env.probe_p_plus_kw[j] = upper_limit_at(probe, cfg.epsilon_kw, cfg.max_doublings);
        env.probe_p_minus_kw[j] = lower_limit_at(probe, cfg.epsilon_kw, cfg.max_doublings);
    });

    if (cfg.enforce_monotone && cfg.semantics == EnvelopeSemantics::Sustained) {
        for (std::size_t j = 1; j < grid_points; ++j) {
            env.probe_p_plus_kw[j] = std::min(env.probe_p_plus_kw[j], env.probe_p_plus_kw[j - 1]);
            env.probe_p_minus_kw[j] =
                std::max(env.probe_p_minus_kw[j], env.probe_p_minus_kw[j - 1]);
        }
    }

    // Each fine step maps to the probe whose time covers the step's end.
    env.p_plus_kw.resize(fine_steps);
    env.p_minus_kw.resize(fine_steps);
    for (std::size_t k = 0; k < fine_steps; ++k) {
        const double step_end = static_cast<double>(k + 1) * dt_s;
        auto j = static_cast<std::size_t>(std::ceil(step_end / cfg.stride_s - 1e-9));
        j = std::min(std::max<std::size_t>(j, 1), grid_points) - 1;
        env.p_plus_kw[k] = env.probe_p_plus_kw[j];
        env.p_minus_kw[k] = env.probe_p_minus_kw[j];
    }
    return env;
}

}  // namespace vbflex
