#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "vbflex/devices.hpp"

using namespace vbflex;
using Catch::Approx;

namespace {

AcParams ac_nominal() {
    AcParams p;
    p.thermal_resistance = 2.0;
    p.thermal_capacitance = 2.0;
    p.cop = 2.5;
    p.rated_power = 2.0;
    p.setpoint = 22.5;
    p.deadband = 1.0;
    p.ambient = 32.0;
    return p;
}

}  // namespace

TEST_CASE("ac_step zero-step identity and ambient equilibrium") {
    AcParams p = ac_nominal();
    CHECK(ac_step(22.0, p, 0, 0.0) == Approx(22.0).margin(1e-12));
    CHECK(ac_step(32.0, p, 0, 600.0) == Approx(32.0).margin(1e-12));
    CHECK(ac_step(32.0, p, 0, 7200.0) == Approx(32.0).margin(1e-12));
}

TEST_CASE("ac_step matches the closed-form exponential") {
    // R=2, C=2, eta=2.5, P=2: dt=10 s is 1/1440 of the 4 h time constant.
    AcParams p = ac_nominal();
    const double expected = 32.0 - 10.0 * std::exp(-1.0 / 1440.0);
    CHECK(ac_step(22.0, p, 0, 10.0) == Approx(expected).margin(1e-12));
    CHECK(ac_step(22.0, p, 0, 10.0) == Approx(22.0069420).margin(1e-6));
    // eta*R*P = 10 equals T_a - T, so the ON drift cancels exactly.
    CHECK(ac_step(22.0, p, 1, 10.0) == Approx(22.0).margin(1e-12));
}

TEST_CASE("ac_step is monotone in status and contracts differences") {
    AcParams p = ac_nominal();
    CHECK(ac_step(23.0, p, 1, 30.0) < ac_step(23.0, p, 0, 30.0));

    const double dt = 45.0;
    const double t1 = 21.7, t2 = 23.9;
    const double factor = std::exp(-hours(dt) / (p.thermal_resistance * p.thermal_capacitance));
    for (int s : {0, 1}) {
        const double d = std::abs(ac_step(t1, p, s, dt) - ac_step(t2, p, s, dt));
        CHECK(d == Approx(factor * std::abs(t1 - t2)).margin(1e-12));
    }
}

TEST_CASE("ac_step rejects non-finite input") {
    AcParams p = ac_nominal();
    CHECK_THROWS_AS(ac_step(std::nan(""), p, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ac_step(22.0, p, 0, -1.0), std::invalid_argument);
}

TEST_CASE("ewh_step equilibria and the draw-mixing hand example") {
    EwhParams p;
    CHECK(ewh_step(p.ambient, p, 0.0, 0, 3600.0) == Approx(p.ambient).margin(1e-12));
    CHECK(ewh_step(50.0, p, 4.0, 0, 0.0) == Approx(50.0).margin(1e-12));

    // Losses disabled by a huge time constant: one minute of 4 L/min draw on
    // a 200 L tank replaces 2% of the water with 15 degC inlet.
    EwhParams q = p;
    q.thermal_resistance = 1e12;
    q.tank_volume = 200.0;
    q.inlet_temp = 15.0;
    CHECK(ewh_step(50.0, q, 4.0, 0, 60.0) == Approx(49.30).margin(1e-6));
}

TEST_CASE("ewh_step rejects invalid input") {
    EwhParams p;
    CHECK_THROWS_AS(ewh_step(50.0, p, -1.0, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(ewh_step(std::nan(""), p, 0.0, 0, 1.0), std::invalid_argument);
}

TEST_CASE("thermostat hysteresis switches at band edges and holds inside") {
    Ensemble ens;
    ens.acs.push_back(ac_nominal());  // band [22, 23]
    EwhParams w;                      // band [48, 52]
    ens.ewhs.push_back(w);
    EnsembleState st;
    st.ac_temps = {23.1};
    st.ewh_temps = {47.9};
    st.statuses = {0, 0};

    thermostat_step(st, ens);
    CHECK(st.statuses[0] == 1);  // AC above band -> ON
    CHECK(st.statuses[1] == 1);  // EWH below band -> ON

    st.ac_temps = {22.5};
    st.ewh_temps = {50.0};
    st.statuses = {0, 0};
    thermostat_step(st, ens);
    CHECK(st.statuses[0] == 0);  // hold inside the band
    CHECK(st.statuses[1] == 0);

    st.ac_temps = {22.0};
    st.ewh_temps = {52.0};
    st.statuses = {1, 1};
    thermostat_step(st, ens);
    CHECK(st.statuses[0] == 0);  // AC at lower edge -> OFF
    CHECK(st.statuses[1] == 0);  // EWH at upper edge -> OFF
}

TEST_CASE("baseline of a single OFF AC that never reaches the band edge is zero") {
    Ensemble ens;
    ens.acs.push_back(ac_nominal());
    ens.initial.ac_temps = {22.1};
    ens.initial.statuses = {0};
    WaterDrawProfile draw;
    const BaselineResult r = compute_baseline(ens, ens.initial, draw, 60.0, 1.0);
    for (double p : r.power_kw) CHECK(p == 0.0);
    CHECK(r.power_kw.size() == 60);
    CHECK(r.ac_temps.size() == 61);
}

TEST_CASE("baseline of an AC held ON by hysteresis equals rated power") {
    Ensemble ens;
    ens.acs.push_back(ac_nominal());
    ens.initial.ac_temps = {23.0};  // at the upper edge: switches ON immediately
    ens.initial.statuses = {0};
    WaterDrawProfile draw;
    const BaselineResult r = compute_baseline(ens, ens.initial, draw, 60.0, 1.0);
    for (double p : r.power_kw) CHECK(p == Approx(ens.acs[0].rated_power));
}

TEST_CASE("baseline switch time matches the closed-form band crossing") {
    // OFF drift: T(t) = Ta - (Ta - T0) e^{-t/RC}; crosses 23 degC at
    // t* = RC ln((Ta-T0)/(Ta-23)) = 4 h * ln(10/9) = 1517.2 s.
    Ensemble ens;
    ens.acs.push_back(ac_nominal());
    AcParams slow = ac_nominal();
    slow.thermal_resistance = 1e6;  // second device never moves
    ens.acs.push_back(slow);
    ens.initial.ac_temps = {22.0, 22.2};
    ens.initial.statuses = {0, 0};
    WaterDrawProfile draw;
    const BaselineResult r = compute_baseline(ens, ens.initial, draw, 1600.0, 1.0);

    const double t_star = 4.0 * 3600.0 * std::log(10.0 / 9.0);
    std::size_t first_on = r.power_kw.size();
    for (std::size_t k = 0; k < r.power_kw.size(); ++k)
        if (r.power_kw[k] > 0.0) {
            first_on = k;
            break;
        }
    REQUIRE(first_on < r.power_kw.size());
    CHECK(std::abs(static_cast<double>(first_on) * 1.0 - t_star) <= 1.0 + 1e-9);
    CHECK(r.power_kw[first_on] == Approx(ens.acs[0].rated_power));
}

TEST_CASE("baseline energy equals rated power times ON time per device") {
    EnsembleSpec spec;
    spec.n_ac = 6;
    spec.n_ewh = 3;
    spec.seed = 7;
    Ensemble ens = sample_ensemble(spec);
    WaterDrawProfile draw = default_draw_profile(1800.0, 10.0);
    const BaselineResult r = compute_baseline(ens, ens.initial, draw, 1800.0, 10.0);

    double series_energy = 0.0;
    for (double p : r.power_kw) series_energy += p * hours(10.0);
    double per_device = 0.0;
    for (std::size_t i = 0; i < ens.size(); ++i) {
        std::size_t on_steps = 0;
        for (const auto& st : r.statuses) on_steps += st[i];
        per_device += ens.rated_power_of(i) * static_cast<double>(on_steps) * hours(10.0);
    }
    CHECK(series_energy == Approx(per_device).margin(1e-9));
}

TEST_CASE("thermostat-only simulation stays within the band plus one-step drift") {
    EnsembleSpec spec;
    spec.n_ac = 8;
    spec.n_ewh = 4;
    spec.seed = 3;
    Ensemble ens = sample_ensemble(spec);
    const double dt = 10.0;
    WaterDrawProfile draw = default_draw_profile(7200.0, dt);
    const BaselineResult r = compute_baseline(ens, ens.initial, draw, 7200.0, dt);

    for (std::size_t i = 0; i < ens.acs.size(); ++i) {
        const auto& p = ens.acs[i];
        // Largest per-step move in either direction.
        const double drift = ((p.ambient - p.band_low()) +
                              p.cop * p.thermal_resistance * p.rated_power) *
                             hours(dt) / (p.thermal_resistance * p.thermal_capacitance);
        for (const auto& snap : r.ac_temps) {
            CHECK(snap[i] >= p.band_low() - drift - 1e-9);
            CHECK(snap[i] <= p.band_high() + drift + 1e-9);
        }
    }
}

TEST_CASE("sample_ensemble is deterministic and honors collapsed ranges") {
    EnsembleSpec spec;
    spec.n_ac = 20;
    spec.n_ewh = 10;
    spec.seed = 42;
    const Ensemble a = sample_ensemble(spec);
    const Ensemble b = sample_ensemble(spec);
    REQUIRE(a.acs.size() == b.acs.size());
    for (std::size_t i = 0; i < a.acs.size(); ++i) {
        CHECK(a.acs[i].thermal_resistance == b.acs[i].thermal_resistance);
        CHECK(a.acs[i].rated_power == b.acs[i].rated_power);
    }
    CHECK(a.initial.ac_temps == b.initial.ac_temps);

    EnsembleSpec point = spec;
    point.ac_ranges.thermal_resistance = {2.0, 2.0};
    point.ac_ranges.thermal_capacitance = {2.0, 2.0};
    point.ac_ranges.cop = {2.5, 2.5};
    point.ac_ranges.rated_power = {5.6, 5.6};
    point.ac_ranges.setpoint = {22.5, 22.5};
    point.ac_ranges.deadband = {1.0, 1.0};
    point.n_ewh = 0;
    const Ensemble hom = sample_ensemble(point);
    for (const auto& d : hom.acs) {
        CHECK(d.thermal_resistance == 2.0);
        CHECK(d.cop == 2.5);
        CHECK(d.rated_power == 5.6);
        CHECK(d.setpoint == 22.5);
    }
}

TEST_CASE("default ranges give pairwise-distinct devices; forced distinctness errors on "
          "degenerate ranges") {
    EnsembleSpec spec;
    spec.n_ac = 100;
    spec.seed = 1;
    const Ensemble ens = sample_ensemble(spec);
    for (std::size_t i = 0; i + 1 < ens.acs.size(); ++i)
        for (std::size_t j = i + 1; j < ens.acs.size(); ++j) {
            const bool same = ens.acs[i].thermal_resistance == ens.acs[j].thermal_resistance &&
                              ens.acs[i].thermal_capacitance ==
                                  ens.acs[j].thermal_capacitance &&
                              ens.acs[i].cop == ens.acs[j].cop &&
                              ens.acs[i].rated_power == ens.acs[j].rated_power;
            CHECK_FALSE(same);
        }

    EnsembleSpec degenerate;
    degenerate.n_ac = 3;
    degenerate.require_distinct = true;
    degenerate.ac_ranges.thermal_resistance = {2.0, 2.0};
    degenerate.ac_ranges.thermal_capacitance = {2.0, 2.0};
    degenerate.ac_ranges.cop = {2.5, 2.5};
    degenerate.ac_ranges.rated_power = {5.6, 5.6};
    degenerate.ac_ranges.setpoint = {22.5, 22.5};
    degenerate.ac_ranges.deadband = {1.0, 1.0};
    CHECK_THROWS_AS(sample_ensemble(degenerate), std::invalid_argument);
}

TEST_CASE("warm start lands inside the bands with the clock reset") {
    EnsembleSpec spec;
    spec.n_ac = 10;
    spec.n_ewh = 5;
    spec.seed = 11;
    Ensemble ens = sample_ensemble(spec);
    const EnsembleState st = warm_start(ens, 3600.0, 10.0, 0.2);
    CHECK(st.time_s == 0.0);
    for (std::size_t i = 0; i < ens.acs.size(); ++i) {
        CHECK(st.ac_temps[i] >= ens.acs[i].band_low() - 0.1);
        CHECK(st.ac_temps[i] <= ens.acs[i].band_high() + 0.1);
    }
    for (std::size_t i = 0; i < ens.ewhs.size(); ++i) {
        CHECK(st.ewh_temps[i] >= ens.ewhs[i].band_low() - 0.5);
        CHECK(st.ewh_temps[i] <= ens.ewhs[i].band_high() + 0.5);
    }
}

TEST_CASE("water draw profile: event placement, extension, and mean") {
    const WaterDrawProfile p = default_draw_profile(7200.0, 10.0, 1.2);
    REQUIRE(p.lpm.size() == 720);
    CHECK(p.at(0) == 0.0);
    CHECK(p.at(180) == 1.2);   // t = 1800 s, event start
    CHECK(p.at(299) == 1.2);   // t = 2990 s, inside the 20 min event
    CHECK(p.at(300) == 0.0);   // t = 3000 s, event over
    CHECK(p.at(100000) == 0.0);  // extension holds the last value
    CHECK(p.mean() == Approx(1.2 * 120.0 / 720.0));
}

TEST_CASE("water draw profile: per-device phases preserve volume and spread events") {
    const std::size_t n = 40;
    const WaterDrawProfile p = default_draw_profile(7200.0, 10.0, 1.2, n, 1);
    REQUIRE(p.offset_steps.size() == n);
    // Wrap-around indexing shifts the event without shrinking it: every
    // device sees the same total volume as the aligned profile.
    const std::size_t steps = p.lpm.size();
    double aligned = 0.0;
    for (std::size_t k = 0; k < steps; ++k) aligned += p.at(k);
    std::size_t peak = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double shifted = 0.0;
        for (std::size_t k = 0; k < steps; ++k) shifted += p.at(i, k);
        CHECK(shifted == Approx(aligned));
    }
    for (std::size_t k = 0; k < steps; ++k) {
        std::size_t conc = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (p.at(i, k) > 0.0) ++conc;
        peak = std::max(peak, conc);
    }
    // Phases are uniform over the window, so simultaneous events stay a
    // fraction of the fleet instead of all of it.
    CHECK(peak < n);
    // Same seed gives the same phases; devices beyond the offset list fall
    // back to the aligned series.
    const WaterDrawProfile q = default_draw_profile(7200.0, 10.0, 1.2, n, 1);
    CHECK(q.offset_steps == p.offset_steps);
    CHECK(p.at(n + 3, 180) == p.at(180));
}
