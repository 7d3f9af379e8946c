#pragma once

// Scenario configuration: one structured record that fixes everything a
// pipeline run depends on — ensemble specification, time grid, regulation
// signal source, controller and envelope settings, fit settings, and the
// output directory. Serialized as JSON; hashed per pipeline stage so cached
// artifacts can be reused exactly when their inputs are unchanged.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "vbflex/common.hpp"
#include "vbflex/devices.hpp"
#include "vbflex/dispatch.hpp"
#include "vbflex/envelope.hpp"
#include "vbflex/fitting.hpp"

namespace vbflex {

using nlohmann::json;

struct ScenarioConfig {
    EnsembleSpec ensemble;        // default: 100 ACs, seed 1
    double horizon_s = 7200.0;    // 2 h window
    double dt_s = 10.0;           // test profile; reference profile uses 1 s
    double warmup_s = 7200.0;     // thermostat-only spin-up before the window
    double draw_event_lpm = 1.2;  // EWH draw event rate

    double gamma = 0.1;           // regulation amplitude vs mean baseline
    std::size_t n_signals = 200;
    std::string signal_source = "synth";  // "synth" | "files"
    std::vector<std::string> signal_files;
    std::uint64_t signal_seed = 1;

    // dispatch.epsilon_kw <= 0 selects the automatic tolerance:
    // epsilon_auto_frac * mean baseline power, resolved once the baseline is
    // known.
    DispatchConfig dispatch{.epsilon_kw = 0.0};
    double epsilon_auto_frac = 0.01;

    EnvelopeConfig envelope;
    FitConfig fit;
    std::string ic_mode = "analytic";  // "zero" | "analytic" | "both"
    std::string out_dir = "out";

    void validate() const {
        step_count(horizon_s, dt_s);  // throws unless divisible
        if (warmup_s > 0.0) step_count(warmup_s, dt_s);
        if (!(gamma >= 0.0)) throw std::invalid_argument("scenario: gamma must be >= 0");
        if (signal_source != "synth" && signal_source != "files")
            throw std::invalid_argument("scenario: signal_source must be synth or files");
        if (signal_source == "files" && signal_files.empty())
            throw std::invalid_argument("scenario: signal_source=files needs signal_files");
        if (ic_mode != "zero" && ic_mode != "analytic" && ic_mode != "both")
            throw std::invalid_argument("scenario: ic_mode must be zero, analytic or both");
        if (ensemble.n_ac + ensemble.n_ewh == 0)
            throw std::invalid_argument("scenario: empty ensemble");
        if (out_dir.empty()) throw std::invalid_argument("scenario: out_dir required");
        if (dispatch.epsilon_kw > 0.0) dispatch.validate();
        if (!(epsilon_auto_frac > 0.0))
            throw std::invalid_argument("scenario: epsilon_auto_frac must be > 0");
    }
};

// ---------------------------------------------------------------------------
// JSON round-trip. Readers tolerate missing fields (defaults apply) so config
// files only need to state what they change.
// ---------------------------------------------------------------------------

inline void to_json(json& j, const Range& r) { j = json{{"lo", r.lo}, {"hi", r.hi}}; }
inline void from_json(const json& j, Range& r) {
    r.lo = j.value("lo", r.lo);
    r.hi = j.value("hi", r.hi);
}

inline void to_json(json& j, const AcRanges& r) {
    j = json{{"thermal_resistance", r.thermal_resistance},
             {"thermal_capacitance", r.thermal_capacitance},
             {"cop", r.cop},
             {"rated_power", r.rated_power},
             {"setpoint", r.setpoint},
             {"deadband", r.deadband},
             {"ambient", r.ambient}};
}
inline void from_json(const json& j, AcRanges& r) {
    r.thermal_resistance = j.value("thermal_resistance", r.thermal_resistance);
    r.thermal_capacitance = j.value("thermal_capacitance", r.thermal_capacitance);
    r.cop = j.value("cop", r.cop);
    r.rated_power = j.value("rated_power", r.rated_power);
    r.setpoint = j.value("setpoint", r.setpoint);
    r.deadband = j.value("deadband", r.deadband);
    r.ambient = j.value("ambient", r.ambient);
}

inline void to_json(json& j, const EwhRanges& r) {
    j = json{{"thermal_resistance", r.thermal_resistance},
             {"thermal_capacitance", r.thermal_capacitance},
             {"efficiency", r.efficiency},
             {"rated_power", r.rated_power},
             {"setpoint", r.setpoint},
             {"deadband", r.deadband},
             {"inlet_temp", r.inlet_temp},
             {"ambient", r.ambient},
             {"tank_volume", r.tank_volume}};
}
inline void from_json(const json& j, EwhRanges& r) {
    r.thermal_resistance = j.value("thermal_resistance", r.thermal_resistance);
    r.thermal_capacitance = j.value("thermal_capacitance", r.thermal_capacitance);
    r.efficiency = j.value("efficiency", r.efficiency);
    r.rated_power = j.value("rated_power", r.rated_power);
    r.setpoint = j.value("setpoint", r.setpoint);
    r.deadband = j.value("deadband", r.deadband);
    r.inlet_temp = j.value("inlet_temp", r.inlet_temp);
    r.ambient = j.value("ambient", r.ambient);
    r.tank_volume = j.value("tank_volume", r.tank_volume);
}

inline void to_json(json& j, const EnsembleSpec& s) {
    j = json{{"n_ac", s.n_ac},
             {"n_ewh", s.n_ewh},
             {"ac_ranges", s.ac_ranges},
             {"ewh_ranges", s.ewh_ranges},
             {"seed", s.seed},
             {"require_distinct", s.require_distinct}};
}
inline void from_json(const json& j, EnsembleSpec& s) {
    s.n_ac = j.value("n_ac", s.n_ac);
    s.n_ewh = j.value("n_ewh", s.n_ewh);
    if (j.contains("ac_ranges")) j.at("ac_ranges").get_to(s.ac_ranges);
    if (j.contains("ewh_ranges")) j.at("ewh_ranges").get_to(s.ewh_ranges);
    s.seed = j.value("seed", s.seed);
    s.require_distinct = j.value("require_distinct", s.require_distinct);
}

inline void to_json(json& j, const DispatchConfig& c) {
    j = json{{"epsilon_kw", c.epsilon_kw},
             {"w1", c.w1},
             {"w2", c.w2},
             {"penalty_weight", c.penalty_weight},
             {"max_iterations", c.max_iterations},
             {"rounding_threshold", c.rounding_threshold}};
}
inline void from_json(const json& j, DispatchConfig& c) {
    c.epsilon_kw = j.value("epsilon_kw", c.epsilon_kw);
    c.w1 = j.value("w1", c.w1);
    c.w2 = j.value("w2", c.w2);
    c.penalty_weight = j.value("penalty_weight", c.penalty_weight);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.rounding_threshold = j.value("rounding_threshold", c.rounding_threshold);
}

inline void to_json(json& j, const EnvelopeConfig& c) {
    j = json{{"stride_s", c.stride_s},
             {"epsilon_kw", c.epsilon_kw},
             {"semantics",
              c.semantics == EnvelopeSemantics::Sustained ? "sustained" : "instantaneous"},
             {"max_doublings", c.max_doublings},
             {"enforce_monotone", c.enforce_monotone}};
}
inline void from_json(const json& j, EnvelopeConfig& c) {
    c.stride_s = j.value("stride_s", c.stride_s);
    c.epsilon_kw = j.value("epsilon_kw", c.epsilon_kw);
    const std::string sem = j.value("semantics", std::string("sustained"));
    if (sem == "sustained")
        c.semantics = EnvelopeSemantics::Sustained;
    else if (sem == "instantaneous")
        c.semantics = EnvelopeSemantics::Instantaneous;
    else
        throw std::invalid_argument("envelope semantics must be sustained or instantaneous");
    c.max_doublings = j.value("max_doublings", c.max_doublings);
    c.enforce_monotone = j.value("enforce_monotone", c.enforce_monotone);
}

inline void to_json(json& j, const FitConfig& c) {
    j = json{{"a_lo", c.a_lo},           {"a_hi", c.a_hi},
             {"c_lo", c.c_lo},           {"c_hi", c.c_hi},
             {"a_points", c.a_points},   {"c_points", c.c_points},
             {"refine_rounds", c.refine_rounds},
             {"refine_points", c.refine_points},
             {"eps_log_s", c.eps_log_s}};
}
inline void from_json(const json& j, FitConfig& c) {
    c.a_lo = j.value("a_lo", c.a_lo);
    c.a_hi = j.value("a_hi", c.a_hi);
    c.c_lo = j.value("c_lo", c.c_lo);
    c.c_hi = j.value("c_hi", c.c_hi);
    c.a_points = j.value("a_points", c.a_points);
    c.c_points = j.value("c_points", c.c_points);
    c.refine_rounds = j.value("refine_rounds", c.refine_rounds);
    c.refine_points = j.value("refine_points", c.refine_points);
    c.eps_log_s = j.value("eps_log_s", c.eps_log_s);
}

inline void to_json(json& j, const FitResult& r) {
    j = json{{"a_per_h", r.a_per_h},     {"c_kwh", r.c_kwh},
             {"x0_kwh", r.x0_kwh},       {"objective", r.objective},
             {"n_signals", r.n_signals}, {"ic_mode", r.ic_mode},
             {"saturated", r.saturated}};
}
inline void from_json(const json& j, FitResult& r) {
    r.a_per_h = j.value("a_per_h", r.a_per_h);
    r.c_kwh = j.value("c_kwh", r.c_kwh);
    r.x0_kwh = j.value("x0_kwh", r.x0_kwh);
    r.objective = j.value("objective", r.objective);
    r.n_signals = j.value("n_signals", r.n_signals);
    r.ic_mode = j.value("ic_mode", r.ic_mode);
    r.saturated = j.value("saturated", r.saturated);
}

inline void to_json(json& j, const ScenarioConfig& c) {
    j = json{{"ensemble", c.ensemble},
             {"horizon_s", c.horizon_s},
             {"dt_s", c.dt_s},
             {"warmup_s", c.warmup_s},
             {"draw_event_lpm", c.draw_event_lpm},
             {"gamma", c.gamma},
             {"n_signals", c.n_signals},
             {"signal_source", c.signal_source},
             {"signal_files", c.signal_files},
             {"signal_seed", c.signal_seed},
             {"dispatch", c.dispatch},
             {"epsilon_auto_frac", c.epsilon_auto_frac},
             {"envelope", c.envelope},
             {"fit", c.fit},
             {"ic_mode", c.ic_mode},
             {"out_dir", c.out_dir}};
}
inline void from_json(const json& j, ScenarioConfig& c) {
    if (j.contains("ensemble")) j.at("ensemble").get_to(c.ensemble);
    c.horizon_s = j.value("horizon_s", c.horizon_s);
    c.dt_s = j.value("dt_s", c.dt_s);
    c.warmup_s = j.value("warmup_s", c.warmup_s);
    c.draw_event_lpm = j.value("draw_event_lpm", c.draw_event_lpm);
    c.gamma = j.value("gamma", c.gamma);
    c.n_signals = j.value("n_signals", c.n_signals);
    c.signal_source = j.value("signal_source", c.signal_source);
    c.signal_files = j.value("signal_files", c.signal_files);
    c.signal_seed = j.value("signal_seed", c.signal_seed);
    if (j.contains("dispatch")) j.at("dispatch").get_to(c.dispatch);
    c.epsilon_auto_frac = j.value("epsilon_auto_frac", c.epsilon_auto_frac);
    if (j.contains("envelope")) j.at("envelope").get_to(c.envelope);
    if (j.contains("fit")) j.at("fit").get_to(c.fit);
    c.ic_mode = j.value("ic_mode", c.ic_mode);
    c.out_dir = j.value("out_dir", c.out_dir);
}

inline ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("scenario: cannot open " + path);
    json j;
    in >> j;
    ScenarioConfig cfg = j.get<ScenarioConfig>();
    cfg.validate();
    return cfg;
}

inline void save_scenario(const ScenarioConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("scenario: cannot write " + path);
    out << json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Stage hashing. Each stage's hash covers exactly the configuration fields
// its output depends on, chained to its parent stage, so editing e.g. the
// fit grid never invalidates a cached envelope.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

enum class Stage { Baseline, Envelope, Signals, Track, Fit, Validate, Report };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Baseline: return "baseline";
        case Stage::Envelope: return "envelope";
        case Stage::Signals: return "signals";
        case Stage::Track: return "track";
        case Stage::Fit: return "fit";
        case Stage::Validate: return "validate";
        case Stage::Report: return "report";
    }
    return "?";
}

/// Stage-specific process exit codes; 0 remains success.
inline int stage_exit_code(Stage s) { return 10 + static_cast<int>(s); }

inline std::string stage_hash(const ScenarioConfig& cfg, Stage stage) {
    json fields;
    switch (stage) {
        case Stage::Baseline:
            fields = json{{"ensemble", cfg.ensemble},
                          {"horizon_s", cfg.horizon_s},
                          {"dt_s", cfg.dt_s},
                          {"warmup_s", cfg.warmup_s},
                          {"draw_event_lpm", cfg.draw_event_lpm}};
            break;
        case Stage::Envelope:
            fields = json{{"dispatch", cfg.dispatch},
                          {"epsilon_auto_frac", cfg.epsilon_auto_frac},
                          {"envelope", cfg.envelope}};
            break;
        case Stage::Signals:
            fields = json{{"gamma", cfg.gamma},
                          {"n_signals", cfg.n_signals},
                          {"signal_source", cfg.signal_source},
                          {"signal_files", cfg.signal_files},
                          {"signal_seed", cfg.signal_seed}};
            break;
        case Stage::Track:
            fields = json::object();
            break;
        case Stage::Fit:
            fields = json{{"fit", cfg.fit}, {"ic_mode", cfg.ic_mode}};
            break;
        case Stage::Validate:
        case Stage::Report:
            fields = json::object();
            break;
    }
    std::string parent;
    if (stage != Stage::Baseline)
        parent = stage_hash(cfg, static_cast<Stage>(static_cast<int>(stage) - 1));
    const std::string canon =
        std::string(stage_name(stage)) + "|" + parent + "|" + fields.dump();
    return hash_hex(fnv1a(canon));
}

}  // namespace vbflex
