// Command-line front end for the TCL-ensemble virtual-battery toolkit. Every
// subcommand reads one scenario configuration, runs the pipeline through the
// matching stage, and leaves its artifacts under the scenario's output
// directory. Exit code 0 on success, 2 for configuration problems, and a
// stage-specific code (10 + stage index) when a stage fails.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "vbflex/pipeline.hpp"
#include "vbflex/scenario.hpp"

namespace {

void print_summary(const vbflex::RunReport& r, vbflex::Stage up_to) {
    using vbflex::Stage;
    auto hit = [&](const char* s) {
        auto it = r.cache_hits.find(s);
        return it != r.cache_hits.end() && it->second ? " (cached)" : "";
    };
    std::printf("baseline: mean %.3f kW, dispatch tolerance %.3f kW%s\n",
                r.mean_baseline_kw, r.epsilon_kw, hit("baseline"));
    if (up_to < Stage::Envelope) return;
    std::printf("envelope: written%s\n", hit("envelope"));
    if (up_to < Stage::Signals) return;
    std::printf("signals: %zu generated, %zu accepted%s\n", r.n_signals, r.n_accepted,
                hit("signals"));
    if (up_to < Stage::Track) return;
    std::printf("track: %zu of %zu accepted signals tracked to the horizon%s\n",
                r.n_tracked, r.n_accepted, hit("track"));
    if (up_to < Stage::Fit) return;
    for (const auto& f : r.fits)
        std::printf("fit[%s]: a = %.6g 1/h, C = %.6g kWh, x0 = %.6g kWh, objective %.6g%s\n",
                    f.ic_mode.c_str(), f.a_per_h, f.c_kwh, f.x0_kwh, f.objective,
                    f.saturated ? " (saturated)" : "");
    if (r.fits.empty()) std::printf("fit: skipped (no accepted signals)\n");
    if (up_to < Stage::Validate) return;
    std::printf("validate: max relative error %.4g %%, SOC RMS %.4g kWh%s\n",
                r.max_rel_err_pct, r.soc_rms_kwh, hit("validate"));
    if (up_to < Stage::Report) return;
    std::printf("report: %s/report.json\n", r.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "vbflex: characterize the aggregate flexibility of an AC/EWH ensemble as a "
        "first-order virtual battery"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    bool force = false;
    app.add_option("-c,--config", config_path,
                   "scenario configuration JSON (built-in defaults when omitted)")
        ->check(CLI::ExistingFile);
    app.add_option("-o,--out", out_override, "override the scenario's output directory");
    app.add_flag("-f,--force", force, "recompute stages even when cached artifacts match");

    struct Sub {
        const char* name;
        const char* help;
        vbflex::Stage stage;
    };
    const Sub subs[] = {
        {"baseline", "thermostat-only ensemble simulation", vbflex::Stage::Baseline},
        {"envelope", "time-varying power limits by trackability search",
         vbflex::Stage::Envelope},
        {"signals", "regulation signal generation and envelope screening",
         vbflex::Stage::Signals},
        {"track", "dispatch tracking and ensemble violation times", vbflex::Stage::Track},
        {"fit", "virtual-battery parameter identification", vbflex::Stage::Fit},
        {"validate", "SOC comparison, violation scatter, evolution, error histogram",
         vbflex::Stage::Validate},
        {"report", "full pipeline plus collated report.json", vbflex::Stage::Report},
        {"all", "alias for report", vbflex::Stage::Report},
    };
    std::optional<std::size_t> track_signal_idx;
    for (const Sub& s : subs) {
        CLI::App* c = app.add_subcommand(s.name, s.help);
        if (std::string(s.name) == "track")
            c->add_option("-s,--signal", track_signal_idx,
                          "track only this signal index (must be on the acceptance list)");
    }

    CLI11_PARSE(app, argc, argv);

    try {
        vbflex::ScenarioConfig cfg;
        if (!config_path.empty()) cfg = vbflex::load_scenario(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        cfg.validate();

        const std::string chosen = app.get_subcommands().front()->get_name();
        vbflex::Stage up_to = vbflex::Stage::Report;
        for (const Sub& s : subs)
            if (chosen == s.name) up_to = s.stage;

        vbflex::Pipeline pipe(cfg);
        if (chosen == "track" && track_signal_idx) {
            const vbflex::TrackResult r = pipe.track_one(*track_signal_idx, force);
            std::printf("signal %zu: %s, violation time %.0f s\n", *track_signal_idx,
                        r.tracked_all ? "tracked to the horizon" : "dispatch infeasible",
                        r.violation_time_s);
            return 0;
        }
        const vbflex::RunReport report = pipe.run(up_to, force);
        print_summary(report, up_to);
        return 0;
    } catch (const vbflex::StageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return vbflex::stage_exit_code(e.stage);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
