#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vbflex/pipeline.hpp"
#include "vbflex/scenario.hpp"

using namespace vbflex;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "vbflex_pipe_test" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small scenario that runs the whole pipeline in well under a second.
ScenarioConfig small_scenario(const std::string& out_dir) {
    ScenarioConfig cfg;
    cfg.ensemble.n_ac = 15;
    cfg.ensemble.seed = 2;
    cfg.horizon_s = 1200.0;
    cfg.dt_s = 10.0;
    cfg.warmup_s = 1200.0;
    cfg.gamma = 0.05;
    cfg.n_signals = 5;
    cfg.dispatch.epsilon_kw = 2.0;  // explicit: 15 devices are too coarse for 1%
    cfg.envelope.stride_s = 600.0;
    cfg.envelope.epsilon_kw = 0.5;
    cfg.ic_mode = "both";
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("pipeline produces the full artifact tree") {
    const auto cfg = small_scenario(fresh_dir("full"));
    Pipeline pipe(cfg);
    const RunReport rep = pipe.run(Stage::Report);

    REQUIRE(rep.artifacts.size() == 7);
    for (const auto& [stage, files] : rep.artifacts) {
        REQUIRE_FALSE(files.empty());
        for (const auto& f : files) {
            INFO(stage << " -> " << f);
            CHECK(std::filesystem::exists(pipe.path(f)));
        }
    }

    CHECK(rep.n_signals == 5);
    REQUIRE(rep.n_accepted >= 3);
    CHECK(rep.mean_baseline_kw > 0.0);
    CHECK(rep.epsilon_kw == 2.0);
    REQUIRE(rep.fits.size() == 2);  // ic_mode both: zero and analytic
    CHECK(rep.fits[0].ic_mode == "zero");
    CHECK(rep.fits[1].ic_mode == "analytic");
    CHECK(rep.fits[1].x0_kwh == Approx(pipe.analytic_x0_kwh()));
    CHECK(rep.n_tracked >= 1);
    CHECK(rep.analytic_band_kwh > 0.0);
}

TEST_CASE("second run is served from cache and report bytes do not change") {
    const auto cfg = small_scenario(fresh_dir("cache"));
    Pipeline(cfg).run(Stage::Report);
    const std::string report_path = Pipeline(cfg).path("report.json");
    const auto before = file_bytes(report_path);

    Pipeline pipe(cfg);
    const RunReport rep = pipe.run(Stage::Report);
    REQUIRE(rep.cache_hits.size() == 7);
    for (const auto& [stage, hit] : rep.cache_hits) {
        INFO(stage);
        CHECK(hit);
    }
    CHECK(file_bytes(report_path) == before);
}

TEST_CASE("forced recomputation reproduces identical artifacts") {
    const auto cfg = small_scenario(fresh_dir("force"));
    Pipeline first(cfg);
    first.run(Stage::Report);
    const auto base = file_bytes(first.path("baseline.csv"));
    const auto env = file_bytes(first.path("envelope.csv"));
    const auto fit = file_bytes(first.path("fit.json"));

    Pipeline again(cfg);
    const RunReport rep = again.run(Stage::Report, /*force=*/true);
    for (const auto& [stage, hit] : rep.cache_hits) {
        INFO(stage);
        CHECK_FALSE(hit);
    }
    CHECK(file_bytes(again.path("baseline.csv")) == base);
    CHECK(file_bytes(again.path("envelope.csv")) == env);
    CHECK(file_bytes(again.path("fit.json")) == fit);
}

TEST_CASE("two output directories receive identical artifacts") {
    auto cfg1 = small_scenario(fresh_dir("dir_a"));
    auto cfg2 = small_scenario(fresh_dir("dir_b"));
    Pipeline p1(cfg1), p2(cfg2);
    p1.run(Stage::Report);
    p2.run(Stage::Report);
    for (const char* f : {"baseline.csv", "envelope.csv", "fit.json",
                          "track/violations.csv"})
        CHECK(file_bytes(p1.path(f)) == file_bytes(p2.path(f)));
}

TEST_CASE("pipeline without signals still reports baseline and envelope") {
    auto cfg = small_scenario(fresh_dir("empty"));
    cfg.n_signals = 0;
    Pipeline pipe(cfg);
    const RunReport rep = pipe.run(Stage::Report);
    CHECK(rep.n_signals == 0);
    CHECK(rep.n_accepted == 0);
    CHECK(rep.fits.empty());
    CHECK(rep.soc_rms_kwh == -1.0);
    for (const auto& [stage, files] : rep.artifacts)
        for (const auto& f : files) CHECK(std::filesystem::exists(pipe.path(f)));

    // The empty shape survives a cached rerun.
    const RunReport rep2 = Pipeline(cfg).run(Stage::Report);
    CHECK(rep2.n_accepted == 0);
    CHECK(rep2.fits.empty());
}

TEST_CASE("track_one refuses signals outside the acceptance list") {
    auto cfg = small_scenario(fresh_dir("reject"));
    cfg.gamma = 10.0;  // deviations far beyond the envelope: everything rejected
    Pipeline pipe(cfg);
    const RunReport rep = pipe.run(Stage::Report);
    REQUIRE(rep.n_accepted == 0);
    CHECK(rep.fits.empty());

    try {
        pipe.track_one(0);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage == Stage::Track);
        CHECK_THAT(e.what(), ContainsSubstring("acceptance list"));
    }
    CHECK_THROWS_AS(pipe.track_one(99), StageError);
}

TEST_CASE("track_one tracks an accepted signal and writes its artifact") {
    const auto cfg = small_scenario(fresh_dir("track_one"));
    Pipeline pipe(cfg);
    pipe.run(Stage::Report);
    REQUIRE_FALSE(pipe.accepted().empty());
    const std::size_t idx = pipe.accepted().front();
    const TrackResult r = pipe.track_one(idx);
    CHECK(r.violation_time_s > 0.0);
    char buf[48];
    std::snprintf(buf, sizeof(buf), "track/track_%03zu.csv", idx);
    CHECK(std::filesystem::exists(pipe.path(buf)));
}

TEST_CASE("automatic dispatch tolerance resolves against the baseline mean") {
    auto cfg = small_scenario(fresh_dir("auto_eps"));
    cfg.dispatch.epsilon_kw = 0.0;
    cfg.epsilon_auto_frac = 0.02;
    Pipeline pipe(cfg);
    const RunReport rep = pipe.run(Stage::Baseline);
    CHECK(rep.epsilon_kw == Approx(0.02 * rep.mean_baseline_kw));
    CHECK(pipe.effective_dispatch().epsilon_kw == Approx(rep.epsilon_kw));
}

TEST_CASE("scenario configs round-trip through json") {
    auto cfg = small_scenario(fresh_dir("json"));
    cfg.ensemble.n_ewh = 3;
    cfg.ic_mode = "zero";
    cfg.envelope.semantics = EnvelopeSemantics::Instantaneous;
    const std::string path = cfg.out_dir + "/cfg.json";
    save_scenario(cfg, path);
    const ScenarioConfig back = load_scenario(path);
    CHECK(json(back).dump() == json(cfg).dump());

    // Partial configs fall back to defaults for everything unstated.
    const ScenarioConfig sparse = json{{"n_signals", 7}}.get<ScenarioConfig>();
    CHECK(sparse.n_signals == 7);
    CHECK(sparse.dt_s == 10.0);
    CHECK(sparse.gamma == 0.1);
    CHECK(sparse.ensemble.n_ac == 100);
}

TEST_CASE("stage hashes cover exactly their stage's inputs") {
    const ScenarioConfig base = small_scenario(fresh_dir("hash"));

    auto tweaked = base;
    tweaked.dispatch.epsilon_kw = 3.0;
    CHECK(stage_hash(base, Stage::Baseline) == stage_hash(tweaked, Stage::Baseline));
    CHECK(stage_hash(base, Stage::Envelope) != stage_hash(tweaked, Stage::Envelope));

    auto reseeded = base;
    reseeded.ensemble.seed = 99;
    CHECK(stage_hash(base, Stage::Baseline) != stage_hash(reseeded, Stage::Baseline));
    // The chain propagates upstream changes to every later stage.
    CHECK(stage_hash(base, Stage::Fit) != stage_hash(reseeded, Stage::Fit));

    auto regamma = base;
    regamma.gamma = 0.06;
    CHECK(stage_hash(base, Stage::Envelope) == stage_hash(regamma, Stage::Envelope));
    CHECK(stage_hash(base, Stage::Signals) != stage_hash(regamma, Stage::Signals));

    auto refit = base;
    refit.fit.a_points = 13;
    CHECK(stage_hash(base, Stage::Track) == stage_hash(refit, Stage::Track));
    CHECK(stage_hash(base, Stage::Fit) != stage_hash(refit, Stage::Fit));
}

TEST_CASE("changing downstream config reuses upstream caches in place") {
    auto cfg = small_scenario(fresh_dir("partial"));
    Pipeline(cfg).run(Stage::Report);

    // 0.04 rather than 0.06: the larger amplitude provokes a discreteness jam
    // whose violation time no first-order battery can reproduce, which the
    // fit stage correctly refuses to explain.
    auto changed = cfg;
    changed.gamma = 0.04;
    Pipeline pipe(changed);
    const RunReport rep = pipe.run(Stage::Report);
    CHECK(rep.cache_hits.at("baseline"));
    CHECK(rep.cache_hits.at("envelope"));
    CHECK_FALSE(rep.cache_hits.at("signals"));
    CHECK_FALSE(rep.cache_hits.at("track"));
    CHECK_FALSE(rep.cache_hits.at("fit"));
}
