#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vbflex/common.hpp"
#include "vbflex/csv.hpp"
#include "vbflex/signals.hpp"

using namespace vbflex;
using Catch::Approx;

namespace {

std::string temp_csv(const std::string& name, const std::string& content) {
    const auto dir = std::filesystem::temp_directory_path() / "vbflex_signals_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("load_normalized: constant zero file") {
    std::string body = "time_s,value\n";
    for (int t = 0; t < 10; ++t) body += std::to_string(t) + ",0\n";
    const auto sig = load_normalized(temp_csv("zeros.csv", body), 1.0);
    REQUIRE(sig.values.size() == 10);
    for (double v : sig.values) CHECK(v == 0.0);
}

TEST_CASE("load_normalized: zero-order hold resampling from 2 s to 1 s") {
    const auto path = temp_csv("zoh.csv", "time_s,value\n0,0.1\n2,0.2\n4,0.3\n");
    const auto sig = load_normalized(path, 1.0);
    REQUIRE(sig.values.size() == 6);
    CHECK(sig.values[0] == Approx(0.1));
    CHECK(sig.values[1] == Approx(0.1));
    CHECK(sig.values[2] == Approx(0.2));
    CHECK(sig.values[3] == Approx(0.2));
    CHECK(sig.values[4] == Approx(0.3));
    CHECK(sig.values[5] == Approx(0.3));
}

TEST_CASE("load_normalized: 7200 rows at 1 s spacing give a 7200 s horizon") {
    std::string body = "time_s,value\n";
    for (int t = 0; t < 7200; ++t) body += std::to_string(t) + ",0.5\n";
    const auto sig = load_normalized(temp_csv("long.csv", body), 1.0);
    CHECK(sig.horizon_s() == Approx(7200.0));
}

TEST_CASE("load_normalized rejects bad spacing and out-of-range values") {
    const auto uneven = temp_csv("uneven.csv", "time_s,value\n0,0\n1,0\n3,0\n");
    CHECK_THROWS(load_normalized(uneven, 1.0));
    const auto big = temp_csv("big.csv", "time_s,value\n0,0\n1,1.5\n");
    CHECK_THROWS(load_normalized(big, 1.0));
}

TEST_CASE("synth_normalized: deterministic per seed with exact unit peak") {
    const auto a = synth_normalized(123, 1800.0, 2.0);
    const auto b = synth_normalized(123, 1800.0, 2.0);
    CHECK(a.values == b.values);
    const auto c = synth_normalized(124, 1800.0, 2.0);
    CHECK(a.values != c.values);

    double peak = 0.0;
    for (double v : a.values) peak = std::max(peak, std::abs(v));
    CHECK(peak == 1.0);  // rescaling makes the extreme sample exactly +-1
}

TEST_CASE("synth_normalized: a 200-seed sweep stays centered") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto sig = synth_normalized(seed, 600.0, 2.0);
        double mean = 0.0;
        for (double v : sig.values) mean += v;
        mean /= static_cast<double>(sig.values.size());
        CHECK(std::abs(mean) <= 0.5);
        for (double v : sig.values) CHECK(std::abs(v) <= 1.0 + 1e-12);
    }
}

TEST_CASE("build_regulation: gamma scaling around the baseline mean") {
    const std::vector<double> base{90.0, 100.0, 110.0};  // mean 100
    NormalizedSignal ones;
    ones.dt_s = 1.0;
    ones.values = {1.0, 1.0, 1.0};

    const auto same = build_regulation(base, ones, 0.0, "g0");
    CHECK(same.values_kw == base);

    const auto up = build_regulation(base, ones, 0.1, "up");
    for (std::size_t k = 0; k < base.size(); ++k)
        CHECK(up.values_kw[k] == Approx(base[k] + 10.0).margin(1e-12));

    NormalizedSignal minus = ones;
    minus.values = {-1.0, -1.0, -1.0};
    const auto down = build_regulation(base, minus, 0.1, "down");
    for (std::size_t k = 0; k < base.size(); ++k)
        CHECK(down.values_kw[k] == Approx(base[k] - 10.0).margin(1e-12));
}

TEST_CASE("build_regulation is affine in the normalized signal") {
    Rng rng(7);
    std::vector<double> base(50);
    for (double& v : base) v = rng.uniform(50.0, 150.0);
    NormalizedSignal p1, p2, mix;
    p1.values.resize(50);
    p2.values.resize(50);
    mix.values.resize(50);
    const double alpha = 0.3;
    for (std::size_t k = 0; k < 50; ++k) {
        p1.values[k] = rng.uniform(-1.0, 1.0);
        p2.values[k] = rng.uniform(-1.0, 1.0);
        mix.values[k] = alpha * p1.values[k] + (1.0 - alpha) * p2.values[k];
    }
    const auto r1 = build_regulation(base, p1, 0.2, "p1");
    const auto r2 = build_regulation(base, p2, 0.2, "p2");
    const auto rm = build_regulation(base, mix, 0.2, "mix");
    for (std::size_t k = 0; k < 50; ++k)
        CHECK(rm.values_kw[k] ==
              Approx(alpha * r1.values_kw[k] + (1.0 - alpha) * r2.values_kw[k] -
                     (alpha + (1.0 - alpha) - 1.0) * base[k])
                  .margin(1e-9));
}

TEST_CASE("deviation subtracts the baseline pointwise") {
    const std::vector<double> base{10.0, 20.0};
    RegulationSignal reg;
    reg.values_kw = {12.5, 18.0};
    const auto u = deviation(reg, base);
    CHECK(u[0] == Approx(2.5));
    CHECK(u[1] == Approx(-2.0));
    RegulationSignal bad;
    bad.values_kw = {1.0};
    CHECK_THROWS_AS(deviation(bad, base), std::invalid_argument);
}

TEST_CASE("filter_by_envelope: strict containment of deviations") {
    const std::vector<double> base(5, 100.0);
    const std::vector<double> p_minus(5, -2.0);
    const std::vector<double> p_plus(5, 2.0);

    RegulationSignal inside;
    inside.values_kw = {100.0, 101.0, 99.0, 100.0, 102.0};
    RegulationSignal outside = inside;
    outside.values_kw[3] = 102.0 + 1e-6;  // exceeds P+ by 1e-6: rejected
    RegulationSignal flat;
    flat.values_kw = base;  // gamma = 0: deviation identically zero

    const auto acc = filter_by_envelope({inside, outside, flat}, p_minus, p_plus, base);
    CHECK(acc == std::vector<std::size_t>{0, 2});
}

TEST_CASE("filter_by_envelope returns a subset and is idempotent") {
    Rng rng(31);
    const std::vector<double> base(20, 100.0);
    std::vector<double> p_minus(20), p_plus(20);
    for (std::size_t k = 0; k < 20; ++k) {
        p_plus[k] = rng.uniform(0.0, 3.0);
        p_minus[k] = -rng.uniform(0.0, 3.0);
    }
    std::vector<RegulationSignal> sigs(30);
    for (auto& s : sigs) {
        s.values_kw.resize(20);
        for (double& v : s.values_kw) v = 100.0 + rng.uniform(-4.0, 4.0);
    }
    const auto acc = filter_by_envelope(sigs, p_minus, p_plus, base);
    for (std::size_t idx : acc) CHECK(idx < sigs.size());

    std::vector<RegulationSignal> accepted_only;
    for (std::size_t idx : acc) accepted_only.push_back(sigs[idx]);
    const auto again = filter_by_envelope(accepted_only, p_minus, p_plus, base);
    CHECK(again.size() == accepted_only.size());  // all survive a second pass
}

TEST_CASE("csv round-trips doubles exactly") {
    const auto dir = std::filesystem::temp_directory_path() / "vbflex_signals_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "roundtrip.csv").string();
    const std::vector<std::vector<double>> rows{{0.1 + 0.2, 1.0 / 3.0},
                                                {1e-17, 12345.6789012345678}};
    csv::write(path, {"a", "b"}, rows);
    const csv::Table t = csv::read(path);
    REQUIRE(t.rows.size() == 2);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 2; ++c) CHECK(t.rows[r][c] == rows[r][c]);
}
