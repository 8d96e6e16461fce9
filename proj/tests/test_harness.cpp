#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "rmflux/errors.hpp"
#include "rmflux/harness.hpp"

using namespace rmflux;

namespace {

const std::filesystem::path kData = RMFLUX_DATA_DIR;

ScenarioSpec quick(ScenarioKind kind, ReuseMode mode = ReuseMode::vanilla) {
    auto s = canonical_scenario(kind, mode);
    s.trials = 3;
    s.r_values = {0.98, 0.1, 0.5};
    std::sort(s.r_values.begin(), s.r_values.end());
    return s;
}

nlohmann::json without_timestamp(nlohmann::json j) {
    j["provenance"].erase("timestamp");
    return j;
}

}  // namespace

TEST_CASE("scenario consistency rules") {
    const auto c = canonical_scenes();
    auto s = canonical_scenario(ScenarioKind::bs_move);
    CHECK_NOTHROW(validate(s));
    s.scene_target = c.other_env;
    try {
        validate(s);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("H_s") != std::string::npos);
    }
    s.scene_target = c.dynamic;
    CHECK_THROWS_WITH_AS(validate(s), doctest::Contains("H_d"), ValidationError);

    auto d = canonical_scenario(ScenarioKind::static_to_dynamic);
    CHECK_NOTHROW(validate(d));
    d.scene_target.bs = c.bs_moved.bs;
    CHECK_THROWS_WITH_AS(validate(d), doctest::Contains("BS"), ValidationError);

    auto e = canonical_scenario(ScenarioKind::env_change);
    CHECK_NOTHROW(validate(e));
    e.scene_target = c.bs_moved;
    CHECK_THROWS_WITH_AS(validate(e), doctest::Contains("differ"), ValidationError);

    auto r = canonical_scenario(ScenarioKind::bs_move);
    r.r_values = {0.5, 1.0};
    CHECK_THROWS_AS(validate(r), ValidationError);
    r.r_values = {0.5};
    r.trials = 0;
    CHECK_THROWS_AS(validate(r), ValidationError);
}

TEST_CASE("scenario JSON round trip") {
    const auto s = canonical_scenario(ScenarioKind::static_to_dynamic, ReuseMode::flux);
    const auto back = scenario_from_json(scenario_to_json(s));
    CHECK(back.scene_initial == s.scene_initial);
    CHECK(back.scene_target == s.scene_target);
    CHECK(back.r_values == s.r_values);
    CHECK(back.mode == ReuseMode::flux);
    CHECK(back.kind == ScenarioKind::static_to_dynamic);
    auto j = scenario_to_json(s);
    j["surprise"] = 1;
    CHECK_THROWS_AS(scenario_from_json(j), ValidationError);
    j = scenario_to_json(s);
    j["kind"] = "teleport";
    CHECK_THROWS_AS(scenario_from_json(j), ValidationError);
}

TEST_CASE("sample statistics") {
    const auto s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(summarize({7.0}).std == 0.0);
}

TEST_CASE("sweep rows and accounting") {
    const auto spec = quick(ScenarioKind::bs_move);
    const auto rep = run_scenario(spec);
    REQUIRE(rep.rows.size() == 3);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const auto& row = rep.rows[i];
        if (i) CHECK(row.reuse_ratio > rep.rows[i - 1].reuse_ratio);
        CHECK(row.trials == 3);
        CHECK(row.trial_nmse.size() == 3);
        CHECK(row.denoiser_calls == 100 - static_cast<int>(std::lround(row.reuse_ratio * 100)));
        CHECK(row.speedup == 100.0 / row.denoiser_calls);
        CHECK(row.objective == doctest::Approx(row.nmse.mean + spec.lambda_tradeoff * row.denoiser_calls));
        CHECK(row.nmse.mean == doctest::Approx(summarize(row.trial_nmse).mean));
    }
    CHECK(rep.rows.back().speedup == 50.0);
}

TEST_CASE("reports regenerate identically") {
    auto spec = quick(ScenarioKind::static_to_dynamic);
    spec.trials = 1;
    const auto a = to_json(run_scenario(spec)), b = to_json(run_scenario(spec));
    CHECK(without_timestamp(a).dump() == without_timestamp(b).dump());
    CHECK(a.at("provenance").at("master_seed") == spec.master_seed);
    CHECK(a.at("provenance").contains("build_tag"));
    CHECK(to_csv(run_scenario(spec)) == to_csv(run_scenario(spec)));
    auto other = spec;
    other.master_seed += 1;
    CHECK(without_timestamp(to_json(run_scenario(other))).dump() != without_timestamp(a).dump());
}

TEST_CASE("CSV layout") {
    auto spec = quick(ScenarioKind::bs_move, ReuseMode::flux);
    spec.trials = 2;
    const auto csv = to_csv(run_scenario(spec));
    CHECK(csv.rfind("R,nmse_mean,nmse_std,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("env_change rejects flux") {
    auto s = canonical_scenario(ScenarioKind::env_change, ReuseMode::flux);
    CHECK_THROWS_AS(run_scenario(s), ValidationError);
}

TEST_CASE("KL cases include zero rows at t = 1") {
    KlCheckOptions o;
    o.dims = {2, 4};
    o.cases = 3;
    o.samples = 10000;
    const auto cases = kl_cases(o);
    CHECK(cases.size() == 2 * 3 * 6);
    for (const auto& k : cases) {
        if (k.t == 1.0) {
            CHECK(k.analytic == 0.0);
            CHECK(k.estimate == 0.0);
        }
    }
    o.samples = 100;
    CHECK_THROWS_AS(kl_cases(o), ConfigError);
}

TEST_CASE("convergence curve") {
    const Latent a = {0.2f, 0.4f, 0.6f, 0.8f}, b = {0.3f, 0.3f, 0.7f, 0.7f};
    const auto curve = convergence_curve(a, b, 11, 8, 1);
    REQUIRE(curve.size() == 11);
    CHECK(curve.front().t == 0.0);
    CHECK(curve.back().t == 1.0);
    CHECK(curve.back().nmse == 0.0);
    CHECK(curve.back().kl == 0.0);
    // at t = 0 the curve is the plain NMSE between the latents
    CHECK(curve.front().nmse == doctest::Approx(0.04 / (0.09 + 0.09 + 0.49 + 0.49)).epsilon(1e-6));
    for (std::size_t i = 2; i < curve.size(); ++i) CHECK(curve[i].nmse <= curve[i - 1].nmse);
}

TEST_CASE("shipped corpus matches the generator") {
    const auto c = canonical_scenes();
    CHECK(load_scene(kData / "scenes/base.json") == c.base);
    CHECK(load_scene(kData / "scenes/bs_moved.json") == c.bs_moved);
    CHECK(load_scene(kData / "scenes/dynamic.json") == c.dynamic);
    CHECK(load_scene(kData / "scenes/other_env.json") == c.other_env);
    std::ifstream in(kData / "scenes/digests.json");
    const auto digests = nlohmann::json::parse(in);
    CHECK(digests.at("base").at("full") == to_hex(condition_key(c.base, ConditionStage::full)));
    CHECK(digests.at("bs_moved").at("static") == digests.at("base").at("static"));
    CHECK(digests.at("dynamic").at("static") == digests.at("base").at("static"));
    CHECK(digests.at("other_env").at("static") != digests.at("base").at("static"));

    const auto s = load_scenario(kData / "scenarios/scenario1_bs_move.json");
    CHECK(s.scene_initial == c.base);
    CHECK(s.scene_target == c.bs_moved);
    CHECK(s.trials == 100);
}

TEST_CASE("golden d_env on corpus scenes") {
    const auto a = load_scene(kData / "scenes/base.json");
    const auto b = load_scene(kData / "scenes/bs_moved.json");
    const double d = d_env(a, b, ProjectionPair::from_seed(42));
    CHECK(std::abs(d - 0.065518085670022402) <= 1e-12 * 0.065518085670022402);
}

TEST_CASE("calibration end to end") {
    const auto pairs = load_pairs(kData / "calibration_pairs.json");
    CHECK(pairs.size() == 20);
    CalibrationOptions o;
    o.trials = 2;
    std::vector<ScenePair> few(pairs.begin(), pairs.begin() + 10);
    const auto res = run_calibration(few, 0.002, o);
    CHECK(res.points.size() == 10);
    for (const auto& p : res.points)
        if (res.gate.admits(p.d_env)) CHECK(p.nmse_increase <= 0.002);
    CHECK_THROWS_AS(run_calibration(std::vector<ScenePair>(pairs.begin(), pairs.begin() + 5), 0.002, o), ValidationError);
}

TEST_CASE("synthetic pairs are valid and seeded") {
    const auto a = synthetic_pairs(5, 8), b = synthetic_pairs(5, 8);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].a == b[i].a);
        CHECK(a[i].b == b[i].b);
        CHECK_NOTHROW(validate(a[i].b));
    }
}
