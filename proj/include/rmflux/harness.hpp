#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmflux/gate.hpp"
#include "rmflux/metrics.hpp"
#include "rmflux/oracle.hpp"
#include "rmflux/reuse.hpp"
#include "rmflux/scene.hpp"

namespace rmflux {

enum class ScenarioKind { bs_move, static_to_dynamic, env_change };

const char* kind_name(ScenarioKind kind) noexcept;
ScenarioKind kind_from_name(const std::string& name);

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::bs_move;
    EnvironmentScene scene_initial;
    EnvironmentScene scene_target;
    std::vector<double> r_values = {0.1, 0.4, 0.7, 0.9, 0.95, 0.98};
    int trials = 100;
    int steps = 100;
    ReuseMode mode = ReuseMode::vanilla;
    std::uint64_t master_seed = 0;
    double lambda_tradeoff = 1e-4;
    double sigma_target = kDefaultSigmaTarget;
    int static_bs_samples = 16;
};

// Throws ValidationError naming the violated consistency rule.
void validate(const ScenarioSpec& spec);

// Scenes may be inline objects or paths relative to `base_dir`.
ScenarioSpec scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec load_scenario(const std::filesystem::path& path);

struct Stat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation
};

Stat summarize(const std::vector<double>& values);

struct SweepRow {
    double reuse_ratio = 0.0;
    Stat nmse, rmse, ssim, psnr;
    int denoiser_calls = 0;
    double speedup = 1.0;
    double objective = 0.0;  // mean nmse + lambda * calls
    int trials = 0;
    std::vector<double> trial_nmse;
    double wall_ms = 0.0;
};

struct SweepReport {
    ScenarioKind kind = ScenarioKind::bs_move;
    ReuseMode mode = ReuseMode::vanilla;
    int steps = 0;
    double lambda_tradeoff = 0.0;
    std::uint64_t master_seed = 0;
    std::vector<SweepRow> rows;  // ascending R
};

struct SweepOptions {
    bool include_timing = false;
    bool include_trials = false;
};

// Trial i at R index r draws from Rng(master_seed).derive(r).derive(i).
Rng trial_rng(std::uint64_t master_seed, std::size_t r_index, std::size_t trial);

SweepReport run_scenario(const ScenarioSpec& spec);

nlohmann::json to_json(const SweepReport& report, const SweepOptions& opts = {});
std::string to_csv(const SweepReport& report);

std::string build_tag();
std::string utc_timestamp();

struct KlCase {
    int dims = 0;
    double t = 0.0;
    double analytic = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
    bool pass = false;
};

struct CurvePoint {
    double t = 0.0;
    double nmse = 0.0;
    double kl = 0.0;
    double decay_criterion = 0.0;  // ((1-t)^2 / t) |dz|^2 / D
};

struct KlCheckReport {
    std::vector<KlCase> cases;
    double pass_rate = 0.0;
    std::vector<CurvePoint> curve;
};

struct KlCheckOptions {
    std::vector<int> dims = {2, 16, 256};
    int cases = 50;
    int samples = 100'000;
    std::vector<double> t_values = {0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
    std::uint64_t seed = 0;
    int curve_points = 51;
    int curve_noise_draws = 16;
};

// Analytic versus Monte-Carlo KL on random latent pairs (entries uniform in [0,1)).
std::vector<KlCase> kl_cases(const KlCheckOptions& opts);

// NMSE between identically-noised forward samples of the two latents on a uniform t grid.
std::vector<CurvePoint> convergence_curve(std::span<const float> z_a, std::span<const float> z_b, int points, int noise_draws,
                                          std::uint64_t seed);

KlCheckReport run_kl_check(const KlCheckOptions& opts, const EnvironmentScene& scene_a, const EnvironmentScene& scene_b);
nlohmann::json to_json(const KlCheckReport& report);

struct ScenePair {
    EnvironmentScene a;
    EnvironmentScene b;
};

struct CalibrationOptions {
    double reuse_ratio = 0.98;
    int steps = 100;
    int trials = 10;
    std::uint64_t master_seed = 0;
    std::uint64_t proj_seed = 42;
    double sigma_target = kDefaultSigmaTarget;
};

// Mean over trials of nmse(reuse a -> b) - nmse(full b), paired per seed.
double measure_reuse_loss(const ConditionalOracle& oracle, const ScenePair& pair, const CalibrationOptions& opts);

struct CalibrationResult {
    GateConfig gate;
    std::vector<CalibrationPoint> points;
    double budget = 0.0;
};

CalibrationResult run_calibration(const std::vector<ScenePair>& pairs, double budget, const CalibrationOptions& opts);

// {pairs:[{a, b}], R?, T?, trials?, seed?, proj_seed?}; scenes inline or relative paths.
std::vector<ScenePair> load_pairs(const std::filesystem::path& path, CalibrationOptions* opts = nullptr);

// Procedural corpora shipped under data/.
struct CanonicalScenes {
    EnvironmentScene base;       // BS near one corner
    EnvironmentScene bs_moved;   // same layout, BS far away
    EnvironmentScene dynamic;    // base plus vehicles
    EnvironmentScene other_env;  // different layout and BS
};

CanonicalScenes canonical_scenes();
ScenarioSpec canonical_scenario(ScenarioKind kind, ReuseMode mode = ReuseMode::vanilla);
std::vector<ScenePair> synthetic_pairs(std::uint64_t seed, int count);

}  // namespace rmflux
