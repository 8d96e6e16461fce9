#include "rmflux/reuse.hpp"

#include <cmath>
#include <limits>

#include "rmflux/errors.hpp"

namespace rmflux {

namespace {

constexpr double kRatioTol = 1e-9;

std::array<std::uint32_t, 3> latent_dims(std::size_t d) {
    const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(d))));
    if (static_cast<std::size_t>(side) * side == d) return {side, side, 1};
    return {static_cast<std::uint32_t>(d), 1, 1};
}

void require_mode(const ReuseConfig& config, ReuseMode mode, const char* op) {
    validate(config);
    if (config.mode != mode) throw ConfigError(std::string(op) + ": config.mode must be " + mode_name(mode));
    if (mode != ReuseMode::none && !(config.reuse_ratio > 0.0)) throw ConfigError(std::string(op) + ": reuse ratio must be positive");
}

ComplexityEstimate cost_of(const ReuseConfig& config, int calls) {
    ComplexityEstimate c;
    c.denoiser_calls = calls;
    c.speedup_vs_full = speedup(config.steps, calls);
    return c;
}

// Loads the midpoint, or returns nullopt on a miss (or on a cache failure when fallback is allowed).
std::optional<LatentState> load_midpoint(MidpointCache& cache, const Digest& key, const ReuseConfig& config, std::size_t dims) {
    try {
        auto rec = cache.try_get(key);
        if (!rec) return std::nullopt;
        Latent z = rec->latent();
        if (z.size() != dims) throw IntegrityError("midpoint " + to_hex(key) + ": stored latent has the wrong dimension");
        return LatentState{std::move(z), switch_time(config)};
    } catch (const IntegrityError&) {
        if (!config.allow_cache_fallback) throw;
    } catch (const CacheIoError&) {
        if (!config.allow_cache_fallback) throw;
    }
    return std::nullopt;
}

Generation finish(const Denoiser& stage2, const LatentState& midpoint, Trajectory stage1, bool hit, const EnvironmentScene& scene,
                  int factor, const ReuseConfig& config, const Rng& trial_rng) {
    const auto schedule = DiffusionSchedule::uniform(config.steps);
    Trajectory tail = sample(stage2, schedule, midpoint, trial_rng);
    Generation g;
    g.cache_hit = hit;
    g.trajectory = std::move(stage1);
    if (g.trajectory.states.empty()) {
        g.trajectory = std::move(tail);
    } else {
        // the midpoint is both the last stage-1 state and the first stage-2 state
        g.trajectory.states.insert(g.trajectory.states.end(), std::make_move_iterator(tail.states.begin() + 1),
                                   std::make_move_iterator(tail.states.end()));
        g.trajectory.denoiser_calls += tail.denoiser_calls;
    }
    g.latent = g.trajectory.final_state().z;
    g.map = decode(g.latent, scene.n, factor);
    apply_building_mask(g.map, scene);
    g.cost = cost_of(config, g.trajectory.denoiser_calls);
    return g;
}

}  // namespace

const char* mode_name(ReuseMode mode) noexcept {
    switch (mode) {
        case ReuseMode::none: return "none";
        case ReuseMode::vanilla: return "vanilla";
        case ReuseMode::flux: return "flux";
    }
    return "?";
}

ReuseMode mode_from_name(const std::string& name) {
    if (name == "none") return ReuseMode::none;
    if (name == "vanilla") return ReuseMode::vanilla;
    if (name == "flux") return ReuseMode::flux;
    throw ValidationError("unknown reuse mode '" + name + "' (expected none, vanilla or flux)");
}

void validate(const ReuseConfig& c) {
    if (c.steps <= 0) throw ConfigError("reuse config: T must be positive");
    if (!(c.reuse_ratio >= 0.0 && c.reuse_ratio < 1.0)) throw ConfigError("reuse config: R_reuse must lie in [0, 1)");
    if (c.mode == ReuseMode::none && c.reuse_ratio != 0.0) throw ConfigError("reuse config: mode none requires R_reuse = 0");
    if (!(c.lambda_tradeoff >= 0.0)) throw ConfigError("reuse config: lambda must be non-negative");
}

int reused_steps(const ReuseConfig& c) {
    validate(c);
    return static_cast<int>(std::floor(c.reuse_ratio * c.steps + kRatioTol));
}

int fresh_steps(const ReuseConfig& c) { return c.steps - reused_steps(c); }

int switch_index(const ReuseConfig& c) { return c.steps - reused_steps(c); }

double switch_time(const ReuseConfig& c) { return DiffusionSchedule::uniform(c.steps).time(switch_index(c)); }

double speedup(int steps, int calls) {
    if (calls <= 0) return std::numeric_limits<double>::infinity();
    return static_cast<double>(steps) / calls;
}

ComplexityEstimate estimate_flops_saving(const ConvGeometry& g) {
    if (g.kernel <= 0 || g.c_in_full <= 0 || g.c_in_static <= 0 || g.c_out <= 0 || g.height <= 0 || g.width <= 0)
        throw ConfigError("estimate_flops_saving: all dimensions must be positive");
    ComplexityEstimate c;
    c.conv_flops_saved = 2LL * g.kernel * g.kernel * (g.c_in_full - g.c_in_static) * g.c_out * g.height * g.width;
    return c;
}

Digest vanilla_midpoint_key(const EnvironmentScene& scene_initial, const ReuseConfig& config, std::size_t dims) {
    return midpoint_key(scene_initial, ConditionStage::full, config.steps, switch_index(config), dims);
}

Digest flux_midpoint_key(const EnvironmentScene& scene, const ReuseConfig& config, std::size_t dims) {
    return midpoint_key(scene, ConditionStage::static_only, config.steps, switch_index(config), dims);
}

Generation generate_full(const ConditionalOracle& oracle, const EnvironmentScene& scene, const ReuseConfig& config,
                         const Rng& trial_rng) {
    require_mode(config, ReuseMode::none, "generate_full");
    const auto den = oracle.denoiser_for(scene);
    const auto schedule = DiffusionSchedule::uniform(config.steps);
    const LatentState start = initial_noise(den.target().mean.size(), trial_rng);
    Generation g;
    g.trajectory = sample(den, schedule, start, trial_rng);
    g.latent = g.trajectory.final_state().z;
    g.map = decode(g.latent, scene.n, oracle.latent_factor());
    apply_building_mask(g.map, scene);
    g.cost = cost_of(config, g.trajectory.denoiser_calls);
    return g;
}

Trajectory compute_midpoint(const Denoiser& denoiser, const Digest& key, std::size_t dims, const ReuseConfig& config,
                            MidpointCache& cache, const Rng& trial_rng) {
    const auto schedule = DiffusionSchedule::uniform(config.steps);
    const LatentState start = initial_noise(dims, trial_rng);
    Trajectory seg = sample_until(denoiser, schedule, start, switch_time(config), trial_rng);
    try {
        cache.put(make_record(key, switch_time(config), latent_dims(dims), seg.final_state().z, config.cache_dtype));
    } catch (const CacheIoError&) {
        if (!config.allow_cache_fallback) throw;
    }
    return seg;
}

Generation generate_vanilla_reuse(const ConditionalOracle& oracle, const EnvironmentScene& scene_initial,
                                  const EnvironmentScene& scene_target, const ReuseConfig& config, MidpointCache& cache,
                                  const Rng& trial_rng) {
    require_mode(config, ReuseMode::vanilla, "generate_vanilla_reuse");
    if (scene_initial.n != scene_target.n) throw ConfigError("generate_vanilla_reuse: scenes have different grid sizes");
    const auto target_den = oracle.denoiser_for(scene_target);
    const std::size_t dims = target_den.target().mean.size();
    const Digest key = vanilla_midpoint_key(scene_initial, config, dims);

    if (auto mid = load_midpoint(cache, key, config, dims))
        return finish(target_den, *mid, Trajectory{}, true, scene_target, oracle.latent_factor(), config, trial_rng);

    const auto initial_den = oracle.denoiser_for(scene_initial);
    Trajectory seg = compute_midpoint(initial_den, key, dims, config, cache, trial_rng);
    const LatentState mid = seg.final_state();
    return finish(target_den, mid, std::move(seg), false, scene_target, oracle.latent_factor(), config, trial_rng);
}

Generation generate_flux(const StaticOracle& static_oracle, const ConditionalOracle& full_oracle, const EnvironmentScene& scene,
                         const ReuseConfig& config, MidpointCache& cache, const Rng& trial_rng) {
    require_mode(config, ReuseMode::flux, "generate_flux");
    const auto full_den = full_oracle.denoiser_for(scene);
    const std::size_t dims = full_den.target().mean.size();
    const Digest key = flux_midpoint_key(scene, config, dims);

    if (auto mid = load_midpoint(cache, key, config, dims))
        return finish(full_den, *mid, Trajectory{}, true, scene, full_oracle.latent_factor(), config, trial_rng);

    const auto static_den = static_oracle.denoiser_for(scene);
    if (static_den.target().mean.size() != dims) throw ConfigError("generate_flux: static and full oracles use different latent sizes");
    Trajectory seg = compute_midpoint(static_den, key, dims, config, cache, trial_rng);
    const LatentState mid = seg.final_state();
    Generation g = finish(full_den, mid, std::move(seg), false, scene, full_oracle.latent_factor(), config, trial_rng);
    // the static condition was encoded with a single input channel
    g.cost.conv_flops_saved = estimate_flops_saving(config.patch_embed).conv_flops_saved;
    return g;
}

}  // namespace rmflux
