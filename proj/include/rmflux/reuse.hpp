#pragma once

#include <cstdint>
#include <string>

#include "rmflux/cache.hpp"
#include "rmflux/diffusion.hpp"
#include "rmflux/oracle.hpp"
#include "rmflux/radiomap.hpp"
#include "rmflux/scene.hpp"

namespace rmflux {

enum class ReuseMode { none, vanilla, flux };

const char* mode_name(ReuseMode mode) noexcept;
ReuseMode mode_from_name(const std::string& name);

// First convolution of the condition encoder; stage 1 sees one input
// channel instead of three.
struct ConvGeometry {
    int kernel = 3;
    int c_in_full = 3;
    int c_in_static = 1;
    int c_out = 128;
    int height = 256;
    int width = 256;
};

struct ReuseConfig {
    int steps = 100;
    double reuse_ratio = 0.0;
    ReuseMode mode = ReuseMode::none;
    double lambda_tradeoff = 0.0;  // reporting weight only
    LatentDtype cache_dtype = LatentDtype::f32;
    // Treat unreadable or corrupt cache entries as misses instead of failing.
    bool allow_cache_fallback = false;
    ConvGeometry patch_embed{};
};

void validate(const ReuseConfig& config);

// Steps taken under the initial (or static) condition: floor(R * T), tolerant
// to representation error in R.
int reused_steps(const ReuseConfig& config);
// Steps executed after the switch: T - reused_steps = ceil((1 - R) * T).
int fresh_steps(const ReuseConfig& config);
// Schedule index and time of the midpoint.
int switch_index(const ReuseConfig& config);
double switch_time(const ReuseConfig& config);

struct ComplexityEstimate {
    int denoiser_calls = 0;
    std::int64_t conv_flops_saved = 0;  // 2 flops per multiply-accumulate
    double speedup_vs_full = 1.0;       // T / denoiser_calls
};

ComplexityEstimate estimate_flops_saving(const ConvGeometry& geometry);
double speedup(int steps, int denoiser_calls);

struct Generation {
    RadioMap map;            // decoded, building mask applied
    Latent latent;           // final latent
    Trajectory trajectory;   // from the first state produced or loaded
    ComplexityEstimate cost;
    bool cache_hit = false;
};

// Baseline: pure noise at t = 1 through all T steps under the scene's condition.
Generation generate_full(const ConditionalOracle& oracle, const EnvironmentScene& scene, const ReuseConfig& config,
                         const Rng& trial_rng);

// Computes the midpoint of `scene` under `denoiser` and stores it under `key`.
// Returns the trajectory of the executed segment.
Trajectory compute_midpoint(const Denoiser& denoiser, const Digest& key, std::size_t dims, const ReuseConfig& config,
                            MidpointCache& cache, const Rng& trial_rng);

// Loads (or generates and stores) the midpoint of scene_initial at
// t = 1 - R and finishes the remaining steps under scene_target.
Generation generate_vanilla_reuse(const ConditionalOracle& oracle, const EnvironmentScene& scene_initial,
                                  const EnvironmentScene& scene_target, const ReuseConfig& config, MidpointCache& cache,
                                  const Rng& trial_rng);

// Stage 1 under the static-only condition (midpoint keyed by the buildings
// alone), stage 2 under the full condition of `scene`.
Generation generate_flux(const StaticOracle& static_oracle, const ConditionalOracle& full_oracle, const EnvironmentScene& scene,
                         const ReuseConfig& config, MidpointCache& cache, const Rng& trial_rng);

Digest vanilla_midpoint_key(const EnvironmentScene& scene_initial, const ReuseConfig& config, std::size_t dims);
Digest flux_midpoint_key(const EnvironmentScene& scene, const ReuseConfig& config, std::size_t dims);

}  // namespace rmflux
