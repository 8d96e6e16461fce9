#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rmflux/rng.hpp"

namespace rmflux {

// Latents are stored in single precision; arithmetic happens in double and is
// rounded once per step. This keeps an f32 midpoint cache round-trip lossless.
using Latent = std::vector<float>;

struct LatentState {
    Latent z;
    double t = 1.0;  // 0 = data, 1 = fully decayed drift plus unit noise
};

// Exact estimate of z_0 given the current state. Implementations must be
// safe to call concurrently.
class Denoiser {
   public:
    virtual ~Denoiser() = default;
    virtual Latent denoise(const LatentState& state) const = 0;
};

// Grid t_T = 1 > ... > t_0 = 0 stored ascending: times()[k] = t_k.
class DiffusionSchedule {
   public:
    static DiffusionSchedule uniform(int steps);
    // Any strictly increasing grid from exactly 0 to exactly 1.
    static DiffusionSchedule from_times(std::vector<double> ascending);

    int steps() const noexcept { return static_cast<int>(times_.size()) - 1; }
    double time(int k) const { return times_.at(static_cast<std::size_t>(k)); }
    double gap(int k) const { return time(k) - time(k - 1); }
    const std::vector<double>& times() const noexcept { return times_; }

    // Index k with times()[k] == t up to 1e-12, or -1.
    int index_of(double t) const noexcept;

   private:
    explicit DiffusionSchedule(std::vector<double> t) : times_(std::move(t)) {}
    std::vector<double> times_;
};

struct Trajectory {
    std::vector<LatentState> states;  // strictly decreasing t
    int denoiser_calls = 0;

    const LatentState& final_state() const { return states.back(); }
};

// Substream of the trial rng used for the pure-noise start at t = 1.
inline constexpr std::uint64_t kInitialNoiseStream = 0xFFFF'FFFF'FFFF'FFFFull;

// z_t ~ Normal((1 - t) z0, t I).
LatentState forward_sample(std::span<const float> z0, double t, Rng& rng);

// z_{t - dt} ~ Normal(m, dt (t - dt) / t I) with
// m = z_t + dt z0_hat - (dt / sqrt t) eps_hat, eps_hat = (z_t - (1 - t) z0_hat) / sqrt t,
// evaluated in the equivalent form m = ((t - dt) / t) z_t + (dt / t) z0_hat so a
// full-length step reproduces z0_hat exactly.
LatentState reverse_step(const LatentState& state, std::span<const float> z0_hat, double delta_t, Rng& rng);

// Mean of reverse_step without the noise draw.
Latent reverse_step_mean(const LatentState& state, std::span<const float> z0_hat, double delta_t);
double reverse_step_variance(double t, double delta_t);

// Pure noise at t = 1 drawn from the trial rng's dedicated start substream.
LatentState initial_noise(std::size_t dims, const Rng& trial_rng);

// Runs reverse steps from start.t down to `stop_t` (both on the grid). Step
// from t_k to t_{k-1} draws from trial_rng.substream(k), so a run resumed at
// any grid point consumes exactly the noise a full run would have.
Trajectory sample_until(const Denoiser& denoiser, const DiffusionSchedule& schedule, const LatentState& start,
                        double stop_t, const Rng& trial_rng);

Trajectory sample(const Denoiser& denoiser, const DiffusionSchedule& schedule, const LatentState& start,
                  const Rng& trial_rng);

// g_t for the constant-drift instance; diagnostic only, never used by the sampler.
double diffusion_coefficient(double t);

}  // namespace rmflux
