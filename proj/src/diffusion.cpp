#include "rmflux/diffusion.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rmflux/errors.hpp"

namespace rmflux {

namespace {

constexpr double kGridTol = 1e-12;

void check_unit_time(double t, const char* what) {
    if (!(t >= 0.0 && t <= 1.0)) throw DomainError(std::string(what) + ": t must lie in [0, 1], got " + std::to_string(t));
}

void check_step(const LatentState& state, std::span<const float> z0_hat, double delta_t) {
    if (state.t <= 0.0) throw DomainError("reverse_step: state is already at t = 0");
    if (!(delta_t > 0.0) || delta_t > state.t) throw DomainError("reverse_step: delta_t must satisfy 0 < delta_t <= t");
    if (z0_hat.size() != state.z.size()) throw ConfigError("reverse_step: estimate dimension differs from state");
}

}  // namespace

DiffusionSchedule DiffusionSchedule::uniform(int steps) {
    if (steps <= 0) throw ConfigError("schedule needs at least one step");
    std::vector<double> t(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) t[static_cast<std::size_t>(k)] = static_cast<double>(k) / steps;
    return DiffusionSchedule(std::move(t));
}

DiffusionSchedule DiffusionSchedule::from_times(std::vector<double> ascending) {
    if (ascending.size() < 2) throw ConfigError("schedule needs at least two grid points");
    if (ascending.front() != 0.0 || ascending.back() != 1.0) throw ConfigError("schedule endpoints must be exactly 0 and 1");
    for (std::size_t k = 1; k < ascending.size(); ++k)
        if (!(ascending[k] > ascending[k - 1])) throw ConfigError("schedule times must be strictly increasing");
    return DiffusionSchedule(std::move(ascending));
}

int DiffusionSchedule::index_of(double t) const noexcept {
    for (std::size_t k = 0; k < times_.size(); ++k)
        if (std::abs(times_[k] - t) <= kGridTol) return static_cast<int>(k);
    return -1;
}

LatentState forward_sample(std::span<const float> z0, double t, Rng& rng) {
    check_unit_time(t, "forward_sample");
    LatentState out{Latent(z0.size()), t};
    const double decay = 1.0 - t;
    const double scale = std::sqrt(t);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        if (!std::isfinite(z0[i])) throw DomainError("forward_sample: z0 must be finite");
        out.z[i] = static_cast<float>(decay * z0[i] + scale * rng.normal());
    }
    return out;
}

double reverse_step_variance(double t, double delta_t) { return delta_t * (t - delta_t) / t; }

Latent reverse_step_mean(const LatentState& state, std::span<const float> z0_hat, double delta_t) {
    check_step(state, z0_hat, delta_t);
    const double t = state.t;

    const double keep = (t - delta_t) / t;
    const double pull = delta_t / t;
    Latent mean(state.z.size());
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = static_cast<float>(keep * state.z[i] + pull * z0_hat[i]);
    return mean;
}

LatentState reverse_step(const LatentState& state, std::span<const float> z0_hat, double delta_t, Rng& rng) {
    check_step(state, z0_hat, delta_t);
    const double t = state.t;

    const double keep = (t - delta_t) / t;
    const double pull = delta_t / t;
    const double sd = std::sqrt(reverse_step_variance(t, delta_t));
    LatentState next{Latent(state.z.size()), t - delta_t};
    for (std::size_t i = 0; i < next.z.size(); ++i) {
        double v = keep * state.z[i] + pull * z0_hat[i];
        // Terminal step has zero variance; skip the draw so the result is exact.
        if (sd > 0.0) v += sd * rng.normal();
        next.z[i] = static_cast<float>(v);
    }
    return next;
}

LatentState initial_noise(std::size_t dims, const Rng& trial_rng) {
    Rng rng = trial_rng.substream(kInitialNoiseStream);
    LatentState s{Latent(dims), 1.0};
    for (auto& v : s.z) v = static_cast<float>(rng.normal());
    return s;
}

Trajectory sample_until(const Denoiser& denoiser, const DiffusionSchedule& schedule, const LatentState& start,
                        double stop_t, const Rng& trial_rng) {
    if (start.z.empty()) throw ConfigError("sample: latent dimension must be positive");
    const int k_start = schedule.index_of(start.t);
    if (k_start < 0) throw ConfigError("sample: start time " + std::to_string(start.t) + " is not on the schedule grid");
    const int k_stop = schedule.index_of(stop_t);
    if (k_stop < 0) throw ConfigError("sample: stop time " + std::to_string(stop_t) + " is not on the schedule grid");
    if (k_stop > k_start) throw ConfigError("sample: stop time lies after the start time");

    Trajectory traj;
    traj.states.reserve(static_cast<std::size_t>(k_start - k_stop) + 1);
    traj.states.push_back(LatentState{start.z, schedule.time(k_start)});
    for (int k = k_start; k > k_stop; --k) {
        const LatentState& cur = traj.states.back();
        const Latent z0_hat = denoiser.denoise(cur);
        ++traj.denoiser_calls;
        Rng step_rng = trial_rng.substream(static_cast<std::uint64_t>(k));
        LatentState next = reverse_step(cur, z0_hat, schedule.gap(k), step_rng);
        next.t = schedule.time(k - 1);  // snap to the grid
        traj.states.push_back(std::move(next));
    }
    return traj;
}

Trajectory sample(const Denoiser& denoiser, const DiffusionSchedule& schedule, const LatentState& start,
                  const Rng& trial_rng) {
    return sample_until(denoiser, schedule, start, 0.0, trial_rng);
}

double diffusion_coefficient(double t) {
    check_unit_time(t, "diffusion_coefficient");
    // gamma_t = 1 - t, delta_t^2 = t  =>  g_t^2 = 1 + 2t / (1 - t)
    if (t == 1.0) return std::numeric_limits<double>::infinity();
    return std::sqrt((1.0 + t) / (1.0 - t));
}

}  // namespace rmflux
