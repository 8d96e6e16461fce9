#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <vector>

#include "rmflux/diffusion.hpp"
#include "rmflux/digest.hpp"
#include "rmflux/radiomap.hpp"
#include "rmflux/scene.hpp"

namespace rmflux {

// Prior Normal(mean, sigma^2 I) over z_0.
struct GaussianTarget {
    Latent mean;
    double sigma = 0.0;
};

struct MixtureComponent {
    double weight = 1.0;
    Latent mean;
    double sigma = 0.0;
};

struct MixtureTarget {
    std::vector<MixtureComponent> components;
};

// E[z_0 | z_t] for the Gaussian prior under z_t ~ Normal((1 - t) z_0, t I).
Latent posterior_mean_gaussian(const GaussianTarget& target, const LatentState& state);
double posterior_gain(double sigma, double t);

// Responsibilities of each component given z_t; a probability vector.
std::vector<double> mixture_responsibilities(const MixtureTarget& target, const LatentState& state);
Latent posterior_mean_mixture(const MixtureTarget& target, const LatentState& state);

void validate(const GaussianTarget& target);
void validate(const MixtureTarget& target);

class GaussianDenoiser final : public Denoiser {
   public:
    explicit GaussianDenoiser(GaussianTarget target);
    Latent denoise(const LatentState& state) const override { return posterior_mean_gaussian(target_, state); }
    const GaussianTarget& target() const noexcept { return target_; }

   private:
    GaussianTarget target_;
};

class MixtureDenoiser final : public Denoiser {
   public:
    explicit MixtureDenoiser(MixtureTarget target);
    Latent denoise(const LatentState& state) const override { return posterior_mean_mixture(target_, state); }

   private:
    MixtureTarget target_;
};

inline constexpr double kDefaultSigmaTarget = 0.05;
inline constexpr int kDefaultLatentFactor = 4;

// Maps a scene to its target latent encode(simulate(scene)). Results are
// memoized per condition key; lookups may run concurrently with insertion.
class ConditionalOracle {
   public:
    explicit ConditionalOracle(double sigma_target = kDefaultSigmaTarget, int latent_factor = kDefaultLatentFactor);

    GaussianTarget condition_to_target(const EnvironmentScene& scene) const;
    GaussianDenoiser denoiser_for(const EnvironmentScene& scene) const { return GaussianDenoiser(condition_to_target(scene)); }

    double sigma_target() const noexcept { return sigma_target_; }
    int latent_factor() const noexcept { return latent_factor_; }
    std::size_t simulations() const;

   private:
    double sigma_target_;
    int latent_factor_;
    mutable std::shared_mutex mutex_;
    mutable std::map<ConditionKey, Latent> cache_;
};

// Static-only oracle: target is the mean latent over several BS positions in
// the scene's free space, vehicles removed. Depends on the buildings only.
struct StaticOracleOptions {
    int bs_samples = 16;
    std::uint64_t seed = 0x5EEDu;
    // Explicit BS cells override sampling when non-empty.
    std::vector<Cell> bs_cells;
};

class StaticOracle {
   public:
    explicit StaticOracle(StaticOracleOptions opts = {}, double sigma_target = kDefaultSigmaTarget,
                          int latent_factor = kDefaultLatentFactor);

    GaussianTarget condition_to_target(const EnvironmentScene& scene) const;
    GaussianDenoiser denoiser_for(const EnvironmentScene& scene) const { return GaussianDenoiser(condition_to_target(scene)); }

    // BS cells averaged over for this layout.
    std::vector<Cell> bs_positions(const EnvironmentScene& scene) const;
    const StaticOracleOptions& options() const noexcept { return opts_; }

   private:
    StaticOracleOptions opts_;
    double sigma_target_;
    int latent_factor_;
    mutable std::shared_mutex mutex_;
    mutable std::map<ConditionKey, Latent> cache_;
};

}  // namespace rmflux
