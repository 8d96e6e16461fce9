#include "rmflux/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include "rmflux/errors.hpp"
#include "rmflux/rng.hpp"

namespace rmflux {

namespace {

void check_posterior_time(double t) {
    if (!(t > 0.0 && t <= 1.0)) throw DomainError("posterior mean needs t in (0, 1]; the denoiser is undefined at t = 0");
}

// Heights are not part of the static condition, so stage-1 maps use the dataset default.
constexpr double kStaticStageBsHeight = 1.5;

}  // namespace

double posterior_gain(double sigma, double t) {
    check_posterior_time(t);
    const double s2 = sigma * sigma;
    const double a = 1.0 - t;
    return a * s2 / (a * a * s2 + t);
}

void validate(const GaussianTarget& target) {
    if (!(target.sigma >= 0.0)) throw ValidationError("gaussian target: sigma must be non-negative");
    for (float v : target.mean)
        if (!std::isfinite(v)) throw ValidationError("gaussian target: mean must be finite");
}

void validate(const MixtureTarget& target) {
    if (target.components.empty()) throw ValidationError("mixture target: needs at least one component");
    const std::size_t d = target.components.front().mean.size();
    double total = 0.0;
    for (const auto& c : target.components) {
        if (!(c.weight > 0.0)) throw ValidationError("mixture target: weights must be positive");
        if (!(c.sigma >= 0.0)) throw ValidationError("mixture target: sigma must be non-negative");
        if (c.mean.size() != d) throw ValidationError("mixture target: components must share one dimension");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ValidationError("mixture target: weights must sum to 1");
}

Latent posterior_mean_gaussian(const GaussianTarget& target, const LatentState& state) {
    const double t = state.t;
    const double g = posterior_gain(target.sigma, t);
    if (state.z.size() != target.mean.size()) throw ConfigError("posterior mean: state and target dimensions differ");
    Latent out(state.z.size());
    const double a = 1.0 - t;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = target.mean[i];
        out[i] = static_cast<float>(m + g * (state.z[i] - a * m));
    }
    return out;
}

std::vector<double> mixture_responsibilities(const MixtureTarget& target, const LatentState& state) {
    const double t = state.t;
    check_posterior_time(t);
    const double a = 1.0 - t;
    const double dims = static_cast<double>(state.z.size());
    std::vector<double> logw(target.components.size());
    for (std::size_t k = 0; k < logw.size(); ++k) {
        const auto& c = target.components[k];
        if (c.mean.size() != state.z.size()) throw ConfigError("mixture: state and component dimensions differ");
        const double var = a * a * c.sigma * c.sigma + t;
        double sq = 0.0;
        for (std::size_t i = 0; i < c.mean.size(); ++i) {
            const double d = state.z[i] - a * c.mean[i];
            sq += d * d;
        }
        logw[k] = std::log(c.weight) - 0.5 * dims * std::log(var) - 0.5 * sq / var;
    }
    const double peak = *std::max_element(logw.begin(), logw.end());
    double total = 0.0;
    for (auto& v : logw) {
        v = std::exp(v - peak);
        total += v;
    }
    for (auto& v : logw) v /= total;
    return logw;
}

Latent posterior_mean_mixture(const MixtureTarget& target, const LatentState& state) {
    if (target.components.size() == 1)
        return posterior_mean_gaussian(GaussianTarget{target.components[0].mean, target.components[0].sigma}, state);
    const auto resp = mixture_responsibilities(target, state);
    std::vector<double> acc(state.z.size(), 0.0);
    const double a = 1.0 - state.t;
    for (std::size_t k = 0; k < resp.size(); ++k) {
        const auto& c = target.components[k];
        const double g = posterior_gain(c.sigma, state.t);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            const double m = c.mean[i];
            acc[i] += resp[k] * (m + g * (state.z[i] - a * m));
        }
    }
    return Latent(acc.begin(), acc.end());
}

GaussianDenoiser::GaussianDenoiser(GaussianTarget target) : target_(std::move(target)) { validate(target_); }

MixtureDenoiser::MixtureDenoiser(MixtureTarget target) : target_(std::move(target)) { validate(target_); }

ConditionalOracle::ConditionalOracle(double sigma_target, int latent_factor)
    : sigma_target_(sigma_target), latent_factor_(latent_factor) {
    if (!(sigma_target >= 0.0)) throw ConfigError("conditional oracle: sigma_target must be non-negative");
    if (latent_factor <= 0) throw ConfigError("conditional oracle: latent factor must be positive");
}

GaussianTarget ConditionalOracle::condition_to_target(const EnvironmentScene& scene) const {
    const ConditionKey key = condition_key(scene, ConditionStage::full);
    {
        std::shared_lock lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return GaussianTarget{it->second, sigma_target_};
    }
    Latent mean = encode(simulate(scene), latent_factor_);
    std::unique_lock lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, std::move(mean));
    return GaussianTarget{it->second, sigma_target_};
}

std::size_t ConditionalOracle::simulations() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
}

StaticOracle::StaticOracle(StaticOracleOptions opts, double sigma_target, int latent_factor)
    : opts_(std::move(opts)), sigma_target_(sigma_target), latent_factor_(latent_factor) {
    if (opts_.bs_cells.empty() && opts_.bs_samples <= 0) throw ConfigError("static oracle: needs at least one BS sample");
    if (!(sigma_target >= 0.0)) throw ConfigError("static oracle: sigma_target must be non-negative");
}

std::vector<Cell> StaticOracle::bs_positions(const EnvironmentScene& scene) const {
    if (!opts_.bs_cells.empty()) return opts_.bs_cells;

    const auto occupied = static_grid(scene);
    const int n = scene.n;
    auto free_cells_in = [&](int r0, int r1, int c0, int c1) {
        std::vector<Cell> cells;
        for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c)
                if (!occupied[static_cast<std::size_t>(r) * n + c]) cells.push_back(Cell{c, r});
        return cells;
    };
    const auto all_free = free_cells_in(0, n, 0, n);
    if (all_free.empty()) throw ValidationError("static oracle: scene has no free cell");

    Rng rng(opts_.seed);
    std::vector<Cell> out;
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(opts_.bs_samples))));
    if (side * side == opts_.bs_samples && side <= n) {
        // one draw per stratum of a side x side grid; empty strata fall back to the whole map
        for (int sr = 0; sr < side; ++sr) {
            for (int sc = 0; sc < side; ++sc) {
                auto cells = free_cells_in(sr * n / side, (sr + 1) * n / side, sc * n / side, (sc + 1) * n / side);
                const auto& pool = cells.empty() ? all_free : cells;
                out.push_back(pool[rng.next_u64() % pool.size()]);
            }
        }
    } else {
        for (int i = 0; i < opts_.bs_samples; ++i) out.push_back(all_free[rng.next_u64() % all_free.size()]);
    }
    return out;
}

GaussianTarget StaticOracle::condition_to_target(const EnvironmentScene& scene) const {
    const ConditionKey key = condition_key(scene, ConditionStage::static_only);
    {
        std::shared_lock lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return GaussianTarget{it->second, sigma_target_};
    }
    EnvironmentScene layout = without_vehicles(scene);
    const auto cells = bs_positions(layout);
    std::vector<double> acc;
    for (const auto& cell : cells) {
        layout.bs = BaseStation{cell.col, cell.row, kStaticStageBsHeight};
        const Latent z = encode(simulate(layout), latent_factor_);
        if (acc.empty()) acc.assign(z.size(), 0.0);
        for (std::size_t i = 0; i < z.size(); ++i) acc[i] += z[i];
    }
    Latent mean(acc.size());
    for (std::size_t i = 0; i < acc.size(); ++i) mean[i] = static_cast<float>(acc[i] / static_cast<double>(cells.size()));
    std::unique_lock lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, std::move(mean));
    return GaussianTarget{it->second, sigma_target_};
}

}  // namespace rmflux
