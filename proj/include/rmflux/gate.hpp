#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmflux/rng.hpp"
#include "rmflux/scene.hpp"

namespace rmflux {

// Dense row-major matrix, just enough for token projections.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
double frobenius_sq_diff(const Matrix& a, const Matrix& b);

// Token layout: patch_grid^2 tokens for the building grid, the same for the
// vehicle grid, then one BS token (x/n, y/n, z/100) tiled to d_model. Each
// patch token is the patch average-pooled to sqrt(d_model) x sqrt(d_model).
struct TokenizerConfig {
    int grid_n = 64;
    int patch_grid = 8;
    int d_model = 64;

    int n_tokens() const noexcept { return 2 * patch_grid * patch_grid + 1; }
};

void validate(const TokenizerConfig& config);

struct ConditionTokens {
    Matrix tokens;  // n_tokens x d_model
};

ConditionTokens tokenize(const EnvironmentScene& scene, const TokenizerConfig& config);

// Frozen projections regenerated bit-identically from the seed.
struct ProjectionPair {
    Matrix w_k;  // d_model x d_k
    Matrix w_v;
    std::uint64_t seed = 0;

    static ProjectionPair from_seed(std::uint64_t seed, int d_model = 64, int d_k = 32);
    int d_k() const noexcept { return w_k.cols; }
};

struct Embedding {
    Matrix k;
    Matrix v;
};

Embedding embed(const EnvironmentScene& scene, const ProjectionPair& proj, const TokenizerConfig& tokenizer = {});

struct GateConfig {
    double tau = 0.0;
    double normalization = 1.0;  // sqrt(n_tokens * d_k)

    bool admits(double distance) const noexcept { return distance <= tau; }
};

double gate_normalization(const TokenizerConfig& tokenizer, const ProjectionPair& proj);

// sqrt(|K_A - K_B|_F^2 + |V_A - V_B|_F^2) / sqrt(n_tokens * d_k)
double d_env(const Embedding& a, const Embedding& b);
double d_env(const EnvironmentScene& a, const EnvironmentScene& b, const ProjectionPair& proj, const TokenizerConfig& tokenizer = {});

// KL(Normal((1-t) z_i, tI) || Normal((1-t) z_j, tI)) = (1-t)^2 / (2t) |z_i - z_j|^2.
double kl_theorem(std::span<const double> z_i, std::span<const double> z_j, double t);

struct KlEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Average of log p(x) - log q(x) over x ~ p.
KlEstimate kl_monte_carlo(std::span<const double> z_i, std::span<const double> z_j, double t, int n_samples, Rng& rng);

struct CalibrationPoint {
    double d_env = 0.0;
    double nmse_increase = 0.0;
};

// Largest tau such that every point with d_env <= tau is within budget; 0 if none.
GateConfig calibrate_tau(std::vector<CalibrationPoint> points, double budget, double normalization = 1.0);

nlohmann::json calibration_report(const std::vector<CalibrationPoint>& points, const GateConfig& gate, double budget);

}  // namespace rmflux
