#include "rmflux/gate.hpp"

#include <algorithm>
#include <cmath>

#include "rmflux/errors.hpp"

namespace rmflux {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ConfigError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

double frobenius_sq_diff(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ConfigError("token layouts are not aligned");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc;
}

void validate(const TokenizerConfig& c) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.d_model))));
    if (c.patch_grid <= 0 || c.d_model <= 0 || side * side != c.d_model) throw ConfigError("tokenizer: d_model must be a perfect square");
    if (c.grid_n <= 0 || c.grid_n % c.patch_grid != 0 || (c.grid_n / c.patch_grid) % side != 0)
        throw ConfigError("tokenizer: grid size " + std::to_string(c.grid_n) + " must be a multiple of patch_grid * sqrt(d_model) = " +
                          std::to_string(c.patch_grid * side));
}

namespace {

void pooled_patch_tokens(const std::vector<std::uint8_t>& grid, int n, const TokenizerConfig& c, Matrix& out, int first_row) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.d_model))));
    const int patch = n / c.patch_grid;
    const int sub = patch / side;
    const double inv = 1.0 / (static_cast<double>(sub) * sub);
    for (int pr = 0; pr < c.patch_grid; ++pr)
        for (int pc = 0; pc < c.patch_grid; ++pc) {
            const int row = first_row + pr * c.patch_grid + pc;
            for (int sr = 0; sr < side; ++sr)
                for (int sc = 0; sc < side; ++sc) {
                    int count = 0;
                    for (int r = 0; r < sub; ++r)
                        for (int col = 0; col < sub; ++col) {
                            const int gr = pr * patch + sr * sub + r;
                            const int gc = pc * patch + sc * sub + col;
                            count += grid[static_cast<std::size_t>(gr) * n + gc];
                        }
                    out(row, sr * side + sc) = count * inv;
                }
        }
}

}  // namespace

ConditionTokens tokenize(const EnvironmentScene& scene, const TokenizerConfig& c) {
    validate(c);
    if (scene.n != c.grid_n)
        throw ConfigError("tokenizer expects a " + std::to_string(c.grid_n) + " grid, scene has " + std::to_string(scene.n));
    ConditionTokens t{Matrix(c.n_tokens(), c.d_model)};
    const int per_grid = c.patch_grid * c.patch_grid;
    pooled_patch_tokens(static_grid(scene), scene.n, c, t.tokens, 0);
    pooled_patch_tokens(dynamic_grid(scene), scene.n, c, t.tokens, per_grid);
    const double bs[3] = {static_cast<double>(scene.bs.x) / scene.n, static_cast<double>(scene.bs.y) / scene.n, scene.bs.z / 100.0};
    for (int j = 0; j < c.d_model; ++j) t.tokens(2 * per_grid, j) = bs[j % 3];
    return t;
}

ProjectionPair ProjectionPair::from_seed(std::uint64_t seed, int d_model, int d_k) {
    if (d_model <= 0 || d_k <= 0) throw ConfigError("projection: dimensions must be positive");
    ProjectionPair p{Matrix(d_model, d_k), Matrix(d_model, d_k), seed};
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
    Rng root(seed);
    Rng rk = root.derive(0), rv = root.derive(1);
    for (auto& v : p.w_k.data) v = scale * rk.normal();
    for (auto& v : p.w_v.data) v = scale * rv.normal();
    return p;
}

Embedding embed(const EnvironmentScene& scene, const ProjectionPair& proj, const TokenizerConfig& tokenizer) {
    if (proj.w_k.rows != tokenizer.d_model) throw ConfigError("projection input width differs from the tokenizer's d_model");
    const auto tokens = tokenize(scene, tokenizer);
    return Embedding{matmul(tokens.tokens, proj.w_k), matmul(tokens.tokens, proj.w_v)};
}

double gate_normalization(const TokenizerConfig& tokenizer, const ProjectionPair& proj) {
    return std::sqrt(static_cast<double>(tokenizer.n_tokens()) * proj.d_k());
}

double d_env(const Embedding& a, const Embedding& b) {
    const double norm = std::sqrt(static_cast<double>(a.k.rows) * a.k.cols);
    return std::sqrt(frobenius_sq_diff(a.k, b.k) + frobenius_sq_diff(a.v, b.v)) / norm;
}

double d_env(const EnvironmentScene& a, const EnvironmentScene& b, const ProjectionPair& proj, const TokenizerConfig& tokenizer) {
    return d_env(embed(a, proj, tokenizer), embed(b, proj, tokenizer));
}

double kl_theorem(std::span<const double> z_i, std::span<const double> z_j, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw DomainError("kl: t must lie in (0, 1]");
    if (z_i.size() != z_j.size()) throw ConfigError("kl: latent dimensions differ");
    double sq = 0.0;
    for (std::size_t i = 0; i < z_i.size(); ++i) {
        const double d = z_i[i] - z_j[i];
        sq += d * d;
    }
    const double a = 1.0 - t;
    return 0.5 * (a * a / t) * sq;
}

KlEstimate kl_monte_carlo(std::span<const double> z_i, std::span<const double> z_j, double t, int n_samples, Rng& rng) {
    if (!(t > 0.0 && t <= 1.0)) throw DomainError("kl: t must lie in (0, 1]");
    if (z_i.size() != z_j.size()) throw ConfigError("kl: latent dimensions differ");
    if (n_samples < 2) throw ConfigError("kl: need at least two samples");
    const double a = 1.0 - t;
    const double sd = std::sqrt(t);
    const std::size_t dims = z_i.size();
    std::vector<double> mu_p(dims), mu_q(dims);
    for (std::size_t i = 0; i < dims; ++i) {
        mu_p[i] = a * z_i[i];
        mu_q[i] = a * z_j[i];
    }
    // Identical means make every log ratio exactly zero; skip the draws.
    if (mu_p == mu_q) return KlEstimate{0.0, 0.0};
    // Welford running mean and variance of the per-sample log ratio
    double mean = 0.0, m2 = 0.0;
    std::vector<double> eps(dims);
    for (int s = 0; s < n_samples; ++s) {
        rng.fill_normal(eps);
        double to_q = 0.0, to_p = 0.0;
        for (std::size_t i = 0; i < dims; ++i) {
            const double x = mu_p[i] + sd * eps[i];
            const double dq = x - mu_q[i], dp = x - mu_p[i];
            to_q += dq * dq;
            to_p += dp * dp;
        }
        const double log_ratio = (to_q - to_p) / (2.0 * t);
        const double delta = log_ratio - mean;
        mean += delta / (s + 1);
        m2 += delta * (log_ratio - mean);
    }
    const double var = m2 / (n_samples - 1);
    return KlEstimate{mean, std::sqrt(var / n_samples)};
}

GateConfig calibrate_tau(std::vector<CalibrationPoint> points, double budget, double normalization) {
    if (points.empty()) throw ConfigError("calibrate_tau: no calibration pairs");
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.d_env < b.d_env; });
    GateConfig gate{0.0, normalization};
    std::size_t i = 0;
    while (i < points.size()) {
        // a tie group is admitted or rejected as a whole
        std::size_t j = i;
        bool within = true;
        while (j < points.size() && points[j].d_env == points[i].d_env) within &= points[j++].nmse_increase <= budget;
        if (!within) break;
        gate.tau = points[i].d_env;
        i = j;
    }
    return gate;
}

nlohmann::json calibration_report(const std::vector<CalibrationPoint>& points, const GateConfig& gate, double budget) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points)
        pts.push_back({{"d_env", p.d_env}, {"nmse_increase", p.nmse_increase}, {"admitted", gate.admits(p.d_env)}});
    return nlohmann::json{{"budget", budget}, {"tau", gate.tau}, {"normalization", gate.normalization}, {"points", pts}};
}

}  // namespace rmflux
