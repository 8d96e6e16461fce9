#pragma once

#include <nlohmann/json.hpp>

#include "rmflux/radiomap.hpp"

namespace rmflux {

struct MetricsReport {
    double mse = 0.0;
    double nmse = 0.0;
    double rmse = 0.0;
    double psnr_db = 0.0;  // +infinity when mse == 0
    double ssim = 1.0;
};

double mse(const RadioMap& pred, const RadioMap& truth);
// Normalized by the power of `truth`; not symmetric.
double nmse(const RadioMap& pred, const RadioMap& truth);
double rmse(const RadioMap& pred, const RadioMap& truth);
double psnr(const RadioMap& pred, const RadioMap& truth, double r_max = 1.0);
double psnr_from_mse(double mse, double r_max = 1.0);

struct SsimOptions {
    int window = 11;
    double gaussian_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    // Single global window over the whole map instead of sliding windows.
    bool global = false;
};

// Mean SSIM over all fully contained windows.
double ssim(const RadioMap& pred, const RadioMap& truth, double r_max = 1.0, const SsimOptions& opts = {});

MetricsReport evaluate(const RadioMap& pred, const RadioMap& truth, double r_max = 1.0, const SsimOptions& opts = {});

// Keys {mse, nmse, rmse, psnr_db, ssim}; infinite PSNR is written as "inf".
nlohmann::json to_json(const MetricsReport& m);

}  // namespace rmflux
