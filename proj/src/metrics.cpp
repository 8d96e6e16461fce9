#include "rmflux/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "rmflux/errors.hpp"

namespace rmflux {

namespace {

void check_same_shape(const RadioMap& a, const RadioMap& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw ConfigError("metrics: dimension mismatch " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                          std::to_string(b.rows) + "x" + std::to_string(b.cols));
    if (a.values.empty()) throw ConfigError("metrics: empty map");
}

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - c;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= total;
    return k;
}

// Separable "valid" correlation; output is (rows - w + 1) x (cols - w + 1).
std::vector<double> filter_valid(const std::vector<double>& img, int rows, int cols, const std::vector<double>& k) {
    const int w = static_cast<int>(k.size());
    const int orows = rows - w + 1, ocols = cols - w + 1;
    std::vector<double> tmp(static_cast<std::size_t>(rows) * ocols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < ocols; ++c) {
            double acc = 0.0;
            for (int i = 0; i < w; ++i) acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(r) * cols + c + i];
            tmp[static_cast<std::size_t>(r) * ocols + c] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(orows) * ocols);
    for (int r = 0; r < orows; ++r)
        for (int c = 0; c < ocols; ++c) {
            double acc = 0.0;
            for (int i = 0; i < w; ++i) acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(r + i) * ocols + c];
            out[static_cast<std::size_t>(r) * ocols + c] = acc;
        }
    return out;
}

// Combined SSIM index; identical arguments give exactly 1.
double ssim_index(double mx, double my, double vx, double vy, double cxy, double c1, double c2) {
    return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

double mse(const RadioMap& pred, const RadioMap& truth) {
    check_same_shape(pred, truth);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double e = pred.values[i] - truth.values[i];
        acc += e * e;
    }
    return acc / static_cast<double>(pred.values.size());
}

double nmse(const RadioMap& pred, const RadioMap& truth) {
    check_same_shape(pred, truth);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const double e = pred.values[i] - truth.values[i];
        num += e * e;
        den += truth.values[i] * truth.values[i];
    }
    if (den == 0.0) throw DomainError("nmse: ground truth is identically zero");
    return num / den;
}

double rmse(const RadioMap& pred, const RadioMap& truth) { return std::sqrt(mse(pred, truth)); }

double psnr_from_mse(double m, double r_max) {
    if (!(r_max > 0.0)) throw DomainError("psnr: r_max must be positive");
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(r_max * r_max / m);
}

double psnr(const RadioMap& pred, const RadioMap& truth, double r_max) { return psnr_from_mse(mse(pred, truth), r_max); }

double ssim(const RadioMap& pred, const RadioMap& truth, double r_max, const SsimOptions& opts) {
    check_same_shape(pred, truth);
    const double c1 = (opts.k1 * r_max) * (opts.k1 * r_max);
    const double c2 = (opts.k2 * r_max) * (opts.k2 * r_max);
    const int rows = pred.rows, cols = pred.cols;

    if (opts.global) {
        const double n = static_cast<double>(pred.values.size());
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < pred.values.size(); ++i) {
            mx += pred.values[i];
            my += truth.values[i];
        }
        mx /= n;
        my /= n;
        double vx = 0.0, vy = 0.0, cxy = 0.0;
        for (std::size_t i = 0; i < pred.values.size(); ++i) {
            const double dx = pred.values[i] - mx, dy = truth.values[i] - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
        return ssim_index(mx, my, vx / n, vy / n, cxy / n, c1, c2);
    }

    if (rows < opts.window || cols < opts.window)
        throw ConfigError("ssim: map " + std::to_string(rows) + "x" + std::to_string(cols) + " is smaller than the " +
                          std::to_string(opts.window) + "x" + std::to_string(opts.window) + " window");
    const auto k = gaussian_kernel(opts.window, opts.gaussian_sigma);
    const auto& x = pred.values;
    const auto& y = truth.values;
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, rows, cols, k);
    const auto my = filter_valid(y, rows, cols, k);
    const auto sxx = filter_valid(xx, rows, cols, k);
    const auto syy = filter_valid(yy, rows, cols, k);
    const auto sxy = filter_valid(xy, rows, cols, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cxy = sxy[i] - mx[i] * my[i];
        acc += ssim_index(mx[i], my[i], vx, vy, cxy, c1, c2);
    }
    return acc / static_cast<double>(mx.size());
}

MetricsReport evaluate(const RadioMap& pred, const RadioMap& truth, double r_max, const SsimOptions& opts) {
    MetricsReport r;
    r.mse = mse(pred, truth);
    r.nmse = nmse(pred, truth);
    r.rmse = std::sqrt(r.mse);
    r.psnr_db = psnr_from_mse(r.mse, r_max);
    r.ssim = ssim(pred, truth, r_max, opts);
    return r;
}

nlohmann::json to_json(const MetricsReport& m) {
    nlohmann::json j{{"mse", m.mse}, {"nmse", m.nmse}, {"rmse", m.rmse}, {"ssim", m.ssim}};
    if (std::isinf(m.psnr_db))
        j["psnr_db"] = "inf";
    else
        j["psnr_db"] = m.psnr_db;
    return j;
}

}  // namespace rmflux
