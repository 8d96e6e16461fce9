#include "rmflux/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "rmflux/errors.hpp"

#ifndef RMFLUX_BUILD_TAG
#define RMFLUX_BUILD_TAG "unknown"
#endif

namespace rmflux {

using nlohmann::json;

const char* kind_name(ScenarioKind kind) noexcept {
    switch (kind) {
        case ScenarioKind::bs_move: return "bs_move";
        case ScenarioKind::static_to_dynamic: return "static_to_dynamic";
        case ScenarioKind::env_change: return "env_change";
    }
    return "?";
}

ScenarioKind kind_from_name(const std::string& name) {
    if (name == "bs_move") return ScenarioKind::bs_move;
    if (name == "static_to_dynamic") return ScenarioKind::static_to_dynamic;
    if (name == "env_change") return ScenarioKind::env_change;
    throw ValidationError("unknown scenario kind '" + name + "'");
}

void validate(const ScenarioSpec& s) {
    validate(s.scene_initial);
    validate(s.scene_target);
    if (s.scene_initial.n != s.scene_target.n) throw ValidationError("scenario: scenes must share the grid size");
    if (s.r_values.empty()) throw ValidationError("scenario: r_values is empty");
    for (double r : s.r_values)
        if (!(r >= 0.0 && r < 1.0)) throw ValidationError("scenario: r_values must lie in [0, 1)");
    if (s.trials <= 0) throw ValidationError("scenario: trials must be positive");
    if (s.steps <= 0) throw ValidationError("scenario: T must be positive");
    if (s.mode == ReuseMode::none) throw ValidationError("scenario: mode must be vanilla or flux");

    const bool same_static = static_grid(s.scene_initial) == static_grid(s.scene_target);
    const bool same_dynamic = dynamic_grid(s.scene_initial) == dynamic_grid(s.scene_target);
    const bool same_bs = s.scene_initial.bs == s.scene_target.bs;
    switch (s.kind) {
        case ScenarioKind::bs_move:
            if (!same_static) throw ValidationError("bs_move: scenes must share the static obstacle grid H_s");
            if (!same_dynamic) throw ValidationError("bs_move: scenes must share the dynamic obstacle grid H_d");
            break;
        case ScenarioKind::static_to_dynamic:
            if (!same_static) throw ValidationError("static_to_dynamic: scenes must share the static obstacle grid H_s");
            if (!same_bs) throw ValidationError("static_to_dynamic: scenes must share the BS position r");
            break;
        case ScenarioKind::env_change:
            if (same_static) throw ValidationError("env_change: scenes must differ in the static obstacle grid H_s");
            if (!s.scene_initial.vehicles.empty() || !s.scene_target.vehicles.empty())
                throw ValidationError("env_change: dynamic obstacles are not used in this scenario");
            if (s.mode == ReuseMode::flux) throw ValidationError("env_change: flux reuse needs a shared static layout");
            break;
    }
}

namespace {

EnvironmentScene scene_field(const json& j, const std::filesystem::path& base_dir) {
    if (j.is_string()) return load_scene(base_dir / j.get<std::string>());
    return scene_from_json(j);
}

}  // namespace

ScenarioSpec scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ValidationError("scenario must be a JSON object");
    for (const auto& [k, _] : j.items()) {
        static const char* allowed[] = {"kind",   "scene_initial", "scene_target", "r_values",     "trials",           "T",
                                        "mode",   "master_seed",   "lambda",       "sigma_target", "static_bs_samples"};
        if (std::none_of(std::begin(allowed), std::end(allowed), [&](const char* a) { return k == a; }))
            throw ValidationError("unknown key '" + k + "' in scenario");
    }
    ScenarioSpec s;
    try {
        s.kind = kind_from_name(j.at("kind").get<std::string>());
        s.scene_initial = scene_field(j.at("scene_initial"), base_dir);
        s.scene_target = scene_field(j.at("scene_target"), base_dir);
        if (j.contains("r_values")) s.r_values = j.at("r_values").get<std::vector<double>>();
        s.trials = j.value("trials", s.trials);
        s.steps = j.value("T", s.steps);
        if (j.contains("mode")) s.mode = mode_from_name(j.at("mode").get<std::string>());
        s.master_seed = j.value("master_seed", s.master_seed);
        s.lambda_tradeoff = j.value("lambda", s.lambda_tradeoff);
        s.sigma_target = j.value("sigma_target", s.sigma_target);
        s.static_bs_samples = j.value("static_bs_samples", s.static_bs_samples);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: ") + e.what());
    }
    std::sort(s.r_values.begin(), s.r_values.end());
    validate(s);
    return s;
}

json scenario_to_json(const ScenarioSpec& s) {
    return json{{"kind", kind_name(s.kind)},
                {"scene_initial", scene_to_json(s.scene_initial)},
                {"scene_target", scene_to_json(s.scene_target)},
                {"r_values", s.r_values},
                {"trials", s.trials},
                {"T", s.steps},
                {"mode", mode_name(s.mode)},
                {"master_seed", s.master_seed},
                {"lambda", s.lambda_tradeoff},
                {"sigma_target", s.sigma_target},
                {"static_bs_samples", s.static_bs_samples}};
}

ScenarioSpec load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scenario file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return scenario_from_json(j, path.parent_path());
}

Stat summarize(const std::vector<double>& v) {
    Stat s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(acc / static_cast<double>(v.size() - 1));
    }
    return s;
}

Rng trial_rng(std::uint64_t master_seed, std::size_t r_index, std::size_t trial) {
    return Rng(master_seed).derive(r_index).derive(trial);
}

SweepReport run_scenario(const ScenarioSpec& spec) {
    validate(spec);
    const ConditionalOracle oracle(spec.sigma_target);
    StaticOracleOptions sopts;
    sopts.bs_samples = spec.static_bs_samples;
    const StaticOracle static_oracle(sopts, spec.sigma_target);
    const RadioMap truth = simulate(spec.scene_target);

    SweepReport report;
    report.kind = spec.kind;
    report.mode = spec.mode;
    report.steps = spec.steps;
    report.lambda_tradeoff = spec.lambda_tradeoff;
    report.master_seed = spec.master_seed;

    for (std::size_t ri = 0; ri < spec.r_values.size(); ++ri) {
        ReuseConfig config;
        config.steps = spec.steps;
        config.reuse_ratio = spec.r_values[ri];
        config.mode = spec.mode;
        config.lambda_tradeoff = spec.lambda_tradeoff;

        SweepRow row;
        row.reuse_ratio = config.reuse_ratio;
        row.trials = spec.trials;
        std::vector<double> nmse_v, rmse_v, ssim_v, psnr_v;
        int calls = -1;
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < spec.trials; ++i) {
            const Rng rng = trial_rng(spec.master_seed, ri, static_cast<std::size_t>(i));
            // the initial scene's midpoint exists before the target request arrives
            MidpointCache cache(4);
            Generation g;
            if (spec.mode == ReuseMode::vanilla) {
                const std::size_t dims = oracle.condition_to_target(spec.scene_initial).mean.size();
                compute_midpoint(oracle.denoiser_for(spec.scene_initial), vanilla_midpoint_key(spec.scene_initial, config, dims), dims,
                                 config, cache, rng);
                g = generate_vanilla_reuse(oracle, spec.scene_initial, spec.scene_target, config, cache, rng);
            } else {
                generate_flux(static_oracle, oracle, spec.scene_initial, config, cache, rng);
                g = generate_flux(static_oracle, oracle, spec.scene_target, config, cache, rng);
            }
            if (calls >= 0 && calls != g.cost.denoiser_calls) throw std::logic_error("run_scenario: step count varies across trials");
            calls = g.cost.denoiser_calls;
            const MetricsReport m = evaluate(g.map, truth);
            nmse_v.push_back(m.nmse);
            rmse_v.push_back(m.rmse);
            ssim_v.push_back(m.ssim);
            psnr_v.push_back(m.psnr_db);
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / spec.trials;
        row.nmse = summarize(nmse_v);
        row.rmse = summarize(rmse_v);
        row.ssim = summarize(ssim_v);
        row.psnr = summarize(psnr_v);
        row.denoiser_calls = calls;
        row.speedup = speedup(spec.steps, calls);
        row.objective = row.nmse.mean + spec.lambda_tradeoff * calls;
        row.trial_nmse = std::move(nmse_v);
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string build_tag() { return RMFLUX_BUILD_TAG; }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

json to_json(const SweepReport& r, const SweepOptions& opts) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json jr{{"R", row.reuse_ratio},         {"nmse", stat_json(row.nmse)}, {"rmse", stat_json(row.rmse)},
                {"ssim", stat_json(row.ssim)},  {"psnr", stat_json(row.psnr)}, {"denoiser_calls", row.denoiser_calls},
                {"speedup", row.speedup},       {"objective", row.objective},  {"trials", row.trials}};
        if (opts.include_timing) jr["wall_ms_per_trial"] = row.wall_ms;
        if (opts.include_trials) jr["trial_nmse"] = row.trial_nmse;
        rows.push_back(std::move(jr));
    }
    return json{{"kind", kind_name(r.kind)},
                {"mode", mode_name(r.mode)},
                {"T", r.steps},
                {"lambda", r.lambda_tradeoff},
                {"rows", rows},
                {"provenance", {{"master_seed", r.master_seed}, {"build_tag", build_tag()}, {"timestamp", utc_timestamp()}}}};
}

std::string to_csv(const SweepReport& r) {
    std::ostringstream os;
    os.precision(10);
    os << "R,nmse_mean,nmse_std,rmse_mean,rmse_std,ssim_mean,ssim_std,psnr_mean,psnr_std,denoiser_calls,speedup,objective,trials\n";
    for (const auto& row : r.rows)
        os << row.reuse_ratio << ',' << row.nmse.mean << ',' << row.nmse.std << ',' << row.rmse.mean << ',' << row.rmse.std << ','
           << row.ssim.mean << ',' << row.ssim.std << ',' << row.psnr.mean << ',' << row.psnr.std << ',' << row.denoiser_calls << ','
           << row.speedup << ',' << row.objective << ',' << row.trials << '\n';
    return os.str();
}

std::vector<KlCase> kl_cases(const KlCheckOptions& opts) {
    if (opts.samples < 10'000) throw ConfigError("kl-check: n_samples must be at least 1e4");
    if (opts.cases <= 0) throw ConfigError("kl-check: cases must be positive");
    for (int d : opts.dims)
        if (d <= 0) throw ConfigError("kl-check: dims must be positive");
    const std::size_t per_pair = opts.t_values.size();
    const std::size_t pairs = opts.dims.size() * static_cast<std::size_t>(opts.cases);
    std::vector<KlCase> out(pairs * per_pair);
    const Rng root(opts.seed);

    // Every pair owns its rng and its output slots, so workers never share state.
    auto run_pair = [&](std::size_t job) {
        const std::size_t di = job / static_cast<std::size_t>(opts.cases);
        const auto c = static_cast<std::uint64_t>(job % static_cast<std::size_t>(opts.cases));
        const int d = opts.dims[di];
        Rng pair_rng = root.derive(di).derive(c);
        std::vector<double> zi(static_cast<std::size_t>(d)), zj(static_cast<std::size_t>(d));
        for (auto& v : zi) v = pair_rng.uniform();
        for (auto& v : zj) v = pair_rng.uniform();
        for (std::size_t ti = 0; ti < per_pair; ++ti) {
            const double t = opts.t_values[ti];
            Rng mc_rng = pair_rng.substream(ti + 1);
            KlCase& k = out[job * per_pair + ti];
            k.dims = d;
            k.t = t;
            k.analytic = kl_theorem(zi, zj, t);
            const auto est = kl_monte_carlo(zi, zj, t, opts.samples, mc_rng);
            k.estimate = est.estimate;
            k.std_error = est.std_error;
            k.pass = std::abs(k.analytic - k.estimate) <= 3.0 * k.std_error;
        }
    };
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t job; (job = next.fetch_add(1)) < pairs;) {
            try {
                run_pair(job);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, pairs);
    {
        std::vector<std::jthread> pool;
        for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
        worker();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

std::vector<CurvePoint> convergence_curve(std::span<const float> z_a, std::span<const float> z_b, int points, int noise_draws,
                                          std::uint64_t seed) {
    if (z_a.size() != z_b.size() || z_a.empty()) throw ConfigError("convergence curve: latents must share a positive dimension");
    if (points < 2 || noise_draws <= 0) throw ConfigError("convergence curve: needs at least two points and one noise draw");
    const std::size_t dims = z_a.size();
    std::vector<double> za(z_a.begin(), z_a.end()), zb(z_b.begin(), z_b.end());
    double dz2 = 0.0;
    for (std::size_t i = 0; i < dims; ++i) dz2 += (za[i] - zb[i]) * (za[i] - zb[i]);

    std::vector<CurvePoint> curve;
    const Rng root(seed);
    for (int p = 0; p < points; ++p) {
        const double t = static_cast<double>(p) / (points - 1);
        double acc = 0.0;
        for (int s = 0; s < noise_draws; ++s) {
            // the same noise for both scenes, reused across t
            Rng rng = root.substream(static_cast<std::uint64_t>(s));
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < dims; ++i) {
                const double eps = rng.normal();
                const double xa = (1.0 - t) * za[i] + std::sqrt(t) * eps;
                const double xb = (1.0 - t) * zb[i] + std::sqrt(t) * eps;
                num += (xa - xb) * (xa - xb);
                den += xb * xb;
            }
            acc += num / den;
        }
        CurvePoint cp;
        cp.t = t;
        cp.nmse = acc / noise_draws;
        cp.kl = t > 0.0 ? kl_theorem(za, zb, t) : std::numeric_limits<double>::infinity();
        cp.decay_criterion = t > 0.0 ? (1.0 - t) * (1.0 - t) / t * dz2 / static_cast<double>(dims) : std::numeric_limits<double>::infinity();
        curve.push_back(cp);
    }
    return curve;
}

KlCheckReport run_kl_check(const KlCheckOptions& opts, const EnvironmentScene& scene_a, const EnvironmentScene& scene_b) {
    KlCheckReport r;
    r.cases = kl_cases(opts);
    const auto passed = std::count_if(r.cases.begin(), r.cases.end(), [](const KlCase& k) { return k.pass; });
    r.pass_rate = r.cases.empty() ? 0.0 : static_cast<double>(passed) / static_cast<double>(r.cases.size());
    const auto za = encode(simulate(scene_a), kDefaultLatentFactor);
    const auto zb = encode(simulate(scene_b), kDefaultLatentFactor);
    r.curve = convergence_curve(za, zb, opts.curve_points, opts.curve_noise_draws, opts.seed);
    return r;
}

namespace {

json finite_or_string(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

}  // namespace

json to_json(const KlCheckReport& r) {
    json cases = json::array();
    for (const auto& k : r.cases)
        cases.push_back({{"dims", k.dims},
                         {"t", k.t},
                         {"analytic", k.analytic},
                         {"mc", k.estimate},
                         {"se", k.std_error},
                         {"pass", k.pass}});
    json curve = json::array();
    for (const auto& c : r.curve)
        curve.push_back({{"t", c.t}, {"nmse", c.nmse}, {"kl", finite_or_string(c.kl)}, {"decay_criterion", finite_or_string(c.decay_criterion)}});
    return json{{"cases", cases}, {"pass_rate", r.pass_rate}, {"curve", curve}};
}

double measure_reuse_loss(const ConditionalOracle& oracle, const ScenePair& pair, const CalibrationOptions& opts) {
    ReuseConfig full;
    full.steps = opts.steps;
    ReuseConfig reuse = full;
    reuse.mode = ReuseMode::vanilla;
    reuse.reuse_ratio = opts.reuse_ratio;
    const RadioMap truth = simulate(pair.b);
    double acc = 0.0;
    for (int i = 0; i < opts.trials; ++i) {
        const Rng rng = trial_rng(opts.master_seed, 0, static_cast<std::size_t>(i));
        MidpointCache cache(2);
        const double base = nmse(generate_full(oracle, pair.b, full, rng).map, truth);
        const double reused = nmse(generate_vanilla_reuse(oracle, pair.a, pair.b, reuse, cache, rng).map, truth);
        acc += reused - base;
    }
    return acc / opts.trials;
}

CalibrationResult run_calibration(const std::vector<ScenePair>& pairs, double budget, const CalibrationOptions& opts) {
    if (pairs.size() < 10) throw ValidationError("calibration needs at least 10 scene pairs, got " + std::to_string(pairs.size()));
    if (!(budget >= 0.0)) throw ValidationError("calibration budget must be non-negative");
    if (opts.trials <= 0) throw ValidationError("calibration trials must be positive");
    const ConditionalOracle oracle(opts.sigma_target);
    const auto proj = ProjectionPair::from_seed(opts.proj_seed);
    CalibrationResult res;
    res.budget = budget;
    for (const auto& p : pairs) {
        TokenizerConfig tok;
        tok.grid_n = p.a.n;
        res.points.push_back(CalibrationPoint{d_env(p.a, p.b, proj, tok), measure_reuse_loss(oracle, p, opts)});
    }
    TokenizerConfig tok;
    tok.grid_n = pairs.front().a.n;
    res.gate = calibrate_tau(res.points, budget, gate_normalization(tok, proj));
    return res;
}

std::vector<ScenePair> load_pairs(const std::filesystem::path& path, CalibrationOptions* opts) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open pairs file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("pairs")) throw ValidationError("pairs file needs a 'pairs' array");
    std::vector<ScenePair> pairs;
    try {
        for (const auto& p : j.at("pairs")) pairs.push_back(ScenePair{scene_field(p.at("a"), path.parent_path()), scene_field(p.at("b"), path.parent_path())});
        if (opts) {
            opts->reuse_ratio = j.value("R", opts->reuse_ratio);
            opts->steps = j.value("T", opts->steps);
            opts->trials = j.value("trials", opts->trials);
            opts->master_seed = j.value("seed", opts->master_seed);
            opts->proj_seed = j.value("proj_seed", opts->proj_seed);
        }
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return pairs;
}

namespace {

Cell nearest_free_cell(const EnvironmentScene& s, int col, int row) {
    Cell best{-1, -1};
    long best_d = std::numeric_limits<long>::max();
    for (int r = 0; r < s.n; ++r)
        for (int c = 0; c < s.n; ++c) {
            if (inside_building(s, c, r)) continue;
            if (std::any_of(s.vehicles.begin(), s.vehicles.end(), [&](const Rect& v) { return v.contains_cell(c, r); })) continue;
            const long d = static_cast<long>(c - col) * (c - col) + static_cast<long>(r - row) * (r - row);
            if (d < best_d) {
                best_d = d;
                best = Cell{c, r};
            }
        }
    if (best.col < 0) throw ConfigError("scene has no free cell");
    return best;
}

EnvironmentScene with_bs_near(EnvironmentScene s, int col, int row) {
    const Cell c = nearest_free_cell(s, col, row);
    s.bs.x = c.col;
    s.bs.y = c.row;
    return s;
}

EnvironmentScene with_vehicles(EnvironmentScene s, int count, std::uint64_t seed) {
    Rng rng(seed);
    const auto occupied = static_grid(s);
    for (int attempt = 0; static_cast<int>(s.vehicles.size()) < count && attempt < 10000; ++attempt) {
        const bool horizontal = rng.next_u64() & 1;
        const int w = horizontal ? 3 : 2, h = horizontal ? 2 : 3;
        const Rect v{static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(s.n - w + 1)),
                     static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(s.n - h + 1)), w, h};
        bool ok = !v.contains_cell(s.bs.x, s.bs.y);
        for (int r = v.y; r < v.y + v.h && ok; ++r)
            for (int c = v.x; c < v.x + v.w && ok; ++c) ok = !occupied[static_cast<std::size_t>(r) * s.n + c];
        if (ok) s.vehicles.push_back(v);
    }
    return s;
}

CityOptions canonical_city() {
    CityOptions o;
    o.n = 64;
    o.resolution_m = 4.0;
    o.buildings = 10;
    o.min_side = 5;
    o.max_side = 12;
    return o;
}

}  // namespace

CanonicalScenes canonical_scenes() {
    CanonicalScenes c;
    c.base = with_bs_near(make_city(7, canonical_city()), 10, 10);
    c.bs_moved = with_bs_near(c.base, 54, 54);
    c.dynamic = with_vehicles(c.base, 10, 0xD1A);
    c.other_env = with_bs_near(make_city(11, canonical_city()), 54, 54);
    for (const auto* s : {&c.base, &c.bs_moved, &c.dynamic, &c.other_env}) validate(*s);
    return c;
}

ScenarioSpec canonical_scenario(ScenarioKind kind, ReuseMode mode) {
    const auto c = canonical_scenes();
    ScenarioSpec s;
    s.kind = kind;
    s.mode = mode;
    s.scene_initial = c.base;
    switch (kind) {
        case ScenarioKind::bs_move: s.scene_target = c.bs_moved; break;
        case ScenarioKind::static_to_dynamic: s.scene_target = c.dynamic; break;
        case ScenarioKind::env_change: s.scene_target = c.other_env; break;
    }
    s.master_seed = 2024;
    return s;
}

std::vector<ScenePair> synthetic_pairs(std::uint64_t seed, int count) {
    std::vector<ScenePair> pairs;
    Rng rng(seed);
    const auto base_opts = canonical_city();
    for (int k = 0; k < count; ++k) {
        const EnvironmentScene a = with_bs_near(make_city(seed + static_cast<std::uint64_t>(k), base_opts), 16 + k, 20);
        EnvironmentScene b = a;
        switch (k % 4) {
            case 0:  // small BS shift
                b = with_bs_near(a, a.bs.x + 1 + k / 4, a.bs.y);
                break;
            case 1:  // a few vehicles
                b = with_vehicles(a, 1 + k / 4, rng.next_u64());
                break;
            case 2:  // long BS move into the far corner
                b = with_bs_near(a, a.n - 4, a.n - 4 - k / 4);
                break;
            case 3: {  // one building grows
                auto& r = b.buildings[static_cast<std::size_t>(k) % b.buildings.size()];
                r.w = std::min(r.w + 2 + k / 4, b.n - r.x);
                r.h = std::min(r.h + 2, b.n - r.y);
                if (inside_building(b, b.bs.x, b.bs.y)) b = with_bs_near(b, b.bs.x, b.bs.y);
                break;
            }
        }
        validate(b);
        pairs.push_back(ScenePair{a, b});
    }
    return pairs;
}

}  // namespace rmflux
