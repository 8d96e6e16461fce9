// rmflux command-line front end. Reports go to stdout unless -o is given.
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rmflux/cache.hpp"
#include "rmflux/errors.hpp"
#include "rmflux/gate.hpp"
#include "rmflux/harness.hpp"
#include "rmflux/metrics.hpp"
#include "rmflux/radiomap.hpp"
#include "rmflux/reuse.hpp"

using namespace rmflux;
using nlohmann::json;

namespace {

void emit(const json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream f(out);
    if (!f) throw ValidationError("cannot write " + out);
    f << j.dump(2) << "\n";
}

void write_text(const std::string& text, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write " + path);
    f << text;
}

RasterDtype raster_dtype(const std::string& name) {
    if (name == "f32") return RasterDtype::f32;
    if (name == "f16") return RasterDtype::f16;
    throw ValidationError("dtype must be f32 or f16");
}

json scene_pairs_json(const std::vector<ScenePair>& pairs) {
    json arr = json::array();
    for (const auto& p : pairs) arr.push_back({{"a", scene_to_json(p.a)}, {"b", scene_to_json(p.b)}});
    return arr;
}

void make_corpus(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "scenes");
    std::filesystem::create_directories(dir / "scenarios");
    const auto c = canonical_scenes();
    const std::pair<const char*, const EnvironmentScene*> scenes[] = {
        {"base", &c.base}, {"bs_moved", &c.bs_moved}, {"dynamic", &c.dynamic}, {"other_env", &c.other_env}};
    json digests;
    for (const auto& [name, scene] : scenes) {
        save_scene(*scene, dir / "scenes" / (std::string(name) + ".json"));
        digests[name] = {{"full", to_hex(condition_key(*scene, ConditionStage::full))},
                         {"static", to_hex(condition_key(*scene, ConditionStage::static_only))}};
    }
    emit(digests, (dir / "scenes" / "digests.json").string());

    const std::tuple<const char*, ScenarioKind, ReuseMode, const char*> specs[] = {
        {"scenario1_bs_move", ScenarioKind::bs_move, ReuseMode::vanilla, "bs_moved"},
        {"scenario1_bs_move_flux", ScenarioKind::bs_move, ReuseMode::flux, "bs_moved"},
        {"scenario2_static_to_dynamic", ScenarioKind::static_to_dynamic, ReuseMode::vanilla, "dynamic"},
        {"scenario3_env_change", ScenarioKind::env_change, ReuseMode::vanilla, "other_env"}};
    for (const auto& [file, kind, mode, target] : specs) {
        json j = scenario_to_json(canonical_scenario(kind, mode));
        j["scene_initial"] = "../scenes/base.json";
        j["scene_target"] = std::string("../scenes/") + target + ".json";
        emit(j, (dir / "scenarios" / (std::string(file) + ".json")).string());
    }
    emit(json{{"R", 0.98}, {"T", 100}, {"trials", 10}, {"seed", 0}, {"proj_seed", 42}, {"pairs", scene_pairs_json(synthetic_pairs(2024, 20))}},
         (dir / "calibration_pairs.json").string());
}

int run(int argc, char** argv) {
    CLI::App app{"Diffusion midpoint reuse for radio-map generation"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Simulate the ground-truth radio map of a scene");
    std::string sim_scene, sim_out, sim_csv, sim_dtype = "f32";
    sim->add_option("scene", sim_scene, "Scene JSON")->required();
    sim->add_option("-o,--output", sim_out, "RMB1 raster output")->required();
    sim->add_option("--csv", sim_csv, "Also write a CSV copy");
    sim->add_option("--dtype", sim_dtype, "f32 or f16");

    // sample
    auto* smp = app.add_subcommand("sample", "Full generation from pure noise and its metrics against the simulator");
    std::string smp_scene, smp_out;
    int smp_steps = 100;
    std::uint64_t smp_seed = 0;
    double smp_sigma = kDefaultSigmaTarget;
    bool smp_global = false;
    smp->add_option("--scene", smp_scene, "Scene JSON")->required();
    smp->add_option("--T", smp_steps, "Reverse steps");
    smp->add_option("--seed", smp_seed, "Seed");
    smp->add_option("--sigma-target", smp_sigma, "Oracle target std");
    smp->add_option("-o,--output", smp_out, "RMB1 raster of the generated map");
    smp->add_flag("--ssim-global", smp_global, "Global SSIM instead of sliding windows");

    // reuse-sweep
    auto* sweep = app.add_subcommand("reuse-sweep", "Run a scenario sweep over reuse ratios");
    std::string sweep_spec, sweep_out, sweep_csv;
    bool sweep_timing = false, sweep_trials_col = false;
    std::optional<int> sweep_trials;
    std::optional<std::uint64_t> sweep_seed;
    sweep->add_option("--spec", sweep_spec, "Scenario JSON")->required();
    sweep->add_option("-o,--output", sweep_out, "Report JSON");
    sweep->add_option("--csv", sweep_csv, "Flattened table");
    sweep->add_option("--trials", sweep_trials, "Override trials");
    sweep->add_option("--seed", sweep_seed, "Override master seed");
    sweep->add_flag("--timing", sweep_timing, "Include wall-clock per trial (breaks byte-identity)");
    sweep->add_flag("--per-trial", sweep_trials_col, "Include per-trial NMSE");

    // kl-check
    auto* kl = app.add_subcommand("kl-check", "Analytic versus Monte-Carlo KL, plus the convergence curve");
    KlCheckOptions kl_opts;
    std::string kl_out, kl_a, kl_b;
    kl->add_option("--dims", kl_opts.dims, "Latent dimensions")->expected(1, -1);
    kl->add_option("--cases", kl_opts.cases, "Random pairs per dimension");
    kl->add_option("--samples", kl_opts.samples, "Monte-Carlo samples (>= 1e4)");
    kl->add_option("--seed", kl_opts.seed, "Seed");
    kl->add_option("--scene-a", kl_a, "Curve scene A (default: corpus base)");
    kl->add_option("--scene-b", kl_b, "Curve scene B (default: corpus BS-moved)");
    kl->add_option("-o,--output", kl_out, "Report JSON");

    // calibrate-tau
    auto* cal = app.add_subcommand("calibrate-tau", "Calibrate the reuse gate threshold");
    std::string cal_pairs, cal_out;
    double cal_budget = 0.0;
    std::optional<std::uint64_t> cal_proj;
    cal->add_option("--pairs", cal_pairs, "Pairs JSON")->required();
    cal->add_option("--budget", cal_budget, "Max NMSE increase")->required();
    cal->add_option("--proj-seed", cal_proj, "Projection seed");
    cal->add_option("-o,--output", cal_out, "Report JSON");

    // cache
    auto* cache = app.add_subcommand("cache", "Inspect or modify a midpoint cache directory");
    cache->require_subcommand(1);
    std::string cache_dir, cache_key, cache_scene, cache_mode = "vanilla", cache_dtype = "f32";
    std::size_t cache_cap = 100;
    int cache_steps = 100;
    double cache_ratio = 0.98;
    std::uint64_t cache_seed = 0;
    cache->add_option("--dir", cache_dir, "Cache directory")->required();
    cache->add_option("--capacity", cache_cap, "LRU capacity");
    auto* c_ls = cache->add_subcommand("ls", "List records, most recent first");
    auto* c_put = cache->add_subcommand("put", "Compute a scene's midpoint and store it");
    c_put->add_option("--scene", cache_scene, "Scene JSON")->required();
    c_put->add_option("--T", cache_steps, "Reverse steps");
    c_put->add_option("--R", cache_ratio, "Reuse ratio");
    c_put->add_option("--seed", cache_seed, "Trial seed");
    c_put->add_option("--mode", cache_mode, "vanilla (full condition) or flux (static only)");
    c_put->add_option("--dtype", cache_dtype, "f32 or f16");
    auto* c_get = cache->add_subcommand("get", "Verify a record and print its metadata");
    c_get->add_option("--key", cache_key, "Hex key")->required();
    auto* c_evict = cache->add_subcommand("evict", "Evict the least recently used record, or --key");
    c_evict->add_option("--key", cache_key, "Hex key");

    // flops
    auto* fl = app.add_subcommand("flops", "FLOPs saved by the single-channel static stem");
    ConvGeometry geo;
    int hw = 256;
    fl->add_option("--k", geo.kernel, "Kernel size");
    fl->add_option("--cin", geo.c_in_full, "Full input channels");
    fl->add_option("--cin-static", geo.c_in_static, "Static input channels");
    fl->add_option("--cout", geo.c_out, "Output channels");
    fl->add_option("--hw", hw, "Spatial size");

    auto* corpus = app.add_subcommand("make-corpus", "Write the procedural scene corpus");
    std::string corpus_dir = "data";
    corpus->add_option("-o,--output", corpus_dir, "Directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (*sim) {
        const auto scene = load_scene(sim_scene);
        const auto map = simulate(scene);
        write_raster(map, sim_out, raster_dtype(sim_dtype));
        if (!sim_csv.empty()) write_csv(map, sim_csv);
    } else if (*smp) {
        const auto scene = load_scene(smp_scene);
        ReuseConfig cfg;
        cfg.steps = smp_steps;
        const ConditionalOracle oracle(smp_sigma);
        const auto g = generate_full(oracle, scene, cfg, Rng(smp_seed));
        SsimOptions so;
        so.global = smp_global;
        if (!smp_out.empty()) write_raster(g.map, smp_out);
        emit(json{{"denoiser_calls", g.cost.denoiser_calls}, {"speedup", g.cost.speedup_vs_full},
                  {"metrics", to_json(evaluate(g.map, simulate(scene), 1.0, so))}},
             "");
    } else if (*sweep) {
        auto spec = load_scenario(sweep_spec);
        if (sweep_trials) spec.trials = *sweep_trials;
        if (sweep_seed) spec.master_seed = *sweep_seed;
        const auto report = run_scenario(spec);
        emit(to_json(report, SweepOptions{sweep_timing, sweep_trials_col}), sweep_out);
        if (!sweep_csv.empty()) write_text(to_csv(report), sweep_csv);
    } else if (*kl) {
        const auto c = canonical_scenes();
        const auto a = kl_a.empty() ? c.base : load_scene(kl_a);
        const auto b = kl_b.empty() ? c.bs_moved : load_scene(kl_b);
        const auto report = run_kl_check(kl_opts, a, b);
        emit(to_json(report), kl_out);
    } else if (*cal) {
        CalibrationOptions opts;
        const auto pairs = load_pairs(cal_pairs, &opts);
        if (cal_proj) opts.proj_seed = *cal_proj;
        const auto res = run_calibration(pairs, cal_budget, opts);
        json j = calibration_report(res.points, res.gate, res.budget);
        j["proj_seed"] = opts.proj_seed;
        j["R"] = opts.reuse_ratio;
        emit(j, cal_out);
    } else if (*cache) {
        MidpointCache store(cache_cap, std::filesystem::path(cache_dir));
        if (*c_ls) {
            json arr = json::array();
            for (const auto& k : store.keys()) arr.push_back(record_metadata(*store.try_get(k)));
            emit(arr, "");
        } else if (*c_put) {
            const auto scene = load_scene(cache_scene);
            ReuseConfig cfg;
            cfg.steps = cache_steps;
            cfg.reuse_ratio = cache_ratio;
            cfg.mode = mode_from_name(cache_mode);
            cfg.cache_dtype = dtype_from_name(cache_dtype);
            const ConditionalOracle oracle;
            const std::size_t dims = oracle.condition_to_target(scene).mean.size();
            Digest key;
            if (cfg.mode == ReuseMode::flux) {
                key = flux_midpoint_key(scene, cfg, dims);
                compute_midpoint(StaticOracle().denoiser_for(scene), key, dims, cfg, store, Rng(cache_seed));
            } else if (cfg.mode == ReuseMode::vanilla) {
                key = vanilla_midpoint_key(scene, cfg, dims);
                compute_midpoint(oracle.denoiser_for(scene), key, dims, cfg, store, Rng(cache_seed));
            } else {
                throw ValidationError("cache put: mode must be vanilla or flux");
            }
            emit(record_metadata(store.get(key)), "");
        } else if (*c_get) {
            emit(record_metadata(store.get(digest_from_hex(cache_key))), "");
        } else if (*c_evict) {
            if (cache_key.empty()) {
                const auto k = store.evict();
                emit(json{{"evicted", k ? json(to_hex(*k)) : json(nullptr)}}, "");
            } else {
                const Digest k = digest_from_hex(cache_key);
                if (!store.erase(k)) throw NotFoundError("no record " + cache_key);
                emit(json{{"evicted", cache_key}}, "");
            }
        }
    } else if (*fl) {
        geo.height = geo.width = hw;
        const auto est = estimate_flops_saving(geo);
        emit(json{{"conv_flops_saved", est.conv_flops_saved}, {"mflops", est.conv_flops_saved / 1e6}}, "");
    } else if (*corpus) {
        make_corpus(corpus_dir);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const DomainError& e) {
        std::fprintf(stderr, "domain error: %s\n", e.what());
        return 2;
    } catch (const IntegrityError& e) {
        std::fprintf(stderr, "integrity error: %s\n", e.what());
        return 3;
    } catch (const NotFoundError& e) {
        std::fprintf(stderr, "not found: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
