#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rmflux {

// Axis-aligned rectangle in cell coordinates covering [x, x + w) x [y, y + h);
// x indexes columns, y indexes rows.
struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool contains_cell(int col, int row) const noexcept { return col >= x && col < x + w && row >= y && row < y + h; }
    auto operator<=>(const Rect&) const = default;
};

struct BaseStation {
    int x = 0;       // column
    int y = 0;       // row
    double z = 1.5;  // antenna height in meters

    bool operator==(const BaseStation&) const = default;
};

double free_space_pl0_db(double carrier_ghz);

struct PropagationParams {
    double tx_power_dbm = 23.0;
    double carrier_ghz = 5.9;
    double pl0_db = free_space_pl0_db(5.9);
    double exponent = 2.2;
    double nlos_extra_db = 25.0;
    double vehicle_loss_db = 10.0;
    double max_pl_db = 160.0;
    double rx_height_m = 1.5;

    bool operator==(const PropagationParams&) const = default;
};

struct EnvironmentScene {
    int n = 64;
    double resolution_m = 4.0;
    std::vector<Rect> buildings;
    std::vector<Rect> vehicles;
    BaseStation bs;
    PropagationParams params;

    bool operator==(const EnvironmentScene&) const = default;
};

// Throws ValidationError naming every offending rectangle.
void validate(const EnvironmentScene& scene);

// Row-major occupancy grids, entries 0 or 1.
std::vector<std::uint8_t> static_grid(const EnvironmentScene& scene);
std::vector<std::uint8_t> dynamic_grid(const EnvironmentScene& scene);
bool inside_building(const EnvironmentScene& scene, int col, int row);

EnvironmentScene without_vehicles(EnvironmentScene scene);

// Stage tags distinguish what a cached latent was generated from.
enum class ConditionStage : std::uint8_t { full = 0, static_only = 1 };

// Canonical byte encoding: grid dims, sorted rectangles, BS quantized to
// cells (omitted for static_only along with vehicles), propagation params.
std::vector<std::uint8_t> canonical_encoding(const EnvironmentScene& scene, ConditionStage stage);

// JSON scene format: {n, resolution_m, buildings:[{x,y,w,h}], vehicles:[...], bs:{x,y,z}, params:{...}}.
// Unknown keys are rejected.
EnvironmentScene scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const EnvironmentScene& scene);
EnvironmentScene load_scene(const std::filesystem::path& path);
void save_scene(const EnvironmentScene& scene, const std::filesystem::path& path);

struct CityOptions {
    int n = 64;
    double resolution_m = 4.0;
    int buildings = 10;
    int min_side = 4;
    int max_side = 12;
    int vehicles = 0;
};

// Seeded procedural layout; the BS is placed on a free cell.
EnvironmentScene make_city(std::uint64_t seed, const CityOptions& opts = {});

}  // namespace rmflux
