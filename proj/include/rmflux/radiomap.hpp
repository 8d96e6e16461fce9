#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rmflux/diffusion.hpp"
#include "rmflux/scene.hpp"

namespace rmflux {

// Normalized grayscale pathloss raster, row-major. Brightness grows with
// pathloss; building interiors are exactly 0.
struct RadioMap {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    RadioMap() = default;
    RadioMap(int r, int c, double fill = 0.0) : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * cols + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * cols + col]; }
};

inline constexpr double kBrightnessFloor = 0.05;

struct Blockage {
    bool static_blocked = false;
    int vehicle_crossings = 0;

    bool operator==(const Blockage&) const = default;
};

struct Cell {
    int col = 0;
    int row = 0;
};

// Segment between cell centers tested against every rectangle, exactly.
Blockage ray_blockage(const EnvironmentScene& scene, Cell from, Cell to);

// Closed-rectangle test for the segment between two points in cell units.
bool segment_hits_rect(double x0, double y0, double x1, double y1, const Rect& r);

double pathloss_db(const EnvironmentScene& scene, Cell cell);
double brightness_from_pathloss(const PropagationParams& p, double pl_db);

RadioMap simulate(const EnvironmentScene& scene);

// Average-pool by `factor`, flattened row-major: latent dimension (n / factor)^2.
Latent encode(const RadioMap& map, int factor);

// Bilinear upsampling from block centers (edge-clamped), clipped to [0, 1].
RadioMap decode(std::span<const float> latent, int n, int factor);

// Forces building cells to 0.
void apply_building_mask(RadioMap& map, const EnvironmentScene& scene);

// "RMB1" raster: magic, u32 height, u32 width, u8 dtype (0 f32, 1 f16), little-endian payload.
enum class RasterDtype : std::uint8_t { f32 = 0, f16 = 1 };
std::vector<std::uint8_t> encode_raster(const RadioMap& map, RasterDtype dtype);
RadioMap decode_raster(std::span<const std::uint8_t> bytes);
void write_raster(const RadioMap& map, const std::filesystem::path& path, RasterDtype dtype = RasterDtype::f32);
RadioMap read_raster(const std::filesystem::path& path);
void write_csv(const RadioMap& map, const std::filesystem::path& path);

}  // namespace rmflux
