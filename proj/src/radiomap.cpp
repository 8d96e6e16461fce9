#include "rmflux/radiomap.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rmflux/errors.hpp"
#include "rmflux/half.hpp"

namespace rmflux {

bool segment_hits_rect(double x0, double y0, double x1, double y1, const Rect& r) {
    // Liang-Barsky clipping against the closed rectangle; touching counts.
    const double dx = x1 - x0, dy = y1 - y0;
    const double p[4] = {-dx, dx, -dy, dy};
    const double q[4] = {x0 - r.x, r.x + r.w - x0, y0 - r.y, r.y + r.h - y0};
    double u0 = 0.0, u1 = 1.0;
    for (int i = 0; i < 4; ++i) {
        if (p[i] == 0.0) {
            if (q[i] < 0.0) return false;
            continue;
        }
        const double u = q[i] / p[i];
        if (p[i] < 0.0)
            u0 = std::max(u0, u);
        else
            u1 = std::min(u1, u);
        if (u0 > u1) return false;
    }
    return true;
}

Blockage ray_blockage(const EnvironmentScene& scene, Cell from, Cell to) {
    if (from.col == to.col && from.row == to.row) return {};
    const double x0 = from.col + 0.5, y0 = from.row + 0.5;
    const double x1 = to.col + 0.5, y1 = to.row + 0.5;
    Blockage b;
    for (const auto& r : scene.buildings) {
        if (segment_hits_rect(x0, y0, x1, y1, r)) {
            b.static_blocked = true;
            break;
        }
    }
    for (const auto& r : scene.vehicles)
        if (segment_hits_rect(x0, y0, x1, y1, r)) ++b.vehicle_crossings;
    return b;
}

double pathloss_db(const EnvironmentScene& scene, Cell cell) {
    const auto& p = scene.params;
    const double dc = static_cast<double>(cell.col - scene.bs.x);
    const double dr = static_cast<double>(cell.row - scene.bs.y);
    const double horizontal = scene.resolution_m * std::sqrt(dc * dc + dr * dr);
    const double dz = scene.bs.z - p.rx_height_m;
    const double d = std::sqrt(horizontal * horizontal + dz * dz);
    double pl = p.pl0_db + 10.0 * p.exponent * std::log10(std::max(d, 1.0));
    const Blockage b = ray_blockage(scene, Cell{scene.bs.x, scene.bs.y}, cell);
    if (b.static_blocked) pl += p.nlos_extra_db;
    pl += p.vehicle_loss_db * b.vehicle_crossings;
    return std::clamp(pl, p.pl0_db, p.max_pl_db);
}

double brightness_from_pathloss(const PropagationParams& p, double pl_db) {
    const double pl = std::clamp(pl_db, p.pl0_db, p.max_pl_db);
    return kBrightnessFloor + (1.0 - kBrightnessFloor) * (pl - p.pl0_db) / (p.max_pl_db - p.pl0_db);
}

RadioMap simulate(const EnvironmentScene& scene) {
    validate(scene);
    RadioMap map(scene.n, scene.n);
    const auto buildings = static_grid(scene);
    for (int row = 0; row < scene.n; ++row) {
        for (int col = 0; col < scene.n; ++col) {
            if (buildings[static_cast<std::size_t>(row) * scene.n + col]) {
                map.at(row, col) = 0.0;
                continue;
            }
            map.at(row, col) = brightness_from_pathloss(scene.params, pathloss_db(scene, Cell{col, row}));
        }
    }
    return map;
}

Latent encode(const RadioMap& map, int factor) {
    if (factor <= 0 || map.rows != map.cols || map.rows % factor != 0)
        throw ConfigError("encode: factor must divide the square map side");
    const int m = map.rows / factor;
    Latent z(static_cast<std::size_t>(m) * m);
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int br = 0; br < m; ++br) {
        for (int bc = 0; bc < m; ++bc) {
            double acc = 0.0;
            for (int r = 0; r < factor; ++r)
                for (int c = 0; c < factor; ++c) acc += map.at(br * factor + r, bc * factor + c);
            z[static_cast<std::size_t>(br) * m + bc] = static_cast<float>(acc * inv);
        }
    }
    return z;
}

RadioMap decode(std::span<const float> latent, int n, int factor) {
    if (factor <= 0 || n <= 0 || n % factor != 0) throw ConfigError("decode: factor must divide n");
    const int m = n / factor;
    if (latent.size() != static_cast<std::size_t>(m) * m)
        throw ConfigError("decode: latent dimension " + std::to_string(latent.size()) + " does not match (n / factor)^2");

    // Source coordinate of each output pixel in block units, clamped to the outermost centers.
    std::vector<int> i0(n);
    std::vector<double> frac(n);
    for (int p = 0; p < n; ++p) {
        const double pos = std::clamp((p - (factor - 1) / 2.0) / factor, 0.0, static_cast<double>(m - 1));
        i0[p] = std::min(static_cast<int>(pos), std::max(m - 2, 0));
        frac[p] = m > 1 ? pos - i0[p] : 0.0;
    }
    auto L = [&](int r, int c) { return static_cast<double>(latent[static_cast<std::size_t>(r) * m + c]); };

    RadioMap out(n, n);
    for (int row = 0; row < n; ++row) {
        const int r0 = i0[row], r1 = std::min(r0 + 1, m - 1);
        const double fr = frac[row];
        for (int col = 0; col < n; ++col) {
            const int c0 = i0[col], c1 = std::min(c0 + 1, m - 1);
            const double fc = frac[col];
            const double top = (1.0 - fc) * L(r0, c0) + fc * L(r0, c1);
            const double bot = (1.0 - fc) * L(r1, c0) + fc * L(r1, c1);
            out.at(row, col) = std::clamp((1.0 - fr) * top + fr * bot, 0.0, 1.0);
        }
    }
    return out;
}

void apply_building_mask(RadioMap& map, const EnvironmentScene& scene) {
    if (map.rows != scene.n || map.cols != scene.n) throw ConfigError("apply_building_mask: map and scene sizes differ");
    const auto g = static_grid(scene);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i]) map.values[i] = 0.0;
}

namespace {

constexpr char kRasterMagic[4] = {'R', 'M', 'B', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_raster(const RadioMap& map, RasterDtype dtype) {
    std::vector<std::uint8_t> out(std::begin(kRasterMagic), std::end(kRasterMagic));
    put_u32(out, static_cast<std::uint32_t>(map.rows));
    put_u32(out, static_cast<std::uint32_t>(map.cols));
    out.push_back(static_cast<std::uint8_t>(dtype));
    for (double v : map.values) {
        if (dtype == RasterDtype::f32) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        } else {
            const std::uint16_t h = float_to_half(static_cast<float>(v));
            out.push_back(static_cast<std::uint8_t>(h));
            out.push_back(static_cast<std::uint8_t>(h >> 8));
        }
    }
    return out;
}

RadioMap decode_raster(std::span<const std::uint8_t> bytes) {
    constexpr std::size_t header = 4 + 4 + 4 + 1;
    if (bytes.size() < header || std::memcmp(bytes.data(), kRasterMagic, 4) != 0) throw IntegrityError("raster: bad magic");
    const std::uint32_t h = get_u32(bytes, 4), w = get_u32(bytes, 8);
    const std::uint8_t dtype = bytes[12];
    if (dtype > 1) throw IntegrityError("raster: unknown dtype " + std::to_string(dtype));
    const std::size_t elem = dtype == 0 ? 4 : 2;
    const std::size_t count = static_cast<std::size_t>(h) * w;
    if (bytes.size() != header + count * elem) throw IntegrityError("raster: payload size does not match header");
    RadioMap map(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t off = header + i * elem;
        if (dtype == 0)
            map.values[i] = std::bit_cast<float>(get_u32(bytes, off));
        else
            map.values[i] = half_to_float(static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8)));
    }
    return map;
}

void write_raster(const RadioMap& map, const std::filesystem::path& path, RasterDtype dtype) {
    const auto bytes = encode_raster(map, dtype);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RadioMap read_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open raster " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_raster(bytes);
}

void write_csv(const RadioMap& map, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    char buf[32];
    for (int r = 0; r < map.rows; ++r) {
        for (int c = 0; c < map.cols; ++c) {
            std::snprintf(buf, sizeof buf, "%.6g", map.at(r, c));
            out << (c ? "," : "") << buf;
        }
        out << "\n";
    }
}

}  // namespace rmflux
