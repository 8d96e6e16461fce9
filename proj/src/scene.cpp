#include "rmflux/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "rmflux/errors.hpp"
#include "rmflux/rng.hpp"

namespace rmflux {

using nlohmann::json;

double free_space_pl0_db(double carrier_ghz) {
    constexpr double c = 299'792'458.0;
    return 20.0 * std::log10(4.0 * std::numbers::pi * carrier_ghz * 1e9 / c);
}

namespace {

std::string describe(const char* kind, std::size_t idx, const Rect& r) {
    std::ostringstream os;
    os << kind << "[" << idx << "] {x=" << r.x << ", y=" << r.y << ", w=" << r.w << ", h=" << r.h << "}";
    return os.str();
}

bool rect_in_grid(const Rect& r, int n) { return r.w > 0 && r.h > 0 && r.x >= 0 && r.y >= 0 && r.x + r.w <= n && r.y + r.h <= n; }

std::vector<std::uint8_t> rasterize(const std::vector<Rect>& rects, int n) {
    std::vector<std::uint8_t> g(static_cast<std::size_t>(n) * n, 0);
    for (const auto& r : rects)
        for (int row = std::max(r.y, 0); row < std::min(r.y + r.h, n); ++row)
            for (int col = std::max(r.x, 0); col < std::min(r.x + r.w, n); ++col) g[static_cast<std::size_t>(row) * n + col] = 1;
    return g;
}

class ByteWriter {
   public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    void rects(std::vector<Rect> rs) {
        std::sort(rs.begin(), rs.end());
        u32(static_cast<std::uint32_t>(rs.size()));
        for (const auto& r : rs) {
            i32(r.x);
            i32(r.y);
            i32(r.w);
            i32(r.h);
        }
    }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

   private:
    std::vector<std::uint8_t> bytes_;
};

Rect rect_from_json(const json& j, const char* kind) {
    if (!j.is_object()) throw ValidationError(std::string(kind) + " entries must be objects");
    for (const auto& [k, _] : j.items())
        if (k != "x" && k != "y" && k != "w" && k != "h") throw ValidationError(std::string("unknown key '") + k + "' in " + kind);
    try {
        return Rect{j.at("x").get<int>(), j.at("y").get<int>(), j.at("w").get<int>(), j.at("h").get<int>()};
    } catch (const json::exception& e) {
        throw ValidationError(std::string(kind) + ": " + e.what());
    }
}

json rect_to_json(const Rect& r) { return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& [k, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
            throw ValidationError(std::string("unknown key '") + k + "' in " + where);
    }
}

}  // namespace

void validate(const EnvironmentScene& s) {
    std::vector<std::string> problems;
    if (s.n <= 0) problems.push_back("n must be positive");
    if (!(s.resolution_m > 0.0)) problems.push_back("resolution_m must be positive");
    for (std::size_t i = 0; i < s.buildings.size(); ++i)
        if (!rect_in_grid(s.buildings[i], s.n)) problems.push_back(describe("buildings", i, s.buildings[i]) + " outside the grid");
    for (std::size_t i = 0; i < s.vehicles.size(); ++i)
        if (!rect_in_grid(s.vehicles[i], s.n)) problems.push_back(describe("vehicles", i, s.vehicles[i]) + " outside the grid");
    if (s.bs.x < 0 || s.bs.y < 0 || s.bs.x >= s.n || s.bs.y >= s.n) {
        problems.push_back("bs cell outside the grid");
    } else {
        for (std::size_t i = 0; i < s.buildings.size(); ++i)
            if (s.buildings[i].contains_cell(s.bs.x, s.bs.y)) problems.push_back("bs cell inside " + describe("buildings", i, s.buildings[i]));
    }
    const auto& p = s.params;
    if (!(p.exponent > 0.0)) problems.push_back("params.exponent must be positive");
    if (!(p.max_pl_db > p.pl0_db)) problems.push_back("params.max_pl_db must exceed params.pl0_db");
    if (!(p.rx_height_m >= 0.0)) problems.push_back("params.rx_height_m must be non-negative");
    if (problems.empty()) return;
    std::string msg = "invalid scene:";
    for (const auto& pr : problems) msg += "\n  " + pr;
    throw ValidationError(msg);
}

std::vector<std::uint8_t> static_grid(const EnvironmentScene& scene) { return rasterize(scene.buildings, scene.n); }
std::vector<std::uint8_t> dynamic_grid(const EnvironmentScene& scene) { return rasterize(scene.vehicles, scene.n); }

bool inside_building(const EnvironmentScene& scene, int col, int row) {
    return std::any_of(scene.buildings.begin(), scene.buildings.end(), [&](const Rect& r) { return r.contains_cell(col, row); });
}

EnvironmentScene without_vehicles(EnvironmentScene scene) {
    scene.vehicles.clear();
    return scene;
}

std::vector<std::uint8_t> canonical_encoding(const EnvironmentScene& s, ConditionStage stage) {
    ByteWriter w;
    for (char c : std::string_view("RMSC")) w.u8(static_cast<std::uint8_t>(c));
    w.u8(static_cast<std::uint8_t>(stage));
    w.u32(static_cast<std::uint32_t>(s.n));
    w.f64(s.resolution_m);
    w.rects(s.buildings);
    if (stage == ConditionStage::full) {
        w.rects(s.vehicles);
        w.i32(s.bs.x);
        w.i32(s.bs.y);
        w.f64(s.bs.z);
    }
    const auto& p = s.params;
    for (double v : {p.tx_power_dbm, p.carrier_ghz, p.pl0_db, p.exponent, p.nlos_extra_db, p.vehicle_loss_db, p.max_pl_db, p.rx_height_m})
        w.f64(v);
    return w.take();
}

EnvironmentScene scene_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("scene must be a JSON object");
    reject_unknown(j, {"n", "resolution_m", "buildings", "vehicles", "bs", "params"}, "scene");
    EnvironmentScene s;
    try {
        s.n = j.at("n").get<int>();
        s.resolution_m = j.value("resolution_m", s.resolution_m);
        if (j.contains("buildings"))
            for (const auto& r : j.at("buildings")) s.buildings.push_back(rect_from_json(r, "buildings"));
        if (j.contains("vehicles"))
            for (const auto& r : j.at("vehicles")) s.vehicles.push_back(rect_from_json(r, "vehicles"));
        const auto& bs = j.at("bs");
        reject_unknown(bs, {"x", "y", "z"}, "bs");
        s.bs.x = bs.at("x").get<int>();
        s.bs.y = bs.at("y").get<int>();
        s.bs.z = bs.value("z", s.bs.z);
        if (j.contains("params")) {
            const auto& p = j.at("params");
            reject_unknown(p,
                           {"tx_power_dbm", "carrier_ghz", "pl0_db", "exponent", "nlos_extra_db", "vehicle_loss_db", "max_pl_db",
                            "rx_height_m"},
                           "params");
            auto& q = s.params;
            q.tx_power_dbm = p.value("tx_power_dbm", q.tx_power_dbm);
            q.carrier_ghz = p.value("carrier_ghz", q.carrier_ghz);
            // pl0 follows the carrier unless given explicitly
            q.pl0_db = p.contains("pl0_db") ? p.at("pl0_db").get<double>() : free_space_pl0_db(q.carrier_ghz);
            q.exponent = p.value("exponent", q.exponent);
            q.nlos_extra_db = p.value("nlos_extra_db", q.nlos_extra_db);
            q.vehicle_loss_db = p.value("vehicle_loss_db", q.vehicle_loss_db);
            q.max_pl_db = p.value("max_pl_db", q.max_pl_db);
            q.rx_height_m = p.value("rx_height_m", q.rx_height_m);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scene: ") + e.what());
    }
    validate(s);
    return s;
}

json scene_to_json(const EnvironmentScene& s) {
    json b = json::array(), v = json::array();
    for (const auto& r : s.buildings) b.push_back(rect_to_json(r));
    for (const auto& r : s.vehicles) v.push_back(rect_to_json(r));
    const auto& p = s.params;
    return json{{"n", s.n},
                {"resolution_m", s.resolution_m},
                {"buildings", b},
                {"vehicles", v},
                {"bs", {{"x", s.bs.x}, {"y", s.bs.y}, {"z", s.bs.z}}},
                {"params",
                 {{"tx_power_dbm", p.tx_power_dbm},
                  {"carrier_ghz", p.carrier_ghz},
                  {"pl0_db", p.pl0_db},
                  {"exponent", p.exponent},
                  {"nlos_extra_db", p.nlos_extra_db},
                  {"vehicle_loss_db", p.vehicle_loss_db},
                  {"max_pl_db", p.max_pl_db},
                  {"rx_height_m", p.rx_height_m}}}};
}

EnvironmentScene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open scene file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return scene_from_json(j);
}

void save_scene(const EnvironmentScene& scene, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << scene_to_json(scene).dump(2) << "\n";
}

EnvironmentScene make_city(std::uint64_t seed, const CityOptions& o) {
    if (o.n <= 0 || o.min_side <= 0 || o.max_side < o.min_side || o.max_side > o.n) throw ConfigError("make_city: bad size options");
    Rng rng(seed);
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1)); };

    EnvironmentScene s;
    s.n = o.n;
    s.resolution_m = o.resolution_m;
    for (int i = 0; i < o.buildings; ++i) {
        const int w = pick(o.min_side, o.max_side);
        const int h = pick(o.min_side, o.max_side);
        s.buildings.push_back(Rect{pick(0, o.n - w), pick(0, o.n - h), w, h});
    }
    const auto occupied = static_grid(s);
    auto free_cell = [&](int col, int row) { return occupied[static_cast<std::size_t>(row) * o.n + col] == 0; };

    int placed = 0;
    for (int attempt = 0; placed < o.vehicles && attempt < 1000; ++attempt) {
        const bool horizontal = rng.next_u64() & 1;
        const Rect r{0, 0, horizontal ? 3 : 2, horizontal ? 2 : 3};
        Rect v{pick(0, o.n - r.w), pick(0, o.n - r.h), r.w, r.h};
        bool ok = true;
        for (int row = v.y; row < v.y + v.h && ok; ++row)
            for (int col = v.x; col < v.x + v.w && ok; ++col) ok = free_cell(col, row);
        if (!ok) continue;
        s.vehicles.push_back(v);
        ++placed;
    }

    for (int attempt = 0;; ++attempt) {
        if (attempt > 10000) throw ConfigError("make_city: no free cell for the base station");
        const int col = pick(0, o.n - 1), row = pick(0, o.n - 1);
        if (free_cell(col, row)) {
            s.bs = BaseStation{col, row, 1.5};
            break;
        }
    }
    validate(s);
    return s;
}

}  // namespace rmflux
