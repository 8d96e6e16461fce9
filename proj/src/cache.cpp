#include "rmflux/cache.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rmflux/errors.hpp"
#include "rmflux/half.hpp"

namespace rmflux {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'U', 'X', 'M', 'I', 'D', '1'};
constexpr std::size_t kHeaderBytes = 8 + 8 + 3 * 4 + 1;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t off, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
    return v;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw CacheIoError("cannot open " + p.string());
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::int64_t now_seconds() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

}  // namespace

std::size_t dtype_bytes(LatentDtype dtype) noexcept { return dtype == LatentDtype::f32 ? 4 : 2; }

const char* dtype_name(LatentDtype dtype) noexcept { return dtype == LatentDtype::f32 ? "f32" : "f16"; }

LatentDtype dtype_from_name(const std::string& name) {
    if (name == "f32") return LatentDtype::f32;
    if (name == "f16") return LatentDtype::f16;
    throw ValidationError("unknown dtype '" + name + "' (expected f32 or f16)");
}

Latent MidpointRecord::latent() const {
    check_integrity(*this);
    Latent z(element_count());
    const std::size_t eb = dtype_bytes(dtype);
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (dtype == LatentDtype::f32)
            z[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(payload, i * eb, 4)));
        else
            z[i] = half_to_float(static_cast<std::uint16_t>(get_le(payload, i * eb, 2)));
    }
    return z;
}

MidpointRecord make_record(const Digest& key, double t, std::array<std::uint32_t, 3> dims, std::span<const float> latent,
                           LatentDtype dtype) {
    MidpointRecord r;
    r.key = key;
    r.t = t;
    r.dims = dims;
    r.dtype = dtype;
    r.created_at = now_seconds();
    if (latent.size() != r.element_count()) throw ConfigError("make_record: latent length does not match dims");
    r.payload.reserve(latent.size() * dtype_bytes(dtype));
    for (float v : latent) {
        if (dtype == LatentDtype::f32)
            put_le(r.payload, std::bit_cast<std::uint32_t>(v), 4);
        else
            put_le(r.payload, float_to_half(v), 2);
    }
    return r;
}

void check_integrity(const MidpointRecord& r) {
    const std::size_t expected = r.element_count() * dtype_bytes(r.dtype);
    if (r.payload.size() != expected)
        throw IntegrityError("midpoint " + to_hex(r.key) + ": payload has " + std::to_string(r.payload.size()) + " bytes, dims and dtype need " +
                             std::to_string(expected));
}

std::vector<std::uint8_t> serialize_record(const MidpointRecord& r) {
    check_integrity(r);
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    out.reserve(kHeaderBytes + r.payload.size());
    put_le(out, std::bit_cast<std::uint64_t>(r.t), 8);
    for (auto d : r.dims) put_le(out, d, 4);
    out.push_back(static_cast<std::uint8_t>(r.dtype));
    out.insert(out.end(), r.payload.begin(), r.payload.end());
    return out;
}

MidpointRecord deserialize_record(std::span<const std::uint8_t> bytes, const Digest& key) {
    if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw IntegrityError("midpoint " + to_hex(key) + ": bad magic or truncated header");
    MidpointRecord r;
    r.key = key;
    r.t = std::bit_cast<double>(get_le(bytes, 8, 8));
    for (int i = 0; i < 3; ++i) r.dims[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(get_le(bytes, 16 + 4 * i, 4));
    const std::uint8_t dt = bytes[28];
    if (dt > 1) throw IntegrityError("midpoint " + to_hex(key) + ": unknown dtype " + std::to_string(dt));
    r.dtype = static_cast<LatentDtype>(dt);
    r.payload.assign(bytes.begin() + kHeaderBytes, bytes.end());
    check_integrity(r);
    return r;
}

nlohmann::json record_metadata(const MidpointRecord& r) {
    return nlohmann::json{{"key", to_hex(r.key)},
                          {"t", r.t},
                          {"dims", {r.dims[0], r.dims[1], r.dims[2]}},
                          {"dtype", dtype_name(r.dtype)},
                          {"payload_bytes", r.payload.size()},
                          {"payload_sha256", to_hex(r.content_digest())},
                          {"created_at", r.created_at}};
}

Digest midpoint_key(const EnvironmentScene& scene, ConditionStage stage, int steps, int switch_index, std::size_t dims) {
    auto bytes = canonical_encoding(scene, stage);
    for (char c : std::string_view("MID")) bytes.push_back(static_cast<std::uint8_t>(c));
    put_le(bytes, static_cast<std::uint32_t>(steps), 4);
    put_le(bytes, static_cast<std::uint32_t>(switch_index), 4);
    put_le(bytes, dims, 8);
    return sha256(bytes);
}

MidpointRecord read_record_file(const std::filesystem::path& mid_file) {
    const Digest key = digest_from_hex(mid_file.stem().string());
    MidpointRecord r = deserialize_record(read_file(mid_file), key);
    auto sidecar = mid_file;
    sidecar.replace_extension(".json");
    if (std::filesystem::exists(sidecar)) {
        nlohmann::json meta;
        try {
            std::ifstream in(sidecar);
            in >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError("midpoint " + to_hex(key) + ": unreadable sidecar: " + e.what());
        }
        if (meta.value("payload_sha256", std::string{}) != to_hex(r.content_digest()))
            throw IntegrityError("midpoint " + to_hex(key) + ": payload digest does not match sidecar");
        r.created_at = meta.value("created_at", std::int64_t{0});
    }
    return r;
}

MidpointCache::MidpointCache(std::size_t capacity, std::optional<std::filesystem::path> dir) : capacity_(capacity), dir_(std::move(dir)) {
    if (capacity_ == 0) throw ConfigError("cache capacity must be positive");
    if (dir_) {
        std::error_code ec;
        std::filesystem::create_directories(*dir_, ec);
        if (ec) throw CacheIoError("cannot create cache directory " + dir_->string() + ": " + ec.message());
        load_directory();
    }
}

void MidpointCache::load_directory() {
    std::vector<MidpointRecord> found;
    for (const auto& entry : std::filesystem::directory_iterator(*dir_)) {
        if (entry.path().extension() != ".mid") continue;
        try {
            found.push_back(read_record_file(entry.path()));
        } catch (const std::exception&) {
            // left on disk; a get on this key reports the integrity error
        }
    }
    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.created_at < b.created_at; });
    for (auto& r : found) {
        const Digest key = r.key, content = r.content_digest();
        lru_.push_front(key);
        entries_[key] = Entry{std::move(r), content, lru_.begin()};
    }
    while (entries_.size() > capacity_) evict_locked();
}

void MidpointCache::write_files(const MidpointRecord& record) const {
    const auto base = *dir_ / to_hex(record.key);
    const auto bytes = serialize_record(record);
    {
        std::ofstream out(base.string() + ".mid", std::ios::binary | std::ios::trunc);
        if (!out) throw CacheIoError("cannot write " + base.string() + ".mid");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CacheIoError("short write to " + base.string() + ".mid");
    }
    std::ofstream meta(base.string() + ".json", std::ios::trunc);
    if (!meta) throw CacheIoError("cannot write " + base.string() + ".json");
    meta << record_metadata(record).dump(2) << "\n";
}

void MidpointCache::remove_files(const Digest& key) const {
    const auto base = *dir_ / to_hex(key);
    std::error_code ec;
    std::filesystem::remove(base.string() + ".mid", ec);
    std::filesystem::remove(base.string() + ".json", ec);
}

void MidpointCache::put(MidpointRecord record) {
    check_integrity(record);
    const Digest key = record.key;
    const Digest content = record.content_digest();
    std::unique_lock lock(mutex_);
    if (dir_) write_files(record);
    if (auto it = entries_.find(key); it != entries_.end()) {
        lru_.erase(it->second.lru);
        entries_.erase(it);
    }
    lru_.push_front(key);
    entries_[key] = Entry{std::move(record), content, lru_.begin()};
    while (entries_.size() > capacity_) evict_locked();
}

std::optional<MidpointRecord> MidpointCache::try_get(const Digest& key) {
    std::unique_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end() && dir_) {
        const auto file = *dir_ / (to_hex(key) + ".mid");
        if (std::filesystem::exists(file)) {
            MidpointRecord r = read_record_file(file);
            const Digest content = r.content_digest();
            lru_.push_front(key);
            it = entries_.emplace(key, Entry{std::move(r), content, lru_.begin()}).first;
            while (entries_.size() > capacity_) evict_locked();
            it = entries_.find(key);
        }
    }
    if (it == entries_.end()) return std::nullopt;
    check_integrity(it->second.record);
    if (it->second.record.content_digest() != it->second.content)
        throw IntegrityError("midpoint " + to_hex(key) + ": payload digest changed since insertion");
    lru_.splice(lru_.begin(), lru_, it->second.lru);
    return it->second.record;
}

MidpointRecord MidpointCache::get(const Digest& key) {
    auto r = try_get(key);
    if (!r) throw NotFoundError("midpoint " + to_hex(key) + " not in cache");
    return std::move(*r);
}

bool MidpointCache::contains(const Digest& key) const {
    std::shared_lock lock(mutex_);
    return entries_.contains(key);
}

std::optional<Digest> MidpointCache::evict_locked() {
    if (lru_.empty()) return std::nullopt;
    const Digest key = lru_.back();
    lru_.pop_back();
    entries_.erase(key);
    if (dir_) remove_files(key);
    return key;
}

std::optional<Digest> MidpointCache::evict() {
    std::unique_lock lock(mutex_);
    return evict_locked();
}

bool MidpointCache::erase(const Digest& key) {
    std::unique_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return false;
    lru_.erase(it->second.lru);
    entries_.erase(it);
    if (dir_) remove_files(key);
    return true;
}

std::size_t MidpointCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::size_t MidpointCache::payload_bytes() const {
    std::shared_lock lock(mutex_);
    std::size_t total = 0;
    for (const auto& [k, e] : entries_) total += e.record.payload.size();
    return total;
}

std::vector<Digest> MidpointCache::keys() const {
    std::shared_lock lock(mutex_);
    return std::vector<Digest>(lru_.begin(), lru_.end());
}

}  // namespace rmflux
