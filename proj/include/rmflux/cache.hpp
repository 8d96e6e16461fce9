#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmflux/diffusion.hpp"
#include "rmflux/digest.hpp"

namespace rmflux {

enum class LatentDtype : std::uint8_t { f32 = 0, f16 = 1 };

std::size_t dtype_bytes(LatentDtype dtype) noexcept;
const char* dtype_name(LatentDtype dtype) noexcept;
LatentDtype dtype_from_name(const std::string& name);

// A cached latent. `payload` holds the stored little-endian bytes, so an f16
// record really occupies two bytes per element.
struct MidpointRecord {
    Digest key{};
    double t = 0.0;
    std::array<std::uint32_t, 3> dims{};
    LatentDtype dtype = LatentDtype::f32;
    std::vector<std::uint8_t> payload;
    std::int64_t created_at = 0;  // unix seconds

    std::size_t element_count() const noexcept { return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]; }
    Latent latent() const;
    Digest content_digest() const { return sha256(payload); }
};

MidpointRecord make_record(const Digest& key, double t, std::array<std::uint32_t, 3> dims, std::span<const float> latent,
                           LatentDtype dtype = LatentDtype::f32);

// Throws IntegrityError when the payload size disagrees with dims and dtype.
void check_integrity(const MidpointRecord& record);

// "FLUXMID1", t (f64), three u32 dims, u8 dtype, payload; all little-endian.
std::vector<std::uint8_t> serialize_record(const MidpointRecord& record);
MidpointRecord deserialize_record(std::span<const std::uint8_t> bytes, const Digest& key);
nlohmann::json record_metadata(const MidpointRecord& record);

// Key for a midpoint: condition encoding, stage, switch time on the grid, latent dims.
Digest midpoint_key(const EnvironmentScene& scene, ConditionStage stage, int steps, int switch_index, std::size_t dims);

// Bounded LRU store of midpoints, optionally mirrored to a directory as
// <hex key>.mid plus a <hex key>.json sidecar. Readers share a lock; put,
// eviction and recency updates take it exclusively.
class MidpointCache {
   public:
    explicit MidpointCache(std::size_t capacity = 100, std::optional<std::filesystem::path> dir = std::nullopt);

    // Inserts or replaces, evicting least-recently-used records beyond capacity.
    void put(MidpointRecord record);
    // Refreshes recency. Throws NotFoundError or IntegrityError.
    MidpointRecord get(const Digest& key);
    std::optional<MidpointRecord> try_get(const Digest& key);
    bool contains(const Digest& key) const;
    // Removes the least-recently-used record; returns its key.
    std::optional<Digest> evict();
    bool erase(const Digest& key);

    std::size_t size() const;
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t payload_bytes() const;
    // Keys from most to least recently used.
    std::vector<Digest> keys() const;
    const std::optional<std::filesystem::path>& directory() const noexcept { return dir_; }

   private:
    struct Entry {
        MidpointRecord record;
        Digest content;
        std::list<Digest>::iterator lru;
    };

    void load_directory();
    void write_files(const MidpointRecord& record) const;
    void remove_files(const Digest& key) const;
    std::optional<Digest> evict_locked();

    std::size_t capacity_;
    std::optional<std::filesystem::path> dir_;
    mutable std::shared_mutex mutex_;
    std::list<Digest> lru_;  // front = most recent
    std::map<Digest, Entry> entries_;
};

MidpointRecord read_record_file(const std::filesystem::path& mid_file);

}  // namespace rmflux
