#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <atomic>
#include <thread>

#include "rmflux/cache.hpp"
#include "rmflux/errors.hpp"
#include "rmflux/half.hpp"

using namespace rmflux;

namespace {

Digest key_of(int i) {
    const std::string s = "record-" + std::to_string(i);
    return sha256(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Latent random_latent(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Latent z(n);
    for (auto& v : z) v = static_cast<float>(rng.normal());
    return z;
}

std::filesystem::path fresh_dir(const char* name) {
    const auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("payload sizes") {
    const auto z = random_latent(64 * 64 * 4, 1);
    const auto f32 = make_record(key_of(0), 0.02, {64, 64, 4}, z, LatentDtype::f32);
    const auto f16 = make_record(key_of(0), 0.02, {64, 64, 4}, z, LatentDtype::f16);
    CHECK(f32.payload.size() == 65536);
    CHECK(f16.payload.size() == 32768);

    MidpointCache cache(100);
    for (int i = 0; i < 100; ++i) cache.put(make_record(key_of(i), 0.02, {64, 64, 4}, z));
    CHECK(cache.payload_bytes() == 6553600);
    CHECK(cache.payload_bytes() / (1024.0 * 1024.0) == doctest::Approx(6.25));
    MidpointCache half(100);
    for (int i = 0; i < 100; ++i) half.put(make_record(key_of(i), 0.02, {64, 64, 4}, z, LatentDtype::f16));
    CHECK(half.payload_bytes() * 2 == cache.payload_bytes());
}

TEST_CASE("f32 round trip is bit exact") {
    const auto z = random_latent(256, 2);
    MidpointCache cache;
    cache.put(make_record(key_of(1), 0.3, {16, 16, 1}, z));
    const auto back = cache.get(key_of(1)).latent();
    REQUIRE(back.size() == z.size());
    CHECK(std::memcmp(back.data(), z.data(), z.size() * sizeof(float)) == 0);
}

TEST_CASE("half conversion agrees with the compiler's binary16") {
    // every finite half survives a round trip through float
    for (std::uint32_t h = 0; h < 0x10000u; ++h) {
        const auto hh = static_cast<std::uint16_t>(h);
        if (((hh >> 10) & 0x1F) == 0x1F) continue;
        REQUIRE(float_to_half(half_to_float(hh)) == hh);
    }
#if defined(__FLT16_MAX__)
    Rng rng(3);
    for (int i = 0; i < 200000; ++i) {
        const float f = static_cast<float>(rng.normal() * std::pow(10.0, 8.0 * rng.uniform() - 6.0));
        const auto ref = static_cast<_Float16>(f);
        std::uint16_t bits;
        std::memcpy(&bits, &ref, 2);
        REQUIRE(float_to_half(f) == bits);
    }
#endif
    CHECK(half_to_float(float_to_half(65504.0f)) == 65504.0f);
    CHECK(std::isinf(half_to_float(float_to_half(1e6f))));
}

TEST_CASE("binary layout") {
    const Latent z = {1.0f, -2.0f};
    const auto rec = make_record(key_of(3), 0.25, {2, 1, 1}, z);
    const auto bytes = serialize_record(rec);
    REQUIRE(bytes.size() == 8 + 8 + 12 + 1 + 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "FLUXMID1");
    double t;
    std::memcpy(&t, bytes.data() + 8, 8);
    CHECK(t == 0.25);
    CHECK(bytes[16] == 2);
    CHECK(bytes[20] == 1);
    CHECK(bytes[24] == 1);
    CHECK(bytes[28] == 0);
    // 1.0f little-endian
    CHECK(bytes[29] == 0x00);
    CHECK(bytes[32] == 0x3F);
    const auto back = deserialize_record(bytes, key_of(3));
    CHECK(back.latent() == z);
    CHECK(back.dims == rec.dims);
}

TEST_CASE("corrupt records raise integrity errors") {
    auto rec = make_record(key_of(4), 0.5, {4, 1, 1}, Latent{1, 2, 3, 4});
    auto bytes = serialize_record(rec);
    bytes.pop_back();
    CHECK_THROWS_AS(deserialize_record(bytes, key_of(4)), IntegrityError);
    bytes = serialize_record(rec);
    bytes[1] = 'x';
    CHECK_THROWS_AS(deserialize_record(bytes, key_of(4)), IntegrityError);
    rec.dims = {5, 1, 1};
    CHECK_THROWS_AS(check_integrity(rec), IntegrityError);
    MidpointCache cache;
    CHECK_THROWS_AS(cache.put(rec), IntegrityError);
    CHECK_THROWS_AS(cache.get(key_of(99)), NotFoundError);
    CHECK_FALSE(cache.try_get(key_of(99)).has_value());
}

TEST_CASE("LRU eviction") {
    MidpointCache cache(100);
    const Latent z(4, 0.5f);
    for (int i = 0; i < 100; ++i) cache.put(make_record(key_of(i), 0.5, {4, 1, 1}, z));
    cache.get(key_of(1));
    cache.put(make_record(key_of(100), 0.5, {4, 1, 1}, z));
    CHECK(cache.size() == 100);
    CHECK_FALSE(cache.contains(key_of(0)));
    CHECK(cache.contains(key_of(1)));
    cache.put(make_record(key_of(101), 0.5, {4, 1, 1}, z));
    CHECK_FALSE(cache.contains(key_of(2)));
    CHECK(cache.keys().front() == key_of(101));
    CHECK(cache.evict() == key_of(3));
    CHECK(cache.size() == 99);
}

TEST_CASE("capacity is never exceeded under random operations") {
    MidpointCache cache(7);
    Rng rng(5);
    const Latent z(2, 1.0f);
    for (int i = 0; i < 2000; ++i) {
        const int k = static_cast<int>(rng.next_u64() % 20);
        switch (rng.next_u64() % 4) {
            case 0:
            case 1: cache.put(make_record(key_of(k), 0.5, {2, 1, 1}, z)); break;
            case 2: cache.try_get(key_of(k)); break;
            default: cache.evict();
        }
        REQUIRE(cache.size() <= 7);
        REQUIRE(cache.keys().size() == cache.size());
    }
}

TEST_CASE("directory persistence and sidecar digest") {
    const auto dir = fresh_dir("rmflux_test_cache_dir");
    const auto z = random_latent(16, 6);
    {
        MidpointCache cache(10, dir);
        cache.put(make_record(key_of(7), 0.1, {4, 4, 1}, z));
    }
    const auto stem = dir / to_hex(key_of(7));
    CHECK(std::filesystem::exists(stem.string() + ".mid"));
    CHECK(std::filesystem::exists(stem.string() + ".json"));
    {
        std::ifstream in(stem.string() + ".json");
        const auto meta = nlohmann::json::parse(in);
        CHECK(meta.at("payload_sha256") == to_hex(make_record(key_of(7), 0.1, {4, 4, 1}, z).content_digest()));
        CHECK(meta.at("dtype") == "f32");
    }
    {
        MidpointCache cache(10, dir);
        CHECK(cache.get(key_of(7)).latent() == z);
    }
    {
        // flip one payload byte on disk
        std::fstream f(stem.string() + ".mid", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-1, std::ios::end);
        f.put('\x7f');
    }
    MidpointCache cache(10, dir);
    CHECK_THROWS_AS(cache.get(key_of(7)), IntegrityError);
    CHECK(cache.erase(key_of(7)) == false);
    std::filesystem::remove_all(dir);
}

TEST_CASE("eviction removes files") {
    const auto dir = fresh_dir("rmflux_test_cache_evict");
    MidpointCache cache(2, dir);
    const Latent z(4, 1.0f);
    for (int i = 0; i < 3; ++i) cache.put(make_record(key_of(i), 0.5, {4, 1, 1}, z));
    CHECK_FALSE(std::filesystem::exists(dir / (to_hex(key_of(0)) + ".mid")));
    CHECK(std::filesystem::exists(dir / (to_hex(key_of(2)) + ".mid")));
    std::filesystem::remove_all(dir);
}

TEST_CASE("concurrent readers with a writer") {
    MidpointCache cache(16);
    const auto z = random_latent(64, 8);
    for (int i = 0; i < 8; ++i) cache.put(make_record(key_of(i), 0.5, {64, 1, 1}, z));
    std::vector<std::thread> threads;
    std::atomic<int> bad{0};
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < 2000; ++i) {
                auto r = cache.try_get(key_of((i + t) % 8));
                if (r && r->latent() != z) ++bad;
            }
        });
    threads.emplace_back([&] {
        for (int i = 0; i < 500; ++i) cache.put(make_record(key_of(8 + i % 20), 0.5, {64, 1, 1}, z));
    });
    for (auto& th : threads) th.join();
    CHECK(bad == 0);
    CHECK(cache.size() <= 16);
}

TEST_CASE("midpoint keys") {
    EnvironmentScene s;
    s.n = 16;
    s.buildings = {{2, 2, 3, 3}};
    s.bs = {10, 10, 1.5};
    auto moved = s;
    moved.bs = {12, 1, 1.5};
    CHECK(midpoint_key(s, ConditionStage::full, 100, 2, 16) != midpoint_key(moved, ConditionStage::full, 100, 2, 16));
    CHECK(midpoint_key(s, ConditionStage::static_only, 100, 2, 16) == midpoint_key(moved, ConditionStage::static_only, 100, 2, 16));
    CHECK(midpoint_key(s, ConditionStage::full, 100, 2, 16) != midpoint_key(s, ConditionStage::full, 100, 3, 16));
    CHECK(midpoint_key(s, ConditionStage::full, 100, 2, 16) != midpoint_key(s, ConditionStage::static_only, 100, 2, 16));
    CHECK(digest_from_hex(to_hex(key_of(1))) == key_of(1));
    CHECK_THROWS_AS(digest_from_hex("abc"), ValidationError);
}

TEST_CASE("sha256 known answers") {
    const std::string abc = "abc";
    CHECK(to_hex(sha256(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()))) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(to_hex(sha256({})) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
