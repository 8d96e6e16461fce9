#include "rmflux/rng.hpp"

#include <boost/random/normal_distribution.hpp>

namespace rmflux {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> PhiloxEngine::generate(std::uint64_t ctr) const noexcept {
    std::uint32_t x0 = static_cast<std::uint32_t>(ctr), x1 = static_cast<std::uint32_t>(ctr >> 32);
    std::uint32_t x2 = static_cast<std::uint32_t>(stream_), x3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = static_cast<std::uint32_t>(key_);
    std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, x0, hi0, lo0);
        mulhilo(kMul1, x2, hi1, lo1);
        x0 = hi1 ^ x1 ^ k0;
        x1 = lo1;
        x2 = hi0 ^ x3 ^ k1;
        x3 = lo0;
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return {x0, x1, x2, x3};
}

void PhiloxEngine::refill() noexcept {
    std::uint32_t x0[kBlocks], x1[kBlocks], x2[kBlocks], x3[kBlocks];
    for (int b = 0; b < kBlocks; ++b) {
        const std::uint64_t ctr = counter_ + static_cast<std::uint64_t>(b);
        x0[b] = static_cast<std::uint32_t>(ctr);
        x1[b] = static_cast<std::uint32_t>(ctr >> 32);
        x2[b] = static_cast<std::uint32_t>(stream_);
        x3[b] = static_cast<std::uint32_t>(stream_ >> 32);
    }
    std::uint32_t k0 = static_cast<std::uint32_t>(key_);
    std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
    for (int round = 0; round < 10; ++round) {
        for (int b = 0; b < kBlocks; ++b) {
            std::uint32_t hi0, lo0, hi1, lo1;
            mulhilo(kMul0, x0[b], hi0, lo0);
            mulhilo(kMul1, x2[b], hi1, lo1);
            x0[b] = hi1 ^ x1[b] ^ k0;
            x1[b] = lo1;
            x2[b] = hi0 ^ x3[b] ^ k1;
            x3[b] = lo0;
        }
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    for (int b = 0; b < kBlocks; ++b) {
        buffer_[2 * b] = (static_cast<std::uint64_t>(x1[b]) << 32) | x0[b];
        buffer_[2 * b + 1] = (static_cast<std::uint64_t>(x3[b]) << 32) | x2[b];
    }
    counter_ += kBlocks;
    pos_ = 0;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t id) const noexcept {
    return Rng(mix64(engine_.key() ^ mix64(id + 0x632BE59BD9B4E019ull)), 0);
}

double Rng::uniform() noexcept {
    // 53 random bits, offset by half an ulp so 0 is never returned.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    boost::random::normal_distribution<double> dist;
    return dist(engine_);
}

void Rng::fill_normal(std::span<double> out) {
    boost::random::normal_distribution<double> dist;
    for (auto& v : out) v = dist(engine_);
}

}  // namespace rmflux
