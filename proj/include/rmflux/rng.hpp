#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace rmflux {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Output block i is a pure function of (key, stream, i), so any position of
// any stream can be reproduced without replaying earlier draws.
class PhiloxEngine {
   public:
    using result_type = std::uint64_t;

    PhiloxEngine(std::uint64_t key, std::uint64_t stream) noexcept : key_(key), stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (pos_ == kBuffered) refill();
        return buffer_[pos_++];
    }

    // Raw block for counter value `ctr`; exposed for known-answer tests.
    std::array<std::uint32_t, 4> generate(std::uint64_t ctr) const noexcept;

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t stream() const noexcept { return stream_; }

   private:
    std::uint64_t key_;
    std::uint64_t stream_;
    // Four blocks are generated together so their round chains overlap;
    // the output sequence is the same as one block at a time.
    static constexpr int kBlocks = 4;
    static constexpr int kBuffered = 2 * kBlocks;
    void refill() noexcept;

    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, kBuffered> buffer_{};
    int pos_ = kBuffered;
};

// Seeded random source handed to every stochastic operation.
//
// `derive` produces statistically independent child keys (trial streams from
// a master seed); `substream` keeps the key and selects a different counter
// space, which the sampler uses to give each schedule step its own stream.
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept : engine_(seed, stream) {}

    Rng derive(std::uint64_t id) const noexcept;
    Rng substream(std::uint64_t stream) const noexcept { return Rng(engine_.key(), stream); }

    // Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double normal();
    void fill_normal(std::span<double> out);
    std::uint64_t next_u64() noexcept { return engine_(); }

    std::uint64_t key() const noexcept { return engine_.key(); }
    std::uint64_t stream() const noexcept { return engine_.stream(); }

   private:
    PhiloxEngine engine_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace rmflux
