#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "rmflux/scene.hpp"

namespace rmflux {

using Digest = std::array<std::uint8_t, 32>;
using ConditionKey = Digest;

Digest sha256(std::span<const std::uint8_t> bytes);
std::string to_hex(const Digest& d);
// Throws ValidationError on anything but 64 hex characters.
Digest digest_from_hex(std::string_view hex);

ConditionKey condition_key(const EnvironmentScene& scene, ConditionStage stage);

}  // namespace rmflux
