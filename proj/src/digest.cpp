#include "rmflux/digest.hpp"

#include <openssl/evp.h>

#include <memory>

#include "rmflux/errors.hpp"

namespace rmflux {

Digest sha256(std::span<const std::uint8_t> bytes) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw std::runtime_error("sha256: EVP_Digest failed");
    return out;
}

std::string to_hex(const Digest& d) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (auto b : d) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

Digest digest_from_hex(std::string_view hex) {
    if (hex.size() != 64) throw ValidationError("digest must be 64 hex characters");
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw ValidationError(std::string("invalid hex character '") + c + "'");
    };
    Digest d{};
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return d;
}

ConditionKey condition_key(const EnvironmentScene& scene, ConditionStage stage) { return sha256(canonical_encoding(scene, stage)); }

}  // namespace rmflux
