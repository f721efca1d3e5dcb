#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace rag {

// SHA-256 hex digest of a byte string. Content identity for dataset files,
// cache keys and space digests.
std::string sha256_hex(std::string_view bytes);

// FNV-1a 64-bit. Cheap stable hash for token bucketing and seed derivation.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace rag
