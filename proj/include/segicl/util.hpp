#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace segicl {

// FNV-1a 64-bit. Used for content hashes in run manifests, checkpoint ids and
// freeze-contract checksums. Not cryptographic.
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime  = 0x100000001b3ull;

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s, std::uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(std::uint64_t v);

// Hash of a whole file's bytes; throws io_error if unreadable.
std::uint64_t hash_file(const std::string& path);

// Hash of a directory tree: fold of (relative path, file hash) pairs in
// sorted path order. Only regular files are considered.
std::uint64_t hash_dir(const std::string& dir);

std::string shape_to_string(const std::vector<int>& shape);

// Runtime toggle for post-op NaN/Inf scanning. Defaults to on in debug
// builds, off in release; tests flip it explicitly.
bool finite_checks_enabled();
void set_finite_checks(bool on);

std::vector<std::string> split_words(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace segicl
