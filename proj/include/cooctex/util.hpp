#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace cooctex {

/// Lower-case hex SHA-256 of a byte buffer / of a file's contents.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Sub-seed for a named component, so one user seed drives every RNG.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Each index runs exactly once; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, int threads = 0);

/// Cache root: $COOCTEX_CACHE_DIR if set, else ./cache.
std::filesystem::path default_cache_root();

}  // namespace cooctex
