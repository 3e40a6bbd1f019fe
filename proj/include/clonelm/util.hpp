#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clonelm {

// FNV-1a 64-bit, used for exact-duplicate detection of file contents.
std::uint64_t fnv1a64(std::span<const std::byte> bytes);
std::uint64_t fnv1a64(std::string_view text);
std::string to_hex(std::uint64_t value);

// CRC-32 (IEEE 802.3 polynomial), used to guard checkpoint files.
std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t seed = 0);

// Deterministic RNG wrapper. std::mt19937_64 bit streams are pinned by the
// standard; the distributions here are hand-rolled so draws are identical
// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller (one value per pair, partner discarded).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return n == 0 ? 0 : engine_() % n;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

// Fisher-Yates shuffle driven by Rng::below; deterministic per seed.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

// Whitespace-split of one corpus line into token texts.
std::vector<std::string> split_fields(std::string_view line);

// Shortest round-trip decimal form (std::to_chars).
std::string format_double(double value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Corpus file = one whitespace-separated token line per source file.
std::vector<std::vector<std::string>> read_token_lines(const std::string& path);

}  // namespace clonelm
