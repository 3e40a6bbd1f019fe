#include "clonelm/util.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "clonelm/errors.hpp"

namespace clonelm {

std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::byte b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text) {
    return fnv1a64(std::as_bytes(std::span(text.data(), text.size())));
}

std::string to_hex(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

}  // namespace

std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t seed) {
    static const std::array<std::uint32_t, 256> table = make_crc_table();
    std::uint32_t c = seed ^ 0xffffffffu;
    for (std::byte b : bytes) {
        c = table[(c ^ static_cast<std::uint32_t>(b)) & 0xff] ^ (c >> 8);
    }
    return c ^ 0xffffffffu;
}

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
            ++i;
        std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r')
            ++i;
        if (i > start) out.emplace_back(line.substr(start, i - start));
    }
    return out;
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for '" + path + "'");
    return ss.str();
}

void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
    std::string text = read_file(path);
    std::vector<std::vector<std::string>> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = eol == std::string::npos
                                    ? std::string_view(text).substr(pos)
                                    : std::string_view(text).substr(pos, eol - pos);
        pos = eol == std::string::npos ? text.size() : eol + 1;
        std::vector<std::string> fields = split_fields(line);
        if (!fields.empty()) lines.push_back(std::move(fields));
    }
    return lines;
}

}  // namespace clonelm
