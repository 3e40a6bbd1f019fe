#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace clonelm {

// Reserved meta-tokens. They are atomic everywhere: the lexer rejects source
// that spells them out, BPE never splits them, and generation stops on kEoc.
inline constexpr std::string_view kSoc = "<soc>";
inline constexpr std::string_view kEoc = "<eoc>";
inline constexpr std::string_view kNumVal = "<num_val>";
inline constexpr std::string_view kStrVal = "<str_val>";

inline constexpr std::array<std::string_view, 4> kMetaTokens = {kSoc, kEoc, kNumVal, kStrVal};

inline bool is_meta_token(std::string_view text) {
    for (std::string_view m : kMetaTokens) {
        if (text == m) return true;
    }
    return false;
}

enum class TokenKind {
    Keyword,
    Identifier,
    Literal,  // numeric/string/char literal, present only before replacement
    Operator,
    Separator,
    Meta,
};

struct Token {
    TokenKind kind = TokenKind::Identifier;
    std::string text;
    std::size_t line = 1;  // 1-based source line

    friend bool operator==(const Token&, const Token&) = default;
};

struct TokenStream {
    std::vector<Token> tokens;
    std::string source_path;  // optional provenance

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }

    std::vector<std::string> texts() const {
        std::vector<std::string> out;
        out.reserve(tokens.size());
        for (const Token& t : tokens) out.push_back(t.text);
        return out;
    }
};

}  // namespace clonelm
