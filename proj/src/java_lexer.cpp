#include "clonelm/java_lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <unordered_set>

#include "clonelm/errors.hpp"

namespace clonelm::lex {

namespace {

// Java 8 keyword set, plus the boolean/null literals which need no
// replacement and are conventionally lexed as keywords.
const std::unordered_set<std::string_view> kKeywords = {
    "abstract", "assert",       "boolean",  "break",      "byte",    "case",
    "catch",    "char",         "class",    "const",      "continue", "default",
    "do",       "double",       "else",     "enum",       "extends", "final",
    "finally",  "float",        "for",      "goto",       "if",      "implements",
    "import",   "instanceof",   "int",      "interface",  "long",    "native",
    "new",      "package",      "private",  "protected",  "public",  "return",
    "short",    "static",       "strictfp", "super",      "switch",  "synchronized",
    "this",     "throw",        "throws",   "transient",  "try",     "void",
    "volatile", "while",        "true",     "false",      "null",
};

// Multi-character operators and separators, longest first for maximal munch.
struct Punct {
    std::string_view text;
    TokenKind kind;
};

constexpr std::array<Punct, 38> kPuncts = {{
    {">>>=", TokenKind::Operator}, {"...", TokenKind::Separator},
    {">>>", TokenKind::Operator},  {"<<=", TokenKind::Operator},
    {">>=", TokenKind::Operator},  {"==", TokenKind::Operator},
    {">=", TokenKind::Operator},   {"<=", TokenKind::Operator},
    {"!=", TokenKind::Operator},   {"&&", TokenKind::Operator},
    {"||", TokenKind::Operator},   {"++", TokenKind::Operator},
    {"--", TokenKind::Operator},   {"+=", TokenKind::Operator},
    {"-=", TokenKind::Operator},   {"*=", TokenKind::Operator},
    {"/=", TokenKind::Operator},   {"&=", TokenKind::Operator},
    {"|=", TokenKind::Operator},   {"^=", TokenKind::Operator},
    {"%=", TokenKind::Operator},   {"<<", TokenKind::Operator},
    {">>", TokenKind::Operator},   {"->", TokenKind::Operator},
    {"::", TokenKind::Separator},  {"=", TokenKind::Operator},
    {">", TokenKind::Operator},    {"<", TokenKind::Operator},
    {"!", TokenKind::Operator},    {"~", TokenKind::Operator},
    {"?", TokenKind::Operator},    {":", TokenKind::Operator},
    {"+", TokenKind::Operator},    {"-", TokenKind::Operator},
    {"*", TokenKind::Operator},    {"/", TokenKind::Operator},
    {"&", TokenKind::Operator},    {"|", TokenKind::Operator},
}};

bool is_ident_start(unsigned char c) {
    return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80;
}

bool is_ident_part(unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
}

bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_hex_digit(unsigned char c) { return std::isxdigit(c); }

class Scanner {
public:
    Scanner(std::string_view src, std::string path)
        : src_(src), path_(std::move(path)) {}

    TokenStream run() {
        reject_marker_spoofing();
        TokenStream out;
        out.source_path = path_;
        while (!at_end()) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\n') {
                advance();
            } else if (c == '/' && peek(1) == '/') {
                while (!at_end() && peek() != '\n') advance();
            } else if (c == '/' && peek(1) == '*') {
                skip_block_comment();
            } else {
                out.tokens.push_back(next_token());
            }
        }
        return out;
    }

private:
    bool at_end() const { return pos_ >= src_.size(); }
    char peek(std::size_t ahead = 0) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }
    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    // The corpus format reserves the marker spellings; source that contains
    // them anywhere (even in comments or literals) is rejected so that marked
    // corpora can only get markers from mark_clones.
    void reject_marker_spoofing() const {
        for (std::string_view marker : kMetaTokens) {
            std::size_t at = src_.find(marker);
            if (at == std::string_view::npos) continue;
            std::size_t line = 1, col = 1;
            for (std::size_t i = 0; i < at; ++i) {
                if (src_[i] == '\n') {
                    ++line;
                    col = 1;
                } else {
                    ++col;
                }
            }
            throw LexError(line, col,
                           "source contains reserved meta-token text '" +
                               std::string(marker) + "'");
        }
    }

    void skip_block_comment() {
        std::size_t start_line = line_, start_col = col_;
        advance();  // '/'
        advance();  // '*'
        while (true) {
            if (at_end()) throw LexError(start_line, start_col, "unterminated block comment");
            if (peek() == '*' && peek(1) == '/') {
                advance();
                advance();
                return;
            }
            advance();
        }
    }

    Token next_token() {
        std::size_t start_line = line_, start_col = col_, start = pos_;
        char c = peek();

        if (is_ident_start(static_cast<unsigned char>(c))) {
            while (!at_end() && is_ident_part(static_cast<unsigned char>(peek()))) advance();
            std::string text(src_.substr(start, pos_ - start));
            TokenKind kind =
                kKeywords.count(text) ? TokenKind::Keyword : TokenKind::Identifier;
            return {kind, std::move(text), start_line};
        }
        if (is_digit(static_cast<unsigned char>(c)) ||
            (c == '.' && is_digit(static_cast<unsigned char>(peek(1))))) {
            scan_number();
            return {TokenKind::Literal, std::string(src_.substr(start, pos_ - start)),
                    start_line};
        }
        if (c == '"') {
            scan_quoted('"', "string");
            return {TokenKind::Literal, std::string(src_.substr(start, pos_ - start)),
                    start_line};
        }
        if (c == '\'') {
            scan_quoted('\'', "char");
            return {TokenKind::Literal, std::string(src_.substr(start, pos_ - start)),
                    start_line};
        }
        switch (c) {
            case '(': case ')': case '{': case '}': case '[': case ']':
            case ';': case ',': case '@':
                advance();
                return {TokenKind::Separator, std::string(1, c), start_line};
            case '.':
                if (peek(1) == '.' && peek(2) == '.') {
                    advance(); advance(); advance();
                    return {TokenKind::Separator, "...", start_line};
                }
                advance();
                return {TokenKind::Separator, ".", start_line};
            default:
                break;
        }
        for (const Punct& p : kPuncts) {
            if (src_.compare(pos_, p.text.size(), p.text) == 0) {
                for (std::size_t i = 0; i < p.text.size(); ++i) advance();
                return {p.kind, std::string(p.text), start_line};
            }
        }
        throw LexError(start_line, start_col,
                       std::string("illegal character '") + c + "'");
    }

    // Numeric literal scanner: decimal/octal, hex (incl. hex float), binary,
    // with underscores, exponents and type suffixes. Lenient — this lexes,
    // it does not validate.
    void scan_number() {
        auto digits = [&](auto pred) {
            while (!at_end() &&
                   (pred(static_cast<unsigned char>(peek())) || peek() == '_'))
                advance();
        };
        auto exponent = [&](char lo, char hi) {
            if (peek() == lo || peek() == hi) {
                char sign = peek(1);
                char next = (sign == '+' || sign == '-') ? peek(2) : sign;
                if (is_digit(static_cast<unsigned char>(next))) {
                    advance();
                    if (sign == '+' || sign == '-') advance();
                    digits(is_digit);
                }
            }
        };

        if (peek() == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
            advance();
            advance();
            digits(is_hex_digit);
            if (peek() == '.') {
                advance();
                digits(is_hex_digit);
            }
            exponent('p', 'P');
        } else if (peek() == '0' && (peek(1) == 'b' || peek(1) == 'B')) {
            advance();
            advance();
            digits(is_digit);
        } else {
            digits(is_digit);
            if (peek() == '.' && is_digit(static_cast<unsigned char>(peek(1)))) {
                advance();
                digits(is_digit);
            } else if (peek() == '.' && pos_ > 0 &&
                       is_digit(static_cast<unsigned char>(src_[pos_ - 1]))) {
                // trailing-dot literal like "1." — but only when not followed
                // by an identifier (keeps "1.toString" split after the digit)
                if (!is_ident_start(static_cast<unsigned char>(peek(1)))) advance();
            }
            exponent('e', 'E');
        }
        char s = peek();
        if (s == 'l' || s == 'L' || s == 'f' || s == 'F' || s == 'd' || s == 'D')
            advance();
    }

    void scan_quoted(char quote, const char* what) {
        std::size_t start_line = line_, start_col = col_;
        advance();  // opening quote
        while (true) {
            if (at_end() || peek() == '\n')
                throw LexError(start_line, start_col,
                               std::string("unterminated ") + what + " literal");
            char c = peek();
            if (c == '\\') {
                advance();
                if (at_end() || peek() == '\n')
                    throw LexError(start_line, start_col,
                                   std::string("unterminated ") + what + " literal");
                advance();
                continue;
            }
            advance();
            if (c == quote) return;
        }
    }

    std::string_view src_;
    std::string path_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

bool is_numeric_literal(std::string_view text) {
    if (text.empty()) return false;
    char c = text.front();
    return is_digit(static_cast<unsigned char>(c)) ||
           (c == '.' && text.size() > 1 && is_digit(static_cast<unsigned char>(text[1])));
}

}  // namespace

bool is_java_keyword(std::string_view word) {
    return kKeywords.count(word) > 0;
}

TokenStream tokenize(std::string_view source_text, std::string source_path) {
    return Scanner(source_text, std::move(source_path)).run();
}

TokenStream replace_literals(const TokenStream& stream) {
    TokenStream out;
    out.source_path = stream.source_path;
    out.tokens.reserve(stream.size());
    for (const Token& t : stream.tokens) {
        if (t.kind == TokenKind::Literal) {
            std::string_view meta = is_numeric_literal(t.text) ? kNumVal : kStrVal;
            out.tokens.push_back({TokenKind::Meta, std::string(meta), t.line});
        } else {
            out.tokens.push_back(t);
        }
    }
    return out;
}

std::string render(const TokenStream& stream) {
    std::string out;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const std::string& text = stream.tokens[i].text;
        out += text;
        bool line_break = text == ";" || text == "{" || text == "}";
        if (line_break) {
            out += '\n';
        } else if (i + 1 < stream.size()) {
            out += ' ';
        }
    }
    return out;
}

}  // namespace clonelm::lex
