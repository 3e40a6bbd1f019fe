#pragma once

#include <string>
#include <string_view>

#include "clonelm/token.hpp"

namespace clonelm::lex {

// Lex Java source into a token stream. Whitespace and comments are dropped;
// literals stay intact (see replace_literals). Java 8 is the lexical target;
// later-version keywords lex as identifiers. Throws LexError on unterminated
// string/char/block comment, an illegal character, or source that spells out
// one of the reserved meta-tokens.
TokenStream tokenize(std::string_view source_text, std::string source_path = "");

// Replace every numeric literal with <num_val> and every string/char literal
// with <str_val>. Length-preserving and idempotent.
TokenStream replace_literals(const TokenStream& stream);

// Space-join token texts, with a newline after `;`, `{` and `}`. Best-effort
// readability only; re-tokenizing the output reproduces the token texts.
std::string render(const TokenStream& stream);

bool is_java_keyword(std::string_view word);

}  // namespace clonelm::lex
