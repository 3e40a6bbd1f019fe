#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clonelm {

// Lexical error with source location (1-based line/column).
class LexError : public std::runtime_error {
public:
    LexError(std::size_t line, std::size_t column, const std::string& what_arg)
        : std::runtime_error("lex error at " + std::to_string(line) + ":" +
                             std::to_string(column) + ": " + what_arg),
          line_(line),
          column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

// Malformed record in a structured file (TSV row, checkpoint header, ...).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what_arg)
        : std::runtime_error("format error: " + what_arg), row_(0) {}
    FormatError(std::size_t row, const std::string& what_arg)
        : std::runtime_error("format error at row " + std::to_string(row) + ": " + what_arg),
          row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what_arg)
        : std::runtime_error("io error: " + what_arg) {}
};

// A clone reference selects a line span with no tokens in it.
class RangeError : public std::runtime_error {
public:
    explicit RangeError(const std::string& what_arg)
        : std::runtime_error("range error: " + what_arg) {}
};

class EmptyCorpus : public std::runtime_error {
public:
    explicit EmptyCorpus(const std::string& what_arg)
        : std::runtime_error("empty corpus: " + what_arg) {}
};

// Subword sequence ends on a continuation piece; the final token is incomplete.
class DanglingContinuation : public std::runtime_error {
public:
    explicit DanglingContinuation(const std::string& what_arg)
        : std::runtime_error("dangling continuation: " + what_arg) {}
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what_arg)
        : std::runtime_error("config error: " + what_arg) {}
};

class IdOutOfRange : public std::out_of_range {
public:
    explicit IdOutOfRange(const std::string& what_arg)
        : std::out_of_range("id out of range: " + what_arg) {}
};

// Non-finite loss or probability; training aborts on this.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what_arg)
        : std::runtime_error("numerical error: " + what_arg) {}
};

class DegenerateInput : public std::invalid_argument {
public:
    explicit DegenerateInput(const std::string& what_arg)
        : std::invalid_argument("degenerate input: " + what_arg) {}
};

// Marker bookkeeping broke: <eoc> without <soc>, nesting, or an unclosed pair.
class UnbalancedMarkers : public std::runtime_error {
public:
    UnbalancedMarkers(std::size_t position, const std::string& what_arg)
        : std::runtime_error("unbalanced markers at position " + std::to_string(position) +
                             ": " + what_arg),
          position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

class LengthMismatch : public std::invalid_argument {
public:
    explicit LengthMismatch(const std::string& what_arg)
        : std::invalid_argument("length mismatch: " + what_arg) {}
};

}  // namespace clonelm
