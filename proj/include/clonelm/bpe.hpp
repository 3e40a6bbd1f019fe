#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "clonelm/token.hpp"

namespace clonelm::bpe {

inline constexpr std::string_view kContinuation = "@@";

// Ordered byte-pair merge operations. Application order is the learning
// order; the reserved meta-tokens stay atomic throughout.
struct MergeTable {
    std::vector<std::pair<std::string, std::string>> merges;

    static const std::vector<std::string>& reserved();
    bool is_reserved(std::string_view token) const;

    // rank lookup for encode; rebuilt lazily after mutation
    const std::unordered_map<std::string, std::size_t>& ranks() const;

private:
    mutable std::unordered_map<std::string, std::size_t> rank_cache_;
};

// Learn up to num_merges merge operations from a token corpus. At each step
// the most frequent adjacent subword pair wins, ties broken lexicographically
// by (left, right); learning stops early once no pair occurs twice. Throws
// EmptyCorpus when the corpus has no non-reserved tokens.
MergeTable learn_merges(const std::vector<std::string>& corpus_tokens,
                        std::size_t num_merges);

// Split one token into characters ("@@"-suffixed except the last piece) and
// apply the merge table. Reserved tokens pass through whole.
std::vector<std::string> encode_token(const std::string& token, const MergeTable& table);

// Encode a token sequence; memoizes per distinct token.
std::vector<std::string> encode(const std::vector<std::string>& tokens,
                                const MergeTable& table);

// Inverse of encode: concatenate continuation runs. Throws
// DanglingContinuation when the sequence ends mid-token.
std::vector<std::string> decode(const std::vector<std::string>& subwords);

// Merges file: "#version 1" header then "left right" per line.
std::string serialize_merges(const MergeTable& table);
MergeTable parse_merges(std::string_view text);
void save_merges(const MergeTable& table, const std::string& path);
MergeTable load_merges(const std::string& path);

// --- subword vocabulary -----------------------------------------------------

inline constexpr std::string_view kUnknown = "<unk>";

// Subword-id vocabulary built from an encoded training corpus: id 0 is
// <unk>, the rest ordered by (frequency desc, subword asc). Unknown lookups
// map to <unk>.
class Vocabulary {
public:
    Vocabulary() = default;

    static Vocabulary from_subwords(const std::vector<std::string>& encoded_training);

    std::int32_t id_of(std::string_view subword) const;
    const std::string& text_of(std::int32_t id) const;
    std::size_t size() const { return entries_.size(); }

    std::vector<std::int32_t> ids_of(const std::vector<std::string>& subwords) const;
    std::vector<std::string> texts_of(const std::vector<std::int32_t>& ids) const;

    std::string serialize() const;  // "subword frequency" per line, id order
    static Vocabulary parse(std::string_view text);
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    struct Entry {
        std::string subword;
        std::uint64_t frequency = 0;
    };
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::int32_t> index_;

    void reindex();
};

}  // namespace clonelm::bpe
