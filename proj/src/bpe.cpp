#include "clonelm/bpe.hpp"

#include <algorithm>
#include <map>

#include "clonelm/errors.hpp"
#include "clonelm/util.hpp"

namespace clonelm::bpe {

namespace {

std::string pair_key(std::string_view left, std::string_view right) {
    std::string key;
    key.reserve(left.size() + right.size() + 1);
    key.append(left);
    key.push_back(' ');
    key.append(right);
    return key;
}

bool has_continuation(std::string_view piece) {
    return piece.size() >= kContinuation.size() &&
           piece.substr(piece.size() - kContinuation.size()) == kContinuation;
}

std::string merged_symbol(std::string_view left, std::string_view right) {
    std::string_view stem = has_continuation(left)
                                ? left.substr(0, left.size() - kContinuation.size())
                                : left;
    std::string out;
    out.reserve(stem.size() + right.size());
    out.append(stem);
    out.append(right);
    return out;
}

// UTF-8 code point split; non-final pieces carry the continuation suffix.
std::vector<std::string> initial_pieces(std::string_view token) {
    std::vector<std::string> pieces;
    std::size_t i = 0;
    while (i < token.size()) {
        std::size_t j = i + 1;
        while (j < token.size() &&
               (static_cast<unsigned char>(token[j]) & 0xC0) == 0x80)
            ++j;
        pieces.emplace_back(token.substr(i, j - i));
        i = j;
    }
    for (std::size_t k = 0; k + 1 < pieces.size(); ++k) pieces[k] += kContinuation;
    return pieces;
}

using SymbolPair = std::pair<std::string, std::string>;

// Replace all left-to-right non-overlapping occurrences of `pair` in `word`.
bool apply_merge(std::vector<std::string>& word, const SymbolPair& pair,
                 const std::string& merged) {
    bool changed = false;
    std::vector<std::string> out;
    out.reserve(word.size());
    for (std::size_t i = 0; i < word.size();) {
        if (i + 1 < word.size() && word[i] == pair.first && word[i + 1] == pair.second) {
            out.push_back(merged);
            i += 2;
            changed = true;
        } else {
            out.push_back(word[i]);
            ++i;
        }
    }
    if (changed) word = std::move(out);
    return changed;
}

}  // namespace

const std::vector<std::string>& MergeTable::reserved() {
    static const std::vector<std::string> tokens = {
        std::string(kSoc), std::string(kEoc), std::string(kNumVal), std::string(kStrVal)};
    return tokens;
}

bool MergeTable::is_reserved(std::string_view token) const {
    return is_meta_token(token);
}

const std::unordered_map<std::string, std::size_t>& MergeTable::ranks() const {
    if (rank_cache_.size() != merges.size()) {
        rank_cache_.clear();
        rank_cache_.reserve(merges.size());
        for (std::size_t r = 0; r < merges.size(); ++r)
            rank_cache_.emplace(pair_key(merges[r].first, merges[r].second), r);
    }
    return rank_cache_;
}

MergeTable learn_merges(const std::vector<std::string>& corpus_tokens,
                        std::size_t num_merges) {
    // distinct token -> multiplicity; reserved tokens never participate
    std::map<std::string, std::uint64_t> token_counts;
    for (const std::string& t : corpus_tokens) {
        if (!is_meta_token(t) && !t.empty()) ++token_counts[t];
    }
    if (token_counts.empty())
        throw EmptyCorpus("no non-reserved tokens to learn merges from");

    struct Word {
        std::vector<std::string> symbols;
        std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(token_counts.size());
    for (const auto& [token, count] : token_counts)
        words.push_back({initial_pieces(token), count});

    // ordered map: scanning for the max count yields the lexicographically
    // smallest pair among ties
    std::map<SymbolPair, std::uint64_t> pair_counts;
    auto count_word = [&pair_counts](const Word& w, std::int64_t sign) {
        for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
            SymbolPair p{w.symbols[i], w.symbols[i + 1]};
            auto it = pair_counts.find(p);
            if (sign > 0) {
                if (it == pair_counts.end())
                    pair_counts.emplace(std::move(p), w.count);
                else
                    it->second += w.count;
            } else {
                it->second -= w.count;
                if (it->second == 0) pair_counts.erase(it);
            }
        }
    };
    for (const Word& w : words) count_word(w, +1);

    MergeTable table;
    for (std::size_t step = 0; step < num_merges; ++step) {
        const SymbolPair* best = nullptr;
        std::uint64_t best_count = 0;
        for (const auto& [pair, count] : pair_counts) {
            if (count > best_count) {
                best_count = count;
                best = &pair;
            }
        }
        if (best == nullptr || best_count < 2) break;  // nothing left worth merging

        SymbolPair chosen = *best;
        std::string merged = merged_symbol(chosen.first, chosen.second);
        for (Word& w : words) {
            bool contains = false;
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                if (w.symbols[i] == chosen.first && w.symbols[i + 1] == chosen.second) {
                    contains = true;
                    break;
                }
            }
            if (!contains) continue;
            count_word(w, -1);
            apply_merge(w.symbols, chosen, merged);
            count_word(w, +1);
        }
        table.merges.push_back(std::move(chosen));
    }
    return table;
}

std::vector<std::string> encode_token(const std::string& token, const MergeTable& table) {
    if (table.is_reserved(token)) return {token};
    std::vector<std::string> pieces = initial_pieces(token);
    if (pieces.size() <= 1) return pieces;

    const auto& ranks = table.ranks();
    while (pieces.size() > 1) {
        std::size_t best_rank = ranks.size();
        std::size_t best_at = pieces.size();
        for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
            auto it = ranks.find(pair_key(pieces[i], pieces[i + 1]));
            if (it != ranks.end() && it->second < best_rank) {
                best_rank = it->second;
                best_at = i;
            }
        }
        if (best_at == pieces.size()) break;
        apply_merge(pieces, table.merges[best_rank],
                    merged_symbol(table.merges[best_rank].first,
                                  table.merges[best_rank].second));
    }
    return pieces;
}

std::vector<std::string> encode(const std::vector<std::string>& tokens,
                                const MergeTable& table) {
    std::unordered_map<std::string, std::vector<std::string>> cache;
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const std::string& t : tokens) {
        auto it = cache.find(t);
        if (it == cache.end()) it = cache.emplace(t, encode_token(t, table)).first;
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
}

std::vector<std::string> decode(const std::vector<std::string>& subwords) {
    std::vector<std::string> tokens;
    std::string pending;
    for (const std::string& sub : subwords) {
        if (has_continuation(sub)) {
            pending.append(sub, 0, sub.size() - kContinuation.size());
        } else {
            pending += sub;
            tokens.push_back(std::move(pending));
            pending.clear();
        }
    }
    if (!pending.empty())
        throw DanglingContinuation("sequence ends on a continuation piece");
    return tokens;
}

std::string serialize_merges(const MergeTable& table) {
    std::string out = "#version 1\n";
    for (const auto& [left, right] : table.merges) {
        out += left;
        out += ' ';
        out += right;
        out += '\n';
    }
    return out;
}

MergeTable parse_merges(std::string_view text) {
    MergeTable table;
    std::size_t pos = 0;
    std::size_t row = 0;
    bool saw_header = false;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++row;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (row == 1) {
            if (line != "#version 1")
                throw FormatError(row, "expected '#version 1' header");
            saw_header = true;
            continue;
        }
        if (line.empty()) continue;
        std::size_t space = line.find(' ');
        if (space == std::string_view::npos || space == 0 || space + 1 == line.size() ||
            line.find(' ', space + 1) != std::string_view::npos)
            throw FormatError(row, "expected 'left right'");
        table.merges.emplace_back(std::string(line.substr(0, space)),
                                  std::string(line.substr(space + 1)));
    }
    if (!saw_header) throw FormatError(1, "missing '#version 1' header");
    return table;
}

void save_merges(const MergeTable& table, const std::string& path) {
    write_file(path, serialize_merges(table));
}

MergeTable load_merges(const std::string& path) {
    return parse_merges(read_file(path));
}

// --- Vocabulary --------------------------------------------------------------

Vocabulary Vocabulary::from_subwords(const std::vector<std::string>& encoded_training) {
    std::unordered_map<std::string, std::uint64_t> freq;
    for (const std::string& s : encoded_training) ++freq[s];

    std::vector<Entry> entries;
    entries.reserve(freq.size() + 1);
    for (auto& [subword, count] : freq) entries.push_back({subword, count});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.subword < b.subword;
    });

    Vocabulary vocab;
    vocab.entries_.push_back({std::string(kUnknown), 0});
    vocab.entries_.insert(vocab.entries_.end(), entries.begin(), entries.end());
    vocab.reindex();
    return vocab;
}

void Vocabulary::reindex() {
    index_.clear();
    index_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i)
        index_.emplace(entries_[i].subword, static_cast<std::int32_t>(i));
}

std::int32_t Vocabulary::id_of(std::string_view subword) const {
    auto it = index_.find(std::string(subword));
    return it == index_.end() ? 0 : it->second;
}

const std::string& Vocabulary::text_of(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entries_.size())
        throw IdOutOfRange("vocabulary id " + std::to_string(id));
    return entries_[static_cast<std::size_t>(id)].subword;
}

std::vector<std::int32_t> Vocabulary::ids_of(const std::vector<std::string>& subwords) const {
    std::vector<std::int32_t> out;
    out.reserve(subwords.size());
    for (const std::string& s : subwords) out.push_back(id_of(s));
    return out;
}

std::vector<std::string> Vocabulary::texts_of(const std::vector<std::int32_t>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (std::int32_t id : ids) out.push_back(text_of(id));
    return out;
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const Entry& e : entries_) {
        out += e.subword;
        out += ' ';
        out += std::to_string(e.frequency);
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
    Vocabulary vocab;
    std::size_t pos = 0, row = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            eol == std::string_view::npos ? text.substr(pos) : text.substr(pos, eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++row;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::size_t space = line.rfind(' ');
        if (space == std::string_view::npos || space == 0)
            throw FormatError(row, "expected 'subword frequency'");
        Entry e;
        e.subword = std::string(line.substr(0, space));
        e.frequency = 0;
        for (char c : line.substr(space + 1)) {
            if (c < '0' || c > '9') throw FormatError(row, "bad frequency");
            e.frequency = e.frequency * 10 + static_cast<std::uint64_t>(c - '0');
        }
        vocab.entries_.push_back(std::move(e));
    }
    vocab.reindex();
    return vocab;
}

void Vocabulary::save(const std::string& path) const {
    write_file(path, serialize());
}

Vocabulary Vocabulary::load(const std::string& path) {
    return Vocabulary::parse(read_file(path));
}

}  // namespace clonelm::bpe
