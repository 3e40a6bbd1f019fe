#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "clonelm/token.hpp"

namespace clonelm::corpus {

struct CloneReference {
    std::string file_path;
    std::size_t start_line = 1;
    std::size_t end_line = 1;
    int functionality_id = 1;
    bool true_positive = true;

    friend bool operator==(const CloneReference&, const CloneReference&) = default;
};

struct ClonePair {
    CloneReference ref_a;
    CloneReference ref_b;
    int functionality_id = 1;
    double syntactic_similarity = 0.0;

    friend bool operator==(const ClonePair&, const ClonePair&) = default;
};

struct FunctionalityStats {
    int functionality_id = 0;
    std::size_t training_snippet_count = 0;
    double similarity_mean = 0.0;
    double similarity_variance = 0.0;
};

enum class Split { Training, Validation, Testing };

const char* split_name(Split s);

struct FileRecord {
    std::string path;              // relative to the corpus source dir
    std::string content_hash;      // hex FNV-1a 64 of the raw bytes
    int functionality_id = 0;      // folder the file came from
};

struct CorpusSplit {
    std::vector<FileRecord> training;
    std::vector<FileRecord> validation;
    std::vector<FileRecord> testing;
};

// Parse a TSV of clone records. 5-column rows are single references,
// 8-column rows are pairs; anything else is a FormatError carrying the
// 1-based row number. refs.tsv and pairs.tsv both go through here.
struct ReferenceFile {
    std::vector<CloneReference> references;
    std::vector<ClonePair> pairs;
};

ReferenceFile load_references(const std::string& path);
ReferenceFile parse_references(std::string_view tsv_text);

std::string to_tsv_row(const CloneReference& ref);
std::string to_tsv_row(const ClonePair& pair);

// Keep true positives whose file exists; order preserved.
std::vector<CloneReference> filter_true_positives(
    const std::vector<CloneReference>& refs, const std::set<std::string>& files);

// Per functionality folder: seeded shuffle, then largest-remainder allocation
// on 80/10/10 quotas (validation before testing on ties), then exact-content
// dedup across everything allocated so far.
CorpusSplit stratified_split(
    const std::map<int, std::vector<std::string>>& files_by_functionality,
    const std::string& source_dir, std::uint64_t seed);

// Overlapping or nested references keep the earliest-starting (then longest);
// the rest land in `dropped` when given. Returns the retained refs sorted by
// start line — the order their markers appear in.
std::vector<CloneReference> resolve_overlaps(
    const std::vector<CloneReference>& refs,
    std::vector<CloneReference>* dropped = nullptr);

// Insert one <soc>/<eoc> pair per retained reference (after overlap
// resolution). Throws RangeError when a reference's line span holds no
// tokens.
TokenStream mark_clones(const TokenStream& stream,
                        const std::vector<CloneReference>& refs,
                        std::vector<CloneReference>* dropped = nullptr);

struct BuildResult {
    // per split: files written, clone methods marked, tokens emitted
    struct Totals {
        std::size_t files = 0;
        std::size_t clone_methods = 0;
        std::size_t tokens = 0;
    };
    Totals training, validation, testing;
    std::vector<std::string> errors;  // per-file failures, reported not dropped
};

// Tokenize -> mark -> replace literals -> append, one corpus line per file,
// into train.txt/valid.txt/test.txt under output_dir, plus manifest.json.
BuildResult build_corpus(const CorpusSplit& split,
                         const std::vector<CloneReference>& refs,
                         const std::string& source_dir,
                         const std::string& output_dir);

// Similarity mean/variance per functionality over the given pairs.
std::vector<FunctionalityStats> similarity_stats(const std::vector<ClonePair>& pairs);

}  // namespace clonelm::corpus
