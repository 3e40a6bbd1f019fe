#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clonelm/bpe.hpp"
#include "clonelm/corpus.hpp"
#include "clonelm/metrics.hpp"
#include "clonelm/model.hpp"

namespace clonelm::eval {

// [begin, end) over one line of ids, both markers included.
struct SnippetInterval {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// Marker pairs of one line, validated: markers never nest, every <soc>
// closes. Throws UnbalancedMarkers with the offending position.
std::vector<SnippetInterval> extract_clone_snippets(std::span<const TokenId> line,
                                                    TokenId soc_id, TokenId eoc_id);

// Complement of the snippet intervals over [0, line_length).
std::vector<SnippetInterval> non_clone_regions(
    const std::vector<SnippetInterval>& snippets, std::size_t line_length);

// A sliding token window qualifying for clone completion (contains <soc>).
struct CloneContext {
    std::size_t line = 0;   // index into the token-line list
    std::size_t start = 0;  // window start within the line
    std::vector<std::string> tokens;
};

// All stride-1 windows containing <soc>, then a seeded sample of `count`
// (everything, when fewer qualify). Throws DegenerateInput when no window
// contains a marker.
std::vector<CloneContext> extract_clone_contexts(
    const std::vector<std::vector<std::string>>& token_lines, std::size_t window,
    std::size_t count, std::uint64_t seed);

struct MeanStdev {
    double mean = 0.0;
    double stdev = 0.0;
};

struct RougeSummary {
    MeanStdev precision, recall, f_measure;
};

struct FunctionalityRow {
    corpus::FunctionalityStats stats;
    std::size_t test_snippet_count = 0;
    std::optional<double> mean_snippet_perplexity;  // empty = no evaluation
};

struct EvalOptions {
    std::vector<std::size_t> top_k = {1, 3, 5, 10};
    bool ablation = true;
    std::size_t rouge_samples = 50;
    std::size_t context_window = 20;  // tokens per completion context
    std::size_t max_new_tokens = 512;
    double nucleus_p = 0.95;
    std::uint64_t seed = 0;
};

struct EvalCorpus {
    std::vector<std::vector<std::string>> valid_token_lines;
    std::vector<std::vector<std::string>> test_token_lines;
    // marker-pair functionality ids per test line, in marker order
    std::vector<std::vector<int>> test_clone_functionalities;
    std::map<int, std::size_t> training_snippet_counts;
};

struct EvalReport {
    double validation_perplexity = 0.0;             // P1 analog
    double test_perplexity = 0.0;                   // P2
    std::optional<double> test_perplexity_no_markers;  // P3
    double clone_mean_perplexity = 0.0;             // P4
    double nonclone_mean_perplexity = 0.0;          // P5
    double wilcoxon_p = 1.0;
    double mrr_score = 0.0;
    std::map<std::size_t, double> top_k;
    std::map<std::string, RougeSummary> rouge;      // rouge1 / rouge2 / rougeL
    double completion_eoc_rate = 0.0;
    std::size_t completion_samples = 0;
    std::vector<FunctionalityRow> per_functionality;

    std::string to_json() const;  // fixed key order
};

EvalReport evaluate(const nn::ModelParameters& params, const EvalCorpus& corpus_data,
                    const bpe::MergeTable& merges, const bpe::Vocabulary& vocab,
                    const std::vector<corpus::ClonePair>& pairs,
                    const EvalOptions& options);

// Perplexity with markers (first) and with every <soc>/<eoc> removed before
// encoding (second). Equal by construction on a marker-free corpus.
std::pair<double, double> marker_ablation(
    const nn::ModelParameters& params,
    const std::vector<std::vector<std::string>>& test_token_lines,
    const bpe::MergeTable& merges, const bpe::Vocabulary& vocab);

// Mean perplexities and the rank-sum p-value over per-snippet scores;
// exposed separately for the clone-vs-non-clone aggregation contract.
struct CloneVsNonClone {
    double clone_mean = 0.0;
    double nonclone_mean = 0.0;
    double p_value = 1.0;
};

CloneVsNonClone clone_vs_nonclone(std::span<const double> clone_perplexities,
                                  std::span<const double> nonclone_perplexities);

// Scores every marked snippet and non-clone region of the test lines
// (conditioning on up to context_length preceding ids) and aggregates.
// Throws DegenerateInput when either side is empty.
CloneVsNonClone clone_vs_nonclone_report(
    const nn::ModelParameters& params,
    const std::vector<std::vector<TokenId>>& test_id_lines, TokenId soc_id,
    TokenId eoc_id);

}  // namespace clonelm::eval
