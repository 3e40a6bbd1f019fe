#include "clonelm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "clonelm/decoder.hpp"
#include "clonelm/errors.hpp"
#include "clonelm/util.hpp"

namespace clonelm::eval {

std::vector<SnippetInterval> extract_clone_snippets(std::span<const TokenId> line,
                                                    TokenId soc_id, TokenId eoc_id) {
    std::vector<SnippetInterval> snippets;
    std::size_t open = line.size();
    bool is_open = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == soc_id) {
            if (is_open) throw UnbalancedMarkers(i, "nested <soc>");
            open = i;
            is_open = true;
        } else if (line[i] == eoc_id) {
            if (!is_open) throw UnbalancedMarkers(i, "<eoc> without matching <soc>");
            snippets.push_back({open, i + 1});
            is_open = false;
        }
    }
    if (is_open) throw UnbalancedMarkers(open, "unclosed <soc>");
    return snippets;
}

std::vector<SnippetInterval> non_clone_regions(
    const std::vector<SnippetInterval>& snippets, std::size_t line_length) {
    std::vector<SnippetInterval> regions;
    std::size_t cursor = 0;
    for (const SnippetInterval& s : snippets) {
        if (s.begin > cursor) regions.push_back({cursor, s.begin});
        cursor = s.end;
    }
    if (cursor < line_length) regions.push_back({cursor, line_length});
    return regions;
}

std::vector<CloneContext> extract_clone_contexts(
    const std::vector<std::vector<std::string>>& token_lines, std::size_t window,
    std::size_t count, std::uint64_t seed) {
    std::vector<CloneContext> qualifying;
    for (std::size_t li = 0; li < token_lines.size(); ++li) {
        const std::vector<std::string>& line = token_lines[li];
        if (line.size() < window) continue;
        for (std::size_t start = 0; start + window <= line.size(); ++start) {
            bool has_soc = false;
            for (std::size_t j = start; j < start + window; ++j) {
                if (line[j] == kSoc) {
                    has_soc = true;
                    break;
                }
            }
            if (has_soc) {
                qualifying.push_back(
                    {li, start,
                     std::vector<std::string>(line.begin() + static_cast<std::ptrdiff_t>(start),
                                              line.begin() + static_cast<std::ptrdiff_t>(start + window))});
            }
        }
    }
    if (qualifying.empty())
        throw DegenerateInput("no window of " + std::to_string(window) +
                              " tokens contains <soc>");
    if (count >= qualifying.size()) return qualifying;

    std::vector<std::size_t> order(qualifying.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    deterministic_shuffle(order, rng);
    order.resize(count);
    std::sort(order.begin(), order.end());

    std::vector<CloneContext> sampled;
    sampled.reserve(count);
    for (std::size_t i : order) sampled.push_back(std::move(qualifying[i]));
    return sampled;
}

CloneVsNonClone clone_vs_nonclone(std::span<const double> clone_perplexities,
                                  std::span<const double> nonclone_perplexities) {
    if (clone_perplexities.empty() || nonclone_perplexities.empty())
        throw DegenerateInput("need at least one clone and one non-clone perplexity");
    CloneVsNonClone out;
    out.clone_mean = std::accumulate(clone_perplexities.begin(),
                                     clone_perplexities.end(), 0.0) /
                     static_cast<double>(clone_perplexities.size());
    out.nonclone_mean = std::accumulate(nonclone_perplexities.begin(),
                                        nonclone_perplexities.end(), 0.0) /
                        static_cast<double>(nonclone_perplexities.size());
    out.p_value = wilcoxon_one_tailed(clone_perplexities, nonclone_perplexities);
    return out;
}

namespace {

using json = nlohmann::ordered_json;

std::vector<std::vector<TokenId>> encode_lines(
    const std::vector<std::vector<std::string>>& token_lines,
    const bpe::MergeTable& merges, const bpe::Vocabulary& vocab) {
    std::vector<std::vector<TokenId>> out;
    out.reserve(token_lines.size());
    for (const std::vector<std::string>& line : token_lines)
        out.push_back(vocab.ids_of(bpe::encode(line, merges)));
    return out;
}

// Perplexity of one interval, conditioning on up to context_length preceding
// ids of the same line. Position 0 of a line can never be scored.
std::optional<double> interval_perplexity(const nn::ModelParameters& params,
                                          std::span<const TokenId> line,
                                          SnippetInterval interval) {
    std::size_t ctx = params.config.context_length;
    std::size_t ctx_begin = interval.begin >= ctx ? interval.begin - ctx : 0;
    std::size_t rel_begin = interval.begin - ctx_begin;
    if (rel_begin == 0) rel_begin = 1;
    if (interval.end - ctx_begin <= rel_begin) return std::nullopt;

    std::span<const TokenId> seq = line.subspan(ctx_begin, interval.end - ctx_begin);
    std::vector<double> logps = nn::line_log_probs(params, seq);
    double nll = 0.0;
    std::size_t scored = 0;
    for (std::size_t p = rel_begin; p < seq.size(); ++p) {
        nll -= logps[p - 1];
        ++scored;
    }
    return std::exp(nll / static_cast<double>(scored));
}

MeanStdev summarize(const std::vector<double>& values) {
    MeanStdev out;
    if (values.empty()) return out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - out.mean) * (v - out.mean);
    out.stdev = std::sqrt(var / static_cast<double>(values.size()));
    return out;
}

// Rank positions over every scorable test position, windowed like
// line_log_probs so conditioning matches the reported perplexities.
void ranking_pass(const nn::ModelParameters& params,
                  const std::vector<std::vector<TokenId>>& id_lines,
                  const std::vector<std::size_t>& ks, std::size_t mrr_cutoff,
                  std::map<std::size_t, double>& top_k_out, double& mrr_out) {
    const std::size_t vocab = params.config.vocab_size;
    const std::size_t window = params.config.context_length;
    const bool is_gru = params.config.family == nn::Family::Gru;

    std::map<std::size_t, std::size_t> hits;
    for (std::size_t k : ks) hits[k] = 0;
    double mrr_sum = 0.0;
    std::size_t positions = 0;

    std::vector<double> logits;
    for (const std::vector<TokenId>& line : id_lines) {
        if (line.size() < 2) continue;
        std::size_t start = 0;
        while (true) {
            std::size_t end =
                is_gru ? line.size() : std::min(start + window + 1, line.size());
            std::span<const TokenId> seq(line.data() + start, end - start);
            std::span<const TokenId> input = seq.subspan(0, seq.size() - 1);
            nn::detail::forward_backward(params, input, {}, 0.0, &logits, nullptr,
                                         nullptr);
            for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
                const double* row = logits.data() + t * vocab;
                TokenId truth = seq[t + 1];
                double truth_logit = row[static_cast<std::size_t>(truth)];
                std::size_t rank = 1;
                for (std::size_t j = 0; j < vocab; ++j) {
                    if (row[j] > truth_logit ||
                        (row[j] == truth_logit &&
                         static_cast<TokenId>(j) < truth))
                        ++rank;
                }
                for (std::size_t k : ks)
                    if (rank <= k) ++hits[k];
                if (rank <= mrr_cutoff) mrr_sum += 1.0 / static_cast<double>(rank);
                ++positions;
            }
            if (end == line.size()) break;
            start = end - 1;
        }
    }

    for (std::size_t k : ks)
        top_k_out[k] = positions == 0 ? 0.0
                                      : static_cast<double>(hits[k]) /
                                            static_cast<double>(positions);
    mrr_out = positions == 0 ? 0.0 : mrr_sum / static_cast<double>(positions);
}

// Decode that tolerates a trailing truncated piece: the fragment is dropped.
std::vector<std::string> decode_lenient(std::vector<std::string> subwords) {
    while (!subwords.empty()) {
        try {
            return bpe::decode(subwords);
        } catch (const DanglingContinuation&) {
            subwords.pop_back();
        }
    }
    return {};
}

}  // namespace

EvalReport evaluate(const nn::ModelParameters& params, const EvalCorpus& corpus_data,
                    const bpe::MergeTable& merges, const bpe::Vocabulary& vocab,
                    const std::vector<corpus::ClonePair>& pairs,
                    const EvalOptions& options) {
    EvalReport report;
    const TokenId soc_id = vocab.id_of(kSoc);
    const TokenId eoc_id = vocab.id_of(kEoc);

    std::vector<std::vector<TokenId>> valid_ids =
        encode_lines(corpus_data.valid_token_lines, merges, vocab);
    std::vector<std::vector<TokenId>> test_ids =
        encode_lines(corpus_data.test_token_lines, merges, vocab);

    report.validation_perplexity = nn::corpus_perplexity(params, valid_ids);
    report.test_perplexity = nn::corpus_perplexity(params, test_ids);

    if (options.ablation) {
        report.test_perplexity_no_markers =
            marker_ablation(params, corpus_data.test_token_lines, merges, vocab).second;
    }

    // --- clone vs non-clone, per functionality -------------------------------
    std::vector<double> clone_ppls, nonclone_ppls;
    std::map<int, std::vector<double>> ppls_by_functionality;

    for (std::size_t li = 0; li < test_ids.size(); ++li) {
        const std::vector<TokenId>& line = test_ids[li];
        std::vector<SnippetInterval> snippets =
            extract_clone_snippets(line, soc_id, eoc_id);

        const std::vector<int>* fids = nullptr;
        if (li < corpus_data.test_clone_functionalities.size() &&
            corpus_data.test_clone_functionalities[li].size() == snippets.size())
            fids = &corpus_data.test_clone_functionalities[li];

        for (std::size_t si = 0; si < snippets.size(); ++si) {
            std::optional<double> ppl = interval_perplexity(params, line, snippets[si]);
            if (!ppl) continue;
            clone_ppls.push_back(*ppl);
            int fid = fids ? (*fids)[si] : -1;
            ppls_by_functionality[fid].push_back(*ppl);
        }
        for (const SnippetInterval& region : non_clone_regions(snippets, line.size())) {
            std::optional<double> ppl = interval_perplexity(params, line, region);
            if (ppl) nonclone_ppls.push_back(*ppl);
        }
    }

    if (!clone_ppls.empty() && !nonclone_ppls.empty()) {
        CloneVsNonClone cvn = clone_vs_nonclone(clone_ppls, nonclone_ppls);
        report.clone_mean_perplexity = cvn.clone_mean;
        report.nonclone_mean_perplexity = cvn.nonclone_mean;
        report.wilcoxon_p = cvn.p_value;
    } else {
        report.clone_mean_perplexity = std::nan("");
        report.nonclone_mean_perplexity = std::nan("");
        report.wilcoxon_p = std::nan("");
    }

    // --- token prediction accuracy -------------------------------------------
    std::size_t mrr_cutoff = 10;
    for (std::size_t k : options.top_k) mrr_cutoff = std::max(mrr_cutoff, k);
    ranking_pass(params, test_ids, options.top_k, mrr_cutoff, report.top_k,
                 report.mrr_score);

    // --- clone completion quality (ROUGE vs ground truth) --------------------
    std::vector<double> r1p, r1r, r1f, r2p, r2r, r2f, rlp, rlr, rlf;
    std::size_t eoc_terminations = 0;
    std::vector<CloneContext> contexts;
    try {
        contexts = extract_clone_contexts(corpus_data.test_token_lines,
                                          options.context_window,
                                          options.rouge_samples, options.seed);
    } catch (const DegenerateInput&) {
        contexts.clear();
    }

    std::size_t sample_index = 0;
    for (const CloneContext& ctx : contexts) {
        const std::vector<std::string>& line = corpus_data.test_token_lines[ctx.line];
        std::size_t window_end = ctx.start + options.context_window;

        // the clone being completed: last <soc> inside the window
        std::size_t soc_at = line.size();
        for (std::size_t j = ctx.start; j < window_end; ++j)
            if (line[j] == kSoc) soc_at = j;
        std::size_t eoc_at = line.size();
        for (std::size_t j = soc_at + 1; j < line.size(); ++j) {
            if (line[j] == kEoc) {
                eoc_at = j;
                break;
            }
        }
        if (eoc_at == line.size() || eoc_at < window_end) continue;  // nothing to predict

        std::vector<TokenId> context_ids = vocab.ids_of(bpe::encode(ctx.tokens, merges));
        gen::GenerationConfig gcfg;
        gcfg.strategy = gen::Strategy::Nucleus;
        gcfg.nucleus_p = options.nucleus_p;
        gcfg.max_new_tokens = options.max_new_tokens;
        gcfg.seed = options.seed + 0x9e3779b9u + sample_index++;
        gen::Completion completion =
            gen::complete_clone(params, context_ids, eoc_id, gcfg);
        if (completion.reason == gen::Termination::Eoc) ++eoc_terminations;

        std::vector<std::string> candidate =
            decode_lenient(vocab.texts_of(completion.ids));
        std::vector<std::string> reference(
            line.begin() + static_cast<std::ptrdiff_t>(window_end),
            line.begin() + static_cast<std::ptrdiff_t>(eoc_at + 1));

        RougeScore r1 = rouge_n(candidate, reference, 1);
        RougeScore r2 = rouge_n(candidate, reference, 2);
        RougeScore rl = rouge_l(candidate, reference);
        r1p.push_back(r1.precision); r1r.push_back(r1.recall); r1f.push_back(r1.f_measure);
        r2p.push_back(r2.precision); r2r.push_back(r2.recall); r2f.push_back(r2.f_measure);
        rlp.push_back(rl.precision); rlr.push_back(rl.recall); rlf.push_back(rl.f_measure);
    }
    report.completion_samples = r1f.size();
    report.completion_eoc_rate =
        sample_index == 0 ? 0.0
                          : static_cast<double>(eoc_terminations) /
                                static_cast<double>(sample_index);
    report.rouge["rouge1"] = {summarize(r1p), summarize(r1r), summarize(r1f)};
    report.rouge["rouge2"] = {summarize(r2p), summarize(r2r), summarize(r2f)};
    report.rouge["rougeL"] = {summarize(rlp), summarize(rlr), summarize(rlf)};

    // --- per-functionality table ----------------------------------------------
    std::vector<corpus::FunctionalityStats> sim_stats = corpus::similarity_stats(pairs);
    std::set<int> fids;
    for (const corpus::FunctionalityStats& s : sim_stats) fids.insert(s.functionality_id);
    for (const auto& [fid, count] : corpus_data.training_snippet_counts) fids.insert(fid);
    for (const auto& [fid, ppls] : ppls_by_functionality)
        if (fid >= 0) fids.insert(fid);

    for (int fid : fids) {
        FunctionalityRow row;
        row.stats.functionality_id = fid;
        for (const corpus::FunctionalityStats& s : sim_stats) {
            if (s.functionality_id == fid) {
                row.stats = s;
                break;
            }
        }
        auto train_it = corpus_data.training_snippet_counts.find(fid);
        if (train_it != corpus_data.training_snippet_counts.end())
            row.stats.training_snippet_count = train_it->second;
        auto ppl_it = ppls_by_functionality.find(fid);
        if (ppl_it != ppls_by_functionality.end() && !ppl_it->second.empty()) {
            row.test_snippet_count = ppl_it->second.size();
            row.mean_snippet_perplexity = summarize(ppl_it->second).mean;
        }
        report.per_functionality.push_back(row);
    }

    return report;
}

CloneVsNonClone clone_vs_nonclone_report(
    const nn::ModelParameters& params,
    const std::vector<std::vector<TokenId>>& test_id_lines, TokenId soc_id,
    TokenId eoc_id) {
    std::vector<double> clone_ppls, nonclone_ppls;
    for (const std::vector<TokenId>& line : test_id_lines) {
        std::vector<SnippetInterval> snippets =
            extract_clone_snippets(line, soc_id, eoc_id);
        for (const SnippetInterval& s : snippets) {
            std::optional<double> ppl = interval_perplexity(params, line, s);
            if (ppl) clone_ppls.push_back(*ppl);
        }
        for (const SnippetInterval& r : non_clone_regions(snippets, line.size())) {
            std::optional<double> ppl = interval_perplexity(params, line, r);
            if (ppl) nonclone_ppls.push_back(*ppl);
        }
    }
    return clone_vs_nonclone(clone_ppls, nonclone_ppls);
}

std::pair<double, double> marker_ablation(
    const nn::ModelParameters& params,
    const std::vector<std::vector<std::string>>& test_token_lines,
    const bpe::MergeTable& merges, const bpe::Vocabulary& vocab) {
    double with_markers = nn::corpus_perplexity(
        params, encode_lines(test_token_lines, merges, vocab));

    std::vector<std::vector<std::string>> stripped = test_token_lines;
    for (std::vector<std::string>& line : stripped) {
        std::erase_if(line,
                      [](const std::string& t) { return t == kSoc || t == kEoc; });
    }
    double without_markers =
        nn::corpus_perplexity(params, encode_lines(stripped, merges, vocab));
    return {with_markers, without_markers};
}

std::string EvalReport::to_json() const {
    auto ms = [](const MeanStdev& m) {
        return json{{"mean", m.mean}, {"stdev", m.stdev}};
    };

    json j;
    j["scoring"] = {{"unit", "subword"},
                    {"conditioning", "windowed at context_length per corpus line"}};
    json ppl;
    ppl["validation"] = validation_perplexity;
    ppl["test"] = test_perplexity;
    if (test_perplexity_no_markers)
        ppl["test_no_markers"] = *test_perplexity_no_markers;
    else
        ppl["test_no_markers"] = nullptr;
    ppl["clone_mean"] = clone_mean_perplexity;
    ppl["nonclone_mean"] = nonclone_mean_perplexity;
    j["perplexity"] = ppl;
    j["wilcoxon_p"] = wilcoxon_p;
    j["mrr"] = mrr_score;
    json topk;
    for (const auto& [k, acc] : top_k) topk[std::to_string(k)] = acc;
    j["top_k"] = topk;
    json rj;
    for (const char* name : {"rouge1", "rouge2", "rougeL"}) {
        auto it = rouge.find(name);
        if (it == rouge.end()) continue;
        rj[name] = {{"precision", ms(it->second.precision)},
                    {"recall", ms(it->second.recall)},
                    {"f_measure", ms(it->second.f_measure)}};
    }
    j["rouge"] = rj;
    j["completion"] = {{"samples", completion_samples},
                       {"eoc_rate", completion_eoc_rate}};
    json table = json::array();
    for (const FunctionalityRow& row : per_functionality) {
        json r;
        r["functionality_id"] = row.stats.functionality_id;
        r["training_snippet_count"] = row.stats.training_snippet_count;
        r["similarity_mean"] = row.stats.similarity_mean;
        r["similarity_variance"] = row.stats.similarity_variance;
        r["test_snippet_count"] = row.test_snippet_count;
        if (row.mean_snippet_perplexity)
            r["mean_snippet_perplexity"] = *row.mean_snippet_perplexity;
        else
            r["mean_snippet_perplexity"] = nullptr;  // no evaluation
        table.push_back(r);
    }
    j["per_functionality"] = table;
    return j.dump(2) + "\n";
}

}  // namespace clonelm::eval
