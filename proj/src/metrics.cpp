#include "clonelm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "clonelm/errors.hpp"

namespace clonelm::eval {

DistributionFn model_distribution(const nn::ModelParameters& params) {
    return [&params](std::span<const TokenId> context) {
        return nn::next_token_distribution(params, context);
    };
}

double perplexity(const DistributionFn& model, std::span<const TokenId> ids,
                  std::size_t scored_begin, std::size_t scored_end) {
    if (scored_begin < 1 || scored_end > ids.size() || scored_begin >= scored_end)
        throw DegenerateInput("empty or invalid scored range");

    double nll = 0.0;
    for (std::size_t i = scored_begin; i < scored_end; ++i) {
        std::vector<double> probs = model(ids.subspan(0, i));
        nll -= std::log(probs[static_cast<std::size_t>(ids[i])]);
    }
    return std::exp(nll / static_cast<double>(scored_end - scored_begin));
}

double top_k_accuracy(const std::vector<gen::PredictionRanking>& rankings,
                      const std::vector<TokenId>& truths, std::size_t k) {
    if (rankings.size() != truths.size() || rankings.empty())
        throw LengthMismatch("rankings and truths must have equal non-zero size");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rankings.size(); ++i) {
        const std::vector<TokenId>& ids = rankings[i].ids;
        std::size_t limit = std::min(k, ids.size());
        for (std::size_t j = 0; j < limit; ++j) {
            if (ids[j] == truths[i]) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double mrr(const std::vector<gen::PredictionRanking>& rankings,
           const std::vector<TokenId>& truths) {
    if (rankings.size() != truths.size() || rankings.empty())
        throw LengthMismatch("rankings and truths must have equal non-zero size");
    double sum = 0.0;
    for (std::size_t i = 0; i < rankings.size(); ++i) {
        const std::vector<TokenId>& ids = rankings[i].ids;
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (ids[j] == truths[i]) {
                sum += 1.0 / static_cast<double>(j + 1);
                break;
            }
        }
    }
    return sum / static_cast<double>(rankings.size());
}

namespace {

RougeScore from_overlap(double overlap, double candidate_total, double reference_total) {
    RougeScore score;
    score.precision = candidate_total > 0.0 ? overlap / candidate_total : 0.0;
    score.recall = reference_total > 0.0 ? overlap / reference_total : 0.0;
    double pr = score.precision + score.recall;
    score.f_measure = pr > 0.0 ? 2.0 * score.precision * score.recall / pr : 0.0;
    return score;
}

// n-grams joined on an unprintable separator; token texts never contain it
std::map<std::string, std::size_t> ngram_counts(std::span<const std::string> tokens,
                                                std::size_t n) {
    std::map<std::string, std::size_t> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) {
            if (j > 0) key += '\x1f';
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

RougeScore rouge_n(std::span<const std::string> candidate,
                   std::span<const std::string> reference, std::size_t n) {
    std::map<std::string, std::size_t> cand = ngram_counts(candidate, n);
    std::map<std::string, std::size_t> ref = ngram_counts(reference, n);

    std::size_t overlap = 0, cand_total = 0, ref_total = 0;
    for (const auto& [gram, count] : cand) {
        cand_total += count;
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += std::min(count, it->second);  // clipped
    }
    for (const auto& [gram, count] : ref) ref_total += count;

    return from_overlap(static_cast<double>(overlap), static_cast<double>(cand_total),
                        static_cast<double>(ref_total));
}

RougeScore rouge_l(std::span<const std::string> candidate,
                   std::span<const std::string> reference) {
    const std::size_t m = candidate.size(), n = reference.size();
    if (m == 0 || n == 0) return {};

    std::vector<std::size_t> prev(n + 1, 0), cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            cur[j] = candidate[i - 1] == reference[j - 1]
                         ? prev[j - 1] + 1
                         : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return from_overlap(static_cast<double>(prev[n]), static_cast<double>(m),
                        static_cast<double>(n));
}

namespace {

// Midranks doubled so everything stays in integers.
std::vector<long long> doubled_midranks(std::span<const double> a,
                                        std::span<const double> b) {
    struct Item {
        double value;
        bool from_a;
    };
    std::vector<Item> items;
    items.reserve(a.size() + b.size());
    for (double v : a) items.push_back({v, true});
    for (double v : b) items.push_back({v, false});
    std::stable_sort(items.begin(), items.end(),
                     [](const Item& x, const Item& y) { return x.value < y.value; });

    std::vector<long long> doubled(items.size(), 0);
    std::vector<bool> from_a(items.size(), false);
    for (std::size_t i = 0; i < items.size();) {
        std::size_t j = i;
        while (j < items.size() && items[j].value == items[i].value) ++j;
        long long sum2 = static_cast<long long>(i + 1 + j) * static_cast<long long>(j - i);
        // doubled midrank of the tie group [i, j): (i+1 + j) since the ranks
        // i+1..j average to (i+1+j)/2
        long long mid2 = sum2 / static_cast<long long>(j - i);
        for (std::size_t t = i; t < j; ++t) {
            doubled[t] = mid2;
            from_a[t] = items[t].from_a;
        }
        i = j;
    }
    // reorder: a's doubled midranks first, then b's
    std::vector<long long> out;
    out.reserve(items.size());
    for (std::size_t t = 0; t < items.size(); ++t)
        if (from_a[t]) out.push_back(doubled[t]);
    for (std::size_t t = 0; t < items.size(); ++t)
        if (!from_a[t]) out.push_back(doubled[t]);
    return out;
}

void count_subsets(const std::vector<long long>& ranks2, std::size_t next,
                   std::size_t remaining, long long sum2, long long limit2,
                   long long& at_or_below, long long& total) {
    if (remaining == 0) {
        ++total;
        if (sum2 <= limit2) ++at_or_below;
        return;
    }
    if (next + remaining > ranks2.size()) return;
    count_subsets(ranks2, next + 1, remaining - 1, sum2 + ranks2[next], limit2,
                  at_or_below, total);
    count_subsets(ranks2, next + 1, remaining, sum2, limit2, at_or_below, total);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double wilcoxon_exact(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DegenerateInput("empty sample");
    std::vector<long long> ranks2 = doubled_midranks(a, b);
    long long observed2 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) observed2 += ranks2[i];

    long long at_or_below = 0, total = 0;
    count_subsets(ranks2, 0, a.size(), 0, observed2, at_or_below, total);
    return static_cast<double>(at_or_below) / static_cast<double>(total);
}

double wilcoxon_normal_approx(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DegenerateInput("empty sample");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double n = na + nb;

    std::vector<long long> ranks2 = doubled_midranks(a, b);
    double w = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        w += static_cast<double>(ranks2[i]) / 2.0;

    // tie correction over groups of equal doubled midranks
    std::vector<long long> sorted2(ranks2);
    std::sort(sorted2.begin(), sorted2.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < sorted2.size();) {
        std::size_t j = i;
        while (j < sorted2.size() && sorted2[j] == sorted2[i]) ++j;
        double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }

    const double mean = na * (n + 1.0) / 2.0;
    double variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (variance <= 0.0) return 1.0;  // everything tied: W <= W_obs surely

    double z = (w + 0.5 - mean) / std::sqrt(variance);
    double p = normal_cdf(z);
    return std::min(std::max(p, std::numeric_limits<double>::min()), 1.0);
}

double wilcoxon_one_tailed(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw DegenerateInput("empty sample");
    return a.size() + b.size() <= 12 ? wilcoxon_exact(a, b)
                                     : wilcoxon_normal_approx(a, b);
}

}  // namespace clonelm::eval
