#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clonelm/decoder.hpp"
#include "clonelm/model.hpp"

namespace clonelm::eval {

using nn::TokenId;

// Any next-token distribution source; lets the metrics run against toy
// distributions as well as trained models.
using DistributionFn =
    std::function<std::vector<double>(std::span<const TokenId> context)>;

DistributionFn model_distribution(const nn::ModelParameters& params);

// exp(-1/M * sum log P(t_i | t_0..t_{i-1})) over i in [scored_begin,
// scored_end). Positions before the range only condition.
double perplexity(const DistributionFn& model, std::span<const TokenId> ids,
                  std::size_t scored_begin, std::size_t scored_end);

// Fraction of rankings whose truth appears in the first k ids.
double top_k_accuracy(const std::vector<gen::PredictionRanking>& rankings,
                      const std::vector<TokenId>& truths, std::size_t k);

// Mean reciprocal rank; a truth absent from its ranking contributes 0.
double mrr(const std::vector<gen::PredictionRanking>& rankings,
           const std::vector<TokenId>& truths);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

RougeScore rouge_n(std::span<const std::string> candidate,
                   std::span<const std::string> reference, std::size_t n);
RougeScore rouge_l(std::span<const std::string> candidate,
                   std::span<const std::string> reference);

// One-tailed Wilcoxon rank-sum for the alternative "a < b" (midranks for
// ties). Exact enumeration when |a|+|b| <= 12, normal approximation with
// continuity correction beyond that.
double wilcoxon_one_tailed(std::span<const double> a, std::span<const double> b);
double wilcoxon_exact(std::span<const double> a, std::span<const double> b);
double wilcoxon_normal_approx(std::span<const double> a, std::span<const double> b);

}  // namespace clonelm::eval
