#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "clonelm/model.hpp"
#include "clonelm/util.hpp"

namespace clonelm::gen {

using nn::TokenId;

enum class Strategy { Greedy, Nucleus };

Strategy parse_strategy(std::string_view name);
std::string_view strategy_name(Strategy s);

struct GenerationConfig {
    Strategy strategy = Strategy::Nucleus;
    double nucleus_p = 0.95;
    std::size_t max_new_tokens = 512;
    std::uint64_t seed = 0;
};

struct PredictionRanking {
    std::vector<TokenId> ids;         // probability descending, ties by lower id
    std::vector<double> probabilities;
};

// The k most probable next ids with their exact probabilities.
PredictionRanking rank_top_k(const nn::ModelParameters& params,
                             std::span<const TokenId> context, std::size_t k);

// Smallest probability-sorted prefix reaching mass p, renormalized. Pure
// function over a distribution; the model wrapper is below.
TokenId nucleus_sample_from(std::span<const double> probs, double p, Rng& rng);

// Indices of the minimal top-p set (probability descending, ties by id).
std::vector<TokenId> nucleus_support(std::span<const double> probs, double p);

TokenId sample_nucleus(const nn::ModelParameters& params,
                       std::span<const TokenId> context, double p, Rng& rng);

enum class Termination { Eoc, Truncated };

struct Completion {
    std::vector<TokenId> ids;  // generated ids only; <eoc> included when reached
    Termination reason = Termination::Truncated;
};

// Generate until eoc_id appears or max_new_tokens is hit. Deterministic per
// config seed; greedy ignores the seed entirely.
Completion complete_clone(const nn::ModelParameters& params,
                          std::span<const TokenId> context, TokenId eoc_id,
                          const GenerationConfig& config);

}  // namespace clonelm::gen
