#include "clonelm/decoder.hpp"

#include <algorithm>
#include <numeric>

#include "clonelm/errors.hpp"

namespace clonelm::gen {

Strategy parse_strategy(std::string_view name) {
    if (name == "greedy") return Strategy::Greedy;
    if (name == "nucleus") return Strategy::Nucleus;
    throw ConfigError("unknown generation strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(Strategy s) {
    return s == Strategy::Greedy ? "greedy" : "nucleus";
}

namespace {

// ids sorted by probability descending, ties by lower id
std::vector<TokenId> sorted_ids(std::span<const double> probs) {
    std::vector<TokenId> order(probs.size());
    std::iota(order.begin(), order.end(), TokenId{0});
    std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
        double pa = probs[static_cast<std::size_t>(a)];
        double pb = probs[static_cast<std::size_t>(b)];
        if (pa != pb) return pa > pb;
        return a < b;
    });
    return order;
}

TokenId argmax_id(std::span<const double> probs) {
    TokenId best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[static_cast<std::size_t>(best)])
            best = static_cast<TokenId>(i);
    return best;
}

}  // namespace

PredictionRanking rank_top_k(const nn::ModelParameters& params,
                             std::span<const TokenId> context, std::size_t k) {
    std::vector<double> probs = nn::next_token_distribution(params, context);
    std::vector<TokenId> order = sorted_ids(probs);
    k = std::min(k, order.size());

    PredictionRanking ranking;
    ranking.ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    ranking.probabilities.reserve(k);
    for (TokenId id : ranking.ids)
        ranking.probabilities.push_back(probs[static_cast<std::size_t>(id)]);
    return ranking;
}

std::vector<TokenId> nucleus_support(std::span<const double> probs, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("nucleus p must be in (0, 1]");
    std::vector<TokenId> order = sorted_ids(probs);
    std::vector<TokenId> support;
    double mass = 0.0;
    for (TokenId id : order) {
        support.push_back(id);
        mass += probs[static_cast<std::size_t>(id)];
        // the comparison tolerates summation error when the prefix mass lands
        // exactly on p
        if (mass >= p - 1e-12) break;
    }
    return support;
}

TokenId nucleus_sample_from(std::span<const double> probs, double p, Rng& rng) {
    std::vector<TokenId> support = nucleus_support(probs, p);
    double mass = 0.0;
    for (TokenId id : support) mass += probs[static_cast<std::size_t>(id)];

    double u = rng.uniform() * mass;
    double cum = 0.0;
    for (TokenId id : support) {
        cum += probs[static_cast<std::size_t>(id)];
        if (u < cum) return id;
    }
    return support.back();  // guard against floating-point edge at u == mass
}

TokenId sample_nucleus(const nn::ModelParameters& params,
                       std::span<const TokenId> context, double p, Rng& rng) {
    std::vector<double> probs = nn::next_token_distribution(params, context);
    return nucleus_sample_from(probs, p, rng);
}

Completion complete_clone(const nn::ModelParameters& params,
                          std::span<const TokenId> context, TokenId eoc_id,
                          const GenerationConfig& config) {
    std::vector<TokenId> running(context.begin(), context.end());
    Rng rng(config.seed);

    Completion completion;
    completion.reason = Termination::Truncated;
    for (std::size_t step = 0; step < config.max_new_tokens; ++step) {
        std::vector<double> probs = nn::next_token_distribution(params, running);
        TokenId next = config.strategy == Strategy::Greedy
                           ? argmax_id(probs)
                           : nucleus_sample_from(probs, config.nucleus_p, rng);
        running.push_back(next);
        completion.ids.push_back(next);
        if (next == eoc_id) {
            completion.reason = Termination::Eoc;
            break;
        }
    }
    return completion;
}

}  // namespace clonelm::gen
