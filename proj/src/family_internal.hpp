#pragma once

#include <span>
#include <vector>

#include "clonelm/model.hpp"

namespace clonelm::nn::detail {

// Shared softmax + cross-entropy head. Returns the summed NLL over scored
// targets; fills target_log_probs (one slot per row, 0.0 where unscored) and,
// when dlogits is non-null, (softmax - onehot) * grad_scale rows (zero rows
// where unscored).
double softmax_cross_entropy(std::span<const double> logits, std::size_t rows,
                             std::size_t vocab, std::span<const TokenId> targets,
                             double grad_scale,
                             std::vector<double>* target_log_probs,
                             std::vector<double>* dlogits);

double gru_process(const ModelParameters& params, std::span<const TokenId> ids,
                   std::span<const TokenId> targets, double grad_scale,
                   std::vector<double>* logits_out,
                   std::vector<double>* target_log_probs, std::vector<Tensor>* grads);

double transformer_process(const ModelParameters& params, std::span<const TokenId> ids,
                           std::span<const TokenId> targets, double grad_scale,
                           std::vector<double>* logits_out,
                           std::vector<double>* target_log_probs,
                           std::vector<Tensor>* grads);

}  // namespace clonelm::nn::detail
