#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clonelm::nn {

using TokenId = std::int32_t;

enum class Family { Gru, Transformer };
enum class Precision { F32, F64 };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
std::string_view precision_name(Precision p);
Precision parse_precision(std::string_view name);

struct ModelConfig {
    Family family = Family::Gru;
    std::size_t vocab_size = 0;
    std::size_t embedding_dim = 0;   // model width for the transformer
    std::size_t hidden_dim = 0;      // GRU state size / transformer FFN inner size
    std::size_t num_layers = 1;
    std::size_t num_heads = 1;       // transformer only
    std::size_t context_length = 2;
    double init_scale = 0.02;

    void validate() const;  // throws ConfigError

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Tensor {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double* data() { return values.data(); }
    const double* data() const { return values.data(); }

    static Tensor zeros(std::string name, std::vector<std::size_t> dims);
};

struct ModelParameters {
    ModelConfig config;
    Precision precision = Precision::F64;
    std::vector<Tensor> tensors;

    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    std::size_t parameter_count() const;

    // Round every value through IEEE-754 binary32; no-op in f64 mode.
    void quantize_to_precision();
};

// Named zero tensors in the family's canonical order.
std::vector<Tensor> parameter_layout(const ModelConfig& config);

// Zero-mean normal weights (std = init_scale), zero biases, unit norm gains.
// Deterministic per seed.
ModelParameters init_model(const ModelConfig& config, std::uint64_t seed,
                           Precision precision = Precision::F64);

// P(next | context) over the whole vocabulary. The transformer conditions on
// the last context_length ids; the GRU consumes everything.
std::vector<double> next_token_distribution(const ModelParameters& params,
                                            std::span<const TokenId> context);

// log P(t_i | t_0..t_{i-1}) for every i in [1, len). Transformer input must
// fit its context window; callers window longer sequences.
std::vector<double> sequence_log_probs(const ModelParameters& params,
                                       std::span<const TokenId> ids);

struct LossAndGradients {
    double loss = 0.0;                // mean NLL over all predicted positions
    std::size_t positions = 0;
    std::vector<Tensor> gradients;    // same order/shapes as params.tensors
};

// Every position after the first of every sequence is a prediction target.
LossAndGradients batch_loss_and_gradients(
    const ModelParameters& params, const std::vector<std::vector<TokenId>>& batch);

struct TrainingConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    double learning_rate = 0.1;
    std::size_t grad_accumulation_steps = 1;
    std::size_t checkpoint_interval = 10;  // optimizer steps
    std::uint64_t seed = 0;
    Precision precision = Precision::F64;

    void validate() const;
};

struct CheckpointRecord {
    std::size_t step = 0;
    double train_loss = 0.0;
    double learning_rate = 0.0;
    double validation_perplexity = 0.0;
};

struct TrainingLog {
    std::vector<CheckpointRecord> records;

    std::string to_jsonl() const;
    std::string to_csv() const;
};

struct TrainResult {
    ModelParameters best;
    TrainingLog log;
    double best_validation_perplexity = 0.0;
    std::size_t best_step = 0;
};

// Plain mini-batch SGD with linear learning-rate decay to zero and gradient
// accumulation. Lines are windowed into context_length+1 chunks (stride
// context_length). Checkpoints go to checkpoint_dir when non-empty:
// checkpoint_last.clmc every interval, checkpoint_best.clmc on validation
// improvement. Throws NumericalError on a non-finite loss; the files written
// so far stay on disk.
TrainResult train(const std::vector<std::vector<TokenId>>& train_lines,
                  const std::vector<std::vector<TokenId>>& valid_lines,
                  const ModelConfig& model_config, const TrainingConfig& training_config,
                  const std::string& checkpoint_dir = "");

// Versioned binary checkpoint: CLMC magic, config JSON, named tensors,
// trailing CRC-32. Values are stored at the parameters' declared precision.
void save_checkpoint(const ModelParameters& params, const std::string& path);
ModelParameters load_checkpoint(const std::string& path);

// exp(mean NLL) over every scorable position of every line, windowed per the
// family's context rules. This is the number logged as validation perplexity.
double corpus_perplexity(const ModelParameters& params,
                         const std::vector<std::vector<TokenId>>& lines);

// Per-line scored log-probs, windowing transformer input with stride
// context_length-1 so each position i >= 1 is scored exactly once.
std::vector<double> line_log_probs(const ModelParameters& params,
                                   std::span<const TokenId> ids);

namespace detail {

// Family dispatch. Row t of the logits scores position t+1. When grads is
// non-null, targets/grad_scale drive a fused backward pass; the return value
// is the summed NLL over scored targets (targets[t] < 0 = unscored).
// target_log_probs, when given, receives log P(targets[t] | ...) per row.
double forward_backward(const ModelParameters& params, std::span<const TokenId> ids,
                        std::span<const TokenId> targets, double grad_scale,
                        std::vector<double>* logits_out,
                        std::vector<double>* target_log_probs,
                        std::vector<Tensor>* grads);

}  // namespace detail

}  // namespace clonelm::nn
