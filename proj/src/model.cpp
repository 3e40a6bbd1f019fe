#include "clonelm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "clonelm/errors.hpp"
#include "clonelm/kernels.hpp"
#include "clonelm/util.hpp"
#include "family_internal.hpp"

namespace clonelm::nn {

std::string_view family_name(Family f) {
    return f == Family::Gru ? "gru" : "transformer";
}

Family parse_family(std::string_view name) {
    if (name == "gru") return Family::Gru;
    if (name == "transformer") return Family::Transformer;
    throw ConfigError("unknown model family '" + std::string(name) + "'");
}

std::string_view precision_name(Precision p) {
    return p == Precision::F32 ? "f32" : "f64";
}

Precision parse_precision(std::string_view name) {
    if (name == "f32") return Precision::F32;
    if (name == "f64") return Precision::F64;
    throw ConfigError("unknown precision '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
    if (context_length < 2) throw ConfigError("context_length must be >= 2");
    if (embedding_dim == 0 || hidden_dim == 0 || num_layers == 0)
        throw ConfigError("embedding_dim, hidden_dim and num_layers must be positive");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale))
        throw ConfigError("init_scale must be finite and non-negative");
    if (family == Family::Transformer) {
        if (num_heads == 0 || embedding_dim % num_heads != 0)
            throw ConfigError("embedding_dim must be divisible by num_heads");
    }
}

Tensor Tensor::zeros(std::string name, std::vector<std::size_t> dims) {
    Tensor t;
    t.name = std::move(name);
    t.dims = std::move(dims);
    std::size_t total = 1;
    for (std::size_t d : t.dims) total *= d;
    t.values.assign(total, 0.0);
    return t;
}

Tensor& ModelParameters::at(std::string_view name) {
    for (Tensor& t : tensors)
        if (t.name == name) return t;
    throw ConfigError("no tensor named '" + std::string(name) + "'");
}

const Tensor& ModelParameters::at(std::string_view name) const {
    for (const Tensor& t : tensors)
        if (t.name == name) return t;
    throw ConfigError("no tensor named '" + std::string(name) + "'");
}

std::size_t ModelParameters::parameter_count() const {
    std::size_t total = 0;
    for (const Tensor& t : tensors) total += t.size();
    return total;
}

void ModelParameters::quantize_to_precision() {
    if (precision == Precision::F64) return;
    for (Tensor& t : tensors)
        for (double& v : t.values) v = static_cast<double>(static_cast<float>(v));
}

std::vector<Tensor> parameter_layout(const ModelConfig& c) {
    std::vector<Tensor> layout;
    const std::size_t v = c.vocab_size, e = c.embedding_dim, h = c.hidden_dim;
    if (c.family == Family::Gru) {
        layout.push_back(Tensor::zeros("embedding", {v, e}));
        for (std::size_t l = 0; l < c.num_layers; ++l) {
            std::size_t in = l == 0 ? e : h;
            std::string p = "layers." + std::to_string(l) + ".";
            for (const char* gate : {"update", "reset", "cand"}) {
                layout.push_back(Tensor::zeros(p + gate + "_w", {h, in}));
                layout.push_back(Tensor::zeros(p + gate + "_u", {h, h}));
                layout.push_back(Tensor::zeros(p + gate + "_b", {h}));
            }
        }
        layout.push_back(Tensor::zeros("output_w", {v, h}));
        layout.push_back(Tensor::zeros("output_b", {v}));
    } else {
        const std::size_t d = e, f = h;
        layout.push_back(Tensor::zeros("tok_embedding", {v, d}));
        layout.push_back(Tensor::zeros("pos_embedding", {c.context_length, d}));
        for (std::size_t l = 0; l < c.num_layers; ++l) {
            std::string p = "layers." + std::to_string(l) + ".";
            layout.push_back(Tensor::zeros(p + "ln1_gain", {d}));
            layout.push_back(Tensor::zeros(p + "ln1_bias", {d}));
            for (const char* proj : {"attn_q", "attn_k", "attn_v", "attn_out"}) {
                layout.push_back(Tensor::zeros(p + proj + "_w", {d, d}));
                layout.push_back(Tensor::zeros(p + proj + "_b", {d}));
            }
            layout.push_back(Tensor::zeros(p + "ln2_gain", {d}));
            layout.push_back(Tensor::zeros(p + "ln2_bias", {d}));
            layout.push_back(Tensor::zeros(p + "ff_in_w", {f, d}));
            layout.push_back(Tensor::zeros(p + "ff_in_b", {f}));
            layout.push_back(Tensor::zeros(p + "ff_out_w", {d, f}));
            layout.push_back(Tensor::zeros(p + "ff_out_b", {d}));
        }
        layout.push_back(Tensor::zeros("ln_f_gain", {d}));
        layout.push_back(Tensor::zeros("ln_f_bias", {d}));
        layout.push_back(Tensor::zeros("output_w", {v, d}));
        layout.push_back(Tensor::zeros("output_b", {v}));
    }
    return layout;
}

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

void check_ids(std::span<const TokenId> ids, std::size_t vocab) {
    for (TokenId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab)
            throw IdOutOfRange("token id " + std::to_string(id) + " outside vocab of " +
                               std::to_string(vocab));
    }
}

}  // namespace

ModelParameters init_model(const ModelConfig& config, std::uint64_t seed,
                           Precision precision) {
    config.validate();
    ModelParameters params;
    params.config = config;
    params.precision = precision;
    params.tensors = parameter_layout(config);

    Rng rng(seed);
    for (Tensor& t : params.tensors) {
        if (ends_with(t.name, "_gain")) {
            std::fill(t.values.begin(), t.values.end(), 1.0);
        } else if (ends_with(t.name, "_b") || ends_with(t.name, "_bias")) {
            // already zero
        } else {
            for (double& v : t.values) v = rng.normal() * config.init_scale;
        }
    }
    params.quantize_to_precision();
    return params;
}

namespace detail {

double softmax_cross_entropy(std::span<const double> logits, std::size_t rows,
                             std::size_t vocab, std::span<const TokenId> targets,
                             double grad_scale,
                             std::vector<double>* target_log_probs,
                             std::vector<double>* dlogits) {
    if (target_log_probs) target_log_probs->assign(rows, 0.0);
    if (dlogits) dlogits->assign(rows * vocab, 0.0);

    double nll_sum = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
        TokenId target = t < targets.size() ? targets[t] : -1;
        if (target < 0 && !dlogits) continue;
        const double* row = logits.data() + t * vocab;
        double max = row[0];
        for (std::size_t j = 1; j < vocab; ++j) max = row[j] > max ? row[j] : max;
        double sum = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) sum += std::exp(row[j] - max);
        double log_z = max + std::log(sum);

        if (target >= 0) {
            double logp = row[static_cast<std::size_t>(target)] - log_z;
            nll_sum -= logp;
            if (target_log_probs) (*target_log_probs)[t] = logp;
        }
        if (dlogits && target >= 0) {
            double* drow = dlogits->data() + t * vocab;
            double inv = 1.0 / sum;
            for (std::size_t j = 0; j < vocab; ++j)
                drow[j] = std::exp(row[j] - max) * inv * grad_scale;
            drow[static_cast<std::size_t>(target)] -= grad_scale;
        }
    }
    return nll_sum;
}

double forward_backward(const ModelParameters& params, std::span<const TokenId> ids,
                        std::span<const TokenId> targets, double grad_scale,
                        std::vector<double>* logits_out,
                        std::vector<double>* target_log_probs,
                        std::vector<Tensor>* grads) {
    check_ids(ids, params.config.vocab_size);
    for (TokenId t : targets) {
        if (t >= 0 && static_cast<std::size_t>(t) >= params.config.vocab_size)
            throw IdOutOfRange("target id " + std::to_string(t));
    }
    if (params.config.family == Family::Gru)
        return gru_process(params, ids, targets, grad_scale, logits_out,
                           target_log_probs, grads);
    return transformer_process(params, ids, targets, grad_scale, logits_out,
                               target_log_probs, grads);
}

}  // namespace detail

std::vector<double> next_token_distribution(const ModelParameters& params,
                                            std::span<const TokenId> context) {
    if (context.empty()) throw DegenerateInput("empty context");
    const std::size_t vocab = params.config.vocab_size;

    std::span<const TokenId> window = context;
    if (params.config.family == Family::Transformer &&
        context.size() > params.config.context_length) {
        window = context.subspan(context.size() - params.config.context_length);
    }

    std::vector<double> logits;
    detail::forward_backward(params, window, {}, 0.0, &logits, nullptr, nullptr);

    std::vector<double> probs(logits.end() - static_cast<std::ptrdiff_t>(vocab),
                              logits.end());
    kernels::softmax_rows(probs, 1, vocab);
    return probs;
}

std::vector<double> sequence_log_probs(const ModelParameters& params,
                                       std::span<const TokenId> ids) {
    if (ids.size() < 2) throw DegenerateInput("sequence shorter than 2 ids");
    // the final id is only ever a target, so the input rows are ids[0, T-1)
    if (params.config.family == Family::Transformer &&
        ids.size() > params.config.context_length + 1)
        throw ConfigError("sequence exceeds the transformer context window");

    std::span<const TokenId> input = ids.subspan(0, ids.size() - 1);
    std::span<const TokenId> targets = ids.subspan(1);

    std::vector<double> tlp;
    detail::forward_backward(params, input, targets, 0.0, nullptr, &tlp, nullptr);
    return tlp;
}

std::vector<double> line_log_probs(const ModelParameters& params,
                                   std::span<const TokenId> ids) {
    if (ids.size() < 2) return {};
    if (params.config.family == Family::Gru ||
        ids.size() <= params.config.context_length + 1) {
        return sequence_log_probs(params, ids);
    }
    // windows of context_length+1 ids with stride context_length: every
    // position >= 1 is scored exactly once, matching the training chunks
    const std::size_t window = params.config.context_length + 1;
    std::vector<double> out;
    out.reserve(ids.size() - 1);
    std::size_t start = 0;
    while (true) {
        std::size_t end = std::min(start + window, ids.size());
        std::vector<double> part = sequence_log_probs(params, ids.subspan(start, end - start));
        out.insert(out.end(), part.begin(), part.end());
        if (end == ids.size()) break;
        start = end - 1;
    }
    return out;
}

double corpus_perplexity(const ModelParameters& params,
                         const std::vector<std::vector<TokenId>>& lines) {
    double nll = 0.0;
    std::size_t count = 0;
    for (const std::vector<TokenId>& line : lines) {
        for (double logp : line_log_probs(params, line)) {
            nll -= logp;
            ++count;
        }
    }
    if (count == 0) throw DegenerateInput("no scorable positions in corpus");
    return std::exp(nll / static_cast<double>(count));
}

LossAndGradients batch_loss_and_gradients(
    const ModelParameters& params, const std::vector<std::vector<TokenId>>& batch) {
    std::size_t positions = 0;
    for (const std::vector<TokenId>& seq : batch) {
        if (seq.size() < 2) throw DegenerateInput("batch sequence shorter than 2 ids");
        check_ids(seq, params.config.vocab_size);
        positions += seq.size() - 1;
    }
    if (positions == 0) throw DegenerateInput("empty batch");

    LossAndGradients result;
    result.positions = positions;
    result.gradients = parameter_layout(params.config);

    const double scale = 1.0 / static_cast<double>(positions);
    double nll_sum = 0.0;
    for (const std::vector<TokenId>& seq : batch) {
        std::span<const TokenId> input(seq.data(), seq.size() - 1);
        std::span<const TokenId> targets(seq.data() + 1, seq.size() - 1);
        nll_sum += detail::forward_backward(params, input, targets, scale, nullptr,
                                            nullptr, &result.gradients);
    }
    result.loss = nll_sum * scale;
    if (!std::isfinite(result.loss))
        throw NumericalError("non-finite batch loss (divergence)");
    return result;
}

void TrainingConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (grad_accumulation_steps < 1)
        throw ConfigError("grad_accumulation_steps must be >= 1");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
}

std::string TrainingLog::to_jsonl() const {
    std::string out;
    for (const CheckpointRecord& r : records) {
        out += "{\"step\": " + std::to_string(r.step);
        out += ", \"train_loss\": " + format_double(r.train_loss);
        out += ", \"learning_rate\": " + format_double(r.learning_rate);
        out += ", \"validation_perplexity\": " + format_double(r.validation_perplexity);
        out += "}\n";
    }
    return out;
}

std::string TrainingLog::to_csv() const {
    std::string out = "step,train_loss,learning_rate,validation_perplexity\n";
    for (const CheckpointRecord& r : records) {
        out += std::to_string(r.step) + "," + format_double(r.train_loss) + "," +
               format_double(r.learning_rate) + "," +
               format_double(r.validation_perplexity) + "\n";
    }
    return out;
}

namespace {

std::vector<std::vector<TokenId>> window_chunks(
    const std::vector<std::vector<TokenId>>& lines, std::size_t context_length) {
    std::vector<std::vector<TokenId>> chunks;
    for (const std::vector<TokenId>& line : lines) {
        for (std::size_t s = 0; s + 1 < line.size(); s += context_length) {
            std::size_t end = std::min(s + context_length + 1, line.size());
            chunks.emplace_back(line.begin() + static_cast<std::ptrdiff_t>(s),
                                line.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return chunks;
}

}  // namespace

TrainResult train(const std::vector<std::vector<TokenId>>& train_lines,
                  const std::vector<std::vector<TokenId>>& valid_lines,
                  const ModelConfig& model_config, const TrainingConfig& training_config,
                  const std::string& checkpoint_dir) {
    model_config.validate();
    training_config.validate();

    std::vector<std::vector<TokenId>> chunks =
        window_chunks(train_lines, model_config.context_length);
    if (chunks.empty()) throw DegenerateInput("training corpus has no usable chunks");

    ModelParameters params =
        init_model(model_config, training_config.seed, training_config.precision);

    const std::size_t micro_per_epoch =
        (chunks.size() + training_config.batch_size - 1) / training_config.batch_size;
    const std::size_t updates_per_epoch =
        (micro_per_epoch + training_config.grad_accumulation_steps - 1) /
        training_config.grad_accumulation_steps;
    const std::size_t total_updates = training_config.epochs * updates_per_epoch;

    TrainResult result;
    result.best_validation_perplexity = std::numeric_limits<double>::infinity();

    std::vector<Tensor> accum = parameter_layout(model_config);
    std::size_t accum_count = 0;
    std::size_t update_step = 0;
    double loss_since_checkpoint = 0.0;
    std::size_t losses_since_checkpoint = 0;
    double current_lr = training_config.learning_rate;

    Rng shuffle_rng(training_config.seed);
    std::vector<std::size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto apply_update = [&]() {
        current_lr = training_config.learning_rate *
                     (1.0 - static_cast<double>(update_step) /
                                static_cast<double>(total_updates));
        const double step_scale = current_lr / static_cast<double>(accum_count);
        for (std::size_t i = 0; i < params.tensors.size(); ++i) {
            std::vector<double>& w = params.tensors[i].values;
            std::vector<double>& g = accum[i].values;
            for (std::size_t j = 0; j < w.size(); ++j) {
                w[j] -= step_scale * g[j];
                g[j] = 0.0;
            }
        }
        params.quantize_to_precision();
        accum_count = 0;
        ++update_step;
    };

    auto validation_perplexity = [&](const ModelParameters& p) {
        try {
            return corpus_perplexity(p, valid_lines);
        } catch (const DegenerateInput&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    auto checkpoint = [&]() {
        CheckpointRecord record;
        record.step = update_step;
        record.train_loss = losses_since_checkpoint == 0
                                ? 0.0
                                : loss_since_checkpoint /
                                      static_cast<double>(losses_since_checkpoint);
        record.learning_rate = current_lr;
        record.validation_perplexity = validation_perplexity(params);
        result.log.records.push_back(record);
        loss_since_checkpoint = 0.0;
        losses_since_checkpoint = 0;

        if (!checkpoint_dir.empty())
            save_checkpoint(params, checkpoint_dir + "/checkpoint_last.clmc");
        if (record.validation_perplexity < result.best_validation_perplexity) {
            result.best_validation_perplexity = record.validation_perplexity;
            result.best_step = update_step;
            result.best = params;
            if (!checkpoint_dir.empty())
                save_checkpoint(params, checkpoint_dir + "/checkpoint_best.clmc");
        }
    };

    for (std::size_t epoch = 0; epoch < training_config.epochs; ++epoch) {
        deterministic_shuffle(order, shuffle_rng);
        for (std::size_t b = 0; b < micro_per_epoch; ++b) {
            std::vector<std::vector<TokenId>> micro;
            for (std::size_t i = b * training_config.batch_size;
                 i < std::min((b + 1) * training_config.batch_size, chunks.size()); ++i)
                micro.push_back(chunks[order[i]]);

            LossAndGradients lg = batch_loss_and_gradients(params, micro);
            for (std::size_t i = 0; i < accum.size(); ++i) {
                std::vector<double>& a = accum[i].values;
                const std::vector<double>& g = lg.gradients[i].values;
                for (std::size_t j = 0; j < a.size(); ++j) a[j] += g[j];
            }
            ++accum_count;
            loss_since_checkpoint += lg.loss;
            ++losses_since_checkpoint;

            bool epoch_end = b + 1 == micro_per_epoch;
            if (accum_count == training_config.grad_accumulation_steps || epoch_end) {
                apply_update();
                if (update_step % training_config.checkpoint_interval == 0) checkpoint();
            }
        }
    }

    if (result.log.records.empty()) {
        // run too short for the checkpoint cadence; evaluate the final state
        result.best_validation_perplexity = validation_perplexity(params);
        result.best_step = update_step;
        result.best = params;
        if (!checkpoint_dir.empty()) {
            save_checkpoint(params, checkpoint_dir + "/checkpoint_last.clmc");
            save_checkpoint(params, checkpoint_dir + "/checkpoint_best.clmc");
        }
    }
    return result;
}

}  // namespace clonelm::nn
