#include <cmath>
#include <vector>

#include "clonelm/errors.hpp"
#include "clonelm/kernels.hpp"
#include "clonelm/model.hpp"
#include "family_internal.hpp"

namespace clonelm::nn::detail {

namespace {

namespace k = clonelm::kernels;

struct TfIndex {
    std::size_t layers;

    explicit TfIndex(std::size_t num_layers) : layers(num_layers) {}
    std::size_t tok_embedding() const { return 0; }
    std::size_t pos_embedding() const { return 1; }
    std::size_t base(std::size_t l) const { return 2 + l * 16; }
    std::size_t ln1_gain(std::size_t l) const { return base(l) + 0; }
    std::size_t ln1_bias(std::size_t l) const { return base(l) + 1; }
    std::size_t q_w(std::size_t l) const { return base(l) + 2; }
    std::size_t q_b(std::size_t l) const { return base(l) + 3; }
    std::size_t k_w(std::size_t l) const { return base(l) + 4; }
    std::size_t k_b(std::size_t l) const { return base(l) + 5; }
    std::size_t v_w(std::size_t l) const { return base(l) + 6; }
    std::size_t v_b(std::size_t l) const { return base(l) + 7; }
    std::size_t out_w(std::size_t l) const { return base(l) + 8; }
    std::size_t out_b(std::size_t l) const { return base(l) + 9; }
    std::size_t ln2_gain(std::size_t l) const { return base(l) + 10; }
    std::size_t ln2_bias(std::size_t l) const { return base(l) + 11; }
    std::size_t ff_in_w(std::size_t l) const { return base(l) + 12; }
    std::size_t ff_in_b(std::size_t l) const { return base(l) + 13; }
    std::size_t ff_out_w(std::size_t l) const { return base(l) + 14; }
    std::size_t ff_out_b(std::size_t l) const { return base(l) + 15; }
    std::size_t ln_f_gain() const { return 2 + layers * 16; }
    std::size_t ln_f_bias() const { return 3 + layers * 16; }
    std::size_t output_w() const { return 4 + layers * 16; }
    std::size_t output_b() const { return 5 + layers * 16; }
};

struct LayerCache {
    std::vector<double> x_in;    // [T, D] residual stream entering the layer
    std::vector<double> n1, n2;  // layer-norm outputs
    std::vector<double> mean1, rstd1, mean2, rstd2;  // [T]
    std::vector<double> q, kk, v;    // projections, [T, D]
    std::vector<double> probs;       // attention weights, [heads, T, T]
    std::vector<double> ctx;         // concatenated head outputs, [T, D]
    std::vector<double> x_mid;       // x_in + attention output
    std::vector<double> ff_pre;      // [T, F] pre-activation
    std::vector<double> ff_act;      // gelu(ff_pre)
};

void copy_head_in(const std::vector<double>& full, std::vector<double>& head,
                  std::size_t t_count, std::size_t d, std::size_t dh, std::size_t h) {
    for (std::size_t t = 0; t < t_count; ++t)
        for (std::size_t j = 0; j < dh; ++j)
            head[t * dh + j] = full[t * d + h * dh + j];
}

void add_head_out(std::vector<double>& full, const std::vector<double>& head,
                  std::size_t t_count, std::size_t d, std::size_t dh, std::size_t h) {
    for (std::size_t t = 0; t < t_count; ++t)
        for (std::size_t j = 0; j < dh; ++j)
            full[t * d + h * dh + j] += head[t * dh + j];
}

}  // namespace

double transformer_process(const ModelParameters& params, std::span<const TokenId> ids,
                           std::span<const TokenId> targets, double grad_scale,
                           std::vector<double>* logits_out,
                           std::vector<double>* target_log_probs,
                           std::vector<Tensor>* grads) {
    const ModelConfig& cfg = params.config;
    const std::size_t T = ids.size();
    const std::size_t D = cfg.embedding_dim;
    const std::size_t F = cfg.hidden_dim;
    const std::size_t V = cfg.vocab_size;
    const std::size_t L = cfg.num_layers;
    const std::size_t heads = cfg.num_heads;
    const std::size_t dh = D / heads;
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const TfIndex ix(L);

    if (T > cfg.context_length)
        throw ConfigError("input exceeds the transformer context window");

    auto tensor = [&](std::size_t i) -> const std::vector<double>& {
        return params.tensors[i].values;
    };

    // --- forward -------------------------------------------------------------
    std::vector<double> x(T * D);
    {
        const std::vector<double>& tok = tensor(ix.tok_embedding());
        const std::vector<double>& pos = tensor(ix.pos_embedding());
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < D; ++j)
                x[t * D + j] = tok[static_cast<std::size_t>(ids[t]) * D + j] + pos[t * D + j];
    }

    std::vector<LayerCache> caches(L);
    std::vector<double> qh(T * dh), kh(T * dh), vh(T * dh), scores(T * T), ctxh(T * dh);

    for (std::size_t l = 0; l < L; ++l) {
        LayerCache& c = caches[l];
        c.x_in = x;
        c.n1.assign(T * D, 0.0);
        c.mean1.assign(T, 0.0);
        c.rstd1.assign(T, 0.0);
        k::layer_norm_rows(c.x_in, tensor(ix.ln1_gain(l)), tensor(ix.ln1_bias(l)), c.n1,
                           c.mean1, c.rstd1, T, D);

        c.q.assign(T * D, 0.0);
        c.kk.assign(T * D, 0.0);
        c.v.assign(T * D, 0.0);
        k::matmul_nt(c.n1, tensor(ix.q_w(l)), c.q, T, D, D);
        k::add_bias_rows(c.q, tensor(ix.q_b(l)), T, D);
        k::matmul_nt(c.n1, tensor(ix.k_w(l)), c.kk, T, D, D);
        k::add_bias_rows(c.kk, tensor(ix.k_b(l)), T, D);
        k::matmul_nt(c.n1, tensor(ix.v_w(l)), c.v, T, D, D);
        k::add_bias_rows(c.v, tensor(ix.v_b(l)), T, D);

        c.probs.assign(heads * T * T, 0.0);
        c.ctx.assign(T * D, 0.0);
        for (std::size_t h = 0; h < heads; ++h) {
            copy_head_in(c.q, qh, T, D, dh, h);
            copy_head_in(c.kk, kh, T, D, dh, h);
            copy_head_in(c.v, vh, T, D, dh, h);

            k::matmul_nt(qh, kh, scores, T, dh, T);
            for (double& s : scores) s *= attn_scale;
            k::causal_softmax_rows(scores, T);
            std::copy(scores.begin(), scores.end(), c.probs.begin() + h * T * T);

            k::matmul_nn(scores, vh, ctxh, T, T, dh);
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < dh; ++j)
                    c.ctx[t * D + h * dh + j] = ctxh[t * dh + j];
        }

        std::vector<double> attn(T * D);
        k::matmul_nt(c.ctx, tensor(ix.out_w(l)), attn, T, D, D);
        k::add_bias_rows(attn, tensor(ix.out_b(l)), T, D);

        c.x_mid.assign(T * D, 0.0);
        for (std::size_t i = 0; i < T * D; ++i) c.x_mid[i] = c.x_in[i] + attn[i];

        c.n2.assign(T * D, 0.0);
        c.mean2.assign(T, 0.0);
        c.rstd2.assign(T, 0.0);
        k::layer_norm_rows(c.x_mid, tensor(ix.ln2_gain(l)), tensor(ix.ln2_bias(l)), c.n2,
                           c.mean2, c.rstd2, T, D);

        c.ff_pre.assign(T * F, 0.0);
        k::matmul_nt(c.n2, tensor(ix.ff_in_w(l)), c.ff_pre, T, D, F);
        k::add_bias_rows(c.ff_pre, tensor(ix.ff_in_b(l)), T, F);
        c.ff_act.assign(T * F, 0.0);
        k::gelu(c.ff_pre, c.ff_act);

        std::vector<double> mlp(T * D);
        k::matmul_nt(c.ff_act, tensor(ix.ff_out_w(l)), mlp, T, F, D);
        k::add_bias_rows(mlp, tensor(ix.ff_out_b(l)), T, D);

        for (std::size_t i = 0; i < T * D; ++i) x[i] = c.x_mid[i] + mlp[i];
    }

    std::vector<double> x_final = x;
    std::vector<double> nf(T * D), mean_f(T), rstd_f(T);
    k::layer_norm_rows(x_final, tensor(ix.ln_f_gain()), tensor(ix.ln_f_bias()), nf,
                       mean_f, rstd_f, T, D);

    std::vector<double> logits(T * V);
    k::matmul_nt(nf, tensor(ix.output_w()), logits, T, D, V);
    k::add_bias_rows(logits, tensor(ix.output_b()), T, V);

    std::vector<double> dlogits;
    double nll = softmax_cross_entropy(logits, T, V, targets, grad_scale,
                                       target_log_probs, grads ? &dlogits : nullptr);
    if (logits_out) *logits_out = std::move(logits);
    if (!grads) return nll;

    // --- backward ------------------------------------------------------------
    std::vector<Tensor>& g = *grads;

    std::vector<double> dnf(T * D, 0.0);
    k::matmul_nn(dlogits, tensor(ix.output_w()), dnf, T, V, D);
    k::matmul_tn(dlogits, nf, g[ix.output_w()].values, T, V, D, true);
    k::column_sums(dlogits, g[ix.output_b()].values, T, V);

    std::vector<double> dx(T * D, 0.0);
    k::layer_norm_backward_rows(dnf, x_final, tensor(ix.ln_f_gain()), mean_f, rstd_f, dx,
                                g[ix.ln_f_gain()].values, g[ix.ln_f_bias()].values, T, D);

    std::vector<double> dqh(T * dh), dkh(T * dh), dvh(T * dh), dctxh(T * dh);
    std::vector<double> dprobs(T * T), dscores(T * T);

    for (std::size_t l = L; l-- > 0;) {
        const LayerCache& c = caches[l];

        // x_out = x_mid + mlp(n2); dx is d x_out
        std::vector<double> dact(T * F, 0.0);
        k::matmul_nn(dx, tensor(ix.ff_out_w(l)), dact, T, D, F);
        k::matmul_tn(dx, c.ff_act, g[ix.ff_out_w(l)].values, T, D, F, true);
        k::column_sums(dx, g[ix.ff_out_b(l)].values, T, D);

        std::vector<double> dff(T * F, 0.0);
        k::gelu_backward(c.ff_pre, dact, dff);

        std::vector<double> dn2(T * D, 0.0);
        k::matmul_nn(dff, tensor(ix.ff_in_w(l)), dn2, T, F, D);
        k::matmul_tn(dff, c.n2, g[ix.ff_in_w(l)].values, T, F, D, true);
        k::column_sums(dff, g[ix.ff_in_b(l)].values, T, F);

        std::vector<double> dx_mid = dx;  // residual path
        k::layer_norm_backward_rows(dn2, c.x_mid, tensor(ix.ln2_gain(l)), c.mean2,
                                    c.rstd2, dx_mid, g[ix.ln2_gain(l)].values,
                                    g[ix.ln2_bias(l)].values, T, D);

        // x_mid = x_in + attn(n1); dx_mid is d x_mid
        std::vector<double> dctx(T * D, 0.0);
        k::matmul_nn(dx_mid, tensor(ix.out_w(l)), dctx, T, D, D);
        k::matmul_tn(dx_mid, c.ctx, g[ix.out_w(l)].values, T, D, D, true);
        k::column_sums(dx_mid, g[ix.out_b(l)].values, T, D);

        std::vector<double> dq(T * D, 0.0), dk(T * D, 0.0), dv(T * D, 0.0);
        for (std::size_t h = 0; h < heads; ++h) {
            const double* probs = c.probs.data() + h * T * T;
            copy_head_in(dctx, dctxh, T, D, dh, h);
            copy_head_in(c.kk, kh, T, D, dh, h);
            copy_head_in(c.q, qh, T, D, dh, h);
            copy_head_in(c.v, vh, T, D, dh, h);

            // ctx_h = P V_h
            k::matmul_nt(dctxh, vh, dprobs, T, dh, T);
            k::matmul_tn(std::span(probs, T * T), dctxh, dvh, T, T, dh);

            // causal softmax backward, then the 1/sqrt(dh) scale
            for (std::size_t i = 0; i < T; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j <= i; ++j)
                    dot += dprobs[i * T + j] * probs[i * T + j];
                for (std::size_t j = 0; j < T; ++j) {
                    dscores[i * T + j] =
                        j <= i ? probs[i * T + j] * (dprobs[i * T + j] - dot) * attn_scale
                               : 0.0;
                }
            }

            k::matmul_nn(dscores, kh, dqh, T, T, dh);
            k::matmul_tn(dscores, qh, dkh, T, T, dh);

            add_head_out(dq, dqh, T, D, dh, h);
            add_head_out(dk, dkh, T, D, dh, h);
            add_head_out(dv, dvh, T, D, dh, h);
        }

        std::vector<double> dn1(T * D, 0.0);
        k::matmul_nn(dq, tensor(ix.q_w(l)), dn1, T, D, D, true);
        k::matmul_tn(dq, c.n1, g[ix.q_w(l)].values, T, D, D, true);
        k::column_sums(dq, g[ix.q_b(l)].values, T, D);
        k::matmul_nn(dk, tensor(ix.k_w(l)), dn1, T, D, D, true);
        k::matmul_tn(dk, c.n1, g[ix.k_w(l)].values, T, D, D, true);
        k::column_sums(dk, g[ix.k_b(l)].values, T, D);
        k::matmul_nn(dv, tensor(ix.v_w(l)), dn1, T, D, D, true);
        k::matmul_tn(dv, c.n1, g[ix.v_w(l)].values, T, D, D, true);
        k::column_sums(dv, g[ix.v_b(l)].values, T, D);

        std::vector<double> dx_in = dx_mid;  // residual path
        k::layer_norm_backward_rows(dn1, c.x_in, tensor(ix.ln1_gain(l)), c.mean1,
                                    c.rstd1, dx_in, g[ix.ln1_gain(l)].values,
                                    g[ix.ln1_bias(l)].values, T, D);
        dx = std::move(dx_in);
    }

    std::vector<double>& dtok = g[ix.tok_embedding()].values;
    std::vector<double>& dpos = g[ix.pos_embedding()].values;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < D; ++j) {
            dtok[static_cast<std::size_t>(ids[t]) * D + j] += dx[t * D + j];
            dpos[t * D + j] += dx[t * D + j];
        }
    }

    return nll;
}

}  // namespace clonelm::nn::detail
