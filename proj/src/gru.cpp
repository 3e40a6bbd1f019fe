#include <cmath>
#include <vector>

#include "clonelm/kernels.hpp"
#include "clonelm/model.hpp"
#include "family_internal.hpp"

namespace clonelm::nn::detail {

namespace {

namespace k = clonelm::kernels;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// tensor indices within the canonical GRU layout
struct GruIndex {
    std::size_t embedding = 0;
    std::size_t layers = 0;

    explicit GruIndex(std::size_t num_layers) : layers(num_layers) {}
    std::size_t update_w(std::size_t l) const { return 1 + l * 9 + 0; }
    std::size_t update_u(std::size_t l) const { return 1 + l * 9 + 1; }
    std::size_t update_b(std::size_t l) const { return 1 + l * 9 + 2; }
    std::size_t reset_w(std::size_t l) const { return 1 + l * 9 + 3; }
    std::size_t reset_u(std::size_t l) const { return 1 + l * 9 + 4; }
    std::size_t reset_b(std::size_t l) const { return 1 + l * 9 + 5; }
    std::size_t cand_w(std::size_t l) const { return 1 + l * 9 + 6; }
    std::size_t cand_u(std::size_t l) const { return 1 + l * 9 + 7; }
    std::size_t cand_b(std::size_t l) const { return 1 + l * 9 + 8; }
    std::size_t output_w() const { return 1 + layers * 9; }
    std::size_t output_b() const { return 2 + layers * 9; }
};

struct LayerCache {
    std::vector<double> inputs;   // [T, I]
    std::vector<double> states;   // [T+1, H], row 0 is the zero start state
    std::vector<double> update;   // z, [T, H]
    std::vector<double> reset;    // r, [T, H]
    std::vector<double> cand;     // tanh candidate, [T, H]
    std::vector<double> reset_state;  // r (*) h_prev, [T, H]
};

}  // namespace

double gru_process(const ModelParameters& params, std::span<const TokenId> ids,
                   std::span<const TokenId> targets, double grad_scale,
                   std::vector<double>* logits_out,
                   std::vector<double>* target_log_probs, std::vector<Tensor>* grads) {
    const ModelConfig& cfg = params.config;
    const std::size_t T = ids.size();
    const std::size_t E = cfg.embedding_dim;
    const std::size_t H = cfg.hidden_dim;
    const std::size_t V = cfg.vocab_size;
    const std::size_t L = cfg.num_layers;
    const GruIndex ix(L);

    // --- forward -------------------------------------------------------------
    std::vector<LayerCache> caches(L);
    {
        const std::vector<double>& emb = params.tensors[ix.embedding].values;
        std::vector<double> x(T * E);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < E; ++j)
                x[t * E + j] = emb[static_cast<std::size_t>(ids[t]) * E + j];
        caches[0].inputs = std::move(x);
    }

    for (std::size_t l = 0; l < L; ++l) {
        LayerCache& c = caches[l];
        const std::size_t I = l == 0 ? E : H;
        const std::vector<double>& wz = params.tensors[ix.update_w(l)].values;
        const std::vector<double>& uz = params.tensors[ix.update_u(l)].values;
        const std::vector<double>& bz = params.tensors[ix.update_b(l)].values;
        const std::vector<double>& wr = params.tensors[ix.reset_w(l)].values;
        const std::vector<double>& ur = params.tensors[ix.reset_u(l)].values;
        const std::vector<double>& br = params.tensors[ix.reset_b(l)].values;
        const std::vector<double>& wh = params.tensors[ix.cand_w(l)].values;
        const std::vector<double>& uh = params.tensors[ix.cand_u(l)].values;
        const std::vector<double>& bh = params.tensors[ix.cand_b(l)].values;

        // input contributions for every step at once
        std::vector<double> az(T * H), ar(T * H), ah(T * H);
        k::matmul_nt(c.inputs, wz, az, T, I, H);
        k::add_bias_rows(az, bz, T, H);
        k::matmul_nt(c.inputs, wr, ar, T, I, H);
        k::add_bias_rows(ar, br, T, H);
        k::matmul_nt(c.inputs, wh, ah, T, I, H);
        k::add_bias_rows(ah, bh, T, H);

        c.states.assign((T + 1) * H, 0.0);
        c.update.assign(T * H, 0.0);
        c.reset.assign(T * H, 0.0);
        c.cand.assign(T * H, 0.0);
        c.reset_state.assign(T * H, 0.0);

        std::vector<double> rec(H);
        for (std::size_t t = 0; t < T; ++t) {
            const double* h_prev = c.states.data() + t * H;
            double* h = c.states.data() + (t + 1) * H;
            double* z = c.update.data() + t * H;
            double* r = c.reset.data() + t * H;
            double* cd = c.cand.data() + t * H;
            double* rh = c.reset_state.data() + t * H;

            k::matmul_nt(std::span(h_prev, H), uz, rec, 1, H, H);
            for (std::size_t j = 0; j < H; ++j) z[j] = sigmoid(az[t * H + j] + rec[j]);
            k::matmul_nt(std::span(h_prev, H), ur, rec, 1, H, H);
            for (std::size_t j = 0; j < H; ++j) r[j] = sigmoid(ar[t * H + j] + rec[j]);
            for (std::size_t j = 0; j < H; ++j) rh[j] = r[j] * h_prev[j];
            k::matmul_nt(std::span(rh, H), uh, rec, 1, H, H);
            for (std::size_t j = 0; j < H; ++j) cd[j] = std::tanh(ah[t * H + j] + rec[j]);
            for (std::size_t j = 0; j < H; ++j)
                h[j] = (1.0 - z[j]) * h_prev[j] + z[j] * cd[j];
        }
        if (l + 1 < L) {
            caches[l + 1].inputs.assign(c.states.begin() + static_cast<std::ptrdiff_t>(H),
                                        c.states.end());
        }
    }

    const LayerCache& top = caches[L - 1];
    std::vector<double> top_states(top.states.begin() + static_cast<std::ptrdiff_t>(H),
                                   top.states.end());  // [T, H]
    std::vector<double> logits(T * V);
    k::matmul_nt(top_states, params.tensors[ix.output_w()].values, logits, T, H, V);
    k::add_bias_rows(logits, params.tensors[ix.output_b()].values, T, V);

    std::vector<double> dlogits;
    double nll = softmax_cross_entropy(logits, T, V, targets, grad_scale,
                                       target_log_probs, grads ? &dlogits : nullptr);
    if (logits_out) *logits_out = std::move(logits);
    if (!grads) return nll;

    // --- backward ------------------------------------------------------------
    std::vector<Tensor>& g = *grads;

    std::vector<double> d_top(T * H, 0.0);
    k::matmul_nn(dlogits, params.tensors[ix.output_w()].values, d_top, T, V, H);
    k::matmul_tn(dlogits, top_states, g[ix.output_w()].values, T, V, H, true);
    k::column_sums(dlogits, g[ix.output_b()].values, T, V);

    std::vector<double> d_out = std::move(d_top);  // dL/d h_t of the current layer
    for (std::size_t l = L; l-- > 0;) {
        const LayerCache& c = caches[l];
        const std::size_t I = l == 0 ? E : H;
        const std::vector<double>& uz = params.tensors[ix.update_u(l)].values;
        const std::vector<double>& ur = params.tensors[ix.reset_u(l)].values;
        const std::vector<double>& uh = params.tensors[ix.cand_u(l)].values;

        std::vector<double> daz(T * H), dar(T * H), dah(T * H);
        std::vector<double> dh_rec(H, 0.0), dh(H), dtmp(H);

        for (std::size_t t = T; t-- > 0;) {
            const double* h_prev = c.states.data() + t * H;
            const double* z = c.update.data() + t * H;
            const double* r = c.reset.data() + t * H;
            const double* cd = c.cand.data() + t * H;
            double* daz_t = daz.data() + t * H;
            double* dar_t = dar.data() + t * H;
            double* dah_t = dah.data() + t * H;

            for (std::size_t j = 0; j < H; ++j) dh[j] = d_out[t * H + j] + dh_rec[j];

            // h = (1-z) (*) h_prev + z (*) cand
            for (std::size_t j = 0; j < H; ++j) {
                double dc = dh[j] * z[j];
                double dz = dh[j] * (cd[j] - h_prev[j]);
                dh_rec[j] = dh[j] * (1.0 - z[j]);
                dah_t[j] = dc * (1.0 - cd[j] * cd[j]);
                daz_t[j] = dz * z[j] * (1.0 - z[j]);
            }
            // through the reset gate product r (*) h_prev
            k::matmul_nn(std::span(dah_t, H), uh, dtmp, 1, H, H);
            for (std::size_t j = 0; j < H; ++j) {
                double dr = dtmp[j] * h_prev[j];
                dh_rec[j] += dtmp[j] * r[j];
                dar_t[j] = dr * r[j] * (1.0 - r[j]);
            }
            k::matmul_nn(std::span(daz_t, H), uz, dtmp, 1, H, H);
            for (std::size_t j = 0; j < H; ++j) dh_rec[j] += dtmp[j];
            k::matmul_nn(std::span(dar_t, H), ur, dtmp, 1, H, H);
            for (std::size_t j = 0; j < H; ++j) dh_rec[j] += dtmp[j];
        }

        // batched parameter gradients over all steps
        std::span<const double> h_prevs(c.states.data(), T * H);
        k::matmul_tn(daz, c.inputs, g[ix.update_w(l)].values, T, H, I, true);
        k::matmul_tn(daz, h_prevs, g[ix.update_u(l)].values, T, H, H, true);
        k::column_sums(daz, g[ix.update_b(l)].values, T, H);
        k::matmul_tn(dar, c.inputs, g[ix.reset_w(l)].values, T, H, I, true);
        k::matmul_tn(dar, h_prevs, g[ix.reset_u(l)].values, T, H, H, true);
        k::column_sums(dar, g[ix.reset_b(l)].values, T, H);
        k::matmul_tn(dah, c.inputs, g[ix.cand_w(l)].values, T, H, I, true);
        k::matmul_tn(dah, c.reset_state, g[ix.cand_u(l)].values, T, H, H, true);
        k::column_sums(dah, g[ix.cand_b(l)].values, T, H);

        std::vector<double> dx(T * I, 0.0);
        k::matmul_nn(daz, params.tensors[ix.update_w(l)].values, dx, T, H, I, true);
        k::matmul_nn(dar, params.tensors[ix.reset_w(l)].values, dx, T, H, I, true);
        k::matmul_nn(dah, params.tensors[ix.cand_w(l)].values, dx, T, H, I, true);
        d_out = std::move(dx);
    }

    // d_out now holds gradients w.r.t. the embedded inputs
    std::vector<double>& demb = g[ix.embedding].values;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < E; ++j)
            demb[static_cast<std::size_t>(ids[t]) * E + j] += d_out[t * E + j];

    return nll;
}

}  // namespace clonelm::nn::detail
