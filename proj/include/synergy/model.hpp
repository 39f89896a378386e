#pragma once

// End-to-end byte LM: embedding -> encoder stack (local attention, rotary)
// -> router -> gather -> middle stack (full causal, positions per mode)
// -> gated scatter-add -> decoder stack -> final norm -> logits.
// Also the dense baseline (one full-causal rotary stack, no router).

#include <memory>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "synergy/nn.hpp"
#include "synergy/router.hpp"

namespace synergy::model {

struct ModelConfig {
    int64_t vocab_size = 259;
    int64_t context_length = 1024;
    int64_t enc_layers = 4;
    int64_t mid_layers = 24;
    int64_t dec_layers = 4;
    nn::BlockConfig block;  // window applies to encoder/decoder only
    int64_t k = 224;
    router::PositioningMode positioning = router::PositioningMode::none;
    bool tie_embeddings = false;
    bool dense = false;  // baseline: plain stack of all layers, no router
    int bos_id = 256, eos_id = 257, pad_id = 258;

    void validate() const {
        block.validate();
        if (!dense) {
            if (enc_layers < 1 || dec_layers < 1)
                throw SynergyError("ModelConfig: enc/dec layers must be >= 1");
            if (mid_layers < 0) throw SynergyError("ModelConfig: mid_layers must be >= 0");
            if (k > context_length) throw SynergyError("ModelConfig: k must be <= context_length");
            if (k < 1) throw SynergyError("ModelConfig: k must be >= 1");
        }
        if (vocab_size < 2) throw SynergyError("ModelConfig: vocab_size too small");
    }

    int64_t total_layers() const { return enc_layers + mid_layers + dec_layers; }

    // §-scale presets
    static ModelConfig paper() {
        ModelConfig c;
        c.vocab_size = 259;
        c.context_length = 1024;
        c.enc_layers = 4;
        c.mid_layers = 24;
        c.dec_layers = 4;
        c.block.model_dim = 1024;
        c.block.n_heads = 16;
        c.block.head_dim = 64;
        c.block.mlp_dim = 4096;
        c.block.window = 128;
        c.k = 224;
        return c;
    }

    static ModelConfig desk() {
        ModelConfig c;
        c.vocab_size = 259;
        c.context_length = 256;
        c.enc_layers = 2;
        c.mid_layers = 4;
        c.dec_layers = 2;
        c.block.model_dim = 128;
        c.block.n_heads = 4;
        c.block.head_dim = 32;
        c.block.mlp_dim = 512;
        c.block.window = 32;
        c.k = 56;
        return c;
    }

    static ModelConfig tiny() {
        ModelConfig c;
        c.vocab_size = 259;
        c.context_length = 32;
        c.enc_layers = 1;
        c.mid_layers = 2;
        c.dec_layers = 1;
        c.block.model_dim = 32;
        c.block.n_heads = 2;
        c.block.head_dim = 16;
        c.block.mlp_dim = 64;
        c.block.window = 8;
        c.k = 8;
        return c;
    }
};

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

template <typename T>
struct SynergyModel {
    ModelConfig cfg;
    nn::Param<T> embed;      // [vocab, d]
    nn::Param<T> head;       // [d, vocab]; unused storage when tied
    nn::Param<T> router_w;   // [d]
    nn::Param<T> router_b;   // [1]
    nn::Param<T> mid_norm_g; // final norm of the middle stack
    nn::Param<T> mid_proj;   // [d, d], zero-initialized so the middle starts silent
    nn::Param<T> final_norm_g;
    std::vector<std::unique_ptr<nn::TransformerLayer<T>>> enc, mid, dec;

    std::vector<nn::Param<T>*> params;

    // activations
    int64_t B = 0, Tw = 0, k_max = 0;
    Tensor<T> x0, enc_out, gathered, mid_stack_out, mid_normed, mid_inv, mid_final, y_scatter,
        dec_out, final_normed, final_inv, logits;
    std::vector<router::RoutingState<T>> states;
    std::vector<int> last_ids;
    std::vector<T> enc_positions, mid_positions_flat;
    std::vector<int64_t> valid_len;

    explicit SynergyModel(const ModelConfig& c)
        : cfg(c),
          embed("embed", {c.vocab_size, c.block.model_dim}),
          head("head", {c.block.model_dim, c.vocab_size}),
          router_w("router.w", {c.block.model_dim}),
          router_b("router.b", {1}),
          mid_norm_g("mid_norm", {c.block.model_dim}),
          mid_proj("mid_proj", {c.block.model_dim, c.block.model_dim}),
          final_norm_g("final_norm", {c.block.model_dim}) {
        cfg.validate();
        std::fill(mid_norm_g.w.data.begin(), mid_norm_g.w.data.end(), T(1));
        std::fill(final_norm_g.w.data.begin(), final_norm_g.w.data.end(), T(1));

        nn::BlockConfig local = cfg.block;
        local.positioning = nn::Positioning::rotary;
        nn::BlockConfig full = cfg.block;
        full.window = 0;
        full.positioning = nn::Positioning::rotary;

        if (cfg.dense) {
            for (int64_t i = 0; i < cfg.total_layers(); ++i)
                enc.push_back(std::make_unique<nn::TransformerLayer<T>>(
                    full, "layer." + std::to_string(i)));
        } else {
            nn::BlockConfig midc = cfg.block;
            midc.window = 0;
            switch (cfg.positioning) {
                case router::PositioningMode::none:
                    midc.positioning = nn::Positioning::none;
                    break;
                case router::PositioningMode::original:
                    midc.positioning = nn::Positioning::rotary;
                    break;
                default:
                    midc.positioning = nn::Positioning::rotary_real;
            }
            for (int64_t i = 0; i < cfg.enc_layers; ++i)
                enc.push_back(std::make_unique<nn::TransformerLayer<T>>(
                    local, "enc." + std::to_string(i)));
            for (int64_t i = 0; i < cfg.mid_layers; ++i)
                mid.push_back(std::make_unique<nn::TransformerLayer<T>>(
                    midc, "mid." + std::to_string(i)));
            for (int64_t i = 0; i < cfg.dec_layers; ++i)
                dec.push_back(std::make_unique<nn::TransformerLayer<T>>(
                    local, "dec." + std::to_string(i)));
        }

        params.push_back(&embed);
        if (!cfg.tie_embeddings) params.push_back(&head);
        for (auto& l : enc) l->collect(params);
        if (!cfg.dense) {
            params.push_back(&router_w);
            params.push_back(&router_b);
            for (auto& l : mid) l->collect(params);
            params.push_back(&mid_norm_g);
            params.push_back(&mid_proj);
            for (auto& l : dec) l->collect(params);
        }
        params.push_back(&final_norm_g);
    }

    void init_weights(uint64_t seed, double std_dev = 0.02) {
        std::mt19937_64 rng(seed);
        nn::init_normal(embed.w, rng, std_dev);
        if (!cfg.tie_embeddings) nn::init_normal(head.w, rng, std_dev);
        auto init_layer = [&](nn::TransformerLayer<T>& l) {
            nn::init_normal(l.attn.wq.w, rng, std_dev);
            nn::init_normal(l.attn.wk.w, rng, std_dev);
            nn::init_normal(l.attn.wv.w, rng, std_dev);
            nn::init_normal(l.attn.wo.w, rng, std_dev);
            nn::init_normal(l.mlp.w_gate.w, rng, std_dev);
            nn::init_normal(l.mlp.w_up.w, rng, std_dev);
            nn::init_normal(l.mlp.w_down.w, rng, std_dev);
        };
        for (auto& l : enc) init_layer(*l);
        for (auto& l : mid) init_layer(*l);
        for (auto& l : dec) init_layer(*l);
        // router and middle output projection stay zero: sigma starts at 0.5
        // everywhere and the middle contributes nothing until trained
    }

    int64_t count_params() const {
        int64_t n = 0;
        for (const auto* p : params) n += p->w.numel();
        return n;
    }

    void zero_grad() {
        for (auto* p : params) p->g.zero();
    }

    nn::Param<T>* find_param(const std::string& name) {
        for (auto* p : params)
            if (p->name == name) return p;
        return nullptr;
    }

    // threshold routing replaces top-k when router_threshold is provided
    void forward(const std::vector<int>& ids, int64_t batch, int64_t width,
                 std::optional<T> router_threshold = std::nullopt) {
        const int64_t d = cfg.block.model_dim;
        B = batch;
        Tw = width;
        if (Tw > cfg.context_length) throw SynergyError("forward: width exceeds context_length");
        const int64_t R = B * Tw;
        last_ids = ids;
        x0.resize({R, d});
        for (int64_t r = 0; r < R; ++r) {
            const int id = ids[static_cast<size_t>(r)];
            if (id < 0 || id >= cfg.vocab_size) throw SynergyError("forward: id out of vocab");
            std::copy(embed.w.ptr() + id * d, embed.w.ptr() + (id + 1) * d, x0.ptr() + r * d);
        }
        enc_positions.resize(static_cast<size_t>(R));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < Tw; ++t)
                enc_positions[static_cast<size_t>(b * Tw + t)] = static_cast<T>(t);

        const T* x = x0.ptr();
        for (auto& l : enc) {
            l->forward(x, B, Tw, enc_positions.data());
            x = l->y.ptr();
        }

        if (cfg.dense) {
            states.clear();
            final_forward(x, R, d);
            return;
        }

        enc_out.resize({R, d});
        std::memcpy(enc_out.ptr(), x, sizeof(T) * static_cast<size_t>(R * d));

        // router weights and per-row routing state
        states.assign(static_cast<size_t>(B), {});
        valid_len.assign(static_cast<size_t>(B), 0);
        k_max = 0;
        for (int64_t b = 0; b < B; ++b) {
            auto& st = states[static_cast<size_t>(b)];
            st.k = cfg.k;
            st.w.resize(static_cast<size_t>(Tw));
            st.sigma.resize(static_cast<size_t>(Tw));
            std::vector<uint8_t> valid(static_cast<size_t>(Tw), 0);
            int64_t vl = 0;
            for (int64_t t = 0; t < Tw; ++t) {
                const T* xt = enc_out.ptr() + (b * Tw + t) * d;
                T w = router_b.w.data[0];
                for (int64_t u = 0; u < d; ++u) w += router_w.w.data[static_cast<size_t>(u)] * xt[u];
                st.w[static_cast<size_t>(t)] = w;
                st.sigma[static_cast<size_t>(t)] = router::sigmoid(w);
                if (ids[static_cast<size_t>(b * Tw + t)] != cfg.pad_id) {
                    valid[static_cast<size_t>(t)] = 1;
                    ++vl;
                }
            }
            valid_len[static_cast<size_t>(b)] = vl;
            if (router_threshold) {
                auto m = router::inference_threshold_route(st.w, *router_threshold);
                st.picked.clear();
                for (int64_t t = 0; t < Tw; ++t)
                    if (m[static_cast<size_t>(t)] && valid[static_cast<size_t>(t)])
                        st.picked.push_back(t);
                st.m.assign(static_cast<size_t>(Tw), 0);
                for (int64_t t : st.picked) st.m[static_cast<size_t>(t)] = 1;
            } else {
                router::topk_mask(st.w, cfg.k, valid, st.m, st.picked);
            }
            st.middle_positions = router::middle_positions(st, cfg.positioning, vl);
            k_max = std::max(k_max, st.k_eff());
        }
        if (k_max == 0) k_max = 1;  // degenerate threshold routing; middle sees zeros

        gathered.resize({B * k_max, d});
        gathered.zero();
        mid_positions_flat.assign(static_cast<size_t>(B * k_max), T(0));
        for (int64_t b = 0; b < B; ++b) {
            const auto& st = states[static_cast<size_t>(b)];
            router::gather_compressed(enc_out.ptr() + b * Tw * d, Tw, d, st.picked,
                                      gathered.ptr() + b * k_max * d);
            for (int64_t j = 0; j < st.k_eff(); ++j)
                mid_positions_flat[static_cast<size_t>(b * k_max + j)] = st.middle_positions[static_cast<size_t>(j)];
        }

        const T* mx = gathered.ptr();
        for (auto& l : mid) {
            l->forward(mx, B, k_max, mid_positions_flat.data());
            mx = l->y.ptr();
        }
        mid_stack_out.resize({B * k_max, d});
        std::memcpy(mid_stack_out.ptr(), mx, sizeof(T) * static_cast<size_t>(B * k_max * d));
        mid_normed.resize({B * k_max, d});
        mid_inv.resize({B * k_max});
        kernels::rmsnorm_forward(mid_stack_out.ptr(), mid_norm_g.w.ptr(), mid_normed.ptr(),
                                 mid_inv.ptr(), B * k_max, d);
        mid_final.resize({B * k_max, d});
        kernels::matmul(mid_normed.ptr(), mid_proj.w.ptr(), mid_final.ptr(), B * k_max, d, d,
                        false);

        y_scatter.resize({R, d});
        for (int64_t b = 0; b < B; ++b)
            router::gated_scatter_add(enc_out.ptr() + b * Tw * d, mid_final.ptr() + b * k_max * d,
                                      states[static_cast<size_t>(b)], Tw, d,
                                      y_scatter.ptr() + b * Tw * d);

        const T* dx2 = y_scatter.ptr();
        for (auto& l : dec) {
            l->forward(dx2, B, Tw, enc_positions.data());
            dx2 = l->y.ptr();
        }
        final_forward(dx2, R, d);
    }

    void final_forward(const T* x, int64_t R, int64_t d) {
        dec_out.resize({R, d});
        std::memcpy(dec_out.ptr(), x, sizeof(T) * static_cast<size_t>(R * d));
        final_normed.resize({R, d});
        final_inv.resize({R});
        kernels::rmsnorm_forward(dec_out.ptr(), final_norm_g.w.ptr(), final_normed.ptr(),
                                 final_inv.ptr(), R, d);
        logits.resize({R, cfg.vocab_size});
        if (cfg.tie_embeddings)
            kernels::matmul_nt(final_normed.ptr(), embed.w.ptr(), logits.ptr(), R, d,
                               cfg.vocab_size, false);
        else
            kernels::matmul(final_normed.ptr(), head.w.ptr(), logits.ptr(), R, d, cfg.vocab_size,
                            false);
    }

    void backward(const T* dlogits) {
        const int64_t d = cfg.block.model_dim;
        const int64_t R = B * Tw;
        Tensor<T> dnormed({R, d});
        if (cfg.tie_embeddings) {
            kernels::matmul(dlogits, embed.w.ptr(), dnormed.ptr(), R, cfg.vocab_size, d, false);
            kernels::matmul_tn(dlogits, final_normed.ptr(), embed.g.ptr(), R, cfg.vocab_size, d,
                               true);
        } else {
            kernels::matmul_nt(dlogits, head.w.ptr(), dnormed.ptr(), R, cfg.vocab_size, d, false);
            kernels::matmul_tn(final_normed.ptr(), dlogits, head.g.ptr(), R, d, cfg.vocab_size,
                               true);
        }
        Tensor<T> dstack({R, d});
        kernels::rmsnorm_backward(dec_out.ptr(), final_norm_g.w.ptr(), final_inv.ptr(),
                                  dnormed.ptr(), dstack.ptr(), final_norm_g.g.ptr(), R, d);

        if (cfg.dense) {
            Tensor<T> dprev({R, d});
            const T* dcur = dstack.ptr();
            Tensor<T>* cur_buf = &dstack;
            for (int64_t i = static_cast<int64_t>(enc.size()) - 1; i >= 0; --i) {
                dprev.zero();
                enc[static_cast<size_t>(i)]->backward(dcur, dprev.ptr(), nullptr);
                std::swap(*cur_buf, dprev);
                dcur = cur_buf->ptr();
            }
            embed_backward(cur_buf->ptr());
            return;
        }

        // decoder stack
        Tensor<T> dprev({R, d});
        Tensor<T>* cur_buf = &dstack;
        const T* dcur = dstack.ptr();
        for (int64_t i = static_cast<int64_t>(dec.size()) - 1; i >= 0; --i) {
            dprev.zero();
            dec[static_cast<size_t>(i)]->backward(dcur, dprev.ptr(), nullptr);
            std::swap(*cur_buf, dprev);
            dcur = cur_buf->ptr();
        }

        // scatter backward
        Tensor<T> dx_enc({R, d});
        Tensor<T> dmid_final({B * k_max, d});
        std::vector<std::vector<T>> dsigma(static_cast<size_t>(B),
                                           std::vector<T>(static_cast<size_t>(Tw), T(0)));
        for (int64_t b = 0; b < B; ++b)
            router::gated_scatter_add_backward(
                dcur + b * Tw * d, mid_final.ptr() + b * k_max * d, states[static_cast<size_t>(b)],
                Tw, d, dx_enc.ptr() + b * Tw * d, dmid_final.ptr() + b * k_max * d,
                dsigma[static_cast<size_t>(b)]);

        // middle output projection + norm
        Tensor<T> dmid_normed({B * k_max, d});
        kernels::matmul_nt(dmid_final.ptr(), mid_proj.w.ptr(), dmid_normed.ptr(), B * k_max, d, d,
                           false);
        kernels::matmul_tn(mid_normed.ptr(), dmid_final.ptr(), mid_proj.g.ptr(), B * k_max, d, d,
                           true);
        Tensor<T> dmid_stack({B * k_max, d});
        kernels::rmsnorm_backward(mid_stack_out.ptr(), mid_norm_g.w.ptr(), mid_inv.ptr(),
                                  dmid_normed.ptr(), dmid_stack.ptr(), mid_norm_g.g.ptr(),
                                  B * k_max, d);

        // middle stack; only the *_grad modes propagate into positions
        const bool pos_grad = cfg.positioning == router::PositioningMode::sigma_grad ||
                              cfg.positioning == router::PositioningMode::sigma_all_grad;
        std::vector<T> dpos_flat;
        T* dpos_ptr = nullptr;
        if (pos_grad) {
            dpos_flat.assign(static_cast<size_t>(B * k_max), T(0));
            dpos_ptr = dpos_flat.data();
        }
        Tensor<T> dmid_prev({B * k_max, d});
        Tensor<T>* mid_buf = &dmid_stack;
        const T* dmid_cur = dmid_stack.ptr();
        for (int64_t i = static_cast<int64_t>(mid.size()) - 1; i >= 0; --i) {
            dmid_prev.zero();
            mid[static_cast<size_t>(i)]->backward(dmid_cur, dmid_prev.ptr(), dpos_ptr);
            std::swap(*mid_buf, dmid_prev);
            dmid_cur = mid_buf->ptr();
        }

        // gather backward + position-rule backward into sigma
        for (int64_t b = 0; b < B; ++b) {
            const auto& st = states[static_cast<size_t>(b)];
            for (int64_t j = 0; j < st.k_eff(); ++j) {
                const T* src = dmid_cur + (b * k_max + j) * d;
                T* dst = dx_enc.ptr() + (b * Tw + st.picked[static_cast<size_t>(j)]) * d;
                for (int64_t u = 0; u < d; ++u) dst[u] += src[u];
            }
            if (pos_grad) {
                std::vector<T> dpos_row(static_cast<size_t>(st.k_eff()));
                for (int64_t j = 0; j < st.k_eff(); ++j)
                    dpos_row[static_cast<size_t>(j)] = dpos_flat[static_cast<size_t>(b * k_max + j)];
                router::positions_backward(st, cfg.positioning, valid_len[static_cast<size_t>(b)],
                                           dpos_row, dsigma[static_cast<size_t>(b)]);
            }
        }

        // sigma -> w -> router linear -> encoder output
        for (int64_t b = 0; b < B; ++b) {
            const auto& st = states[static_cast<size_t>(b)];
            for (int64_t t = 0; t < Tw; ++t) {
                const T s = st.sigma[static_cast<size_t>(t)];
                const T dw = dsigma[static_cast<size_t>(b)][static_cast<size_t>(t)] * s * (T(1) - s);
                if (dw == T(0)) continue;
                const T* xt = enc_out.ptr() + (b * Tw + t) * d;
                T* dxt = dx_enc.ptr() + (b * Tw + t) * d;
                for (int64_t u = 0; u < d; ++u) {
                    dxt[u] += dw * router_w.w.data[static_cast<size_t>(u)];
                    router_w.g.data[static_cast<size_t>(u)] += dw * xt[u];
                }
                router_b.g.data[0] += dw;
            }
        }

        // encoder stack
        Tensor<T>* enc_buf = &dx_enc;
        Tensor<T> denc_prev({R, d});
        const T* denc_cur = dx_enc.ptr();
        for (int64_t i = static_cast<int64_t>(enc.size()) - 1; i >= 0; --i) {
            denc_prev.zero();
            enc[static_cast<size_t>(i)]->backward(denc_cur, denc_prev.ptr(), nullptr);
            std::swap(*enc_buf, denc_prev);
            denc_cur = enc_buf->ptr();
        }
        embed_backward(enc_buf->ptr());
    }

    void embed_backward(const T* dx0) {
        const int64_t d = cfg.block.model_dim;
        for (int64_t r = 0; r < B * Tw; ++r) {
            const int id = last_ids[static_cast<size_t>(r)];
            T* grow = embed.g.ptr() + id * d;
            const T* src = dx0 + r * d;
            for (int64_t u = 0; u < d; ++u) grow[u] += src[u];
        }
    }
};

// Mean cross entropy in nats over positions whose target mask bit is set;
// the target at position i is ids[i+1]. Fills dlogits when non-null.
template <typename T>
double loss_and_grad(const Tensor<T>& logits, const std::vector<int>& ids,
                     const std::vector<uint8_t>& mask, int64_t batch, int64_t width,
                     int64_t vocab, T* dlogits, std::vector<double>* per_position = nullptr) {
    int64_t n_masked = 0;
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i + 1 < width; ++i)
            if (mask[static_cast<size_t>(b * width + i)]) ++n_masked;
    if (n_masked == 0) throw SynergyError("loss: all positions masked out");
    if (dlogits)
        std::fill(dlogits, dlogits + batch * width * vocab, T(0));
    double total = 0.0;
    if (per_position) per_position->assign(static_cast<size_t>(batch * width), 0.0);
    std::vector<double> probs(static_cast<size_t>(vocab));
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t i = 0; i + 1 < width; ++i) {
            if (!mask[static_cast<size_t>(b * width + i)]) continue;
            const int target = ids[static_cast<size_t>(b * width + i + 1)];
            const T* row = logits.ptr() + (b * width + i) * vocab;
            double mx = static_cast<double>(row[0]);
            for (int64_t v = 1; v < vocab; ++v) mx = std::max(mx, static_cast<double>(row[v]));
            double sum = 0.0;
            for (int64_t v = 0; v < vocab; ++v) {
                probs[static_cast<size_t>(v)] = std::exp(static_cast<double>(row[v]) - mx);
                sum += probs[static_cast<size_t>(v)];
            }
            const double logsum = std::log(sum) + mx;
            const double nats = logsum - static_cast<double>(row[target]);
            total += nats;
            if (per_position) (*per_position)[static_cast<size_t>(b * width + i)] = nats;
            if (dlogits) {
                T* drow = dlogits + (b * width + i) * vocab;
                const double inv = 1.0 / (sum * static_cast<double>(n_masked));
                for (int64_t v = 0; v < vocab; ++v)
                    drow[v] = static_cast<T>(probs[static_cast<size_t>(v)] * inv);
                drow[target] -= T(1) / static_cast<T>(n_masked);
            }
        }
    }
    return total / static_cast<double>(n_masked);
}

}  // namespace synergy::model
