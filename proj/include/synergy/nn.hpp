#pragma once

// Transformer building blocks with explicit forward/backward passes.
// Weights are stored [in, out] so the forward pass streams rows; every
// activation needed by backward is cached in the block that produced it.

#include <cmath>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "synergy/common.hpp"
#include "synergy/kernels.hpp"

namespace synergy::nn {

enum class Positioning { rotary, rotary_real, none };

struct BlockConfig {
    int64_t model_dim = 1024;
    int64_t n_heads = 16;
    int64_t head_dim = 64;
    int64_t mlp_dim = 4096;
    int64_t window = 0;  // 0 = full causal
    Positioning positioning = Positioning::rotary;
    double rope_base = 10000.0;

    void validate() const {
        if (n_heads * head_dim != model_dim)
            throw SynergyError("BlockConfig: n_heads * head_dim != model_dim");
        if (mlp_dim <= 0) throw SynergyError("BlockConfig: mlp_dim must be positive");
        if (window < 0) throw SynergyError("BlockConfig: window must be >= 1 when set");
        if (positioning != Positioning::none && head_dim % 2 != 0)
            throw SynergyError("BlockConfig: head_dim must be even for rotary positioning");
    }
};

template <typename T>
struct Param {
    std::string name;
    Tensor<T> w, g;
    Param(std::string n, std::vector<int64_t> shape)
        : name(std::move(n)), w(shape), g(std::move(shape)) {}
};

template <typename T>
void init_normal(Tensor<T>& t, std::mt19937_64& rng, double std_dev) {
    std::normal_distribution<double> dist(0.0, std_dev);
    for (auto& v : t.data) v = static_cast<T>(dist(rng));
}

// Multi-head causal self-attention, optionally windowed, with the rotary
// rotation applied to Q/K (skipped entirely under Positioning::none).
template <typename T>
struct Attention {
    BlockConfig cfg;
    Param<T> wq, wk, wv, wo;

    // caches
    int64_t B = 0, Tl = 0;
    Tensor<T> x_in, q_pre, k_pre, q, k, v, probs, heads_out, y;
    std::vector<T> pos_expanded;

    explicit Attention(const BlockConfig& c, const std::string& prefix)
        : cfg(c),
          wq(prefix + ".wq", {c.model_dim, c.model_dim}),
          wk(prefix + ".wk", {c.model_dim, c.model_dim}),
          wv(prefix + ".wv", {c.model_dim, c.model_dim}),
          wo(prefix + ".wo", {c.model_dim, c.model_dim}) {}

    void collect(std::vector<Param<T>*>& out) {
        out.push_back(&wq);
        out.push_back(&wk);
        out.push_back(&wv);
        out.push_back(&wo);
    }

    int64_t span() const { return cfg.window > 0 ? cfg.window : Tl; }

    void forward(const T* x, int64_t batch, int64_t seq, const T* positions) {
        B = batch;
        Tl = seq;
        const int64_t d = cfg.model_dim, H = cfg.n_heads, hd = cfg.head_dim;
        const int64_t R = B * Tl;
        if (cfg.positioning != Positioning::none && positions == nullptr)
            throw SynergyError("attention: positions required for rotary positioning");
        x_in.resize({R, d});
        std::memcpy(x_in.ptr(), x, sizeof(T) * static_cast<size_t>(R * d));
        q.resize({R, d});
        k.resize({R, d});
        v.resize({R, d});
        kernels::matmul(x, wq.w.ptr(), q.ptr(), R, d, d, false);
        kernels::matmul(x, wk.w.ptr(), k.ptr(), R, d, d, false);
        kernels::matmul(x, wv.w.ptr(), v.ptr(), R, d, d, false);
        if (cfg.positioning != Positioning::none) {
            q_pre = q;
            k_pre = k;
            pos_expanded.resize(static_cast<size_t>(R * H));
            for (int64_t r = 0; r < R; ++r)
                for (int64_t h = 0; h < H; ++h)
                    pos_expanded[static_cast<size_t>(r * H + h)] = positions[r];
            kernels::rope_forward(q.ptr(), pos_expanded.data(), R * H, hd,
                                  static_cast<T>(cfg.rope_base));
            kernels::rope_forward(k.ptr(), pos_expanded.data(), R * H, hd,
                                  static_cast<T>(cfg.rope_base));
        }
        const int64_t W = span();
        probs.resize({B, H, Tl, W});
        heads_out.resize({R, d});
        const T scale = T(1) / std::sqrt(T(hd));
        const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
        for (int64_t bh = 0; bh < B * H; ++bh) {
            const int64_t b = bh / H, h = bh % H;
            for (int64_t i = 0; i < Tl; ++i) {
                const int64_t lo = cfg.window > 0 ? std::max<int64_t>(0, i - cfg.window + 1) : 0;
                const int64_t n = i - lo + 1;
                const T* qi = q.ptr() + (b * Tl + i) * d + h * hd;
                T* prow = probs.ptr() + ((bh * Tl) + i) * W;
                for (int64_t j = lo; j <= i; ++j) {
                    const T* kj = k.ptr() + (b * Tl + j) * d + h * hd;
                    T s = T(0);
                    for (int64_t u = 0; u < hd; ++u) s += qi[u] * kj[u];
                    prow[j - lo] = s * scale;
                }
                kernels::softmax_row(prow, n);
                T* out = heads_out.ptr() + (b * Tl + i) * d + h * hd;
                for (int64_t u = 0; u < hd; ++u) out[u] = T(0);
                for (int64_t j = lo; j <= i; ++j) {
                    const T p = prow[j - lo];
                    const T* vj = v.ptr() + (b * Tl + j) * d + h * hd;
                    for (int64_t u = 0; u < hd; ++u) out[u] += p * vj[u];
                }
            }
        }
        y.resize({R, d});
        kernels::matmul(heads_out.ptr(), wo.w.ptr(), y.ptr(), R, d, d, false);
    }

    // dy -> dx (accumulated); dpos accumulated when non-null.
    void backward(const T* dy, T* dx, T* dpos) {
        const int64_t d = cfg.model_dim, H = cfg.n_heads, hd = cfg.head_dim;
        const int64_t R = B * Tl, W = span();
        const T scale = T(1) / std::sqrt(T(hd));

        Tensor<T> dheads({R, d});
        kernels::matmul_nt(dy, wo.w.ptr(), dheads.ptr(), R, d, d, false);
        kernels::matmul_tn(heads_out.ptr(), dy, wo.g.ptr(), R, d, d, true);

        Tensor<T> dq({R, d}), dk({R, d}), dv({R, d});
        const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
        for (int64_t bh = 0; bh < B * H; ++bh) {
            const int64_t b = bh / H, h = bh % H;
            std::vector<T> dp(static_cast<size_t>(W));
            for (int64_t i = 0; i < Tl; ++i) {
                const int64_t lo = cfg.window > 0 ? std::max<int64_t>(0, i - cfg.window + 1) : 0;
                const T* prow = probs.ptr() + ((bh * Tl) + i) * W;
                const T* dout = dheads.ptr() + (b * Tl + i) * d + h * hd;
                T dot = T(0);
                for (int64_t j = lo; j <= i; ++j) {
                    const T* vj = v.ptr() + (b * Tl + j) * d + h * hd;
                    T acc = T(0);
                    for (int64_t u = 0; u < hd; ++u) acc += dout[u] * vj[u];
                    dp[j - lo] = acc;
                    dot += acc * prow[j - lo];
                }
                T* dqi = dq.ptr() + (b * Tl + i) * d + h * hd;
                const T* qi = q.ptr() + (b * Tl + i) * d + h * hd;
                for (int64_t j = lo; j <= i; ++j) {
                    const T p = prow[j - lo];
                    const T ds = p * (dp[j - lo] - dot) * scale;
                    const T* kj = k.ptr() + (b * Tl + j) * d + h * hd;
                    T* dkj = dk.ptr() + (b * Tl + j) * d + h * hd;
                    T* dvj = dv.ptr() + (b * Tl + j) * d + h * hd;
                    for (int64_t u = 0; u < hd; ++u) {
                        dqi[u] += ds * kj[u];
                        dkj[u] += ds * qi[u];
                        dvj[u] += p * dout[u];
                    }
                }
            }
        }
        if (cfg.positioning != Positioning::none) {
            std::vector<T> dpos_exp;
            T* dpe = nullptr;
            if (dpos) {
                dpos_exp.assign(static_cast<size_t>(R * H), T(0));
                dpe = dpos_exp.data();
            }
            kernels::rope_backward(dq.ptr(), q_pre.ptr(), pos_expanded.data(), dpe, R * H, hd,
                                   static_cast<T>(cfg.rope_base));
            kernels::rope_backward(dk.ptr(), k_pre.ptr(), pos_expanded.data(), dpe, R * H, hd,
                                   static_cast<T>(cfg.rope_base));
            if (dpos) {
                for (int64_t r = 0; r < R; ++r) {
                    T acc = T(0);
                    for (int64_t h = 0; h < H; ++h) acc += dpos_exp[static_cast<size_t>(r * H + h)];
                    dpos[r] += acc;
                }
            }
        }
        kernels::matmul_nt(dq.ptr(), wq.w.ptr(), dx, R, d, d, true);
        kernels::matmul_nt(dk.ptr(), wk.w.ptr(), dx, R, d, d, true);
        kernels::matmul_nt(dv.ptr(), wv.w.ptr(), dx, R, d, d, true);
        kernels::matmul_tn(x_in.ptr(), dq.ptr(), wq.g.ptr(), R, d, d, true);
        kernels::matmul_tn(x_in.ptr(), dk.ptr(), wk.g.ptr(), R, d, d, true);
        kernels::matmul_tn(x_in.ptr(), dv.ptr(), wv.g.ptr(), R, d, d, true);
    }
};

// out = W_down( silu(W_gate x) ⊙ (W_up x) ), intermediate width exactly mlp_dim.
template <typename T>
struct SwigluMlp {
    BlockConfig cfg;
    Param<T> w_gate, w_up, w_down;

    int64_t R = 0;
    Tensor<T> x_in, gate_pre, up, hidden, y;

    explicit SwigluMlp(const BlockConfig& c, const std::string& prefix)
        : cfg(c),
          w_gate(prefix + ".w_gate", {c.model_dim, c.mlp_dim}),
          w_up(prefix + ".w_up", {c.model_dim, c.mlp_dim}),
          w_down(prefix + ".w_down", {c.mlp_dim, c.model_dim}) {}

    void collect(std::vector<Param<T>*>& out) {
        out.push_back(&w_gate);
        out.push_back(&w_up);
        out.push_back(&w_down);
    }

    void forward(const T* x, int64_t rows) {
        R = rows;
        const int64_t d = cfg.model_dim, f = cfg.mlp_dim;
        x_in.resize({R, d});
        std::memcpy(x_in.ptr(), x, sizeof(T) * static_cast<size_t>(R * d));
        gate_pre.resize({R, f});
        up.resize({R, f});
        hidden.resize({R, f});
        kernels::matmul(x, w_gate.w.ptr(), gate_pre.ptr(), R, d, f, false);
        kernels::matmul(x, w_up.w.ptr(), up.ptr(), R, d, f, false);
        const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
        for (int64_t i = 0; i < R * f; ++i)
            hidden.data[static_cast<size_t>(i)] =
                kernels::silu(gate_pre.data[static_cast<size_t>(i)]) *
                up.data[static_cast<size_t>(i)];
        y.resize({R, d});
        kernels::matmul(hidden.ptr(), w_down.w.ptr(), y.ptr(), R, f, d, false);
    }

    void backward(const T* dy, T* dx) {
        const int64_t d = cfg.model_dim, f = cfg.mlp_dim;
        Tensor<T> dhidden({R, f});
        kernels::matmul_nt(dy, w_down.w.ptr(), dhidden.ptr(), R, d, f, false);
        kernels::matmul_tn(hidden.ptr(), dy, w_down.g.ptr(), R, f, d, true);
        Tensor<T> dgate({R, f}), dup({R, f});
        const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
        for (int64_t i = 0; i < R * f; ++i) {
            const size_t s = static_cast<size_t>(i);
            const T gp = gate_pre.data[s];
            dgate.data[s] = dhidden.data[s] * up.data[s] * kernels::silu_grad(gp);
            dup.data[s] = dhidden.data[s] * kernels::silu(gp);
        }
        kernels::matmul_nt(dgate.ptr(), w_gate.w.ptr(), dx, R, f, d, true);
        kernels::matmul_nt(dup.ptr(), w_up.w.ptr(), dx, R, f, d, true);
        kernels::matmul_tn(x_in.ptr(), dgate.ptr(), w_gate.g.ptr(), R, d, f, true);
        kernels::matmul_tn(x_in.ptr(), dup.ptr(), w_up.g.ptr(), R, d, f, true);
    }
};

// Pre-norm residual block: x + attn(norm(x)), then + mlp(norm(.)).
template <typename T>
struct TransformerLayer {
    BlockConfig cfg;
    Param<T> norm1_g, norm2_g;
    Attention<T> attn;
    SwigluMlp<T> mlp;

    int64_t B = 0, Tl = 0;
    Tensor<T> x_in, normed1, inv1, resid1, normed2, inv2, y;

    TransformerLayer(const BlockConfig& c, const std::string& prefix)
        : cfg(c),
          norm1_g(prefix + ".norm1", {c.model_dim}),
          norm2_g(prefix + ".norm2", {c.model_dim}),
          attn(c, prefix + ".attn"),
          mlp(c, prefix + ".mlp") {
        std::fill(norm1_g.w.data.begin(), norm1_g.w.data.end(), T(1));
        std::fill(norm2_g.w.data.begin(), norm2_g.w.data.end(), T(1));
    }

    void collect(std::vector<Param<T>*>& out) {
        out.push_back(&norm1_g);
        attn.collect(out);
        out.push_back(&norm2_g);
        mlp.collect(out);
    }

    void forward(const T* x, int64_t batch, int64_t seq, const T* positions) {
        B = batch;
        Tl = seq;
        const int64_t d = cfg.model_dim;
        const int64_t R = B * Tl;
        x_in.resize({R, d});
        std::memcpy(x_in.ptr(), x, sizeof(T) * static_cast<size_t>(R * d));
        normed1.resize({R, d});
        inv1.resize({R});
        kernels::rmsnorm_forward(x, norm1_g.w.ptr(), normed1.ptr(), inv1.ptr(), R, d);
        attn.forward(normed1.ptr(), B, Tl, positions);
        resid1.resize({R, d});
        for (int64_t i = 0; i < R * d; ++i)
            resid1.data[static_cast<size_t>(i)] =
                x[i] + attn.y.data[static_cast<size_t>(i)];
        normed2.resize({R, d});
        inv2.resize({R});
        kernels::rmsnorm_forward(resid1.ptr(), norm2_g.w.ptr(), normed2.ptr(), inv2.ptr(), R, d);
        mlp.forward(normed2.ptr(), R);
        y.resize({R, d});
        for (int64_t i = 0; i < R * d; ++i)
            y.data[static_cast<size_t>(i)] =
                resid1.data[static_cast<size_t>(i)] + mlp.y.data[static_cast<size_t>(i)];
    }

    void backward(const T* dy, T* dx, T* dpos) {
        const int64_t d = cfg.model_dim;
        const int64_t R = B * Tl;
        Tensor<T> dresid1({R, d});
        std::memcpy(dresid1.ptr(), dy, sizeof(T) * static_cast<size_t>(R * d));
        Tensor<T> dnormed2({R, d});
        mlp.backward(dy, dnormed2.ptr());
        kernels::rmsnorm_backward(resid1.ptr(), norm2_g.w.ptr(), inv2.ptr(), dnormed2.ptr(),
                                  dresid1.ptr(), norm2_g.g.ptr(), R, d);
        Tensor<T> dnormed1({R, d});
        attn.backward(dresid1.ptr(), dnormed1.ptr(), dpos);
        kernels::rmsnorm_backward(x_in.ptr(), norm1_g.w.ptr(), inv1.ptr(), dnormed1.ptr(), dx,
                                  norm1_g.g.ptr(), R, d);
        for (int64_t i = 0; i < R * d; ++i) dx[i] += dresid1.data[static_cast<size_t>(i)];
    }
};

}  // namespace synergy::nn
