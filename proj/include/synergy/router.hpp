#pragma once

// Routing between the byte-level stream and the compressed middle stream:
// per-token scalar weights, top-k selection, sigmoid gating, gather/scatter
// and the position rules for the compressed sequence.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "synergy/common.hpp"

namespace synergy::router {

enum class PositioningMode { original, sigma, sigma_grad, sigma_all, sigma_all_grad, none };

inline const char* mode_name(PositioningMode m) {
    switch (m) {
        case PositioningMode::original: return "original";
        case PositioningMode::sigma: return "sigma";
        case PositioningMode::sigma_grad: return "sigma_grad";
        case PositioningMode::sigma_all: return "sigma_all";
        case PositioningMode::sigma_all_grad: return "sigma_all_grad";
        case PositioningMode::none: return "none";
    }
    return "?";
}

inline PositioningMode mode_from_name(const std::string& s) {
    for (auto m : {PositioningMode::original, PositioningMode::sigma, PositioningMode::sigma_grad,
                   PositioningMode::sigma_all, PositioningMode::sigma_all_grad,
                   PositioningMode::none})
        if (s == mode_name(m)) return m;
    throw SynergyError("unknown positioning mode: " + s);
}

inline std::vector<PositioningMode> all_modes() {
    return {PositioningMode::original, PositioningMode::sigma, PositioningMode::sigma_grad,
            PositioningMode::sigma_all, PositioningMode::sigma_all_grad, PositioningMode::none};
}

// Per-sequence router outputs.
template <typename T>
struct RoutingState {
    std::vector<T> w;                 // weight factor per token
    std::vector<uint8_t> m;           // top-k mask
    std::vector<T> sigma;             // sigmoid(w)
    std::vector<int64_t> picked;      // ascending selected indices
    std::vector<T> middle_positions;  // length picked.size()
    int64_t k = 0;
    int64_t k_eff() const { return static_cast<int64_t>(picked.size()); }
};

// Selects the min(k, #valid) valid positions with the largest weights,
// ties broken toward the earliest position. No gradient flows through this.
template <typename T>
void topk_mask(const std::vector<T>& w, int64_t k, const std::vector<uint8_t>& valid,
               std::vector<uint8_t>& mask, std::vector<int64_t>& picked) {
    if (k <= 0) throw SynergyError("topk_mask: k must be >= 1");
    const int64_t n = static_cast<int64_t>(w.size());
    std::vector<int64_t> idx;
    idx.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        if (valid.empty() || valid[static_cast<size_t>(i)]) idx.push_back(i);
    const int64_t k_eff = std::min<int64_t>(k, static_cast<int64_t>(idx.size()));
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        return w[static_cast<size_t>(a)] > w[static_cast<size_t>(b)];
    });
    picked.assign(idx.begin(), idx.begin() + k_eff);
    std::sort(picked.begin(), picked.end());
    mask.assign(static_cast<size_t>(n), 0);
    for (int64_t i : picked) mask[static_cast<size_t>(i)] = 1;
}

// Position rule for the compressed sequence. original_positions are the byte
// indices; sigma cumsums are inclusive. valid_len limits the *_all cumsum to
// non-pad tokens.
template <typename T>
std::vector<T> middle_positions(const RoutingState<T>& state, PositioningMode mode,
                                int64_t valid_len) {
    std::vector<T> pos(state.picked.size(), T(0));
    switch (mode) {
        case PositioningMode::original:
            for (size_t j = 0; j < state.picked.size(); ++j)
                pos[j] = static_cast<T>(state.picked[j]);
            break;
        case PositioningMode::sigma:
        case PositioningMode::sigma_grad: {
            T acc = T(0);
            for (size_t j = 0; j < state.picked.size(); ++j) {
                acc += state.sigma[static_cast<size_t>(state.picked[j])];
                pos[j] = acc;
            }
            break;
        }
        case PositioningMode::sigma_all:
        case PositioningMode::sigma_all_grad: {
            std::vector<T> cum(static_cast<size_t>(valid_len), T(0));
            T acc = T(0);
            for (int64_t i = 0; i < valid_len; ++i) {
                acc += state.sigma[static_cast<size_t>(i)];
                cum[static_cast<size_t>(i)] = acc;
            }
            for (size_t j = 0; j < state.picked.size(); ++j)
                pos[j] = cum[static_cast<size_t>(state.picked[j])];
            break;
        }
        case PositioningMode::none:
            break;  // ignored downstream
    }
    return pos;
}

// Backward of middle_positions into dsigma; only the *_grad modes keep the
// path from positions to the gating factor.
template <typename T>
void positions_backward(const RoutingState<T>& state, PositioningMode mode, int64_t valid_len,
                        const std::vector<T>& dpos, std::vector<T>& dsigma) {
    if (mode == PositioningMode::sigma_grad) {
        // pos[j] = sum_{j' <= j} sigma[picked[j']]
        T suffix = T(0);
        for (int64_t j = static_cast<int64_t>(state.picked.size()) - 1; j >= 0; --j) {
            suffix += dpos[static_cast<size_t>(j)];
            dsigma[static_cast<size_t>(state.picked[static_cast<size_t>(j)])] += suffix;
        }
    } else if (mode == PositioningMode::sigma_all_grad) {
        // pos[j] = cum[picked[j]], cum inclusive over all valid tokens
        std::vector<T> dcum(static_cast<size_t>(valid_len), T(0));
        for (size_t j = 0; j < state.picked.size(); ++j)
            dcum[static_cast<size_t>(state.picked[j])] += dpos[j];
        T suffix = T(0);
        for (int64_t i = valid_len - 1; i >= 0; --i) {
            suffix += dcum[static_cast<size_t>(i)];
            dsigma[static_cast<size_t>(i)] += suffix;
        }
    }
}

// out[j] = x[picked[j]] for rows of width d.
template <typename T>
void gather_compressed(const T* x, int64_t n_rows, int64_t d, const std::vector<int64_t>& picked,
                       T* out) {
    for (size_t j = 0; j < picked.size(); ++j) {
        const int64_t i = picked[j];
        if (i < 0 || i >= n_rows) throw SynergyError("gather_compressed: index out of range");
        if (j > 0 && picked[j] <= picked[j - 1])
            throw SynergyError("gather_compressed: picked must be strictly ascending");
        std::copy(x + i * d, x + (i + 1) * d, out + static_cast<int64_t>(j) * d);
    }
}

// y_i = x_i + m_i * sigma_i * middle_out[rank(i)] (Eq. 4 shape).
template <typename T>
void gated_scatter_add(const T* x, const T* middle_out, const RoutingState<T>& state, int64_t n_rows,
                       int64_t d, T* y) {
    std::copy(x, x + n_rows * d, y);
    for (size_t j = 0; j < state.picked.size(); ++j) {
        const int64_t i = state.picked[j];
        const T s = state.sigma[static_cast<size_t>(i)];
        const T* mo = middle_out + static_cast<int64_t>(j) * d;
        T* yi = y + i * d;
        for (int64_t u = 0; u < d; ++u) yi[u] += s * mo[u];
    }
}

// Backward of gated_scatter_add: dx += dy; for picked rows also
// dmiddle += sigma * dy and dsigma += <dy, middle_out>.
template <typename T>
void gated_scatter_add_backward(const T* dy, const T* middle_out, const RoutingState<T>& state,
                                int64_t n_rows, int64_t d, T* dx, T* dmiddle,
                                std::vector<T>& dsigma) {
    for (int64_t i = 0; i < n_rows * d; ++i) dx[i] += dy[i];
    for (size_t j = 0; j < state.picked.size(); ++j) {
        const int64_t i = state.picked[j];
        const T s = state.sigma[static_cast<size_t>(i)];
        const T* dyi = dy + i * d;
        const T* mo = middle_out + static_cast<int64_t>(j) * d;
        T* dmo = dmiddle + static_cast<int64_t>(j) * d;
        T acc = T(0);
        for (int64_t u = 0; u < d; ++u) {
            dmo[u] += s * dyi[u];
            acc += dyi[u] * mo[u];
        }
        dsigma[static_cast<size_t>(i)] += acc;
    }
}

// Causal inference-time routing: pick token i iff w_i >= threshold.
template <typename T>
std::vector<uint8_t> inference_threshold_route(const std::vector<T>& w, T threshold) {
    std::vector<uint8_t> mask(w.size(), 0);
    for (size_t i = 0; i < w.size(); ++i) mask[i] = w[i] >= threshold ? 1 : 0;
    return mask;
}

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

}  // namespace synergy::router
