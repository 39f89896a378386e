#pragma once

// Dense kernels used by every block: matrix products in the three layouts
// backprop needs, RMS normalization, row softmax, SiLU, rotary rotation and
// the AdamW update. Each kernel runs the OpenMP path when parallel mode is
// on and a plain serial loop otherwise; both paths share the same per-output
// summation order.

#include <cmath>
#include <cstdint>

#include "synergy/common.hpp"

namespace synergy::kernels {

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        const T* arow = a + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,K] (+)= A[M,N] * B[K,N]^T   (i.e. C = A * B^T)
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t n, int64_t k, bool accumulate) {
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        T* crow = c + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T acc = T(0);
            for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            if (accumulate)
                crow[p] += acc;
            else
                crow[p] = acc;
        }
    }
}

// C[K,N] (+)= A[M,K]^T * B[M,N]   (weight-gradient layout)
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t p = 0; p < k; ++p) {
        T* crow = c + p * n;
        if (!accumulate) {
            for (int64_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (int64_t i = 0; i < m; ++i) {
            const T av = a[i * k + p];
            const T* brow = b + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

inline constexpr double kRmsNormEps = 1e-5;

// y[r] = x[r] * gain / sqrt(mean(x[r]^2) + eps), rows of width d.
// inv_rms[r] is cached for backward.
template <typename T>
void rmsnorm_forward(const T* x, const T* gain, T* y, T* inv_rms, int64_t rows, int64_t d) {
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * d;
        T* yr = y + r * d;
        T ss = T(0);
        for (int64_t j = 0; j < d; ++j) ss += xr[j] * xr[j];
        const T inv = T(1) / std::sqrt(ss / T(d) + T(kRmsNormEps));
        inv_rms[r] = inv;
        for (int64_t j = 0; j < d; ++j) yr[j] = xr[j] * inv * gain[j];
    }
}

template <typename T>
void rmsnorm_backward(const T* x, const T* gain, const T* inv_rms, const T* dy, T* dx,
                      T* dgain, int64_t rows, int64_t d) {
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x + r * d;
        const T* dyr = dy + r * d;
        T* dxr = dx + r * d;
        const T inv = inv_rms[r];
        // dL/dx = inv * g * dy - x * inv^3 / d * sum(dy * g * x)
        T dot = T(0);
        for (int64_t j = 0; j < d; ++j) dot += dyr[j] * gain[j] * xr[j];
        const T coef = inv * inv * inv * dot / T(d);
        for (int64_t j = 0; j < d; ++j) dxr[j] += dyr[j] * gain[j] * inv - xr[j] * coef;
    }
    // gain gradient accumulated over rows in fixed order; parallel over columns
#pragma omp parallel for schedule(static) if (par)
    for (int64_t j = 0; j < d; ++j) {
        T acc = T(0);
        for (int64_t r = 0; r < rows; ++r) acc += dy[r * d + j] * x[r * d + j] * inv_rms[r];
        dgain[j] += acc;
    }
}

// In-place softmax over x[0..n), max-subtracted.
template <typename T>
void softmax_row(T* x, int64_t n) {
    T mx = x[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    T sum = T(0);
    for (int64_t j = 0; j < n; ++j) {
        x[j] = std::exp(x[j] - mx);
        sum += x[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < n; ++j) x[j] *= inv;
}

template <typename T>
T silu(T x) {
    return x / (T(1) + std::exp(-x));
}

template <typename T>
T silu_grad(T x) {
    const T s = T(1) / (T(1) + std::exp(-x));
    return s * (T(1) + x * (T(1) - s));
}

// Rotate consecutive pairs (2p, 2p+1) of each head row by pos * base^(-2p/hd).
// x is [rows, hd]; pos is one angle scale per row.
template <typename T>
void rope_forward(T* x, const T* pos, int64_t rows, int64_t hd, T base) {
    if (hd % 2 != 0) throw SynergyError("rope: head_dim must be even");
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < rows; ++r) {
        T* xr = x + r * hd;
        for (int64_t p = 0; p < hd / 2; ++p) {
            const T freq = std::pow(base, T(-2) * T(p) / T(hd));
            const T ang = pos[r] * freq;
            const T c = std::cos(ang), s = std::sin(ang);
            const T a = xr[2 * p], b = xr[2 * p + 1];
            xr[2 * p] = a * c - b * s;
            xr[2 * p + 1] = a * s + b * c;
        }
    }
}

// Backward through the rotation: given dL/d(rotated), produce dL/d(unrotated)
// in place and accumulate dL/dpos (pass dpos == nullptr to sever that path).
// x_unrot must be the pre-rotation values.
template <typename T>
void rope_backward(T* dx, const T* x_unrot, const T* pos, T* dpos, int64_t rows, int64_t hd,
                   T base) {
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t r = 0; r < rows; ++r) {
        T* dr = dx + r * hd;
        const T* xr = x_unrot + r * hd;
        T dpos_acc = T(0);
        for (int64_t p = 0; p < hd / 2; ++p) {
            const T freq = std::pow(base, T(-2) * T(p) / T(hd));
            const T ang = pos[r] * freq;
            const T c = std::cos(ang), s = std::sin(ang);
            const T da = dr[2 * p], db = dr[2 * p + 1];
            // inverse rotation on the gradient
            dr[2 * p] = da * c + db * s;
            dr[2 * p + 1] = -da * s + db * c;
            if (dpos) {
                const T a = xr[2 * p], b = xr[2 * p + 1];
                // d(out)/d(ang) = (-a s - b c, a c - b s)
                dpos_acc += freq * (da * (-a * s - b * c) + db * (a * c - b * s));
            }
        }
        if (dpos) dpos[r] += dpos_acc;
    }
}

// Decoupled weight decay Adam step.
template <typename T>
void adamw_step(T* w, const T* g, T* m, T* v, int64_t n, T lr, T beta1, T beta2, T eps,
                T weight_decay, int64_t step) {
    const T bc1 = T(1) - std::pow(beta1, T(step));
    const T bc2 = T(1) - std::pow(beta2, T(step));
    const bool par = parallel_enabled();
#pragma omp parallel for schedule(static) if (par)
    for (int64_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
    }
}

}  // namespace synergy::kernels
