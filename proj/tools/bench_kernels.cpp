// Times the OpenMP kernels against the serial reference path and checks the
// outputs stay bitwise identical.

#include <cstdio>
#include <random>
#include <vector>

#include <omp.h>

#include "synergy/nn.hpp"

using namespace synergy;

namespace {

std::vector<float> random_vec(size_t n, std::mt19937_64& rng) {
    std::normal_distribution<float> d(0.0f, 1.0f);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
    double best = 1e30;
    for (int r = 0; r < reps; ++r) {
        const double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best;
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx   %s\n", name,
                serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
                identical ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", omp_get_max_threads());
    std::mt19937_64 rng(1234);
    const int reps = 5;

    {
        const int64_t m = 512, k = 512, n = 512;
        auto a = random_vec(static_cast<size_t>(m * k), rng);
        auto b = random_vec(static_cast<size_t>(k * n), rng);
        std::vector<float> c_ser(static_cast<size_t>(m * n)), c_par(c_ser);
        set_parallel(false);
        const double ts = time_best_of(reps, [&] {
            kernels::matmul(a.data(), b.data(), c_ser.data(), m, k, n, false);
        });
        set_parallel(true);
        const double tp = time_best_of(reps, [&] {
            kernels::matmul(a.data(), b.data(), c_par.data(), m, k, n, false);
        });
        report("matmul 512^3", ts, tp, c_ser == c_par);
    }

    {
        nn::BlockConfig cfg;
        cfg.model_dim = 256;
        cfg.n_heads = 4;
        cfg.head_dim = 64;
        cfg.mlp_dim = 1024;
        cfg.window = 64;
        nn::Attention<float> attn_ser(cfg, "a"), attn_par(cfg, "a");
        std::vector<nn::Param<float>*> ps;
        attn_ser.collect(ps);
        for (auto* p : ps) nn::init_normal(p->w, rng, 0.02);
        std::vector<nn::Param<float>*> pp;
        attn_par.collect(pp);
        for (size_t i = 0; i < pp.size(); ++i) pp[i]->w = ps[i]->w;
        const int64_t T = 256;
        auto x = random_vec(static_cast<size_t>(T * cfg.model_dim), rng);
        std::vector<float> pos(static_cast<size_t>(T));
        for (int64_t t = 0; t < T; ++t) pos[static_cast<size_t>(t)] = static_cast<float>(t);
        set_parallel(false);
        const double ts = time_best_of(reps, [&] {
            attn_ser.forward(x.data(), 1, T, pos.data());
        });
        set_parallel(true);
        const double tp = time_best_of(reps, [&] {
            attn_par.forward(x.data(), 1, T, pos.data());
        });
        report("attention fwd d256 T256", ts, tp, attn_ser.y.data == attn_par.y.data);

        auto dy = random_vec(static_cast<size_t>(T * cfg.model_dim), rng);
        std::vector<float> dx_ser(x.size()), dx_par(x.size());
        set_parallel(false);
        const double bs = time_best_of(reps, [&] {
            for (auto* p : ps) p->g.zero();
            std::fill(dx_ser.begin(), dx_ser.end(), 0.0f);
            attn_ser.backward(dy.data(), dx_ser.data(), nullptr);
        });
        set_parallel(true);
        const double bp = time_best_of(reps, [&] {
            for (auto* p : pp) p->g.zero();
            std::fill(dx_par.begin(), dx_par.end(), 0.0f);
            attn_par.backward(dy.data(), dx_par.data(), nullptr);
        });
        report("attention bwd d256 T256", bs, bp, dx_ser == dx_par);
    }

    {
        nn::BlockConfig cfg;
        cfg.model_dim = 256;
        cfg.n_heads = 4;
        cfg.head_dim = 64;
        cfg.mlp_dim = 1024;
        nn::SwigluMlp<float> mlp_ser(cfg, "m"), mlp_par(cfg, "m");
        std::vector<nn::Param<float>*> ps, pp;
        mlp_ser.collect(ps);
        mlp_par.collect(pp);
        for (auto* p : ps) nn::init_normal(p->w, rng, 0.02);
        for (size_t i = 0; i < pp.size(); ++i) pp[i]->w = ps[i]->w;
        const int64_t R = 512;
        auto x = random_vec(static_cast<size_t>(R * cfg.model_dim), rng);
        set_parallel(false);
        const double ts = time_best_of(reps, [&] { mlp_ser.forward(x.data(), R); });
        set_parallel(true);
        const double tp = time_best_of(reps, [&] { mlp_par.forward(x.data(), R); });
        report("swiglu fwd d256 R512", ts, tp, mlp_ser.y.data == mlp_par.y.data);
    }

    set_parallel(true);
    return 0;
}
