// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Heavier checks (desk-scale training) come late so the cheap
// structural criteria report first.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "synergy/bpe.hpp"
#include "synergy/checkpoint.hpp"
#include "synergy/corpus.hpp"
#include "synergy/train.hpp"
#include "synergy/viz.hpp"

namespace fs = std::filesystem;
using namespace synergy;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kWorkDir = "/tmp/synergy_acceptance";
std::string g_checkpoint_path;  // produced by the desk-scale criterion

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string run_cli(const std::string& args, int* exit_code) {
    const std::string cmd = std::string(SYNERGY_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw SynergyError("popen failed");
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), p)) > 0) out.append(buf, n);
    const int status = pclose(p);
    if (exit_code) *exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return out;
}

size_t count_occurrences(const std::string& hay, const std::string& needle) {
    size_t n = 0;
    for (size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

std::string random_utf8(std::mt19937_64& rng, int max_cps) {
    std::uniform_int_distribution<int> n_dist(0, max_cps);
    std::uniform_int_distribution<int> kind(0, 3);
    std::string out;
    const int n = n_dist(rng);
    for (int i = 0; i < n; ++i) {
        uint32_t cp = 0;
        switch (kind(rng)) {
            case 0: cp = std::uniform_int_distribution<uint32_t>(0x01, 0x7F)(rng); break;
            case 1: cp = std::uniform_int_distribution<uint32_t>(0x80, 0x7FF)(rng); break;
            case 2:
                do {
                    cp = std::uniform_int_distribution<uint32_t>(0x800, 0xFFFF)(rng);
                } while (cp >= 0xD800 && cp <= 0xDFFF);
                break;
            default: cp = std::uniform_int_distribution<uint32_t>(0x10000, 0x10FFFF)(rng); break;
        }
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

model::ModelConfig small_cfg(router::PositioningMode mode, int64_t dim, int64_t heads,
                             int64_t enc, int64_t mid, int64_t dec, int64_t ctx, int64_t k,
                             int64_t window) {
    model::ModelConfig c;
    c.vocab_size = 259;
    c.context_length = ctx;
    c.enc_layers = enc;
    c.mid_layers = mid;
    c.dec_layers = dec;
    c.block.model_dim = dim;
    c.block.n_heads = heads;
    c.block.head_dim = dim / heads;
    c.block.mlp_dim = dim * 3;
    c.block.window = window;
    c.k = k;
    c.positioning = mode;
    return c;
}

template <typename T>
void wake_router(model::SynergyModel<T>& m, uint64_t seed, double scale = 0.5) {
    std::mt19937_64 rng(seed);
    nn::init_normal(m.router_w.w, rng, scale);
    m.router_b.w.data[0] = static_cast<T>(0.1);
    nn::init_normal(m.mid_proj.w, rng, 0.1);
}

std::vector<int> random_ids(std::mt19937_64& rng, int64_t n, int bos, int eos) {
    std::vector<int> ids;
    ids.push_back(bos);
    for (int64_t i = 0; i < n - 2; ++i)
        ids.push_back(std::uniform_int_distribution<int>(0, 255)(rng));
    ids.push_back(eos);
    return ids;
}

// ---------------------------------------------------------------- criteria

bool check_router_invariants(std::string& detail) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1001);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const int64_t n = std::uniform_int_distribution<int64_t>(1, 64)(rng);
        const int64_t k = std::uniform_int_distribution<int64_t>(1, 80)(rng);
        std::vector<double> w(static_cast<size_t>(n));
        for (auto& x : w) x = nd(rng);
        std::vector<uint8_t> mask;
        std::vector<int64_t> picked;
        router::topk_mask(w, k, {}, mask, picked);

        if (static_cast<int64_t>(picked.size()) != std::min(k, n)) {
            detail = "cardinality violated";
            return false;
        }
        // independent oracle: sort (weight desc, index asc), take the head
        std::vector<std::pair<double, int64_t>> order;
        for (int64_t i = 0; i < n; ++i) order.push_back({-w[static_cast<size_t>(i)], i});
        std::sort(order.begin(), order.end());
        std::vector<int64_t> expect;
        for (int64_t i = 0; i < std::min(k, n); ++i) expect.push_back(order[static_cast<size_t>(i)].second);
        std::sort(expect.begin(), expect.end());
        if (picked != expect) {
            detail = "top-k selection disagrees with the sort oracle";
            return false;
        }
        int64_t on = 0;
        for (int64_t i = 0; i < n; ++i) on += mask[static_cast<size_t>(i)];
        if (on != static_cast<int64_t>(picked.size())) {
            detail = "mask cardinality mismatch";
            return false;
        }
        // sigma == sigmoid(w) elementwise
        for (double x : w)
            if (std::abs(router::sigmoid(x) - 1.0 / (1.0 + std::exp(-x))) > 1e-6) {
                detail = "sigma mismatch";
                return false;
            }
        // shift invariance of the mask
        for (double c : {-3.7, 11.2}) {
            auto ws = w;
            for (auto& x : ws) x += c;
            std::vector<uint8_t> mask2;
            std::vector<int64_t> picked2;
            router::topk_mask(ws, k, {}, mask2, picked2);
            if (mask2 != mask) {
                detail = "mask not shift-invariant";
                return false;
            }
        }
    }
    const double dt = seconds_since(t0);
    if (dt >= 60.0) {
        detail = "too slow: " + std::to_string(dt) + "s";
        return false;
    }
    detail = "10000 instances in " + std::to_string(dt) + "s";
    return true;
}

bool check_bypass_identity(std::string& detail) {
    std::mt19937_64 rng(2001);
    for (auto mode : router::all_modes()) {
        auto cfg = small_cfg(mode, 16, 2, 1, 2, 1, 16, 4, 4);
        model::SynergyModel<double> m(cfg);
        m.init_weights(42);  // mid output projection stays zero
        std::mt19937_64 r2(43);
        nn::init_normal(m.router_w.w, r2, 0.5);  // routing active, projection silent
        for (int trial = 0; trial < 100; ++trial) {
            const int64_t T = std::uniform_int_distribution<int64_t>(3, 12)(rng);
            auto ids = random_ids(rng, T, cfg.bos_id, cfg.eos_id);
            m.forward(ids, 1, T);
            const auto full = m.logits.data;

            // encoder+decoder-only forward: skip router/middle entirely
            const int64_t d = cfg.block.model_dim;
            std::vector<double> x(static_cast<size_t>(T * d));
            for (int64_t t = 0; t < T; ++t)
                std::copy(m.embed.w.ptr() + ids[static_cast<size_t>(t)] * d,
                          m.embed.w.ptr() + (ids[static_cast<size_t>(t)] + 1) * d, x.data() + t * d);
            std::vector<double> pos(static_cast<size_t>(T));
            for (int64_t t = 0; t < T; ++t) pos[static_cast<size_t>(t)] = static_cast<double>(t);
            const double* cur = x.data();
            for (auto& l : m.enc) {
                l->forward(cur, 1, T, pos.data());
                cur = l->y.ptr();
            }
            for (auto& l : m.dec) {
                l->forward(cur, 1, T, pos.data());
                cur = l->y.ptr();
            }
            std::vector<double> normed(static_cast<size_t>(T * d)), inv(static_cast<size_t>(T));
            kernels::rmsnorm_forward(cur, m.final_norm_g.w.ptr(), normed.data(), inv.data(), T, d);
            std::vector<double> ref(static_cast<size_t>(T * cfg.vocab_size));
            kernels::matmul(normed.data(), m.head.w.ptr(), ref.data(), T, d, cfg.vocab_size, false);

            for (size_t i = 0; i < ref.size(); ++i)
                if (full[i] != ref[i]) {
                    detail = std::string("mode ") + router::mode_name(mode) +
                             ": bypass not exact";
                    return false;
                }
        }
    }
    detail = "6 modes x 100 inputs, exact";
    return true;
}

bool check_causality(std::string& detail) {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(3001);
    for (auto mode : router::all_modes()) {
        auto cfg = small_cfg(mode, 32, 2, 1, 2, 1, 24, 8, 8);
        model::SynergyModel<double> m(cfg);
        m.init_weights(5);
        wake_router(m, 6);
        const int64_t T = 24;
        auto ids = random_ids(rng, T, cfg.bos_id, cfg.eos_id);
        // causal inference routing: a token's selection depends only on itself
        m.forward(ids, 1, T, std::optional<double>(0.0));
        const auto base = m.logits.data;
        for (int64_t j = 1; j < T - 1; ++j) {
            auto ids2 = ids;
            ids2[static_cast<size_t>(j)] = (ids2[static_cast<size_t>(j)] + 101) % 256;
            m.forward(ids2, 1, T, std::optional<double>(0.0));
            for (int64_t t = 0; t < j; ++t)
                for (int64_t v = 0; v < cfg.vocab_size; ++v) {
                    const size_t idx = static_cast<size_t>(t * cfg.vocab_size + v);
                    if (std::abs(m.logits.data[idx] - base[idx]) >= 1e-6) {
                        detail = std::string("mode ") + router::mode_name(mode) +
                                 ": logit changed before the perturbation";
                        return false;
                    }
                }
        }
    }
    detail = "6 modes, 22 perturbation sites each, in " +
             std::to_string(seconds_since(t0)) + "s";
    return true;
}

bool check_nope_position_independence(std::string& detail) {
    // same gathered values, same relative order, different source indices
    auto run_mid = [](model::SynergyModel<double>& m, const std::vector<double>& x, int64_t rows,
                      const std::vector<double>& pos) {
        const double* cur = x.data();
        for (auto& l : m.mid) {
            l->forward(cur, 1, rows, pos.data());
            cur = l->y.ptr();
        }
        return std::vector<double>(cur, cur + rows * m.cfg.block.model_dim);
    };
    std::mt19937_64 rng(4001);
    std::normal_distribution<double> nd(0.0, 1.0);
    const int64_t rows = 3;

    auto cfg_none = small_cfg(router::PositioningMode::none, 16, 2, 1, 2, 1, 16, 4, 4);
    model::SynergyModel<double> m_none(cfg_none);
    m_none.init_weights(9);
    auto cfg_orig = small_cfg(router::PositioningMode::original, 16, 2, 1, 2, 1, 16, 4, 4);
    model::SynergyModel<double> m_orig(cfg_orig);
    m_orig.init_weights(9);

    std::vector<double> x(static_cast<size_t>(rows * 16));
    for (auto& v : x) v = nd(rng);
    const std::vector<double> pos_a = {2.0, 5.0, 7.0};  // mask {2,5,7}
    const std::vector<double> pos_b = {0.0, 3.0, 9.0};  // mask {0,3,9}

    auto none_a = run_mid(m_none, x, rows, pos_a);
    auto none_b = run_mid(m_none, x, rows, pos_b);
    double none_diff = 0;
    for (size_t i = 0; i < none_a.size(); ++i)
        none_diff = std::max(none_diff, std::abs(none_a[i] - none_b[i]));
    if (none_diff >= 1e-6) {
        detail = "mode none depends on original indices (diff " + std::to_string(none_diff) + ")";
        return false;
    }
    auto orig_a = run_mid(m_orig, x, rows, pos_a);
    auto orig_b = run_mid(m_orig, x, rows, pos_b);
    double orig_diff = 0;
    for (size_t i = 0; i < orig_a.size(); ++i)
        orig_diff = std::max(orig_diff, std::abs(orig_a[i] - orig_b[i]));
    if (orig_diff <= 1e-6) {
        detail = "mode original failed to distinguish the index sets";
        return false;
    }
    detail = "none diff " + std::to_string(none_diff) + ", original diff " +
             std::to_string(orig_diff);
    return true;
}

bool check_gradients(std::string& detail) {
    std::mt19937_64 rng(5001);
    int total = 0, ok = 0;
    for (auto mode : router::all_modes()) {
        auto cfg = small_cfg(mode, 16, 2, 1, 1, 1, 16, 3, 4);
        model::SynergyModel<double> m(cfg);
        m.init_weights(21);
        wake_router(m, 22);
        const int64_t T = 8;
        std::vector<int> ids = {cfg.bos_id, 10, 200, 31, 77, 5, 150, cfg.eos_id};
        std::vector<uint8_t> mask(static_cast<size_t>(T), 1);
        mask[static_cast<size_t>(T - 1)] = 0;

        auto loss_now = [&]() {
            m.forward(ids, 1, T);
            return model::loss_and_grad<double>(m.logits, ids, mask, 1, T, cfg.vocab_size,
                                                nullptr);
        };
        m.zero_grad();
        m.forward(ids, 1, T);
        Tensor<double> dlogits({T, cfg.vocab_size});
        model::loss_and_grad<double>(m.logits, ids, mask, 1, T, cfg.vocab_size, dlogits.ptr());
        m.backward(dlogits.ptr());

        const double h = 1e-3;
        // always include the router (sigma path) and projection; sample the rest
        std::vector<std::pair<nn::Param<double>*, size_t>> samples;
        for (int64_t u = 0; u < cfg.block.model_dim; ++u)
            samples.push_back({&m.router_w, static_cast<size_t>(u)});
        samples.push_back({&m.router_b, 0});
        for (int s = 0; s < 16; ++s)
            samples.push_back({&m.mid_proj,
                               std::uniform_int_distribution<size_t>(
                                   0, m.mid_proj.w.data.size() - 1)(rng)});
        for (auto* p : m.params)
            for (int s = 0; s < 6; ++s)
                samples.push_back(
                    {p, std::uniform_int_distribution<size_t>(0, p->w.data.size() - 1)(rng)});

        for (auto [p, i] : samples) {
            const double save = p->w.data[i];
            p->w.data[i] = save + h;
            const double lp = loss_now();
            p->w.data[i] = save - h;
            const double lm = loss_now();
            p->w.data[i] = save;
            const double fd = (lp - lm) / (2 * h);
            const double g = p->g.data[i];
            const double rel = std::abs(g - fd) / std::max(std::abs(fd), 1e-3);
            ++total;
            if (rel < 1e-3) ++ok;
        }
    }
    const double frac = static_cast<double>(ok) / static_cast<double>(total);
    detail = std::to_string(ok) + "/" + std::to_string(total) + " within tolerance";
    return frac >= 0.99;
}

bool check_desk_learning(std::string& detail) {
    const auto t0 = Clock::now();
    fs::create_directories(kWorkDir + "/run1mb");

    // 1 MB English text, desk preset, early stop once eval BPB < 3.5
    const std::string corpus_path = std::string(SYNERGY_SOURCE_DIR) + "/data/english_1mb.txt";
    std::ifstream cf(corpus_path, std::ios::binary);
    if (!cf) {
        detail = "missing " + corpus_path;
        return false;
    }
    std::string text((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
    auto cfg = model::ModelConfig::desk();
    auto segs = corpus::clip_segments(text, cfg.context_length);
    auto split = corpus::split_corpus(static_cast<int64_t>(segs.size()), 0.9, 0);
    auto take = [&](const std::vector<int64_t>& idx) {
        std::vector<corpus::ByteSegment> out;
        for (int64_t i : idx) out.push_back(segs[static_cast<size_t>(i)]);
        return out;
    };
    auto train_data = train::DataSet::from_segments(take(split.train));
    auto eval_data = train::DataSet::from_segments(take(split.eval));

    model::SynergyModel<float> m(cfg);
    m.init_weights(1);
    train::AdamW<float> opt(m);
    train::TrainConfig tc;
    tc.batch_size = 32;
    tc.lr = 3e-3;
    tc.warmup_steps = 20;
    tc.total_steps = 4000;
    tc.eval_interval = 10;
    tc.seed = 1;
    tc.stop_at_eval_bpb = 3.5;
    tc.max_eval_rows = 64;
    tc.max_wall_clock_s = 9000.0;
    auto res = train::train_loop(m, opt, train_data, eval_data, tc, kWorkDir + "/run1mb",
                                 [](const train::MetricsRecord& r) {
                                     std::fprintf(stderr, "  [1mb] step %lld bpb %.4f (%.0fs)\n",
                                                  static_cast<long long>(r.step), r.eval_bpb,
                                                  r.wall_clock_s);
                                 });
    if (res.final_eval_bpb >= 3.5) {
        detail = "1MB eval BPB " + std::to_string(res.final_eval_bpb) + " after " +
                 std::to_string(res.steps_run) + " steps";
        return false;
    }
    // keep the trained model for the visualization criterion
    model::TrainingCheckpoint<float> meta;
    meta.step = res.steps_run;
    meta.router_threshold = res.router_threshold;
    meta.rng_state = "1";
    g_checkpoint_path = kWorkDir + "/run1mb/checkpoint.bin";
    model::save_checkpoint(g_checkpoint_path, m, static_cast<model::OptState<float>*>(nullptr),
                           meta);

    // BPB identity for the byte model: bpb == mean nats / ln 2
    auto ev = train::evaluate(m, eval_data, 32, 32);
    if (std::abs(ev.bpb_value - ev.mean_loss_nats / std::log(2.0)) > 1e-9) {
        detail = "BPB identity violated";
        return false;
    }

    // uniform random bytes stay at (or above) incompressible
    std::mt19937_64 rng(77);
    std::vector<corpus::ByteSegment> rand_segs;
    for (int r = 0; r < 4; ++r) {
        corpus::ByteSegment s;
        for (int i = 0; i < 254; ++i)
            s.ids.push_back(std::uniform_int_distribution<int>(0, 255)(rng));
        s.byte_len = 254;
        rand_segs.push_back(std::move(s));
    }
    auto rand_eval = train::evaluate(m, train::DataSet::from_segments(rand_segs), 4);
    if (rand_eval.bpb_value < 7.9) {
        detail = "random-byte BPB " + std::to_string(rand_eval.bpb_value) + " < 7.9";
        return false;
    }

    // 1 KB of repeated text memorizes to < 0.2 BPB
    std::string unit = "the quick brown fox jumps over the lazy dog. ";
    std::string repeated;
    while (repeated.size() < 1024) repeated += unit;
    repeated.resize(1024);
    auto mem_segs = corpus::clip_segments(repeated, cfg.context_length);
    auto mem_data = train::DataSet::from_segments(mem_segs);
    model::SynergyModel<float> mm(cfg);
    mm.init_weights(2);
    train::AdamW<float> mopt(mm);
    train::TrainConfig mc;
    mc.batch_size = 4;
    mc.lr = 3e-3;
    mc.warmup_steps = 20;
    mc.total_steps = 3000;
    mc.eval_interval = 25;
    mc.seed = 2;
    mc.stop_at_eval_bpb = 0.2;
    mc.max_wall_clock_s = 2400.0;
    auto mres = train::train_loop(mm, mopt, mem_data, mem_data, mc, kWorkDir,
                                  [](const train::MetricsRecord& r) {
                                      std::fprintf(stderr, "  [1kb] step %lld bpb %.4f\n",
                                                   static_cast<long long>(r.step), r.eval_bpb);
                                  });
    if (mres.final_eval_bpb >= 0.2) {
        detail = "memorization BPB " + std::to_string(mres.final_eval_bpb);
        return false;
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "1MB bpb %.3f (%lld steps), memorization %.3f, random %.2f, %.0fs",
                  res.final_eval_bpb, static_cast<long long>(res.steps_run), mres.final_eval_bpb,
                  rand_eval.bpb_value, seconds_since(t0));
    detail = buf;
    return true;
}

bool check_flops(std::string& detail) {
    // hand-counted micro oracle (exact)
    model::ModelConfig c;
    c.enc_layers = 1;
    c.mid_layers = 1;
    c.dec_layers = 1;
    c.block.model_dim = 2;
    c.block.n_heads = 1;
    c.block.head_dim = 2;
    c.block.mlp_dim = 4;
    c.block.window = 2;
    c.k = 2;
    c.context_length = 4;
    auto rep = train::estimate_flops(c, 4, 2, 3);
    if (rep.synergy_mlp != 2 * 192 + 96 || rep.synergy_attn != 2 * (128 + 56) + 64 + 24 ||
        rep.baseline_mlp != 3 * 144 || rep.baseline_attn != 3 * (96 + 48)) {
        detail = "micro oracle mismatch";
        return false;
    }
    // full-scale preset via the CLI
    int code = 0;
    const auto out = run_cli("flops --preset paper", &code);
    if (code != 0) {
        detail = "cli flops exited " + std::to_string(code);
        return false;
    }
    const auto j = nlohmann::json::parse(out);
    const double ratio = j.at("ratio").get<double>();
    const double share = j.at("extra_mlp_share").get<double>();
    if (ratio < 1.3 || ratio > 2.0) {
        detail = "ratio " + std::to_string(ratio) + " outside [1.3, 2.0]";
        return false;
    }
    if (share <= 0.6) {
        detail = "extra MLP share " + std::to_string(share) + " <= 0.6";
        return false;
    }
    // no-argument invocation prints usage and exits 2
    run_cli("", &code);
    if (code != 2) {
        detail = "bare invocation exited " + std::to_string(code) + ", want 2";
        return false;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "ratio %.3f, extra MLP share %.1f%%", ratio, share * 100);
    detail = buf;
    return true;
}

bool check_ablations(std::string& detail) {
    const auto t0 = Clock::now();
    const std::string dir = kWorkDir + "/ablate";
    fs::create_directories(dir);
    auto cfg = model::ModelConfig::desk();

    const std::string corpus_path = std::string(SYNERGY_SOURCE_DIR) + "/data/english_1mb.txt";
    std::ifstream cf(corpus_path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
    auto segs = corpus::clip_segments(text.substr(0, 40000), cfg.context_length);
    auto data = train::DataSet::from_segments(segs);

    train::TrainConfig tc;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    tc.warmup_steps = 2;
    tc.total_steps = 4;
    tc.eval_interval = 2;
    tc.seed = 3;
    tc.max_eval_rows = 4;

    auto modes = router::all_modes();
    auto table = train::run_positioning_ablation<float>(cfg, tc, modes, data, data, dir);
    if (table.size() != 6) {
        detail = "positioning table has " + std::to_string(table.size()) + " rows";
        return false;
    }
    for (const auto& row : table)
        if (row.failed) {
            detail = "mode " + row.label + " failed: " + row.error;
            return false;
        }
    for (auto mode : modes) {
        const std::string curve = dir + "/positioning_" + router::mode_name(mode) + ".csv";
        if (!fs::exists(curve)) {
            detail = "missing curve " + curve;
            return false;
        }
    }
    // reference annotations present in the comparison table
    std::ifstream tf(dir + "/positioning_table.csv");
    std::string tbl((std::istreambuf_iterator<char>(tf)), std::istreambuf_iterator<char>());
    for (const char* ref : {"1.0164", "1.0747", "1.0523", "1.0251", "1.063", "0.9906"})
        if (tbl.find(ref) == std::string::npos) {
            detail = std::string("reference value ") + ref + " missing from the table";
            return false;
        }

    std::vector<int64_t> ks = {14, 28, 42, 56};
    auto ktable = train::run_k_sweep<float>(cfg, tc, ks, data, data, dir);
    if (ktable.size() != 4) {
        detail = "k sweep has " + std::to_string(ktable.size()) + " rows";
        return false;
    }
    for (const auto& row : ktable)
        if (row.failed) {
            detail = "k=" + row.label + " failed: " + row.error;
            return false;
        }
    if (!fs::exists(dir + "/ksweep_table.csv")) {
        detail = "missing ksweep_table.csv";
        return false;
    }
    detail = "6 modes + 4-point k sweep in " + std::to_string(seconds_since(t0)) + "s";
    return true;
}

bool check_visualization(std::string& detail) {
    if (g_checkpoint_path.empty()) {
        detail = "no trained checkpoint available";
        return false;
    }
    const std::string text =
        "The routing layer decides which bytes carry enough meaning to pass "
        "through the deeper middle stack of the network.";
    const std::string out_path = kWorkDir + "/viz.html";
    int code = 0;
    run_cli("visualize --checkpoint " + g_checkpoint_path + " --text \"" + text +
                "\" --format html --out " + out_path,
            &code);
    if (code != 0) {
        detail = "cli visualize exited " + std::to_string(code);
        return false;
    }
    std::ifstream hf(out_path);
    std::string html((std::istreambuf_iterator<char>(hf)), std::istreambuf_iterator<char>());

    // recompute the routing state the CLI rendered
    auto header = model::read_checkpoint_header(g_checkpoint_path);
    auto mcfg = model::config_from_json(header.at("config"));
    model::SynergyModel<float> m(mcfg);
    model::load_checkpoint<float>(g_checkpoint_path, m, nullptr);
    std::vector<int> ids;
    ids.push_back(mcfg.bos_id);
    for (char ch : text) ids.push_back(static_cast<unsigned char>(ch));
    ids.push_back(mcfg.eos_id);
    m.forward(ids, 1, static_cast<int64_t>(ids.size()));
    int64_t picked_bytes = 0;
    for (size_t i = 1; i + 1 < ids.size(); ++i) picked_bytes += m.states[0].m[i];

    if (count_occurrences(html, "<span class=\"cell") != text.size()) {
        detail = "cell count != byte count";
        return false;
    }
    if (count_occurrences(html, "class=\"cell picked\"") != static_cast<size_t>(picked_bytes)) {
        detail = "picked-cell count != sum(m)";
        return false;
    }
    if (html.rfind("<!DOCTYPE html>", 0) != 0 ||
        count_occurrences(html, "<span") != count_occurrences(html, "</span>") ||
        html.find("</html>") == std::string::npos) {
        detail = "html structure invalid";
        return false;
    }

    // picked fraction on English eval text vs the k/T budget
    const std::string corpus_path = std::string(SYNERGY_SOURCE_DIR) + "/data/english_1mb.txt";
    std::ifstream cf(corpus_path, std::ios::binary);
    std::string corpus_text((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
    auto segs = corpus::clip_segments(corpus_text.substr(0, 100000), mcfg.context_length);
    auto ev = train::evaluate(m, train::DataSet::from_segments(segs), 16, 64);
    const double budget = static_cast<double>(mcfg.k) / static_cast<double>(mcfg.context_length);
    if (std::abs(ev.picked_fraction - budget) > 0.02) {
        detail = "picked fraction " + std::to_string(ev.picked_fraction) + " vs budget " +
                 std::to_string(budget);
        return false;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu cells, %lld picked, fraction %.4f (budget %.4f)",
                  text.size(), static_cast<long long>(picked_bytes), ev.picked_fraction, budget);
    detail = buf;
    return true;
}

bool check_corpus_pipeline(std::string& detail) {
    std::mt19937_64 rng(9001);
    for (int i = 0; i < 10000; ++i) {
        const std::string s = random_utf8(rng, 24);
        if (corpus::detokenize(corpus::utf8_tokenize(s)) != s) {
            detail = "utf8 round trip failed";
            return false;
        }
    }
    auto vocab = bpe::bpe_train(
        "a man a plan a canal panama. the quick brown fox jumps over the lazy dog. ", 300);
    for (int i = 0; i < 10000; ++i) {
        const int n = std::uniform_int_distribution<int>(0, 48)(rng);
        std::string s;
        for (int j = 0; j < n; ++j)
            s.push_back(static_cast<char>(std::uniform_int_distribution<int>(0, 255)(rng)));
        if (bpe::bpe_decode(bpe::bpe_encode(s, vocab), vocab) != s) {
            detail = "bpe round trip failed";
            return false;
        }
    }
    for (int i = 0; i < 2000; ++i) {
        const std::string s = random_utf8(rng, 60);
        const int64_t max_bytes = std::uniform_int_distribution<int64_t>(8, 24)(rng);
        for (const auto& seg : corpus::clip_segments(s, max_bytes)) {
            if (seg.byte_len > max_bytes - 2 ||
                !corpus::utf8_valid(corpus::detokenize(seg.ids))) {
                detail = "segment split a codepoint";
                return false;
            }
        }
    }
    detail = "10000 utf8 + 10000 bpe round trips, 2000 fuzzed clips";
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    // optional argv: substring filters selecting which criteria to run
    fs::create_directories(kWorkDir);
    struct Criterion {
        const char* name;
        bool (*fn)(std::string&);
    };
    const Criterion criteria[] = {
        {"router invariants", check_router_invariants},
        {"bypass identity", check_bypass_identity},
        {"causality", check_causality},
        {"nope position independence", check_nope_position_independence},
        {"gradient correctness", check_gradients},
        {"corpus pipeline", check_corpus_pipeline},
        {"flops analytics", check_flops},
        {"ablation harness", check_ablations},
        {"desk-scale learning", check_desk_learning},
        {"router visualization", check_visualization},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        if (argc > 1) {
            bool wanted = false;
            for (int i = 1; i < argc; ++i)
                if (std::string(c.name).find(argv[i]) != std::string::npos) wanted = true;
            if (!wanted) continue;
        }
        std::string detail;
        bool ok = false;
        try {
            ok = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("%s: %s%s%s\n", ok ? "PASS" : "FAIL", c.name, detail.empty() ? "" : " -- ",
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
