#pragma once

// Training loop, AdamW, BPB evaluation, glitch detection, FLOPs accounting
// and the two ablation runners.

#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "synergy/checkpoint.hpp"
#include "synergy/corpus.hpp"
#include "synergy/model.hpp"

namespace synergy::train {

enum class LrSchedule { constant, cosine_with_warmup };
enum class Precision { f32, mixed };

struct TrainConfig {
    int64_t batch_size = 32;
    double lr = 1e-3;
    LrSchedule lr_schedule = LrSchedule::cosine_with_warmup;
    int64_t warmup_steps = 100;
    double weight_decay = 0.1;
    double grad_clip_norm = 1.0;
    int64_t total_steps = 1000;
    int64_t eval_interval = 50;
    uint64_t seed = 0;
    double glitch_threshold = 0.5;  // BPB jump
    int64_t glitch_window = 3;
    Precision precision = Precision::f32;  // accumulation is >= 32-bit either way
    double stop_at_eval_bpb = 0.0;         // 0 = run all steps
    int64_t max_eval_rows = 0;             // 0 = evaluate everything
    double max_wall_clock_s = 0.0;         // 0 = no limit

    void validate() const {
        if (lr <= 0) throw SynergyError("TrainConfig: lr must be positive");
        if (eval_interval < 1) throw SynergyError("TrainConfig: eval_interval must be >= 1");
        if (batch_size < 1) throw SynergyError("TrainConfig: batch_size must be >= 1");
    }
};

struct MetricsRecord {
    int64_t step = 0;
    double train_loss_nats = 0.0;
    double eval_bpb = 0.0;
    int64_t tokens_seen = 0;
    int64_t bytes_seen = 0;
    double picked_fraction = 0.0;
    bool glitch = false;
    double wall_clock_s = 0.0;
};

// BPB = total_ce_nats / (n_bytes * ln 2). For token-level baselines n_bytes
// is the byte count of the evaluated text, not the token count.
double bpb(double total_ce_nats, int64_t n_bytes);

// Flags index t where smoothed(t) - min_{s<t} smoothed(s) > threshold, with a
// trailing moving average of the given window.
std::vector<int64_t> detect_glitch(const std::vector<double>& bpb_series, double threshold,
                                   int64_t smoothing_window);

struct FlopsReport {
    double synergy_flops = 0, baseline_flops = 0, ratio = 0;
    double synergy_mlp = 0, synergy_attn = 0;
    double baseline_mlp = 0, baseline_attn = 0;
    double extra_mlp_share = 0;  // MLP share of (synergy - baseline)
};

// Analytic multiply-accumulate counting per layer: MLP 6*T*d*f, attention
// projections 8*T*d^2, attention scores 4*d*sum_i span(i). Embedding and
// output head are excluded.
FlopsReport estimate_flops(const model::ModelConfig& cfg, int64_t seq_bytes, int64_t k,
                           int64_t baseline_tokens);

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRecord>& records);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records);

// Token rows plus the byte count each row represents (equal to the token
// count for the byte tokenizer).
struct DataSet {
    std::vector<std::vector<int>> rows;
    std::vector<int64_t> row_bytes;

    static DataSet from_segments(const std::vector<corpus::ByteSegment>& segs) {
        DataSet d;
        for (const auto& s : segs) {
            d.rows.push_back(s.ids);
            d.row_bytes.push_back(s.byte_len);
        }
        return d;
    }
};

template <typename T>
struct AdamW {
    model::OptState<T> state;
    double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;
    int64_t step_count = 0;

    explicit AdamW(model::SynergyModel<T>& m) {
        for (auto* p : m.params) {
            state.m.emplace_back(p->w.shape);
            state.v.emplace_back(p->w.shape);
        }
    }

    // Decoupled weight decay, applied to matrices only.
    void step(model::SynergyModel<T>& m, double lr, double weight_decay) {
        ++step_count;
        for (size_t i = 0; i < m.params.size(); ++i) {
            auto* p = m.params[i];
            const double wd = p->w.shape.size() >= 2 ? weight_decay : 0.0;
            kernels::adamw_step(p->w.ptr(), p->g.ptr(), state.m[i].ptr(), state.v[i].ptr(),
                                p->w.numel(), static_cast<T>(lr), static_cast<T>(beta1),
                                static_cast<T>(beta2), static_cast<T>(eps), static_cast<T>(wd),
                                step_count);
        }
    }
};

template <typename T>
double global_grad_norm(model::SynergyModel<T>& m) {
    double ss = 0.0;
    for (auto* p : m.params)
        for (T g : p->g.data) ss += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(ss);
}

template <typename T>
void clip_gradients(model::SynergyModel<T>& m, double max_norm) {
    if (max_norm <= 0) return;
    const double norm = global_grad_norm(m);
    if (norm <= max_norm) return;
    const T scale = static_cast<T>(max_norm / norm);
    for (auto* p : m.params)
        for (T& g : p->g.data) g *= scale;
}

inline double lr_at(const TrainConfig& cfg, int64_t step) {
    if (cfg.lr_schedule == LrSchedule::constant) return cfg.lr;
    if (step < cfg.warmup_steps)
        return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
    const double t = static_cast<double>(step - cfg.warmup_steps) /
                     static_cast<double>(std::max<int64_t>(1, cfg.total_steps - cfg.warmup_steps));
    return cfg.lr * 0.5 * (1.0 + std::cos(std::min(1.0, t) * M_PI));
}

struct EvalResult {
    double bpb_value = 0.0;
    double total_nats = 0.0;
    int64_t n_bytes = 0;
    double picked_fraction = 0.0;
    double mean_loss_nats = 0.0;
};

// Sums CE over eval rows. The denominator counts each row's bytes plus one
// end-of-segment marker, identically for byte and token models, so BPB stays
// comparable across tokenizers.
template <typename T>
EvalResult evaluate(model::SynergyModel<T>& m, const DataSet& data, int64_t batch_size,
                    int64_t max_rows = 0) {
    corpus::SpecialTokens sp;
    sp.bos = m.cfg.bos_id;
    sp.eos = m.cfg.eos_id;
    sp.pad = m.cfg.pad_id;
    EvalResult res;
    double picked_sum = 0.0;
    int64_t picked_rows = 0, n_targets = 0;
    const int64_t n = max_rows > 0 ? std::min<int64_t>(max_rows, static_cast<int64_t>(data.rows.size()))
                                   : static_cast<int64_t>(data.rows.size());
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t end = std::min<int64_t>(n, start + batch_size);
        std::vector<std::vector<int>> rows(data.rows.begin() + start, data.rows.begin() + end);
        auto batch = corpus::make_batch_ids(rows, m.cfg.context_length, sp,
                                            static_cast<int>(m.cfg.vocab_size));
        m.forward(batch.ids, batch.batch, batch.width);
        const double mean =
            model::loss_and_grad<T>(m.logits, batch.ids, batch.mask, batch.batch, batch.width,
                                    m.cfg.vocab_size, nullptr);
        int64_t masked = 0;
        for (int64_t b = 0; b < batch.batch; ++b)
            for (int64_t i = 0; i + 1 < batch.width; ++i)
                if (batch.mask[static_cast<size_t>(b * batch.width + i)]) ++masked;
        res.total_nats += mean * static_cast<double>(masked);
        n_targets += masked;
        for (int64_t r = start; r < end; ++r)
            res.n_bytes += data.row_bytes[static_cast<size_t>(r)] + 1;  // + segment end
        for (const auto& st : m.states) {
            const int64_t vl = st.w.empty() ? 0 : static_cast<int64_t>(st.w.size());
            if (vl > 0) {
                picked_sum += static_cast<double>(st.k_eff()) / static_cast<double>(vl);
                ++picked_rows;
            }
        }
    }
    res.bpb_value = bpb(res.total_nats, res.n_bytes);
    res.mean_loss_nats = n_targets > 0 ? res.total_nats / static_cast<double>(n_targets) : 0.0;
    res.picked_fraction = picked_rows > 0 ? picked_sum / static_cast<double>(picked_rows) : 1.0;
    return res;
}

// Empirical (1 - k/T)-quantile of the router weights over a validation pass.
template <typename T>
double calibrate_threshold(model::SynergyModel<T>& m, const DataSet& data, int64_t batch_size,
                           int64_t max_rows = 0) {
    if (m.cfg.dense) return 0.0;
    corpus::SpecialTokens sp;
    sp.bos = m.cfg.bos_id;
    sp.eos = m.cfg.eos_id;
    sp.pad = m.cfg.pad_id;
    std::vector<double> weights;
    const int64_t n = max_rows > 0 ? std::min<int64_t>(max_rows, static_cast<int64_t>(data.rows.size()))
                                   : static_cast<int64_t>(data.rows.size());
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t end = std::min<int64_t>(n, start + batch_size);
        std::vector<std::vector<int>> rows(data.rows.begin() + start, data.rows.begin() + end);
        auto batch = corpus::make_batch_ids(rows, m.cfg.context_length, sp,
                                            static_cast<int>(m.cfg.vocab_size));
        m.forward(batch.ids, batch.batch, batch.width);
        for (int64_t b = 0; b < batch.batch; ++b) {
            const auto& st = m.states[static_cast<size_t>(b)];
            for (int64_t t = 0; t < batch.width; ++t)
                if (batch.ids[static_cast<size_t>(b * batch.width + t)] != m.cfg.pad_id)
                    weights.push_back(static_cast<double>(st.w[static_cast<size_t>(t)]));
        }
    }
    if (weights.empty()) return 0.0;
    std::sort(weights.begin(), weights.end(), std::greater<>());
    const double pick_rate =
        static_cast<double>(m.cfg.k) / static_cast<double>(m.cfg.context_length);
    int64_t idx = static_cast<int64_t>(std::floor(pick_rate * static_cast<double>(weights.size())));
    idx = std::clamp<int64_t>(idx, 0, static_cast<int64_t>(weights.size()) - 1);
    return weights[static_cast<size_t>(idx)];
}

struct TrainResult {
    std::vector<MetricsRecord> metrics;
    double router_threshold = 0.0;
    double final_eval_bpb = 0.0;
    int64_t steps_run = 0;
};

template <typename T>
void dump_diagnostics(model::SynergyModel<T>& m, const corpus::Batch& batch,
                      const std::string& dir);

// One owner of the parameters; deterministic for a given seed in serial mode.
// NaN loss aborts after dumping the offending batch and routing state.
template <typename T>
TrainResult train_loop(model::SynergyModel<T>& m, AdamW<T>& opt, const DataSet& train_data,
                       const DataSet& eval_data, const TrainConfig& cfg,
                       const std::string& diag_dir = ".",
                       const std::function<void(const MetricsRecord&)>& on_metrics = {}) {
    cfg.validate();
    corpus::SpecialTokens sp;
    sp.bos = m.cfg.bos_id;
    sp.eos = m.cfg.eos_id;
    sp.pad = m.cfg.pad_id;

    std::mt19937_64 rng(cfg.seed);
    std::vector<int64_t> order(train_data.rows.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult res;
    Tensor<T> dlogits;
    int64_t tokens_seen = 0, bytes_seen = 0, cursor = 0;
    std::vector<double> bpb_series;
    const auto t0 = std::chrono::steady_clock::now();

    for (int64_t step = 0; step < cfg.total_steps; ++step) {
        if (cursor == 0) std::shuffle(order.begin(), order.end(), rng);
        std::vector<std::vector<int>> rows;
        for (int64_t i = 0; i < cfg.batch_size; ++i) {
            rows.push_back(train_data.rows[static_cast<size_t>(order[static_cast<size_t>(cursor)])]);
            cursor = (cursor + 1) % static_cast<int64_t>(order.size());
        }
        auto batch = corpus::make_batch_ids(rows, m.cfg.context_length, sp,
                                            static_cast<int>(m.cfg.vocab_size));
        m.zero_grad();
        m.forward(batch.ids, batch.batch, batch.width);
        dlogits.resize({batch.batch * batch.width, m.cfg.vocab_size});
        const double loss = model::loss_and_grad<T>(m.logits, batch.ids, batch.mask, batch.batch,
                                                    batch.width, m.cfg.vocab_size, dlogits.ptr());
        if (!std::isfinite(loss)) {
            dump_diagnostics(m, batch, diag_dir);
            throw SynergyError("train: non-finite loss at step " + std::to_string(step) +
                               "; diagnostics written to " + diag_dir);
        }
        m.backward(dlogits.ptr());
        clip_gradients(m, cfg.grad_clip_norm);
        opt.step(m, lr_at(cfg, step), cfg.weight_decay);

        for (const auto& r : rows) {
            tokens_seen += static_cast<int64_t>(r.size()) + 2;
            bytes_seen += static_cast<int64_t>(r.size());
        }

        if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.total_steps) {
            auto ev = evaluate(m, eval_data, cfg.batch_size, cfg.max_eval_rows);
            bpb_series.push_back(ev.bpb_value);
            auto glitches = detect_glitch(bpb_series, cfg.glitch_threshold, cfg.glitch_window);
            const bool glitched =
                !glitches.empty() &&
                glitches.back() == static_cast<int64_t>(bpb_series.size()) - 1;
            MetricsRecord rec;
            rec.step = step + 1;
            rec.train_loss_nats = loss;
            rec.eval_bpb = ev.bpb_value;
            rec.tokens_seen = tokens_seen;
            rec.bytes_seen = bytes_seen;
            rec.picked_fraction = ev.picked_fraction;
            rec.glitch = glitched;
            rec.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            res.metrics.push_back(rec);
            if (on_metrics) on_metrics(rec);
            res.final_eval_bpb = ev.bpb_value;
            res.steps_run = step + 1;
            if (cfg.stop_at_eval_bpb > 0 && ev.bpb_value < cfg.stop_at_eval_bpb) break;
            if (cfg.max_wall_clock_s > 0 && rec.wall_clock_s > cfg.max_wall_clock_s) break;
        }
    }
    res.router_threshold = calibrate_threshold(m, eval_data, cfg.batch_size, cfg.max_eval_rows);
    if (res.steps_run == 0) res.steps_run = cfg.total_steps;
    return res;
}

template <typename T>
void dump_diagnostics(model::SynergyModel<T>& m, const corpus::Batch& batch,
                      const std::string& dir) {
    nlohmann::json j;
    j["ids"] = batch.ids;
    j["batch"] = batch.batch;
    j["width"] = batch.width;
    auto states = nlohmann::json::array();
    for (const auto& st : m.states) {
        nlohmann::json s;
        s["w"] = st.w;
        s["sigma"] = st.sigma;
        s["picked"] = st.picked;
        s["middle_positions"] = st.middle_positions;
        states.push_back(s);
    }
    j["routing_states"] = states;
    std::ofstream os(dir + "/nan_diagnostics.json");
    os << j.dump(2) << "\n";
}

// Autoregressive byte sampling with causal threshold routing. temperature 0
// is argmax; otherwise seeded softmax sampling. Prompts longer than the
// context are truncated from the left.
template <typename T>
std::vector<int> generate(model::SynergyModel<T>& m, double router_threshold,
                          const std::vector<int>& prompt_bytes, int64_t max_new,
                          double temperature, uint64_t seed) {
    std::vector<int> out;
    out.push_back(m.cfg.bos_id);
    for (int b : prompt_bytes) out.push_back(b);
    std::mt19937_64 rng(seed);
    for (int64_t n = 0; n < max_new; ++n) {
        std::vector<int> ctx = out;
        if (static_cast<int64_t>(ctx.size()) > m.cfg.context_length)
            ctx.erase(ctx.begin(),
                      ctx.end() - static_cast<std::ptrdiff_t>(m.cfg.context_length));
        m.forward(ctx, 1, static_cast<int64_t>(ctx.size()),
                  m.cfg.dense ? std::nullopt : std::optional<T>(static_cast<T>(router_threshold)));
        const T* row = m.logits.ptr() + (static_cast<int64_t>(ctx.size()) - 1) * m.cfg.vocab_size;
        int next = 0;
        if (temperature <= 0) {
            for (int64_t v = 1; v < m.cfg.vocab_size; ++v)
                if (row[v] > row[next]) next = static_cast<int>(v);
        } else {
            std::vector<double> p(static_cast<size_t>(m.cfg.vocab_size));
            double mx = -1e30;
            for (int64_t v = 0; v < m.cfg.vocab_size; ++v)
                mx = std::max(mx, static_cast<double>(row[v]) / temperature);
            double sum = 0;
            for (int64_t v = 0; v < m.cfg.vocab_size; ++v) {
                p[static_cast<size_t>(v)] = std::exp(static_cast<double>(row[v]) / temperature - mx);
                sum += p[static_cast<size_t>(v)];
            }
            std::uniform_real_distribution<double> u(0.0, sum);
            double r = u(rng), acc = 0;
            for (int64_t v = 0; v < m.cfg.vocab_size; ++v) {
                acc += p[static_cast<size_t>(v)];
                if (r <= acc) {
                    next = static_cast<int>(v);
                    break;
                }
            }
        }
        out.push_back(next);
        if (next == m.cfg.eos_id) break;
    }
    return {out.begin() + 1, out.end()};  // drop bos
}

struct AblationRow {
    std::string label;
    double final_bpb = 0.0;
    bool failed = false;
    std::string error;
};

// Reference BPB values reported for the six positioning modes at full scale;
// carried into ablation reports as annotations only.
inline double positioning_reference_bpb(router::PositioningMode mode) {
    switch (mode) {
        case router::PositioningMode::original: return 1.0164;
        case router::PositioningMode::sigma: return 1.0747;
        case router::PositioningMode::sigma_grad: return 1.0523;
        case router::PositioningMode::sigma_all: return 1.0251;
        case router::PositioningMode::sigma_all_grad: return 1.0630;
        case router::PositioningMode::none: return 0.9906;
    }
    return 0.0;
}

// Byte count per BBPE token observed at full scale; the k-sweep report plots
// context_length / 4.25 as the tokenizer reference line.
inline constexpr double kBbpeBytesPerToken = 4.25;

template <typename T>
std::vector<AblationRow> run_positioning_ablation(
    const model::ModelConfig& base_cfg, const TrainConfig& train_cfg,
    const std::vector<router::PositioningMode>& modes, const DataSet& train_data,
    const DataSet& eval_data, const std::string& out_dir) {
    if (modes.empty()) throw SynergyError("run_positioning_ablation: no modes given");
    std::vector<AblationRow> table;
    for (auto mode : modes) {
        AblationRow row;
        row.label = router::mode_name(mode);
        try {
            model::ModelConfig cfg = base_cfg;
            cfg.positioning = mode;
            model::SynergyModel<T> m(cfg);
            m.init_weights(train_cfg.seed);
            AdamW<T> opt(m);
            auto res = train_loop(m, opt, train_data, eval_data, train_cfg, out_dir);
            row.final_bpb = res.final_eval_bpb;
            write_metrics_jsonl(out_dir + "/positioning_" + row.label + ".jsonl", res.metrics);
            write_metrics_csv(out_dir + "/positioning_" + row.label + ".csv", res.metrics);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        table.push_back(row);
    }
    std::ofstream os(out_dir + "/positioning_table.csv");
    os << "mode,final_bpb,failed,reference_bpb_full_scale\n";
    for (size_t i = 0; i < table.size(); ++i)
        os << table[i].label << "," << table[i].final_bpb << "," << (table[i].failed ? 1 : 0) << ","
           << positioning_reference_bpb(modes[i]) << "\n";
    return table;
}

template <typename T>
std::vector<AblationRow> run_k_sweep(const model::ModelConfig& base_cfg,
                                     const TrainConfig& train_cfg,
                                     const std::vector<int64_t>& k_values,
                                     const DataSet& train_data, const DataSet& eval_data,
                                     const std::string& out_dir) {
    if (k_values.empty()) throw SynergyError("run_k_sweep: no k values given");
    std::vector<AblationRow> table;
    for (int64_t k : k_values) {
        if (k > base_cfg.context_length) throw SynergyError("run_k_sweep: k exceeds context");
        AblationRow row;
        row.label = std::to_string(k);
        try {
            model::ModelConfig cfg = base_cfg;
            cfg.k = k;
            model::SynergyModel<T> m(cfg);
            m.init_weights(train_cfg.seed);
            AdamW<T> opt(m);
            auto res = train_loop(m, opt, train_data, eval_data, train_cfg, out_dir);
            row.final_bpb = res.final_eval_bpb;
            write_metrics_jsonl(out_dir + "/ksweep_" + row.label + ".jsonl", res.metrics);
            write_metrics_csv(out_dir + "/ksweep_" + row.label + ".csv", res.metrics);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        table.push_back(row);
    }
    std::ofstream os(out_dir + "/ksweep_table.csv");
    os << "k,final_bpb,failed,bbpe_reference_tokens\n";
    const double ref = static_cast<double>(base_cfg.context_length) / kBbpeBytesPerToken;
    for (const auto& row : table)
        os << row.label << "," << row.final_bpb << "," << (row.failed ? 1 : 0) << "," << ref
           << "\n";
    return table;
}

}  // namespace synergy::train
