#include <fstream>

#include <nlohmann/json.hpp>

#include "synergy/train.hpp"

namespace synergy::train {

double bpb(double total_ce_nats, int64_t n_bytes) {
    if (n_bytes < 1) throw SynergyError("bpb: n_bytes must be >= 1");
    return total_ce_nats / (static_cast<double>(n_bytes) * std::log(2.0));
}

std::vector<int64_t> detect_glitch(const std::vector<double>& bpb_series, double threshold,
                                   int64_t smoothing_window) {
    if (threshold <= 0) throw SynergyError("detect_glitch: threshold must be positive");
    const int64_t n = static_cast<int64_t>(bpb_series.size());
    const int64_t w = std::max<int64_t>(1, smoothing_window);
    std::vector<double> smooth(static_cast<size_t>(n));
    for (int64_t t = 0; t < n; ++t) {
        const int64_t lo = std::max<int64_t>(0, t - w + 1);
        double acc = 0;
        for (int64_t s = lo; s <= t; ++s) acc += bpb_series[static_cast<size_t>(s)];
        smooth[static_cast<size_t>(t)] = acc / static_cast<double>(t - lo + 1);
    }
    std::vector<int64_t> glitches;
    double running_min = 0;
    for (int64_t t = 0; t < n; ++t) {
        if (t > 0 && smooth[static_cast<size_t>(t)] - running_min > threshold)
            glitches.push_back(t);
        running_min = t == 0 ? smooth[0] : std::min(running_min, smooth[static_cast<size_t>(t)]);
    }
    return glitches;
}

namespace {

// Multiply-accumulate pairs counted as 2 FLOPs; span(i) is the number of
// keys position i attends to.
double attn_score_flops(int64_t seq, int64_t window, int64_t d) {
    double span_sum = 0;
    for (int64_t i = 0; i < seq; ++i) {
        const int64_t span = window > 0 ? std::min<int64_t>(i + 1, window) : i + 1;
        span_sum += static_cast<double>(span);
    }
    return 4.0 * static_cast<double>(d) * span_sum;  // QK^T and AV, 2 FLOPs each
}

struct LayerFlops {
    double mlp = 0, attn = 0;
};

LayerFlops layer_flops(int64_t seq, int64_t window, int64_t d, int64_t mlp_dim) {
    LayerFlops f;
    f.mlp = 6.0 * static_cast<double>(seq) * static_cast<double>(d) * static_cast<double>(mlp_dim);
    f.attn = 8.0 * static_cast<double>(seq) * static_cast<double>(d) * static_cast<double>(d) +
             attn_score_flops(seq, window, d);
    return f;
}

}  // namespace

FlopsReport estimate_flops(const model::ModelConfig& cfg, int64_t seq_bytes, int64_t k,
                           int64_t baseline_tokens) {
    if (seq_bytes < 1 || k < 1 || baseline_tokens < 1)
        throw SynergyError("estimate_flops: counts must be positive");
    const int64_t d = cfg.block.model_dim, f = cfg.block.mlp_dim;
    FlopsReport rep;
    const auto local = layer_flops(seq_bytes, cfg.block.window, d, f);
    const auto middle = layer_flops(k, 0, d, f);
    rep.synergy_mlp = static_cast<double>(cfg.enc_layers + cfg.dec_layers) * local.mlp +
                      static_cast<double>(cfg.mid_layers) * middle.mlp;
    rep.synergy_attn = static_cast<double>(cfg.enc_layers + cfg.dec_layers) * local.attn +
                       static_cast<double>(cfg.mid_layers) * middle.attn;
    const auto base = layer_flops(baseline_tokens, 0, d, f);
    rep.baseline_mlp = static_cast<double>(cfg.total_layers()) * base.mlp;
    rep.baseline_attn = static_cast<double>(cfg.total_layers()) * base.attn;
    rep.synergy_flops = rep.synergy_mlp + rep.synergy_attn;
    rep.baseline_flops = rep.baseline_mlp + rep.baseline_attn;
    rep.ratio = rep.synergy_flops / rep.baseline_flops;
    const double extra = rep.synergy_flops - rep.baseline_flops;
    rep.extra_mlp_share = extra != 0.0 ? (rep.synergy_mlp - rep.baseline_mlp) / extra : 0.0;
    return rep;
}

void write_metrics_jsonl(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream os(path);
    if (!os) throw SynergyError("write_metrics_jsonl: cannot open " + path);
    for (const auto& r : records) {
        nlohmann::json j = {
            {"step", r.step},
            {"train_loss_nats", r.train_loss_nats},
            {"eval_bpb", r.eval_bpb},
            {"tokens_seen", r.tokens_seen},
            {"bytes_seen", r.bytes_seen},
            {"picked_fraction", r.picked_fraction},
            {"glitch", r.glitch},
            {"wall_clock_s", r.wall_clock_s},
        };
        os << j.dump() << "\n";
    }
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
    std::ofstream os(path);
    if (!os) throw SynergyError("write_metrics_csv: cannot open " + path);
    os << "step,train_loss_nats,eval_bpb,tokens_seen,bytes_seen,picked_fraction,glitch,"
          "wall_clock_s\n";
    for (const auto& r : records)
        os << r.step << "," << r.train_loss_nats << "," << r.eval_bpb << "," << r.tokens_seen
           << "," << r.bytes_seen << "," << r.picked_fraction << "," << (r.glitch ? 1 : 0) << ","
           << r.wall_clock_s << "\n";
}

}  // namespace synergy::train
