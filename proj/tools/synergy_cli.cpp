// Command-line front end: data preparation, BPE training, model training,
// evaluation, generation, ablations, FLOPs accounting and router viz.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "synergy/bpe.hpp"
#include "synergy/checkpoint.hpp"
#include "synergy/config.hpp"
#include "synergy/corpus.hpp"
#include "synergy/train.hpp"
#include "synergy/viz.hpp"

namespace fs = std::filesystem;
using namespace synergy;

using F = float;  // training dtype; doubles are for the test oracles

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> model_overrides;  // key -> value
    std::vector<std::pair<std::string, std::string>> train_overrides;
};

config::KvTable load_table(const CommonOpts& o) {
    config::KvTable t;
    if (!o.config_path.empty()) t = config::parse_toml_file(o.config_path);
    config::apply_env_overrides(t);
    for (const auto& [k, v] : o.model_overrides) t["model"][k] = v;
    for (const auto& [k, v] : o.train_overrides) t["train"][k] = v;
    return t;
}

// shared flags; set_if wires a CLI option straight into the override table
void add_config_opt(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "TOML config file");
}

train::DataSet byte_dataset(const std::string& shard) {
    return train::DataSet::from_segments(corpus::load_segments(shard));
}

// re-encode byte shards through a BPE vocab; row_bytes keeps the byte count
train::DataSet bpe_dataset(const std::string& shard, const bpe::BpeVocab& vocab) {
    train::DataSet d;
    for (const auto& seg : corpus::load_segments(shard)) {
        d.rows.push_back(bpe::bpe_encode(corpus::detokenize(seg.ids), vocab));
        d.row_bytes.push_back(seg.byte_len);
    }
    return d;
}

void print_metrics(const train::MetricsRecord& r) {
    std::printf("step %6lld  loss %.4f  eval_bpb %.4f  picked %.3f  %s%.1fs\n",
                static_cast<long long>(r.step), r.train_loss_nats, r.eval_bpb, r.picked_fraction,
                r.glitch ? "GLITCH  " : "", r.wall_clock_s);
    std::fflush(stdout);
}

std::string bytes_to_text(const std::vector<int>& ids) {
    std::vector<int> plain;
    for (int i : ids)
        if (i < 256) plain.push_back(i);
    return corpus::detokenize(plain);
}

int cmd_prepare(const std::string& input, const std::string& out_dir, int64_t context,
                double train_fraction, uint64_t seed) {
    fs::create_directories(out_dir);
    std::vector<corpus::ByteSegment> segs;
    int64_t total_bytes = 0;
    for (const auto& doc : corpus::read_documents(input)) {
        for (auto& s : corpus::clip_segments(doc, context)) {
            total_bytes += s.byte_len;
            segs.push_back(std::move(s));
        }
    }
    if (segs.empty()) throw SynergyError("prepare: no segments produced");
    auto split = corpus::split_corpus(static_cast<int64_t>(segs.size()), train_fraction, seed);
    auto take = [&](const std::vector<int64_t>& idx) {
        std::vector<corpus::ByteSegment> out;
        for (int64_t i : idx) out.push_back(segs[static_cast<size_t>(i)]);
        return out;
    };
    corpus::save_segments(out_dir + "/train.bin", take(split.train));
    corpus::save_segments(out_dir + "/eval.bin", take(split.eval));
    corpus::save_segments(out_dir + "/test.bin", take(split.test));
    nlohmann::json manifest = {
        {"input", input},
        {"context", context},
        {"seed", seed},
        {"total_bytes", total_bytes},
        {"segments", segs.size()},
        {"train_rows", split.train.size()},
        {"eval_rows", split.eval.size()},
        {"test_rows", split.test.size()},
    };
    std::ofstream(out_dir + "/manifest.json") << manifest.dump(2) << "\n";
    std::printf("prepared %zu segments (%lld bytes): train %zu, eval %zu, test %zu -> %s\n",
                segs.size(), static_cast<long long>(total_bytes), split.train.size(),
                split.eval.size(), split.test.size(), out_dir.c_str());
    return 0;
}

int cmd_train_bpe(const std::string& input, int64_t vocab_size, const std::string& out) {
    std::string text;
    for (const auto& doc : corpus::read_documents(input)) {
        text += doc;
        text += "\n";
    }
    auto vocab = bpe::bpe_train(text, vocab_size);
    if (!out.empty() && fs::path(out).has_parent_path())
        fs::create_directories(fs::path(out).parent_path());
    bpe::save_vocab(out, vocab);
    std::printf("trained %zu merges on %zu bytes -> %s\n", vocab.merges.size(), text.size(),
                out.c_str());
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& data_dir, const std::string& out_dir,
              const std::string& bpe_vocab_path) {
    auto table = load_table(opts);
    auto mcfg = config::model_config_from(table);
    auto tcfg = config::train_config_from(table);
    fs::create_directories(out_dir);

    train::DataSet train_data, eval_data;
    bpe::BpeVocab vocab;
    if (!bpe_vocab_path.empty()) {
        vocab = bpe::load_vocab(bpe_vocab_path);
        const int V = static_cast<int>(vocab.token_bytes.size());
        mcfg.vocab_size = V + 3;
        mcfg.bos_id = V;
        mcfg.eos_id = V + 1;
        mcfg.pad_id = V + 2;
        train_data = bpe_dataset(data_dir + "/train.bin", vocab);
        eval_data = bpe_dataset(data_dir + "/eval.bin", vocab);
    } else {
        train_data = byte_dataset(data_dir + "/train.bin");
        eval_data = byte_dataset(data_dir + "/eval.bin");
    }

    model::SynergyModel<F> m(mcfg);
    m.init_weights(tcfg.seed);
    std::printf("%s model: %lld parameters, %lld+%lld+%lld layers, d=%lld, k=%lld\n",
                mcfg.dense ? "dense" : "synergy", static_cast<long long>(m.count_params()),
                static_cast<long long>(mcfg.enc_layers), static_cast<long long>(mcfg.mid_layers),
                static_cast<long long>(mcfg.dec_layers),
                static_cast<long long>(mcfg.block.model_dim), static_cast<long long>(mcfg.k));
    train::AdamW<F> opt(m);
    auto res = train::train_loop(m, opt, train_data, eval_data, tcfg, out_dir, print_metrics);

    model::TrainingCheckpoint<F> meta;
    meta.step = res.steps_run;
    meta.router_threshold = res.router_threshold;
    meta.rng_state = std::to_string(tcfg.seed);
    model::save_checkpoint(out_dir + "/checkpoint.bin", m, &opt.state, meta);
    train::write_metrics_jsonl(out_dir + "/metrics.jsonl", res.metrics);
    train::write_metrics_csv(out_dir + "/metrics.csv", res.metrics);
    std::printf("done: %lld steps, final eval bpb %.4f, router threshold %.4f -> %s\n",
                static_cast<long long>(res.steps_run), res.final_eval_bpb, res.router_threshold,
                out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& shard, int64_t batch_size,
             int64_t max_rows) {
    auto header = model::read_checkpoint_header(ckpt);
    auto mcfg = model::config_from_json(header.at("config"));
    model::SynergyModel<F> m(mcfg);
    auto meta = model::load_checkpoint<F>(ckpt, m, nullptr);
    auto data = byte_dataset(shard);
    auto res = train::evaluate(m, data, batch_size, max_rows);
    std::printf("rows %zu  bytes %lld  bpb %.4f  mean_loss %.4f nats  picked %.3f\n",
                data.rows.size(), static_cast<long long>(res.n_bytes), res.bpb_value,
                res.mean_loss_nats, res.picked_fraction);
    (void)meta;
    return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& prompt, int64_t max_new,
                 double temperature, uint64_t seed, double threshold_override,
                 bool has_threshold) {
    auto header = model::read_checkpoint_header(ckpt);
    auto mcfg = model::config_from_json(header.at("config"));
    model::SynergyModel<F> m(mcfg);
    auto meta = model::load_checkpoint<F>(ckpt, m, nullptr);
    const double thr = has_threshold ? threshold_override : meta.router_threshold;
    auto ids = train::generate(m, thr, corpus::utf8_tokenize(prompt), max_new, temperature, seed);
    std::printf("%s\n", bytes_to_text(ids).c_str());
    return 0;
}

int cmd_ablate_positioning(const CommonOpts& opts, const std::string& data_dir,
                           const std::string& out_dir) {
    auto table = load_table(opts);
    auto mcfg = config::model_config_from(table);
    auto tcfg = config::train_config_from(table);
    fs::create_directories(out_dir);
    auto train_data = byte_dataset(data_dir + "/train.bin");
    auto eval_data = byte_dataset(data_dir + "/eval.bin");
    auto rows = train::run_positioning_ablation<F>(mcfg, tcfg, router::all_modes(), train_data,
                                                   eval_data, out_dir);
    std::printf("%-16s %10s %10s\n", "mode", "final_bpb", "reference");
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].failed)
            std::printf("%-16s %10s  (%s)\n", rows[i].label.c_str(), "FAILED",
                        rows[i].error.c_str());
        else
            std::printf("%-16s %10.4f %10.4f\n", rows[i].label.c_str(), rows[i].final_bpb,
                        train::positioning_reference_bpb(router::all_modes()[i]));
    }
    return 0;
}

int cmd_ablate_k(const CommonOpts& opts, const std::string& data_dir, const std::string& out_dir,
                 std::vector<int64_t> ks) {
    auto table = load_table(opts);
    auto mcfg = config::model_config_from(table);
    auto tcfg = config::train_config_from(table);
    fs::create_directories(out_dir);
    if (ks.empty()) {
        // quarter-spaced sweep up to the preset's k
        for (int64_t f = 1; f <= 4; ++f) ks.push_back(std::max<int64_t>(1, mcfg.k * f / 4));
    }
    auto train_data = byte_dataset(data_dir + "/train.bin");
    auto eval_data = byte_dataset(data_dir + "/eval.bin");
    auto rows = train::run_k_sweep<F>(mcfg, tcfg, ks, train_data, eval_data, out_dir);
    std::printf("%-8s %10s\n", "k", "final_bpb");
    for (const auto& r : rows) {
        if (r.failed)
            std::printf("%-8s %10s  (%s)\n", r.label.c_str(), "FAILED", r.error.c_str());
        else
            std::printf("%-8s %10.4f\n", r.label.c_str(), r.final_bpb);
    }
    return 0;
}

int cmd_flops(const CommonOpts& opts, int64_t seq_bytes, int64_t baseline_tokens) {
    auto table = load_table(opts);
    auto mcfg = config::model_config_from(table);
    if (seq_bytes <= 0) seq_bytes = mcfg.context_length;
    if (baseline_tokens <= 0)
        baseline_tokens = std::max<int64_t>(
            1, static_cast<int64_t>(static_cast<double>(seq_bytes) / train::kBbpeBytesPerToken));
    auto rep = train::estimate_flops(mcfg, seq_bytes, mcfg.k, baseline_tokens);
    nlohmann::json j = {
        {"seq_bytes", seq_bytes},
        {"k", mcfg.k},
        {"baseline_tokens", baseline_tokens},
        {"synergy_flops", rep.synergy_flops},
        {"baseline_flops", rep.baseline_flops},
        {"ratio", rep.ratio},
        {"synergy_mlp", rep.synergy_mlp},
        {"synergy_attn", rep.synergy_attn},
        {"baseline_mlp", rep.baseline_mlp},
        {"baseline_attn", rep.baseline_attn},
        {"extra_mlp_share", rep.extra_mlp_share},
    };
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

int cmd_visualize(const std::string& ckpt, const std::string& text, const std::string& format,
                  const std::string& out) {
    auto header = model::read_checkpoint_header(ckpt);
    auto mcfg = model::config_from_json(header.at("config"));
    if (mcfg.dense) throw SynergyError("visualize: dense baseline has no router");
    model::SynergyModel<F> m(mcfg);
    model::load_checkpoint<F>(ckpt, m, nullptr);

    auto bytes = corpus::utf8_tokenize(text);
    if (bytes.empty()) throw SynergyError("visualize: empty text");
    if (static_cast<int64_t>(bytes.size()) + 2 > mcfg.context_length)
        throw SynergyError("visualize: text longer than the context");
    std::vector<int> ids;
    ids.push_back(mcfg.bos_id);
    ids.insert(ids.end(), bytes.begin(), bytes.end());
    ids.push_back(mcfg.eos_id);
    m.forward(ids, 1, static_cast<int64_t>(ids.size()));
    const auto& st = m.states.at(0);

    viz::VizRecord rec;  // cells cover the text bytes, not bos/eos
    for (size_t i = 0; i < bytes.size(); ++i) {
        rec.text_bytes.push_back(static_cast<uint8_t>(bytes[i]));
        rec.w.push_back(static_cast<double>(st.w[i + 1]));
        rec.m.push_back(st.m[i + 1]);
        rec.sigma.push_back(static_cast<double>(st.sigma[i + 1]));
    }
    const auto rendered =
        viz::render_routing(rec, format == "ansi" ? viz::VizFormat::ansi : viz::VizFormat::html);
    if (out.empty()) {
        std::fputs(rendered.c_str(), stdout);
    } else {
        std::ofstream(out) << rendered;
        std::printf("wrote %s\n", out.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synergy: byte-level LM with learned token compression"};
    app.require_subcommand(1);
    bool serial = false;
    app.add_flag("--serial", serial, "disable OpenMP parallel kernels");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "tokenize, clip and split a corpus");
    std::string p_input, p_out = "data/prepared";
    int64_t p_context = 256;
    double p_frac = 0.9;
    uint64_t p_seed = 0;
    prepare->add_option("--input", p_input, "input .txt or .jsonl")->required();
    prepare->add_option("--out-dir", p_out, "output directory");
    prepare->add_option("--context", p_context, "max row length incl. bos/eos");
    prepare->add_option("--train-fraction", p_frac, "train split fraction");
    prepare->add_option("--seed", p_seed, "shuffle seed");

    // train-bpe
    auto* tbpe = app.add_subcommand("train-bpe", "learn a byte-pair vocab");
    std::string b_input, b_out = "data/bpe_vocab.bin";
    int64_t b_vocab = 1024;
    tbpe->add_option("--input", b_input, "input .txt or .jsonl")->required();
    tbpe->add_option("--vocab-size", b_vocab, "target vocab size (>= 257)");
    tbpe->add_option("--out", b_out, "output vocab file");

    auto add_override_opts = [](CLI::App* cmd, CommonOpts& o) {
        add_config_opt(cmd, o);
        static const char* model_keys[] = {"preset", "positioning", "k", "dense", "window",
                                           "context_length", "model_dim"};
        static const char* train_keys[] = {"total_steps", "batch_size", "lr", "seed",
                                           "eval_interval", "stop_at_eval_bpb", "max_eval_rows",
                                           "max_wall_clock_s", "warmup_steps"};
        for (const char* k : model_keys)
            cmd->add_option_function<std::string>(
                "--" + std::string(k),
                [&o, k](const std::string& v) { o.model_overrides.emplace_back(k, v); },
                "model." + std::string(k));
        for (const char* k : train_keys)
            cmd->add_option_function<std::string>(
                "--" + std::string(k),
                [&o, k](const std::string& v) { o.train_overrides.emplace_back(k, v); },
                "train." + std::string(k));
    };

    // train
    auto* tr = app.add_subcommand("train", "train a model");
    CommonOpts tr_opts;
    std::string tr_data = "data/prepared", tr_out = "runs/train", tr_bpe;
    add_override_opts(tr, tr_opts);
    tr->add_option("--data-dir", tr_data, "prepared shard directory");
    tr->add_option("--out-dir", tr_out, "run output directory");
    tr->add_option("--bpe-vocab", tr_bpe, "BPE vocab for the subword baseline");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string e_ckpt, e_shard = "data/prepared/test.bin";
    int64_t e_batch = 32, e_max_rows = 0;
    ev->add_option("--checkpoint", e_ckpt, "checkpoint file")->required();
    ev->add_option("--shard", e_shard, "segment shard to evaluate");
    ev->add_option("--batch-size", e_batch, "eval batch size");
    ev->add_option("--max-rows", e_max_rows, "limit eval rows (0 = all)");

    // generate
    auto* gen = app.add_subcommand("generate", "sample bytes from a checkpoint");
    std::string g_ckpt, g_prompt;
    int64_t g_max_new = 128;
    double g_temp = 0.8, g_thr = 0.0;
    uint64_t g_seed = 0;
    gen->add_option("--checkpoint", g_ckpt, "checkpoint file")->required();
    gen->add_option("--prompt", g_prompt, "prompt text");
    gen->add_option("--max-new", g_max_new, "max new tokens");
    gen->add_option("--temperature", g_temp, "0 = greedy");
    gen->add_option("--seed", g_seed, "sampling seed");
    auto* thr_opt = gen->add_option("--threshold", g_thr, "router threshold override");

    // ablate-positioning
    auto* ap = app.add_subcommand("ablate-positioning", "train all positioning modes");
    CommonOpts ap_opts;
    std::string ap_data = "data/prepared", ap_out = "runs/positioning";
    add_override_opts(ap, ap_opts);
    ap->add_option("--data-dir", ap_data, "prepared shard directory");
    ap->add_option("--out-dir", ap_out, "output directory");

    // ablate-k
    auto* ak = app.add_subcommand("ablate-k", "sweep the compression budget k");
    CommonOpts ak_opts;
    std::string ak_data = "data/prepared", ak_out = "runs/ksweep";
    std::vector<int64_t> ak_ks;
    add_override_opts(ak, ak_opts);
    ak->add_option("--data-dir", ak_data, "prepared shard directory");
    ak->add_option("--out-dir", ak_out, "output directory");
    ak->add_option("--k-values", ak_ks, "k values (default: quarter-spaced to preset k)");

    // flops
    auto* fl = app.add_subcommand("flops", "analytic FLOPs comparison");
    CommonOpts fl_opts;
    int64_t fl_seq = 0, fl_base_tokens = 0;
    add_override_opts(fl, fl_opts);
    fl->add_option("--seq-bytes", fl_seq, "byte sequence length (default: context)");
    fl->add_option("--baseline-tokens", fl_base_tokens,
                   "baseline token count (default: bytes / 4.25)");

    // visualize
    auto* vz = app.add_subcommand("visualize", "render router weights for a text");
    std::string v_ckpt, v_text, v_format = "html", v_out;
    vz->add_option("--checkpoint", v_ckpt, "checkpoint file")->required();
    vz->add_option("--text", v_text, "text to route")->required();
    vz->add_option("--format", v_format, "html | ansi")
        ->check(CLI::IsMember({"html", "ansi"}));
    vz->add_option("--out", v_out, "output file (default: stdout)");

    if (argc < 2) {
        std::fputs(app.help().c_str(), stderr);
        return 2;
    }
    CLI11_PARSE(app, argc, argv);
    set_parallel(!serial);

    try {
        if (prepare->parsed()) return cmd_prepare(p_input, p_out, p_context, p_frac, p_seed);
        if (tbpe->parsed()) return cmd_train_bpe(b_input, b_vocab, b_out);
        if (tr->parsed()) return cmd_train(tr_opts, tr_data, tr_out, tr_bpe);
        if (ev->parsed()) return cmd_eval(e_ckpt, e_shard, e_batch, e_max_rows);
        if (gen->parsed())
            return cmd_generate(g_ckpt, g_prompt, g_max_new, g_temp, g_seed, g_thr,
                                thr_opt->count() > 0);
        if (ap->parsed()) return cmd_ablate_positioning(ap_opts, ap_data, ap_out);
        if (ak->parsed()) return cmd_ablate_k(ak_opts, ak_data, ak_out, ak_ks);
        if (fl->parsed()) return cmd_flops(fl_opts, fl_seq, fl_base_tokens);
        if (vz->parsed()) return cmd_visualize(v_ckpt, v_text, v_format, v_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
