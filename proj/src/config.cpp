#include "synergy/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace synergy::config {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

int64_t to_int(const KvTable& t, const std::string& sec, const std::string& key, int64_t dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    return std::stoll(ki->second);
}

double to_double(const KvTable& t, const std::string& sec, const std::string& key, double dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    return std::stod(ki->second);
}

bool to_bool(const KvTable& t, const std::string& sec, const std::string& key, bool dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    return ki->second == "true" || ki->second == "1";
}

std::string to_str(const KvTable& t, const std::string& sec, const std::string& key,
                   const std::string& dflt) {
    auto si = t.find(sec);
    if (si == t.end()) return dflt;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return dflt;
    return unquote(ki->second);
}

}  // namespace

KvTable parse_toml_string(const std::string& text) {
    KvTable table;
    std::string section;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw SynergyError("config: bad section header at line " + std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            table[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw SynergyError("config: expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw SynergyError("config: empty key or value at line " + std::to_string(lineno));
        table[section][key] = value;
    }
    return table;
}

KvTable parse_toml_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw SynergyError("config: cannot open " + path);
    std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_toml_string(all);
}

void apply_env_overrides(KvTable& table) {
    for (char** env = environ; *env; ++env) {
        std::string entry(*env);
        if (entry.rfind("SYNERGY_", 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(8, eq - 8);
        const std::string value = entry.substr(eq + 1);
        const auto us = name.find('_');
        if (us == std::string::npos) continue;
        std::string section = name.substr(0, us);
        std::string key = name.substr(us + 1);
        std::transform(section.begin(), section.end(), section.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        table[section][key] = value;
    }
}

model::ModelConfig preset(const std::string& name) {
    if (name == "paper") return model::ModelConfig::paper();
    if (name == "desk") return model::ModelConfig::desk();
    if (name == "tiny") return model::ModelConfig::tiny();
    throw SynergyError("unknown preset: " + name);
}

model::ModelConfig model_config_from(const KvTable& t) {
    model::ModelConfig base = preset(to_str(t, "model", "preset", "desk"));
    model::ModelConfig c = base;
    c.vocab_size = to_int(t, "model", "vocab_size", base.vocab_size);
    c.context_length = to_int(t, "model", "context_length", base.context_length);
    c.enc_layers = to_int(t, "model", "enc_layers", base.enc_layers);
    c.mid_layers = to_int(t, "model", "mid_layers", base.mid_layers);
    c.dec_layers = to_int(t, "model", "dec_layers", base.dec_layers);
    c.block.model_dim = to_int(t, "model", "model_dim", base.block.model_dim);
    c.block.n_heads = to_int(t, "model", "n_heads", base.block.n_heads);
    c.block.head_dim = to_int(t, "model", "head_dim", base.block.head_dim);
    c.block.mlp_dim = to_int(t, "model", "mlp_dim", base.block.mlp_dim);
    c.block.window = to_int(t, "model", "window", base.block.window);
    c.block.rope_base = to_double(t, "model", "rope_base", base.block.rope_base);
    c.k = to_int(t, "model", "k", base.k);
    c.positioning = router::mode_from_name(
        to_str(t, "model", "positioning", router::mode_name(base.positioning)));
    c.tie_embeddings = to_bool(t, "model", "tie_embeddings", base.tie_embeddings);
    c.dense = to_bool(t, "model", "dense", base.dense);
    c.validate();
    return c;
}

train::TrainConfig train_config_from(const KvTable& t) {
    train::TrainConfig c;
    c.batch_size = to_int(t, "train", "batch_size", c.batch_size);
    c.lr = to_double(t, "train", "lr", c.lr);
    const std::string sched = to_str(t, "train", "lr_schedule", "cosine_with_warmup");
    if (sched == "constant")
        c.lr_schedule = train::LrSchedule::constant;
    else if (sched == "cosine_with_warmup")
        c.lr_schedule = train::LrSchedule::cosine_with_warmup;
    else
        throw SynergyError("config: unknown lr_schedule " + sched);
    c.warmup_steps = to_int(t, "train", "warmup_steps", c.warmup_steps);
    c.weight_decay = to_double(t, "train", "weight_decay", c.weight_decay);
    c.grad_clip_norm = to_double(t, "train", "grad_clip_norm", c.grad_clip_norm);
    c.total_steps = to_int(t, "train", "total_steps", c.total_steps);
    c.eval_interval = to_int(t, "train", "eval_interval", c.eval_interval);
    c.seed = static_cast<uint64_t>(to_int(t, "train", "seed", 0));
    c.glitch_threshold = to_double(t, "train", "glitch_threshold", c.glitch_threshold);
    c.glitch_window = to_int(t, "train", "glitch_window", c.glitch_window);
    const std::string prec = to_str(t, "train", "precision", "f32");
    if (prec == "f32")
        c.precision = train::Precision::f32;
    else if (prec == "mixed")
        c.precision = train::Precision::mixed;
    else
        throw SynergyError("config: unknown precision " + prec);
    c.stop_at_eval_bpb = to_double(t, "train", "stop_at_eval_bpb", c.stop_at_eval_bpb);
    c.max_eval_rows = to_int(t, "train", "max_eval_rows", c.max_eval_rows);
    c.max_wall_clock_s = to_double(t, "train", "max_wall_clock_s", c.max_wall_clock_s);
    c.validate();
    return c;
}

}  // namespace synergy::config
