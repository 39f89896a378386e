#pragma once

// Versioned checkpoint container: magic, JSON header (config, step, router
// threshold, rng state, tensor directory), then raw little-endian tensor
// payload in directory order. Layout documented in docs/FORMATS.md.

#include <cstring>
#include <fstream>

#include "synergy/model.hpp"

namespace synergy::model {

template <typename T>
struct OptState {
    std::vector<Tensor<T>> m, v;  // aligned with model.params
};

template <typename T>
struct TrainingCheckpoint {
    int64_t step = 0;
    double router_threshold = 0.0;
    std::string rng_state;
};

inline constexpr char kCkptMagic[8] = {'S', 'Y', 'N', 'C', 'K', 'P', 'T', '1'};

template <typename T>
const char* dtype_name() {
    if constexpr (sizeof(T) == 4) return "f32";
    return "f64";
}

template <typename T>
void save_checkpoint(const std::string& path, SynergyModel<T>& model, const OptState<T>* opt,
                     const TrainingCheckpoint<T>& meta) {
    nlohmann::json dir = nlohmann::json::array();
    auto add = [&](const std::string& name, const Tensor<T>& t) {
        dir.push_back({{"name", name}, {"shape", t.shape}});
    };
    for (auto* p : model.params) add(p->name, p->w);
    if (opt) {
        for (size_t i = 0; i < model.params.size(); ++i) {
            add(model.params[i]->name + ".adam_m", opt->m[i]);
            add(model.params[i]->name + ".adam_v", opt->v[i]);
        }
    }
    nlohmann::json header = {
        {"version", 1},
        {"dtype", dtype_name<T>()},
        {"config", config_to_json(model.cfg)},
        {"step", meta.step},
        {"router_threshold", meta.router_threshold},
        {"rng_state", meta.rng_state},
        {"has_optimizer", opt != nullptr},
        {"tensors", dir},
    };
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SynergyError("save_checkpoint: cannot open " + path);
    os.write(kCkptMagic, 8);
    const uint64_t hlen = hs.size();
    os.write(reinterpret_cast<const char*>(&hlen), 8);
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    auto dump = [&](const Tensor<T>& t) {
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    };
    for (auto* p : model.params) dump(p->w);
    if (opt) {
        for (size_t i = 0; i < model.params.size(); ++i) {
            dump(opt->m[i]);
            dump(opt->v[i]);
        }
    }
}

// Reads config and metadata without materializing a model.
inline nlohmann::json read_checkpoint_header(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SynergyError("load_checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kCkptMagic, 8) != 0) throw SynergyError("load_checkpoint: bad magic");
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw SynergyError("load_checkpoint: truncated header");
    return nlohmann::json::parse(hs);
}

template <typename T>
TrainingCheckpoint<T> load_checkpoint(const std::string& path, SynergyModel<T>& model,
                                      OptState<T>* opt) {
    auto header = read_checkpoint_header(path);
    if (header.at("version").get<int>() != 1)
        throw SynergyError("load_checkpoint: unsupported version");
    if (header.at("dtype").get<std::string>() != dtype_name<T>())
        throw SynergyError("load_checkpoint: dtype mismatch");
    std::ifstream is(path, std::ios::binary);
    char magic[8];
    is.read(magic, 8);
    uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 8);
    is.seekg(static_cast<std::streamoff>(hlen), std::ios::cur);

    auto fill = [&](Tensor<T>& t, const nlohmann::json& entry) {
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        if (shape != t.shape) throw SynergyError("load_checkpoint: shape mismatch for " +
                                                 entry.at("name").get<std::string>());
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(T)));
    };
    const auto& dir = header.at("tensors");
    size_t di = 0;
    for (auto* p : model.params) {
        if (dir.at(di).at("name").get<std::string>() != p->name)
            throw SynergyError("load_checkpoint: tensor order mismatch at " + p->name);
        fill(p->w, dir.at(di));
        ++di;
    }
    const bool has_opt = header.at("has_optimizer").get<bool>();
    if (opt) {
        opt->m.clear();
        opt->v.clear();
        for (auto* p : model.params) {
            opt->m.emplace_back(p->w.shape);
            opt->v.emplace_back(p->w.shape);
        }
        if (has_opt) {
            for (size_t i = 0; i < model.params.size(); ++i) {
                fill(opt->m[i], dir.at(di++));
                fill(opt->v[i], dir.at(di++));
            }
        }
    }
    if (!is) throw SynergyError("load_checkpoint: truncated payload");
    TrainingCheckpoint<T> meta;
    meta.step = header.at("step").get<int64_t>();
    meta.router_threshold = header.at("router_threshold").get<double>();
    meta.rng_state = header.at("rng_state").get<std::string>();
    return meta;
}

}  // namespace synergy::model
