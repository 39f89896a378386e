#include "synergy/model.hpp"

namespace synergy::model {

nlohmann::json config_to_json(const ModelConfig& cfg) {
    return {
        {"vocab_size", cfg.vocab_size},
        {"context_length", cfg.context_length},
        {"enc_layers", cfg.enc_layers},
        {"mid_layers", cfg.mid_layers},
        {"dec_layers", cfg.dec_layers},
        {"model_dim", cfg.block.model_dim},
        {"n_heads", cfg.block.n_heads},
        {"head_dim", cfg.block.head_dim},
        {"mlp_dim", cfg.block.mlp_dim},
        {"window", cfg.block.window},
        {"rope_base", cfg.block.rope_base},
        {"k", cfg.k},
        {"positioning", router::mode_name(cfg.positioning)},
        {"tie_embeddings", cfg.tie_embeddings},
        {"dense", cfg.dense},
        {"bos_id", cfg.bos_id},
        {"eos_id", cfg.eos_id},
        {"pad_id", cfg.pad_id},
    };
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int64_t>();
    cfg.context_length = j.at("context_length").get<int64_t>();
    cfg.enc_layers = j.at("enc_layers").get<int64_t>();
    cfg.mid_layers = j.at("mid_layers").get<int64_t>();
    cfg.dec_layers = j.at("dec_layers").get<int64_t>();
    cfg.block.model_dim = j.at("model_dim").get<int64_t>();
    cfg.block.n_heads = j.at("n_heads").get<int64_t>();
    cfg.block.head_dim = j.at("head_dim").get<int64_t>();
    cfg.block.mlp_dim = j.at("mlp_dim").get<int64_t>();
    cfg.block.window = j.at("window").get<int64_t>();
    cfg.block.rope_base = j.at("rope_base").get<double>();
    cfg.k = j.at("k").get<int64_t>();
    cfg.positioning = router::mode_from_name(j.at("positioning").get<std::string>());
    cfg.tie_embeddings = j.at("tie_embeddings").get<bool>();
    cfg.dense = j.at("dense").get<bool>();
    cfg.bos_id = j.at("bos_id").get<int>();
    cfg.eos_id = j.at("eos_id").get<int>();
    cfg.pad_id = j.at("pad_id").get<int>();
    return cfg;
}

}  // namespace synergy::model
