#include "cgps/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace cgps {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "cgps-checkpoint";
constexpr int kVersion = 1;

json vocab_to_json(const data::Vocab& v) { return json(v.tokens); }

data::Vocab vocab_from_json(const json& j) {
    data::Vocab v;
    v.tokens = j.get<std::vector<std::string>>();
    for (int i = 0; i < v.size(); ++i) v.index[v.tokens[i]] = i;
    v.eos = v.size() - 1;
    if (v.tokens.empty() || v.tokens.back() != data::kEos)
        throw DataError("checkpoint vocabulary is not EOS-terminated");
    return v;
}

json config_to_json(const ModelConfig& c) {
    return json{{"state", c.state},
                {"k_p", c.k_p},
                {"k_f", c.k_f},
                {"lambda", c.lambda},
                {"alpha", c.alpha},
                {"max_decode_len", c.max_decode_len},
                {"ablation", to_string(c.ablation)},
                {"baseline", c.baseline}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.state = j.at("state").get<int>();
    c.k_p = j.at("k_p").get<int>();
    c.k_f = j.at("k_f").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.alpha = j.at("alpha").get<double>();
    c.max_decode_len = j.at("max_decode_len").get<int>();
    c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
    c.baseline = j.at("baseline").get<bool>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const data::Vocab& input_vocab,
                     const data::Vocab& output_vocab, const std::string& preset,
                     std::uint64_t seed) {
    json arrays = json::object();
    for (const Param& p : model.params) {
        arrays[p.name] = json{{"shape", {p.shape.rows, p.shape.cols}}, {"data", p.value}};
    }
    json doc{{"format", kFormat},
             {"version", kVersion},
             {"preset", preset},
             {"seed", seed},
             {"config", config_to_json(model.config)},
             {"input_vocab", vocab_to_json(input_vocab)},
             {"output_vocab", vocab_to_json(output_vocab)},
             {"arrays", arrays}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << doc.dump();
    out << '\n';
    if (!out) throw DataError("write failed for '" + path + "'");
}

LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
    if (doc.value("format", "") != kFormat)
        throw DataError("'" + path + "' is not a checkpoint file");
    if (doc.value("version", 0) != kVersion)
        throw DataError("unsupported checkpoint version in '" + path + "'");

    LoadedModel lm;
    lm.preset = doc.value("preset", "");
    lm.seed = doc.value("seed", std::uint64_t{0});
    lm.input_vocab = vocab_from_json(doc.at("input_vocab"));
    lm.output_vocab = vocab_from_json(doc.at("output_vocab"));

    const ModelConfig config = config_from_json(doc.at("config"));
    Rng scratch(0);
    lm.model = build_model(config, lm.input_vocab.size(), lm.output_vocab.size(), scratch);

    const json& arrays = doc.at("arrays");
    for (Param& p : lm.model.params) {
        if (!arrays.contains(p.name))
            throw DataError("checkpoint missing array '" + p.name + "'");
        const json& a = arrays.at(p.name);
        const auto shape = a.at("shape").get<std::vector<int>>();
        if (shape.size() != 2 || shape[0] != p.shape.rows || shape[1] != p.shape.cols)
            throw DataError("checkpoint array '" + p.name + "' has wrong shape");
        p.value = a.at("data").get<std::vector<double>>();
        if (static_cast<int>(p.value.size()) != p.shape.size())
            throw DataError("checkpoint array '" + p.name + "' has wrong length");
    }
    return lm;
}

}  // namespace cgps
