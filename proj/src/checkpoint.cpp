#include "c4av/checkpoint.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace c4av {

namespace {

constexpr char kMagic[] = "C4AVPARAMS1";

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("truncated params.bin");
    return v;
}

json config_to_json(const ModelConfig& c) {
    return {{"embed_dim", c.embed_dim},   {"word_embed_dim", c.word_embed_dim},
            {"rnn_hidden", c.rnn_hidden}, {"vocab_size", c.vocab_size},
            {"k", c.k},                   {"crop_size", c.crop_size},
            {"backbone", c.backbone},     {"pretrained", c.pretrained}};
}

template <typename T>
T require(const json& j, const std::string& field) {
    if (!j.contains(field))
        throw std::runtime_error("checkpoint meta.json: missing field \"" + field + "\"");
    return j.at(field).get<T>();
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.embed_dim = require<int>(j, "embed_dim");
    c.word_embed_dim = require<int>(j, "word_embed_dim");
    c.rnn_hidden = require<int>(j, "rnn_hidden");
    c.vocab_size = require<int>(j, "vocab_size");
    c.k = require<int>(j, "k");
    c.crop_size = require<int>(j, "crop_size");
    c.backbone = require<std::string>(j, "backbone");
    c.pretrained = require<bool>(j, "pretrained");
    return c;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Model& model, const Vocabulary& vocab,
                     int epoch, const std::map<std::string, double>& metrics) {
    fs::create_directories(dir);

    std::ofstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + dir + "/params.bin");
    bin.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(bin, static_cast<std::uint32_t>(model.parameters().size()));
    for (const Parameter* p : model.parameters()) {
        write_raw<std::uint32_t>(bin, static_cast<std::uint32_t>(p->name.size()));
        bin.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_raw<std::uint32_t>(bin, static_cast<std::uint32_t>(p->value.shape.size()));
        for (int d : p->value.shape) write_raw<std::int32_t>(bin, d);
        bin.write(reinterpret_cast<const char*>(p->value.ptr()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }

    json meta;
    meta["config"] = config_to_json(model.config());
    meta["vocab_size"] = vocab.size();
    meta["epoch"] = epoch;
    meta["metrics"] = metrics;
    json jvocab = json::array();
    for (int i = 2; i < vocab.size(); ++i) jvocab.push_back(vocab.id_to_token[i]);
    meta["vocab"] = jvocab;
    meta["channel_mean"] = model.channel_mean();
    meta["channel_std"] = model.channel_std();
    std::ofstream out(fs::path(dir) / "meta.json");
    if (!out) throw std::runtime_error("cannot write " + dir + "/meta.json");
    out << meta.dump(2) << "\n";
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream meta_in(fs::path(dir) / "meta.json");
    if (!meta_in) throw std::runtime_error("missing file: " + dir + "/meta.json");
    json meta;
    try {
        meta = json::parse(meta_in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed meta.json: " + std::string(e.what()));
    }

    if (!meta.contains("config"))
        throw std::runtime_error("checkpoint meta.json: missing field \"config\"");
    ModelConfig config = config_from_json(meta.at("config"));

    LoadedCheckpoint ck;
    for (const auto& tok : require<std::vector<std::string>>(meta, "vocab")) {
        ck.vocab.token_to_id[tok] = ck.vocab.size();
        ck.vocab.id_to_token.push_back(tok);
    }
    if (ck.vocab.size() != require<int>(meta, "vocab_size"))
        throw std::runtime_error("checkpoint meta.json: vocab_size disagrees with vocab list");
    ck.epoch = require<int>(meta, "epoch");
    if (meta.contains("metrics"))
        ck.metrics = meta.at("metrics").get<std::map<std::string, double>>();

    ck.model = std::make_unique<Model>(config, 0);

    std::ifstream bin(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("missing file: " + dir + "/params.bin");
    char magic[sizeof(kMagic)];
    bin.read(magic, sizeof(kMagic));
    if (!bin || std::string(magic, sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
        throw std::runtime_error("params.bin: bad magic");
    auto count = read_raw<std::uint32_t>(bin);
    if (count != ck.model->parameters().size())
        throw std::runtime_error("params.bin: parameter count mismatch");
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name_len = read_raw<std::uint32_t>(bin);
        std::string name(name_len, '\0');
        bin.read(name.data(), name_len);
        auto ndims = read_raw<std::uint32_t>(bin);
        std::vector<int> shape(ndims);
        for (auto& d : shape) d = read_raw<std::int32_t>(bin);
        Parameter* p = ck.model->find_parameter(name);
        if (!p) throw std::runtime_error("params.bin: unknown parameter \"" + name + "\"");
        if (p->value.shape != shape)
            throw std::runtime_error("params.bin: shape mismatch for \"" + name + "\"");
        bin.read(reinterpret_cast<char*>(p->value.ptr()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(double)));
        if (!bin) throw std::runtime_error("params.bin: truncated data for \"" + name + "\"");
    }
    return ck;
}

}  // namespace c4av
