#include "c4av/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace fs = std::filesystem;
using nlohmann::json;

namespace c4av {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&]() {
        std::size_t b = 0, e = cur.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) tokens.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch)))
            flush();
        else
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    flush();
    return tokens;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus, int min_freq) {
    std::map<std::string, long long> freq;
    for (const auto& doc : corpus)
        for (const auto& tok : doc) ++freq[tok];

    std::vector<std::pair<std::string, long long>> entries;
    for (const auto& [tok, n] : freq)
        if (n >= min_freq) entries.emplace_back(tok, n);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (const auto& [tok, n] : entries) {
        vocab.token_to_id[tok] = vocab.size();
        vocab.id_to_token.push_back(tok);
    }
    return vocab;
}

std::pair<std::vector<int>, int> encode_tokens(const Vocabulary& vocab,
                                               const std::vector<std::string>& tokens,
                                               int max_len) {
    std::vector<int> ids(static_cast<std::size_t>(max_len), Vocabulary::pad_id);
    int length = std::min<int>(static_cast<int>(tokens.size()), max_len);
    for (int i = 0; i < length; ++i) ids[i] = vocab.lookup(tokens[i]);
    return {std::move(ids), length};
}

std::vector<ScoredBox> select_top_k(const std::vector<ScoredBox>& proposals, int k) {
    std::vector<std::size_t> order(proposals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return proposals[a].confidence > proposals[b].confidence;
    });
    std::vector<ScoredBox> out;
    out.reserve(std::min<std::size_t>(order.size(), static_cast<std::size_t>(k)));
    for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(k); ++i)
        out.push_back(proposals[order[i]]);
    return out;
}

namespace {

json parse_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing file: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

Box parse_box(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4)
        throw std::runtime_error("malformed box (need 4 numbers) in " + where);
    Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!b.valid())
        throw std::runtime_error("malformed box (negative size or non-finite) in " + where);
    return b;
}

}  // namespace

std::vector<std::string> load_command_texts(const std::string& root, const std::string& split) {
    json cmds = parse_file(fs::path(root) / split / "commands.json");
    std::vector<std::string> texts;
    for (const auto& c : cmds) texts.push_back(c.at("text").get<std::string>());
    return texts;
}

std::vector<Sample> load_dataset(const std::string& root, const std::string& split,
                                 const Vocabulary& vocab, const LoadOptions& opts) {
    const fs::path dir = fs::path(root) / split;
    json jimages = parse_file(dir / "images.json");
    json jcommands = parse_file(dir / "commands.json");
    json jproposals = parse_file(dir / "proposals.json");

    std::unordered_map<std::string, ImageRecord> images;
    for (const auto& ji : jimages) {
        ImageRecord rec{ji.at("id").get<std::string>(), ji.at("file").get<std::string>(),
                        ji.at("width").get<int>(), ji.at("height").get<int>()};
        if (rec.width <= 0 || rec.height <= 0)
            throw std::runtime_error("non-positive image size for image " + rec.id);
        if (!images.emplace(rec.id, rec).second)
            throw std::runtime_error("duplicate image id " + rec.id);
    }

    std::unordered_map<std::string, std::vector<ScoredBox>> proposals;
    for (const auto& [image_id, arr] : jproposals.items()) {
        std::vector<ScoredBox> boxes;
        for (const auto& jp : arr) {
            ScoredBox sb;
            sb.box = parse_box(jp.at("box"), "proposals of image " + image_id);
            sb.confidence = jp.at("score").get<double>();
            boxes.push_back(sb);
        }
        proposals.emplace(image_id, std::move(boxes));
    }

    std::unordered_map<std::string, std::shared_ptr<const ImageBuffer>> pixel_cache;
    std::vector<Sample> samples;
    samples.reserve(jcommands.size());
    for (const auto& jc : jcommands) {
        Sample s;
        s.command.id = jc.at("id").get<std::string>();
        s.command.image_id = jc.at("image_id").get<std::string>();
        s.command.text = jc.at("text").get<std::string>();
        auto img_it = images.find(s.command.image_id);
        if (img_it == images.end())
            throw std::runtime_error("command " + s.command.id + " references unknown image_id " +
                                     s.command.image_id);
        s.image = img_it->second;
        if (jc.contains("gt_box"))
            s.command.gt_box = parse_box(jc.at("gt_box"), "command " + s.command.id);

        auto prop_it = proposals.find(s.command.image_id);
        if (prop_it == proposals.end())
            throw std::runtime_error("no proposals for image " + s.command.image_id);
        s.proposals = select_top_k(prop_it->second, opts.k);

        auto tokens = tokenize(s.command.text);
        if (tokens.empty())
            throw std::runtime_error("command " + s.command.id + " has no tokens");
        std::tie(s.token_ids, s.token_length) = encode_tokens(vocab, tokens, opts.max_len);

        if (s.command.gt_box) {
            std::vector<Box> boxes;
            for (const auto& sb : s.proposals) boxes.push_back(sb.box);
            s.labels = assign_labels(boxes, *s.command.gt_box);
        }

        if (opts.load_pixels) {
            auto& cached = pixel_cache[s.command.image_id];
            if (!cached)
                cached = std::make_shared<const ImageBuffer>(
                    load_image((dir / "images" / s.image.file).string()));
            s.pixels = cached;
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_vocabulary_json(const Vocabulary& vocab, const std::string& path) {
    json j = json::array();
    for (int i = 2; i < vocab.size(); ++i) j.push_back(vocab.id_to_token[i]);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

Vocabulary vocabulary_from_tokens(const std::vector<std::string>& tokens) {
    Vocabulary vocab;
    for (const auto& tok : tokens) {
        vocab.token_to_id[tok] = vocab.size();
        vocab.id_to_token.push_back(tok);
    }
    return vocab;
}

}  // namespace c4av
