#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "c4av/geometry.hpp"
#include "c4av/image.hpp"

namespace c4av {

struct ImageRecord {
    std::string id;
    std::string file;  // relative to the split directory
    int width = 0;
    int height = 0;
};

struct CommandRecord {
    std::string id;
    std::string image_id;
    std::string text;
    std::optional<Box> gt_box;
};

struct Vocabulary {
    static constexpr int pad_id = 0;
    static constexpr int unk_id = 1;

    std::map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;  // index 0 = <pad>, 1 = <unk>

    Vocabulary() : id_to_token{"<pad>", "<unk>"} {}

    int lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }
    int size() const { return static_cast<int>(id_to_token.size()); }
};

struct Sample {
    CommandRecord command;
    ImageRecord image;
    std::shared_ptr<const ImageBuffer> pixels;
    std::vector<ScoredBox> proposals;  // top-k, descending confidence
    std::vector<int> token_ids;        // padded to max_len
    int token_length = 0;
    std::vector<Label> labels;  // empty iff gt_box absent
};

// Lowercase, strip leading/trailing punctuation per token, split on
// whitespace. Internal apostrophes survive.
std::vector<std::string> tokenize(const std::string& text);

// Tokens with frequency >= min_freq get ids 2.. in order of descending
// frequency, ties broken lexicographically.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus, int min_freq);

std::pair<std::vector<int>, int> encode_tokens(const Vocabulary& vocab,
                                               const std::vector<std::string>& tokens,
                                               int max_len);

// The min(k, n) highest-confidence proposals, descending, ties by input order.
std::vector<ScoredBox> select_top_k(const std::vector<ScoredBox>& proposals, int k = 16);

struct LoadOptions {
    int k = 16;
    int max_len = 40;
    bool load_pixels = true;
};

// Reads <root>/<split>/{images.json,commands.json,proposals.json} and image
// files. One Sample per command, in commands.json order. Throws
// std::runtime_error naming the offending file or record on any malformed
// input.
std::vector<Sample> load_dataset(const std::string& root, const std::string& split,
                                 const Vocabulary& vocab, const LoadOptions& opts = {});

// Command texts only (for vocabulary building without touching pixels).
std::vector<std::string> load_command_texts(const std::string& root, const std::string& split);

void save_vocabulary_json(const Vocabulary& vocab, const std::string& path);
Vocabulary vocabulary_from_tokens(const std::vector<std::string>& tokens);  // ids 2.. in order

}  // namespace c4av
