#pragma once

#include <map>
#include <memory>
#include <string>

#include "c4av/dataset.hpp"
#include "c4av/model.hpp"

namespace c4av {

// Checkpoint directory layout: params.bin (opaque parameter blob) plus
// meta.json with {"config": {...}, "vocab_size", "epoch", "metrics", "vocab",
// "channel_mean", "channel_std"}.
void save_checkpoint(const std::string& dir, const Model& model, const Vocabulary& vocab,
                     int epoch, const std::map<std::string, double>& metrics);

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    Vocabulary vocab;
    int epoch = 0;
    std::map<std::string, double> metrics;
};

// Throws naming the missing field or mismatched parameter on any defect.
LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace c4av
