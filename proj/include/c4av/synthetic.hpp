#pragma once

#include <string>
#include <vector>

namespace c4av {

struct SyntheticConfig {
    int num_images = 100;  // total across train/val/test (80/10/10)
    int image_size = 128;
    int shapes_min = 2;
    int shapes_max = 4;
    std::vector<std::string> colors = {"red",  "green",  "blue",   "yellow", "magenta", "cyan",
                                       "orange", "purple", "pink", "teal",   "olive",   "navy",
                                       "maroon", "lime",   "brown", "gray"};
    std::vector<std::string> shapes = {"circle", "square", "triangle"};
    double proposal_jitter = 0.1;  // fraction of box size, in [0, 0.5]
    int distractor_proposals = 8;
    unsigned seed = 0;
    // explicit split sizes; 0 means the default 10% of num_images (min 1)
    int val_count = 0;
    int test_count = 0;

    bool valid() const;
};

struct SyntheticSummary {
    int train_images = 0;
    int val_images = 0;
    int test_images = 0;
};

// Writes train/val/test splits in the dataset directory layout under `out`.
// Each image holds non-overlapping colored shapes with distinct colors; the
// command names the target by color and shape, so exactly one shape matches.
// Distractors are decoy shapes drawn in the palette colors the image's
// shapes do not use, so the command's color still names its shape uniquely.
// Proposals are every shape's and decoy's box jittered by proposal_jitter.
// Index files are byte-identical across runs with the same config and seed.
SyntheticSummary generate_synthetic(const SyntheticConfig& config, const std::string& out);

}  // namespace c4av
