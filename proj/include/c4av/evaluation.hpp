#pragma once

#include <map>
#include <string>
#include <vector>

#include "c4av/dataset.hpp"
#include "c4av/geometry.hpp"
#include "c4av/model.hpp"

namespace c4av {

struct Prediction {
    std::string command_id;
    Box box;
};

struct PerCommandResult {
    std::string command_id;
    double iou = 0.0;
    bool correct = false;
};

struct EvalReport {
    double ap50 = 0.0;
    int num_commands = 0;
    double oracle_rate = 0.0;
    std::vector<PerCommandResult> per_command;
};

// Index of the highest-scoring region; ties break toward the lower index.
std::size_t argmax_index(const std::vector<ScoredRegion>& scored);

// Argmax over proposal scores; ties break toward the lower proposal index.
Prediction predict(const Model& model, const Sample& sample, bool parallel = true);

// Top-1 accuracy at the IoU threshold; requires a 1:1 match between
// prediction ids and gt ids, and throws listing any missing/extra ids.
// oracle_rate is left 0 here; evaluate_model fills it.
EvalReport ap50(const std::vector<Prediction>& predictions,
                const std::map<std::string, Box>& gts, double threshold = 0.5);

// Fraction of samples whose proposal set contains at least one positive.
// Upper-bounds any ranker's AP50 on those samples.
double proposal_oracle(const std::vector<Sample>& samples, double threshold = 0.5);

// Predicts every sample and scores against its gt_box.
EvalReport evaluate_model(const Model& model, const std::vector<Sample>& samples,
                          double threshold = 0.5, bool parallel = true);

std::map<std::string, Box> ground_truth_map(const std::vector<Sample>& samples);

// Submission file: JSON object {command_id: [x, y, w, h]}.
void write_submission(const std::vector<Prediction>& predictions, const std::string& path);
std::vector<Prediction> read_submission(const std::string& path);

}  // namespace c4av
