#pragma once

#include <functional>
#include <string>
#include <vector>

#include "c4av/dataset.hpp"
#include "c4av/model.hpp"
#include "c4av/tensor.hpp"

namespace c4av {

struct TrainConfig {
    int epochs = 10;
    double base_lr = 0.01;
    double momentum = 0.9;  // nesterov
    bool nesterov = true;
    double weight_decay = 1e-4;
    int batch_size = 18;
    double lr_decay_factor = 10.0;
    int lr_decay_every = 4;  // epochs
    unsigned seed = 0;
    double clamp_eps = 1e-7;
    // Literal form of the printed loss (x log x / (1-x) log(1-x)) instead of
    // standard BCE; kept for auditability.
    bool entropy_form = false;
    bool deterministic = false;  // serial batch accumulation
    bool parallel = true;

    bool valid() const {
        return epochs >= 0 && base_lr > 0 && momentum >= 0 && weight_decay >= 0 &&
               batch_size >= 1 && lr_decay_factor > 0 && lr_decay_every >= 1 && clamp_eps > 0;
    }
};

struct LossBreakdown {
    double total = 0.0;
    double positive_term = 0.0;
    double negative_term = 0.0;
    int num_pos = 0;
    int num_neg = 0;
};

// Per-sample loss of the ranking objective: -log(x) averaged over positives
// plus -log(1-x) averaged over negatives, each set averaged separately. An
// empty set contributes 0. Scores are clamped at clamp_eps away from the log
// singularities.
LossBreakdown balanced_bce(const std::vector<double>& scores, const std::vector<Label>& labels,
                           double clamp_eps = 1e-7, bool entropy_form = false);
// d(total)/d(score_i); zero where the clamp is active.
std::vector<double> balanced_bce_backward(const std::vector<double>& scores,
                                          const std::vector<Label>& labels,
                                          double clamp_eps = 1e-7);

// base_lr / lr_decay_factor^floor(epoch / lr_decay_every); epoch is 0-based.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct SgdState {
    std::vector<Tensor> velocity;
};

// One SGD step with L2 weight decay and (optionally nesterov) momentum:
//   g += weight_decay * p;  v = momentum * v + g;
//   p -= lr * (g + momentum * v)   [nesterov]   or   p -= lr * v.
void sgd_step(std::vector<Parameter*>& params, const GradBuffer& grads, SgdState& state,
              double lr, const TrainConfig& config);

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_ap50 = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> metrics;
    int best_epoch = -1;
    double best_val_ap50 = 0.0;
};

// Full training loop: shuffled batches, per-sample balanced BCE averaged over
// the batch, SGD with the decayed schedule, per-epoch metrics appended to
// <out_dir>/metrics.jsonl, and last/ + best/ (by val AP50) checkpoints.
// Region crops are precomputed once per sample. Throws on non-finite loss,
// naming the batch's command ids. epochs == 0 is a validation-only dry run
// producing a single metrics entry.
TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  const std::string& out_dir, const Vocabulary& vocab);

// Central finite differences vs analytic gradient over selected parameter
// elements; relative error denominator max(|a|, |b|, 1e-8). loss_and_grad
// fills `grads` when non-null and always returns the loss.
struct GradCheckTarget {
    Parameter* param;
    std::vector<std::size_t> elements;  // flat indices; empty = all
};
double gradient_check(const std::function<double(GradBuffer*)>& loss_and_grad,
                      const std::vector<Parameter*>& all_params,
                      const std::vector<GradCheckTarget>& targets, double step = 1e-4);

}  // namespace c4av
