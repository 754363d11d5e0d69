#include "c4av/training.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "c4av/checkpoint.hpp"
#include "c4av/evaluation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace c4av {

LossBreakdown balanced_bce(const std::vector<double>& scores, const std::vector<Label>& labels,
                           double clamp_eps, bool entropy_form) {
    if (scores.size() != labels.size())
        throw std::runtime_error("balanced_bce: scores/labels length mismatch");
    LossBreakdown out;
    double pos_sum = 0.0, neg_sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double x = scores[i];
        if (labels[i] == Label::positive) {
            ++out.num_pos;
            double cx = std::max(x, clamp_eps);
            pos_sum += entropy_form ? -x * std::log(cx) : -std::log(cx);
        } else {
            ++out.num_neg;
            double c1x = std::max(1.0 - x, clamp_eps);
            neg_sum += entropy_form ? -(1.0 - x) * std::log(c1x) : -std::log(c1x);
        }
    }
    out.positive_term = out.num_pos ? pos_sum / out.num_pos : 0.0;
    out.negative_term = out.num_neg ? neg_sum / out.num_neg : 0.0;
    out.total = out.positive_term + out.negative_term;
    return out;
}

std::vector<double> balanced_bce_backward(const std::vector<double>& scores,
                                          const std::vector<Label>& labels, double clamp_eps) {
    if (scores.size() != labels.size())
        throw std::runtime_error("balanced_bce: scores/labels length mismatch");
    int num_pos = 0, num_neg = 0;
    for (Label l : labels) (l == Label::positive ? num_pos : num_neg)++;
    std::vector<double> d(scores.size(), 0.0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double x = scores[i];
        if (labels[i] == Label::positive) {
            if (x > clamp_eps) d[i] = -1.0 / (x * num_pos);
        } else {
            if (1.0 - x > clamp_eps) d[i] = 1.0 / ((1.0 - x) * num_neg);
        }
    }
    return d;
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 0 || epoch >= config.epochs)
        throw std::runtime_error("lr_at_epoch: epoch out of range");
    return config.base_lr / std::pow(config.lr_decay_factor, epoch / config.lr_decay_every);
}

void sgd_step(std::vector<Parameter*>& params, const GradBuffer& grads, SgdState& state,
              double lr, const TrainConfig& config) {
    if (state.velocity.empty())
        for (const Parameter* p : params) state.velocity.emplace_back(p->value.shape);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& value = params[pi]->value;
        const Tensor& grad = grads[pi];
        Tensor& vel = state.velocity[pi];
        for (std::size_t i = 0; i < value.size(); ++i) {
            double g = grad.data[i] + config.weight_decay * value.data[i];
            double v = config.momentum * vel.data[i] + g;
            vel.data[i] = v;
            value.data[i] -= lr * (config.nesterov ? g + config.momentum * v : v);
        }
    }
}

namespace {

struct SampleLossResult {
    double loss = 0.0;
    bool finite = true;
};

SampleLossResult sample_loss_and_grad(const Model& model, const Sample& sample,
                                      const std::vector<Tensor>& crops, double scale,
                                      const TrainConfig& cfg, GradBuffer& grads) {
    Model::SampleCache cache;
    std::vector<double> scores = model.forward_cached(sample, crops, cache, cfg.parallel);
    LossBreakdown loss = balanced_bce(scores, sample.labels, cfg.clamp_eps, cfg.entropy_form);
    if (!std::isfinite(loss.total)) return {loss.total, false};
    std::vector<double> d_scores = balanced_bce_backward(scores, sample.labels, cfg.clamp_eps);
    for (double& d : d_scores) d *= scale;
    model.backward(cache, d_scores, grads, cfg.parallel);
    return {loss.total, true};
}

}  // namespace

TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config,
                  const std::string& out_dir, const Vocabulary& vocab) {
    if (!config.valid()) throw std::runtime_error("invalid train config");
    if (train_set.empty()) throw std::runtime_error("empty training set");
    for (const auto& s : train_set)
        if (s.labels.empty())
            throw std::runtime_error("training sample " + s.command.id + " has no labels");

    fs::create_directories(out_dir);
    std::ofstream metrics_out(fs::path(out_dir) / "metrics.jsonl", std::ios::app);
    if (!metrics_out) throw std::runtime_error("cannot write metrics.jsonl under " + out_dir);

    if (config.epochs == 0) {
        // validation-only dry run
        EpochMetrics m;
        m.val_ap50 =
            val_set.empty() ? 0.0 : evaluate_model(model, val_set, 0.5, config.parallel).ap50;
        TrainResult result;
        result.metrics.push_back(m);
        metrics_out << json{{"epoch", m.epoch},
                            {"lr", m.lr},
                            {"train_loss", m.train_loss},
                            {"val_ap50", m.val_ap50}}
                           .dump()
                    << "\n";
        return result;
    }

    for (const auto& s : train_set)
        if (!s.pixels) throw std::runtime_error("sample " + s.command.id + " has no pixel data");

    // Proposals are fixed, so crops are computed once.
    std::vector<std::vector<Tensor>> crops(train_set.size());
    std::string crop_error;
#pragma omp parallel for schedule(static) if (config.parallel && !config.deterministic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(train_set.size()); ++i) {
        const Sample& s = train_set[i];
        try {
            for (const auto& p : s.proposals)
                crops[i].push_back(model.make_crop(*s.pixels, p.box));
        } catch (const std::exception& e) {
#pragma omp critical
            crop_error = "sample " + s.command.id + ": " + e.what();
        }
    }
    if (!crop_error.empty()) throw std::runtime_error(crop_error);

    int zero_pos = 0;
    for (const auto& s : train_set)
        if (std::none_of(s.labels.begin(), s.labels.end(),
                         [](Label l) { return l == Label::positive; }))
            ++zero_pos;

    auto& params = model.parameters();
    SgdState sgd;
    TrainResult result;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const int num_threads = config.deterministic ? 1 : omp_get_max_threads();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        std::mt19937 shuffle_rng(config.seed + static_cast<unsigned>(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t num_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            const double scale = 1.0 / static_cast<double>(end - start);

            std::vector<GradBuffer> thread_grads(num_threads);
            std::vector<double> batch_losses(end - start, 0.0);
            std::vector<char> batch_finite(end - start, 1);
            std::string batch_error;

#pragma omp parallel num_threads(num_threads) if (!config.deterministic)
            {
                int tid = omp_get_thread_num();
                thread_grads[tid] = make_grad_buffer(params);
#pragma omp for schedule(static)
                for (std::ptrdiff_t bi = 0; bi < static_cast<std::ptrdiff_t>(end - start); ++bi) {
                    std::size_t si = order[start + bi];
                    try {
                        auto r = sample_loss_and_grad(model, train_set[si], crops[si], scale,
                                                      config, thread_grads[tid]);
                        batch_losses[bi] = r.loss;
                        batch_finite[bi] = r.finite ? 1 : 0;
                    } catch (const std::exception& e) {
#pragma omp critical
                        batch_error = "sample " + train_set[si].command.id + ": " + e.what();
                    }
                }
            }
            if (!batch_error.empty()) throw std::runtime_error(batch_error);

            for (std::size_t bi = 0; bi < end - start; ++bi)
                if (!batch_finite[bi] || !std::isfinite(batch_losses[bi])) {
                    std::string ids;
                    for (std::size_t j = start; j < end; ++j)
                        ids += " " + train_set[order[j]].command.id;
                    throw std::runtime_error("non-finite loss in batch with commands:" + ids);
                }

            GradBuffer& grads = thread_grads[0];
            for (int t = 1; t < num_threads; ++t)
                if (!thread_grads[t].empty()) add_grad_buffers(grads, thread_grads[t]);

            double batch_loss = 0.0;
            for (double l : batch_losses) batch_loss += l;
            batch_loss *= scale;
            epoch_loss += batch_loss;
            ++num_batches;

            sgd_step(params, grads, sgd, lr, config);
        }

        EpochMetrics m;
        m.epoch = epoch;
        m.lr = lr;
        m.train_loss = num_batches ? epoch_loss / static_cast<double>(num_batches) : 0.0;
        m.val_ap50 = val_set.empty()
                         ? 0.0
                         : evaluate_model(model, val_set, 0.5, config.parallel).ap50;
        result.metrics.push_back(m);
        metrics_out << json{{"epoch", m.epoch},
                            {"lr", m.lr},
                            {"train_loss", m.train_loss},
                            {"val_ap50", m.val_ap50}}
                           .dump()
                    << "\n"
                    << std::flush;
        std::cerr << "epoch " << m.epoch << " lr " << m.lr << " train_loss " << m.train_loss
                  << " val_ap50 " << m.val_ap50 << " (samples without positives: " << zero_pos
                  << ")\n";

        std::map<std::string, double> ck_metrics{{"train_loss", m.train_loss},
                                                 {"val_ap50", m.val_ap50}};
        save_checkpoint((fs::path(out_dir) / "last").string(), model, vocab, epoch, ck_metrics);
        if (result.best_epoch < 0 || m.val_ap50 > result.best_val_ap50) {
            result.best_epoch = epoch;
            result.best_val_ap50 = m.val_ap50;
            save_checkpoint((fs::path(out_dir) / "best").string(), model, vocab, epoch,
                            ck_metrics);
        }
    }
    return result;
}

double gradient_check(const std::function<double(GradBuffer*)>& loss_and_grad,
                      const std::vector<Parameter*>& all_params,
                      const std::vector<GradCheckTarget>& targets, double step) {
    GradBuffer analytic = make_grad_buffer(all_params);
    loss_and_grad(&analytic);

    double max_rel_err = 0.0;
    for (const auto& target : targets) {
        Parameter* p = target.param;
        std::vector<std::size_t> elems = target.elements;
        if (elems.empty()) {
            elems.resize(p->value.size());
            std::iota(elems.begin(), elems.end(), std::size_t{0});
        }
        for (std::size_t e : elems) {
            double saved = p->value.data[e];
            p->value.data[e] = saved + step;
            double up = loss_and_grad(nullptr);
            p->value.data[e] = saved - step;
            double down = loss_and_grad(nullptr);
            p->value.data[e] = saved;
            double fd = (up - down) / (2.0 * step);
            double an = analytic[p->index].data[e];
            double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8});
            max_rel_err = std::max(max_rel_err, rel);
        }
    }
    return max_rel_err;
}

}  // namespace c4av
