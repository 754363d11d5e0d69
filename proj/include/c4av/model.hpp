#pragma once

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "c4av/dataset.hpp"
#include "c4av/geometry.hpp"
#include "c4av/kernels.hpp"
#include "c4av/tensor.hpp"

namespace c4av {

struct ModelConfig {
    int embed_dim = 512;      // joint space D
    int word_embed_dim = 128;
    int rnn_hidden = 256;     // per direction
    int vocab_size = 2;
    int k = 16;               // regions per sample
    int crop_size = 224;
    std::string backbone = "resnet18";
    bool pretrained = false;

    // Desk-scale configuration used by tests and --tiny-backbone runs.
    static ModelConfig tiny(int vocab_size);
    bool valid() const;
};

// Proposal box paired with its [0,1] correlation score.
struct ScoredRegion {
    Box box;
    double score = 0.0;
};

// Image-side feature extractor behind the region encoder. Consumes a
// channel-normalized 3 x S x S crop and yields a flat feature vector.
class Backbone {
public:
    struct Cache {
        virtual ~Cache() = default;
    };

    virtual ~Backbone() = default;
    virtual int feature_dim() const = 0;
    virtual std::unique_ptr<Cache> forward(const Tensor& in, std::vector<double>& feat,
                                           bool parallel) const = 0;
    // d_feat has feature_dim entries; parameter gradients go to `grads` by
    // each parameter's assigned index.
    virtual void backward(const Cache& cache, const double* d_feat, GradBuffer& grads,
                          bool parallel) const = 0;
    virtual void collect_parameters(std::vector<Parameter*>& out) = 0;
};

std::unique_ptr<Backbone> make_backbone(const std::string& name, std::mt19937& rng);

// Single-direction gated recurrent cell; gate order [r, z, n].
struct GruCell {
    int input_dim = 0;
    int hidden = 0;
    Parameter w;  // 3H x E, input weights
    Parameter u;  // 3H x H, recurrent weights
    Parameter b;  // 3H, input bias
    Parameter c;  // 3H, recurrent bias

    struct StepCache {
        std::vector<double> h_prev, r, z, n, gh_n;
    };

    void init(int input_dim, int hidden, const std::string& prefix, std::mt19937& rng);
    void step(const double* x, const double* h_prev, double* h_out, StepCache* cache) const;
    // Accumulates into d_h_prev, d_x (either may be null) and `grads`.
    void step_backward(const StepCache& cache, const double* x, const double* d_h,
                       double* d_h_prev, double* d_x, GradBuffer& grads) const;
    void collect_parameters(std::vector<Parameter*>& out);
};

class Model {
public:
    Model(ModelConfig config, unsigned seed);

    const ModelConfig& config() const { return config_; }
    std::vector<Parameter*>& parameters() { return params_; }
    const std::vector<Parameter*>& parameters() const { return params_; }
    const std::array<double, 3>& channel_mean() const { return channel_mean_; }
    const std::array<double, 3>& channel_std() const { return channel_std_; }
    Parameter* find_parameter(const std::string& name) const;

    // ---- caches for the training path ----
    struct CommandCache {
        int length = 0;
        std::vector<int> ids;                   // first `length` entries used
        std::vector<std::vector<double>> x;     // word embeddings per position
        std::vector<GruCell::StepCache> fwd_steps, bwd_steps;
        std::vector<double> summary;            // concat(h_fwd_final, h_bwd_final)
        std::vector<double> pre;                // projection output, pre-normalization
        std::vector<double> out;                // unit vector, D
        double norm = 0.0;
    };
    struct RegionCache {
        Tensor crop_norm;                       // channel-normalized input
        std::unique_ptr<Backbone::Cache> backbone;
        std::vector<double> feat, pre, out;
        double norm = 0.0;
    };
    struct SampleCache {
        CommandCache command;
        std::vector<RegionCache> regions;
        std::vector<double> scores;
    };

    // ---- inference surface ----
    CommandCache encode_command(const std::vector<int>& token_ids, int length,
                                bool parallel = true) const;
    RegionCache encode_region_crop(const Tensor& raw_crop, bool parallel = true) const;
    // Crops each box out of the image; throws naming the box index when a box
    // clamps to zero area.
    std::vector<std::vector<double>> encode_regions(const ImageBuffer& image,
                                                    const std::vector<Box>& boxes,
                                                    bool parallel = true) const;
    static std::vector<double> score(const std::vector<std::vector<double>>& regions,
                                     const std::vector<double>& command);
    std::vector<ScoredRegion> forward(const Sample& sample, bool parallel = true) const;

    // ---- training surface ----
    Tensor make_crop(const ImageBuffer& image, const Box& box) const;  // raw, un-normalized
    std::vector<double> forward_cached(const Sample& sample, const std::vector<Tensor>& raw_crops,
                                       SampleCache& cache, bool parallel) const;
    void backward(const SampleCache& cache, const std::vector<double>& d_scores, GradBuffer& grads,
                  bool parallel) const;

private:
    ModelConfig config_;
    Parameter embedding_;   // vocab_size x word_embed_dim
    GruCell gru_fwd_, gru_bwd_;
    Parameter text_w_, text_b_;      // D x 2H, D
    std::unique_ptr<Backbone> backbone_;
    Parameter region_w_, region_b_;  // D x F, D
    std::vector<Parameter*> params_;
    std::array<double, 3> channel_mean_{0.485, 0.456, 0.406};
    std::array<double, 3> channel_std_{0.229, 0.224, 0.225};

    void normalize_crop(const Tensor& raw, Tensor& out) const;
};

}  // namespace c4av
