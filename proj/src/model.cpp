#include "c4av/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace c4av {

using kernels::ConvShape;
using kernels::PoolShape;

namespace {

void uniform_init(Tensor& t, double bound, std::mt19937& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.data) v = dist(rng);
}

Parameter make_param(std::string name, std::vector<int> shape, double bound, std::mt19937& rng) {
    Parameter p;
    p.name = std::move(name);
    p.value = Tensor(std::move(shape));
    if (bound > 0.0) uniform_init(p.value, bound, rng);
    return p;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// ---------------------------------------------------------------------------
// Conv / affine building blocks shared by the backbones
// ---------------------------------------------------------------------------

struct ConvParams {
    int in_c = 0, out_c = 0, kernel = 1, stride = 1, pad = 0;
    Parameter w, b;
    bool has_bias = true;

    void init(int ic, int oc, int k, int s, int p, const std::string& name, std::mt19937& rng,
              bool bias = true) {
        in_c = ic;
        out_c = oc;
        kernel = k;
        stride = s;
        pad = p;
        has_bias = bias;
        // uniform He init: variance 2 / fan_in, matched to the relu stack
        double bound = std::sqrt(6.0 / (static_cast<double>(ic) * k * k));
        w = make_param(name + ".w", {oc, ic, k, k}, bound, rng);
        if (bias) b = make_param(name + ".b", {oc}, 0.0, rng);
    }

    ConvShape shape(int h, int w_in) const { return ConvShape{in_c, h, w_in, out_c, kernel, stride, pad}; }

    void forward(const double* in, int h, int w_in, double* out, bool parallel) const {
        kernels::conv2d_forward(in, w.value.ptr(), has_bias ? b.value.ptr() : nullptr,
                                shape(h, w_in), out, parallel);
    }
    void backward(const double* in, int h, int w_in, const double* d_out, double* d_in,
                  GradBuffer& g, bool parallel) const {
        kernels::conv2d_backward(in, w.value.ptr(), d_out, shape(h, w_in), d_in,
                                 g[w.index].ptr(), has_bias ? g[b.index].ptr() : nullptr,
                                 parallel);
    }
    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        if (has_bias) out.push_back(&b);
    }
};

// Per-channel scale and shift (the frozen-statistics form of batch norm).
struct AffineParams {
    Parameter scale, bias;
    int channels = 0;

    void init(int c, const std::string& name, std::mt19937& rng) {
        channels = c;
        scale = make_param(name + ".scale", {c}, 0.0, rng);
        std::fill(scale.value.data.begin(), scale.value.data.end(), 1.0);
        bias = make_param(name + ".bias", {c}, 0.0, rng);
    }
    void forward(const double* in, int hw, double* out) const {
        for (int c = 0; c < channels; ++c) {
            double s = scale.value.data[c], b = bias.value.data[c];
            const double* ic = in + static_cast<std::size_t>(c) * hw;
            double* oc = out + static_cast<std::size_t>(c) * hw;
            for (int i = 0; i < hw; ++i) oc[i] = s * ic[i] + b;
        }
    }
    void backward(const double* in, int hw, const double* d_out, double* d_in,
                  GradBuffer& g) const {
        for (int c = 0; c < channels; ++c) {
            double s = scale.value.data[c];
            const double* ic = in + static_cast<std::size_t>(c) * hw;
            const double* doc = d_out + static_cast<std::size_t>(c) * hw;
            double* dic = d_in ? d_in + static_cast<std::size_t>(c) * hw : nullptr;
            double ds = 0.0, db = 0.0;
            for (int i = 0; i < hw; ++i) {
                ds += doc[i] * ic[i];
                db += doc[i];
                if (dic) dic[i] += doc[i] * s;
            }
            g[scale.index].data[c] += ds;
            g[bias.index].data[c] += db;
        }
    }
    void collect(std::vector<Parameter*>& out) {
        out.push_back(&scale);
        out.push_back(&bias);
    }
};

// ---------------------------------------------------------------------------
// Tiny backbone: three stride-2 conv+relu stages and a global average pool.
// ---------------------------------------------------------------------------

class TinyConvBackbone final : public Backbone {
public:
    explicit TinyConvBackbone(std::mt19937& rng) {
        conv_[0].init(3, 8, 3, 2, 1, "backbone.conv1", rng);
        conv_[1].init(8, 16, 3, 2, 1, "backbone.conv2", rng);
        conv_[2].init(16, 32, 3, 2, 1, "backbone.conv3", rng);
    }

    int feature_dim() const override { return 32; }

    struct TinyCache : Cache {
        Tensor in;
        std::array<Tensor, 3> z, a;  // pre/post relu per stage
        std::array<int, 4> h, w;
    };

    std::unique_ptr<Cache> forward(const Tensor& in, std::vector<double>& feat,
                                   bool parallel) const override {
        auto cache = std::make_unique<TinyCache>();
        cache->in = in;
        cache->h[0] = in.shape[1];
        cache->w[0] = in.shape[2];
        const double* cur = in.ptr();
        for (int i = 0; i < 3; ++i) {
            ConvShape s = conv_[i].shape(cache->h[i], cache->w[i]);
            cache->h[i + 1] = s.out_h();
            cache->w[i + 1] = s.out_w();
            cache->z[i] = Tensor({s.out_c, s.out_h(), s.out_w()});
            cache->a[i] = Tensor({s.out_c, s.out_h(), s.out_w()});
            conv_[i].forward(cur, cache->h[i], cache->w[i], cache->z[i].ptr(), parallel);
            kernels::relu_forward(cache->z[i].ptr(), cache->a[i].ptr(), cache->z[i].size());
            cur = cache->a[i].ptr();
        }
        feat.assign(32, 0.0);
        kernels::global_avg_pool_forward(cur, 32, cache->h[3], cache->w[3], feat.data());
        return cache;
    }

    void backward(const Cache& cache_base, const double* d_feat, GradBuffer& grads,
                  bool parallel) const override {
        const auto& c = static_cast<const TinyCache&>(cache_base);
        Tensor d_a3(c.a[2].shape);
        kernels::global_avg_pool_backward(d_feat, 32, c.h[3], c.w[3], d_a3.ptr());
        Tensor d_cur = std::move(d_a3);
        for (int i = 2; i >= 0; --i) {
            Tensor d_z(c.z[i].shape);
            kernels::relu_backward(c.z[i].ptr(), d_cur.ptr(), d_z.ptr(), d_z.size());
            const double* in = i == 0 ? c.in.ptr() : c.a[i - 1].ptr();
            Tensor d_in;
            double* d_in_ptr = nullptr;
            if (i > 0) {
                d_in = Tensor(c.a[i - 1].shape);
                d_in_ptr = d_in.ptr();
            }
            conv_[i].backward(in, c.h[i], c.w[i], d_z.ptr(), d_in_ptr, grads, parallel);
            d_cur = std::move(d_in);
        }
    }

    void collect_parameters(std::vector<Parameter*>& out) override {
        for (auto& cv : conv_) cv.collect(out);
    }

private:
    std::array<ConvParams, 3> conv_;
};

// ---------------------------------------------------------------------------
// 18-layer residual backbone. Batch norm is represented by per-channel
// affine layers (frozen-statistics form), so pretrained weights must be
// folded before loading.
// ---------------------------------------------------------------------------

struct BasicBlock {
    ConvParams conv1, conv2, down_conv;
    AffineParams aff1, aff2, down_aff;
    bool has_down = false;

    void init(int in_c, int out_c, int stride, const std::string& name, std::mt19937& rng) {
        conv1.init(in_c, out_c, 3, stride, 1, name + ".conv1", rng, false);
        aff1.init(out_c, name + ".aff1", rng);
        conv2.init(out_c, out_c, 3, 1, 1, name + ".conv2", rng, false);
        aff2.init(out_c, name + ".aff2", rng);
        has_down = stride != 1 || in_c != out_c;
        if (has_down) {
            down_conv.init(in_c, out_c, 1, stride, 0, name + ".down_conv", rng, false);
            down_aff.init(out_c, name + ".down_aff", rng);
        }
    }

    struct BlockCache {
        Tensor in, z1, f1, a1, z2, f2, zd, sc, sum, out;
        int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
    };

    void forward(BlockCache& c, bool parallel) const {
        ConvShape s1 = conv1.shape(c.in_h, c.in_w);
        c.out_h = s1.out_h();
        c.out_w = s1.out_w();
        const int hw = c.out_h * c.out_w;
        const int oc = conv1.out_c;
        c.z1 = Tensor({oc, c.out_h, c.out_w});
        conv1.forward(c.in.ptr(), c.in_h, c.in_w, c.z1.ptr(), parallel);
        c.f1 = Tensor(c.z1.shape);
        aff1.forward(c.z1.ptr(), hw, c.f1.ptr());
        c.a1 = Tensor(c.z1.shape);
        kernels::relu_forward(c.f1.ptr(), c.a1.ptr(), c.a1.size());
        c.z2 = Tensor(c.z1.shape);
        conv2.forward(c.a1.ptr(), c.out_h, c.out_w, c.z2.ptr(), parallel);
        c.f2 = Tensor(c.z1.shape);
        aff2.forward(c.z2.ptr(), hw, c.f2.ptr());
        if (has_down) {
            c.zd = Tensor(c.z1.shape);
            down_conv.forward(c.in.ptr(), c.in_h, c.in_w, c.zd.ptr(), parallel);
            c.sc = Tensor(c.z1.shape);
            down_aff.forward(c.zd.ptr(), hw, c.sc.ptr());
        } else {
            c.sc = c.in;
        }
        c.sum = Tensor(c.z1.shape);
        for (std::size_t i = 0; i < c.sum.size(); ++i) c.sum.data[i] = c.f2.data[i] + c.sc.data[i];
        c.out = Tensor(c.z1.shape);
        kernels::relu_forward(c.sum.ptr(), c.out.ptr(), c.out.size());
    }

    void backward(const BlockCache& c, const double* d_out, double* d_in, GradBuffer& g,
                  bool parallel) const {
        const int hw = c.out_h * c.out_w;
        Tensor d_sum(c.sum.shape);
        kernels::relu_backward(c.sum.ptr(), d_out, d_sum.ptr(), d_sum.size());
        // shortcut branch
        if (has_down) {
            Tensor d_zd(c.zd.shape);
            down_aff.backward(c.zd.ptr(), hw, d_sum.ptr(), d_zd.ptr(), g);
            down_conv.backward(c.in.ptr(), c.in_h, c.in_w, d_zd.ptr(), d_in, g, parallel);
        } else {
            for (std::size_t i = 0; i < d_sum.size(); ++i) d_in[i] += d_sum.data[i];
        }
        // main branch
        Tensor d_z2(c.z2.shape);
        aff2.backward(c.z2.ptr(), hw, d_sum.ptr(), d_z2.ptr(), g);
        Tensor d_a1(c.a1.shape);
        conv2.backward(c.a1.ptr(), c.out_h, c.out_w, d_z2.ptr(), d_a1.ptr(), g, parallel);
        Tensor d_f1(c.f1.shape);
        kernels::relu_backward(c.f1.ptr(), d_a1.ptr(), d_f1.ptr(), d_f1.size());
        Tensor d_z1(c.z1.shape);
        aff1.backward(c.z1.ptr(), hw, d_f1.ptr(), d_z1.ptr(), g);
        conv1.backward(c.in.ptr(), c.in_h, c.in_w, d_z1.ptr(), d_in, g, parallel);
    }

    void collect(std::vector<Parameter*>& out) {
        conv1.collect(out);
        aff1.collect(out);
        conv2.collect(out);
        aff2.collect(out);
        if (has_down) {
            down_conv.collect(out);
            down_aff.collect(out);
        }
    }
};

class Resnet18Backbone final : public Backbone {
public:
    explicit Resnet18Backbone(std::mt19937& rng) {
        stem_.init(3, 64, 7, 2, 3, "backbone.stem", rng, false);
        stem_aff_.init(64, "backbone.stem_aff", rng);
        const int chans[4] = {64, 128, 256, 512};
        int in_c = 64;
        for (int s = 0; s < 4; ++s)
            for (int b = 0; b < 2; ++b) {
                int stride = (s > 0 && b == 0) ? 2 : 1;
                blocks_[s * 2 + b].init(in_c, chans[s], stride,
                                        "backbone.layer" + std::to_string(s + 1) + ".block" +
                                            std::to_string(b),
                                        rng);
                in_c = chans[s];
            }
    }

    int feature_dim() const override { return 512; }

    struct R18Cache : Cache {
        Tensor in, z_stem, f_stem, a_stem, pooled;
        std::vector<int> pool_argmax;
        std::array<BasicBlock::BlockCache, 8> blocks;
        int h0 = 0, w0 = 0, hs = 0, ws = 0, hp = 0, wp = 0;
    };

    std::unique_ptr<Cache> forward(const Tensor& in, std::vector<double>& feat,
                                   bool parallel) const override {
        auto cache = std::make_unique<R18Cache>();
        auto& c = *cache;
        c.in = in;
        c.h0 = in.shape[1];
        c.w0 = in.shape[2];
        ConvShape ss = stem_.shape(c.h0, c.w0);
        c.hs = ss.out_h();
        c.ws = ss.out_w();
        c.z_stem = Tensor({64, c.hs, c.ws});
        stem_.forward(in.ptr(), c.h0, c.w0, c.z_stem.ptr(), parallel);
        c.f_stem = Tensor(c.z_stem.shape);
        stem_aff_.forward(c.z_stem.ptr(), c.hs * c.ws, c.f_stem.ptr());
        c.a_stem = Tensor(c.z_stem.shape);
        kernels::relu_forward(c.f_stem.ptr(), c.a_stem.ptr(), c.a_stem.size());
        PoolShape ps{64, c.hs, c.ws, 3, 2, 1};
        c.hp = ps.out_h();
        c.wp = ps.out_w();
        c.pooled = Tensor({64, c.hp, c.wp});
        c.pool_argmax.assign(c.pooled.size(), 0);
        kernels::maxpool_forward(c.a_stem.ptr(), ps, c.pooled.ptr(), c.pool_argmax.data());

        Tensor cur = c.pooled;
        int h = c.hp, w = c.wp;
        for (int i = 0; i < 8; ++i) {
            auto& bc = c.blocks[i];
            bc.in = std::move(cur);
            bc.in_h = h;
            bc.in_w = w;
            blocks_[i].forward(bc, parallel);
            cur = bc.out;
            h = bc.out_h;
            w = bc.out_w;
        }
        feat.assign(512, 0.0);
        kernels::global_avg_pool_forward(cur.ptr(), 512, h, w, feat.data());
        return cache;
    }

    void backward(const Cache& cache_base, const double* d_feat, GradBuffer& grads,
                  bool parallel) const override {
        const auto& c = static_cast<const R18Cache&>(cache_base);
        const auto& last = c.blocks[7];
        Tensor d_cur(last.out.shape);
        kernels::global_avg_pool_backward(d_feat, 512, last.out_h, last.out_w, d_cur.ptr());
        for (int i = 7; i >= 0; --i) {
            Tensor d_in(c.blocks[i].in.shape);
            blocks_[i].backward(c.blocks[i], d_cur.ptr(), d_in.ptr(), grads, parallel);
            d_cur = std::move(d_in);
        }
        Tensor d_a_stem(c.a_stem.shape);
        PoolShape ps{64, c.hs, c.ws, 3, 2, 1};
        kernels::maxpool_backward(d_cur.ptr(), ps, c.pool_argmax.data(), d_a_stem.ptr());
        Tensor d_f_stem(c.f_stem.shape);
        kernels::relu_backward(c.f_stem.ptr(), d_a_stem.ptr(), d_f_stem.ptr(), d_f_stem.size());
        Tensor d_z_stem(c.z_stem.shape);
        stem_aff_.backward(c.z_stem.ptr(), c.hs * c.ws, d_f_stem.ptr(), d_z_stem.ptr(), grads);
        stem_.backward(c.in.ptr(), c.h0, c.w0, d_z_stem.ptr(), nullptr, grads, parallel);
    }

    void collect_parameters(std::vector<Parameter*>& out) override {
        stem_.collect(out);
        stem_aff_.collect(out);
        for (auto& b : blocks_) b.collect(out);
    }

private:
    ConvParams stem_;
    AffineParams stem_aff_;
    std::array<BasicBlock, 8> blocks_;
};

}  // namespace

std::unique_ptr<Backbone> make_backbone(const std::string& name, std::mt19937& rng) {
    if (name == "tiny") return std::make_unique<TinyConvBackbone>(rng);
    if (name == "resnet18") return std::make_unique<Resnet18Backbone>(rng);
    throw std::runtime_error("unknown backbone: " + name);
}

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

void GruCell::init(int in_dim, int hid, const std::string& prefix, std::mt19937& rng) {
    input_dim = in_dim;
    hidden = hid;
    double bound = std::sqrt(1.0 / hid);
    w = make_param(prefix + ".w", {3 * hid, in_dim}, bound, rng);
    u = make_param(prefix + ".u", {3 * hid, hid}, bound, rng);
    b = make_param(prefix + ".b", {3 * hid}, 0.0, rng);
    c = make_param(prefix + ".c", {3 * hid}, 0.0, rng);
    // positive update-gate bias biases h toward carrying state, so words in
    // the middle of the command survive to the final hidden states
    for (int i = 0; i < hid; ++i) b.value.ptr()[hid + i] = 1.0;
}

void GruCell::step(const double* x, const double* h_prev, double* h_out,
                   StepCache* cache) const {
    const int H = hidden;
    std::vector<double> gi(3 * H), gh(3 * H);
    kernels::linear_forward_serial(x, w.value.ptr(), b.value.ptr(), 3 * H, input_dim, gi.data());
    kernels::linear_forward_serial(h_prev, u.value.ptr(), c.value.ptr(), 3 * H, H, gh.data());
    std::vector<double> r(H), z(H), n(H);
    for (int i = 0; i < H; ++i) {
        r[i] = sigmoid(gi[i] + gh[i]);
        z[i] = sigmoid(gi[H + i] + gh[H + i]);
        n[i] = std::tanh(gi[2 * H + i] + r[i] * gh[2 * H + i]);
        h_out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
    }
    if (cache) {
        cache->h_prev.assign(h_prev, h_prev + H);
        cache->r = std::move(r);
        cache->z = std::move(z);
        cache->n = std::move(n);
        cache->gh_n.assign(gh.begin() + 2 * H, gh.end());
    }
}

void GruCell::step_backward(const StepCache& cache, const double* x, const double* d_h,
                            double* d_h_prev, double* d_x, GradBuffer& grads) const {
    const int H = hidden;
    std::vector<double> d_gi(3 * H), d_gh(3 * H);
    for (int i = 0; i < H; ++i) {
        double r = cache.r[i], z = cache.z[i], n = cache.n[i];
        double dn = d_h[i] * (1.0 - z);
        double dz = d_h[i] * (cache.h_prev[i] - n);
        if (d_h_prev) d_h_prev[i] += d_h[i] * z;
        double dn_pre = dn * (1.0 - n * n);
        double dr = dn_pre * cache.gh_n[i];
        d_gi[2 * H + i] = dn_pre;
        d_gh[2 * H + i] = dn_pre * r;
        d_gi[i] = d_gh[i] = dr * r * (1.0 - r);
        d_gi[H + i] = d_gh[H + i] = dz * z * (1.0 - z);
    }
    kernels::linear_backward(x, w.value.ptr(), d_gi.data(), 3 * H, input_dim, d_x,
                             grads[w.index].ptr(), grads[b.index].ptr());
    kernels::linear_backward(cache.h_prev.data(), u.value.ptr(), d_gh.data(), 3 * H, H, d_h_prev,
                             grads[u.index].ptr(), grads[c.index].ptr());
}

void GruCell::collect_parameters(std::vector<Parameter*>& out) {
    out.push_back(&w);
    out.push_back(&u);
    out.push_back(&b);
    out.push_back(&c);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

ModelConfig ModelConfig::tiny(int vocab) {
    ModelConfig cfg;
    cfg.embed_dim = 32;
    cfg.word_embed_dim = 32;
    cfg.rnn_hidden = 32;
    cfg.vocab_size = vocab;
    cfg.crop_size = 32;
    cfg.backbone = "tiny";
    cfg.pretrained = false;
    return cfg;
}

bool ModelConfig::valid() const {
    return embed_dim > 0 && word_embed_dim > 0 && rnn_hidden > 0 && vocab_size >= 2 && k >= 1 &&
           crop_size > 0;
}

Model::Model(ModelConfig config, unsigned seed) : config_(std::move(config)) {
    if (!config_.valid()) throw std::runtime_error("invalid model config");
    std::mt19937 rng(seed);
    embedding_ = make_param("embedding", {config_.vocab_size, config_.word_embed_dim}, 1.0, rng);
    gru_fwd_.init(config_.word_embed_dim, config_.rnn_hidden, "gru_fwd", rng);
    gru_bwd_.init(config_.word_embed_dim, config_.rnn_hidden, "gru_bwd", rng);
    double tb = std::sqrt(1.0 / (2.0 * config_.rnn_hidden));
    text_w_ = make_param("text_proj.w", {config_.embed_dim, 2 * config_.rnn_hidden}, tb, rng);
    text_b_ = make_param("text_proj.b", {config_.embed_dim}, 0.0, rng);
    backbone_ = make_backbone(config_.backbone, rng);
    double rb = std::sqrt(1.0 / backbone_->feature_dim());
    region_w_ = make_param("region_proj.w", {config_.embed_dim, backbone_->feature_dim()}, rb, rng);
    region_b_ = make_param("region_proj.b", {config_.embed_dim}, 0.0, rng);

    params_.push_back(&embedding_);
    gru_fwd_.collect_parameters(params_);
    gru_bwd_.collect_parameters(params_);
    params_.push_back(&text_w_);
    params_.push_back(&text_b_);
    backbone_->collect_parameters(params_);
    params_.push_back(&region_w_);
    params_.push_back(&region_b_);
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->index = static_cast<int>(i);
}

Parameter* Model::find_parameter(const std::string& name) const {
    for (Parameter* p : params_)
        if (p->name == name) return p;
    return nullptr;
}

Model::CommandCache Model::encode_command(const std::vector<int>& token_ids, int length,
                                          bool /*parallel*/) const {
    if (length < 1 || length > static_cast<int>(token_ids.size()))
        throw std::runtime_error("encode_command: length out of range");
    const int H = config_.rnn_hidden;
    const int E = config_.word_embed_dim;
    const int D = config_.embed_dim;

    CommandCache cc;
    cc.length = length;
    cc.ids.assign(token_ids.begin(), token_ids.begin() + length);
    cc.x.resize(length);
    for (int t = 0; t < length; ++t) {
        int id = cc.ids[t];
        if (id < 0 || id >= config_.vocab_size)
            throw std::runtime_error("token id out of vocabulary range");
        const double* row = embedding_.value.ptr() + static_cast<std::size_t>(id) * E;
        cc.x[t].assign(row, row + E);
    }

    cc.fwd_steps.resize(length);
    cc.bwd_steps.resize(length);
    std::vector<double> h_f(H, 0.0), h_b(H, 0.0), h_next(H);
    for (int t = 0; t < length; ++t) {
        gru_fwd_.step(cc.x[t].data(), h_f.data(), h_next.data(), &cc.fwd_steps[t]);
        h_f = h_next;
    }
    for (int j = 0; j < length; ++j) {
        int t = length - 1 - j;
        gru_bwd_.step(cc.x[t].data(), h_b.data(), h_next.data(), &cc.bwd_steps[j]);
        h_b = h_next;
    }

    cc.summary.resize(2 * H);
    std::copy(h_f.begin(), h_f.end(), cc.summary.begin());
    std::copy(h_b.begin(), h_b.end(), cc.summary.begin() + H);
    cc.pre.assign(D, 0.0);
    kernels::linear_forward_serial(cc.summary.data(), text_w_.value.ptr(), text_b_.value.ptr(), D,
                                   2 * H, cc.pre.data());
    cc.out.assign(D, 0.0);
    cc.norm = kernels::l2_normalize(cc.pre.data(), D, cc.out.data());
    return cc;
}

void Model::normalize_crop(const Tensor& raw, Tensor& out) const {
    out = Tensor(raw.shape);
    const int hw = raw.shape[1] * raw.shape[2];
    for (int c = 0; c < 3; ++c) {
        const double mean = channel_mean_[c], inv_std = 1.0 / channel_std_[c];
        const double* in = raw.ptr() + static_cast<std::size_t>(c) * hw;
        double* o = out.ptr() + static_cast<std::size_t>(c) * hw;
        for (int i = 0; i < hw; ++i) o[i] = (in[i] - mean) * inv_std;
    }
}

Model::RegionCache Model::encode_region_crop(const Tensor& raw_crop, bool parallel) const {
    const int D = config_.embed_dim;
    RegionCache rc;
    normalize_crop(raw_crop, rc.crop_norm);
    rc.backbone = backbone_->forward(rc.crop_norm, rc.feat, parallel);
    rc.pre.assign(D, 0.0);
    kernels::linear_forward(rc.feat.data(), region_w_.value.ptr(), region_b_.value.ptr(), D,
                            backbone_->feature_dim(), rc.pre.data(), parallel);
    rc.out.assign(D, 0.0);
    rc.norm = kernels::l2_normalize(rc.pre.data(), D, rc.out.data());
    return rc;
}

Tensor Model::make_crop(const ImageBuffer& image, const Box& box) const {
    return crop_resize(image, box, config_.crop_size);
}

std::vector<std::vector<double>> Model::encode_regions(const ImageBuffer& image,
                                                       const std::vector<Box>& boxes,
                                                       bool parallel) const {
    std::vector<std::vector<double>> rows;
    rows.reserve(boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        Tensor crop;
        try {
            crop = make_crop(image, boxes[i]);
        } catch (const std::exception& e) {
            throw std::runtime_error("encode_regions: box " + std::to_string(i) + ": " + e.what());
        }
        rows.push_back(encode_region_crop(crop, parallel).out);
    }
    return rows;
}

std::vector<double> Model::score(const std::vector<std::vector<double>>& regions,
                                 const std::vector<double>& command) {
    std::vector<double> scores;
    scores.reserve(regions.size());
    for (const auto& u : regions) {
        if (u.size() != command.size())
            throw std::runtime_error("score: embedding dimension mismatch");
        double dot = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * command[i];
        scores.push_back(std::clamp((dot + 1.0) / 2.0, 0.0, 1.0));
    }
    return scores;
}

std::vector<ScoredRegion> Model::forward(const Sample& sample, bool parallel) const {
    if (sample.proposals.empty()) throw std::runtime_error("forward: sample has no proposals");
    SampleCache cache;
    std::vector<double> scores = forward_cached(sample, {}, cache, parallel);
    std::vector<ScoredRegion> out;
    out.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        out.push_back({sample.proposals[i].box, scores[i]});
    return out;
}

std::vector<double> Model::forward_cached(const Sample& sample,
                                          const std::vector<Tensor>& raw_crops,
                                          SampleCache& cache, bool parallel) const {
    if (sample.proposals.empty()) throw std::runtime_error("sample has no proposals");
    cache.command = encode_command(sample.token_ids, sample.token_length, parallel);

    const std::size_t n = sample.proposals.size();
    cache.regions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!raw_crops.empty()) {
            cache.regions[i] = encode_region_crop(raw_crops[i], parallel);
        } else {
            if (!sample.pixels) throw std::runtime_error("sample has no pixel data");
            cache.regions[i] = encode_region_crop(make_crop(*sample.pixels,
                                                            sample.proposals[i].box),
                                                  parallel);
        }
    }

    cache.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int d = 0; d < config_.embed_dim; ++d)
            dot += cache.regions[i].out[d] * cache.command.out[d];
        cache.scores[i] = std::clamp((dot + 1.0) / 2.0, 0.0, 1.0);
    }
    return cache.scores;
}

void Model::backward(const SampleCache& cache, const std::vector<double>& d_scores,
                     GradBuffer& grads, bool parallel) const {
    const int D = config_.embed_dim;
    const int H = config_.rnn_hidden;
    const int F = backbone_->feature_dim();
    const CommandCache& cc = cache.command;

    std::vector<double> d_cmd_out(D, 0.0);
    for (std::size_t i = 0; i < cache.regions.size(); ++i) {
        const RegionCache& rc = cache.regions[i];
        double g = 0.5 * d_scores[i];
        if (g == 0.0) continue;
        std::vector<double> d_reg_out(D);
        for (int d = 0; d < D; ++d) {
            d_reg_out[d] = g * cc.out[d];
            d_cmd_out[d] += g * rc.out[d];
        }
        std::vector<double> d_pre(D, 0.0);
        kernels::l2_normalize_backward(rc.out.data(), rc.norm, d_reg_out.data(), D, d_pre.data());
        std::vector<double> d_feat(F, 0.0);
        kernels::linear_backward(rc.feat.data(), region_w_.value.ptr(), d_pre.data(), D, F,
                                 d_feat.data(), grads[region_w_.index].ptr(),
                                 grads[region_b_.index].ptr());
        backbone_->backward(*rc.backbone, d_feat.data(), grads, parallel);
    }

    std::vector<double> d_cmd_pre(D, 0.0);
    kernels::l2_normalize_backward(cc.out.data(), cc.norm, d_cmd_out.data(), D, d_cmd_pre.data());
    std::vector<double> d_summary(2 * H, 0.0);
    kernels::linear_backward(cc.summary.data(), text_w_.value.ptr(), d_cmd_pre.data(), D, 2 * H,
                             d_summary.data(), grads[text_w_.index].ptr(),
                             grads[text_b_.index].ptr());

    const int L = cc.length;
    const int E = config_.word_embed_dim;
    std::vector<std::vector<double>> d_x(L, std::vector<double>(E, 0.0));

    std::vector<double> d_h(d_summary.begin(), d_summary.begin() + H);
    for (int t = L - 1; t >= 0; --t) {
        std::vector<double> d_h_prev(H, 0.0);
        gru_fwd_.step_backward(cc.fwd_steps[t], cc.x[t].data(), d_h.data(), d_h_prev.data(),
                               d_x[t].data(), grads);
        d_h = std::move(d_h_prev);
    }
    d_h.assign(d_summary.begin() + H, d_summary.end());
    for (int j = L - 1; j >= 0; --j) {
        int t = L - 1 - j;
        std::vector<double> d_h_prev(H, 0.0);
        gru_bwd_.step_backward(cc.bwd_steps[j], cc.x[t].data(), d_h.data(), d_h_prev.data(),
                               d_x[t].data(), grads);
        d_h = std::move(d_h_prev);
    }

    Tensor& d_emb = grads[embedding_.index];
    for (int t = 0; t < L; ++t) {
        double* row = d_emb.ptr() + static_cast<std::size_t>(cc.ids[t]) * E;
        for (int e = 0; e < E; ++e) row[e] += d_x[t][e];
    }
}

}  // namespace c4av
