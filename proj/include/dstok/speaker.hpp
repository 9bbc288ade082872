#pragma once

// Speaker side of the model: masked attentive statistics pooling over
// acoustic embeddings, the cosine speaker-consistency loss, and a small
// frozen reference style encoder trained as a speaker classifier.

#include "dstok/corpus.hpp"
#include "dstok/nn.hpp"

namespace dstok {

struct AspConfig {
    int dim = 128;      // D, feature dim of the pooled sequence
    int attn_dim = 128; // D_attn bottleneck
    int out_dim = 256;  // pooled embedding size
    float eps = 1e-5f;
};

// S = W2·tanh(W1·X + b1) + b2, masked softmax over time, weighted mean and
// std, projected to out_dim
struct AttnStatsPool {
    Linear w1; // [attn_dim, dim]
    Linear w2; // [dim, attn_dim]
    Linear proj; // [out_dim, 2*dim]
    AspConfig cfg;

    AttnStatsPool() = default;
    AttnStatsPool(const AspConfig & cfg, Rng & rng);
    // e_a [T,D], 1 <= valid_len <= T -> [out_dim]
    Tensor forward(Graph & g, const Tensor & e_a, int valid_len) const;
    void params(const std::string & prefix, ParamMap & pm) const;
};

// 1 - cos(s_ref, h); both vectors must be nonzero
Tensor speaker_loss(Graph & g, const Tensor & s_ref, const Tensor & h);

struct RefEncoderConfig {
    int n_mels = 80;
    int dim = 128;
    int embed_dim = 256;
    int n_speakers = 32;
    float mel_mean = -5.0f;
    float mel_scale = 3.0f;
};

// conv classifier over mel; the penultimate 256-d embedding (L2-normalized)
// is the reference speaker vector
class RefStyleEncoder {
  public:
    RefStyleEncoder() = default;
    RefStyleEncoder(const RefEncoderConfig & cfg, uint64_t init_seed);

    const RefEncoderConfig & config() const { return cfg_; }

    // [n_speakers] logits for training
    Tensor logits(Graph & g, const MelSpec & mel) const;
    // deterministic unit-norm embedding; errors if not trained
    Tensor embed(const MelSpec & mel) const;

    void collect_params(ParamMap & pm) const;
    void set_frozen(bool frozen);
    bool trained() const { return trained_; }

    void save(const std::string & path) const;
    static RefStyleEncoder load(const std::string & path, const RefEncoderConfig & cfg);

  private:
    Tensor embed_graph(Graph & g, const MelSpec & mel) const;

    RefEncoderConfig cfg_;
    Conv1dLayer conv1_, conv2_, conv3_;
    Linear fc_embed_;
    Linear fc_cls_;
    bool trained_ = false;
};

struct RefTrainConfig {
    int steps = 1200;
    int batch_size = 16;
    AdamWConfig opt{1e-3f, 0.9f, 0.999f, 1e-8f, 0.01f, 100};
    uint64_t seed = 0;
};

struct RefTrainResult {
    double holdout_accuracy = 0.0;
};

RefTrainResult train_ref_encoder(RefStyleEncoder & enc, const CorpusManifest & corpus,
                                 const MelConfig & mel_cfg, const RefTrainConfig & cfg,
                                 const StepLogger & log = nullptr);

} // namespace dstok
