#pragma once

// CTC-supervised semantic tokenizer: strided conv front-end taking 100 Hz
// log-mel to 25 Hz, two transformer layers, and an FSQ head with 1024 codes.
// Trained once with a small CTC head, then frozen; the head is kept in a side
// file for evaluation only.

#include "dstok/corpus.hpp"
#include "dstok/ctc.hpp"
#include "dstok/fsq.hpp"
#include "dstok/nn.hpp"

namespace dstok {

struct SemanticConfig {
    int n_mels = 80;
    int dim = 128;
    int heads = 4;
    int n_layers = 2;
    int ffn_inner = 256;
    int n_symbols = 16; // K; the CTC head emits K+1 with blank = K
    FsqConfig fsq{4, 5, 1};
    float input_scale = 3.0f;

    int blank_id() const { return n_symbols; }
};

Tensor mel_to_tensor(const MelSpec & mel);

class SemanticTokenizer {
  public:
    SemanticTokenizer() = default;
    SemanticTokenizer(const SemanticConfig & cfg, uint64_t init_seed);

    const SemanticConfig & config() const { return cfg_; }

    // per-utterance mean-per-bin normalization of the log-mel input
    Tensor input_features(Graph & g, const MelSpec & mel) const;

    // [T_s, C] quantized features; T_s = floor(T_mel/4)
    Tensor quantized(Graph & g, const Tensor & feats, std::vector<int64_t> * ids = nullptr) const;

    // CTC head on top of the quantized features, [T_s, K+1] log-probs
    Tensor ctc_log_probs(Graph & g, const Tensor & feats) const;

    // token ids for a mel; deterministic; errors if the input is shorter
    // than one 25 Hz frame
    std::vector<int> encode(const MelSpec & mel) const;

    void collect_encoder_params(ParamMap & pm) const;
    void collect_head_params(ParamMap & pm) const;

    void set_frozen(bool frozen);
    bool frozen() const { return frozen_; }

    // encoder+FSQ only; the CTC head goes to its own side file
    void save(const std::string & path) const;
    void save_head(const std::string & path) const;
    static SemanticTokenizer load(const std::string & path, const SemanticConfig & cfg);
    void load_head(const std::string & path);

  private:
    SemanticConfig cfg_;
    Conv1dLayer conv1_, conv2_;
    std::vector<EncoderBlock> blocks_;
    LayerNormLayer ln_;
    Linear to_fsq_;
    Linear head1_, head2_;
    bool frozen_ = false;
};

struct SemanticTrainConfig {
    int steps = 3000;
    int batch_size = 8;
    AdamWConfig opt{1e-3f, 0.9f, 0.999f, 1e-8f, 0.01f, 200};
    uint64_t seed = 0;
    int eval_utts = 64; // held-out subset used for the before/after loss
};

struct SemanticTrainResult {
    double initial_holdout_loss = 0.0;
    double final_holdout_loss = 0.0;
};

// trains encoder+FSQ+CTC head end-to-end on the train split and freezes the
// tokenizer afterwards; NaN losses abort with a diagnostic
SemanticTrainResult train_semantic(SemanticTokenizer & tok, const CorpusManifest & corpus,
                                   const MelConfig & mel_cfg, const SemanticTrainConfig & cfg,
                                   const StepLogger & log = nullptr);

// mean CTC loss of the tokenizer over the given utterances
double semantic_holdout_loss(const SemanticTokenizer & tok, const CorpusManifest & corpus,
                             const MelConfig & mel_cfg, Split split, int max_utts);

} // namespace dstok
