#include "dstok/semantic.hpp"

#include "dstok/checkpoint.hpp"

#include <cmath>

namespace dstok {

Tensor mel_to_tensor(const MelSpec & mel) {
    DSTOK_CHECK(mel.t >= 1 && mel.n_mels >= 1, "mel_to_tensor: empty mel");
    return Tensor::from({mel.t, mel.n_mels}, mel.frames);
}

SemanticTokenizer::SemanticTokenizer(const SemanticConfig & cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.fsq.validate();
    Rng rng(init_seed);
    conv1_ = Conv1dLayer(cfg.n_mels, cfg.dim, 4, 2, 1, rng);
    conv2_ = Conv1dLayer(cfg.dim, cfg.dim, 4, 2, 1, rng);
    blocks_.reserve((size_t)cfg.n_layers);
    for (int i = 0; i < cfg.n_layers; ++i)
        blocks_.emplace_back(cfg.dim, cfg.heads, cfg.ffn_inner, rng);
    ln_ = LayerNormLayer(cfg.dim);
    to_fsq_ = Linear(cfg.dim, cfg.fsq.channels, rng);
    head1_ = Linear(cfg.fsq.channels, cfg.dim, rng);
    head2_ = Linear(cfg.dim, cfg.n_symbols + 1, rng);
}

Tensor SemanticTokenizer::input_features(Graph & g, const MelSpec & mel) const {
    Tensor x = mel_to_tensor(mel);
    // per-utterance mean per mel bin; standard ASR-style normalization that
    // strips level and average tilt from the semantic branch
    Tensor mean = scale(g, colsum(g, x), 1.0f / (float)mel.t);
    Tensor centered = sub(g, x, mean);
    return scale(g, centered, 1.0f / cfg_.input_scale);
}

Tensor SemanticTokenizer::quantized(Graph & g, const Tensor & feats,
                                    std::vector<int64_t> * ids) const {
    DSTOK_CHECK(feats.rank() == 2 && feats.dim(1) == cfg_.n_mels,
                "semantic: features must be [T,%d]", cfg_.n_mels);
    Tensor h = gelu_op(g, conv1_.forward(g, feats));
    h = gelu_op(g, conv2_.forward(g, h));
    for (const auto & block : blocks_) h = block.forward(g, h);
    h = ln_.forward(g, h);
    Tensor pre = to_fsq_.forward(g, h);
    std::vector<std::vector<int64_t>> flat;
    Tensor q = fsq_forward(g, pre, cfg_.fsq, ids ? &flat : nullptr);
    if (ids) *ids = std::move(flat[0]);
    return q;
}

Tensor SemanticTokenizer::ctc_log_probs(Graph & g, const Tensor & feats) const {
    Tensor q = quantized(g, feats);
    Tensor h = gelu_op(g, head1_.forward(g, q));
    return log_softmax_rows(g, head2_.forward(g, h));
}

std::vector<int> SemanticTokenizer::encode(const MelSpec & mel) const {
    DSTOK_CHECK(mel.t >= 4, "encode_semantic: input shorter than one 25 Hz frame");
    Graph g(false);
    std::vector<int64_t> ids;
    quantized(g, input_features(g, mel), &ids);
    std::vector<int> out(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) out[i] = (int)ids[i];
    return out;
}

void SemanticTokenizer::collect_encoder_params(ParamMap & pm) const {
    conv1_.params("semantic/conv1", pm);
    conv2_.params("semantic/conv2", pm);
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].params("semantic/block" + std::to_string(i), pm);
    ln_.params("semantic/ln", pm);
    to_fsq_.params("semantic/to_fsq", pm);
}

void SemanticTokenizer::collect_head_params(ParamMap & pm) const {
    head1_.params("semantic_head/h1", pm);
    head2_.params("semantic_head/h2", pm);
}

void SemanticTokenizer::set_frozen(bool frozen) {
    frozen_ = frozen;
    ParamMap pm;
    collect_encoder_params(pm);
    collect_head_params(pm);
    pm.set_requires_grad(!frozen);
}

void SemanticTokenizer::save(const std::string & path) const {
    ParamMap pm;
    collect_encoder_params(pm);
    save_checkpoint(path, pm.items);
}

void SemanticTokenizer::save_head(const std::string & path) const {
    ParamMap pm;
    collect_head_params(pm);
    save_checkpoint(path, pm.items);
}

SemanticTokenizer SemanticTokenizer::load(const std::string & path, const SemanticConfig & cfg) {
    SemanticTokenizer tok(cfg, 0);
    const NamedArrays arrays = load_checkpoint(path);
    ParamMap pm;
    tok.collect_encoder_params(pm);
    load_into_params(arrays, pm);
    tok.set_frozen(true);
    return tok;
}

void SemanticTokenizer::load_head(const std::string & path) {
    const NamedArrays arrays = load_checkpoint(path);
    ParamMap pm;
    collect_head_params(pm);
    load_into_params(arrays, pm);
}

// ---------------------------------------------------------------------------

double semantic_holdout_loss(const SemanticTokenizer & tok, const CorpusManifest & corpus,
                             const MelConfig & mel_cfg, Split split, int max_utts) {
    const std::vector<size_t> idx = split_indices(corpus, split);
    DSTOK_CHECK(!idx.empty(), "semantic_holdout_loss: empty split");
    const int n = std::min((int)idx.size(), max_utts);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const Utterance & u = corpus.utterances[idx[(size_t)i]];
        const Waveform wave = read_wav(utt_wav_path(corpus, u));
        const MelSpec mel = stft_mel(wave, mel_cfg);
        Graph g(false);
        Tensor lp = tok.ctc_log_probs(g, tok.input_features(g, mel));
        acc += ctc_loss(g, lp, u.content, tok.config().blank_id()).item_precise();
    }
    return acc / n;
}

SemanticTrainResult train_semantic(SemanticTokenizer & tok, const CorpusManifest & corpus,
                                   const MelConfig & mel_cfg, const SemanticTrainConfig & cfg,
                                   const StepLogger & log) {
    DSTOK_CHECK(!tok.frozen(), "train_semantic: tokenizer already frozen");
    const std::vector<size_t> train_idx = split_indices(corpus, Split::train);
    DSTOK_CHECK((int)train_idx.size() >= cfg.batch_size, "train_semantic: corpus too small");

    // cache mel features once; the corpus fits desk-scale memory
    std::vector<MelSpec> mels(corpus.utterances.size());
    for (size_t i = 0; i < corpus.utterances.size(); ++i) {
        const Waveform wave = read_wav(utt_wav_path(corpus, corpus.utterances[i]));
        mels[i] = stft_mel(wave, mel_cfg);
    }

    SemanticTrainResult result;
    result.initial_holdout_loss =
        semantic_holdout_loss(tok, corpus, mel_cfg, Split::val, cfg.eval_utts);

    ParamMap pm;
    tok.collect_encoder_params(pm);
    tok.collect_head_params(pm);
    pm.set_requires_grad(true);
    AdamW opt(cfg.opt, pm);

    Rng rng(Rng::derive(cfg.seed, 10, 0));
    const int blank = tok.config().blank_id();
    for (int step = 1; step <= cfg.steps; ++step) {
        pm.zero_grads();
        Graph g;
        Tensor loss;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t pick = train_idx[(size_t)rng.uniform_u64(train_idx.size())];
            const Utterance & u = corpus.utterances[pick];
            Tensor lp = tok.ctc_log_probs(g, tok.input_features(g, mels[pick]));
            Tensor l = ctc_loss(g, lp, u.content, blank);
            loss = b == 0 ? l : add(g, loss, l);
        }
        loss = scale(g, loss, 1.0f / (float)cfg.batch_size);
        DSTOK_CHECK(std::isfinite(loss.item()), "train_semantic: loss diverged (NaN) at step %d",
                    step);
        g.backward(loss);
        opt.step();
        if (log) log(step, loss.item_precise());
    }

    result.final_holdout_loss =
        semantic_holdout_loss(tok, corpus, mel_cfg, Split::val, cfg.eval_utts);
    tok.set_frozen(true);
    return result;
}

} // namespace dstok
