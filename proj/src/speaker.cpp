#include "dstok/speaker.hpp"

#include "dstok/checkpoint.hpp"
#include "dstok/semantic.hpp"

#include <cmath>

namespace dstok {

AttnStatsPool::AttnStatsPool(const AspConfig & cfg_, Rng & rng)
    : w1(cfg_.dim, cfg_.attn_dim, rng), w2(cfg_.attn_dim, cfg_.dim, rng),
      proj(2 * cfg_.dim, cfg_.out_dim, rng), cfg(cfg_) {}

Tensor AttnStatsPool::forward(Graph & g, const Tensor & e_a, int valid_len) const {
    DSTOK_CHECK(e_a.rank() == 2 && e_a.dim(1) == cfg.dim, "attn_pool: input must be [T,%d]",
                cfg.dim);
    DSTOK_CHECK(valid_len >= 1 && valid_len <= e_a.dim(0),
                "attn_pool: valid_len %d outside [1,%d]", valid_len, e_a.dim(0));
    // S = W2 tanh(W1 X + b1) + b2, then masked softmax along time per channel
    Tensor s = w2.forward(g, tanh_op(g, w1.forward(g, e_a)));
    Tensor alpha = masked_softmax_time(g, s, valid_len);
    Tensor mu = colsum(g, mul(g, alpha, e_a));           // [D]
    Tensor centered = sub(g, e_a, mu);                   // broadcast over rows
    Tensor var = colsum(g, mul(g, alpha, mul(g, centered, centered)));
    Tensor sigma = sqrt_op(g, add_const(g, var, cfg.eps));
    Tensor stats = concat_cols(g, mu, sigma);            // [2D]
    return proj.forward(g, stats);                       // [out_dim]
}

void AttnStatsPool::params(const std::string & prefix, ParamMap & pm) const {
    w1.params(prefix + ".w1", pm);
    w2.params(prefix + ".w2", pm);
    proj.params(prefix + ".proj", pm);
}

Tensor speaker_loss(Graph & g, const Tensor & s_ref, const Tensor & h) {
    DSTOK_CHECK(s_ref.numel() == h.numel(), "speaker_loss: dim mismatch");
    Tensor cos = cosine_sim(g, s_ref, h);
    return add_const(g, scale(g, cos, -1.0f), 1.0f);
}

// ---------------------------------------------------------------------------

RefStyleEncoder::RefStyleEncoder(const RefEncoderConfig & cfg, uint64_t init_seed) : cfg_(cfg) {
    Rng rng(init_seed);
    conv1_ = Conv1dLayer(cfg.n_mels, cfg.dim, 4, 2, 1, rng);
    conv2_ = Conv1dLayer(cfg.dim, cfg.dim, 4, 2, 1, rng);
    conv3_ = Conv1dLayer(cfg.dim, cfg.dim, 3, 1, 1, rng);
    fc_embed_ = Linear(2 * cfg.dim, cfg.embed_dim, rng);
    fc_cls_ = Linear(cfg.embed_dim, cfg.n_speakers, rng);
}

Tensor RefStyleEncoder::embed_graph(Graph & g, const MelSpec & mel) const {
    Tensor x = mel_to_tensor(mel);
    x = scale(g, add_const(g, x, -cfg_.mel_mean), 1.0f / cfg_.mel_scale);
    Tensor h = gelu_op(g, conv1_.forward(g, x));
    h = gelu_op(g, conv2_.forward(g, h));
    h = gelu_op(g, conv3_.forward(g, h));
    // mean and max-free std pooling over time keeps style statistics
    const int t = h.dim(0);
    Tensor mean = scale(g, colsum(g, h), 1.0f / (float)t);
    Tensor centered = sub(g, h, mean);
    Tensor var = scale(g, colsum(g, mul(g, centered, centered)), 1.0f / (float)t);
    Tensor sd = sqrt_op(g, add_const(g, var, 1e-5f));
    Tensor stats = concat_cols(g, mean, sd);
    return fc_embed_.forward(g, stats); // [embed_dim]
}

Tensor RefStyleEncoder::logits(Graph & g, const MelSpec & mel) const {
    Tensor e = tanh_op(g, embed_graph(g, mel));
    return fc_cls_.forward(g, e);
}

Tensor RefStyleEncoder::embed(const MelSpec & mel) const {
    DSTOK_CHECK(trained_, "ref_style_embed: encoder is not trained");
    Graph g(false);
    Tensor e = tanh_op(g, embed_graph(g, mel));
    // L2 normalize
    double n2 = 0.0;
    for (int64_t i = 0; i < e.numel(); ++i) n2 += (double)e.at(i) * e.at(i);
    DSTOK_CHECK(n2 > 1e-24, "ref_style_embed: zero embedding");
    const float inv = (float)(1.0 / std::sqrt(n2));
    Tensor out(e.shape());
    for (int64_t i = 0; i < e.numel(); ++i) out.set(i, e.at(i) * inv);
    return out;
}

void RefStyleEncoder::collect_params(ParamMap & pm) const {
    conv1_.params("ref/conv1", pm);
    conv2_.params("ref/conv2", pm);
    conv3_.params("ref/conv3", pm);
    fc_embed_.params("ref/embed", pm);
    fc_cls_.params("ref/cls", pm);
}

void RefStyleEncoder::set_frozen(bool frozen) {
    ParamMap pm;
    collect_params(pm);
    pm.set_requires_grad(!frozen);
}

void RefStyleEncoder::save(const std::string & path) const {
    ParamMap pm;
    collect_params(pm);
    save_checkpoint(path, pm.items);
}

RefStyleEncoder RefStyleEncoder::load(const std::string & path, const RefEncoderConfig & cfg) {
    RefStyleEncoder enc(cfg, 0);
    ParamMap pm;
    enc.collect_params(pm);
    load_into_params(load_checkpoint(path), pm);
    enc.trained_ = true;
    enc.set_frozen(true);
    return enc;
}

RefTrainResult train_ref_encoder(RefStyleEncoder & enc, const CorpusManifest & corpus,
                                 const MelConfig & mel_cfg, const RefTrainConfig & cfg,
                                 const StepLogger & log) {
    const std::vector<size_t> train_idx = split_indices(corpus, Split::train);
    DSTOK_CHECK((int)train_idx.size() >= cfg.batch_size, "train_ref_encoder: corpus too small");

    std::vector<MelSpec> mels(corpus.utterances.size());
    for (size_t i = 0; i < corpus.utterances.size(); ++i)
        mels[i] = stft_mel(read_wav(utt_wav_path(corpus, corpus.utterances[i])), mel_cfg);

    ParamMap pm;
    enc.collect_params(pm);
    pm.set_requires_grad(true);
    AdamW opt(cfg.opt, pm);

    Rng rng(Rng::derive(cfg.seed, 11, 0));
    for (int step = 1; step <= cfg.steps; ++step) {
        pm.zero_grads();
        Graph g;
        Tensor loss;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t pick = train_idx[(size_t)rng.uniform_u64(train_idx.size())];
            const Utterance & u = corpus.utterances[pick];
            DSTOK_CHECK(u.style.speaker_id < enc.config().n_speakers,
                        "train_ref_encoder: speaker id %d out of range", u.style.speaker_id);
            Tensor lp = log_softmax_rows(g, enc.logits(g, mels[pick]));
            Tensor l = nll_index(g, lp, u.style.speaker_id);
            loss = b == 0 ? l : add(g, loss, l);
        }
        loss = scale(g, loss, 1.0f / (float)cfg.batch_size);
        DSTOK_CHECK(std::isfinite(loss.item()), "train_ref_encoder: loss diverged at step %d", step);
        g.backward(loss);
        opt.step();
        if (log) log(step, loss.item_precise());
    }
    enc.trained_ = true;
    enc.set_frozen(true);

    // held-out top-1 accuracy
    int correct = 0, total = 0;
    for (size_t i : split_indices(corpus, Split::val)) {
        Graph g(false);
        Tensor lg = enc.logits(g, mels[i]);
        int best = 0;
        for (int v = 1; v < lg.cols(); ++v)
            if (lg.at(v) > lg.at(best)) best = v;
        correct += best == corpus.utterances[i].style.speaker_id ? 1 : 0;
        ++total;
    }
    RefTrainResult res;
    res.holdout_accuracy = total > 0 ? (double)correct / total : 0.0;
    return res;
}

} // namespace dstok
