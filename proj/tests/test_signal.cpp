#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dstok/corpus.hpp"
#include "dstok/signal.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dstok;

static Waveform make_tone(double hz, double seconds, double amp = 0.4) {
    Waveform w;
    w.sample_rate = 16000;
    const size_t n = (size_t)(seconds * w.sample_rate);
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
        w.samples[i] = (float)(amp * std::sin(2.0 * M_PI * hz * i / w.sample_rate));
    return w;
}

TEST_CASE("stft frame count follows the padded-length formula") {
    MelConfig cfg;
    for (int64_t len : {400, 401, 1000, 15999, 16000, 16001, 44100}) {
        Waveform w;
        w.samples.assign((size_t)len, 0.0f);
        MelSpec mel = stft_mel(w, cfg);
        const int64_t padded = len + 2 * (cfg.win_length / 2);
        CHECK(mel.t == 1 + (padded - cfg.win_length) / cfg.hop_length);
        CHECK(mel.t == stft_frame_count(len, cfg));
    }
}

TEST_CASE("one second at 16 kHz, hop 160 -> 100 Hz frames, T within 100..101") {
    MelConfig cfg;
    Waveform w = make_tone(440.0, 1.0);
    MelSpec mel = stft_mel(w, cfg);
    CHECK(mel.frame_rate == doctest::Approx(100.0f));
    CHECK(mel.t >= 100);
    CHECK(mel.t <= 101);
}

TEST_CASE("digital silence maps every cell to log(floor)") {
    MelConfig cfg;
    Waveform w;
    w.samples.assign(16000, 0.0f);
    MelSpec mel = stft_mel(w, cfg);
    const float expect = std::log(cfg.floor_energy);
    for (float v : mel.frames) CHECK(v == doctest::Approx(expect));
}

TEST_CASE("pure 440 Hz tone peaks at the mel filter centered nearest 440 Hz") {
    MelConfig cfg;
    // oracle: locate the filter whose peak response covers 440 Hz
    const std::vector<float> fb = mel_filterbank(cfg);
    const int bins = cfg.n_bins();
    const int bin440 = (int)std::lround(440.0 * cfg.n_fft / cfg.sample_rate);
    int expect = 0;
    float best = -1.0f;
    for (int m = 0; m < cfg.n_mels; ++m) {
        if (fb[(size_t)m * bins + bin440] > best) {
            best = fb[(size_t)m * bins + bin440];
            expect = m;
        }
    }
    Waveform w = make_tone(440.0, 0.5);
    MelSpec mel = stft_mel(w, cfg);
    const int mid = mel.t / 2;
    int argmax = 0;
    for (int m = 1; m < mel.n_mels; ++m)
        if (mel.at(mid, m) > mel.at(mid, argmax)) argmax = m;
    CHECK(argmax == expect);
}

TEST_CASE("mel filterbank: non-negative, each fft bin's column sums to <= 1") {
    MelConfig cfg;
    const std::vector<float> fb = mel_filterbank(cfg);
    const int bins = cfg.n_bins();
    for (float v : fb) CHECK(v >= 0.0f);
    for (int k = 0; k < bins; ++k) {
        double col = 0.0;
        for (int m = 0; m < cfg.n_mels; ++m) col += fb[(size_t)m * bins + k];
        CHECK(col <= 1.0 + 1e-6);
    }
}

TEST_CASE("griffin-lim reduces re-analysis error on a tone and is deterministic") {
    MelConfig cfg;
    Waveform tone = make_tone(330.0, 0.6);
    MelSpec target = stft_mel(tone, cfg);

    Waveform w0 = griffin_lim_baseline(target, cfg, 5);
    Waveform w32 = griffin_lim(target, cfg, 32, 5);
    const double err0 = mel_l2(stft_mel(w0, cfg), target);
    const double err32 = mel_l2(stft_mel(w32, cfg), target);
    CHECK(err32 < 0.5 * err0);
    // every iteration count beats the unprojected baseline
    CHECK(mel_l2(stft_mel(griffin_lim(target, cfg, 1, 5), cfg), target) < err0);

    Waveform w32b = griffin_lim(target, cfg, 32, 5);
    REQUIRE(w32.samples.size() == w32b.samples.size());
    for (size_t i = 0; i < w32.samples.size(); ++i) REQUIRE(w32.samples[i] == w32b.samples[i]);

    CHECK_THROWS_AS(griffin_lim(target, cfg, 0, 5), dstok::error);
}

TEST_CASE("griffin-lim of a silence mel is near-silent") {
    MelConfig cfg;
    MelSpec mel;
    mel.t = 50;
    mel.n_mels = cfg.n_mels;
    mel.frames.assign((size_t)mel.t * mel.n_mels, std::log(cfg.floor_energy));
    Waveform w = griffin_lim(mel, cfg, 8, 0);
    double rms = 0.0;
    for (float s : w.samples) rms += (double)s * s;
    rms = std::sqrt(rms / (double)w.samples.size());
    CHECK(rms < 1e-3);
}

TEST_CASE("wav files round-trip") {
    Waveform w = make_tone(200.0, 0.1);
    const std::string path = "/tmp/dstok_test_roundtrip.wav";
    write_wav(path, w);
    Waveform r = read_wav(path);
    CHECK(r.sample_rate == w.sample_rate);
    REQUIRE(r.samples.size() == w.samples.size());
    for (size_t i = 0; i < r.samples.size(); ++i)
        CHECK(std::fabs(r.samples[i] - w.samples[i]) < 1.0f / 32000.0f);
}

TEST_CASE("mel dump round-trips bit-exactly") {
    MelConfig cfg;
    Waveform w = make_tone(523.0, 0.3);
    MelSpec mel = stft_mel(w, cfg);
    const std::string path = "/tmp/dstok_test_mel.bin";
    write_mel_dump(path, mel);
    MelSpec r = read_mel_dump(path);
    REQUIRE(r.t == mel.t);
    REQUIRE(r.n_mels == mel.n_mels);
    for (size_t i = 0; i < mel.frames.size(); ++i) REQUIRE(r.frames[i] == mel.frames[i]);
}

TEST_CASE("synth: identical inputs give identical samples") {
    StyleParams st;
    st.f0_base = 150.0f;
    Waveform a = synth_utterance({1, 5, 3}, st, 7);
    Waveform b = synth_utterance({1, 5, 3}, st, 7);
    REQUIRE(a.samples.size() == b.samples.size());
    for (size_t i = 0; i < a.samples.size(); ++i) REQUIRE(a.samples[i] == b.samples[i]);
}

TEST_CASE("synth: empty content is rejected") {
    StyleParams st;
    CHECK_THROWS_AS(synth_utterance({}, st, 0), dstok::error);
    CHECK_THROWS_AS(synth_utterance({99}, st, 0), dstok::error);
}

TEST_CASE("synth: pitch tracks f0_base across styles") {
    StyleParams lo, hi;
    lo.f0_base = 90.0f;
    hi.f0_base = 300.0f;
    lo.vibrato_depth = hi.vibrato_depth = 10.0f;
    const std::vector<int> content = {2, 9, 4, 11};
    Waveform wl = synth_utterance(content, lo, 3);
    Waveform wh = synth_utterance(content, hi, 3);
    const double pl = estimate_pitch_hz(wl);
    const double ph = estimate_pitch_hz(wh);
    CHECK(ph / pl > 2.0);
    CHECK(pl == doctest::Approx(90.0).epsilon(0.15));
    CHECK(ph == doctest::Approx(300.0).epsilon(0.15));
}

TEST_CASE("corpus: counts, determinism, and bit-exact re-synthesis") {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/dstok_test_corpus";
    fs::remove_all(dir);
    CorpusSpec spec;
    spec.n_speakers = 4;
    spec.utts_per_speaker = 5;
    spec.seed = 11;
    CorpusManifest m = build_corpus(dir, spec);
    CHECK(m.utterances.size() == 20);

    // 4 distinct speakers with distinct f0
    std::vector<float> f0s;
    for (const auto & u : m.utterances)
        if (u.utt_id.substr(4) == "u000") f0s.push_back(u.style.f0_base);
    REQUIRE(f0s.size() == 4);
    for (size_t i = 0; i < f0s.size(); ++i)
        for (size_t j = i + 1; j < f0s.size(); ++j) CHECK(f0s[i] != f0s[j]);

    // manifest byte-identical across rebuilds with the same seed
    std::ifstream f1(dir + "/manifest.tsv", std::ios::binary);
    std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string dir2 = "/tmp/dstok_test_corpus2";
    fs::remove_all(dir2);
    build_corpus(dir2, spec);
    std::ifstream f2(dir2 + "/manifest.tsv", std::ios::binary);
    std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(bytes1 == bytes2);

    // content lengths within [3,10]
    for (const auto & u : m.utterances) {
        CHECK(u.content.size() >= 3);
        CHECK(u.content.size() <= 10);
    }

    // re-synthesis from the parsed manifest reproduces stored wav bytes
    CorpusManifest parsed = read_manifest(dir + "/manifest.tsv");
    REQUIRE(parsed.utterances.size() == m.utterances.size());
    for (size_t i = 0; i < 3; ++i) {
        const Utterance & u = parsed.utterances[i];
        const Waveform resynth = synth_utterance(u.content, u.style, utt_synth_seed(u.utt_id),
                                                 parsed.n_symbols);
        const std::string tmp = "/tmp/dstok_resynth.wav";
        write_wav(tmp, resynth);
        std::ifstream a(utt_wav_path(parsed, u), std::ios::binary);
        std::ifstream b(tmp, std::ios::binary);
        std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        REQUIRE(!ba.empty());
        REQUIRE(ba == bb);
    }
}

TEST_CASE("manifest lines parse back to the same utterance") {
    Utterance u;
    u.utt_id = "s12_u042";
    u.wav_path = "wav/s12_u042.wav";
    u.content = {3, 7, 1};
    u.style.speaker_id = 12;
    u.style.f0_base = 147.3f;
    u.style.spectral_tilt = -4.2f;
    u.style.vibrato_rate = 5.1f;
    u.style.vibrato_depth = 28.0f;
    u.style.amplitude = 0.82f;
    const std::string line = manifest_line(u);
    CHECK(line == "s12_u042\twav/s12_u042.wav\tcontent:3,7,1\tspeaker:12\t"
                  "f0:147.3,tilt:-4.2,vrate:5.1,vdepth:28,amp:0.82");
    Utterance r = parse_manifest_line(line);
    CHECK(r.utt_id == u.utt_id);
    CHECK(r.content == u.content);
    CHECK(r.style.speaker_id == 12);
    CHECK(r.style.f0_base == u.style.f0_base);
    CHECK(r.style.spectral_tilt == u.style.spectral_tilt);
    CHECK(r.style.vibrato_rate == u.style.vibrato_rate);
    CHECK(r.style.vibrato_depth == u.style.vibrato_depth);
    CHECK(r.style.amplitude == u.style.amplitude);
}
