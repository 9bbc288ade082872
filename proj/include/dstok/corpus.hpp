#pragma once

// Parametric synthetic speech corpus. Each utterance renders a short symbol
// sequence with a speaker-specific harmonic style, so every wav carries exact
// ground-truth content and style labels for probing.

#include "dstok/signal.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dstok {

struct StyleParams {
    int speaker_id = 0;
    float f0_base = 150.0f;      // Hz, in [90,300]
    float spectral_tilt = -4.0f; // dB per octave
    float vibrato_rate = 5.0f;   // Hz
    float vibrato_depth = 25.0f; // cents
    float amplitude = 0.8f;      // linear peak scale
};

struct Utterance {
    std::string utt_id;
    std::string wav_path; // relative to the manifest directory
    std::vector<int> content;
    StyleParams style;
};

struct CorpusManifest {
    std::string root_dir; // directory holding the manifest
    int n_symbols = 16;   // alphabet size K
    std::vector<Utterance> utterances;
};

// deterministic per-utterance synthesis seed
uint64_t utt_synth_seed(const std::string & utt_id);

// renders one symbol sequence; each symbol becomes a 0.12-0.30 s harmonic
// segment with a symbol-specific two-resonance envelope shaped by the style
Waveform synth_utterance(const std::vector<int> & content, const StyleParams & style,
                         uint64_t seed, int n_symbols = 16);

struct CorpusSpec {
    int n_speakers = 32;
    int utts_per_speaker = 100;
    int n_symbols = 16;
    uint64_t seed = 0;
};

// writes wav files under out_dir/wav and the manifest to out_dir/manifest.tsv
CorpusManifest build_corpus(const std::string & out_dir, const CorpusSpec & spec);

void write_manifest(const std::string & path, const CorpusManifest & manifest);
CorpusManifest read_manifest(const std::string & path);

std::string manifest_line(const Utterance & u);
Utterance parse_manifest_line(const std::string & line);

// resolve an utterance's wav path against the manifest root
std::string utt_wav_path(const CorpusManifest & m, const Utterance & u);

// deterministic corpus split by utterance index: 5% test, 5% val, 90% train
enum class Split { train, val, test };
Split utt_split(size_t index);
std::vector<size_t> split_indices(const CorpusManifest & corpus, Split split);

using StepLogger = std::function<void(int step, double loss)>;

} // namespace dstok
