#pragma once

// Audio I/O and time-frequency analysis: RIFF PCM wav files, log-mel
// spectrograms with the analysis config fixed for the whole project, and
// Griffin-Lim inversion for listening checks. All quantitative evaluation
// happens in the mel domain.

#include "dstok/common.hpp"

#include <string>
#include <vector>

namespace dstok {

struct Waveform {
    std::vector<float> samples; // mono, [-1,1]
    int sample_rate = 16000;

    double duration() const { return (double)samples.size() / sample_rate; }
};

struct MelConfig {
    int sample_rate = 16000;
    int n_fft = 512;
    int win_length = 400;
    int hop_length = 160; // 100 Hz frames
    int n_mels = 80;
    float fmin = 40.0f;
    float fmax = 7600.0f;
    float floor_energy = 1e-5f;

    int n_bins() const { return n_fft / 2 + 1; }
    float frame_rate() const { return (float)sample_rate / hop_length; }
    void validate() const;
};

struct MelSpec {
    std::vector<float> frames; // [t, n_mels] row-major, natural log of mel energy
    int t = 0;
    int n_mels = 0;
    float frame_rate = 100.0f;

    float at(int r, int m) const { return frames[(size_t)r * n_mels + m]; }
    float & at(int r, int m) { return frames[(size_t)r * n_mels + m]; }
};

// 16-bit signed little-endian PCM, mono
void write_wav(const std::string & path, const Waveform & wave);
Waveform read_wav(const std::string & path);

// peak-1 triangular filters on the HTK mel scale, [n_mels, n_bins] row-major
std::vector<float> mel_filterbank(const MelConfig & cfg);

// frame count after reflect-padding win/2 on both sides:
// 1 + floor((len + 2*(win/2) - win)/hop)
int stft_frame_count(int64_t n_samples, const MelConfig & cfg);

MelSpec stft_mel(const Waveform & wave, const MelConfig & cfg);

// phase-retrieval inversion; deterministic given seed (initial phases)
Waveform griffin_lim(const MelSpec & mel, const MelConfig & cfg, int iters, uint64_t seed = 0);

// the iteration-0 baseline: synthesis with the initial random phases and no
// projection; griffin_lim output must beat this in re-analysis mel distance
Waveform griffin_lim_baseline(const MelSpec & mel, const MelConfig & cfg, uint64_t seed = 0);

// L2 distance between two mel spectrograms over their common frame prefix
double mel_l2(const MelSpec & a, const MelSpec & b);

// radix-2 complex FFT, in-place over interleaved re/im pairs; n power of two
void fft_inplace(std::vector<float> & re, std::vector<float> & im, bool inverse);

// binary mel dump: magic "MELS", u32 version, u32 t, u32 n_mels, f32 data
void write_mel_dump(const std::string & path, const MelSpec & mel);
MelSpec read_mel_dump(const std::string & path);

// crude autocorrelation pitch estimate (median over frames), for tests
double estimate_pitch_hz(const Waveform & wave, double lo_hz = 70.0, double hi_hz = 400.0);

} // namespace dstok
