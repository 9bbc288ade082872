#include "dstok/signal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace dstok {

void MelConfig::validate() const {
    DSTOK_CHECK(sample_rate > 0 && n_mels > 0, "mel config: bad rates");
    DSTOK_CHECK(n_fft >= win_length && win_length >= hop_length && hop_length > 0,
                "mel config: require n_fft >= win >= hop, got %d/%d/%d", n_fft, win_length,
                hop_length);
    DSTOK_CHECK((n_fft & (n_fft - 1)) == 0, "mel config: n_fft must be a power of two");
    DSTOK_CHECK(fmin >= 0.0f && fmax > fmin && fmax <= sample_rate / 2.0f, "mel config: bad band");
}

// ---------------------------------------------------------------------------
// wav io

namespace {

void put_u32(std::vector<uint8_t> & b, uint32_t v) {
    b.push_back((uint8_t)(v & 0xff));
    b.push_back((uint8_t)((v >> 8) & 0xff));
    b.push_back((uint8_t)((v >> 16) & 0xff));
    b.push_back((uint8_t)((v >> 24) & 0xff));
}

void put_u16(std::vector<uint8_t> & b, uint16_t v) {
    b.push_back((uint8_t)(v & 0xff));
    b.push_back((uint8_t)((v >> 8) & 0xff));
}

uint32_t get_u32(const uint8_t * p) {
    return (uint32_t)p[0] | ((uint32_t)p[1] << 8) | ((uint32_t)p[2] << 16) | ((uint32_t)p[3] << 24);
}

uint16_t get_u16(const uint8_t * p) { return (uint16_t)((uint32_t)p[0] | ((uint32_t)p[1] << 8)); }

} // namespace

void write_wav(const std::string & path, const Waveform & wave) {
    const uint32_t n = (uint32_t)wave.samples.size();
    std::vector<uint8_t> out;
    out.reserve(44 + 2 * (size_t)n);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + 2 * n);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, 1); // PCM
    put_u16(out, 1); // mono
    put_u32(out, (uint32_t)wave.sample_rate);
    put_u32(out, (uint32_t)wave.sample_rate * 2);
    put_u16(out, 2);  // block align
    put_u16(out, 16); // bits
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, 2 * n);
    for (float s : wave.samples) {
        const float c = std::clamp(s, -1.0f, 1.0f);
        const int16_t q = (int16_t)std::lrintf(c * 32767.0f);
        put_u16(out, (uint16_t)q);
    }
    std::ofstream f(path, std::ios::binary);
    DSTOK_CHECK(f.good(), "write_wav: cannot open %s", path.c_str());
    f.write((const char *)out.data(), (std::streamsize)out.size());
    DSTOK_CHECK(f.good(), "write_wav: write failed for %s", path.c_str());
}

Waveform read_wav(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    DSTOK_CHECK(f.good(), "read_wav: cannot open %s", path.c_str());
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    DSTOK_CHECK(buf.size() >= 44, "read_wav: %s too small", path.c_str());
    DSTOK_CHECK(std::memcmp(buf.data(), "RIFF", 4) == 0 && std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
                "read_wav: %s is not a RIFF wav", path.c_str());
    size_t pos = 12;
    Waveform wave;
    int bits = 0, channels = 0;
    bool have_fmt = false;
    while (pos + 8 <= buf.size()) {
        const uint32_t size = get_u32(buf.data() + pos + 4);
        const uint8_t * body = buf.data() + pos + 8;
        if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
            DSTOK_CHECK(size >= 16, "read_wav: short fmt chunk");
            DSTOK_CHECK(get_u16(body) == 1, "read_wav: only PCM supported");
            channels = get_u16(body + 2);
            wave.sample_rate = (int)get_u32(body + 4);
            bits = get_u16(body + 14);
            have_fmt = true;
        } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
            DSTOK_CHECK(have_fmt, "read_wav: data before fmt");
            DSTOK_CHECK(channels == 1 && bits == 16, "read_wav: need 16-bit mono, got %d ch %d bit",
                        channels, bits);
            DSTOK_CHECK(pos + 8 + size <= buf.size(), "read_wav: truncated data chunk");
            const size_t n = size / 2;
            wave.samples.resize(n);
            for (size_t i = 0; i < n; ++i) {
                const int16_t q = (int16_t)get_u16(body + 2 * i);
                wave.samples[i] = (float)q / 32767.0f;
            }
            return wave;
        }
        pos += 8 + size + (size & 1);
    }
    fail("read_wav: no data chunk in %s", path.c_str());
}

// ---------------------------------------------------------------------------
// fft

void fft_inplace(std::vector<float> & re, std::vector<float> & im, bool inverse) {
    const size_t n = re.size();
    DSTOK_CHECK(n == im.size() && n > 0 && (n & (n - 1)) == 0, "fft: length must be a power of two");
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / (double)len;
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t j = 0; j < len / 2; ++j) {
                const size_t a = i + j, b = i + j + len / 2;
                const double xr = re[b] * cr - im[b] * ci;
                const double xi = re[b] * ci + im[b] * cr;
                const double ur = re[a], ui = im[a];
                re[a] = (float)(ur + xr);
                im[a] = (float)(ui + xi);
                re[b] = (float)(ur - xr);
                im[b] = (float)(ui - xi);
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
    if (inverse) {
        const float inv = 1.0f / (float)n;
        for (size_t i = 0; i < n; ++i) {
            re[i] *= inv;
            im[i] *= inv;
        }
    }
}

// ---------------------------------------------------------------------------
// mel analysis

std::vector<float> mel_filterbank(const MelConfig & cfg) {
    cfg.validate();
    const int bins = cfg.n_bins();
    auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    const double mel_lo = hz_to_mel(cfg.fmin), mel_hi = hz_to_mel(cfg.fmax);
    std::vector<double> centers((size_t)cfg.n_mels + 2);
    for (int m = 0; m < cfg.n_mels + 2; ++m)
        centers[(size_t)m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (cfg.n_mels + 1));
    std::vector<float> fb((size_t)cfg.n_mels * bins, 0.0f);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double fl = centers[(size_t)m], fc = centers[(size_t)m + 1], fr = centers[(size_t)m + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = (double)k * cfg.sample_rate / cfg.n_fft;
            double w = 0.0;
            if (f > fl && f < fc) w = (f - fl) / (fc - fl);
            else if (f >= fc && f < fr) w = (fr - f) / (fr - fc);
            fb[(size_t)m * bins + k] = (float)w;
        }
    }
    return fb;
}

int stft_frame_count(int64_t n_samples, const MelConfig & cfg) {
    const int64_t padded = n_samples + 2 * (cfg.win_length / 2);
    DSTOK_CHECK(padded >= cfg.win_length, "stft: wave shorter than one window");
    return (int)(1 + (padded - cfg.win_length) / cfg.hop_length);
}

namespace {

std::vector<float> hann_window(int n) {
    std::vector<float> w((size_t)n);
    for (int i = 0; i < n; ++i)
        w[(size_t)i] = 0.5f - 0.5f * (float)std::cos(2.0 * M_PI * i / n);
    return w;
}

// reflect padding without repeating the edge sample
std::vector<float> reflect_pad(const std::vector<float> & x, int pad) {
    DSTOK_CHECK((int)x.size() > pad, "stft: wave too short to reflect-pad");
    std::vector<float> out;
    out.reserve(x.size() + 2 * (size_t)pad);
    for (int i = pad; i >= 1; --i) out.push_back(x[(size_t)i]);
    out.insert(out.end(), x.begin(), x.end());
    const int n = (int)x.size();
    for (int i = 2; i <= pad + 1; ++i) out.push_back(x[(size_t)(n - i)]);
    return out;
}

// magnitude^2 spectra of all frames, [t, n_bins]
std::vector<float> stft_power(const std::vector<float> & samples, const MelConfig & cfg, int & t_out) {
    const int pad = cfg.win_length / 2;
    const std::vector<float> padded = reflect_pad(samples, pad);
    const int t = 1 + (int)((padded.size() - (size_t)cfg.win_length) / (size_t)cfg.hop_length);
    t_out = t;
    const int bins = cfg.n_bins();
    const std::vector<float> win = hann_window(cfg.win_length);
    const int off = (cfg.n_fft - cfg.win_length) / 2;
    std::vector<float> power((size_t)t * bins);
    std::vector<float> re((size_t)cfg.n_fft), im((size_t)cfg.n_fft);
    for (int j = 0; j < t; ++j) {
        std::fill(re.begin(), re.end(), 0.0f);
        std::fill(im.begin(), im.end(), 0.0f);
        const float * src = padded.data() + (size_t)j * cfg.hop_length;
        for (int i = 0; i < cfg.win_length; ++i) re[(size_t)(off + i)] = src[i] * win[(size_t)i];
        fft_inplace(re, im, false);
        for (int k = 0; k < bins; ++k)
            power[(size_t)j * bins + k] = re[(size_t)k] * re[(size_t)k] + im[(size_t)k] * im[(size_t)k];
    }
    return power;
}

} // namespace

MelSpec stft_mel(const Waveform & wave, const MelConfig & cfg) {
    cfg.validate();
    DSTOK_CHECK(!wave.samples.empty(), "stft_mel: empty wave");
    DSTOK_CHECK((int)wave.samples.size() >= cfg.win_length, "stft_mel: wave shorter than one window");
    DSTOK_CHECK(wave.sample_rate == cfg.sample_rate, "stft_mel: sample rate %d != config %d",
                wave.sample_rate, cfg.sample_rate);
    int t = 0;
    const std::vector<float> power = stft_power(wave.samples, cfg, t);
    const std::vector<float> fb = mel_filterbank(cfg);
    const int bins = cfg.n_bins();
    MelSpec mel;
    mel.t = t;
    mel.n_mels = cfg.n_mels;
    mel.frame_rate = cfg.frame_rate();
    mel.frames.resize((size_t)t * cfg.n_mels);
    for (int j = 0; j < t; ++j) {
        const float * p = power.data() + (size_t)j * bins;
        for (int m = 0; m < cfg.n_mels; ++m) {
            const float * w = fb.data() + (size_t)m * bins;
            double e = 0.0;
            for (int k = 0; k < bins; ++k) e += (double)w[k] * p[k];
            if (e < cfg.floor_energy) e = cfg.floor_energy;
            mel.frames[(size_t)j * cfg.n_mels + m] = (float)std::log(e);
        }
    }
    return mel;
}

// ---------------------------------------------------------------------------
// griffin-lim

namespace {

// non-negative least squares FB·p ~= e via multiplicative updates
void mel_to_power(const std::vector<float> & fb, const float * mel_energy, int n_mels, int bins,
                  float * p_out) {
    std::vector<double> p((size_t)bins, 0.0);
    // init with the transpose image
    for (int k = 0; k < bins; ++k) {
        double acc = 0.0;
        for (int m = 0; m < n_mels; ++m) acc += (double)fb[(size_t)m * bins + k] * mel_energy[m];
        p[(size_t)k] = acc;
    }
    std::vector<double> num((size_t)bins), den((size_t)bins), fbp((size_t)n_mels);
    for (int it = 0; it < 30; ++it) {
        for (int m = 0; m < n_mels; ++m) {
            double acc = 0.0;
            const float * w = fb.data() + (size_t)m * bins;
            for (int k = 0; k < bins; ++k) acc += (double)w[k] * p[(size_t)k];
            fbp[(size_t)m] = acc;
        }
        for (int k = 0; k < bins; ++k) {
            double nu = 0.0, de = 0.0;
            for (int m = 0; m < n_mels; ++m) {
                const double w = fb[(size_t)m * bins + k];
                nu += w * mel_energy[m];
                de += w * fbp[(size_t)m];
            }
            num[(size_t)k] = nu;
            den[(size_t)k] = de;
        }
        for (int k = 0; k < bins; ++k)
            p[(size_t)k] *= num[(size_t)k] / (den[(size_t)k] + 1e-12);
    }
    for (int k = 0; k < bins; ++k) p_out[(size_t)k] = (float)std::max(p[(size_t)k], 0.0);
}

// weighted overlap-add inverse; spectra given as interleaved full frames
std::vector<float> istft(const std::vector<float> & frames_re, const std::vector<float> & frames_im,
                         int t, const MelConfig & cfg) {
    const int pad = cfg.win_length / 2;
    const int64_t padded_len = (int64_t)(t - 1) * cfg.hop_length + cfg.win_length;
    std::vector<double> acc((size_t)padded_len, 0.0), norm((size_t)padded_len, 0.0);
    const std::vector<float> win = hann_window(cfg.win_length);
    const int off = (cfg.n_fft - cfg.win_length) / 2;
    std::vector<float> re((size_t)cfg.n_fft), im((size_t)cfg.n_fft);
    for (int j = 0; j < t; ++j) {
        std::copy_n(frames_re.data() + (size_t)j * cfg.n_fft, cfg.n_fft, re.begin());
        std::copy_n(frames_im.data() + (size_t)j * cfg.n_fft, cfg.n_fft, im.begin());
        fft_inplace(re, im, true);
        const int64_t base = (int64_t)j * cfg.hop_length;
        for (int i = 0; i < cfg.win_length; ++i) {
            const double w = win[(size_t)i];
            acc[(size_t)(base + i)] += w * re[(size_t)(off + i)];
            norm[(size_t)(base + i)] += w * w;
        }
    }
    const int64_t out_len = padded_len - 2 * pad;
    std::vector<float> out((size_t)out_len);
    for (int64_t i = 0; i < out_len; ++i) {
        const double n = norm[(size_t)(i + pad)];
        out[(size_t)i] = n > 1e-9 ? (float)(acc[(size_t)(i + pad)] / n) : 0.0f;
    }
    return out;
}

} // namespace

namespace {

// complex bin spectra of all frames of x, [t, n_bins] interleaved into re/im
void analyze_bins(const std::vector<float> & x, const MelConfig & cfg, int t,
                  std::vector<float> & ar, std::vector<float> & ai) {
    const int pad = cfg.win_length / 2;
    const int bins = cfg.n_bins();
    const std::vector<float> padded = reflect_pad(x, pad);
    const std::vector<float> win = hann_window(cfg.win_length);
    const int off = (cfg.n_fft - cfg.win_length) / 2;
    const int t2 = 1 + (int)((padded.size() - (size_t)cfg.win_length) / (size_t)cfg.hop_length);
    DSTOK_CHECK(t2 >= t, "griffin_lim: re-analysis came up short");
    std::vector<float> re((size_t)cfg.n_fft), im((size_t)cfg.n_fft);
    for (int j = 0; j < t; ++j) {
        std::fill(re.begin(), re.end(), 0.0f);
        std::fill(im.begin(), im.end(), 0.0f);
        const float * src = padded.data() + (size_t)j * cfg.hop_length;
        for (int i = 0; i < cfg.win_length; ++i) re[(size_t)(off + i)] = src[i] * win[(size_t)i];
        fft_inplace(re, im, false);
        for (int k = 0; k < bins; ++k) {
            ar[(size_t)j * bins + k] = re[(size_t)k];
            ai[(size_t)j * bins + k] = im[(size_t)k];
        }
    }
}

// expand bin spectra to hermitian full frames and overlap-add
std::vector<float> synth_from_bins(const std::vector<float> & sr, const std::vector<float> & si,
                                   int t, const MelConfig & cfg) {
    const int bins = cfg.n_bins();
    std::vector<float> fr((size_t)t * cfg.n_fft, 0.0f), fi((size_t)t * cfg.n_fft, 0.0f);
    for (int j = 0; j < t; ++j) {
        float * r = fr.data() + (size_t)j * cfg.n_fft;
        float * i = fi.data() + (size_t)j * cfg.n_fft;
        for (int k = 0; k < bins; ++k) {
            r[k] = sr[(size_t)j * bins + k];
            i[k] = si[(size_t)j * bins + k];
        }
        i[0] = 0.0f;
        i[cfg.n_fft / 2] = 0.0f;
        for (int k = 1; k < cfg.n_fft / 2; ++k) {
            r[cfg.n_fft - k] = r[k];
            i[cfg.n_fft - k] = -i[k];
        }
    }
    return istft(fr, fi, t, cfg);
}

} // namespace

namespace {

// magnitudes per frame/bin from the nnls power solve
std::vector<float> mel_to_magnitudes(const MelSpec & mel, const MelConfig & cfg) {
    const int bins = cfg.n_bins();
    const int t = mel.t;
    const std::vector<float> fb = mel_filterbank(cfg);
    std::vector<float> mag((size_t)t * bins);
    std::vector<float> energy((size_t)cfg.n_mels);
    std::vector<float> p((size_t)bins);
    for (int j = 0; j < t; ++j) {
        for (int m = 0; m < cfg.n_mels; ++m) energy[(size_t)m] = std::exp(mel.at(j, m));
        mel_to_power(fb, energy.data(), cfg.n_mels, bins, p.data());
        for (int k = 0; k < bins; ++k) mag[(size_t)j * bins + k] = std::sqrt(p[(size_t)k]);
    }
    return mag;
}

void random_phase_spectra(const std::vector<float> & mag, uint64_t seed, std::vector<float> & sr,
                          std::vector<float> & si) {
    Rng rng(seed);
    for (size_t i = 0; i < mag.size(); ++i) {
        const double a = 2.0 * M_PI * rng.uniform();
        sr[i] = mag[i] * (float)std::cos(a);
        si[i] = mag[i] * (float)std::sin(a);
    }
}

} // namespace

Waveform griffin_lim_baseline(const MelSpec & mel, const MelConfig & cfg, uint64_t seed) {
    cfg.validate();
    DSTOK_CHECK(mel.n_mels == cfg.n_mels && mel.t >= 1, "griffin_lim: mel does not match config");
    const std::vector<float> mag = mel_to_magnitudes(mel, cfg);
    std::vector<float> sr(mag.size()), si(mag.size());
    random_phase_spectra(mag, seed, sr, si);
    Waveform out;
    out.sample_rate = cfg.sample_rate;
    out.samples = synth_from_bins(sr, si, mel.t, cfg);
    for (auto & s : out.samples) s = std::clamp(s, -1.0f, 1.0f);
    return out;
}

Waveform griffin_lim(const MelSpec & mel, const MelConfig & cfg, int iters, uint64_t seed) {
    cfg.validate();
    DSTOK_CHECK(iters >= 1, "griffin_lim: iters must be >= 1");
    DSTOK_CHECK(mel.n_mels == cfg.n_mels && mel.t >= 1, "griffin_lim: mel does not match config");
    const int bins = cfg.n_bins();
    const int t = mel.t;
    const std::vector<float> mag = mel_to_magnitudes(mel, cfg);

    const size_t n = (size_t)t * bins;
    std::vector<float> sr(n), si(n);        // current extrapolated spectra
    std::vector<float> tr(n), ti(n);        // magnitude-projected spectra
    std::vector<float> tr_prev(n), ti_prev(n);
    random_phase_spectra(mag, seed, sr, si);

    // accelerated iteration: momentum over the magnitude-projection step
    const float alpha = 0.99f;
    std::vector<float> ar(n), ai(n);
    for (int it = 0; it < iters; ++it) {
        const std::vector<float> x = synth_from_bins(sr, si, t, cfg);
        analyze_bins(x, cfg, t, ar, ai);
        for (size_t i = 0; i < n; ++i) {
            const float norm = std::hypot(ar[i], ai[i]);
            if (norm > 1e-12f) {
                tr[i] = mag[i] * ar[i] / norm;
                ti[i] = mag[i] * ai[i] / norm;
            } else {
                tr[i] = mag[i];
                ti[i] = 0.0f;
            }
        }
        if (it == 0) {
            sr = tr;
            si = ti;
        } else {
            for (size_t i = 0; i < n; ++i) {
                sr[i] = tr[i] + alpha * (tr[i] - tr_prev[i]);
                si[i] = ti[i] + alpha * (ti[i] - ti_prev[i]);
            }
        }
        tr_prev = tr;
        ti_prev = ti;
    }

    Waveform out;
    out.sample_rate = cfg.sample_rate;
    out.samples = synth_from_bins(tr, ti, t, cfg);
    for (auto & s : out.samples) s = std::clamp(s, -1.0f, 1.0f);
    return out;
}

double mel_l2(const MelSpec & a, const MelSpec & b) {
    DSTOK_CHECK(a.n_mels == b.n_mels, "mel_l2: mel dim mismatch");
    const int t = std::min(a.t, b.t);
    DSTOK_CHECK(t >= 1, "mel_l2: empty spectrograms");
    double acc = 0.0;
    for (int j = 0; j < t; ++j)
        for (int m = 0; m < a.n_mels; ++m) {
            const double d = (double)a.at(j, m) - b.at(j, m);
            acc += d * d;
        }
    return std::sqrt(acc / ((double)t * a.n_mels));
}

// ---------------------------------------------------------------------------
// mel dumps

void write_mel_dump(const std::string & path, const MelSpec & mel) {
    std::ofstream f(path, std::ios::binary);
    DSTOK_CHECK(f.good(), "write_mel_dump: cannot open %s", path.c_str());
    std::vector<uint8_t> head;
    head.insert(head.end(), {'M', 'E', 'L', 'S'});
    put_u32(head, 1);
    put_u32(head, (uint32_t)mel.t);
    put_u32(head, (uint32_t)mel.n_mels);
    f.write((const char *)head.data(), (std::streamsize)head.size());
    f.write((const char *)mel.frames.data(), (std::streamsize)(mel.frames.size() * sizeof(float)));
    DSTOK_CHECK(f.good(), "write_mel_dump: write failed for %s", path.c_str());
}

MelSpec read_mel_dump(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    DSTOK_CHECK(f.good(), "read_mel_dump: cannot open %s", path.c_str());
    uint8_t head[16];
    f.read((char *)head, 16);
    DSTOK_CHECK(f.good() && std::memcmp(head, "MELS", 4) == 0, "read_mel_dump: bad header in %s",
                path.c_str());
    DSTOK_CHECK(get_u32(head + 4) == 1, "read_mel_dump: unsupported version");
    MelSpec mel;
    mel.t = (int)get_u32(head + 8);
    mel.n_mels = (int)get_u32(head + 12);
    DSTOK_CHECK(mel.t > 0 && mel.n_mels > 0 && (int64_t)mel.t * mel.n_mels < (int64_t)1 << 30,
                "read_mel_dump: bad dims");
    mel.frames.resize((size_t)mel.t * mel.n_mels);
    f.read((char *)mel.frames.data(), (std::streamsize)(mel.frames.size() * sizeof(float)));
    DSTOK_CHECK(f.good(), "read_mel_dump: truncated file %s", path.c_str());
    return mel;
}

// ---------------------------------------------------------------------------

double estimate_pitch_hz(const Waveform & wave, double lo_hz, double hi_hz) {
    const int sr = wave.sample_rate;
    const int win = sr / 25; // 40 ms
    const int hop = win / 2;
    const int lag_min = (int)(sr / hi_hz);
    const int lag_max = (int)(sr / lo_hz);
    DSTOK_CHECK((int)wave.samples.size() >= win + lag_max, "estimate_pitch: wave too short");
    std::vector<double> votes;
    for (size_t base = 0; base + (size_t)(win + lag_max) <= wave.samples.size(); base += (size_t)hop) {
        const float * x = wave.samples.data() + base;
        double e0 = 0.0;
        for (int i = 0; i < win; ++i) e0 += (double)x[i] * x[i];
        if (e0 < 1e-6) continue;
        double best = 0.0;
        int best_lag = 0;
        for (int lag = lag_min; lag <= lag_max; ++lag) {
            double c = 0.0, e1 = 0.0;
            for (int i = 0; i < win; ++i) {
                c += (double)x[i] * x[i + lag];
                e1 += (double)x[i + lag] * x[i + lag];
            }
            const double r = c / std::sqrt(e0 * e1 + 1e-12);
            if (r > best) {
                best = r;
                best_lag = lag;
            }
        }
        if (best > 0.5 && best_lag > 0) votes.push_back((double)sr / best_lag);
    }
    DSTOK_CHECK(!votes.empty(), "estimate_pitch: no voiced frames found");
    std::sort(votes.begin(), votes.end());
    return votes[votes.size() / 2];
}

} // namespace dstok
