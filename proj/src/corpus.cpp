#include "dstok/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace dstok {

uint64_t utt_synth_seed(const std::string & utt_id) {
    // FNV-1a so re-synthesis needs nothing beyond the manifest line
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : utt_id) {
        h ^= (uint8_t)c;
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

constexpr int k_sample_rate = 16000;

struct Resonances {
    double f1;
    double f2;
};

// symbols index a grid of two resonance centers; distinct cells keep the
// content classes spectrally separable
Resonances symbol_resonances(int symbol, int n_symbols) {
    const int side = (int)std::ceil(std::sqrt((double)n_symbols));
    const int i = symbol % side;
    const int j = symbol / side;
    Resonances r;
    r.f1 = 350.0 + 150.0 * i;
    r.f2 = 1100.0 + 500.0 * j;
    return r;
}

double envelope_at(double f, const Resonances & r, double tilt_db_per_oct) {
    const double b1 = 90.0, b2 = 130.0;
    const double l1 = 1.0 / (1.0 + std::pow((f - r.f1) / b1, 2.0));
    const double l2 = 1.0 / (1.0 + std::pow((f - r.f2) / b2, 2.0));
    const double tilt = std::pow(10.0, tilt_db_per_oct * std::log2(f / 200.0) / 20.0);
    return tilt * (l1 + l2 + 0.05);
}

} // namespace

Waveform synth_utterance(const std::vector<int> & content, const StyleParams & style,
                         uint64_t seed, int n_symbols) {
    DSTOK_CHECK(content.size() >= 1 && content.size() <= 12,
                "synth_utterance: content length %zu outside [1,12]", content.size());
    for (int s : content)
        DSTOK_CHECK(s >= 0 && s < n_symbols, "synth_utterance: unknown symbol id %d", s);
    DSTOK_CHECK(style.f0_base >= 90.0f && style.f0_base <= 300.0f,
                "synth_utterance: f0_base %.1f outside [90,300]", (double)style.f0_base);

    Rng rng(seed);
    std::vector<int> seg_len(content.size());
    size_t total = 0;
    for (size_t i = 0; i < content.size(); ++i) {
        const double dur = rng.uniform(0.12, 0.30);
        seg_len[i] = (int)std::lround(dur * k_sample_rate);
        total += (size_t)seg_len[i];
    }

    Waveform wave;
    wave.sample_rate = k_sample_rate;
    wave.samples.assign(total, 0.0f);

    const double depth = style.vibrato_depth / 1200.0; // octaves
    const int ramp = k_sample_rate / 100;              // 10 ms attack/release
    double phase = 0.0;                                // fundamental phase, continuous across segments
    size_t at = 0;
    for (size_t si = 0; si < content.size(); ++si) {
        const Resonances res = symbol_resonances(content[si], n_symbols);
        const int n_harm = std::min(40, (int)(5000.0 / style.f0_base));
        std::vector<double> amp((size_t)n_harm);
        double amp_sum = 0.0;
        for (int h = 1; h <= n_harm; ++h) {
            amp[(size_t)(h - 1)] = envelope_at(h * (double)style.f0_base, res, style.spectral_tilt);
            amp_sum += amp[(size_t)(h - 1)];
        }
        for (auto & a : amp) a /= amp_sum;

        const int len = seg_len[si];
        for (int i = 0; i < len; ++i) {
            const double t = (double)(at + (size_t)i) / k_sample_rate;
            const double f0 =
                style.f0_base * std::pow(2.0, depth * std::sin(2.0 * M_PI * style.vibrato_rate * t));
            phase += 2.0 * M_PI * f0 / k_sample_rate;
            if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
            double v = 0.0;
            for (int h = 1; h <= n_harm; ++h) v += amp[(size_t)(h - 1)] * std::sin(h * phase);
            double env = 1.0;
            if (i < ramp) env = (double)i / ramp;
            if (len - 1 - i < ramp) env = std::min(env, (double)(len - 1 - i) / ramp);
            const double noise = 0.01 * rng.normal();
            const double s = style.amplitude * (env * v + noise);
            wave.samples[at + (size_t)i] = (float)std::clamp(s, -1.0, 1.0);
        }
        at += (size_t)len;
    }
    return wave;
}

// ---------------------------------------------------------------------------
// manifest text format

namespace {

std::string fmt_float(float v) {
    char buf[48];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    DSTOK_CHECK(res.ec == std::errc(), "fmt_float failed");
    return std::string(buf, res.ptr);
}

float parse_float(const std::string & s) {
    float v = 0.0f;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    DSTOK_CHECK(res.ec == std::errc() && res.ptr == s.data() + s.size(),
                "manifest: bad float '%s'", s.c_str());
    return v;
}

int parse_int(const std::string & s) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    DSTOK_CHECK(res.ec == std::errc() && res.ptr == s.data() + s.size(), "manifest: bad int '%s'",
                s.c_str());
    return v;
}

std::vector<std::string> split(const std::string & s, char sep) {
    std::vector<std::string> out;
    size_t at = 0;
    while (true) {
        const size_t next = s.find(sep, at);
        if (next == std::string::npos) {
            out.push_back(s.substr(at));
            break;
        }
        out.push_back(s.substr(at, next - at));
        at = next + 1;
    }
    return out;
}

} // namespace

std::string manifest_line(const Utterance & u) {
    std::string line = u.utt_id + "\t" + u.wav_path + "\tcontent:";
    for (size_t i = 0; i < u.content.size(); ++i) {
        if (i) line += ",";
        line += std::to_string(u.content[i]);
    }
    line += "\tspeaker:" + std::to_string(u.style.speaker_id);
    line += "\tf0:" + fmt_float(u.style.f0_base);
    line += ",tilt:" + fmt_float(u.style.spectral_tilt);
    line += ",vrate:" + fmt_float(u.style.vibrato_rate);
    line += ",vdepth:" + fmt_float(u.style.vibrato_depth);
    line += ",amp:" + fmt_float(u.style.amplitude);
    return line;
}

Utterance parse_manifest_line(const std::string & line) {
    const std::vector<std::string> fields = split(line, '\t');
    DSTOK_CHECK(fields.size() == 5, "manifest: expected 5 tab-separated fields, got %zu",
                fields.size());
    Utterance u;
    u.utt_id = fields[0];
    u.wav_path = fields[1];
    DSTOK_CHECK(fields[2].rfind("content:", 0) == 0, "manifest: missing content field");
    for (const auto & tok : split(fields[2].substr(8), ','))
        u.content.push_back(parse_int(tok));
    DSTOK_CHECK(fields[3].rfind("speaker:", 0) == 0, "manifest: missing speaker field");
    u.style.speaker_id = parse_int(fields[3].substr(8));
    const std::vector<std::string> sp = split(fields[4], ',');
    DSTOK_CHECK(sp.size() == 5, "manifest: expected 5 style entries");
    auto value_of = [&](const std::string & entry, const char * key) {
        const std::string prefix = std::string(key) + ":";
        DSTOK_CHECK(entry.rfind(prefix, 0) == 0, "manifest: expected style key %s", key);
        return parse_float(entry.substr(prefix.size()));
    };
    u.style.f0_base = value_of(sp[0], "f0");
    u.style.spectral_tilt = value_of(sp[1], "tilt");
    u.style.vibrato_rate = value_of(sp[2], "vrate");
    u.style.vibrato_depth = value_of(sp[3], "vdepth");
    u.style.amplitude = value_of(sp[4], "amp");
    return u;
}

void write_manifest(const std::string & path, const CorpusManifest & manifest) {
    std::ofstream f(path, std::ios::binary);
    DSTOK_CHECK(f.good(), "write_manifest: cannot open %s", path.c_str());
    for (const auto & u : manifest.utterances) f << manifest_line(u) << "\n";
    DSTOK_CHECK(f.good(), "write_manifest: write failed");
}

CorpusManifest read_manifest(const std::string & path) {
    std::ifstream f(path);
    DSTOK_CHECK(f.good(), "read_manifest: cannot open %s", path.c_str());
    CorpusManifest m;
    m.root_dir = std::filesystem::path(path).parent_path().string();
    std::string line;
    int max_symbol = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        m.utterances.push_back(parse_manifest_line(line));
        for (int s : m.utterances.back().content) max_symbol = std::max(max_symbol, s);
    }
    DSTOK_CHECK(!m.utterances.empty(), "read_manifest: %s has no utterances", path.c_str());
    m.n_symbols = std::max(16, max_symbol + 1);
    // utt ids must be unique
    std::vector<std::string> ids;
    ids.reserve(m.utterances.size());
    for (const auto & u : m.utterances) ids.push_back(u.utt_id);
    std::sort(ids.begin(), ids.end());
    DSTOK_CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end(),
                "read_manifest: duplicate utt ids");
    return m;
}

Split utt_split(size_t index) {
    const size_t m = index % 20;
    if (m == 0) return Split::test;
    if (m == 1) return Split::val;
    return Split::train;
}

std::vector<size_t> split_indices(const CorpusManifest & corpus, Split split) {
    std::vector<size_t> out;
    for (size_t i = 0; i < corpus.utterances.size(); ++i)
        if (utt_split(i) == split) out.push_back(i);
    return out;
}

std::string utt_wav_path(const CorpusManifest & m, const Utterance & u) {
    if (m.root_dir.empty()) return u.wav_path;
    return (std::filesystem::path(m.root_dir) / u.wav_path).string();
}

CorpusManifest build_corpus(const std::string & out_dir, const CorpusSpec & spec) {
    DSTOK_CHECK(spec.n_speakers >= 1 && spec.utts_per_speaker >= 1 && spec.n_symbols >= 2,
                "build_corpus: bad spec");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "wav");

    CorpusManifest manifest;
    manifest.root_dir = out_dir;
    manifest.n_symbols = spec.n_symbols;

    std::vector<StyleParams> styles((size_t)spec.n_speakers);
    for (int spk = 0; spk < spec.n_speakers; ++spk) {
        Rng rng(Rng::derive(spec.seed, 1, (uint64_t)spk));
        StyleParams st;
        st.speaker_id = spk;
        st.f0_base = (float)rng.uniform(90.0, 300.0);
        st.spectral_tilt = (float)rng.uniform(-9.0, -1.0);
        st.vibrato_rate = (float)rng.uniform(4.0, 7.0);
        st.vibrato_depth = (float)rng.uniform(10.0, 50.0);
        st.amplitude = (float)rng.uniform(0.5, 0.95);
        styles[(size_t)spk] = st;
    }

    for (int spk = 0; spk < spec.n_speakers; ++spk) {
        for (int k = 0; k < spec.utts_per_speaker; ++k) {
            Rng rng(Rng::derive(spec.seed, 2, (uint64_t)spk * 1000003u + (uint64_t)k));
            Utterance u;
            char id[32];
            std::snprintf(id, sizeof(id), "s%02d_u%03d", spk, k);
            u.utt_id = id;
            u.wav_path = std::string("wav/") + id + ".wav";
            u.style = styles[(size_t)spk];
            const int len = (int)rng.uniform_int(3, 10);
            u.content.resize((size_t)len);
            for (auto & c : u.content) c = (int)rng.uniform_u64((uint64_t)spec.n_symbols);
            const Waveform wave = synth_utterance(u.content, u.style, utt_synth_seed(u.utt_id),
                                                  spec.n_symbols);
            write_wav(utt_wav_path(manifest, u), wave);
            manifest.utterances.push_back(std::move(u));
        }
    }
    write_manifest((fs::path(out_dir) / "manifest.tsv").string(), manifest);
    return manifest;
}

} // namespace dstok
