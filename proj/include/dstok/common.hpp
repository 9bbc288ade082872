#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>

namespace dstok {

// Invariant violations and bad inputs throw; the CLI maps them to exit codes.
struct error : std::runtime_error {
    explicit error(const std::string & msg) : std::runtime_error(msg) {}
};

template <typename... Args>
[[noreturn]] inline void fail(const char * fmt, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), fmt, args...);
    throw error(buf);
}

[[noreturn]] inline void fail(const char * msg) { throw error(std::string(msg)); }

#define DSTOK_CHECK(cond, ...)            \
    do {                                  \
        if (!(cond)) ::dstok::fail(__VA_ARGS__); \
    } while (0)

inline uint64_t splitmix64(uint64_t & state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic PRNG (xoshiro256**), identical output on every platform.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t sm = seed;
        for (auto & w : s_) w = splitmix64(sm);
        have_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_f() { return (float)uniform(); }

    // uniform in [lo,hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0,n), rejection sampled
    uint64_t uniform_u64(uint64_t n) {
        DSTOK_CHECK(n > 0, "uniform_u64: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // inclusive integer range
    int64_t uniform_int(int64_t lo, int64_t hi) {
        DSTOK_CHECK(hi >= lo, "uniform_int: empty range");
        return lo + (int64_t)uniform_u64((uint64_t)(hi - lo + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal via Box-Muller, spare cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    float normal_f() { return (float)normal(); }

    // independent stream derived from this rng's seed space and a label
    static uint64_t derive(uint64_t seed, uint64_t stream, uint64_t index) {
        uint64_t st = seed ^ 0x6a09e667f3bcc908ull;
        splitmix64(st);
        st ^= stream * 0xbb67ae8584caa73bull;
        splitmix64(st);
        st ^= index * 0x3c6ef372fe94f82bull;
        return splitmix64(st);
    }

    // serialization for checkpoint resume
    void save_state(uint64_t out[6]) const {
        for (int i = 0; i < 4; ++i) out[i] = s_[i];
        out[4] = have_spare_ ? 1 : 0;
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        out[5] = bits;
    }

    void load_state(const uint64_t in[6]) {
        for (int i = 0; i < 4; ++i) s_[i] = in[i];
        have_spare_ = in[4] != 0;
        std::memcpy(&spare_, &in[5], sizeof(spare_));
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace dstok
