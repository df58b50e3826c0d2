#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace buzz {

// splitmix64 finalizer. All project randomness goes through Rng below instead
// of <random> distributions, whose output differs between standard libraries.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view data) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    // Independent stream derived from (seed, stream_id). Streams are stable
    // under scheduling order, so parallel fits reproduce sequential results.
    static Rng stream(uint64_t seed, uint64_t stream_id) {
        return Rng(mix64(seed) ^ mix64(0x6a09e667f3bcc909ULL + stream_id));
    }
    static Rng stream(uint64_t seed, std::string_view name) {
        return stream(seed, fnv1a64(name));
    }

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased uniform integer in [0, n) via mask rejection.
    uint64_t next_below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t mask = ~0ULL >> __builtin_clzll(n - 1);
        uint64_t v;
        do {
            v = next_u64() & mask;
        } while (v >= n);
        return v;
    }

    int next_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo) + 1));
    }

    double next_real(double lo, double hi) { return lo + next_unit() * (hi - lo); }

    double next_log_uniform(double lo, double hi) {
        return std::exp(next_real(std::log(lo), std::log(hi)));
    }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = next_unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace buzz
