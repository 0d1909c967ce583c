#pragma once

#include <cmath>
#include <cstdint>

namespace rmt {

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// Counter-based stream: value k of stream (key) is a pure function of
// (key, k), so independently derived streams can be drawn in any order
// (or on any thread) with identical results.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    static CounterRng from_seed(std::uint64_t seed) { return CounterRng(mix64(seed)); }

    // Child stream; derivation is order-independent.
    CounterRng derive(std::uint64_t stream) const {
        return CounterRng(hash_combine(key_, stream));
    }

    std::uint64_t next_u64() { return mix64(key_ + (++ctr_) * 0x9e3779b97f4a7c15ULL); }

    // uniform on [0,1)
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0,1]
    double next_unit_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // standard normal, Box-Muller; the spare is cached per stream
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = next_unit_pos();
        const double v = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

  private:
    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rmt
