#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace hetvae {

// Counter-based generator (splitmix64 finalizer over key ^ counter).
// Every random decision in the project flows through one of these; splitting
// derives an independent stream from a label, so per-trajectory / per-iteration
// streams do not depend on evaluation order.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x5851f42d4c957f2dULL)) {}

    Rng split(std::uint64_t label) const {
        Rng r(0);
        r.key_ = mix(key_ ^ mix(label ^ 0x9e3779b97f4a7c15ULL));
        r.ctr_ = 0;
        return r;
    }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only; deterministic counter consumption.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // m distinct indices drawn uniformly from [0, n), returned sorted.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t m);

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t ctr_ = 0;
};

// FNV-1a, used to derive per-name generator streams (parameter init) so draws
// do not depend on creation order.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t m) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    // partial Fisher-Yates: the first m slots end up uniform without replacement
    for (std::size_t i = 0; i < m && i + 1 < n; ++i) {
        std::size_t j = i + uniform_int(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(m);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace hetvae
