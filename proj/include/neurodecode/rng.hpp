#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace neurodecode {

// splitmix64 finalizer; good avalanche, cheap, stable across platforms.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-style seed derivation: child streams are a pure function of
// (base, path), so adding folds or grid points never perturbs the streams
// of earlier ones.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(base);
    for (std::uint64_t x : path) h = mix64(h ^ mix64(x + 0x9e3779b97f4a7c15ULL));
    return h;
}

// Stream tags used when deriving child seeds. Values are arbitrary but fixed;
// changing them changes every derived stream.
enum class Stream : std::uint64_t {
    Init = 1,
    Shuffle = 2,
    DropoutMask = 3,
    SubjectOrder = 4,
    Train = 5,
    Data = 6,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream s,
                                 std::initializer_list<std::uint64_t> path = {}) {
    std::uint64_t h = derive_seed(base, {static_cast<std::uint64_t>(s)});
    for (std::uint64_t x : path) h = mix64(h ^ mix64(x + 0x9e3779b97f4a7c15ULL));
    return h;
}

// mt19937_64 with our own distributions on top. The standard pins the engine's
// output exactly; the distribution algorithms in <random> are implementation
// defined, so uniform/normal/shuffle are done by hand to keep every stream
// reproducible under one seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, n) via rejection sampling.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Box-Muller; the second deviate is cached for the next call.
    double normal(double mean, double stddev) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates, back to front.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(items[i], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace neurodecode
