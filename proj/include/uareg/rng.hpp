#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace uareg {

// Deterministic splitmix64-based generator. Identical streams on every
// platform and build, which std::normal_distribution does not guarantee.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive on both ends, unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    // Beta(a, b) via Johnk/gamma sampling; used for mixup's optional prior.
    double beta(double a, double b);

    // Derive an independent substream, e.g. one per worker or epoch.
    Rng split(std::uint64_t stream) const {
        Rng child(state_ ^ (0xa0761d6478bd642fULL * (stream + 1)));
        child.next_u64();
        return child;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

} // namespace uareg
