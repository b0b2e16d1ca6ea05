#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace hdnn {

// Deterministic random stream.  The distributions are hand-rolled on top of
// mt19937_64 because std::normal_distribution / std::shuffle are allowed to
// differ between standard libraries; a (seed, call sequence) pair must always
// produce the same bytes in every output file.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // uniform in [0, 1) with 53-bit resolution
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Marsaglia polar method; the second deviate is cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // integer in [0, n); the modulo bias is far below anything we can observe
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace hdnn
