#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

// Synthetic 2-d benchmark generators.  All three emit balanced two-class
// sets, deterministic under seed, classes interleaved (even index = class 0)
// so any prefix of the sample list is roughly balanced too.
//
// Parametrizations (no canonical definition exists, these are pinned here
// and the geometry tests freeze their separation margins):
//   swiss roll      arm 0 at angle t in [0, 3pi]: radius 0.1 + 0.3 t / pi,
//                   arm 1 is arm 0 rotated by pi; Gaussian noise on both
//                   coordinates.  Consecutive windings are 0.3 apart.
//   double moons    class 0 (cos t, sin t), class 1 (1 - cos t, 0.5 - sin t),
//                   t in [0, pi]; Gaussian noise on both coordinates.
//   double circles  radii 1 and 2, uniform angle, Gaussian noise applied
//                   radially only.

namespace hdnn {

struct Dataset {
    std::vector<Vec> features;
    std::vector<int> labels;
    int n_classes = 2;

    int size() const { return int(features.size()); }
    int dim() const { return features.empty() ? 0 : int(features.front().size()); }
};

namespace detail {

inline void require_pair_count(int s) {
    if (s < 2 || s % 2 != 0) {
        throw std::invalid_argument("dataset generators need an even sample count >= 2");
    }
}

}  // namespace detail

inline std::pair<double, double> swiss_roll_curve(int label, double t) {
    const double r = 0.1 + 0.3 * t / 3.14159265358979323846;
    double x = r * std::cos(t);
    double y = r * std::sin(t);
    if (label == 1) {
        x = -x;
        y = -y;
    }
    return {x, y};
}

inline Dataset gen_swiss_roll(int s, double noise, std::uint64_t seed) {
    detail::require_pair_count(s);
    Rng rng(seed);
    Dataset d;
    d.features.reserve(std::size_t(s));
    d.labels.reserve(std::size_t(s));
    const double t_max = 3.0 * 3.14159265358979323846;
    for (int i = 0; i < s; ++i) {
        const int label = i % 2;
        const double t = rng.uniform(0.0, t_max);
        auto [x, y] = swiss_roll_curve(label, t);
        x += rng.normal(0.0, noise);
        y += rng.normal(0.0, noise);
        d.features.push_back(Vec{x, y});
        d.labels.push_back(label);
    }
    return d;
}

inline std::pair<double, double> moons_curve(int label, double t) {
    if (label == 0) return {std::cos(t), std::sin(t)};
    return {1.0 - std::cos(t), 0.5 - std::sin(t)};
}

inline Dataset gen_double_moons(int s, double noise, std::uint64_t seed) {
    detail::require_pair_count(s);
    Rng rng(seed);
    Dataset d;
    d.features.reserve(std::size_t(s));
    d.labels.reserve(std::size_t(s));
    for (int i = 0; i < s; ++i) {
        const int label = i % 2;
        const double t = rng.uniform(0.0, 3.14159265358979323846);
        auto [x, y] = moons_curve(label, t);
        x += rng.normal(0.0, noise);
        y += rng.normal(0.0, noise);
        d.features.push_back(Vec{x, y});
        d.labels.push_back(label);
    }
    return d;
}

inline Dataset gen_double_circles(int s, double noise, std::uint64_t seed) {
    detail::require_pair_count(s);
    Rng rng(seed);
    Dataset d;
    d.features.reserve(std::size_t(s));
    d.labels.reserve(std::size_t(s));
    for (int i = 0; i < s; ++i) {
        const int label = i % 2;
        const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double r = (label == 0 ? 1.0 : 2.0) + rng.normal(0.0, noise);
        d.features.push_back(Vec{r * std::cos(theta), r * std::sin(theta)});
        d.labels.push_back(label);
    }
    return d;
}

// Scatters raw features into a zero vector of width n.  placement maps raw
// index -> target index; the default keeps the first two coordinates in
// place, which is the usual zero-padding.
inline Dataset augment(const Dataset& d, int n,
                       const std::vector<std::pair<int, int>>& placement = {{0, 0}, {1, 1}}) {
    if (n < 2) throw std::invalid_argument("augment: target width must be at least 2");
    std::vector<bool> taken(std::size_t(n), false);
    for (const auto& [raw, target] : placement) {
        if (raw < 0 || raw >= d.dim()) throw std::invalid_argument("augment: raw index out of range");
        if (target < 0 || target >= n) throw std::invalid_argument("augment: target index out of range");
        if (taken[std::size_t(target)]) throw std::invalid_argument("augment: placement not injective");
        taken[std::size_t(target)] = true;
    }
    Dataset out;
    out.n_classes = d.n_classes;
    out.labels = d.labels;
    out.features.reserve(d.features.size());
    for (const Vec& f : d.features) {
        Vec v(std::size_t(n), 0.0);
        for (const auto& [raw, target] : placement) v[std::size_t(target)] = f[std::size_t(raw)];
        out.features.push_back(std::move(v));
    }
    return out;
}

// Shuffled index batches covering 0..s-1 exactly once; the final batch may
// be short.
inline std::vector<std::vector<int>> epoch_batches(int s, int batch, Rng& rng) {
    if (s <= 0 || batch <= 0) throw std::invalid_argument("epoch_batches: sizes must be positive");
    std::vector<int> idx(std::size_t(s), 0);
    for (int i = 0; i < s; ++i) idx[std::size_t(i)] = i;
    rng.shuffle(idx);
    std::vector<std::vector<int>> batches;
    for (int start = 0; start < s; start += batch) {
        const int end = std::min(s, start + batch);
        batches.emplace_back(idx.begin() + start, idx.begin() + end);
    }
    return batches;
}

}  // namespace hdnn
