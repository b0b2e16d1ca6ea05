#pragma once

#include <cmath>
#include <stdexcept>

#include "matrix.hpp"

// Cross-entropy on softmax logits.  Everything goes through logsumexp with
// the max subtracted, so arbitrarily large logits stay finite.

namespace hdnn {

namespace detail {

inline double logsumexp(const Vec& z) {
    double m = z[0];
    for (double x : z) m = std::max(m, x);
    double s = 0.0;
    for (double x : z) s += std::exp(x - m);
    return m + std::log(s);
}

inline void check_logits(const Vec& logits, int label) {
    if (logits.empty() || label < 0 || label >= int(logits.size())) {
        throw std::invalid_argument("cross entropy: label out of range");
    }
    for (double x : logits) {
        if (!std::isfinite(x)) throw std::invalid_argument("cross entropy: non-finite logit");
    }
}

}  // namespace detail

inline Vec softmax_probs(const Vec& logits) {
    detail::check_logits(logits, 0);
    const double lse = detail::logsumexp(logits);
    Vec p = logits;
    for (double& x : p) x = std::exp(x - lse);
    return p;
}

inline double softmax_cross_entropy(const Vec& logits, int label) {
    detail::check_logits(logits, label);
    return detail::logsumexp(logits) - logits[std::size_t(label)];
}

// d loss / d logits = softmax(logits) - onehot(label)
inline Vec softmax_cross_entropy_grad(const Vec& logits, int label) {
    detail::check_logits(logits, label);
    Vec g = softmax_probs(logits);
    g[std::size_t(label)] -= 1.0;
    return g;
}

}  // namespace hdnn
