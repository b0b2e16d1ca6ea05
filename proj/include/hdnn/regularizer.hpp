#pragma once

#include <stdexcept>
#include <type_traits>
#include <variant>
#include <vector>

#include "backprop.hpp"
#include "layers.hpp"
#include "matrix.hpp"

// Regularizers:
//   smoothness   (h/2) sum_j ||K_j - K_{j-1}||_F^2 + ||b_j - b_{j-1}||^2,
//                summed over every trainable field of the architecture,
//                with h = 1 for the plain mlp
//   spectral     sum over layers and weight matrices of the 2-norm, with
//                the rank-one subgradient u1 v1^T
//   L2 terms     0.5 * ||params||^2 on the hidden or head slice; these live
//                on the flattened vector and are added by the caller, see
//                reg_accumulate_hidden below
//
// Skew-parameterised matrices (ms2 K, trainable h1 J) enter the smoothness
// and spectral terms as full matrices; their gradients are stored full and
// collapse onto the strict upper triangle in flatten_grads, which is the
// exact chain rule for the K = U - U^T parameterisation.

namespace hdnn {

struct RegConfig {
    double alpha = 5e-4;     // smoothness across depth
    double alpha_ell = 0.0;  // L2 on hidden parameters
    double alpha_n = 1e-4;   // L2 on head parameters
    double norm_reg = 0.0;   // spectral-norm sum
};

namespace detail {

// Trainable fields of a layer in a fixed order (matches flatten_params).
// Fixed matrices (h2 X, non-trainable h1 J) are excluded.
template <typename L>
inline void collect_fields(L& l, std::vector<const Mat*>& mats, std::vector<const Vec*>& vecs) {
    using T = std::decay_t<L>;
    if constexpr (std::is_same_v<T, H1Layer>) {
        if (l.train_j) mats.push_back(&l.J);
        mats.push_back(&l.K);
        vecs.push_back(&l.b);
    } else if constexpr (std::is_same_v<T, H2Layer>) {
        mats.push_back(&l.Kp);
        mats.push_back(&l.Kq);
        vecs.push_back(&l.bp);
        vecs.push_back(&l.bq);
    } else if constexpr (std::is_same_v<T, MS1Layer>) {
        mats.push_back(&l.K0);
        vecs.push_back(&l.b1);
        vecs.push_back(&l.b2);
    } else if constexpr (std::is_same_v<T, MS2Layer>) {
        mats.push_back(&l.K);
        vecs.push_back(&l.b);
    } else if constexpr (std::is_same_v<T, MS3Layer>) {
        mats.push_back(&l.K1);
        mats.push_back(&l.K2);
        vecs.push_back(&l.b1);
        vecs.push_back(&l.b2);
    } else {
        mats.push_back(&l.K);
        vecs.push_back(&l.b);
    }
}

inline void trainable_fields(const Layer& layer, std::vector<const Mat*>& mats,
                             std::vector<const Vec*>& vecs) {
    std::visit([&](const auto& l) { collect_fields(l, mats, vecs); }, layer);
}

// mutable view into a gradient holder, same order
inline void gradient_fields(Layer& layer, std::vector<Mat*>& mats, std::vector<Vec*>& vecs) {
    std::visit(
        [&](auto& l) {
            std::vector<const Mat*> cm;
            std::vector<const Vec*> cv;
            collect_fields(l, cm, cv);
            for (const Mat* m : cm) mats.push_back(const_cast<Mat*>(m));
            for (const Vec* v : cv) vecs.push_back(const_cast<Vec*>(v));
        },
        layer);
}

inline double sq_diff(const Mat& a, const Mat& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.a.size(); ++i) {
        const double d = a.a[i] - b.a[i];
        s += d * d;
    }
    return s;
}

inline double sq_diff(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

inline double smoothness_value(const Network& net) {
    const int N = net.depth();
    if (N < 2) return 0.0;
    const double h = net.step_size();
    double total = 0.0;
    for (int j = 1; j < N; ++j) {
        std::vector<const Mat*> ma, mb;
        std::vector<const Vec*> va, vb;
        detail::trainable_fields(net.layers[std::size_t(j) - 1], ma, va);
        detail::trainable_fields(net.layers[std::size_t(j)], mb, vb);
        for (std::size_t f = 0; f < ma.size(); ++f) total += detail::sq_diff(*ma[f], *mb[f]);
        for (std::size_t f = 0; f < va.size(); ++f) total += detail::sq_diff(*va[f], *vb[f]);
    }
    return 0.5 * h * total;
}

// adds coef * d(smoothness)/d(params) into g
inline void smoothness_grads(const Network& net, double coef, GradientSet& g) {
    const int N = net.depth();
    if (N < 2 || coef == 0.0) return;
    const double ch = coef * net.step_size();
    for (int m = 0; m < N; ++m) {
        std::vector<const Mat*> cur_m, prev_m, next_m;
        std::vector<const Vec*> cur_v, prev_v, next_v;
        detail::trainable_fields(net.layers[std::size_t(m)], cur_m, cur_v);
        if (m >= 1) detail::trainable_fields(net.layers[std::size_t(m) - 1], prev_m, prev_v);
        if (m + 1 < N) detail::trainable_fields(net.layers[std::size_t(m) + 1], next_m, next_v);

        std::vector<Mat*> gm;
        std::vector<Vec*> gv;
        detail::gradient_fields(g.layers[std::size_t(m)], gm, gv);

        for (std::size_t f = 0; f < cur_m.size(); ++f) {
            Mat& out = *gm[f];
            const Mat& cur = *cur_m[f];
            for (std::size_t i = 0; i < out.a.size(); ++i) {
                double d = 0.0;
                if (m >= 1) d += cur.a[i] - prev_m[f]->a[i];
                if (m + 1 < N) d -= next_m[f]->a[i] - cur.a[i];
                out.a[i] += ch * d;
            }
        }
        for (std::size_t f = 0; f < cur_v.size(); ++f) {
            Vec& out = *gv[f];
            const Vec& cur = *cur_v[f];
            for (std::size_t i = 0; i < out.size(); ++i) {
                double d = 0.0;
                if (m >= 1) d += cur[i] - (*prev_v[f])[i];
                if (m + 1 < N) d -= (*next_v[f])[i] - cur[i];
                out[i] += ch * d;
            }
        }
    }
}

inline double spectral_value(const Network& net) {
    double total = 0.0;
    for (const Layer& layer : net.layers) {
        std::vector<const Mat*> mats;
        std::vector<const Vec*> vecs;
        detail::trainable_fields(layer, mats, vecs);
        for (const Mat* m : mats) total += leading_singular(*m).sigma;
    }
    return total;
}

inline void spectral_grads(const Network& net, double coef, GradientSet& g) {
    if (coef == 0.0) return;
    for (std::size_t j = 0; j < net.layers.size(); ++j) {
        std::vector<const Mat*> mats;
        std::vector<const Vec*> vecs;
        detail::trainable_fields(net.layers[j], mats, vecs);
        std::vector<Mat*> gm;
        std::vector<Vec*> gv;
        detail::gradient_fields(g.layers[j], gm, gv);
        for (std::size_t f = 0; f < mats.size(); ++f) {
            const SingularTriplet t = leading_singular(*mats[f]);
            mat_axpy(*gm[f], coef, outer(t.u, t.v));
        }
    }
}

// Total regularizer value, including the flat L2 pieces.
inline double reg_value(const Network& net, const RegConfig& cfg) {
    double v = 0.0;
    if (cfg.alpha != 0.0) v += cfg.alpha * smoothness_value(net);
    if (cfg.norm_reg != 0.0) v += cfg.norm_reg * spectral_value(net);
    if (cfg.alpha_ell != 0.0) {
        const auto p = flatten_params(net, ParamSel::Hidden);
        v += 0.5 * cfg.alpha_ell * dot(p, p);
    }
    if (cfg.alpha_n != 0.0) {
        const auto p = flatten_params(net, ParamSel::Head);
        v += 0.5 * cfg.alpha_n * dot(p, p);
    }
    return v;
}

// Structural hidden-parameter gradients (smoothness + spectral) into g.
// The alpha_ell term is alpha_ell * flatten_params(net, Hidden) and must be
// added on the flattened vector by the caller, after any mask projection.
inline void reg_accumulate_hidden(const Network& net, const RegConfig& cfg, GradientSet& g) {
    smoothness_grads(net, cfg.alpha, g);
    spectral_grads(net, cfg.norm_reg, g);
}

}  // namespace hdnn
