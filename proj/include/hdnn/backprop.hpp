#pragma once

#include <cstddef>
#include <stdexcept>
#include <type_traits>
#include <variant>
#include <vector>

#include "activation.hpp"
#include "layers.hpp"
#include "matrix.hpp"

// Reverse-mode differentiation for the layer updates in layers.hpp.
//
// Conventions used throughout:
//   delta_j        column vector dL/dy_j, one per state in the forward trace
//   layer_jacobian standard layout dy_out/dy_in of a single layer
//   BsmTrace       running products of layer Jacobians taken from the output
//                  end inward, i.e. mats[k] = dy_N/dy_{N-k}
//
// For the two-block layers the second half-update reads the already-updated
// partner half, so the backward pass must thread an intermediate sensitivity
// through in the reverse order.  Because the first half-update has identity
// dependence on its own half, that intermediate sensitivity coincides with
// the finished delta of that half; the parameter gradients below rely on
// this and read it straight out of deltas[j].

namespace hdnn {

namespace detail {

inline Vec hadamard(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("hadamard: size mismatch");
    Vec r = a;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] *= b[i];
    return r;
}

inline Vec front_half(const Vec& y, int half) { return Vec(y.begin(), y.begin() + half); }
inline Vec back_half(const Vec& y, int half) { return Vec(y.begin() + half, y.end()); }

inline Vec join_halves(const Vec& a, const Vec& b) {
    Vec r = a;
    r.insert(r.end(), b.begin(), b.end());
    return r;
}

// row i of A scaled by d[i]; equals diag(d) * A
inline Mat scale_rows(const Mat& A, const Vec& d) {
    if (std::size_t(A.rows) != d.size()) throw std::invalid_argument("scale_rows: size mismatch");
    Mat r = A;
    for (int i = 0; i < r.rows; ++i) {
        for (int j = 0; j < r.cols; ++j) r(i, j) *= d[std::size_t(i)];
    }
    return r;
}

inline Mat from_blocks(const Mat& tl, const Mat& tr, const Mat& bl, const Mat& br) {
    if (tl.rows != tr.rows || bl.rows != br.rows || tl.cols != bl.cols || tr.cols != br.cols) {
        throw std::invalid_argument("from_blocks: inconsistent shapes");
    }
    Mat r(tl.rows + bl.rows, tl.cols + tr.cols);
    for (int i = 0; i < tl.rows; ++i) {
        for (int j = 0; j < tl.cols; ++j) r(i, j) = tl(i, j);
        for (int j = 0; j < tr.cols; ++j) r(i, tl.cols + j) = tr(i, j);
    }
    for (int i = 0; i < bl.rows; ++i) {
        for (int j = 0; j < bl.cols; ++j) r(tl.rows + i, j) = bl(i, j);
        for (int j = 0; j < br.cols; ++j) r(tl.rows + i, tl.cols + j) = br(i, j);
    }
    return r;
}

inline Vec preact(const Mat& K, const Vec& y, const Vec& b) {
    Vec u = matvec(K, y);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += b[i];
    return u;
}

inline Vec preact_t(const Mat& K, const Vec& y, const Vec& b) {
    Vec u = matvec_t(K, y);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += b[i];
    return u;
}

}  // namespace detail

// ---------------------------------------------------------- state deltas --

inline Vec delta_h1(const H1Layer& l, Act act, const Vec& y_in, const Vec& dplus) {
    const Vec d = act_deriv(act, detail::preact(l.K, y_in, l.b));
    const Vec a = matvec_t(l.J, dplus);
    const Vec t = matvec_t(l.K, detail::hadamard(d, matvec(l.K, a)));
    Vec r = dplus;
    vec_axpy(r, l.h, t);
    return r;
}

inline Vec delta_h2(const H2Layer& l, Act act, const Vec& y_in, const Vec& y_out, const Vec& dplus) {
    const int half = l.Kp.rows;
    const Vec q0 = detail::back_half(y_in, half);
    const Vec p1 = detail::front_half(y_out, half);
    const Vec gplus = detail::front_half(dplus, half);
    const Vec lplus = detail::back_half(dplus, half);

    const Vec dp = act_deriv(act, detail::preact(l.Kp, p1, l.bp));
    Vec g = gplus;  // sensitivity of the updated p half
    vec_axpy(g, l.h, matvec_t(l.Kp, detail::hadamard(dp, matvec(l.Kp, matvec_t(l.X, lplus)))));

    const Vec dq = act_deriv(act, detail::preact(l.Kq, q0, l.bq));
    Vec lam = lplus;
    vec_axpy(lam, -l.h, matvec_t(l.Kq, detail::hadamard(dq, matvec(l.Kq, matvec(l.X, g)))));

    return detail::join_halves(g, lam);
}

inline Vec delta_ms1(const MS1Layer& l, Act act, const Vec& y_in, const Vec& y_out, const Vec& dplus) {
    const int half = l.K0.rows;
    const Vec y0 = detail::front_half(y_in, half);
    const Vec z1 = detail::back_half(y_out, half);
    const Vec dyp = detail::front_half(dplus, half);
    const Vec dzp = detail::back_half(dplus, half);

    const Vec d2 = act_deriv(act, detail::preact(l.K0, z1, l.b2));
    Vec dz = dzp;  // sensitivity of the updated z half
    vec_axpy(dz, l.h, matvec_t(l.K0, detail::hadamard(d2, dyp)));

    const Vec d1 = act_deriv(act, detail::preact_t(l.K0, y0, l.b1));
    Vec dy = dyp;
    vec_axpy(dy, -l.h, matvec(l.K0, detail::hadamard(d1, dz)));

    return detail::join_halves(dy, dz);
}

inline Vec delta_ms2(const MS2Layer& l, Act act, const Vec& y_in, const Vec& dplus) {
    const Vec d = act_deriv(act, detail::preact(l.K, y_in, l.b));
    Vec r = dplus;
    vec_axpy(r, l.h, matvec_t(l.K, detail::hadamard(d, dplus)));
    return r;
}

inline Vec delta_ms3(const MS3Layer& l, Act act, const Vec& y_in, const Vec& y_out, const Vec& dplus) {
    const int half = l.K1.rows;
    const Vec z0 = detail::back_half(y_in, half);
    const Vec y1 = detail::front_half(y_out, half);
    const Vec dyp = detail::front_half(dplus, half);
    const Vec dzp = detail::back_half(dplus, half);

    const Vec d2 = act_deriv(act, detail::preact(l.K2, y1, l.b2));
    Vec dy = dyp;  // sensitivity of the updated y half
    vec_axpy(dy, -l.h, matvec_t(l.K2, detail::hadamard(d2, matvec(l.K2, dzp))));

    const Vec d1 = act_deriv(act, detail::preact(l.K1, z0, l.b1));
    Vec dz = dzp;
    vec_axpy(dz, l.h, matvec_t(l.K1, detail::hadamard(d1, matvec(l.K1, dy))));

    return detail::join_halves(dy, dz);
}

inline Vec delta_mlp(const MlpLayer& l, Act act, const Vec& y_in, const Vec& dplus) {
    const Vec d = act_deriv(act, detail::preact(l.K, y_in, l.b));
    return matvec_t(l.K, detail::hadamard(d, dplus));
}

// deltas[j] = dL/dy_j for j = 0..N given dL/dy_N at the network output
// (before the linear head).
inline std::vector<Vec> backward_deltas(const Network& net, const ForwardTrace& tr,
                                        const Vec& delta_out) {
    const int N = net.depth();
    if (tr.states.size() != std::size_t(N) + 1) {
        throw std::invalid_argument("backward_deltas: trace does not match network depth");
    }
    if (delta_out.size() != std::size_t(net.n)) {
        throw std::invalid_argument("backward_deltas: delta size mismatch");
    }
    std::vector<Vec> deltas(std::size_t(N) + 1);
    deltas[std::size_t(N)] = delta_out;
    for (int j = N - 1; j >= 0; --j) {
        const Vec& yin = tr.states[std::size_t(j)];
        const Vec& yout = tr.states[std::size_t(j) + 1];
        const Vec& dplus = deltas[std::size_t(j) + 1];
        deltas[std::size_t(j)] = std::visit(
            [&](const auto& l) -> Vec {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, H1Layer>) return delta_h1(l, net.act, yin, dplus);
                else if constexpr (std::is_same_v<T, H2Layer>) return delta_h2(l, net.act, yin, yout, dplus);
                else if constexpr (std::is_same_v<T, MS1Layer>) return delta_ms1(l, net.act, yin, yout, dplus);
                else if constexpr (std::is_same_v<T, MS2Layer>) return delta_ms2(l, net.act, yin, dplus);
                else if constexpr (std::is_same_v<T, MS3Layer>) return delta_ms3(l, net.act, yin, yout, dplus);
                else return delta_mlp(l, net.act, yin, dplus);
            },
            net.layers[std::size_t(j)]);
    }
    return deltas;
}

// ------------------------------------------------------- layer Jacobians --

// dy_out/dy_in in standard layout.  Intermediate half-states are recomputed
// from y_in so the function is usable without a forward trace.
inline Mat layer_jacobian(const Layer& layer, Act act, const Vec& y_in) {
    return std::visit(
        [&](const auto& l) -> Mat {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, H1Layer>) {
                const Vec d = act_deriv(act, detail::preact(l.K, y_in, l.b));
                const Mat JKtD = matmul(l.J, transpose(detail::scale_rows(l.K, d)));
                Mat F = Mat::identity(int(y_in.size()));
                mat_axpy(F, l.h, matmul(JKtD, l.K));
                return F;
            } else if constexpr (std::is_same_v<T, H2Layer>) {
                const int half = l.Kp.rows;
                const Vec q0 = detail::back_half(y_in, half);
                Vec p1 = detail::front_half(y_in, half);
                const Vec sq = act_value(act, detail::preact(l.Kq, q0, l.bq));
                vec_axpy(p1, -l.h, matvec_t(l.X, matvec_t(l.Kq, sq)));

                const Vec dq = act_deriv(act, detail::preact(l.Kq, q0, l.bq));
                const Vec dp = act_deriv(act, detail::preact(l.Kp, p1, l.bp));
                const Mat P = matmul(transpose(l.Kp), detail::scale_rows(l.Kp, dp));
                const Mat Q = matmul(transpose(l.Kq), detail::scale_rows(l.Kq, dq));
                const Mat XP = matmul(l.X, P);
                const Mat XtQ = matmul(transpose(l.X), Q);
                Mat br = Mat::identity(half);
                mat_axpy(br, -l.h * l.h, matmul(XP, XtQ));
                return detail::from_blocks(Mat::identity(half), mat_scale(XtQ, -l.h),
                                           mat_scale(XP, l.h), br);
            } else if constexpr (std::is_same_v<T, MS1Layer>) {
                const int half = l.K0.rows;
                const Vec y0 = detail::front_half(y_in, half);
                Vec z1 = detail::back_half(y_in, half);
                const Vec s1 = act_value(act, detail::preact_t(l.K0, y0, l.b1));
                vec_axpy(z1, -l.h, s1);

                const Vec d1 = act_deriv(act, detail::preact_t(l.K0, y0, l.b1));
                const Vec d2 = act_deriv(act, detail::preact(l.K0, z1, l.b2));
                const Mat D2K = detail::scale_rows(l.K0, d2);
                const Mat D1Kt = detail::scale_rows(transpose(l.K0), d1);
                Mat tl = Mat::identity(half);
                mat_axpy(tl, -l.h * l.h, matmul(D2K, D1Kt));
                return detail::from_blocks(tl, mat_scale(D2K, l.h),
                                           mat_scale(D1Kt, -l.h), Mat::identity(half));
            } else if constexpr (std::is_same_v<T, MS2Layer>) {
                const Vec d = act_deriv(act, detail::preact(l.K, y_in, l.b));
                Mat F = Mat::identity(int(y_in.size()));
                mat_axpy(F, l.h, detail::scale_rows(l.K, d));
                return F;
            } else if constexpr (std::is_same_v<T, MS3Layer>) {
                const int half = l.K1.rows;
                const Vec z0 = detail::back_half(y_in, half);
                Vec y1 = detail::front_half(y_in, half);
                const Vec s1 = act_value(act, detail::preact(l.K1, z0, l.b1));
                vec_axpy(y1, l.h, matvec_t(l.K1, s1));

                const Vec d1 = act_deriv(act, detail::preact(l.K1, z0, l.b1));
                const Vec d2 = act_deriv(act, detail::preact(l.K2, y1, l.b2));
                const Mat A = matmul(transpose(l.K1), detail::scale_rows(l.K1, d1));
                const Mat B = matmul(transpose(l.K2), detail::scale_rows(l.K2, d2));
                Mat br = Mat::identity(half);
                mat_axpy(br, -l.h * l.h, matmul(B, A));
                return detail::from_blocks(Mat::identity(half), mat_scale(A, l.h),
                                           mat_scale(B, -l.h), br);
            } else {
                const Vec d = act_deriv(act, detail::preact(l.K, y_in, l.b));
                return detail::scale_rows(l.K, d);
            }
        },
        layer);
}

// ------------------------------------------- backward sensitivity matrix --

// mats[k] = dy_N/dy_{N-k} for k = 0..N, built by multiplying layer
// Jacobians from the output end inward.  norm2 entries come from two_norm
// and therefore never overestimate the true spectral norm.
struct BsmTrace {
    std::vector<Mat> mats;
    std::vector<double> norm2;
    std::vector<double> norm_fro;
};

inline BsmTrace bsm_trace(const Network& net, const ForwardTrace& tr) {
    const int N = net.depth();
    if (tr.states.size() != std::size_t(N) + 1) {
        throw std::invalid_argument("bsm_trace: trace does not match network depth");
    }
    BsmTrace out;
    out.mats.reserve(std::size_t(N) + 1);
    out.mats.push_back(Mat::identity(net.n));
    for (int k = 1; k <= N; ++k) {
        const int j = N - k;
        const Mat F = layer_jacobian(net.layers[std::size_t(j)], net.act, tr.states[std::size_t(j)]);
        out.mats.push_back(matmul(out.mats.back(), F));
    }
    out.norm2.reserve(out.mats.size());
    out.norm_fro.reserve(out.mats.size());
    for (const Mat& m : out.mats) {
        out.norm2.push_back(two_norm(m));
        out.norm_fro.push_back(frobenius(m));
    }
    return out;
}

// ---------------------------------------------------- parameter gradients --

// Gradients reuse the layer structs as field-for-field holders; the h and
// train_j members are carried along unchanged so flatten_grads can mirror
// flatten_params without consulting the network.  Skew-parameterised
// matrices (ms2 K, trainable h1 J) are stored as full-matrix gradients and
// projected onto the strict upper triangle only when flattened.
struct GradientSet {
    std::vector<Layer> layers;
    Mat gW;
    Vec gc;
};

namespace detail {

inline void zero_mat(Mat& m) { std::fill(m.a.begin(), m.a.end(), 0.0); }
inline void zero_vec(Vec& v) { std::fill(v.begin(), v.end(), 0.0); }

}  // namespace detail

inline GradientSet make_zero_grads(const Network& net) {
    GradientSet g;
    g.layers.reserve(net.layers.size());
    for (const Layer& layer : net.layers) {
        Layer z = layer;
        std::visit(
            [](auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, H1Layer>) {
                    detail::zero_mat(l.J);
                    detail::zero_mat(l.K);
                    detail::zero_vec(l.b);
                } else if constexpr (std::is_same_v<T, H2Layer>) {
                    detail::zero_mat(l.X);
                    detail::zero_mat(l.Kp);
                    detail::zero_mat(l.Kq);
                    detail::zero_vec(l.bp);
                    detail::zero_vec(l.bq);
                } else if constexpr (std::is_same_v<T, MS1Layer>) {
                    detail::zero_mat(l.K0);
                    detail::zero_vec(l.b1);
                    detail::zero_vec(l.b2);
                } else if constexpr (std::is_same_v<T, MS2Layer>) {
                    detail::zero_mat(l.K);
                    detail::zero_vec(l.b);
                } else if constexpr (std::is_same_v<T, MS3Layer>) {
                    detail::zero_mat(l.K1);
                    detail::zero_mat(l.K2);
                    detail::zero_vec(l.b1);
                    detail::zero_vec(l.b2);
                } else {
                    detail::zero_mat(l.K);
                    detail::zero_vec(l.b);
                }
            },
            z);
        g.layers.push_back(std::move(z));
    }
    g.gW = Mat(net.head.W.rows, net.head.W.cols);
    g.gc = Vec(net.head.c.size(), 0.0);
    return g;
}

inline void scale_grads(GradientSet& g, double s) {
    for (Layer& layer : g.layers) {
        std::visit(
            [&](auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, H1Layer>) {
                    for (double& x : l.J.a) x *= s;
                    for (double& x : l.K.a) x *= s;
                    for (double& x : l.b) x *= s;
                } else if constexpr (std::is_same_v<T, H2Layer>) {
                    for (double& x : l.Kp.a) x *= s;
                    for (double& x : l.Kq.a) x *= s;
                    for (double& x : l.bp) x *= s;
                    for (double& x : l.bq) x *= s;
                } else if constexpr (std::is_same_v<T, MS1Layer>) {
                    for (double& x : l.K0.a) x *= s;
                    for (double& x : l.b1) x *= s;
                    for (double& x : l.b2) x *= s;
                } else if constexpr (std::is_same_v<T, MS2Layer>) {
                    for (double& x : l.K.a) x *= s;
                    for (double& x : l.b) x *= s;
                } else if constexpr (std::is_same_v<T, MS3Layer>) {
                    for (double& x : l.K1.a) x *= s;
                    for (double& x : l.K2.a) x *= s;
                    for (double& x : l.b1) x *= s;
                    for (double& x : l.b2) x *= s;
                } else {
                    for (double& x : l.K.a) x *= s;
                    for (double& x : l.b) x *= s;
                }
            },
            layer);
    }
    for (double& x : g.gW.a) x *= s;
    for (double& x : g.gc) x *= s;
}

// Adds one sample's hidden-layer gradients into g.  deltas must come from
// backward_deltas on the same trace; the formulas read the intermediate
// half sensitivities straight out of deltas[j] as noted at the top.
inline void accumulate_param_grads(const Network& net, const ForwardTrace& tr,
                                   const std::vector<Vec>& deltas, GradientSet& g) {
    const int N = net.depth();
    if (deltas.size() != std::size_t(N) + 1 || g.layers.size() != std::size_t(N)) {
        throw std::invalid_argument("accumulate_param_grads: size mismatch");
    }
    for (int j = 0; j < N; ++j) {
        const Vec& y0 = tr.states[std::size_t(j)];
        const Vec& y1 = tr.states[std::size_t(j) + 1];
        const Vec& del0 = deltas[std::size_t(j)];
        const Vec& del1 = deltas[std::size_t(j) + 1];
        std::visit(
            [&](auto& gl) {
                using T = std::decay_t<decltype(gl)>;
                const auto& nl = std::get<T>(net.layers[std::size_t(j)]);
                if constexpr (std::is_same_v<T, H1Layer>) {
                    const Vec u = detail::preact(nl.K, y0, nl.b);
                    const Vec s = act_value(net.act, u);
                    const Vec d = act_deriv(net.act, u);
                    const Vec a = matvec_t(nl.J, del1);
                    const Vec w = detail::hadamard(d, matvec(nl.K, a));
                    mat_axpy(gl.K, nl.h, outer(s, a));
                    mat_axpy(gl.K, nl.h, outer(w, y0));
                    vec_axpy(gl.b, nl.h, w);
                    if (nl.train_j) mat_axpy(gl.J, nl.h, outer(del1, matvec_t(nl.K, s)));
                } else if constexpr (std::is_same_v<T, H2Layer>) {
                    const int half = nl.Kp.rows;
                    const Vec q0 = detail::back_half(y0, half);
                    const Vec p1 = detail::front_half(y1, half);
                    const Vec gam = detail::front_half(del0, half);
                    const Vec lam = detail::back_half(del1, half);

                    const Vec uq = detail::preact(nl.Kq, q0, nl.bq);
                    const Vec sq = act_value(net.act, uq);
                    const Vec aq = matvec(nl.X, gam);
                    const Vec wq = detail::hadamard(act_deriv(net.act, uq), matvec(nl.Kq, aq));
                    mat_axpy(gl.Kq, -nl.h, outer(sq, aq));
                    mat_axpy(gl.Kq, -nl.h, outer(wq, q0));
                    vec_axpy(gl.bq, -nl.h, wq);

                    const Vec up = detail::preact(nl.Kp, p1, nl.bp);
                    const Vec sp = act_value(net.act, up);
                    const Vec ap = matvec_t(nl.X, lam);
                    const Vec wp = detail::hadamard(act_deriv(net.act, up), matvec(nl.Kp, ap));
                    mat_axpy(gl.Kp, nl.h, outer(sp, ap));
                    mat_axpy(gl.Kp, nl.h, outer(wp, p1));
                    vec_axpy(gl.bp, nl.h, wp);
                } else if constexpr (std::is_same_v<T, MS1Layer>) {
                    const int half = nl.K0.rows;
                    const Vec yy0 = detail::front_half(y0, half);
                    const Vec z1 = detail::back_half(y1, half);
                    const Vec dyp = detail::front_half(del1, half);
                    const Vec dz = detail::back_half(del0, half);

                    const Vec v1 = detail::hadamard(act_deriv(net.act, detail::preact_t(nl.K0, yy0, nl.b1)), dz);
                    const Vec v2 = detail::hadamard(act_deriv(net.act, detail::preact(nl.K0, z1, nl.b2)), dyp);
                    mat_axpy(gl.K0, -nl.h, outer(yy0, v1));
                    mat_axpy(gl.K0, nl.h, outer(v2, z1));
                    vec_axpy(gl.b1, -nl.h, v1);
                    vec_axpy(gl.b2, nl.h, v2);
                } else if constexpr (std::is_same_v<T, MS2Layer>) {
                    const Vec v = detail::hadamard(act_deriv(net.act, detail::preact(nl.K, y0, nl.b)), del1);
                    mat_axpy(gl.K, nl.h, outer(v, y0));
                    vec_axpy(gl.b, nl.h, v);
                } else if constexpr (std::is_same_v<T, MS3Layer>) {
                    const int half = nl.K1.rows;
                    const Vec z0 = detail::back_half(y0, half);
                    const Vec yy1 = detail::front_half(y1, half);
                    const Vec dy = detail::front_half(del0, half);
                    const Vec dzp = detail::back_half(del1, half);

                    const Vec u1 = detail::preact(nl.K1, z0, nl.b1);
                    const Vec s1 = act_value(net.act, u1);
                    const Vec w1 = detail::hadamard(act_deriv(net.act, u1), matvec(nl.K1, dy));
                    mat_axpy(gl.K1, nl.h, outer(s1, dy));
                    mat_axpy(gl.K1, nl.h, outer(w1, z0));
                    vec_axpy(gl.b1, nl.h, w1);

                    const Vec u2 = detail::preact(nl.K2, yy1, nl.b2);
                    const Vec s2 = act_value(net.act, u2);
                    const Vec w2 = detail::hadamard(act_deriv(net.act, u2), matvec(nl.K2, dzp));
                    mat_axpy(gl.K2, -nl.h, outer(s2, dzp));
                    mat_axpy(gl.K2, -nl.h, outer(w2, yy1));
                    vec_axpy(gl.b2, -nl.h, w2);
                } else {
                    const Vec v = detail::hadamard(act_deriv(net.act, detail::preact(nl.K, y0, nl.b)), del1);
                    mat_axpy(gl.K, 1.0, outer(v, y0));
                    vec_axpy(gl.b, 1.0, v);
                }
            },
            g.layers[std::size_t(j)]);
    }
}

// Adds the head gradients for one sample and returns dL/dy_N, the seed for
// backward_deltas.
inline Vec head_backward(const Network& net, const Vec& y_last, const Vec& dlogits,
                         GradientSet& g) {
    if (dlogits.size() != net.head.c.size() || y_last.size() != std::size_t(net.n)) {
        throw std::invalid_argument("head_backward: size mismatch");
    }
    mat_axpy(g.gW, 1.0, outer(dlogits, y_last));
    vec_axpy(g.gc, 1.0, dlogits);
    return matvec_t(net.head.W, dlogits);
}

// Same layout as flatten_params on the owning network.
inline std::vector<double> flatten_grads(const Network& net, const GradientSet& g,
                                         ParamSel sel = ParamSel::All) {
    std::vector<double> out;
    out.reserve(std::size_t(param_count(net, sel)));
    if (sel != ParamSel::Head) {
        for (const Layer& layer : g.layers) {
            std::visit(
                [&](const auto& l) {
                    using T = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<T, H1Layer>) {
                        if (l.train_j) {
                            const auto u = skew_project_grad(l.J);
                            out.insert(out.end(), u.begin(), u.end());
                        }
                        out.insert(out.end(), l.K.a.begin(), l.K.a.end());
                        out.insert(out.end(), l.b.begin(), l.b.end());
                    } else if constexpr (std::is_same_v<T, H2Layer>) {
                        out.insert(out.end(), l.Kp.a.begin(), l.Kp.a.end());
                        out.insert(out.end(), l.Kq.a.begin(), l.Kq.a.end());
                        out.insert(out.end(), l.bp.begin(), l.bp.end());
                        out.insert(out.end(), l.bq.begin(), l.bq.end());
                    } else if constexpr (std::is_same_v<T, MS1Layer>) {
                        out.insert(out.end(), l.K0.a.begin(), l.K0.a.end());
                        out.insert(out.end(), l.b1.begin(), l.b1.end());
                        out.insert(out.end(), l.b2.begin(), l.b2.end());
                    } else if constexpr (std::is_same_v<T, MS2Layer>) {
                        const auto u = skew_project_grad(l.K);
                        out.insert(out.end(), u.begin(), u.end());
                        out.insert(out.end(), l.b.begin(), l.b.end());
                    } else if constexpr (std::is_same_v<T, MS3Layer>) {
                        out.insert(out.end(), l.K1.a.begin(), l.K1.a.end());
                        out.insert(out.end(), l.K2.a.begin(), l.K2.a.end());
                        out.insert(out.end(), l.b1.begin(), l.b1.end());
                        out.insert(out.end(), l.b2.begin(), l.b2.end());
                    } else {
                        out.insert(out.end(), l.K.a.begin(), l.K.a.end());
                        out.insert(out.end(), l.b.begin(), l.b.end());
                    }
                },
                layer);
        }
    }
    if (sel != ParamSel::Hidden) {
        out.insert(out.end(), g.gW.a.begin(), g.gW.a.end());
        out.insert(out.end(), g.gc.begin(), g.gc.end());
    }
    if (out.size() != std::size_t(param_count(net, sel))) {
        throw std::logic_error("flatten_grads: layout drifted from flatten_params");
    }
    return out;
}

}  // namespace hdnn
