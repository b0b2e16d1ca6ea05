#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hdnn/activation.hpp"
#include "hdnn/matrix.hpp"
#include "hdnn/rng.hpp"

// Layer families.  All of them advance a state vector of fixed dimension n;
// the two-block families (h2, ms1, ms3) treat the first n/2 entries as the
// "p" (or y) half and the rest as the "q" (or z) half.
//
//   h1   y' = y + h J K^T s(K y + b)          J skew, fixed or trainable
//   h2   p' = p - h X^T Kq^T s(Kq q + bq)     then
//        q' = q + h X  Kp^T s(Kp p' + bp)     X fixed (identity by default)
//   ms1  z' = z - h s(K0^T y + b1)            then  y' = y + h s(K0 z' + b2)
//   ms2  y' = y + h s(K y + b)                K skew
//   ms3  y' = y + h K1^T s(K1 z + b1)         then  z' = z - h K2^T s(K2 y' + b2)
//   mlp  y' = s(K y + b)
//
// The second update of a two-block layer always sees the already-updated
// partner half; that ordering is what the backward recursions and parameter
// gradients assume.

namespace hdnn {

enum class Arch { H1, H2, MS1, MS2, MS3, MLP };

inline std::string arch_name(Arch a) {
    switch (a) {
        case Arch::H1: return "h1";
        case Arch::H2: return "h2";
        case Arch::MS1: return "ms1";
        case Arch::MS2: return "ms2";
        case Arch::MS3: return "ms3";
        case Arch::MLP: return "mlp";
    }
    throw std::logic_error("arch_name: bad enum");
}

inline Arch arch_from_name(const std::string& s) {
    if (s == "h1") return Arch::H1;
    if (s == "h2") return Arch::H2;
    if (s == "ms1") return Arch::MS1;
    if (s == "ms2") return Arch::MS2;
    if (s == "ms3") return Arch::MS3;
    if (s == "mlp") return Arch::MLP;
    throw std::invalid_argument("unknown architecture: " + s);
}

struct H1Layer {
    Mat J, K;
    Vec b;
    double h = 0.5;
    bool train_j = false;
};

struct H2Layer {
    Mat X, Kp, Kq;
    Vec bp, bq;
    double h = 0.5;
};

struct MS1Layer {
    Mat K0;
    Vec b1, b2;
    double h = 0.5;
};

struct MS2Layer {
    Mat K;  // skew
    Vec b;
    double h = 0.5;
};

struct MS3Layer {
    Mat K1, K2;
    Vec b1, b2;
    double h = 0.5;
};

struct MlpLayer {
    Mat K;
    Vec b;
};

using Layer = std::variant<H1Layer, H2Layer, MS1Layer, MS2Layer, MS3Layer, MlpLayer>;

struct OutputHead {
    Mat W;  // classes x n
    Vec c;
};

struct Network {
    Arch arch = Arch::H1;
    Act act = Act::Tanh;
    int n = 0;
    std::vector<Layer> layers;
    OutputHead head;

    int depth() const { return int(layers.size()); }
    int classes() const { return int(head.c.size()); }

    double step_size() const {
        if (layers.empty() || arch == Arch::MLP) return 1.0;
        return std::visit(
            [](const auto& l) -> double {
                if constexpr (std::is_same_v<std::decay_t<decltype(l)>, MlpLayer>) return 1.0;
                else return l.h;
            },
            layers.front());
    }
};

// ------------------------------------------------------------ construction --

inline void require_even(int n, const char* who) {
    if (n % 2 != 0) throw std::invalid_argument(std::string(who) + ": state dimension must be even");
}

inline Mat random_weight(Rng& rng, int r, int c, double stddev) {
    Mat m(r, c);
    for (double& x : m.a) x = rng.normal(0.0, stddev);
    return m;
}

// All weight matrices start as iid normal with std 1/sqrt(n) where n is the
// network state dimension; biases start at zero.  Fixed structure matrices:
// J = [0 -I; I 0] for h1 (also the starting point when J is trainable) and
// X = I for h2.
inline Network make_network(Arch arch, int n, int num_layers, double h, Act act, int classes,
                            std::uint64_t seed, bool train_j = false) {
    if (n <= 0 || num_layers <= 0 || classes <= 0) {
        throw std::invalid_argument("make_network: sizes must be positive");
    }
    Network net;
    net.arch = arch;
    net.act = act;
    net.n = n;
    Rng rng(seed);
    const double sd = 1.0 / std::sqrt(double(n));
    const int half = n / 2;
    for (int j = 0; j < num_layers; ++j) {
        switch (arch) {
            case Arch::H1: {
                require_even(n, "make_network(h1)");
                H1Layer l;
                l.J = canonical_J(n);
                l.K = random_weight(rng, n, n, sd);
                l.b = Vec(std::size_t(n), 0.0);
                l.h = h;
                l.train_j = train_j;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::H2: {
                require_even(n, "make_network(h2)");
                H2Layer l;
                l.X = Mat::identity(half);
                l.Kp = random_weight(rng, half, half, sd);
                l.Kq = random_weight(rng, half, half, sd);
                l.bp = Vec(std::size_t(half), 0.0);
                l.bq = Vec(std::size_t(half), 0.0);
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MS1: {
                require_even(n, "make_network(ms1)");
                MS1Layer l;
                l.K0 = random_weight(rng, half, half, sd);
                l.b1 = Vec(std::size_t(half), 0.0);
                l.b2 = Vec(std::size_t(half), 0.0);
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MS2: {
                MS2Layer l;
                std::vector<double> u(std::size_t(skew_param_count(n)));
                for (double& x : u) x = rng.normal(0.0, sd);
                l.K = skew_from_params(u.data(), n);
                l.b = Vec(std::size_t(n), 0.0);
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MS3: {
                require_even(n, "make_network(ms3)");
                MS3Layer l;
                l.K1 = random_weight(rng, half, half, sd);
                l.K2 = random_weight(rng, half, half, sd);
                l.b1 = Vec(std::size_t(half), 0.0);
                l.b2 = Vec(std::size_t(half), 0.0);
                l.h = h;
                net.layers.emplace_back(std::move(l));
                break;
            }
            case Arch::MLP: {
                MlpLayer l;
                l.K = random_weight(rng, n, n, sd);
                l.b = Vec(std::size_t(n), 0.0);
                net.layers.emplace_back(std::move(l));
                break;
            }
        }
    }
    net.head.W = random_weight(rng, classes, n, sd);
    net.head.c = Vec(std::size_t(classes), 0.0);
    return net;
}

// ----------------------------------------------------------------- forward --

namespace detail {
inline void add_bias(Vec& u, const Vec& b) {
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += b[i];
}
}  // namespace detail

inline Vec forward_h1(const H1Layer& l, Act act, const Vec& y) {
    Vec u = matvec(l.K, y);
    detail::add_bias(u, l.b);
    const Vec s = act_value(act, u);
    const Vec jv = matvec(l.J, matvec_t(l.K, s));
    Vec r = y;
    vec_axpy(r, l.h, jv);
    return r;
}

inline Vec forward_h2(const H2Layer& l, Act act, const Vec& y) {
    const int half = l.Kp.rows;
    if (y.size() != std::size_t(2 * half)) throw std::invalid_argument("forward_h2: state size mismatch");
    Vec p(y.begin(), y.begin() + half);
    Vec q(y.begin() + half, y.end());

    Vec uq = matvec(l.Kq, q);
    detail::add_bias(uq, l.bq);
    const Vec tq = matvec_t(l.X, matvec_t(l.Kq, act_value(act, uq)));
    vec_axpy(p, -l.h, tq);  // p' depends on q only

    Vec up = matvec(l.Kp, p);  // built from the updated p
    detail::add_bias(up, l.bp);
    const Vec tp = matvec(l.X, matvec_t(l.Kp, act_value(act, up)));
    vec_axpy(q, l.h, tp);

    Vec r(y.size());
    std::copy(p.begin(), p.end(), r.begin());
    std::copy(q.begin(), q.end(), r.begin() + half);
    return r;
}

inline Vec forward_ms1(const MS1Layer& l, Act act, const Vec& y) {
    const int half = l.K0.rows;
    if (y.size() != std::size_t(2 * half)) throw std::invalid_argument("forward_ms1: state size mismatch");
    Vec y1(y.begin(), y.begin() + half);
    Vec z(y.begin() + half, y.end());

    Vec u1 = matvec_t(l.K0, y1);
    detail::add_bias(u1, l.b1);
    vec_axpy(z, -l.h, act_value(act, u1));

    Vec u2 = matvec(l.K0, z);  // uses the updated z
    detail::add_bias(u2, l.b2);
    vec_axpy(y1, l.h, act_value(act, u2));

    Vec r(y.size());
    std::copy(y1.begin(), y1.end(), r.begin());
    std::copy(z.begin(), z.end(), r.begin() + half);
    return r;
}

inline Vec forward_ms2(const MS2Layer& l, Act act, const Vec& y) {
    Vec u = matvec(l.K, y);
    detail::add_bias(u, l.b);
    Vec r = y;
    vec_axpy(r, l.h, act_value(act, u));
    return r;
}

inline Vec forward_ms3(const MS3Layer& l, Act act, const Vec& y) {
    const int half = l.K1.rows;
    if (y.size() != std::size_t(2 * half)) throw std::invalid_argument("forward_ms3: state size mismatch");
    Vec y1(y.begin(), y.begin() + half);
    Vec z(y.begin() + half, y.end());

    Vec u1 = matvec(l.K1, z);
    detail::add_bias(u1, l.b1);
    vec_axpy(y1, l.h, matvec_t(l.K1, act_value(act, u1)));

    Vec u2 = matvec(l.K2, y1);  // uses the updated y half
    detail::add_bias(u2, l.b2);
    vec_axpy(z, -l.h, matvec_t(l.K2, act_value(act, u2)));

    Vec r(y.size());
    std::copy(y1.begin(), y1.end(), r.begin());
    std::copy(z.begin(), z.end(), r.begin() + half);
    return r;
}

inline Vec forward_mlp(const MlpLayer& l, Act act, const Vec& y) {
    Vec u = matvec(l.K, y);
    detail::add_bias(u, l.b);
    return act_value(act, u);
}

inline Vec layer_forward(const Layer& layer, Act act, const Vec& y) {
    return std::visit(
        [&](const auto& l) -> Vec {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, H1Layer>) return forward_h1(l, act, y);
            else if constexpr (std::is_same_v<T, H2Layer>) return forward_h2(l, act, y);
            else if constexpr (std::is_same_v<T, MS1Layer>) return forward_ms1(l, act, y);
            else if constexpr (std::is_same_v<T, MS2Layer>) return forward_ms2(l, act, y);
            else if constexpr (std::is_same_v<T, MS3Layer>) return forward_ms3(l, act, y);
            else return forward_mlp(l, act, y);
        },
        layer);
}

// States y_0 .. y_N; states[j] is the input of layer j.
struct ForwardTrace {
    std::vector<Vec> states;
};

inline ForwardTrace forward_states(const Network& net, const Vec& y0) {
    if (y0.size() != std::size_t(net.n)) throw std::invalid_argument("forward_states: input size mismatch");
    ForwardTrace tr;
    tr.states.reserve(net.layers.size() + 1);
    tr.states.push_back(y0);
    for (const Layer& l : net.layers) {
        tr.states.push_back(layer_forward(l, net.act, tr.states.back()));
    }
    return tr;
}

inline Vec head_logits(const Network& net, const Vec& yN) {
    Vec z = matvec(net.head.W, yN);
    detail::add_bias(z, net.head.c);
    return z;
}

// argmax with ties resolved toward the lowest class index
inline int predict_class(const Vec& logits) {
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[std::size_t(best)]) best = int(i);
    }
    return best;
}

// ------------------------------------------------------ parameter flatten --

enum class ParamSel { All, Hidden, Head };

inline int params_per_layer(const Network& net) {
    if (net.layers.empty()) return 0;
    const int n = net.n;
    const int half = n / 2;
    return std::visit(
        [&](const auto& l) -> int {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, H1Layer>) {
                return (l.train_j ? skew_param_count(n) : 0) + n * n + n;
            } else if constexpr (std::is_same_v<T, H2Layer>) {
                return 2 * half * half + n;
            } else if constexpr (std::is_same_v<T, MS1Layer>) {
                return half * half + n;
            } else if constexpr (std::is_same_v<T, MS2Layer>) {
                return skew_param_count(n) + n;
            } else if constexpr (std::is_same_v<T, MS3Layer>) {
                return 2 * half * half + n;
            } else {
                return n * n + n;
            }
        },
        net.layers.front());
}

inline int head_param_count(const Network& net) {
    return net.head.W.rows * net.head.W.cols + int(net.head.c.size());
}

inline int param_count(const Network& net, ParamSel sel = ParamSel::All) {
    const int hidden = params_per_layer(net) * net.depth();
    switch (sel) {
        case ParamSel::Hidden: return hidden;
        case ParamSel::Head: return head_param_count(net);
        case ParamSel::All: return hidden + head_param_count(net);
    }
    throw std::logic_error("param_count: bad selector");
}

namespace detail {

inline void append_mat(std::vector<double>& out, const Mat& m) {
    out.insert(out.end(), m.a.begin(), m.a.end());
}
inline void append_vec(std::vector<double>& out, const Vec& v) {
    out.insert(out.end(), v.begin(), v.end());
}
inline void read_mat(Mat& m, const std::vector<double>& v, std::size_t& pos) {
    for (double& x : m.a) x = v[pos++];
}
inline void read_vec(Vec& w, const std::vector<double>& v, std::size_t& pos) {
    for (double& x : w) x = v[pos++];
}
inline void read_skew(Mat& m, const std::vector<double>& v, std::size_t& pos) {
    m = skew_from_params(v.data() + pos, m.rows);
    pos += std::size_t(skew_param_count(m.rows));
}

}  // namespace detail

// Trainable parameters in a fixed order: layers in depth order, then the
// head.  Skew matrices (ms2 K, trainable h1 J) contribute only their strict
// upper triangle.  Fixed structure matrices (default J, X) never appear.
inline std::vector<double> flatten_params(const Network& net, ParamSel sel = ParamSel::All) {
    std::vector<double> out;
    out.reserve(std::size_t(param_count(net, sel)));
    if (sel != ParamSel::Head) {
        for (const Layer& layer : net.layers) {
            std::visit(
                [&](const auto& l) {
                    using T = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<T, H1Layer>) {
                        if (l.train_j) {
                            const auto u = skew_to_params(l.J);
                            out.insert(out.end(), u.begin(), u.end());
                        }
                        detail::append_mat(out, l.K);
                        detail::append_vec(out, l.b);
                    } else if constexpr (std::is_same_v<T, H2Layer>) {
                        detail::append_mat(out, l.Kp);
                        detail::append_mat(out, l.Kq);
                        detail::append_vec(out, l.bp);
                        detail::append_vec(out, l.bq);
                    } else if constexpr (std::is_same_v<T, MS1Layer>) {
                        detail::append_mat(out, l.K0);
                        detail::append_vec(out, l.b1);
                        detail::append_vec(out, l.b2);
                    } else if constexpr (std::is_same_v<T, MS2Layer>) {
                        const auto u = skew_to_params(l.K);
                        out.insert(out.end(), u.begin(), u.end());
                        detail::append_vec(out, l.b);
                    } else if constexpr (std::is_same_v<T, MS3Layer>) {
                        detail::append_mat(out, l.K1);
                        detail::append_mat(out, l.K2);
                        detail::append_vec(out, l.b1);
                        detail::append_vec(out, l.b2);
                    } else {
                        detail::append_mat(out, l.K);
                        detail::append_vec(out, l.b);
                    }
                },
                layer);
        }
    }
    if (sel != ParamSel::Hidden) {
        detail::append_mat(out, net.head.W);
        detail::append_vec(out, net.head.c);
    }
    return out;
}

inline void unflatten_params(Network& net, const std::vector<double>& v, ParamSel sel = ParamSel::All) {
    if (v.size() != std::size_t(param_count(net, sel))) {
        throw std::invalid_argument("unflatten_params: wrong parameter count");
    }
    std::size_t pos = 0;
    if (sel != ParamSel::Head) {
        for (Layer& layer : net.layers) {
            std::visit(
                [&](auto& l) {
                    using T = std::decay_t<decltype(l)>;
                    if constexpr (std::is_same_v<T, H1Layer>) {
                        if (l.train_j) detail::read_skew(l.J, v, pos);
                        detail::read_mat(l.K, v, pos);
                        detail::read_vec(l.b, v, pos);
                    } else if constexpr (std::is_same_v<T, H2Layer>) {
                        detail::read_mat(l.Kp, v, pos);
                        detail::read_mat(l.Kq, v, pos);
                        detail::read_vec(l.bp, v, pos);
                        detail::read_vec(l.bq, v, pos);
                    } else if constexpr (std::is_same_v<T, MS1Layer>) {
                        detail::read_mat(l.K0, v, pos);
                        detail::read_vec(l.b1, v, pos);
                        detail::read_vec(l.b2, v, pos);
                    } else if constexpr (std::is_same_v<T, MS2Layer>) {
                        detail::read_skew(l.K, v, pos);
                        detail::read_vec(l.b, v, pos);
                    } else if constexpr (std::is_same_v<T, MS3Layer>) {
                        detail::read_mat(l.K1, v, pos);
                        detail::read_mat(l.K2, v, pos);
                        detail::read_vec(l.b1, v, pos);
                        detail::read_vec(l.b2, v, pos);
                    } else {
                        detail::read_mat(l.K, v, pos);
                        detail::read_vec(l.b, v, pos);
                    }
                },
                layer);
        }
    }
    if (sel != ParamSel::Hidden) {
        detail::read_mat(net.head.W, v, pos);
        detail::read_vec(net.head.c, v, pos);
    }
}

// ---------------------------------------------------------------- checking --

inline void validate_network(const Network& net) {
    const int n = net.n;
    const int half = n / 2;
    if (n <= 0) throw std::invalid_argument("network: n must be positive");
    for (const Layer& layer : net.layers) {
        std::visit(
            [&](const auto& l) {
                using T = std::decay_t<decltype(l)>;
                if constexpr (std::is_same_v<T, H1Layer>) {
                    if (l.J.rows != n || l.J.cols != n || l.K.rows != n || l.K.cols != n ||
                        l.b.size() != std::size_t(n)) {
                        throw std::invalid_argument("h1 layer: shape mismatch");
                    }
                    if (!is_skew(l.J, 0.0)) throw std::invalid_argument("h1 layer: J must be skew");
                } else if constexpr (std::is_same_v<T, H2Layer>) {
                    if (n % 2 != 0) throw std::invalid_argument("h2 layer: n must be even");
                    if (l.X.rows != half || l.X.cols != half || l.Kp.rows != half ||
                        l.Kp.cols != half || l.Kq.rows != half || l.Kq.cols != half ||
                        l.bp.size() != std::size_t(half) || l.bq.size() != std::size_t(half)) {
                        throw std::invalid_argument("h2 layer: shape mismatch");
                    }
                } else if constexpr (std::is_same_v<T, MS1Layer>) {
                    if (n % 2 != 0 || l.K0.rows != half || l.K0.cols != half ||
                        l.b1.size() != std::size_t(half) || l.b2.size() != std::size_t(half)) {
                        throw std::invalid_argument("ms1 layer: shape mismatch");
                    }
                } else if constexpr (std::is_same_v<T, MS2Layer>) {
                    if (l.K.rows != n || l.K.cols != n || l.b.size() != std::size_t(n)) {
                        throw std::invalid_argument("ms2 layer: shape mismatch");
                    }
                    if (!is_skew(l.K, 0.0)) throw std::invalid_argument("ms2 layer: K must be skew");
                } else if constexpr (std::is_same_v<T, MS3Layer>) {
                    if (n % 2 != 0 || l.K1.rows != half || l.K1.cols != half || l.K2.rows != half ||
                        l.K2.cols != half || l.b1.size() != std::size_t(half) ||
                        l.b2.size() != std::size_t(half)) {
                        throw std::invalid_argument("ms3 layer: shape mismatch");
                    }
                } else {
                    if (l.K.rows != n || l.K.cols != n || l.b.size() != std::size_t(n)) {
                        throw std::invalid_argument("mlp layer: shape mismatch");
                    }
                }
            },
            layer);
    }
    if (net.head.W.cols != n || net.head.W.rows != int(net.head.c.size())) {
        throw std::invalid_argument("head: shape mismatch");
    }
}

}  // namespace hdnn
