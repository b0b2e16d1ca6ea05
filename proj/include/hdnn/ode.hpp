#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hdnn/activation.hpp"
#include "hdnn/matrix.hpp"

// Continuous-time view of the layer maps: the state follows
//
//     y' = J(t) K(t)^T s(K(t) y + b(t))
//
// and the matrix carrying a loss gradient from the horizon back to an earlier
// time follows a linear equation in the elapsed backward time u,
//
//     d/du Phi(u) = A(T-u) Phi(u),   A(t) = K(t)^T D(t) K(t) J(t)^T,
//
// with D the diagonal of activation slopes along the stored trajectory and
// Phi(0) = I.  Phi(u) is the transpose of the flow-map Jacobian of the final
// stretch, d y(T) / d y(T-u); gradients ride it directly, state perturbations
// ride its transpose.  Integration is classical fourth-order Runge-Kutta on a
// uniform grid that lands exactly on the horizon; the step count is kept even
// so the sensitivity pass can take double-width steps whose internal stage
// times coincide with stored forward samples.

namespace hdnn {

struct OdeConfig {
    std::function<Mat(double)> K;
    std::function<Mat(double)> J;
    std::function<Vec(double)> b;
    Act act = Act::Tanh;
    double T = 1.0;
    double h_ref = 1e-3;
};

// For forward output: t[k] grows from 0 to the horizon and y[k] is the state
// there.  For sensitivity output: t[k] is elapsed backward time, y[k] the
// state the matrix differentiates against, sensitivity[k] the matrix itself.
struct Trajectory {
    std::vector<double> t;
    std::vector<Vec> y;
    std::vector<Mat> sensitivity;
    std::vector<double> hamiltonian;
};

namespace detail {

inline void require_skew(const Mat& J, double t) {
    if (J.rows != J.cols) throw std::invalid_argument("ode: J(t) must be square");
    for (int i = 0; i < J.rows; ++i) {
        for (int j = 0; j <= i; ++j) {
            if (std::abs(J(i, j) + J(j, i)) > 1e-9) {
                throw std::invalid_argument("ode: J(" + std::to_string(t) +
                                            ") is not skew-symmetric");
            }
        }
    }
}

inline Vec ode_field(const OdeConfig& cfg, double t, const Vec& y) {
    const Mat K = cfg.K(t);
    const Mat J = cfg.J(t);
    require_skew(J, t);
    Vec u = matvec(K, y);
    const Vec b = cfg.b(t);
    if (b.size() != u.size()) throw std::invalid_argument("ode: b(t) size mismatch");
    vec_axpy(u, 1.0, b);
    return matvec(J, matvec_t(K, act_value(cfg.act, u)));
}

inline bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

// step count: even, at least two, step never larger than requested
inline int grid_steps(double T, double h_ref) {
    if (h_ref <= 0.0) throw std::invalid_argument("ode: reference step must be positive");
    if (T <= 0.0) throw std::invalid_argument("ode: horizon must be positive");
    int steps = int(std::ceil(T / h_ref));
    if (steps % 2) ++steps;
    return std::max(steps, 2);
}

}  // namespace detail

inline double hamiltonian_level(const OdeConfig& cfg, double t, const Vec& y) {
    Vec u = matvec(cfg.K(t), y);
    vec_axpy(u, 1.0, cfg.b(t));
    double s = 0.0;
    for (double x : u) s += act_antideriv(cfg.act, x);
    return s;
}

inline Trajectory integrate_forward(const OdeConfig& cfg, const Vec& y0) {
    const int steps = detail::grid_steps(cfg.T, cfg.h_ref);
    const double h = cfg.T / steps;
    Trajectory out;
    out.t.reserve(std::size_t(steps) + 1);
    out.y.reserve(std::size_t(steps) + 1);
    out.hamiltonian.reserve(std::size_t(steps) + 1);

    Vec y = y0;
    for (int k = 0; k <= steps; ++k) {
        const double t = cfg.T * k / steps;  // exact horizon at the last point
        out.t.push_back(t);
        out.y.push_back(y);
        out.hamiltonian.push_back(hamiltonian_level(cfg, t, y));
        if (k == steps) break;

        const Vec k1 = detail::ode_field(cfg, t, y);
        Vec ya = y;
        vec_axpy(ya, 0.5 * h, k1);
        const Vec k2 = detail::ode_field(cfg, t + 0.5 * h, ya);
        ya = y;
        vec_axpy(ya, 0.5 * h, k2);
        const Vec k3 = detail::ode_field(cfg, t + 0.5 * h, ya);
        ya = y;
        vec_axpy(ya, h, k3);
        const Vec k4 = detail::ode_field(cfg, t + h, ya);
        vec_axpy(y, h / 6.0, k1);
        vec_axpy(y, h / 3.0, k2);
        vec_axpy(y, h / 3.0, k3);
        vec_axpy(y, h / 6.0, k4);
        if (!detail::all_finite(y)) throw std::runtime_error("ode: state became non-finite");
    }
    return out;
}

inline Trajectory integrate_sensitivity(const OdeConfig& cfg, const Trajectory& fwd) {
    const std::size_t points = fwd.t.size();
    if (points < 3 || points % 2 == 0 || fwd.y.size() != points) {
        throw std::invalid_argument("ode: sensitivity needs a forward reference grid");
    }
    if (std::abs(fwd.t.back() - cfg.T) > 1e-12 * (1.0 + cfg.T)) {
        throw std::invalid_argument("ode: trajectory does not match the configured horizon");
    }
    const int s = int(points) - 1;
    const double h = cfg.T / s;
    const int n = int(fwd.y.front().size());

    // A(t) at a stored forward sample
    const auto a_at = [&](int idx) {
        const double t = fwd.t[std::size_t(idx)];
        const Mat K = cfg.K(t);
        const Mat J = cfg.J(t);
        detail::require_skew(J, t);
        Vec u = matvec(K, fwd.y[std::size_t(idx)]);
        vec_axpy(u, 1.0, cfg.b(t));
        const Vec d = act_deriv(cfg.act, u);
        // K^T diag(d) K J^T
        Mat DK = K;
        for (int i = 0; i < K.rows; ++i) {
            for (int j = 0; j < K.cols; ++j) DK(i, j) *= d[std::size_t(i)];
        }
        return matmul(matmul(transpose(K), DK), transpose(J));
    };

    Trajectory out;
    out.t.reserve(std::size_t(s / 2) + 1);
    out.y.reserve(std::size_t(s / 2) + 1);
    out.sensitivity.reserve(std::size_t(s / 2) + 1);
    out.t.push_back(0.0);
    out.y.push_back(fwd.y.back());
    out.sensitivity.push_back(Mat::identity(n));

    // columns advance independently; one double-width step uses three stored
    // samples, so every stage time is exact
    std::vector<Vec> cols(std::size_t(n), Vec(std::size_t(n), 0.0));
    for (int c = 0; c < n; ++c) cols[std::size_t(c)][std::size_t(c)] = 1.0;
    const double H = 2.0 * h;
    for (int step = 0; step < s / 2; ++step) {
        const Mat A0 = a_at(s - 2 * step);
        const Mat A1 = a_at(s - 2 * step - 1);
        const Mat A2 = a_at(s - 2 * step - 2);
        Mat phi(n, n);
        for (int c = 0; c < n; ++c) {
            Vec& v = cols[std::size_t(c)];
            const Vec k1 = matvec(A0, v);
            Vec va = v;
            vec_axpy(va, 0.5 * H, k1);
            const Vec k2 = matvec(A1, va);
            va = v;
            vec_axpy(va, 0.5 * H, k2);
            const Vec k3 = matvec(A1, va);
            va = v;
            vec_axpy(va, H, k3);
            const Vec k4 = matvec(A2, va);
            vec_axpy(v, H / 6.0, k1);
            vec_axpy(v, H / 3.0, k2);
            vec_axpy(v, H / 3.0, k3);
            vec_axpy(v, H / 6.0, k4);
            if (!detail::all_finite(v)) {
                throw std::runtime_error("ode: sensitivity became non-finite");
            }
            for (int r = 0; r < n; ++r) phi(r, c) = v[std::size_t(r)];
        }
        out.t.push_back(cfg.T * (2 * step + 2) / s);
        out.y.push_back(fwd.y[std::size_t(s - 2 * step - 2)]);
        out.sensitivity.push_back(std::move(phi));
    }
    return out;
}

// Worst-case growth certificate: the sensitivity 2-norm never exceeds
// sqrt(n) * exp(Q T) with Q = S sqrt(n) max_t |K(t)|^2 |J(t)| in 2-norms
// and S the activation slope bound.  Weight paths are sampled on the
// reference grid.
inline std::pair<double, double> upper_bound_Q(const OdeConfig& cfg) {
    const int steps = detail::grid_steps(cfg.T, cfg.h_ref);
    const int n = cfg.K(0.0).rows;
    double worst = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double t = cfg.T * k / steps;
        const double nk = two_norm(cfg.K(t));
        const double nj = two_norm(cfg.J(t));
        worst = std::max(worst, nk * nk * nj);
    }
    const double q = act_slope_bound(cfg.act) * std::sqrt(double(n)) * worst;
    return {q, std::sqrt(double(n)) * std::exp(q * cfg.T)};
}

// The two-dimensional rotation-like system y' = J tanh(y): every orbit is a
// closed loop around the origin and the energy level logcosh(y1)+logcosh(y2)
// is preserved.  Several experiments below are built on it.
inline OdeConfig planar_tanh_config(double T, double h_ref = 1e-3) {
    OdeConfig cfg;
    cfg.act = Act::Tanh;
    cfg.T = T;
    cfg.h_ref = h_ref;
    cfg.K = [](double) { return Mat::identity(2); };
    cfg.J = [](double) { return canonical_J(2); };
    cfg.b = [](double) { return Vec(2, 0.0); };
    return cfg;
}

struct ProbePoint {
    double t;
    double ratio;
};

// Separation between the flows from y0 and y0 + gamma*beta, divided by gamma.
// At gamma -> 0 this is the action of the sensitivity on beta; for finite
// gamma the curve grows until the two trajectories decohere in phase, then
// saturates near (level set diameter) / gamma.
inline std::vector<ProbePoint> exploding_probe(const Vec& y0, const Vec& beta, double gamma,
                                               double T, double h = 0.01) {
    if (gamma <= 0.0) throw std::invalid_argument("probe: gamma must be positive");
    if (y0.size() != 2 || beta.size() != 2) throw std::invalid_argument("probe: planar only");
    const OdeConfig cfg = planar_tanh_config(T, h);
    const int steps = detail::grid_steps(T, h);
    const double hh = T / steps;

    Vec a = y0;
    Vec b = y0;
    vec_axpy(b, gamma, beta);
    std::vector<ProbePoint> curve;
    curve.reserve(std::size_t(steps) + 1);
    const auto push = [&](double t) {
        Vec d = b;
        vec_axpy(d, -1.0, a);
        curve.push_back({t, nrm2(d) / gamma});
    };
    push(0.0);
    const auto rk4 = [&](Vec& y, double t) {
        const Vec k1 = detail::ode_field(cfg, t, y);
        Vec ya = y;
        vec_axpy(ya, 0.5 * hh, k1);
        const Vec k2 = detail::ode_field(cfg, t + 0.5 * hh, ya);
        ya = y;
        vec_axpy(ya, 0.5 * hh, k2);
        const Vec k3 = detail::ode_field(cfg, t + 0.5 * hh, ya);
        ya = y;
        vec_axpy(ya, hh, k3);
        const Vec k4 = detail::ode_field(cfg, t + hh, ya);
        vec_axpy(y, hh / 6.0, k1);
        vec_axpy(y, hh / 3.0, k2);
        vec_axpy(y, hh / 3.0, k3);
        vec_axpy(y, hh / 6.0, k4);
    };
    for (int k = 0; k < steps; ++k) {
        const double t = T * k / steps;
        rk4(a, t);
        rk4(b, t);
        push(T * (k + 1) / steps);
    }
    return curve;
}

// First return time of the rotation angle to its start plus one full turn.
// The angle advances strictly for this system, so the accumulated increment
// is monotone; the crossing is located by linear interpolation.
inline double period_estimate(const Vec& y0, double h = 1e-3, double horizon = 100.0) {
    if (y0.size() != 2 || nrm2(y0) < 1e-12) {
        throw std::invalid_argument("period: need a nonzero planar point");
    }
    const OdeConfig cfg = planar_tanh_config(horizon, h);
    Vec y = y0;
    double prev_angle = std::atan2(y[1], y[0]);
    double turned = 0.0;
    const int steps = detail::grid_steps(horizon, h);
    const double hh = horizon / steps;
    const double two_pi = 2.0 * std::acos(-1.0);
    for (int k = 0; k < steps; ++k) {
        const double t = horizon * k / steps;
        const Vec k1 = detail::ode_field(cfg, t, y);
        Vec ya = y;
        vec_axpy(ya, 0.5 * hh, k1);
        const Vec k2 = detail::ode_field(cfg, t + 0.5 * hh, ya);
        ya = y;
        vec_axpy(ya, 0.5 * hh, k2);
        const Vec k3 = detail::ode_field(cfg, t + 0.5 * hh, ya);
        ya = y;
        vec_axpy(ya, hh, k3);
        const Vec k4 = detail::ode_field(cfg, t + hh, ya);
        vec_axpy(y, hh / 6.0, k1);
        vec_axpy(y, hh / 3.0, k2);
        vec_axpy(y, hh / 3.0, k3);
        vec_axpy(y, hh / 6.0, k4);

        const double angle = std::atan2(y[1], y[0]);
        double d = angle - prev_angle;
        if (d <= -two_pi / 2.0) d += two_pi;  // wrap at the branch cut
        if (d > two_pi / 2.0) d -= two_pi;
        prev_angle = angle;
        const double next_turned = turned + d;
        if (next_turned >= two_pi) {
            const double frac = (two_pi - turned) / d;
            return horizon * k / steps + frac * hh;
        }
        turned = next_turned;
    }
    throw std::runtime_error("period: no full turn within the horizon");
}

struct Ode2OdeReport {
    double min_ratio = 0.0;
    double max_ratio = 0.0;
};

// Orthogonal-path weights with the absolute-value activation: J(t) = K(t) =
// M(t)^T blkdiag(G,...,G) M(t), M orthogonal, G the planar rotation generator
// with G(0,1) = 1.  Reports the range of |delta(T-t)| / |delta(T)| for the
// loss sensitivity propagated backward along the flow from y0.
inline Ode2OdeReport ode2ode_check(const std::function<Mat(double)>& M, double T, const Vec& y0,
                                   const Vec& delta_T, double h_ref = 1e-3) {
    const int n = int(y0.size());
    if (n < 2 || n % 2) throw std::invalid_argument("ode2ode: even state size required");
    if (int(delta_T.size()) != n) throw std::invalid_argument("ode2ode: delta size mismatch");

    Mat blockG(n, n);
    for (int i = 0; i < n / 2; ++i) {
        blockG(2 * i, 2 * i + 1) = 1.0;
        blockG(2 * i + 1, 2 * i) = -1.0;
    }
    const auto weights = [&, blockG](double t) {
        const Mat Mt = M(t);
        if (Mt.rows != n || Mt.cols != n) {
            throw std::invalid_argument("ode2ode: M(t) has the wrong shape");
        }
        const Mat gram = matmul(transpose(Mt), Mt);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double want = i == j ? 1.0 : 0.0;
                if (std::abs(gram(i, j) - want) > 1e-12) {
                    throw std::invalid_argument("ode2ode: M(t) must stay orthogonal");
                }
            }
        }
        const Mat K = matmul(matmul(transpose(Mt), blockG), Mt);
        // the construction forces orthogonal K; keep that invariant checked
        const Mat kk = matmul(transpose(K), K);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const double want = i == j ? 1.0 : 0.0;
                if (std::abs(kk(i, j) - want) > 1e-10) {
                    throw std::logic_error("ode2ode: weight path lost orthogonality");
                }
            }
        }
        return K;
    };

    OdeConfig cfg;
    cfg.act = Act::Abs;
    cfg.T = T;
    cfg.h_ref = h_ref;
    cfg.K = weights;
    cfg.J = weights;
    cfg.b = [n](double) { return Vec(std::size_t(n), 0.0); };

    const Trajectory fwd = integrate_forward(cfg, y0);
    const Trajectory sens = integrate_sensitivity(cfg, fwd);
    const double base = nrm2(delta_T);
    if (base <= 0.0) throw std::invalid_argument("ode2ode: delta must be nonzero");
    Ode2OdeReport rep;
    rep.min_ratio = 1.0;
    rep.max_ratio = 1.0;
    for (const Mat& phi : sens.sensitivity) {
        const double r = nrm2(matvec(phi, delta_T)) / base;
        rep.min_ratio = std::min(rep.min_ratio, r);
        rep.max_ratio = std::max(rep.max_ratio, r);
    }
    return rep;
}

}  // namespace hdnn
