#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

// Adam with standard bias correction.  State buffers are sized lazily on
// the first step so a default-constructed AdamState works for any
// parameter vector.

namespace hdnn {

struct AdamConfig {
    double lr = 2.5e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m, v;
    long long t = 0;
};

inline void adam_step(AdamState& st, const AdamConfig& cfg, std::vector<double>& params,
                      const std::vector<double>& grad) {
    if (params.size() != grad.size()) throw std::invalid_argument("adam_step: size mismatch");
    if (st.m.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.t = 0;
    }
    if (st.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
    for (double gi : grad) {
        if (!std::isfinite(gi)) throw std::runtime_error("adam_step: non-finite gradient");
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

}  // namespace hdnn
