#pragma once

#include <cstddef>
#include <functional>

#include "matrix.hpp"

// Central difference probes.  The default step of 1e-5 roughly balances
// truncation against roundoff for O(1) arguments, giving ~1e-10 accuracy
// on smooth functions.

namespace hdnn {

inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                       double step = 1e-5) {
    Vec g(x.size(), 0.0);
    Vec xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = xp[i];
        xp[i] = xi + step;
        const double fp = f(xp);
        xp[i] = xi - step;
        const double fm = f(xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

// Standard layout: row i of the result is the gradient of output i.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x,
                       double step = 1e-5) {
    const Vec f0 = f(x);
    Mat J(int(f0.size()), int(x.size()));
    Vec xp = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double xj = xp[j];
        xp[j] = xj + step;
        const Vec fp = f(xp);
        xp[j] = xj - step;
        const Vec fm = f(xp);
        xp[j] = xj;
        for (std::size_t i = 0; i < f0.size(); ++i) {
            J(int(i), int(j)) = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    return J;
}

}  // namespace hdnn
