#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "hdnn/matrix.hpp"

namespace hdnn {

// Pointwise activations.  All three have slope bounded by 1, which the
// sensitivity bounds rely on.  Conventions at the kinks are fixed once and
// used everywhere (tests pin them): relu'(0) = 0, abs'(0) = +1.
enum class Act { Tanh, Relu, Abs };

inline double act_value(Act a, double x) {
    switch (a) {
        case Act::Tanh: return std::tanh(x);
        case Act::Relu: return x > 0.0 ? x : 0.0;
        case Act::Abs: return std::abs(x);
    }
    throw std::logic_error("act_value: bad enum");
}

inline double act_deriv(Act a, double x) {
    switch (a) {
        case Act::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Act::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Act::Abs: return x < 0.0 ? -1.0 : 1.0;
    }
    throw std::logic_error("act_deriv: bad enum");
}

// Antiderivative with value 0 at x = 0; the Hamiltonian of a layer is the sum
// of these over the pre-activation.  log(cosh x) is computed via |x| to avoid
// overflowing cosh.
inline double act_antideriv(Act a, double x) {
    switch (a) {
        case Act::Tanh:
            return std::abs(x) + std::log1p(std::exp(-2.0 * std::abs(x))) - std::log(2.0);
        case Act::Relu: return x > 0.0 ? 0.5 * x * x : 0.0;
        case Act::Abs: return 0.5 * x * std::abs(x);
    }
    throw std::logic_error("act_antideriv: bad enum");
}

inline double act_slope_bound(Act) { return 1.0; }

inline Vec act_value(Act a, const Vec& x) {
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = act_value(a, x[i]);
    return r;
}

inline Vec act_deriv(Act a, const Vec& x) {
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = act_deriv(a, x[i]);
    return r;
}

inline std::string act_name(Act a) {
    switch (a) {
        case Act::Tanh: return "tanh";
        case Act::Relu: return "relu";
        case Act::Abs: return "abs";
    }
    throw std::logic_error("act_name: bad enum");
}

inline Act act_from_name(const std::string& s) {
    if (s == "tanh") return Act::Tanh;
    if (s == "relu") return Act::Relu;
    if (s == "abs") return Act::Abs;
    throw std::invalid_argument("unknown activation: " + s);
}

}  // namespace hdnn
