#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdnn/rng.hpp"

// Small dense linear algebra, double precision, row-major.  Network state
// dimensions here are tiny (a handful of features), so everything favours
// clarity over blocking tricks.

namespace hdnn {

using Vec = std::vector<double>;

// ---------------------------------------------------------------- vectors --

inline Vec vec_add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_add: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline Vec vec_sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("vec_sub: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline Vec vec_scale(const Vec& a, double s) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
    return r;
}

// r += s * a
inline void vec_axpy(Vec& r, double s, const Vec& a) {
    if (a.size() != r.size()) throw std::invalid_argument("vec_axpy: size mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) r[i] += s * a[i];
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double nrm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double max_abs(const Vec& a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

// ---------------------------------------------------------------- matrices --

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;  // row-major, rows * cols entries

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(std::size_t(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative size");
    }
    Mat(int r, int c, std::vector<double> values) : rows(r), cols(c), a(std::move(values)) {
        if (a.size() != std::size_t(r) * c) throw std::invalid_argument("Mat: bad value count");
    }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(int i, int j) { return a[std::size_t(i) * cols + j]; }
    double operator()(int i, int j) const { return a[std::size_t(i) * cols + j]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

inline Vec matvec(const Mat& A, const Vec& x) {
    if (std::size_t(A.cols) != x.size()) throw std::invalid_argument("matvec: size mismatch");
    Vec r(A.rows, 0.0);
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        const double* row = &A.a[std::size_t(i) * A.cols];
        for (int j = 0; j < A.cols; ++j) s += row[j] * x[j];
        r[i] = s;
    }
    return r;
}

// A^T x without forming the transpose
inline Vec matvec_t(const Mat& A, const Vec& x) {
    if (std::size_t(A.rows) != x.size()) throw std::invalid_argument("matvec_t: size mismatch");
    Vec r(A.cols, 0.0);
    for (int i = 0; i < A.rows; ++i) {
        const double* row = &A.a[std::size_t(i) * A.cols];
        const double xi = x[i];
        for (int j = 0; j < A.cols; ++j) r[j] += row[j] * xi;
    }
    return r;
}

inline Mat matmul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) throw std::invalid_argument("matmul: size mismatch");
    Mat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        for (int k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < B.cols; ++j) C(i, j) += aik * B(k, j);
        }
    }
    return C;
}

inline Mat transpose(const Mat& A) {
    Mat T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
    return T;
}

inline Mat mat_add(const Mat& A, const Mat& B) {
    if (!A.same_shape(B)) throw std::invalid_argument("mat_add: shape mismatch");
    Mat C = A;
    for (std::size_t i = 0; i < C.a.size(); ++i) C.a[i] += B.a[i];
    return C;
}

inline Mat mat_sub(const Mat& A, const Mat& B) {
    if (!A.same_shape(B)) throw std::invalid_argument("mat_sub: shape mismatch");
    Mat C = A;
    for (std::size_t i = 0; i < C.a.size(); ++i) C.a[i] -= B.a[i];
    return C;
}

inline Mat mat_scale(const Mat& A, double s) {
    Mat C = A;
    for (double& x : C.a) x *= s;
    return C;
}

// C += s * A
inline void mat_axpy(Mat& C, double s, const Mat& A) {
    if (!C.same_shape(A)) throw std::invalid_argument("mat_axpy: shape mismatch");
    for (std::size_t i = 0; i < C.a.size(); ++i) C.a[i] += s * A.a[i];
}

inline Mat outer(const Vec& u, const Vec& v) {
    Mat C(int(u.size()), int(v.size()));
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) C(int(i), int(j)) = u[i] * v[j];
    return C;
}

inline double frobenius(const Mat& A) {
    double s = 0.0;
    for (double x : A.a) s += x * x;
    return std::sqrt(s);
}

inline double max_abs(const Mat& A) {
    double m = 0.0;
    for (double x : A.a) m = std::max(m, std::abs(x));
    return m;
}

// Spectral norm estimate by power iteration on A^T A (default 30 iterations,
// relative tolerance 1e-12, fixed start vector so the result is reproducible).
// The Rayleigh estimate never exceeds the true norm; it is combined with
// three other cheap lower bounds (max column norm, max row norm, ||A||_F /
// sqrt(min dim)) so near-degenerate leading singular pairs cannot drag the
// returned value far below sigma_max.
inline double two_norm(const Mat& A, int max_iters = 30) {
    if (A.rows == 0 || A.cols == 0) return 0.0;
    Vec x(std::size_t(A.cols));
    Rng rng(0x9e3779b97f4a7c15ull);
    for (double& xi : x) xi = 1.0 + 0.25 * rng.uniform();
    {
        const double nx = nrm2(x);
        for (double& xi : x) xi /= nx;
    }
    double est = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        const Vec ax = matvec(A, x);
        const double cur = nrm2(ax);  // = sqrt(x^T A^T A x) for unit x
        if (cur == 0.0) { est = 0.0; break; }
        const Vec z = matvec_t(A, ax);
        const double nz = nrm2(z);
        if (nz == 0.0) { est = cur; break; }
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = z[i] / nz;
        if (it > 0 && std::abs(cur - est) <= 1e-12 * std::max(1.0, cur)) {
            est = cur;
            break;
        }
        est = cur;
    }
    for (int j = 0; j < A.cols; ++j) {
        double s = 0.0;
        for (int i = 0; i < A.rows; ++i) s += A(i, j) * A(i, j);
        est = std::max(est, std::sqrt(s));
    }
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols; ++j) s += A(i, j) * A(i, j);
        est = std::max(est, std::sqrt(s));
    }
    est = std::max(est, frobenius(A) / std::sqrt(double(std::min(A.rows, A.cols))));
    return est;
}

struct SingularTriplet {
    double sigma;
    Vec u;  // left singular vector,  A v = sigma u
    Vec v;  // right singular vector
};

// Leading singular triplet via the same power iteration.  Intended for
// spectral-norm subgradients, where the leading singular value is assumed
// simple; no refinement bounds here because u and v must stay consistent.
inline SingularTriplet leading_singular(const Mat& A) {
    Vec x(std::size_t(A.cols));
    Rng rng(0x9e3779b97f4a7c15ull);
    for (double& xi : x) xi = 1.0 + 0.25 * rng.uniform();
    double sigma = 0.0;
    for (int it = 0; it < 60; ++it) {
        const double nx = nrm2(x);
        if (nx == 0.0) break;
        for (double& xi : x) xi /= nx;
        const Vec ax = matvec(A, x);
        const double cur = nrm2(ax);
        if (cur == 0.0) { sigma = 0.0; break; }
        x = matvec_t(A, ax);
        if (it > 0 && std::abs(cur - sigma) <= 1e-14 * std::max(1.0, cur)) {
            sigma = cur;
            break;
        }
        sigma = cur;
    }
    const double nx = nrm2(x);
    if (nx > 0.0) for (double& xi : x) xi /= nx;
    Vec u = matvec(A, x);
    const double nu = nrm2(u);
    if (nu > 0.0) for (double& ui : u) ui /= nu;
    return {sigma, u, x};
}

// ------------------------------------------------------ LU solve / inverse --

// PA = LU with partial pivoting; returns the permuted factors packed in one
// matrix plus the row permutation.  Throws on (numerically) singular input.
struct LuFactors {
    Mat lu;
    std::vector<int> perm;
};

inline LuFactors lu_factor(const Mat& A) {
    if (A.rows != A.cols) throw std::invalid_argument("lu_factor: square matrix required");
    const int n = A.rows;
    LuFactors f{A, std::vector<int>(n)};
    for (int i = 0; i < n; ++i) f.perm[i] = i;
    for (int k = 0; k < n; ++k) {
        int piv = k;
        double best = std::abs(f.lu(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double v = std::abs(f.lu(i, k));
            if (v > best) { best = v; piv = i; }
        }
        if (best < 1e-300) throw std::runtime_error("lu_factor: singular matrix");
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(f.lu(k, j), f.lu(piv, j));
            std::swap(f.perm[k], f.perm[piv]);
        }
        for (int i = k + 1; i < n; ++i) {
            f.lu(i, k) /= f.lu(k, k);
            const double lik = f.lu(i, k);
            for (int j = k + 1; j < n; ++j) f.lu(i, j) -= lik * f.lu(k, j);
        }
    }
    return f;
}

inline Vec lu_solve(const LuFactors& f, const Vec& b) {
    const int n = f.lu.rows;
    if (b.size() != std::size_t(n)) throw std::invalid_argument("lu_solve: size mismatch");
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = b[std::size_t(f.perm[i])];
    for (int i = 1; i < n; ++i) {
        double s = x[i];
        for (int j = 0; j < i; ++j) s -= f.lu(i, j) * x[j];
        x[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
        double s = x[i];
        for (int j = i + 1; j < n; ++j) s -= f.lu(i, j) * x[j];
        x[i] = s / f.lu(i, i);
    }
    return x;
}

inline Mat inverse(const Mat& A) {
    const LuFactors f = lu_factor(A);
    const int n = A.rows;
    Mat inv(n, n);
    Vec e(n, 0.0);
    for (int j = 0; j < n; ++j) {
        e[j] = 1.0;
        const Vec col = lu_solve(f, e);
        for (int i = 0; i < n; ++i) inv(i, j) = col[i];
        e[j] = 0.0;
    }
    return inv;
}

// ------------------------------------------------- structured constructors --

// J = [0 -I; I 0], the interconnection matrix used whenever nothing fancier
// is asked for.  n must be even.
inline Mat canonical_J(int n) {
    if (n <= 0 || n % 2 != 0) throw std::invalid_argument("canonical_J: n must be positive and even");
    Mat J(n, n);
    const int half = n / 2;
    for (int i = 0; i < half; ++i) {
        J(i, half + i) = -1.0;
        J(half + i, i) = 1.0;
    }
    return J;
}

inline bool is_skew(const Mat& A, double tol = 0.0) {
    if (A.rows != A.cols) return false;
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j <= i; ++j)
            if (std::abs(A(i, j) + A(j, i)) > tol) return false;
    return true;
}

// Skew matrices are parameterized by their strict upper triangle, packed row
// by row: K = U - U^T.
inline int skew_param_count(int n) { return n * (n - 1) / 2; }

inline std::vector<double> skew_to_params(const Mat& K) {
    if (K.rows != K.cols) throw std::invalid_argument("skew_to_params: square matrix required");
    std::vector<double> p;
    p.reserve(std::size_t(skew_param_count(K.rows)));
    for (int i = 0; i < K.rows; ++i)
        for (int j = i + 1; j < K.cols; ++j) p.push_back(K(i, j));
    return p;
}

inline Mat skew_from_params(const double* p, int n) {
    Mat K(n, n);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            K(i, j) = p[k];
            K(j, i) = -p[k];
            ++k;
        }
    }
    return K;
}

// Gradient of a scalar w.r.t. the strict-upper-triangle parameters of a skew
// matrix, given the gradient w.r.t. the full matrix entries.
inline std::vector<double> skew_project_grad(const Mat& G) {
    if (G.rows != G.cols) throw std::invalid_argument("skew_project_grad: square matrix required");
    std::vector<double> p;
    p.reserve(std::size_t(skew_param_count(G.rows)));
    for (int i = 0; i < G.rows; ++i)
        for (int j = i + 1; j < G.cols; ++j) p.push_back(G(i, j) - G(j, i));
    return p;
}

}  // namespace hdnn
