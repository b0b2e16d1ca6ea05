#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

// Boolean matrices over the (or, and) semiring.  Used to describe sparsity
// patterns: entry 1 means "this block may be nonzero / this node may talk to
// that node".  Addition is elementwise or, multiplication is the usual matrix
// product with + -> or and * -> and, and comparison A <= B is elementwise.

namespace hdnn {

struct BinMat {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> a;

    BinMat() = default;
    BinMat(int r, int c) : rows(r), cols(c), a(std::size_t(r) * c, 0) {
        if (r < 0 || c < 0) throw std::invalid_argument("BinMat: negative size");
    }

    static BinMat identity(int n) {
        BinMat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1;
        return m;
    }

    static BinMat ones(int r, int c) {
        BinMat m(r, c);
        for (auto& x : m.a) x = 1;
        return m;
    }

    std::uint8_t& operator()(int i, int j) { return a[std::size_t(i) * cols + j]; }
    std::uint8_t operator()(int i, int j) const { return a[std::size_t(i) * cols + j]; }

    bool same_shape(const BinMat& o) const { return rows == o.rows && cols == o.cols; }
};

inline BinMat bin_add(const BinMat& A, const BinMat& B) {
    if (!A.same_shape(B)) throw std::invalid_argument("bin_add: shape mismatch");
    BinMat C = A;
    for (std::size_t i = 0; i < C.a.size(); ++i) C.a[i] = (A.a[i] | B.a[i]) ? 1 : 0;
    return C;
}

inline BinMat bin_mul(const BinMat& A, const BinMat& B) {
    if (A.cols != B.rows) throw std::invalid_argument("bin_mul: size mismatch");
    BinMat C(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int k = 0; k < A.cols; ++k) {
            if (!A(i, k)) continue;
            for (int j = 0; j < B.cols; ++j)
                if (B(k, j)) C(i, j) = 1;
        }
    return C;
}

// elementwise A <= B
inline bool bin_leq(const BinMat& A, const BinMat& B) {
    if (!A.same_shape(B)) throw std::invalid_argument("bin_leq: shape mismatch");
    for (std::size_t i = 0; i < A.a.size(); ++i)
        if (A.a[i] && !B.a[i]) return false;
    return true;
}

inline BinMat bin_transpose(const BinMat& A) {
    BinMat T(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) T(j, i) = A(i, j);
    return T;
}

inline bool bin_equal(const BinMat& A, const BinMat& B) {
    return A.same_shape(B) && bin_leq(A, B) && bin_leq(B, A);
}

inline bool bin_symmetric(const BinMat& A) {
    if (A.rows != A.cols) return false;
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < i; ++j)
            if (A(i, j) != A(j, i)) return false;
    return true;
}

inline bool bin_unit_diagonal(const BinMat& A) {
    if (A.rows != A.cols) return false;
    for (int i = 0; i < A.rows; ++i)
        if (!A(i, i)) return false;
    return true;
}

}  // namespace hdnn
