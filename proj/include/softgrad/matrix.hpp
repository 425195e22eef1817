#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "softgrad/error.hpp"

namespace softgrad {

using Vector = std::vector<double>;

/// Dense row-major matrix. Just enough linear algebra for small MLPs.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::size_t size() const { return data.size(); }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
};

inline bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) {
    for (double x : m.data)
        if (!std::isfinite(x)) return false;
    return true;
}

/// y = A x
inline Vector matvec(const Matrix& a, const Vector& x) {
    if (x.size() != a.cols)
        throw StructuralError("matvec: vector length " + std::to_string(x.size()) +
                              " does not match matrix cols " + std::to_string(a.cols));
    Vector y(a.rows, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.data.data() + r * a.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

/// y = A^T x
inline Vector matvec_transposed(const Matrix& a, const Vector& x) {
    if (x.size() != a.rows)
        throw StructuralError("matvec_transposed: vector length mismatch");
    Vector y(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* row = a.data.data() + r * a.cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += row[c] * xr;
    }
    return y;
}

/// out (batch x a.rows) = in (batch x a.cols) * A^T, i.e. row b of out is A * row b of in.
/// Wide outputs go through a transposed-weight kernel whose inner loop is
/// unit-stride over the output row; narrow outputs use plain dot products.
inline Matrix matmul_batch(const Matrix& in, const Matrix& a) {
    if (in.cols != a.cols)
        throw StructuralError("matmul_batch: input width " + std::to_string(in.cols) +
                              " does not match matrix cols " + std::to_string(a.cols));
    Matrix out(in.rows, a.rows);
    if (a.rows >= 8 && in.rows > 1) {
        std::vector<double> transposed(a.cols * a.rows);
        for (std::size_t r = 0; r < a.rows; ++r)
            for (std::size_t c = 0; c < a.cols; ++c) transposed[c * a.rows + r] = a(r, c);
        for (std::size_t b = 0; b < in.rows; ++b) {
            const double* x = in.data.data() + b * in.cols;
            double* y = out.data.data() + b * out.cols;
            for (std::size_t c = 0; c < a.cols; ++c) {
                const double xv = x[c];
                const double* column = transposed.data() + c * a.rows;
                for (std::size_t r = 0; r < a.rows; ++r) y[r] += xv * column[r];
            }
        }
        return out;
    }
    for (std::size_t b = 0; b < in.rows; ++b) {
        const double* x = in.data.data() + b * in.cols;
        double* y = out.data.data() + b * out.cols;
        for (std::size_t r = 0; r < a.rows; ++r) {
            const double* row = a.data.data() + r * a.cols;
            double acc = 0.0;
            for (std::size_t c = 0; c < a.cols; ++c) acc += row[c] * x[c];
            y[r] = acc;
        }
    }
    return out;
}

}  // namespace softgrad
