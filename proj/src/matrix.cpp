#include "mcdd/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#ifdef MCDD_USE_CBLAS
#include <cblas.h>
#include <cstdlib>

namespace {

// Runs before main in every binary linking this library. OpenBLAS trusts
// CPUID model strings, which hypervisors often mask (it then falls back to
// a pre-AVX kernel); pin the core type from actual CPU features instead.
// A single BLAS thread keeps reruns reproducible; --jobs owns parallelism.
__attribute__((constructor)) void configure_blas_runtime() {
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
#if defined(__x86_64__)
    if (getenv("OPENBLAS_CORETYPE") == nullptr) {
        __builtin_cpu_init();
        if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
            __builtin_cpu_supports("avx512vl") && __builtin_cpu_supports("avx512bw")) {
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
        } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
            setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
        }
    }
#endif
}

} // namespace
#endif

namespace mcdd {

Matrix Matrix::from_rows(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw std::invalid_argument("Matrix::from_rows: data length " +
                                    std::to_string(data.size()) + " != " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) throw std::invalid_argument("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) throw std::invalid_argument("Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw std::invalid_argument("gather_rows: index out of range");
        const double* src = data_.data() + indices[i] * cols_;
        double* dst = out.data() + i * cols_;
        for (std::size_t c = 0; c < cols_; ++c) dst[c] = src[c];
    }
    return out;
}

bool Matrix::all_finite() const { return mcdd::all_finite(data_); }

bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace {

void check_chain(std::size_t inner_a, std::size_t inner_b, const char* op) {
    if (inner_a != inner_b) {
        throw std::invalid_argument(std::string(op) + ": inner dimensions " +
                                    std::to_string(inner_a) + " and " +
                                    std::to_string(inner_b) + " do not chain");
    }
}

#ifndef MCDD_USE_CBLAS
// Portable kernel: C (m x n) += A (m x k) * B (k x n), ikj order so the
// inner loop streams both B and C rows.
void gemm_fallback(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n,
                   bool transpose_a, bool transpose_b) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = transpose_a ? a[p * m + i] : a[i * k + p];
            if (av == 0.0) continue;
            if (!transpose_b) {
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            } else {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
            }
        }
    }
}
#endif

Matrix gemm(const Matrix& a, const Matrix& b, bool transpose_a, bool transpose_b) {
    const std::size_t m = transpose_a ? a.cols() : a.rows();
    const std::size_t k = transpose_a ? a.rows() : a.cols();
    const std::size_t kb = transpose_b ? b.cols() : b.rows();
    const std::size_t n = transpose_b ? b.rows() : b.cols();
    check_chain(k, kb, "matmul");
    Matrix out(m, n);
#ifdef MCDD_USE_CBLAS
    if (m > 0 && n > 0 && k > 0) {
        cblas_dgemm(CblasRowMajor,
                    transpose_a ? CblasTrans : CblasNoTrans,
                    transpose_b ? CblasTrans : CblasNoTrans,
                    static_cast<int>(m), static_cast<int>(n), static_cast<int>(k),
                    1.0, a.data(), static_cast<int>(a.cols()),
                    b.data(), static_cast<int>(b.cols()),
                    0.0, out.data(), static_cast<int>(n));
    }
#else
    gemm_fallback(a.data(), b.data(), out.data(), m, k, n, transpose_a, transpose_b);
#endif
    return out;
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) { return gemm(a, b, false, false); }
Matrix matmul_tn(const Matrix& a, const Matrix& b) { return gemm(a, b, true, false); }
Matrix matmul_nt(const Matrix& a, const Matrix& b) { return gemm(a, b, false, true); }

void add_row_vector(Matrix& m, std::span<const double> v) {
    if (v.size() != m.cols()) throw std::invalid_argument("add_row_vector: length mismatch");
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double* row = m.data() + r * m.cols();
        for (std::size_t c = 0; c < m.cols(); ++c) row[c] += v[c];
    }
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> sums(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.data() + r * m.cols();
        for (std::size_t c = 0; c < m.cols(); ++c) sums[c] += row[c];
    }
    return sums;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

} // namespace mcdd
