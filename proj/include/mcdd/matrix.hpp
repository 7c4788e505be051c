#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mcdd {

/// Dense row-major matrix of doubles; the numeric carrier for features,
/// latent batches, weights and gradients.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Matrix& other) const = default;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    /// Copies the given source rows into a new matrix, in order.
    Matrix gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// out = a * b. Shapes must chain; throws std::invalid_argument otherwise.
Matrix matmul(const Matrix& a, const Matrix& b);

/// out = a^T * b.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

/// out = a * b^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Adds a row vector to every row of m in place.
void add_row_vector(Matrix& m, std::span<const double> v);

/// Column sums of m as a vector of length cols.
std::vector<double> column_sums(const Matrix& m);

/// Squared Euclidean distance between two equal-length spans.
double squared_distance(std::span<const double> a, std::span<const double> b);

bool all_finite(std::span<const double> values);

} // namespace mcdd
