#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "saedit/error.hpp"

namespace saedit::linalg {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    Vector column(std::size_t c) const;
    void fill(double v);
    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct SparseEntry {
    std::uint32_t index = 0;
    double value = 0.0;

    friend bool operator==(const SparseEntry&, const SparseEntry&) = default;
};

/// Sparse vector with strictly increasing indices. Values may be any finite real.
struct SparseVector {
    std::size_t dim = 0;
    std::vector<SparseEntry> entries;

    std::size_t nnz() const noexcept { return entries.size(); }
    Vector to_dense() const;
    double norm() const;
    double dot(std::span<const double> dense) const;
    /// out += scale * this
    void add_scaled_to(std::span<double> out, double scale = 1.0) const;
    /// Throws ShapeError / NumericError when indices are unsorted, out of range or values non-finite.
    void validate() const;

    static SparseVector from_dense(std::span<const double> dense, double drop_at_or_below = 0.0);

    friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// y = a * x
Vector matvec(const Matrix& a, std::span<const double> x);
/// y = a^T * x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double cosine(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> a) noexcept;

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    Matrix m;
    Matrix v;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols, AdamConfig cfg = {})
        : config(cfg), m(rows, cols), v(rows, cols) {}
};

/// Bias-corrected Adam update. Advances `state` and returns the updated parameters.
Matrix adam_step(const Matrix& params, const Matrix& grads, AdamState& state);
/// In-place variants used by the training loop.
void adam_update(Matrix& params, const Matrix& grads, AdamState& state);
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state);

// ---------------------------------------------------------------------------
// Top singular vector by power iteration on the Gram form D^T D
// ---------------------------------------------------------------------------

struct PowerIterationOptions {
    std::uint64_t seed = 0;
    std::size_t max_iters = 10000;
    double tol = 1e-10;
    /// Relative gap (sigma1 - sigma2) / sigma1 below which the top direction counts as tied.
    double tie_gap = 1e-9;
};

struct SingularPair {
    Vector vector;          // unit-norm right singular vector
    double value = 0.0;     // largest singular value
    std::size_t iterations = 0;
    double residual = 0.0;  // ||G v - lambda v|| / lambda at exit
};

SingularPair top_singular_vector(const Matrix& d, const PowerIterationOptions& opts = {});
SingularPair top_singular_vector(const Matrix& d, std::uint64_t seed, std::size_t max_iters, double tol);

/// Rows given as sparse vectors of common dimension `dim`; products touch only stored entries.
SingularPair top_singular_vector(std::span<const SparseVector> rows, std::size_t dim,
                                 const PowerIterationOptions& opts = {});

}  // namespace saedit::linalg
