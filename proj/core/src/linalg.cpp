#include "saedit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace saedit::linalg {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept { return linalg::all_finite(data_); }

Vector SparseVector::to_dense() const {
    Vector out(dim, 0.0);
    for (const auto& e : entries) out[e.index] = e.value;
    return out;
}

double SparseVector::norm() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.value * e.value;
    return std::sqrt(s);
}

double SparseVector::dot(std::span<const double> dense) const {
    if (dense.size() != dim) throw ShapeError("sparse/dense dot: dimension mismatch");
    double s = 0.0;
    for (const auto& e : entries) s += e.value * dense[e.index];
    return s;
}

void SparseVector::add_scaled_to(std::span<double> out, double scale) const {
    if (out.size() != dim) throw ShapeError("sparse axpy: dimension mismatch");
    for (const auto& e : entries) out[e.index] += scale * e.value;
}

void SparseVector::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].index >= dim) {
            throw ShapeError("sparse index " + std::to_string(entries[i].index) + " out of range " +
                             std::to_string(dim));
        }
        if (i > 0 && entries[i].index <= entries[i - 1].index) {
            throw ShapeError("sparse indices not strictly increasing at position " + std::to_string(i));
        }
        if (!std::isfinite(entries[i].value)) {
            throw NumericError("non-finite sparse value at index " + std::to_string(entries[i].index));
        }
    }
}

SparseVector SparseVector::from_dense(std::span<const double> dense, double drop_at_or_below) {
    SparseVector out;
    out.dim = dense.size();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        if (std::abs(dense[i]) > drop_at_or_below) {
            out.entries.push_back({static_cast<std::uint32_t>(i), dense[i]});
        }
    }
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix c(a.rows(), b.cols());
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) throw ShapeError("matvec_transposed: dimension mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += xi * r[j];
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

bool all_finite(std::span<const double> a) noexcept {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------

void adam_update(Matrix& params, const Matrix& grads, AdamState& state) {
    if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
        state.m.rows() != params.rows() || state.m.cols() != params.cols()) {
        throw ShapeError("adam_step: params, grads and state buffers must share a shape");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads.values()[i])) {
            throw NumericError("adam_step: non-finite gradient at flat index " + std::to_string(i) +
                               " (row " + std::to_string(i / grads.cols()) + ", col " +
                               std::to_string(i % grads.cols()) + ")");
        }
    }
    adam_update(params.values(), grads.values(), state);
}

void adam_update(std::span<double> p, std::span<const double> g, AdamState& state) {
    if (p.size() != g.size() || state.m.size() != p.size() || state.v.size() != p.size()) {
        throw ShapeError("adam_step: params, grads and state buffers must share a shape");
    }
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
            throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
        }
    }

    const auto& cfg = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    auto m = state.m.values();
    auto v = state.v.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        // Zero-gradient entries keep their value; only the moments decay.
        if (g[i] == 0.0) continue;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

Matrix adam_step(const Matrix& params, const Matrix& grads, AdamState& state) {
    Matrix out = params;
    adam_update(out, grads, state);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void normalize(Vector& v) {
    const double n = norm(v);
    for (double& x : v) x /= n;
}

Vector random_unit(std::size_t dim, std::uint64_t seed) {
    // splitmix64 keeps the start vector independent of <random> distribution details.
    std::uint64_t state = seed + 0x9E3779B97F4A7C15ULL;
    auto next = [&state]() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    Vector v(dim);
    for (double& x : v) x = static_cast<double>(next() >> 11) * 0x1.0p-53 - 0.5;
    normalize(v);
    return v;
}

struct Eigen1 {
    Vector vector;
    double lambda = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

// Power iteration for the dominant eigenpair of a symmetric PSD operator.
template <class Gram>
Eigen1 dominant_eigenpair(const Gram& gram, Vector v, const PowerIterationOptions& opts) {
    Eigen1 out;
    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        Vector w = gram(v);
        const double lambda = dot(v, w);
        double r2 = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double d = w[i] - lambda * v[i];
            r2 += d * d;
        }
        const double wn = norm(w);
        out.iterations = it;
        out.lambda = lambda;
        out.residual = lambda > 0.0 ? std::sqrt(r2) / lambda : (wn == 0.0 ? 0.0 : 1.0);
        if (wn == 0.0) {
            out.vector = std::move(v);
            out.converged = true;
            return out;
        }
        if (out.residual < opts.tol) {
            out.vector = std::move(v);
            out.converged = true;
            return out;
        }
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = w[i] / wn;
    }
    out.vector = std::move(v);
    return out;
}

template <class Gram>
SingularPair solve_top(const Gram& gram, std::size_t dim, const Vector& mean_row,
                       const PowerIterationOptions& opts) {
    if (opts.max_iters < 1) throw ConfigError("top_singular_vector: max_iters must be >= 1");
    if (!(opts.tol > 0.0)) throw ConfigError("top_singular_vector: tol must be > 0");

    Eigen1 top = dominant_eigenpair(gram, random_unit(dim, opts.seed), opts);
    if (!top.converged) {
        throw ConvergenceError("top_singular_vector: no convergence within " +
                                   std::to_string(opts.max_iters) + " iterations (residual " +
                                   std::to_string(top.residual) + ")",
                               top.residual);
    }
    if (!(top.lambda > 0.0)) throw DegenerateError("top_singular_vector: zero matrix");

    // Second eigenvalue of the deflated operator, to detect a tied top direction.
    const Vector& v1 = top.vector;
    const double l1 = top.lambda;
    auto deflated = [&](const Vector& x) {
        Vector w = gram(x);
        const double c = l1 * dot(v1, x);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= c * v1[i];
        return w;
    };
    Vector start = random_unit(dim, opts.seed ^ 0xD1B54A32D192ED03ULL);
    const double proj = dot(start, v1);
    for (std::size_t i = 0; i < dim; ++i) start[i] -= proj * v1[i];
    if (norm(start) > 0.0) {
        normalize(start);
        Eigen1 second = dominant_eigenpair(deflated, std::move(start), opts);
        const double s1 = std::sqrt(l1);
        const double s2 = std::sqrt(std::max(second.lambda, 0.0));
        if ((s1 - s2) / s1 < opts.tie_gap) {
            throw ConvergenceError("top_singular_vector: top singular value is tied (sigma1=" +
                                       std::to_string(s1) + ", sigma2=" + std::to_string(s2) +
                                       "); aggregate direction is ill-defined",
                                   top.residual);
        }
    }

    SingularPair out;
    out.vector = std::move(top.vector);
    out.value = std::sqrt(l1);
    out.iterations = top.iterations;
    out.residual = top.residual;

    // Sign: non-negative correlation with the mean row; exact zero falls back to the
    // largest-magnitude entry being positive.
    const double corr = dot(out.vector, mean_row);
    bool flip = corr < 0.0;
    if (corr == 0.0) {
        std::size_t arg = 0;
        for (std::size_t i = 1; i < dim; ++i)
            if (std::abs(out.vector[i]) > std::abs(out.vector[arg])) arg = i;
        flip = out.vector[arg] < 0.0;
    }
    if (flip)
        for (double& x : out.vector) x = -x;
    return out;
}

}  // namespace

SingularPair top_singular_vector(const Matrix& d, const PowerIterationOptions& opts) {
    if (d.rows() == 0 || d.cols() == 0) throw DegenerateError("top_singular_vector: empty matrix");
    if (std::all_of(d.values().begin(), d.values().end(), [](double x) { return x == 0.0; })) {
        throw DegenerateError("top_singular_vector: zero matrix");
    }
    Vector mean_row(d.cols(), 0.0);
    for (std::size_t r = 0; r < d.rows(); ++r)
        for (std::size_t c = 0; c < d.cols(); ++c) mean_row[c] += d(r, c);
    for (double& x : mean_row) x /= static_cast<double>(d.rows());

    auto gram = [&d](const Vector& x) { return matvec_transposed(d, matvec(d, x)); };
    return solve_top(gram, d.cols(), mean_row, opts);
}

SingularPair top_singular_vector(const Matrix& d, std::uint64_t seed, std::size_t max_iters, double tol) {
    PowerIterationOptions opts;
    opts.seed = seed;
    opts.max_iters = max_iters;
    opts.tol = tol;
    return top_singular_vector(d, opts);
}

SingularPair top_singular_vector(std::span<const SparseVector> rows, std::size_t dim,
                                 const PowerIterationOptions& opts) {
    if (rows.empty() || dim == 0) throw DegenerateError("top_singular_vector: empty matrix");
    bool any = false;
    Vector mean_row(dim, 0.0);
    for (const auto& r : rows) {
        if (r.dim != dim) throw ShapeError("top_singular_vector: rows must share one dimension");
        r.validate();
        for (const auto& e : r.entries) {
            mean_row[e.index] += e.value;
            any = any || e.value != 0.0;
        }
    }
    if (!any) throw DegenerateError("top_singular_vector: zero matrix");
    for (double& x : mean_row) x /= static_cast<double>(rows.size());

    auto gram = [&rows, dim](const Vector& x) {
        Vector w(dim, 0.0);
        for (const auto& r : rows) {
            const double s = r.dot(x);
            if (s != 0.0) r.add_scaled_to(w, s);
        }
        return w;
    };
    return solve_top(gram, dim, mean_row, opts);
}

}  // namespace saedit::linalg
