#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace afr::numerics {

// Dense row-major matrix of doubles. A row vector is a 1 x n matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::span<const double> values);

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

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
// Adds the 1 x cols row vector `row` to every row of m.
Matrix add_row_broadcast(const Matrix& m, const Matrix& row);
// 1 x cols matrix of column sums.
Matrix column_sums(const Matrix& m);
// 1 x cols matrix of column means.
Matrix column_means(const Matrix& m);
Matrix vstack(const Matrix& top, const Matrix& bottom);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Row-wise softmax with max subtraction. Throws NumericError on non-finite input.
Matrix softmax_rows(const Matrix& m);

enum class Activation { relu, sigmoid };

Matrix activations(const Matrix& m, Activation kind);
Matrix relu(const Matrix& m);
Matrix sigmoid(const Matrix& m);
double sigmoid(double x);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    double learning_rate = 0.001;
    double weight_decay = 0.0001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    explicit AdamState(std::size_t parameter_count = 0)
        : first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0) {}
};

// One Adam update with bias correction. Weight decay is coupled: it is added
// to the gradient before the moment update.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// Deterministic generator. The engine is fully specified by the standard, and
// every distribution is implemented here so draws match across platforms.
// Streams are derived by hashing (seed, stream_id), so episode e always sees
// the same sequence regardless of which worker runs it.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }

    // Independent child stream; does not advance this generator.
    Rng fork(std::uint64_t tag) const;

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 bits of precision.
    double uniform();
    double uniform(double lo, double hi);
    // Unbiased integer in [0, n).
    std::size_t uniform_index(std::size_t n);
    double normal();

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Central-difference gradient of loss at params.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& loss,
                                     std::span<const double> params, double h = 1e-4);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)
double max_relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace afr::numerics
