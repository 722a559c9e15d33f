#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace delayformer {

/// Dense row-major tensor of 64-bit floats. Rank 1..3 in practice; the last
/// two extents are treated as (rows, cols) by the matrix kernels and any
/// leading extent as a batch dimension.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::initializer_list<std::size_t> shape);

    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    /// 2-D literal, mostly for tests: Tensor::matrix({{1,2},{3,4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vec(std::initializer_list<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Extent of the second-to-last dimension (1 for rank-0/1 tensors).
    std::size_t rows() const { return rank() >= 2 ? shape_[rank() - 2] : 1; }
    /// Extent of the last dimension.
    std::size_t cols() const { return rank() >= 1 ? shape_.back() : 1; }
    /// Product of all extents before the last two.
    std::size_t batches() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator()(std::size_t b, std::size_t r, std::size_t c) {
        return data_[(b * rows() + r) * cols() + c];
    }
    double operator()(std::size_t b, std::size_t r, std::size_t c) const {
        return data_[(b * rows() + r) * cols() + c];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return {data_.data(), data_.size()}; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    /// Same data, new shape; total size must match.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Throws DimensionError naming both shapes unless a and b match exactly.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

// ---- matrix kernels (OpenBLAS-backed) --------------------------------------

/// 2-D matrix product (R x K) * (K x C) -> (R x C).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Batched 3-D product over the leading dimension. transpose_b selects
/// C_i = alpha * A_i * B_i^T instead of alpha * A_i * B_i.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false, double alpha = 1.0);

Tensor transposed(const Tensor& a);  // 2-D only

// ---- elementwise / reduction kernels ---------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// m (.. x C) plus row vector v (C), broadcast over leading dims.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
/// Sum of a (.. x C) over all leading dims -> length-C vector.
Tensor colsum(const Tensor& m);

/// Solves A X = B for symmetric positive-definite A (n x n) and B (n x k)
/// via Cholesky factorization. Throws SolverError when A is not positive
/// definite. Only the lower triangle of A is read.
Tensor cholesky_solve(Tensor a, Tensor b);

/// Numerically stable softmax over the last dimension (max subtraction).
Tensor softmax_lastdim(const Tensor& x);

/// Exact-erf GELU: x * Phi(x).
Tensor gelu(const Tensor& x);
double gelu_scalar(double x);
double gelu_derivative_scalar(double x);

/// Normalize each last-dimension slice to zero mean / unit population
/// variance, then apply gain and bias (both length cols).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// ---- seeded random fills ----------------------------------------------------

Tensor uniform(std::vector<std::size_t> shape, double lo, double hi, std::mt19937_64& rng);
Tensor gaussian(std::vector<std::size_t> shape, double mean, double stddev, std::mt19937_64& rng);

}  // namespace delayformer
