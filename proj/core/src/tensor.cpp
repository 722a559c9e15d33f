#include "delayformer/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "delayformer/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace delayformer {

namespace {

// Fixed reduction order everywhere; multi-threaded BLAS would break
// bit-identical reruns.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit blas_init;

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    for (std::size_t e : shape_) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str());
    }
    data_.assign(product(shape_), 0.0);
}

Tensor::Tensor(std::initializer_list<std::size_t> shape)
    : Tensor(std::vector<std::size_t>(shape)) {}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = value;
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (product(t.shape_) != values.size())
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not fill shape " + t.shape_str());
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = rows.begin()->size();
    Tensor t({r, c});
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        for (double v : row) t.data_[i++] = v;
    }
    return t;
}

Tensor Tensor::vec(std::initializer_list<double> values) {
    Tensor t({values.size()});
    std::size_t i = 0;
    for (double v : values) t.data_[i++] = v;
    return t;
}

std::size_t Tensor::batches() const {
    if (rank() <= 2) return 1;
    std::size_t b = 1;
    for (std::size_t i = 0; i + 2 < rank(); ++i) b *= shape_[i];
    return b;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (product(shape) != size())
        throw DimensionError("cannot reshape " + shape_str() + " to new element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ')';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul expects 2-D operands, got " + a.shape_str() + " and " +
                             b.shape_str());
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner extents differ, " + a.shape_str() + " vs " +
                             b.shape_str());
    Tensor c({a.rows(), b.cols()});
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(a.rows()),
                static_cast<int>(b.cols()), static_cast<int>(a.cols()), 1.0, a.data(),
                static_cast<int>(a.cols()), b.data(), static_cast<int>(b.cols()), 0.0, c.data(),
                static_cast<int>(c.cols()));
    return c;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b, double alpha) {
    if (a.rank() != 3 || b.rank() != 3)
        throw DimensionError("bmm expects 3-D operands, got " + a.shape_str() + " and " +
                             b.shape_str());
    const std::size_t nb = a.shape()[0];
    if (b.shape()[0] != nb)
        throw DimensionError("bmm: batch extents differ, " + a.shape_str() + " vs " +
                             b.shape_str());
    const std::size_t m = a.rows(), k = a.cols();
    const std::size_t bk = transpose_b ? b.cols() : b.rows();
    const std::size_t n = transpose_b ? b.rows() : b.cols();
    if (bk != k)
        throw DimensionError("bmm: inner extents differ, " + a.shape_str() + " vs " +
                             b.shape_str());
    Tensor c({nb, m, n});
    const std::size_t sa = m * k, sb = b.rows() * b.cols(), sc = m * n;
    for (std::size_t i = 0; i < nb; ++i) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, transpose_b ? CblasTrans : CblasNoTrans,
                    static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha,
                    a.data() + i * sa, static_cast<int>(k), b.data() + i * sb,
                    static_cast<int>(b.cols()), 0.0, c.data() + i * sc, static_cast<int>(n));
    }
    return c;
}

Tensor transposed(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transposed expects a 2-D tensor");
    Tensor t({a.cols(), a.rows()});
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= s;
    return c;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (v.rank() != 1 || v.cols() != m.cols())
        throw DimensionError("add_rowvec: vector " + v.shape_str() + " incompatible with " +
                             m.shape_str());
    Tensor c = m;
    const std::size_t w = m.cols(), n = m.size() / w;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < w; ++j) c[r * w + j] += v[j];
    return c;
}

Tensor colsum(const Tensor& m) {
    const std::size_t w = m.cols(), n = m.size() / w;
    Tensor v({w});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < w; ++j) v[j] += m[r * w + j];
    return v;
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::size_t w = x.cols();
    if (w == 0) throw ContractError("softmax_lastdim: empty last dimension");
    const std::size_t n = x.size() / w;
    Tensor y = x;
    for (std::size_t r = 0; r < n; ++r) {
        double* row = y.data() + r * w;
        double mx = row[0];
        for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < w; ++j) row[j] /= sum;
    }
    return y;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative_scalar(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double Phi = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    return Phi + x * phi;
}

Tensor gelu(const Tensor& x) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = gelu_scalar(y[i]);
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) throw ContractError("layer_norm: eps must be > 0");
    const std::size_t w = x.cols();
    if (gain.size() != w || bias.size() != w)
        throw DimensionError("layer_norm: gain/bias length must equal last extent of " +
                             x.shape_str());
    const std::size_t n = x.size() / w;
    Tensor y = x;
    for (std::size_t r = 0; r < n; ++r) {
        double* row = y.data() + r * w;
        double mean = 0.0;
        for (std::size_t j = 0; j < w; ++j) mean += row[j];
        mean /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(w);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < w; ++j) row[j] = (row[j] - mean) * inv * gain[j] + bias[j];
    }
    return y;
}

Tensor uniform(std::vector<std::size_t> shape, double lo, double hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

Tensor gaussian(std::vector<std::size_t> shape, double mean, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(mean, stddev);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

Tensor cholesky_solve(Tensor a, Tensor b) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw DimensionError("cholesky_solve: A must be square, got " + a.shape_str());
    if (b.rank() != 2 || b.rows() != a.rows())
        throw DimensionError("cholesky_solve: B is " + b.shape_str() + " for A " + a.shape_str());
    const std::size_t n = a.rows();
    const std::size_t kb = 64;  // panel width; diagonal blocks factored scalar-wise

    // Right-looking blocked Cholesky of the lower triangle: A = L L^T.
    for (std::size_t j = 0; j < n; j += kb) {
        const std::size_t jb = std::min(kb, n - j);
        for (std::size_t c = j; c < j + jb; ++c) {
            double diag = a(c, c);
            for (std::size_t t = j; t < c; ++t) diag -= a(c, t) * a(c, t);
            if (!(diag > 0.0))
                throw SolverError("cholesky_solve: matrix not positive definite at pivot " +
                                  std::to_string(c));
            const double l = std::sqrt(diag);
            a(c, c) = l;
            for (std::size_t r = c + 1; r < j + jb; ++r) {
                double s = a(r, c);
                for (std::size_t t = j; t < c; ++t) s -= a(r, t) * a(c, t);
                a(r, c) = s / l;
            }
        }
        const std::size_t rest = n - j - jb;
        if (rest == 0) continue;
        // Panel below the diagonal block: solve against L_jj^T from the right.
        cblas_dtrsm(CblasRowMajor, CblasRight, CblasLower, CblasTrans, CblasNonUnit,
                    static_cast<int>(rest), static_cast<int>(jb), 1.0, a.data() + j * n + j,
                    static_cast<int>(n), a.data() + (j + jb) * n + j, static_cast<int>(n));
        // Trailing update of the lower triangle.
        cblas_dsyrk(CblasRowMajor, CblasLower, CblasNoTrans, static_cast<int>(rest),
                    static_cast<int>(jb), -1.0, a.data() + (j + jb) * n + j,
                    static_cast<int>(n), 1.0, a.data() + (j + jb) * n + (j + jb),
                    static_cast<int>(n));
    }

    // L y = B, then L^T x = y.
    cblas_dtrsm(CblasRowMajor, CblasLeft, CblasLower, CblasNoTrans, CblasNonUnit,
                static_cast<int>(n), static_cast<int>(b.cols()), 1.0, a.data(),
                static_cast<int>(n), b.data(), static_cast<int>(b.cols()));
    cblas_dtrsm(CblasRowMajor, CblasLeft, CblasLower, CblasTrans, CblasNonUnit,
                static_cast<int>(n), static_cast<int>(b.cols()), 1.0, a.data(),
                static_cast<int>(n), b.data(), static_cast<int>(b.cols()));
    return b;
}

}  // namespace delayformer
