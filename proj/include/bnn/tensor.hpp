#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnn {

using Shape = std::vector<int64_t>;

/// Thrown when a caller violates an operation's preconditions.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

[[noreturn]] void contract_fail(const std::string& msg);

inline void require(bool cond, const char* msg) {
    if (!cond) contract_fail(msg);
}

int64_t shape_numel(const Shape& shape);

/// Dense N-order real tensor, row-major (last index fastest).
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape, double fill = 0.0);
    DenseTensor(Shape shape, std::vector<double> data);

    int64_t order() const { return static_cast<int64_t>(shape_.size()); }
    const Shape& shape() const { return shape_; }
    int64_t dim(int64_t i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(flat_index(idx))]; }
    double at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(flat_index(idx))]; }

    int64_t flat_index(std::initializer_list<int64_t> idx) const;

    bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

    /// Reinterpret the buffer under a new shape of equal element count.
    DenseTensor reshaped(Shape new_shape) const;

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Row-major 2-D matrix.
struct Matrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int64_t r, int64_t c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<size_t>(r * c), fill) {
        require(r >= 1 && c >= 1, "Matrix: extents must be positive");
    }
    Matrix(int64_t r, int64_t c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        require(r >= 1 && c >= 1, "Matrix: extents must be positive");
        require(static_cast<int64_t>(data.size()) == r * c, "Matrix: data size mismatch");
    }

    double& operator()(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols + c)]; }
    double operator()(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols + c)]; }

    static Matrix identity(int64_t n);
    bool all_finite() const;
};

/// Thin SVD: u (m x k), s (k, descending, >= 0), v (n x k), k = min(m, n).
struct SvdResult {
    Matrix u;
    std::vector<double> s;
    Matrix v;
};

// -- tensor_core operations ------------------------------------------------

/// Mode-n unfolding: rows = extent of `mode`, columns sweep the remaining
/// indices in their original row-major order.
Matrix unfold(const DenseTensor& t, int64_t mode);

/// Exact inverse of unfold.
DenseTensor fold(const Matrix& m, int64_t mode, const Shape& shape);

/// n-mode product: contracts shape(t)[mode] against m.cols,
/// result(..., r, ...) = sum_k m(r, k) * t(..., k, ...).
DenseTensor mode_product(const DenseTensor& t, const Matrix& m, int64_t mode);

/// Deterministic thin SVD. Signs fixed so the largest-magnitude entry of
/// each u-column is positive.
SvdResult svd(const Matrix& m);

/// Full square orthogonal basis of left singular vectors (columns beyond
/// rank(m) complete the basis), same sign convention as svd().
Matrix left_singular_basis(const Matrix& m);

/// Sequential mode products core x_0 factors[0] x_1 factors[1] ...
DenseTensor tucker_reconstruct(const DenseTensor& core, const std::vector<Matrix>& factors);

// -- small dense helpers (Eigen-backed) -------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);      // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);   // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);   // a^T * b
Matrix transpose(const Matrix& m);

double frobenius_norm(const DenseTensor& t);
double frobenius_norm(const Matrix& m);

}  // namespace bnn
