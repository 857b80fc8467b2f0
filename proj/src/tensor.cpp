#include "bnn/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>

namespace bnn {

void contract_fail(const std::string& msg) { throw ContractError(msg); }

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

static void check_shape(const Shape& shape) {
    require(!shape.empty(), "DenseTensor: shape must be non-empty");
    for (int64_t d : shape) require(d >= 1, "DenseTensor: every extent must be >= 1");
}

DenseTensor::DenseTensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<size_t>(shape_numel(shape_)), fill);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    require(shape_numel(shape_) == static_cast<int64_t>(data_.size()),
            "DenseTensor: data length does not match shape");
}

int64_t DenseTensor::flat_index(std::initializer_list<int64_t> idx) const {
    require(static_cast<int64_t>(idx.size()) == order(), "DenseTensor::at: index arity mismatch");
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : idx) {
        require(i >= 0 && i < shape_[k], "DenseTensor::at: index out of range");
        flat = flat * shape_[k] + i;
        ++k;
    }
    return flat;
}

DenseTensor DenseTensor::reshaped(Shape new_shape) const {
    require(shape_numel(new_shape) == size(), "reshaped: element count mismatch");
    return DenseTensor(std::move(new_shape), data_);
}

bool DenseTensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix Matrix::identity(int64_t n) {
    Matrix m(n, n, 0.0);
    for (int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

// -- unfold / fold -----------------------------------------------------------
//
// Row-major layout means the columns left of `mode` and right of it split the
// flat index into an outer and an inner block:
//   flat = (outer * D_mode + i_mode) * inner + j
// so the unfolding column index is outer * inner + j with the remaining
// indices kept in their original order.

Matrix unfold(const DenseTensor& t, int64_t mode) {
    require(mode >= 0 && mode < t.order(), "unfold: mode out of range");
    const Shape& s = t.shape();
    int64_t d_mode = s[static_cast<size_t>(mode)];
    int64_t inner = 1;
    for (int64_t k = mode + 1; k < t.order(); ++k) inner *= s[static_cast<size_t>(k)];
    int64_t outer = t.size() / (d_mode * inner);

    Matrix m(d_mode, outer * inner);
    const double* src = t.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < d_mode; ++i) {
            const double* row = src + (o * d_mode + i) * inner;
            double* dst = m.data.data() + i * m.cols + o * inner;
            std::copy(row, row + inner, dst);
        }
    return m;
}

DenseTensor fold(const Matrix& m, int64_t mode, const Shape& shape) {
    require(mode >= 0 && mode < static_cast<int64_t>(shape.size()), "fold: mode out of range");
    int64_t d_mode = shape[static_cast<size_t>(mode)];
    require(m.rows == d_mode, "fold: matrix rows inconsistent with shape at mode");
    int64_t total = shape_numel(shape);
    require(m.rows * m.cols == total, "fold: matrix size inconsistent with shape");

    int64_t inner = 1;
    for (size_t k = static_cast<size_t>(mode) + 1; k < shape.size(); ++k) inner *= shape[k];
    int64_t outer = total / (d_mode * inner);

    DenseTensor t(shape);
    double* dst = t.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < d_mode; ++i) {
            const double* row = m.data.data() + i * m.cols + o * inner;
            std::copy(row, row + inner, dst + (o * d_mode + i) * inner);
        }
    return t;
}

DenseTensor mode_product(const DenseTensor& t, const Matrix& m, int64_t mode) {
    require(mode >= 0 && mode < t.order(), "mode_product: mode out of range");
    require(m.cols == t.dim(mode), "mode_product: m.cols must match the contracted extent");

    Matrix unfolded = unfold(t, mode);
    Matrix prod = matmul(m, unfolded);
    Shape out_shape = t.shape();
    out_shape[static_cast<size_t>(mode)] = m.rows;
    return fold(prod, mode, out_shape);
}

// -- SVD ---------------------------------------------------------------------

using EMat = Eigen::MatrixXd;
using EMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

static Matrix from_eigen(const EMat& e) {
    Matrix m(e.rows(), e.cols());
    for (int64_t r = 0; r < m.rows; ++r)
        for (int64_t c = 0; c < m.cols; ++c) m(r, c) = e(r, c);
    return m;
}

// Flip each u-column (and the paired v-column) so its largest-magnitude
// entry is positive; first occurrence wins on ties.
static void fix_signs(EMat& u, EMat* v) {
    for (Eigen::Index c = 0; c < u.cols(); ++c) {
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
            double a = std::abs(u(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = r;
            }
        }
        if (u(best, c) < 0.0) {
            u.col(c) = -u.col(c);
            if (v && c < v->cols()) v->col(c) = -v->col(c);
        }
    }
}

SvdResult svd(const Matrix& m) {
    require(m.all_finite(), "svd: input must be finite");
    EMap a(m.data.data(), m.rows, m.cols);
    Eigen::JacobiSVD<EMat> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    EMat u = dec.matrixU();
    EMat v = dec.matrixV();
    fix_signs(u, &v);

    SvdResult out;
    out.u = from_eigen(u);
    out.v = from_eigen(v);
    out.s.assign(dec.singularValues().data(), dec.singularValues().data() + dec.singularValues().size());
    return out;
}

Matrix left_singular_basis(const Matrix& m) {
    require(m.all_finite(), "left_singular_basis: input must be finite");
    EMap a(m.data.data(), m.rows, m.cols);
    Eigen::JacobiSVD<EMat> dec(a, Eigen::ComputeFullU);
    EMat u = dec.matrixU();
    fix_signs(u, nullptr);
    return from_eigen(u);
}

DenseTensor tucker_reconstruct(const DenseTensor& core, const std::vector<Matrix>& factors) {
    require(static_cast<int64_t>(factors.size()) == core.order(),
            "tucker_reconstruct: need one factor per mode");
    DenseTensor t = core;
    for (int64_t k = 0; k < core.order(); ++k) {
        require(factors[static_cast<size_t>(k)].cols == t.dim(k),
                "tucker_reconstruct: factor cols must match core extent");
        t = mode_product(t, factors[static_cast<size_t>(k)], k);
    }
    return t;
}

// -- dense helpers -----------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    EMap ea(a.data.data(), a.rows, a.cols);
    EMap eb(b.data.data(), b.rows, b.cols);
    return from_eigen(ea * eb);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
    EMap ea(a.data.data(), a.rows, a.cols);
    EMap eb(b.data.data(), b.rows, b.cols);
    return from_eigen(ea * eb.transpose());
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "matmul_tn: inner dimensions differ");
    EMap ea(a.data.data(), a.rows, a.cols);
    EMap eb(b.data.data(), b.rows, b.cols);
    return from_eigen(ea.transpose() * eb);
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols, m.rows);
    for (int64_t r = 0; r < m.rows; ++r)
        for (int64_t c = 0; c < m.cols; ++c) t(c, r) = m(r, c);
    return t;
}

double frobenius_norm(const DenseTensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.size(); ++i) s += t[i] * t[i];
    return std::sqrt(s);
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

}  // namespace bnn
