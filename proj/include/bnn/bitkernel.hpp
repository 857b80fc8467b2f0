#pragma once

#include "bnn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace bnn {

/// Bit-packed +/-1 tensor: +1 -> 1, -1 -> 0, little-endian bit order within
/// each 64-bit word. Leading axes up to `split` form rows; the remaining
/// contiguous tail of each row is packed with zeroed tail padding.
struct PackedBinaryTensor {
    Shape shape;
    int64_t rows = 0;
    int64_t row_bits = 0;
    int64_t words_per_row = 0;
    std::vector<uint64_t> words;  // rows * words_per_row

    const uint64_t* row(int64_t r) const { return words.data() + r * words_per_row; }
    uint64_t* row(int64_t r) { return words.data() + r * words_per_row; }
};

/// split defaults to 1 for tensors of order >= 2 (first axis = rows) and to
/// 0 for vectors (a single row).
PackedBinaryTensor pack(const DenseTensor& t, int64_t split = -1);
DenseTensor unpack(const PackedBinaryTensor& p);

/// One packed row with its valid-bit count.
struct PackedRow {
    const uint64_t* words = nullptr;
    int64_t n_words = 0;
    int64_t bits = 0;
};

inline PackedRow packed_row(const PackedBinaryTensor& p, int64_t r) {
    return {p.row(r), p.words_per_row, p.row_bits};
}

/// sum_i a_i * b_i over +/-1 values: n - 2 * popcount(a XOR b).
int64_t xnor_dot(PackedRow a, PackedRow b);

/// All-pairs xnor dot products: out[i * b.rows + j] = row_i(a) . row_j(b).
std::vector<int64_t> xnor_gemm(const PackedBinaryTensor& a, const PackedBinaryTensor& b);

/// Binary convolution per Eq.-style scaled binary conv: im2row the +/-1
/// input (padding value -1), xnor against each packed filter, scale row i by
/// alpha[i]. Exactly equals the dense convolution of the +/-1 operands.
DenseTensor binary_conv(const DenseTensor& x_pm1, const PackedBinaryTensor& weights,
                        const std::vector<double>& alpha, int64_t stride, int64_t pad);

struct BenchRow {
    int64_t inner_dim = 0;
    double float_gops = 0.0;
    double xnor_gops = 0.0;
    double ratio = 0.0;
    bool results_match = false;
};

struct BenchReport {
    int64_t m = 0, n = 0;
    std::vector<BenchRow> rows;
};

/// Times an xnor GEMM against a naive single-threaded float GEMM of the same
/// logical size; also checks the two paths agree exactly.
BenchReport benchmark_kernel(const std::vector<int64_t>& inner_dims, int repeats);

}  // namespace bnn
