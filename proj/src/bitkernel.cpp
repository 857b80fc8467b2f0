#include "bnn/bitkernel.hpp"

#include "bnn/conv.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <random>

namespace bnn {

PackedBinaryTensor pack(const DenseTensor& t, int64_t split) {
    if (split < 0) split = t.order() >= 2 ? 1 : 0;
    require(split >= 0 && split < t.order(), "pack: invalid row split");

    PackedBinaryTensor p;
    p.shape = t.shape();
    p.rows = 1;
    for (int64_t k = 0; k < split; ++k) p.rows *= t.dim(k);
    p.row_bits = t.size() / p.rows;
    p.words_per_row = (p.row_bits + 63) / 64;
    p.words.assign(static_cast<size_t>(p.rows * p.words_per_row), 0);

    const double* src = t.data();
    for (int64_t r = 0; r < p.rows; ++r) {
        uint64_t* w = p.row(r);
        for (int64_t j = 0; j < p.row_bits; ++j) {
            double v = src[r * p.row_bits + j];
            if (v == 1.0) {
                w[j >> 6] |= uint64_t{1} << (j & 63);
            } else if (v != -1.0) {
                contract_fail("pack: values must be exactly -1 or +1");
            }
        }
    }
    return p;
}

DenseTensor unpack(const PackedBinaryTensor& p) {
    DenseTensor t(p.shape);
    double* dst = t.data();
    for (int64_t r = 0; r < p.rows; ++r) {
        const uint64_t* w = p.row(r);
        for (int64_t j = 0; j < p.row_bits; ++j)
            dst[r * p.row_bits + j] = (w[j >> 6] >> (j & 63)) & 1 ? 1.0 : -1.0;
    }
    return t;
}

int64_t xnor_dot(PackedRow a, PackedRow b) {
    require(a.bits == b.bits, "xnor_dot: valid-bit counts differ");
    int64_t diff = 0;
    for (int64_t k = 0; k < a.n_words; ++k) diff += std::popcount(a.words[k] ^ b.words[k]);
    return a.bits - 2 * diff;
}

std::vector<int64_t> xnor_gemm(const PackedBinaryTensor& a, const PackedBinaryTensor& b) {
    require(a.row_bits == b.row_bits, "xnor_gemm: row lengths differ");
    int64_t nw = a.words_per_row;
    std::vector<int64_t> out(static_cast<size_t>(a.rows * b.rows));
    for (int64_t i = 0; i < a.rows; ++i) {
        const uint64_t* ra = a.row(i);
        for (int64_t j = 0; j < b.rows; ++j) {
            const uint64_t* rb = b.row(j);
            int64_t diff = 0;
            for (int64_t k = 0; k < nw; ++k) diff += std::popcount(ra[k] ^ rb[k]);
            out[static_cast<size_t>(i * b.rows + j)] = a.row_bits - 2 * diff;
        }
    }
    return out;
}

DenseTensor binary_conv(const DenseTensor& x, const PackedBinaryTensor& weights,
                        const std::vector<double>& alpha, int64_t stride, int64_t pad) {
    require(x.order() == 4, "binary_conv: input must be (B, C, H, W)");
    require(weights.shape.size() == 4, "binary_conv: weights must be (O, C, kh, kw)");
    for (int64_t i = 0; i < x.size(); ++i)
        require(x[i] == 1.0 || x[i] == -1.0, "binary_conv: input entries must be +/-1");

    int64_t bs = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t out_ch = weights.shape[0], kh = weights.shape[2], kw = weights.shape[3];
    require(weights.shape[1] == ch, "binary_conv: channel mismatch");
    require(weights.rows == out_ch, "binary_conv: weights must be packed per filter");
    require(static_cast<int64_t>(alpha.size()) == out_ch, "binary_conv: alpha length mismatch");
    int64_t ho = conv_out_extent(h, kh, stride, pad);
    int64_t wo = conv_out_extent(w, kw, stride, pad);
    require(ho >= 1 && wo >= 1, "binary_conv: kernel does not fit the padded input");

    int64_t patch_bits = ch * kh * kw;
    int64_t nw = (patch_bits + 63) / 64;
    require(patch_bits == weights.row_bits, "binary_conv: filter/patch length mismatch");

    DenseTensor y({bs, out_ch, ho, wo});
    std::vector<uint64_t> patch(static_cast<size_t>(nw));
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t oh = 0; oh < ho; ++oh)
            for (int64_t ow = 0; ow < wo; ++ow) {
                std::fill(patch.begin(), patch.end(), 0);
                // Out-of-range taps stay at bit 0, the encoding of the -1 pad.
                for (int64_t c = 0; c < ch; ++c) {
                    const double* plane = x.data() + (b * ch + c) * h * w;
                    for (int64_t i = 0; i < kh; ++i) {
                        int64_t ih = oh * stride + i - pad;
                        if (ih < 0 || ih >= h) continue;
                        for (int64_t j = 0; j < kw; ++j) {
                            int64_t iw = ow * stride + j - pad;
                            if (iw < 0 || iw >= w) continue;
                            if (plane[ih * w + iw] > 0.0) {
                                int64_t bit = (c * kh + i) * kw + j;
                                patch[static_cast<size_t>(bit >> 6)] |= uint64_t{1} << (bit & 63);
                            }
                        }
                    }
                }
                PackedRow pr{patch.data(), nw, patch_bits};
                for (int64_t o = 0; o < out_ch; ++o) {
                    int64_t dot = xnor_dot(pr, packed_row(weights, o));
                    y[((b * out_ch + o) * ho + oh) * wo + ow] =
                        alpha[static_cast<size_t>(o)] * static_cast<double>(dot);
                }
            }
    return y;
}

// -- benchmark ----------------------------------------------------------------

static void naive_float_gemm(const std::vector<float>& a, const std::vector<float>& b,
                             std::vector<float>& c, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            float acc = 0.0f;
            const float* ra = a.data() + i * k;
            const float* rb = b.data() + j * k;
            for (int64_t t = 0; t < k; ++t) acc += ra[t] * rb[t];
            c[static_cast<size_t>(i * n + j)] = acc;
        }
}

BenchReport benchmark_kernel(const std::vector<int64_t>& inner_dims, int repeats) {
    using Clock = std::chrono::steady_clock;
    constexpr int64_t m = 48, n = 48;

    BenchReport report;
    report.m = m;
    report.n = n;
    std::mt19937_64 rng(0x62656e6368ULL);
    for (int64_t k : inner_dims) {
        DenseTensor at({m, k}), bt({n, k});
        for (int64_t i = 0; i < at.size(); ++i) at[i] = (rng() & 1) ? 1.0 : -1.0;
        for (int64_t i = 0; i < bt.size(); ++i) bt[i] = (rng() & 1) ? 1.0 : -1.0;
        std::vector<float> af(static_cast<size_t>(m * k)), bf(static_cast<size_t>(n * k));
        for (int64_t i = 0; i < at.size(); ++i) af[static_cast<size_t>(i)] = static_cast<float>(at[i]);
        for (int64_t i = 0; i < bt.size(); ++i) bf[static_cast<size_t>(i)] = static_cast<float>(bt[i]);
        PackedBinaryTensor ap = pack(at), bp = pack(bt);

        std::vector<float> cf(static_cast<size_t>(m * n));
        std::vector<int64_t> ci;

        double best_float = 1e300, best_xnor = 1e300;
        for (int r = 0; r < repeats; ++r) {
            auto t0 = Clock::now();
            naive_float_gemm(af, bf, cf, m, n, k);
            auto t1 = Clock::now();
            ci = xnor_gemm(ap, bp);
            auto t2 = Clock::now();
            best_float = std::min(best_float, std::chrono::duration<double>(t1 - t0).count());
            best_xnor = std::min(best_xnor, std::chrono::duration<double>(t2 - t1).count());
        }

        bool match = true;
        for (int64_t i = 0; i < m * n && match; ++i)
            match = static_cast<double>(cf[static_cast<size_t>(i)]) ==
                    static_cast<double>(ci[static_cast<size_t>(i)]);

        double ops = 2.0 * m * n * static_cast<double>(k);
        BenchRow row;
        row.inner_dim = k;
        row.float_gops = ops / best_float / 1e9;
        row.xnor_gops = ops / best_xnor / 1e9;
        row.ratio = best_float / best_xnor;
        row.results_match = match;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace bnn
