#include "bnn/conv.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace bnn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

static void check_conv_args(const DenseTensor& x, const DenseTensor& w, int64_t stride,
                            int64_t pad) {
    require(x.order() == 4, "conv: input must be (B, C, H, W)");
    require(w.order() == 4, "conv: weights must be (O, C, kh, kw)");
    require(x.dim(1) == w.dim(1), "conv: channel mismatch between input and weights");
    require(stride >= 1 && pad >= 0, "conv: invalid stride/pad");
    require(conv_out_extent(x.dim(2), w.dim(2), stride, pad) >= 1 &&
                conv_out_extent(x.dim(3), w.dim(3), stride, pad) >= 1,
            "conv: kernel does not fit the padded input");
}

// Patch matrix: row (b*Ho + oh)*Wo + ow, column (c*kh + i)*kw + j.
static RowMat im2col(const DenseTensor& x, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                     double pad_value) {
    int64_t bs = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t ho = conv_out_extent(h, kh, stride, pad);
    int64_t wo = conv_out_extent(w, kw, stride, pad);
    RowMat patches(bs * ho * wo, ch * kh * kw);
    const double* src = x.data();
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t oh = 0; oh < ho; ++oh)
            for (int64_t ow = 0; ow < wo; ++ow) {
                double* row = patches.data() + ((b * ho + oh) * wo + ow) * patches.cols();
                for (int64_t c = 0; c < ch; ++c) {
                    const double* plane = src + (b * ch + c) * h * w;
                    for (int64_t i = 0; i < kh; ++i) {
                        int64_t ih = oh * stride + i - pad;
                        for (int64_t j = 0; j < kw; ++j) {
                            int64_t iw = ow * stride + j - pad;
                            bool inside = ih >= 0 && ih < h && iw >= 0 && iw < w;
                            row[(c * kh + i) * kw + j] = inside ? plane[ih * w + iw] : pad_value;
                        }
                    }
                }
            }
    return patches;
}

DenseTensor real_conv_forward(const DenseTensor& x, const DenseTensor& w, int64_t stride,
                              int64_t pad, double pad_value) {
    check_conv_args(x, w, stride, pad);
    int64_t bs = x.dim(0), out_ch = w.dim(0);
    int64_t ho = conv_out_extent(x.dim(2), w.dim(2), stride, pad);
    int64_t wo = conv_out_extent(x.dim(3), w.dim(3), stride, pad);

    RowMat patches = im2col(x, w.dim(2), w.dim(3), stride, pad, pad_value);
    ConstRowMap wmat(w.data(), out_ch, w.size() / out_ch);
    RowMat prod = patches * wmat.transpose();  // (B*Ho*Wo) x O

    DenseTensor y({bs, out_ch, ho, wo});
    double* dst = y.data();
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t p = 0; p < ho * wo; ++p) {
            const double* row = prod.data() + (b * ho * wo + p) * out_ch;
            for (int64_t o = 0; o < out_ch; ++o) dst[(b * out_ch + o) * ho * wo + p] = row[o];
        }
    return y;
}

ConvGrads real_conv_backward(const DenseTensor& x, const DenseTensor& w, const DenseTensor& grad_y,
                             int64_t stride, int64_t pad, double pad_value) {
    check_conv_args(x, w, stride, pad);
    int64_t bs = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int64_t out_ch = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    int64_t ho = conv_out_extent(h, kh, stride, pad);
    int64_t wo = conv_out_extent(wd, kw, stride, pad);
    require(grad_y.shape() == Shape({bs, out_ch, ho, wo}), "conv backward: grad shape mismatch");

    // Gather grad_y into (B*Ho*Wo) x O to pair with the patch matrix.
    RowMat gmat(bs * ho * wo, out_ch);
    const double* gsrc = grad_y.data();
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t o = 0; o < out_ch; ++o)
            for (int64_t p = 0; p < ho * wo; ++p)
                gmat(b * ho * wo + p, o) = gsrc[(b * out_ch + o) * ho * wo + p];

    RowMat patches = im2col(x, kh, kw, stride, pad, pad_value);

    ConvGrads out;
    out.dw = DenseTensor(w.shape());
    RowMap dwmat(out.dw.data(), out_ch, w.size() / out_ch);
    dwmat = gmat.transpose() * patches;

    ConstRowMap wmat(w.data(), out_ch, w.size() / out_ch);
    RowMat dpatches = gmat * wmat;  // (B*Ho*Wo) x (C*kh*kw)

    // col2im scatter-add; padding taps are constants and take no gradient.
    out.dx = DenseTensor(x.shape());
    double* dxp = out.dx.data();
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t oh = 0; oh < ho; ++oh)
            for (int64_t ow = 0; ow < wo; ++ow) {
                const double* row = dpatches.data() + ((b * ho + oh) * wo + ow) * dpatches.cols();
                for (int64_t c = 0; c < ch; ++c) {
                    double* plane = dxp + (b * ch + c) * h * wd;
                    for (int64_t i = 0; i < kh; ++i) {
                        int64_t ih = oh * stride + i - pad;
                        if (ih < 0 || ih >= h) continue;
                        for (int64_t j = 0; j < kw; ++j) {
                            int64_t iw = ow * stride + j - pad;
                            if (iw < 0 || iw >= wd) continue;
                            plane[ih * wd + iw] += row[(c * kh + i) * kw + j];
                        }
                    }
                }
            }
    return out;
}

// -- batch normalization -----------------------------------------------------

BnStats batch_stats(const DenseTensor& x) {
    require(x.order() == 4, "batch_norm: input must be (B, C, H, W)");
    int64_t bs = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
    int64_t count = bs * spatial;
    BnStats stats;
    stats.mean.assign(static_cast<size_t>(ch), 0.0);
    stats.var.assign(static_cast<size_t>(ch), 0.0);
    for (int64_t c = 0; c < ch; ++c) {
        double s = 0.0;
        for (int64_t b = 0; b < bs; ++b) {
            const double* p = x.data() + (b * ch + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) s += p[i];
        }
        stats.mean[static_cast<size_t>(c)] = s / count;
    }
    for (int64_t c = 0; c < ch; ++c) {
        double s = 0.0, m = stats.mean[static_cast<size_t>(c)];
        for (int64_t b = 0; b < bs; ++b) {
            const double* p = x.data() + (b * ch + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) s += (p[i] - m) * (p[i] - m);
        }
        stats.var[static_cast<size_t>(c)] = s / count;
    }
    return stats;
}

DenseTensor batch_norm_apply(const DenseTensor& x, const std::vector<double>& gamma,
                             const std::vector<double>& beta, const std::vector<double>& mean,
                             const std::vector<double>& var, BatchNormCache* cache) {
    require(x.order() == 4, "batch_norm: input must be (B, C, H, W)");
    int64_t bs = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
    require(static_cast<int64_t>(gamma.size()) == ch && static_cast<int64_t>(beta.size()) == ch,
            "batch_norm: channel dims mismatch");

    DenseTensor y(x.shape());
    DenseTensor xhat(x.shape());
    std::vector<double> inv_std(static_cast<size_t>(ch));
    for (int64_t c = 0; c < ch; ++c)
        inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + kBnEps);

    for (int64_t b = 0; b < bs; ++b)
        for (int64_t c = 0; c < ch; ++c) {
            auto ci = static_cast<size_t>(c);
            const double* p = x.data() + (b * ch + c) * spatial;
            double* xh = xhat.data() + (b * ch + c) * spatial;
            double* yo = y.data() + (b * ch + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
                xh[i] = (p[i] - mean[ci]) * inv_std[ci];
                yo[i] = gamma[ci] * xh[i] + beta[ci];
            }
        }

    if (cache) {
        cache->inv_std = std::move(inv_std);
        cache->xhat = std::move(xhat);
    }
    return y;
}

DenseTensor batch_norm_forward(const DenseTensor& x, const std::vector<double>& gamma,
                               const std::vector<double>& beta, std::vector<double>& running_mean,
                               std::vector<double>& running_var, double momentum, bool training,
                               BatchNormCache* cache) {
    if (!training) return batch_norm_apply(x, gamma, beta, running_mean, running_var, cache);
    BnStats stats = batch_stats(x);
    for (size_t c = 0; c < stats.mean.size(); ++c) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * stats.mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * stats.var[c];
    }
    return batch_norm_apply(x, gamma, beta, stats.mean, stats.var, cache);
}

BnGrads batch_norm_backward(const DenseTensor& grad_y, const BatchNormCache& cache,
                            const std::vector<double>& gamma) {
    const DenseTensor& xhat = cache.xhat;
    require(grad_y.same_shape(xhat), "batch_norm backward: shape mismatch");
    int64_t bs = grad_y.dim(0), ch = grad_y.dim(1), spatial = grad_y.dim(2) * grad_y.dim(3);
    int64_t count = bs * spatial;

    BnGrads out;
    out.dgamma.assign(static_cast<size_t>(ch), 0.0);
    out.dbeta.assign(static_cast<size_t>(ch), 0.0);
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t c = 0; c < ch; ++c) {
            auto ci = static_cast<size_t>(c);
            const double* g = grad_y.data() + (b * ch + c) * spatial;
            const double* xh = xhat.data() + (b * ch + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) {
                out.dgamma[ci] += g[i] * xh[i];
                out.dbeta[ci] += g[i];
            }
        }

    out.dx = DenseTensor(grad_y.shape());
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t c = 0; c < ch; ++c) {
            auto ci = static_cast<size_t>(c);
            double mean_dy = out.dbeta[ci] / count;
            double mean_dyxh = out.dgamma[ci] / count;
            double scale = gamma[ci] * cache.inv_std[ci];
            const double* g = grad_y.data() + (b * ch + c) * spatial;
            const double* xh = xhat.data() + (b * ch + c) * spatial;
            double* dx = out.dx.data() + (b * ch + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i)
                dx[i] = scale * (g[i] - mean_dy - xh[i] * mean_dyxh);
        }
    return out;
}

// -- pooling and fully connected ---------------------------------------------

DenseTensor avg_pool_forward(const DenseTensor& x) {
    require(x.order() == 4, "avg_pool: input must be (B, C, H, W)");
    int64_t bs = x.dim(0), ch = x.dim(1), spatial = x.dim(2) * x.dim(3);
    DenseTensor y({bs, ch, 1, 1});
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t c = 0; c < ch; ++c) {
            const double* p = x.data() + (b * ch + c) * spatial;
            double s = 0.0;
            for (int64_t i = 0; i < spatial; ++i) s += p[i];
            y[b * ch + c] = s / spatial;
        }
    return y;
}

DenseTensor avg_pool_backward(const DenseTensor& grad_y, const Shape& input_shape) {
    int64_t bs = input_shape[0], ch = input_shape[1], spatial = input_shape[2] * input_shape[3];
    require(grad_y.size() == bs * ch, "avg_pool backward: grad shape mismatch");
    DenseTensor dx(input_shape);
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t c = 0; c < ch; ++c) {
            double g = grad_y[b * ch + c] / spatial;
            double* p = dx.data() + (b * ch + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i) p[i] = g;
        }
    return dx;
}

DenseTensor fully_connected_forward(const DenseTensor& x, const DenseTensor& w,
                                    const std::vector<double>& bias) {
    int64_t bs = x.dim(0), features = x.size() / bs;
    require(w.order() == 2 && w.dim(1) == features, "fully_connected: weight shape mismatch");
    int64_t out = w.dim(0);
    require(static_cast<int64_t>(bias.size()) == out, "fully_connected: bias length mismatch");

    ConstRowMap xm(x.data(), bs, features);
    ConstRowMap wm(w.data(), out, features);
    DenseTensor y({bs, out});
    RowMap ym(y.data(), bs, out);
    ym = xm * wm.transpose();
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t o = 0; o < out; ++o) y[b * out + o] += bias[static_cast<size_t>(o)];
    return y;
}

FcGrads fully_connected_backward(const DenseTensor& x, const DenseTensor& w,
                                 const DenseTensor& grad_y) {
    int64_t bs = x.dim(0), features = x.size() / bs, out = w.dim(0);
    require(grad_y.shape() == Shape({bs, out}), "fully_connected backward: grad shape mismatch");

    ConstRowMap xm(x.data(), bs, features);
    ConstRowMap wm(w.data(), out, features);
    ConstRowMap gm(grad_y.data(), bs, out);

    FcGrads grads;
    grads.dw = DenseTensor(w.shape());
    RowMap dwm(grads.dw.data(), out, features);
    dwm = gm.transpose() * xm;

    grads.dx = DenseTensor(x.shape());
    RowMap dxm(grads.dx.data(), bs, features);
    dxm = gm * wm;

    grads.dbias.assign(static_cast<size_t>(out), 0.0);
    for (int64_t b = 0; b < bs; ++b)
        for (int64_t o = 0; o < out; ++o) grads.dbias[static_cast<size_t>(o)] += grad_y[b * out + o];
    return grads;
}

}  // namespace bnn
