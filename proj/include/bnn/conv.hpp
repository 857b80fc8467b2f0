#pragma once

#include "bnn/tensor.hpp"

#include <vector>

namespace bnn {

struct ConvGeom {
    int64_t out_ch = 0;
    int64_t in_ch = 0;
    int64_t kh = 0;
    int64_t kw = 0;
    int64_t stride = 1;
    int64_t pad = 0;
};

int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad);

/// Cross-correlation of x (B, C, H, W) with w (O, C, kh, kw). Out-of-range
/// taps read `pad_value` (0 for real convs, -1 for binary convs so the
/// training graph matches the bit kernel exactly).
DenseTensor real_conv_forward(const DenseTensor& x, const DenseTensor& w, int64_t stride,
                              int64_t pad, double pad_value = 0.0);

struct ConvGrads {
    DenseTensor dx;
    DenseTensor dw;
};

ConvGrads real_conv_backward(const DenseTensor& x, const DenseTensor& w, const DenseTensor& grad_y,
                             int64_t stride, int64_t pad, double pad_value = 0.0);

// -- batch normalization -----------------------------------------------------

struct BatchNormCache {
    std::vector<double> inv_std;  // per channel, batch statistics
    DenseTensor xhat;
};

struct BnStats {
    std::vector<double> mean, var;  // per channel over (B, H, W), biased variance
};

BnStats batch_stats(const DenseTensor& x);

/// Normalizes with the given statistics and applies the affine transform.
/// eps = 1e-5 guards zero-variance channels.
DenseTensor batch_norm_apply(const DenseTensor& x, const std::vector<double>& gamma,
                             const std::vector<double>& beta, const std::vector<double>& mean,
                             const std::vector<double>& var, BatchNormCache* cache);

/// Per-channel BN over (B, H, W). In training mode normalizes with batch
/// statistics and updates the running ones; in eval mode uses the running
/// statistics.
DenseTensor batch_norm_forward(const DenseTensor& x, const std::vector<double>& gamma,
                               const std::vector<double>& beta, std::vector<double>& running_mean,
                               std::vector<double>& running_var, double momentum, bool training,
                               BatchNormCache* cache);

struct BnGrads {
    DenseTensor dx;
    std::vector<double> dgamma;
    std::vector<double> dbeta;
};

BnGrads batch_norm_backward(const DenseTensor& grad_y, const BatchNormCache& cache,
                            const std::vector<double>& gamma);

constexpr double kBnEps = 1e-5;

// -- pooling and fully connected ---------------------------------------------

/// Global average pool (B, C, H, W) -> (B, C, 1, 1).
DenseTensor avg_pool_forward(const DenseTensor& x);
DenseTensor avg_pool_backward(const DenseTensor& grad_y, const Shape& input_shape);

/// y = flatten(x) * w^T + bias, w is (O, D).
DenseTensor fully_connected_forward(const DenseTensor& x, const DenseTensor& w,
                                    const std::vector<double>& bias);

struct FcGrads {
    DenseTensor dx;
    DenseTensor dw;
    std::vector<double> dbias;
};

FcGrads fully_connected_backward(const DenseTensor& x, const DenseTensor& w,
                                 const DenseTensor& grad_y);

}  // namespace bnn
