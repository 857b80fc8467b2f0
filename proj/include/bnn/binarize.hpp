#pragma once

#include "bnn/tensor.hpp"

#include <optional>
#include <vector>

namespace bnn {

enum class ScaleMode { AnalyticPerFilter, LearnedPerFilter };

/// Binarized weights plus per-output-channel scales. The effective weight
/// used by convolution is alpha[i] * b(i, :, :, :).
struct ScaledBinaryWeights {
    DenseTensor b;               // entries exactly -1 or +1, shape (O, C, w, h)
    std::vector<double> alpha;   // length O
};

/// Elementwise sign with sign(0) = -1.
DenseTensor sign_binarize(const DenseTensor& w);

/// Activations binarize with the same rule; no activation scaling.
DenseTensor binarize_activations(const DenseTensor& x);

/// alpha_i = mean absolute value of filter i of a (O, C, w, h) tensor.
std::vector<double> analytic_alpha(const DenseTensor& w);

ScaledBinaryWeights scale_binary(const DenseTensor& w, ScaleMode mode,
                                 const std::vector<double>* learned_alpha = nullptr);

/// Clipped straight-through estimator: passes grad where |pre| <= 1
/// (boundary inclusive), zero elsewhere.
DenseTensor ste_backward(const DenseTensor& grad_out, const DenseTensor& pre_binarization);

/// Adjoint of effective = alpha * b: dC/dalpha_i = sum over filter i of
/// grad_w_effective .* b.
std::vector<double> alpha_gradient(const DenseTensor& grad_w_effective, const DenseTensor& b);

/// alpha[i] * b(i, :, :, :), broadcast over the output channel.
DenseTensor effective_weights(const ScaledBinaryWeights& sw);

/// One row of the 64-bin histogram CSV export.
struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    int64_t count = 0;
};

/// 64 uniform bins over [min, max] of the observed values. Pure read.
std::vector<HistogramBin> histogram64(const std::vector<double>& values);

}  // namespace bnn
