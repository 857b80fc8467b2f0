#include "bnn/binarize.hpp"

#include <cmath>

namespace bnn {

DenseTensor sign_binarize(const DenseTensor& w) {
    require(w.all_finite(), "sign_binarize: input must be finite");
    DenseTensor b(w.shape());
    for (int64_t i = 0; i < w.size(); ++i) b[i] = w[i] > 0.0 ? 1.0 : -1.0;
    return b;
}

DenseTensor binarize_activations(const DenseTensor& x) { return sign_binarize(x); }

std::vector<double> analytic_alpha(const DenseTensor& w) {
    require(w.order() == 4, "analytic_alpha: expects a 4-order (O, C, w, h) tensor");
    int64_t out_ch = w.dim(0);
    int64_t n = w.size() / out_ch;
    std::vector<double> alpha(static_cast<size_t>(out_ch));
    const double* p = w.data();
    for (int64_t o = 0; o < out_ch; ++o) {
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += std::abs(p[o * n + j]);
        alpha[static_cast<size_t>(o)] = s / static_cast<double>(n);
    }
    return alpha;
}

ScaledBinaryWeights scale_binary(const DenseTensor& w, ScaleMode mode,
                                 const std::vector<double>* learned_alpha) {
    require(w.order() == 4, "scale_binary: expects a 4-order (O, C, w, h) tensor");
    ScaledBinaryWeights sw;
    sw.b = sign_binarize(w);
    if (mode == ScaleMode::LearnedPerFilter) {
        require(learned_alpha != nullptr, "scale_binary: learned mode needs an alpha vector");
        require(static_cast<int64_t>(learned_alpha->size()) == w.dim(0),
                "scale_binary: learned alpha length must equal the output channel count");
        sw.alpha = *learned_alpha;
    } else {
        require(learned_alpha == nullptr, "scale_binary: analytic mode takes no alpha vector");
        sw.alpha = analytic_alpha(w);
    }
    return sw;
}

DenseTensor ste_backward(const DenseTensor& grad_out, const DenseTensor& pre_binarization) {
    require(grad_out.same_shape(pre_binarization), "ste_backward: shape mismatch");
    DenseTensor g(grad_out.shape());
    for (int64_t i = 0; i < g.size(); ++i)
        g[i] = std::abs(pre_binarization[i]) <= 1.0 ? grad_out[i] : 0.0;
    return g;
}

std::vector<double> alpha_gradient(const DenseTensor& grad_w_effective, const DenseTensor& b) {
    require(grad_w_effective.same_shape(b), "alpha_gradient: shape mismatch");
    require(b.order() == 4, "alpha_gradient: expects 4-order tensors");
    int64_t out_ch = b.dim(0);
    int64_t n = b.size() / out_ch;
    std::vector<double> g(static_cast<size_t>(out_ch), 0.0);
    for (int64_t o = 0; o < out_ch; ++o) {
        double s = 0.0;
        for (int64_t j = 0; j < n; ++j) s += grad_w_effective[o * n + j] * b[o * n + j];
        g[static_cast<size_t>(o)] = s;
    }
    return g;
}

DenseTensor effective_weights(const ScaledBinaryWeights& sw) {
    int64_t out_ch = sw.b.dim(0);
    require(static_cast<int64_t>(sw.alpha.size()) == out_ch,
            "effective_weights: alpha length must equal the output channel count");
    DenseTensor w = sw.b;
    int64_t n = w.size() / out_ch;
    for (int64_t o = 0; o < out_ch; ++o)
        for (int64_t j = 0; j < n; ++j) w[o * n + j] *= sw.alpha[static_cast<size_t>(o)];
    return w;
}

std::vector<HistogramBin> histogram64(const std::vector<double>& values) {
    constexpr int kBins = 64;
    std::vector<HistogramBin> bins(kBins);
    if (values.empty()) return bins;
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double width = (hi - lo) / kBins;
    if (width == 0.0) width = 1.0;  // constant data lands in bin 0
    for (int i = 0; i < kBins; ++i) {
        bins[i].lo = lo + i * width;
        bins[i].hi = lo + (i + 1) * width;
    }
    for (double v : values) {
        int b = static_cast<int>((v - lo) / width);
        if (b >= kBins) b = kBins - 1;
        if (b < 0) b = 0;
        ++bins[b].count;
    }
    return bins;
}

}  // namespace bnn
