#pragma once

#include "bnn/tensor.hpp"

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace bnn {

// Latent real-valued parametrizations of a conv weight tensor. Only the
// factors are stored; the weight tensor is reconstructed on demand and
// binarized downstream. Factors stay real through training.

struct DirectParam {
    DenseTensor w;  // (O, C, w, h)
};

/// Two-factor linear parametrization of the reshaped O x (C*w*h) weight.
/// The singular-value scales are absorbed into u at initialization.
struct SvdParam {
    Matrix u;     // O x K
    Matrix v;     // K x (C*w*h)
    Shape shape;  // (O, C, w, h)
};

/// Full-rank core with one square factor per mode.
struct TuckerParam {
    DenseTensor core;             // (O, C, w, h)
    std::vector<Matrix> factors;  // O x O, C x C, w x w, h x h
};

/// One Tucker decomposition shared by a stack of identically shaped layers.
struct HolisticGroupParam {
    DenseTensor core;             // (N, O, C, w, h)
    std::vector<Matrix> factors;  // 5 square matrices
    int64_t layer_count = 0;
};

using WeightParam = std::variant<DirectParam, SvdParam, TuckerParam, HolisticGroupParam>;

/// Kaiming-style fan-in scaled uniform init, deterministic given seed.
WeightParam init_direct(const Shape& shape, uint64_t rng_seed);

/// Truncated SVD of a Direct-initialized weight; rank <= 0 means full.
WeightParam init_svd(const Shape& shape, int64_t rank, uint64_t rng_seed);

/// Full-rank HOSVD of a Direct-initialized weight.
WeightParam init_tucker(const Shape& shape, uint64_t rng_seed);

/// HOSVD over the stacked (N, O, C, w, h) tensor of N layer weights.
WeightParam init_holistic(const Shape& group_shape, uint64_t rng_seed);

/// The real-valued weight tensor the parametrization currently encodes.
DenseTensor reconstruct(const WeightParam& p);

/// Slice l of the group reconstruction, computed without materializing the
/// full 5-order tensor (row l of the stacking factor is applied first).
DenseTensor reconstruct_layer(const HolisticGroupParam& p, int64_t l);

/// Chain-rule map from dC/dW to one flat gradient per factor, in the same
/// order as param_views().
std::vector<std::vector<double>> backward_to_factors(const WeightParam& p,
                                                     const DenseTensor& grad_w);

/// Shape of reconstruct(p) without computing it.
Shape reconstruct_shape_of(const WeightParam& p);

/// Mutable flat views over every factor's storage (optimizer surface).
std::vector<std::span<double>> param_views(WeightParam& p);
std::vector<std::span<const double>> param_views(const WeightParam& p);

bool is_decomposed(const WeightParam& p);

/// Fan-in uniform bound used by init_direct: sqrt(6 / (C*w*h)).
double kaiming_bound(const Shape& shape);

}  // namespace bnn
