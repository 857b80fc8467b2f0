#pragma once

#include "bnn/bitkernel.hpp"
#include "bnn/net.hpp"

#include <string>
#include <vector>

namespace bnn {

/// One layer of the inference artifact. Binary convs carry packed bits and
/// float32 scales only; the latent factors never leave the training state.
struct FrozenLayer {
    LayerKind kind{};
    ConvGeom geom{};  // convs: (O, C, k, stride, pad); fc: (out, in)
    // BinaryConv
    PackedBinaryTensor weights;  // rows = O, one filter per row
    std::vector<float> alpha;
    // RealConv / FullyConnected
    DenseTensor w;
    std::vector<double> bias;
    // BatchNorm (retained, not folded)
    std::vector<double> gamma, beta, mean, var;
    // ResidualAdd
    int residual_src = -1;
    ConvGeom shortcut_geom{};  // out_ch == 0 means identity
    DenseTensor shortcut_w;
};

struct FrozenBinaryModel {
    std::vector<FrozenLayer> layers;
    double norm_mean = 0.0;  // input normalization baked into the artifact
    double norm_std = 1.0;
};

/// Reconstructs every decomposed layer, binarizes, packs, copies the final
/// scales and the real stem/head. The result holds no latent factors.
FrozenBinaryModel export_model(const TrainState& state, const Architecture& arch,
                               double norm_mean, double norm_std);

// On-disk format "BNCV" v1, little-endian throughout: magic, version u16,
// layer count u16; per layer kind u8, geometry 5 x u32, then the kind's
// payload (binary convs: alpha f32 x O, valid bits u32, word count u32,
// packed u64 words); trailing input-normalization mean/std as f64.
void save_frozen(const FrozenBinaryModel& model, const std::string& path);
FrozenBinaryModel load_frozen(const std::string& path);

/// Logits for a normalized (B, C, H, W) batch, binary convs on the xnor path.
DenseTensor frozen_forward(const FrozenBinaryModel& model, const DenseTensor& x);

std::vector<int> frozen_predict(const FrozenBinaryModel& model, const DenseTensor& x);

}  // namespace bnn
