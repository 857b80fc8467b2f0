#pragma once

#include "bnn/binarize.hpp"
#include "bnn/conv.hpp"
#include "bnn/latent.hpp"
#include "bnn/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bnn {

enum class LayerKind : uint8_t {
    RealConv = 0,
    BinaryConv = 1,
    BatchNorm = 2,
    SignActivation = 3,
    ResidualAdd = 4,
    AvgPool = 5,
    FullyConnected = 6,
};

/// One node of the (sequential + residual) layer graph. Parameter ids index
/// into the TrainState tables; -1 means unbound / not applicable.
struct LayerSpec {
    LayerKind kind{};
    ConvGeom geom{};    // RealConv / BinaryConv; FullyConnected uses out_ch, in_ch
    int64_t channels = 0;  // BatchNorm
    int latent_id = -1;    // BinaryConv weight parametrization
    int slice = -1;        // layer index inside a holistic group, else -1
    ScaleMode scale_mode = ScaleMode::AnalyticPerFilter;
    int alpha_id = -1;     // learned alpha table index (LearnedPerFilter only)
    int real_id = -1;      // RealConv / FullyConnected weights
    int bn_id = -1;        // BatchNorm statistics + affine
    int residual_src = -1;         // ResidualAdd: layer whose input is the identity path
    int shortcut_real_id = -1;     // ResidualAdd: 1x1 projection conv, -1 = identity
    ConvGeom shortcut_geom{};
    int block_id = -1;  // residual block membership, -1 outside blocks
};

struct BlockCfg {
    int64_t out_ch = 0;
    int64_t stride = 1;
};

struct Architecture {
    std::vector<LayerSpec> layers;
    int64_t in_channels = 1;
    int64_t in_h = 28;
    int64_t in_w = 28;
    int64_t classes = 10;
};

/// Stem RealConv + pre-activation binary basic blocks (BN -> sign -> conv,
/// twice, plus identity/projection shortcut) + BN + global AvgPool + FC.
Architecture make_basic_net(int64_t in_channels, int64_t in_h, int64_t in_w, int64_t stem_ch,
                            const std::vector<BlockCfg>& blocks, int64_t classes);

/// The desk-scale reference network for 28x28 inputs: stem to 16 channels,
/// blocks 16->32 (stride 2) and 32->32, 10 classes.
Architecture reference_arch();

// -- train state ---------------------------------------------------------------

enum class Decomposition { None, Svd, Tucker, Holistic };
enum class OptimKind { Adam, RmsProp };

struct ModelConfig {
    Decomposition decomp = Decomposition::None;
    ScaleMode scale = ScaleMode::AnalyticPerFilter;
    int64_t svd_rank = 0;  // <= 0 means full rank
};

struct OptimConfig {
    OptimKind kind = OptimKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double rho = 0.99;  // RMSProp decay
    double eps = 1e-8;
    double weight_decay = 0.0;  // real-valued layers only
};

/// First/second-moment buffers aligned with a parameter's flat views.
struct OptimSlot {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

struct LatentEntry {
    WeightParam param;
    OptimSlot opt;
};

struct RealEntry {
    DenseTensor w;
    std::vector<double> bias;  // empty when the layer has none
    OptimSlot opt;
    bool decay = false;
};

struct AlphaEntry {
    std::vector<double> a;
    OptimSlot opt;
};

struct BnEntry {
    std::vector<double> gamma, beta, running_mean, running_var;
    OptimSlot opt;  // views: gamma, beta
};

struct TrainState {
    std::vector<LatentEntry> latents;
    std::vector<RealEntry> reals;
    std::vector<AlphaEntry> alphas;
    std::vector<BnEntry> bns;
    double lr = 0.0;
    int64_t step = 0;
};

/// Assigns parameter ids into `arch` (decomposition-dependent) and builds the
/// initial state. Holistic mode groups identically shaped BinaryConv layers
/// within each block; ungrouped layers fall back to layer-wise Tucker.
TrainState init_state(Architecture& arch, const ModelConfig& cfg, uint64_t seed);

// -- schedule, loss, optimizer ---------------------------------------------------

struct Schedule {
    double initial = 1e-3;
    std::vector<std::pair<int64_t, double>> drops;  // (epoch, multiplier), epochs increasing
    int64_t steps_per_epoch = 1;

    double lr_at_epoch(int64_t epoch) const;
    double lr_at_step(int64_t step) const { return lr_at_epoch(step / steps_per_epoch); }
    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    DenseTensor dlogits;
};

/// Mean softmax cross-entropy; gradient is (softmax - onehot) / batch.
LossResult loss_cross_entropy(const DenseTensor& logits, const std::vector<int>& labels);

/// Single-tensor Adam / RMSProp update with bias correction for Adam.
/// `t` is the 1-based step the update belongs to.
void optimizer_update(std::span<double> params, std::span<const double> grads,
                      std::vector<double>& m, std::vector<double>& v, double lr, int64_t t,
                      const OptimConfig& cfg, double decay);

// -- forward / backward ----------------------------------------------------------

struct LayerCache {
    // BinaryConv
    DenseTensor w_real;  // pre-binarization reconstruction (STE mask + histograms)
    DenseTensor b;
    std::vector<double> alpha;
    // BatchNorm
    BatchNormCache bn;
};

struct ForwardTrace {
    std::vector<DenseTensor> acts;  // acts[i] = input of layer i; back() = network output
    std::vector<LayerCache> caches;
};

/// Runs a LayerSpec sequence. residual_src indices are relative to the
/// sequence. Training mode updates the BN running statistics; with `trace`
/// null, runs without caching.
DenseTensor forward_layers(std::span<const LayerSpec> layers, TrainState& state,
                           const DenseTensor& x, bool training, ForwardTrace* trace);

/// Eval-mode forward (running BN statistics, no state mutation).
DenseTensor forward_layers(std::span<const LayerSpec> layers, const TrainState& state,
                           const DenseTensor& x, ForwardTrace* trace = nullptr);

inline DenseTensor forward_net(const Architecture& arch, TrainState& state, const DenseTensor& x,
                               bool training, ForwardTrace* trace = nullptr) {
    return forward_layers(arch.layers, state, x, training, trace);
}

inline DenseTensor forward_net(const Architecture& arch, const TrainState& state,
                               const DenseTensor& x, ForwardTrace* trace = nullptr) {
    return forward_layers(arch.layers, state, x, trace);
}

/// Thrown when a training step produces a non-finite loss.
struct DivergedError : std::runtime_error {
    int64_t step;
    explicit DivergedError(int64_t s)
        : std::runtime_error("training diverged at step " + std::to_string(s)), step(s) {}
};

struct StepResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// One Algorithm-1 iteration: reconstruct, binarize + scale, forward,
/// backward through STE to the factors, update every factor and alpha,
/// update the learning rate.
StepResult train_step(const Architecture& arch, TrainState& state, const DenseTensor& x,
                      const std::vector<int>& labels, const OptimConfig& optim,
                      const Schedule& schedule);

/// Padding value used by binary convolutions (sign of a zero-padded
/// pre-activation); keeps the training graph and the bit kernel identical.
constexpr double kBinaryPad = -1.0;

double evaluate_accuracy(const Architecture& arch, const TrainState& state, const DenseTensor& x,
                         const std::vector<int>& labels, int64_t batch = 256);

}  // namespace bnn
