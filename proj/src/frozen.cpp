#include "bnn/frozen.hpp"

#include "serial.hpp"

#include <fstream>

namespace bnn {

using serial::read_f32;
using serial::read_f64;
using serial::read_le;
using serial::write_f32;
using serial::write_f64;
using serial::write_le;

FrozenBinaryModel export_model(const TrainState& state, const Architecture& arch,
                               double norm_mean, double norm_std) {
    FrozenBinaryModel model;
    model.norm_mean = norm_mean;
    model.norm_std = norm_std;
    for (const LayerSpec& ls : arch.layers) {
        FrozenLayer fl;
        fl.kind = ls.kind;
        fl.geom = ls.geom;
        switch (ls.kind) {
            case LayerKind::RealConv: {
                require(ls.geom.kh == ls.geom.kw, "export: file format carries square kernels");
                fl.w = state.reals[static_cast<size_t>(ls.real_id)].w;
                break;
            }
            case LayerKind::BinaryConv: {
                require(ls.geom.kh == ls.geom.kw, "export: file format carries square kernels");
                const LatentEntry& entry = state.latents[static_cast<size_t>(ls.latent_id)];
                DenseTensor w_real =
                    ls.slice >= 0
                        ? reconstruct_layer(std::get<HolisticGroupParam>(entry.param), ls.slice)
                        : reconstruct(entry.param);
                fl.weights = pack(sign_binarize(w_real), 1);
                std::vector<double> alpha =
                    ls.scale_mode == ScaleMode::LearnedPerFilter
                        ? state.alphas[static_cast<size_t>(ls.alpha_id)].a
                        : analytic_alpha(w_real);
                fl.alpha.reserve(alpha.size());
                for (double a : alpha) fl.alpha.push_back(static_cast<float>(a));
                break;
            }
            case LayerKind::BatchNorm: {
                const BnEntry& be = state.bns[static_cast<size_t>(ls.bn_id)];
                fl.gamma = be.gamma;
                fl.beta = be.beta;
                fl.mean = be.running_mean;
                fl.var = be.running_var;
                fl.geom.out_ch = ls.channels;
                break;
            }
            case LayerKind::SignActivation:
            case LayerKind::AvgPool: break;
            case LayerKind::ResidualAdd: {
                fl.residual_src = ls.residual_src;
                fl.shortcut_geom = ls.shortcut_geom;
                if (ls.shortcut_real_id >= 0)
                    fl.shortcut_w = state.reals[static_cast<size_t>(ls.shortcut_real_id)].w;
                break;
            }
            case LayerKind::FullyConnected: {
                const RealEntry& re = state.reals[static_cast<size_t>(ls.real_id)];
                fl.w = re.w;
                fl.bias = re.bias;
                break;
            }
        }
        model.layers.push_back(std::move(fl));
    }
    return model;
}

// Weight bits are stored as one contiguous stream over the whole (O, C, k, k)
// tensor (global bit o * row_bits + j) rather than per-filter padded rows, so
// the on-disk binary payload stays within the claimed compression budget.
static std::vector<uint64_t> to_contiguous_bits(const PackedBinaryTensor& p) {
    int64_t total = p.rows * p.row_bits;
    std::vector<uint64_t> out(static_cast<size_t>((total + 63) / 64), 0);
    for (int64_t r = 0; r < p.rows; ++r) {
        const uint64_t* row = p.row(r);
        for (int64_t j = 0; j < p.row_bits; ++j)
            if ((row[j >> 6] >> (j & 63)) & 1) {
                int64_t g = r * p.row_bits + j;
                out[static_cast<size_t>(g >> 6)] |= uint64_t{1} << (g & 63);
            }
    }
    return out;
}

static PackedBinaryTensor from_contiguous_bits(const std::vector<uint64_t>& bits, Shape shape,
                                               int64_t rows, int64_t row_bits) {
    PackedBinaryTensor p;
    p.shape = std::move(shape);
    p.rows = rows;
    p.row_bits = row_bits;
    p.words_per_row = (row_bits + 63) / 64;
    p.words.assign(static_cast<size_t>(rows * p.words_per_row), 0);
    for (int64_t r = 0; r < rows; ++r) {
        uint64_t* row = p.row(r);
        for (int64_t j = 0; j < row_bits; ++j) {
            int64_t g = r * row_bits + j;
            if ((bits[static_cast<size_t>(g >> 6)] >> (g & 63)) & 1)
                row[j >> 6] |= uint64_t{1} << (j & 63);
        }
    }
    return p;
}

static constexpr char kFrozenMagic[4] = {'B', 'N', 'C', 'V'};
static constexpr uint16_t kFrozenVersion = 1;

void save_frozen(const FrozenBinaryModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw serial::IoError("save_frozen: cannot open " + path);
    os.write(kFrozenMagic, 4);
    write_le<uint16_t>(os, kFrozenVersion);
    write_le<uint16_t>(os, static_cast<uint16_t>(model.layers.size()));

    for (const FrozenLayer& fl : model.layers) {
        write_le<uint8_t>(os, static_cast<uint8_t>(fl.kind));
        uint32_t g[5] = {0, 0, 0, 0, 0};
        switch (fl.kind) {
            case LayerKind::RealConv:
            case LayerKind::BinaryConv:
                g[0] = static_cast<uint32_t>(fl.geom.out_ch);
                g[1] = static_cast<uint32_t>(fl.geom.in_ch);
                g[2] = static_cast<uint32_t>(fl.geom.kh);
                g[3] = static_cast<uint32_t>(fl.geom.stride);
                g[4] = static_cast<uint32_t>(fl.geom.pad);
                break;
            case LayerKind::BatchNorm: g[0] = static_cast<uint32_t>(fl.gamma.size()); break;
            case LayerKind::ResidualAdd:
                g[0] = static_cast<uint32_t>(fl.residual_src);
                g[1] = static_cast<uint32_t>(fl.shortcut_geom.out_ch);
                g[2] = static_cast<uint32_t>(fl.shortcut_geom.in_ch);
                g[3] = static_cast<uint32_t>(fl.shortcut_geom.kh);
                g[4] = static_cast<uint32_t>(fl.shortcut_geom.stride);
                break;
            case LayerKind::FullyConnected:
                g[0] = static_cast<uint32_t>(fl.geom.out_ch);
                g[1] = static_cast<uint32_t>(fl.geom.in_ch);
                break;
            default: break;
        }
        for (uint32_t v : g) write_le<uint32_t>(os, v);

        switch (fl.kind) {
            case LayerKind::RealConv: serial::write_f64_array(os, fl.w.values()); break;
            case LayerKind::BinaryConv: {
                for (float a : fl.alpha) write_f32(os, a);
                std::vector<uint64_t> bits = to_contiguous_bits(fl.weights);
                write_le<uint32_t>(os, static_cast<uint32_t>(fl.weights.row_bits));
                write_le<uint32_t>(os, static_cast<uint32_t>(bits.size()));
                for (uint64_t wdd : bits) write_le<uint64_t>(os, wdd);
                break;
            }
            case LayerKind::BatchNorm:
                serial::write_f64_array(os, fl.gamma);
                serial::write_f64_array(os, fl.beta);
                serial::write_f64_array(os, fl.mean);
                serial::write_f64_array(os, fl.var);
                break;
            case LayerKind::ResidualAdd:
                if (fl.shortcut_geom.out_ch > 0) serial::write_f64_array(os, fl.shortcut_w.values());
                break;
            case LayerKind::FullyConnected:
                serial::write_f64_array(os, fl.w.values());
                serial::write_f64_array(os, fl.bias);
                break;
            default: break;
        }
    }
    write_f64(os, model.norm_mean);
    write_f64(os, model.norm_std);
    if (!os) throw serial::IoError("save_frozen: write failed for " + path);
}

FrozenBinaryModel load_frozen(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw serial::IoError("load_frozen: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kFrozenMagic, 4) != 0)
        throw serial::IoError("load_frozen: bad magic, not a frozen model file");
    uint16_t version = read_le<uint16_t>(is);
    if (version != kFrozenVersion)
        throw serial::IoError("load_frozen: unsupported format version " + std::to_string(version));
    uint16_t count = read_le<uint16_t>(is);

    FrozenBinaryModel model;
    for (uint16_t li = 0; li < count; ++li) {
        FrozenLayer fl;
        fl.kind = static_cast<LayerKind>(read_le<uint8_t>(is));
        uint32_t g[5];
        for (uint32_t& v : g) v = read_le<uint32_t>(is);
        switch (fl.kind) {
            case LayerKind::RealConv: {
                fl.geom = {g[0], g[1], g[2], g[2], g[3], g[4]};
                size_t n = static_cast<size_t>(g[0]) * g[1] * g[2] * g[2];
                fl.w = DenseTensor({g[0], g[1], g[2], g[2]}, serial::read_f64_array(is, n));
                break;
            }
            case LayerKind::BinaryConv: {
                fl.geom = {g[0], g[1], g[2], g[2], g[3], g[4]};
                fl.alpha.resize(g[0]);
                for (float& a : fl.alpha) a = read_f32(is);
                uint32_t row_bits = read_le<uint32_t>(is);
                uint32_t n_words = read_le<uint32_t>(is);
                std::vector<uint64_t> bits(n_words);
                for (uint64_t& wdd : bits) wdd = read_le<uint64_t>(is);
                fl.weights = from_contiguous_bits(bits, {g[0], g[1], g[2], g[2]}, g[0], row_bits);
                break;
            }
            case LayerKind::BatchNorm: {
                fl.geom.out_ch = g[0];
                fl.gamma = serial::read_f64_array(is, g[0]);
                fl.beta = serial::read_f64_array(is, g[0]);
                fl.mean = serial::read_f64_array(is, g[0]);
                fl.var = serial::read_f64_array(is, g[0]);
                break;
            }
            case LayerKind::SignActivation:
            case LayerKind::AvgPool: break;
            case LayerKind::ResidualAdd: {
                fl.residual_src = static_cast<int>(g[0]);
                fl.shortcut_geom = {g[1], g[2], g[3], g[3], g[4], 0};
                if (g[1] > 0) {
                    size_t n = static_cast<size_t>(g[1]) * g[2] * g[3] * g[3];
                    fl.shortcut_w =
                        DenseTensor({g[1], g[2], g[3], g[3]}, serial::read_f64_array(is, n));
                }
                break;
            }
            case LayerKind::FullyConnected: {
                fl.geom.out_ch = g[0];
                fl.geom.in_ch = g[1];
                fl.w = DenseTensor({g[0], g[1]},
                                   serial::read_f64_array(is, static_cast<size_t>(g[0]) * g[1]));
                fl.bias = serial::read_f64_array(is, g[0]);
                break;
            }
            default: throw serial::IoError("load_frozen: unknown layer kind");
        }
        model.layers.push_back(std::move(fl));
    }
    model.norm_mean = read_f64(is);
    model.norm_std = read_f64(is);
    return model;
}

DenseTensor frozen_forward(const FrozenBinaryModel& model, const DenseTensor& x) {
    std::vector<DenseTensor> acts;
    acts.reserve(model.layers.size() + 1);
    acts.push_back(x);
    for (const FrozenLayer& fl : model.layers) {
        const DenseTensor& in = acts.back();
        DenseTensor out;
        switch (fl.kind) {
            case LayerKind::RealConv:
                out = real_conv_forward(in, fl.w, fl.geom.stride, fl.geom.pad, 0.0);
                break;
            case LayerKind::BinaryConv: {
                std::vector<double> alpha(fl.alpha.begin(), fl.alpha.end());
                out = binary_conv(in, fl.weights, alpha, fl.geom.stride, fl.geom.pad);
                break;
            }
            case LayerKind::BatchNorm:
                out = batch_norm_apply(in, fl.gamma, fl.beta, fl.mean, fl.var, nullptr);
                break;
            case LayerKind::SignActivation: out = binarize_activations(in); break;
            case LayerKind::ResidualAdd: {
                const DenseTensor& src = acts[static_cast<size_t>(fl.residual_src)];
                DenseTensor shortcut =
                    fl.shortcut_geom.out_ch > 0
                        ? real_conv_forward(src, fl.shortcut_w, fl.shortcut_geom.stride, 0, 0.0)
                        : src;
                require(shortcut.same_shape(in), "frozen_forward: residual shapes differ");
                out = in;
                for (int64_t k = 0; k < out.size(); ++k) out[k] += shortcut[k];
                break;
            }
            case LayerKind::AvgPool: out = avg_pool_forward(in); break;
            case LayerKind::FullyConnected:
                out = fully_connected_forward(in, fl.w, fl.bias);
                break;
        }
        acts.push_back(std::move(out));
    }
    return acts.back();
}

std::vector<int> frozen_predict(const FrozenBinaryModel& model, const DenseTensor& x) {
    DenseTensor logits = frozen_forward(model, x);
    int64_t bs = logits.dim(0), classes = logits.dim(1);
    std::vector<int> pred(static_cast<size_t>(bs));
    for (int64_t b = 0; b < bs; ++b) {
        const double* row = logits.data() + b * classes;
        int best = 0;
        for (int64_t k = 1; k < classes; ++k)
            if (row[k] > row[best]) best = static_cast<int>(k);
        pred[static_cast<size_t>(b)] = best;
    }
    return pred;
}

}  // namespace bnn
