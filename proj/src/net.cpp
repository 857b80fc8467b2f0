#include "bnn/net.hpp"

#include "bnn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bnn {

// -- architecture ------------------------------------------------------------

Architecture make_basic_net(int64_t in_channels, int64_t in_h, int64_t in_w, int64_t stem_ch,
                            const std::vector<BlockCfg>& blocks, int64_t classes) {
    Architecture arch;
    arch.in_channels = in_channels;
    arch.in_h = in_h;
    arch.in_w = in_w;
    arch.classes = classes;

    auto push = [&](LayerSpec ls) { arch.layers.push_back(std::move(ls)); };

    {
        LayerSpec stem;
        stem.kind = LayerKind::RealConv;
        stem.geom = {stem_ch, in_channels, 3, 3, 1, 1};
        push(stem);
    }

    int64_t ch = stem_ch;
    int block_id = 0;
    for (const BlockCfg& bc : blocks) {
        int start = static_cast<int>(arch.layers.size());

        LayerSpec bn1;
        bn1.kind = LayerKind::BatchNorm;
        bn1.channels = ch;
        bn1.block_id = block_id;
        push(bn1);

        LayerSpec sgn1;
        sgn1.kind = LayerKind::SignActivation;
        sgn1.block_id = block_id;
        push(sgn1);

        LayerSpec conv1;
        conv1.kind = LayerKind::BinaryConv;
        conv1.geom = {bc.out_ch, ch, 3, 3, bc.stride, 1};
        conv1.block_id = block_id;
        push(conv1);

        LayerSpec bn2;
        bn2.kind = LayerKind::BatchNorm;
        bn2.channels = bc.out_ch;
        bn2.block_id = block_id;
        push(bn2);

        LayerSpec sgn2;
        sgn2.kind = LayerKind::SignActivation;
        sgn2.block_id = block_id;
        push(sgn2);

        LayerSpec conv2;
        conv2.kind = LayerKind::BinaryConv;
        conv2.geom = {bc.out_ch, bc.out_ch, 3, 3, 1, 1};
        conv2.block_id = block_id;
        push(conv2);

        LayerSpec add;
        add.kind = LayerKind::ResidualAdd;
        add.residual_src = start;
        add.block_id = block_id;
        if (bc.out_ch != ch || bc.stride != 1)
            add.shortcut_geom = {bc.out_ch, ch, 1, 1, bc.stride, 0};
        push(add);

        ch = bc.out_ch;
        ++block_id;
    }

    LayerSpec bn_out;
    bn_out.kind = LayerKind::BatchNorm;
    bn_out.channels = ch;
    push(bn_out);

    LayerSpec pool;
    pool.kind = LayerKind::AvgPool;
    push(pool);

    LayerSpec fc;
    fc.kind = LayerKind::FullyConnected;
    fc.geom.out_ch = classes;
    fc.geom.in_ch = ch;
    push(fc);

    return arch;
}

Architecture reference_arch() { return make_basic_net(1, 28, 28, 16, {{32, 2}, {32, 1}}, 10); }

// -- state construction --------------------------------------------------------

static DenseTensor uniform_init(const Shape& shape, int64_t fan_in, uint64_t seed) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseTensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
    return t;
}

static OptimSlot make_optim_slot(const std::vector<std::span<const double>>& views) {
    OptimSlot slot;
    for (const auto& v : views) {
        slot.m.emplace_back(v.size(), 0.0);
        slot.v.emplace_back(v.size(), 0.0);
    }
    return slot;
}

static OptimSlot make_optim_slot_sizes(std::initializer_list<size_t> sizes) {
    OptimSlot slot;
    for (size_t s : sizes) {
        slot.m.emplace_back(s, 0.0);
        slot.v.emplace_back(s, 0.0);
    }
    return slot;
}

TrainState init_state(Architecture& arch, const ModelConfig& cfg, uint64_t seed) {
    TrainState state;

    // Holistic mode: bucket BinaryConv layers by identical shape within each
    // block; buckets of two or more share one group parametrization, the rest
    // fall back to layer-wise Tucker.
    struct Bucket {
        int block_id;
        ConvGeom geom;
        std::vector<int> layer_idx;
    };
    std::vector<Bucket> buckets;
    if (cfg.decomp == Decomposition::Holistic) {
        for (int i = 0; i < static_cast<int>(arch.layers.size()); ++i) {
            LayerSpec& ls = arch.layers[static_cast<size_t>(i)];
            if (ls.kind != LayerKind::BinaryConv) continue;
            auto match = std::find_if(buckets.begin(), buckets.end(), [&](const Bucket& b) {
                return b.block_id == ls.block_id && b.geom.out_ch == ls.geom.out_ch &&
                       b.geom.in_ch == ls.geom.in_ch && b.geom.kh == ls.geom.kh &&
                       b.geom.kw == ls.geom.kw;
            });
            if (match == buckets.end())
                buckets.push_back({ls.block_id, ls.geom, {i}});
            else
                match->layer_idx.push_back(i);
        }
        for (const Bucket& b : buckets) {
            if (b.layer_idx.size() < 2) continue;
            Shape group_shape{static_cast<int64_t>(b.layer_idx.size()), b.geom.out_ch, b.geom.in_ch,
                              b.geom.kh, b.geom.kw};
            uint64_t s = derive_seed(seed, 1, state.latents.size());
            LatentEntry entry{init_holistic(group_shape, s), {}};
            entry.opt = make_optim_slot(param_views(std::as_const(entry.param)));
            int latent_id = static_cast<int>(state.latents.size());
            state.latents.push_back(std::move(entry));
            for (size_t l = 0; l < b.layer_idx.size(); ++l) {
                LayerSpec& ls = arch.layers[static_cast<size_t>(b.layer_idx[l])];
                ls.latent_id = latent_id;
                ls.slice = static_cast<int>(l);
            }
        }
    }

    for (LayerSpec& ls : arch.layers) {
        switch (ls.kind) {
            case LayerKind::BinaryConv: {
                if (ls.latent_id < 0) {
                    Shape shape{ls.geom.out_ch, ls.geom.in_ch, ls.geom.kh, ls.geom.kw};
                    uint64_t s = derive_seed(seed, 1, state.latents.size());
                    WeightParam p;
                    switch (cfg.decomp) {
                        case Decomposition::None: p = init_direct(shape, s); break;
                        case Decomposition::Svd: p = init_svd(shape, cfg.svd_rank, s); break;
                        case Decomposition::Tucker:
                        case Decomposition::Holistic: p = init_tucker(shape, s); break;
                    }
                    LatentEntry entry{std::move(p), {}};
                    entry.opt = make_optim_slot(param_views(std::as_const(entry.param)));
                    ls.latent_id = static_cast<int>(state.latents.size());
                    state.latents.push_back(std::move(entry));
                }
                ls.scale_mode = cfg.scale;
                if (cfg.scale == ScaleMode::LearnedPerFilter) {
                    const LatentEntry& entry = state.latents[static_cast<size_t>(ls.latent_id)];
                    DenseTensor w = ls.slice >= 0
                                        ? reconstruct_layer(
                                              std::get<HolisticGroupParam>(entry.param), ls.slice)
                                        : reconstruct(entry.param);
                    AlphaEntry ae;
                    ae.a = analytic_alpha(w);
                    ae.opt = make_optim_slot_sizes({ae.a.size()});
                    ls.alpha_id = static_cast<int>(state.alphas.size());
                    state.alphas.push_back(std::move(ae));
                }
                break;
            }
            case LayerKind::RealConv: {
                Shape shape{ls.geom.out_ch, ls.geom.in_ch, ls.geom.kh, ls.geom.kw};
                int64_t fan_in = ls.geom.in_ch * ls.geom.kh * ls.geom.kw;
                RealEntry re;
                re.w = uniform_init(shape, fan_in, derive_seed(seed, 2, state.reals.size()));
                re.decay = true;
                re.opt = make_optim_slot_sizes({static_cast<size_t>(re.w.size())});
                ls.real_id = static_cast<int>(state.reals.size());
                state.reals.push_back(std::move(re));
                break;
            }
            case LayerKind::FullyConnected: {
                RealEntry re;
                re.w = uniform_init({ls.geom.out_ch, ls.geom.in_ch}, ls.geom.in_ch,
                                    derive_seed(seed, 2, state.reals.size()));
                re.bias.assign(static_cast<size_t>(ls.geom.out_ch), 0.0);
                re.decay = true;
                re.opt = make_optim_slot_sizes(
                    {static_cast<size_t>(re.w.size()), re.bias.size()});
                ls.real_id = static_cast<int>(state.reals.size());
                state.reals.push_back(std::move(re));
                break;
            }
            case LayerKind::ResidualAdd: {
                if (ls.shortcut_geom.out_ch > 0) {
                    Shape shape{ls.shortcut_geom.out_ch, ls.shortcut_geom.in_ch,
                                ls.shortcut_geom.kh, ls.shortcut_geom.kw};
                    int64_t fan_in =
                        ls.shortcut_geom.in_ch * ls.shortcut_geom.kh * ls.shortcut_geom.kw;
                    RealEntry re;
                    re.w = uniform_init(shape, fan_in, derive_seed(seed, 2, state.reals.size()));
                    re.decay = true;
                    re.opt = make_optim_slot_sizes({static_cast<size_t>(re.w.size())});
                    ls.shortcut_real_id = static_cast<int>(state.reals.size());
                    state.reals.push_back(std::move(re));
                }
                break;
            }
            case LayerKind::BatchNorm: {
                BnEntry be;
                auto n = static_cast<size_t>(ls.channels);
                be.gamma.assign(n, 1.0);
                be.beta.assign(n, 0.0);
                be.running_mean.assign(n, 0.0);
                be.running_var.assign(n, 1.0);
                be.opt = make_optim_slot_sizes({n, n});
                ls.bn_id = static_cast<int>(state.bns.size());
                state.bns.push_back(std::move(be));
                break;
            }
            default: break;
        }
    }
    return state;
}

// -- schedule ------------------------------------------------------------------

void Schedule::validate() const {
    require(initial > 0.0, "Schedule: initial learning rate must be positive");
    require(steps_per_epoch >= 1, "Schedule: steps_per_epoch must be >= 1");
    int64_t prev = -1;
    for (const auto& [epoch, mult] : drops) {
        require(epoch > prev, "Schedule: drop epochs must be strictly increasing");
        require(mult > 0.0 && mult <= 1.0, "Schedule: multipliers must lie in (0, 1]");
        prev = epoch;
    }
}

double Schedule::lr_at_epoch(int64_t epoch) const {
    double lr = initial;
    for (const auto& [e, mult] : drops)
        if (epoch >= e) lr *= mult;
    return lr;
}

// -- loss ------------------------------------------------------------------------

LossResult loss_cross_entropy(const DenseTensor& logits, const std::vector<int>& labels) {
    require(logits.order() == 2, "loss: logits must be (B, K)");
    int64_t bs = logits.dim(0), classes = logits.dim(1);
    require(static_cast<int64_t>(labels.size()) == bs, "loss: labels length mismatch");

    LossResult out;
    out.dlogits = DenseTensor(logits.shape());
    double total = 0.0;
    for (int64_t b = 0; b < bs; ++b) {
        int y = labels[static_cast<size_t>(b)];
        require(y >= 0 && y < classes, "loss: label out of range");
        const double* row = logits.data() + b * classes;
        double mx = row[0];
        for (int64_t k = 1; k < classes; ++k) mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (int64_t k = 0; k < classes; ++k) denom += std::exp(row[k] - mx);
        total += -(row[y] - mx - std::log(denom));
        for (int64_t k = 0; k < classes; ++k) {
            double p = std::exp(row[k] - mx) / denom;
            out.dlogits[b * classes + k] = (p - (k == y ? 1.0 : 0.0)) / bs;
        }
    }
    out.loss = total / bs;
    return out;
}

// -- optimizer ---------------------------------------------------------------------

void optimizer_update(std::span<double> params, std::span<const double> grads,
                      std::vector<double>& m, std::vector<double>& v, double lr, int64_t t,
                      const OptimConfig& cfg, double decay) {
    require(params.size() == grads.size() && params.size() == m.size() &&
                params.size() == v.size(),
            "optimizer_update: shape mismatch");
    if (cfg.kind == OptimKind::Adam) {
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            double g = grads[i] + decay * params[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
        }
    } else {
        for (size_t i = 0; i < params.size(); ++i) {
            double g = grads[i] + decay * params[i];
            v[i] = cfg.rho * v[i] + (1.0 - cfg.rho) * g * g;
            params[i] -= lr * g / (std::sqrt(v[i]) + cfg.eps);
        }
    }
}

// -- forward -------------------------------------------------------------------------

static DenseTensor reconstruct_for_layer(const TrainState& state, const LayerSpec& ls) {
    const LatentEntry& entry = state.latents[static_cast<size_t>(ls.latent_id)];
    if (ls.slice >= 0)
        return reconstruct_layer(std::get<HolisticGroupParam>(entry.param), ls.slice);
    return reconstruct(entry.param);
}

static DenseTensor forward_impl(std::span<const LayerSpec> layers, const TrainState& state,
                                std::vector<BnEntry>* mutable_bns, const DenseTensor& x,
                                bool training, ForwardTrace* trace) {
    std::vector<DenseTensor> local_acts;
    std::vector<DenseTensor>& acts = trace ? trace->acts : local_acts;
    acts.clear();
    acts.reserve(layers.size() + 1);
    acts.push_back(x);
    if (trace) trace->caches.assign(layers.size(), {});

    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& ls = layers[i];
        const DenseTensor& in = acts.back();
        DenseTensor out;
        switch (ls.kind) {
            case LayerKind::RealConv: {
                const RealEntry& re = state.reals[static_cast<size_t>(ls.real_id)];
                out = real_conv_forward(in, re.w, ls.geom.stride, ls.geom.pad, 0.0);
                break;
            }
            case LayerKind::BinaryConv: {
                DenseTensor w_real = reconstruct_for_layer(state, ls);
                ScaledBinaryWeights sw;
                if (ls.scale_mode == ScaleMode::LearnedPerFilter) {
                    const AlphaEntry& ae = state.alphas[static_cast<size_t>(ls.alpha_id)];
                    sw = scale_binary(w_real, ScaleMode::LearnedPerFilter, &ae.a);
                } else {
                    sw = scale_binary(w_real, ScaleMode::AnalyticPerFilter);
                }
                out = real_conv_forward(in, effective_weights(sw), ls.geom.stride, ls.geom.pad,
                                        kBinaryPad);
                if (trace) {
                    trace->caches[i].w_real = std::move(w_real);
                    trace->caches[i].b = std::move(sw.b);
                    trace->caches[i].alpha = std::move(sw.alpha);
                }
                break;
            }
            case LayerKind::BatchNorm: {
                const BnEntry& be = state.bns[static_cast<size_t>(ls.bn_id)];
                BatchNormCache* cache = trace ? &trace->caches[i].bn : nullptr;
                if (training) {
                    BnStats stats = batch_stats(in);
                    BnEntry& mut = (*mutable_bns)[static_cast<size_t>(ls.bn_id)];
                    for (size_t c = 0; c < stats.mean.size(); ++c) {
                        mut.running_mean[c] = 0.9 * mut.running_mean[c] + 0.1 * stats.mean[c];
                        mut.running_var[c] = 0.9 * mut.running_var[c] + 0.1 * stats.var[c];
                    }
                    out = batch_norm_apply(in, be.gamma, be.beta, stats.mean, stats.var, cache);
                } else {
                    out = batch_norm_apply(in, be.gamma, be.beta, be.running_mean, be.running_var,
                                           cache);
                }
                break;
            }
            case LayerKind::SignActivation: out = binarize_activations(in); break;
            case LayerKind::ResidualAdd: {
                require(ls.residual_src >= 0 &&
                            ls.residual_src < static_cast<int>(acts.size()),
                        "forward: residual source out of range");
                const DenseTensor& src = acts[static_cast<size_t>(ls.residual_src)];
                DenseTensor shortcut;
                if (ls.shortcut_real_id >= 0) {
                    const RealEntry& re = state.reals[static_cast<size_t>(ls.shortcut_real_id)];
                    shortcut = real_conv_forward(src, re.w, ls.shortcut_geom.stride,
                                                 ls.shortcut_geom.pad, 0.0);
                } else {
                    shortcut = src;
                }
                require(shortcut.same_shape(in), "forward: residual shapes differ");
                out = in;
                for (int64_t k = 0; k < out.size(); ++k) out[k] += shortcut[k];
                break;
            }
            case LayerKind::AvgPool: out = avg_pool_forward(in); break;
            case LayerKind::FullyConnected: {
                const RealEntry& re = state.reals[static_cast<size_t>(ls.real_id)];
                out = fully_connected_forward(in, re.w, re.bias);
                break;
            }
        }
        acts.push_back(std::move(out));
    }
    return acts.back();
}

DenseTensor forward_layers(std::span<const LayerSpec> layers, TrainState& state,
                           const DenseTensor& x, bool training, ForwardTrace* trace) {
    return forward_impl(layers, state, &state.bns, x, training, trace);
}

DenseTensor forward_layers(std::span<const LayerSpec> layers, const TrainState& state,
                           const DenseTensor& x, ForwardTrace* trace) {
    return forward_impl(layers, state, nullptr, x, false, trace);
}

// -- backward + update -------------------------------------------------------------

static void add_into(DenseTensor& dst, const DenseTensor& src) {
    if (dst.size() == 0) {
        dst = src;
        return;
    }
    require(dst.same_shape(src), "gradient accumulation shape mismatch");
    for (int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

static void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    if (dst.empty()) {
        dst = src;
        return;
    }
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

namespace {
struct GradTables {
    std::vector<DenseTensor> latent_gw;
    std::vector<DenseTensor> real_dw;
    std::vector<std::vector<double>> real_dbias;
    std::vector<std::vector<double>> alpha_g;
    std::vector<std::vector<double>> bn_dgamma, bn_dbeta;
};
}  // namespace

static GradTables backward_layers(std::span<const LayerSpec> layers, const TrainState& state,
                                  const ForwardTrace& trace, const DenseTensor& dloss) {
    size_t n = layers.size();
    GradTables g;
    g.latent_gw.resize(state.latents.size());
    g.real_dw.resize(state.reals.size());
    g.real_dbias.resize(state.reals.size());
    g.alpha_g.resize(state.alphas.size());
    g.bn_dgamma.resize(state.bns.size());
    g.bn_dbeta.resize(state.bns.size());

    std::vector<DenseTensor> act_grads(n + 1);
    act_grads[n] = dloss;

    for (size_t ii = n; ii-- > 0;) {
        const LayerSpec& ls = layers[ii];
        const DenseTensor& gout = act_grads[ii + 1];
        const DenseTensor& in = trace.acts[ii];
        switch (ls.kind) {
            case LayerKind::RealConv: {
                const RealEntry& re = state.reals[static_cast<size_t>(ls.real_id)];
                ConvGrads cg = real_conv_backward(in, re.w, gout, ls.geom.stride, ls.geom.pad, 0.0);
                add_into(g.real_dw[static_cast<size_t>(ls.real_id)], cg.dw);
                add_into(act_grads[ii], cg.dx);
                break;
            }
            case LayerKind::BinaryConv: {
                const LayerCache& cache = trace.caches[ii];
                DenseTensor w_eff = effective_weights({cache.b, cache.alpha});
                ConvGrads cg =
                    real_conv_backward(in, w_eff, gout, ls.geom.stride, ls.geom.pad, kBinaryPad);
                if (ls.scale_mode == ScaleMode::LearnedPerFilter)
                    add_into(g.alpha_g[static_cast<size_t>(ls.alpha_id)],
                             alpha_gradient(cg.dw, cache.b));
                // dC/dB = alpha * dC/dW_eff, then the straight-through mask.
                DenseTensor grad_b = cg.dw;
                int64_t out_ch = grad_b.dim(0), per = grad_b.size() / out_ch;
                for (int64_t o = 0; o < out_ch; ++o)
                    for (int64_t j = 0; j < per; ++j)
                        grad_b[o * per + j] *= cache.alpha[static_cast<size_t>(o)];
                DenseTensor grad_w = ste_backward(grad_b, cache.w_real);

                DenseTensor& acc = g.latent_gw[static_cast<size_t>(ls.latent_id)];
                if (ls.slice >= 0) {
                    const auto& hp =
                        std::get<HolisticGroupParam>(state.latents[static_cast<size_t>(ls.latent_id)].param);
                    Shape full{hp.layer_count, grad_w.dim(0), grad_w.dim(1), grad_w.dim(2),
                               grad_w.dim(3)};
                    if (acc.size() == 0) acc = DenseTensor(full);
                    double* dst = acc.data() + ls.slice * grad_w.size();
                    for (int64_t k = 0; k < grad_w.size(); ++k) dst[k] += grad_w[k];
                } else {
                    add_into(acc, grad_w);
                }
                add_into(act_grads[ii], cg.dx);
                break;
            }
            case LayerKind::BatchNorm: {
                const BnEntry& be = state.bns[static_cast<size_t>(ls.bn_id)];
                BnGrads bg = batch_norm_backward(gout, trace.caches[ii].bn, be.gamma);
                add_into(g.bn_dgamma[static_cast<size_t>(ls.bn_id)], bg.dgamma);
                add_into(g.bn_dbeta[static_cast<size_t>(ls.bn_id)], bg.dbeta);
                add_into(act_grads[ii], bg.dx);
                break;
            }
            case LayerKind::SignActivation: {
                add_into(act_grads[ii], ste_backward(gout, in));
                break;
            }
            case LayerKind::ResidualAdd: {
                add_into(act_grads[ii], gout);
                const DenseTensor& src = trace.acts[static_cast<size_t>(ls.residual_src)];
                if (ls.shortcut_real_id >= 0) {
                    const RealEntry& re = state.reals[static_cast<size_t>(ls.shortcut_real_id)];
                    ConvGrads cg = real_conv_backward(src, re.w, gout, ls.shortcut_geom.stride,
                                                      ls.shortcut_geom.pad, 0.0);
                    add_into(g.real_dw[static_cast<size_t>(ls.shortcut_real_id)], cg.dw);
                    add_into(act_grads[static_cast<size_t>(ls.residual_src)], cg.dx);
                } else {
                    add_into(act_grads[static_cast<size_t>(ls.residual_src)], gout);
                }
                break;
            }
            case LayerKind::AvgPool: {
                add_into(act_grads[ii], avg_pool_backward(gout, in.shape()));
                break;
            }
            case LayerKind::FullyConnected: {
                const RealEntry& re = state.reals[static_cast<size_t>(ls.real_id)];
                FcGrads fg = fully_connected_backward(in, re.w, gout);
                add_into(g.real_dw[static_cast<size_t>(ls.real_id)], fg.dw);
                add_into(g.real_dbias[static_cast<size_t>(ls.real_id)], fg.dbias);
                add_into(act_grads[ii], fg.dx);
                break;
            }
        }
    }
    return g;
}

StepResult train_step(const Architecture& arch, TrainState& state, const DenseTensor& x,
                      const std::vector<int>& labels, const OptimConfig& optim,
                      const Schedule& schedule) {
    require(x.dim(0) >= 1, "train_step: empty minibatch");
    double lr = schedule.lr_at_step(state.step);
    state.lr = lr;

    ForwardTrace trace;
    DenseTensor logits = forward_net(arch, state, x, true, &trace);
    LossResult loss = loss_cross_entropy(logits, labels);
    if (!std::isfinite(loss.loss)) throw DivergedError(state.step);

    StepResult result;
    result.loss = loss.loss;
    int64_t correct = 0, bs = logits.dim(0), classes = logits.dim(1);
    for (int64_t b = 0; b < bs; ++b) {
        const double* row = logits.data() + b * classes;
        int64_t best = 0;
        for (int64_t k = 1; k < classes; ++k)
            if (row[k] > row[best]) best = k;
        if (best == labels[static_cast<size_t>(b)]) ++correct;
    }
    result.accuracy = static_cast<double>(correct) / bs;

    GradTables grads = backward_layers(arch.layers, state, trace, loss.dlogits);
    int64_t t = state.step + 1;

    for (size_t k = 0; k < state.latents.size(); ++k) {
        LatentEntry& entry = state.latents[k];
        if (grads.latent_gw[k].size() == 0)
            grads.latent_gw[k] = DenseTensor(reconstruct_shape_of(entry.param));
        auto factor_grads = backward_to_factors(entry.param, grads.latent_gw[k]);
        auto views = param_views(entry.param);
        for (size_t j = 0; j < views.size(); ++j)
            optimizer_update(views[j], factor_grads[j], entry.opt.m[j], entry.opt.v[j], lr, t,
                             optim, 0.0);
    }
    for (size_t k = 0; k < state.alphas.size(); ++k) {
        AlphaEntry& ae = state.alphas[k];
        if (grads.alpha_g[k].empty()) grads.alpha_g[k].assign(ae.a.size(), 0.0);
        optimizer_update(ae.a, grads.alpha_g[k], ae.opt.m[0], ae.opt.v[0], lr, t, optim, 0.0);
    }
    for (size_t k = 0; k < state.reals.size(); ++k) {
        RealEntry& re = state.reals[k];
        if (grads.real_dw[k].size() == 0) grads.real_dw[k] = DenseTensor(re.w.shape());
        optimizer_update(re.w.values(), grads.real_dw[k].values(), re.opt.m[0], re.opt.v[0], lr, t,
                         optim, re.decay ? optim.weight_decay : 0.0);
        if (!re.bias.empty()) {
            if (grads.real_dbias[k].empty()) grads.real_dbias[k].assign(re.bias.size(), 0.0);
            optimizer_update(re.bias, grads.real_dbias[k], re.opt.m[1], re.opt.v[1], lr, t, optim,
                             0.0);
        }
    }
    for (size_t k = 0; k < state.bns.size(); ++k) {
        BnEntry& be = state.bns[k];
        if (grads.bn_dgamma[k].empty()) grads.bn_dgamma[k].assign(be.gamma.size(), 0.0);
        if (grads.bn_dbeta[k].empty()) grads.bn_dbeta[k].assign(be.beta.size(), 0.0);
        optimizer_update(be.gamma, grads.bn_dgamma[k], be.opt.m[0], be.opt.v[0], lr, t, optim, 0.0);
        optimizer_update(be.beta, grads.bn_dbeta[k], be.opt.m[1], be.opt.v[1], lr, t, optim, 0.0);
    }

    state.step = t;
    state.lr = schedule.lr_at_step(state.step);
    return result;
}

double evaluate_accuracy(const Architecture& arch, const TrainState& state, const DenseTensor& x,
                         const std::vector<int>& labels, int64_t batch) {
    int64_t n = x.dim(0);
    require(static_cast<int64_t>(labels.size()) == n, "evaluate: labels length mismatch");
    int64_t correct = 0;
    Shape sample_shape(x.shape().begin() + 1, x.shape().end());
    int64_t sample = shape_numel(sample_shape);
    for (int64_t start = 0; start < n; start += batch) {
        int64_t bs = std::min(batch, n - start);
        Shape bshape = x.shape();
        bshape[0] = bs;
        DenseTensor xb(bshape,
                       std::vector<double>(x.data() + start * sample, x.data() + (start + bs) * sample));
        DenseTensor logits = forward_net(arch, state, xb);
        int64_t classes = logits.dim(1);
        for (int64_t b = 0; b < bs; ++b) {
            const double* row = logits.data() + b * classes;
            int64_t best = 0;
            for (int64_t k = 1; k < classes; ++k)
                if (row[k] > row[best]) best = k;
            if (best == labels[static_cast<size_t>(start + b)]) ++correct;
        }
    }
    return static_cast<double>(correct) / n;
}

}  // namespace bnn
