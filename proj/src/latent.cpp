#include "bnn/latent.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace bnn {

double kaiming_bound(const Shape& shape) {
    require(shape.size() >= 2, "kaiming_bound: need at least 2 modes");
    int64_t fan_in = 1;
    // Trailing modes past the output channel form the receptive field; for a
    // stacked (N, O, C, w, h) group the per-layer fan-in is still C*w*h.
    size_t first = shape.size() == 5 ? 2 : 1;
    for (size_t k = first; k < shape.size(); ++k) fan_in *= shape[k];
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

WeightParam init_direct(const Shape& shape, uint64_t rng_seed) {
    require(shape.size() == 4 || shape.size() == 5, "init_direct: expects a 4- or 5-order shape");
    double bound = kaiming_bound(shape);
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseTensor w(shape);
    for (int64_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
    return DirectParam{std::move(w)};
}

static DenseTensor direct_tensor(const Shape& shape, uint64_t rng_seed) {
    return std::get<DirectParam>(init_direct(shape, rng_seed)).w;
}

WeightParam init_svd(const Shape& shape, int64_t rank, uint64_t rng_seed) {
    require(shape.size() == 4, "init_svd: expects a 4-order (O, C, w, h) shape");
    DenseTensor w = direct_tensor(shape, rng_seed);
    int64_t out_ch = shape[0];
    int64_t n = w.size() / out_ch;
    int64_t full = std::min(out_ch, n);
    if (rank <= 0) rank = full;
    require(rank <= full, "init_svd: rank exceeds min(O, C*w*h)");

    SvdResult dec = svd(unfold(w.reshaped({out_ch, n}), 0));
    SvdParam p;
    p.shape = shape;
    p.u = Matrix(out_ch, rank);
    p.v = Matrix(rank, n);
    for (int64_t r = 0; r < out_ch; ++r)
        for (int64_t k = 0; k < rank; ++k) p.u(r, k) = dec.u(r, k) * dec.s[static_cast<size_t>(k)];
    for (int64_t k = 0; k < rank; ++k)
        for (int64_t c = 0; c < n; ++c) p.v(k, c) = dec.v(c, k);
    return p;
}

static WeightParam hosvd_init(const Shape& shape, uint64_t rng_seed, bool holistic) {
    DenseTensor w = direct_tensor(shape, rng_seed);
    std::vector<Matrix> factors;
    factors.reserve(shape.size());
    for (int64_t mode = 0; mode < w.order(); ++mode)
        factors.push_back(left_singular_basis(unfold(w, mode)));

    // Orthogonal factors: the core is W contracted by the transposes.
    DenseTensor core = w;
    for (int64_t mode = 0; mode < w.order(); ++mode)
        core = mode_product(core, transpose(factors[static_cast<size_t>(mode)]), mode);

    if (holistic) return HolisticGroupParam{std::move(core), std::move(factors), shape[0]};
    return TuckerParam{std::move(core), std::move(factors)};
}

WeightParam init_tucker(const Shape& shape, uint64_t rng_seed) {
    require(shape.size() == 4, "init_tucker: expects a 4-order (O, C, w, h) shape");
    return hosvd_init(shape, rng_seed, false);
}

WeightParam init_holistic(const Shape& group_shape, uint64_t rng_seed) {
    require(group_shape.size() == 5, "init_holistic: expects a 5-order (N, O, C, w, h) shape");
    require(group_shape[0] >= 1, "init_holistic: layer count must be >= 1");
    return hosvd_init(group_shape, rng_seed, true);
}

DenseTensor reconstruct(const WeightParam& p) {
    return std::visit(
        [](const auto& v) -> DenseTensor {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DirectParam>) {
                return v.w;
            } else if constexpr (std::is_same_v<T, SvdParam>) {
                Matrix m = matmul(v.u, v.v);
                return DenseTensor(v.shape, std::move(m.data));
            } else {
                return tucker_reconstruct(v.core, v.factors);
            }
        },
        p);
}

DenseTensor reconstruct_layer(const HolisticGroupParam& p, int64_t l) {
    require(l >= 0 && l < p.layer_count, "reconstruct_layer: layer index out of range");
    // Contract mode 0 with just row l, then the remaining modes.
    Matrix row(1, p.factors[0].cols);
    for (int64_t c = 0; c < row.cols; ++c) row(0, c) = p.factors[0](l, c);
    DenseTensor t = mode_product(p.core, row, 0);
    for (int64_t mode = 1; mode < t.order(); ++mode)
        t = mode_product(t, p.factors[static_cast<size_t>(mode)], mode);
    Shape layer_shape(t.shape().begin() + 1, t.shape().end());
    return t.reshaped(std::move(layer_shape));
}

// Tucker adjoints: with W = G x_0 U0 ... x_N UN,
//   dG  = dW x_0 U0^T ... x_N UN^T
//   dUk = unfold(dW, k) * unfold(G x_{j != k} Uj, k)^T
static std::vector<std::vector<double>> tucker_backward(const DenseTensor& core,
                                                        const std::vector<Matrix>& factors,
                                                        const DenseTensor& grad_w) {
    int64_t order = core.order();
    std::vector<std::vector<double>> grads;
    grads.reserve(static_cast<size_t>(order) + 1);

    DenseTensor grad_core = grad_w;
    for (int64_t mode = 0; mode < order; ++mode)
        grad_core = mode_product(grad_core, transpose(factors[static_cast<size_t>(mode)]), mode);
    grads.push_back(std::move(grad_core.values()));

    for (int64_t k = 0; k < order; ++k) {
        DenseTensor partial = core;
        for (int64_t mode = 0; mode < order; ++mode) {
            if (mode == k) continue;
            partial = mode_product(partial, factors[static_cast<size_t>(mode)], mode);
        }
        Matrix g = matmul_nt(unfold(grad_w, k), unfold(partial, k));
        grads.push_back(std::move(g.data));
    }
    return grads;
}

std::vector<std::vector<double>> backward_to_factors(const WeightParam& p,
                                                     const DenseTensor& grad_w) {
    require(grad_w.shape() == reconstruct_shape_of(p), "backward_to_factors: gradient shape mismatch");
    return std::visit(
        [&](const auto& v) -> std::vector<std::vector<double>> {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DirectParam>) {
                return {grad_w.values()};
            } else if constexpr (std::is_same_v<T, SvdParam>) {
                Matrix g(v.u.rows, v.v.cols, grad_w.values());
                Matrix du = matmul_nt(g, v.v);  // G * v^T
                Matrix dv = matmul_tn(v.u, g);  // u^T * G
                return {std::move(du.data), std::move(dv.data)};
            } else {
                return tucker_backward(v.core, v.factors, grad_w);
            }
        },
        p);
}

Shape reconstruct_shape_of(const WeightParam& p) {
    return std::visit(
        [](const auto& v) -> Shape {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, DirectParam>) {
                return v.w.shape();
            } else if constexpr (std::is_same_v<T, SvdParam>) {
                return v.shape;
            } else {
                Shape s;
                for (size_t k = 0; k < v.factors.size(); ++k) s.push_back(v.factors[k].rows);
                return s;
            }
        },
        p);
}

std::vector<std::span<double>> param_views(WeightParam& p) {
    return std::visit(
        [](auto& v) -> std::vector<std::span<double>> {
            using T = std::decay_t<decltype(v)>;
            std::vector<std::span<double>> views;
            if constexpr (std::is_same_v<T, DirectParam>) {
                views.emplace_back(v.w.values());
            } else if constexpr (std::is_same_v<T, SvdParam>) {
                views.emplace_back(v.u.data);
                views.emplace_back(v.v.data);
            } else {
                views.emplace_back(v.core.values());
                for (auto& f : v.factors) views.emplace_back(f.data);
            }
            return views;
        },
        p);
}

std::vector<std::span<const double>> param_views(const WeightParam& p) {
    auto mut = param_views(const_cast<WeightParam&>(p));
    return {mut.begin(), mut.end()};
}

bool is_decomposed(const WeightParam& p) { return !std::holds_alternative<DirectParam>(p); }

}  // namespace bnn
