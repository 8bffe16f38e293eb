#include "hansnet/hyperbolic.hpp"

#include <cmath>

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

void PoincareParams::validate() const {
    if (!(kappa < 0.0)) throw ContractError("curvature must be negative, got " + std::to_string(kappa));
    if (!(epsilon > 0.0)) throw ContractError("stability constant must be positive");
}

double PoincareParams::radius() const { return 1.0 / std::sqrt(-kappa); }

Tensor exp_map(const Tensor& v, const PoincareParams& p) {
    p.validate();
    return poincare_expmap(v, Tensor({1}, p.kappa), p.epsilon);
}

Tensor HyperbolicConvLayer::curvature() const {
    if (learnable) return neg(softplus(kappa_raw));
    return kappa;
}

void HyperbolicConvLayer::sync_kappa() {
    if (!learnable) return;
    const double raw = kappa_raw.item();
    const double sp = raw > 0.0 ? raw + std::log1p(std::exp(-raw)) : std::log1p(std::exp(raw));
    kappa.mutable_data()[0] = -sp;
}

Tensor HyperbolicConvLayer::forward(const Tensor& x) const {
    if (x.rank() != 4) throw DimensionError("hyperbolic conv expects [B,C,H,W]");
    if (T.rank() != 2 || T.dim(0) != W.dim(0) || T.dim(1) != W.dim(0))
        throw DimensionError("transform must be [Cout, Cout]");
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3), c = W.dim(0);
    Tensor f = conv2d(x, W, {}, 1, W.dim(2) / 2);
    Tensor flat = permute(reshape(f, {b, c, h * w}), {0, 2, 1});  // [B, HW, C]
    Tensor z = poincare_expmap(matmul(flat, T), curvature(), epsilon);
    return reshape(permute(z, {0, 2, 1}), {b, c, h, w});
}

ParamList HyperbolicConvLayer::params(const std::string& prefix) const {
    ParamList out{{prefix + ".W", W}, {prefix + ".T", T}};
    if (learnable) out.push_back({prefix + ".kappa_raw", kappa_raw});
    return out;
}

ParamList HyperbolicConvLayer::state(const std::string& prefix) const {
    ParamList out{{prefix + ".W", W}, {prefix + ".T", T}, {prefix + ".kappa", kappa}};
    if (learnable) out.push_back({prefix + ".kappa_raw", kappa_raw});
    return out;
}

HyperbolicConvLayer hyperbolic_init(std::size_t cin, std::size_t cout, std::size_t k, const PoincareParams& p,
                                    bool learnable_curvature, std::uint64_t seed, double t_noise) {
    p.validate();
    if (k % 2 == 0) throw ContractError("hyperbolic conv kernel size must be odd");
    Rng rng(seed);
    HyperbolicConvLayer layer;
    layer.W = he_uniform({cout, cin, k, k}, cin * k * k, rng);
    layer.T = near_identity(cout, t_noise, rng);
    layer.kappa = Tensor({1}, p.kappa);
    layer.epsilon = p.epsilon;
    layer.learnable = learnable_curvature;
    if (learnable_curvature) {
        // inverse softplus so the starting curvature matches p.kappa
        const double target = -p.kappa;
        layer.kappa_raw = Tensor({1}, target > 30.0 ? target : std::log(std::expm1(target)));
        layer.sync_kappa();
    }
    return layer;
}

}  // namespace hansnet
