#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hansnet/checkpoint.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

struct PoincareParams {
    double kappa = -1.0;
    double epsilon = 1e-7;

    /// Throws ContractError unless kappa < 0 and epsilon > 0.
    void validate() const;
    double radius() const;
};

/// tanh(sqrt(-k)|v|) / (sqrt(-k)|v| + eps) * v over the last axis.
Tensor exp_map(const Tensor& v, const PoincareParams& p);

/// conv -> per-pixel linear map T -> exponential map into the Poincare ball.
///
/// With a learnable curvature, kappa = -softplus(kappa_raw). The `kappa`
/// tensor always holds the effective value and is what gets checkpointed as
/// "<prefix>.kappa"; `kappa_raw` is added as "<prefix>.kappa_raw".
struct HyperbolicConvLayer {
    Tensor W;          // [Cout, Cin, K, K]
    Tensor T;          // [Cout, Cout]
    Tensor kappa;      // [1], effective curvature (buffer)
    Tensor kappa_raw;  // [1], trained only when learnable
    double epsilon = 1e-7;
    bool learnable = false;

    /// x [B,Cin,H,W] -> [B,Cout,H,W].
    Tensor forward(const Tensor& x) const;
    /// Curvature as a tensor node (differentiable when learnable).
    Tensor curvature() const;
    /// Refreshes the `kappa` buffer from kappa_raw.
    void sync_kappa();

    /// Trainable tensors.
    ParamList params(const std::string& prefix) const;
    /// Everything that gets checkpointed.
    ParamList state(const std::string& prefix) const;
};

HyperbolicConvLayer hyperbolic_init(std::size_t cin, std::size_t cout, std::size_t k, const PoincareParams& p,
                                    bool learnable_curvature, std::uint64_t seed, double t_noise = 1e-2);

}  // namespace hansnet
