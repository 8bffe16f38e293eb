#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hansnet/checkpoint.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

/// Hebbian channel modulation followed by a channel mix and a refining conv.
///
/// eta is a buffer: it is written by update() outside any tape and read as a
/// constant by forward(), so it never receives a gradient.
struct PlasticityState {
    Tensor eta;    // [C]
    Tensor omega;  // [C]
    Tensor T;      // [C, C]
    Tensor W;      // [Cout, C, K, K]
    double alpha = 0.1;
    bool frozen = false;
    /// false: eta <- alpha * diag(C) (the rule as written, +eta and -eta cancel)
    /// true:  eta <- eta + alpha * (diag(C) - eta)
    bool ema = false;

    std::size_t channels() const { return omega.dim(0); }

    /// Batch-mean diagonal of the channel-activity outer product: mean_b a_bc^2,
    /// a_b = spatial mean of x per sample and channel.
    Tensor activity_diag(const Tensor& x) const;
    /// Throws ContractError when frozen.
    void update(const Tensor& x);
    /// x [B,C,H,W] -> [B,Cout,H,W].
    Tensor forward(const Tensor& x) const;

    ParamList params(const std::string& prefix = "spm") const;
    ParamList state(const std::string& prefix = "spm") const;
};

/// omega = 1, eta = 0, T = identity + noise. W is a centered identity kernel
/// plus noise when Cout == C, fan-in uniform otherwise.
PlasticityState plasticity_init(std::size_t c, std::size_t cout, std::size_t k, double alpha, bool ema,
                                std::uint64_t seed, double t_noise = 1e-2);

}  // namespace hansnet
