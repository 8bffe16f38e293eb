#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hansnet/checkpoint.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

/// Spatial self-attention with a sigmoid gate computed from the globally
/// pooled input, added back as a residual:
///   out = x + sigmoid(mlp(gap(x))) * softmax(Q K^T / sqrt(d_k)) V
struct AttentionLayer {
    Tensor q;        // [C/8, C, 1, 1]
    Tensor k;        // [C/8, C, 1, 1]
    Tensor v;        // [C, C, 1, 1]
    Tensor mlp1;     // [C, C/4]
    Tensor mlp1_b;   // [C/4]
    Tensor mlp2;     // [C/4, 1]
    Tensor mlp2_b;   // [1]

    std::size_t channels() const { return v.dim(0); }

    Tensor forward(const Tensor& x) const;
    /// Row-stochastic attention matrix [B, N, N], N = H*W.
    Tensor attention_map(const Tensor& x) const;
    /// Gate values [B, 1, 1, 1] in (0, 1).
    Tensor gate(const Tensor& x) const;

    ParamList params(const std::string& prefix = "ata") const;
};

/// Throws ConfigError if C is not divisible by 8. The last MLP layer starts
/// near zero so the initial gate is about 0.5.
AttentionLayer attention_init(std::size_t c, std::uint64_t seed, double final_scale = 1e-3);

}  // namespace hansnet
