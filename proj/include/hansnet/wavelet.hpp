#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "hansnet/checkpoint.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

/// Three-branch learnable filter bank (low-pass, horizontal and vertical
/// high-pass) fused by a 1x1 convolution with bias.
struct WaveletLayer {
    Tensor w_low;     // [C_low, Cin, K, K]
    Tensor w_high_h;  // [C_high, Cin, K, K]
    Tensor w_high_v;  // [C_high, Cin, K, K]
    Tensor w_fusion;  // [Cout, C_low + 2*C_high, 1, 1]
    Tensor b_fusion;  // [Cout]

    /// x [B,Cin,H,W] -> [B,Cout,H,W], branches use padding K/2.
    Tensor forward(const Tensor& x) const;
    /// Throws DimensionError if the five tensors are inconsistent.
    void validate() const;
    ParamList params(const std::string& prefix = "wavelet") const;
};

/// Box filter 1/(Cin*K^2) for the low branch; Sobel-style difference kernels
/// (binomial smoothing times signed offset, scaled so positive taps sum to
/// 1/Cin) for the high branches; fan-in uniform fusion; zero bias. Every
/// branch weight then gets N(0, noise^2) added. K must be odd.
WaveletLayer wavelet_init(std::size_t cin, std::size_t c_low, std::size_t c_high, std::size_t cout, std::size_t k,
                          std::uint64_t seed, double noise = 1e-2);

/// The noise-free K x K horizontal difference kernel used by wavelet_init for Cin = 1.
std::vector<double> sobel_h_kernel(std::size_t k);

}  // namespace hansnet
