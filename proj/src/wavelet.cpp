#include "hansnet/wavelet.hpp"

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

void WaveletLayer::validate() const {
    if (w_low.rank() != 4 || w_high_h.rank() != 4 || w_high_v.rank() != 4 || w_fusion.rank() != 4)
        throw DimensionError("wavelet kernels must be rank 4");
    const std::size_t cin = w_low.dim(1), k = w_low.dim(2);
    for (const Tensor* t : {&w_low, &w_high_h, &w_high_v})
        if (t->dim(1) != cin || t->dim(2) != k || t->dim(3) != k)
            throw DimensionError("wavelet branches must share Cin and K");
    if (w_high_h.shape() != w_high_v.shape()) throw DimensionError("high-pass branches must have equal shape");
    if (w_fusion.dim(1) != w_low.dim(0) + 2 * w_high_h.dim(0) || w_fusion.dim(2) != 1 || w_fusion.dim(3) != 1)
        throw DimensionError("fusion kernel must be [Cout, C_low + 2*C_high, 1, 1], got " +
                             shape_str(w_fusion.shape()));
    if (b_fusion.rank() != 1 || b_fusion.dim(0) != w_fusion.dim(0))
        throw DimensionError("fusion bias must be [Cout]");
}

Tensor WaveletLayer::forward(const Tensor& x) const {
    validate();
    if (x.rank() != 4 || x.dim(1) != w_low.dim(1))
        throw DimensionError("wavelet input " + shape_str(x.shape()) + " does not match Cin " +
                             std::to_string(w_low.dim(1)));
    const std::size_t pad = w_low.dim(2) / 2;
    Tensor low = conv2d(x, w_low, {}, 1, pad);
    Tensor hh = conv2d(x, w_high_h, {}, 1, pad);
    Tensor hv = conv2d(x, w_high_v, {}, 1, pad);
    return conv2d(concat({low, hh, hv}, 1), w_fusion, b_fusion);
}

ParamList WaveletLayer::params(const std::string& prefix) const {
    return {{prefix + ".low", w_low},
            {prefix + ".high_h", w_high_h},
            {prefix + ".high_v", w_high_v},
            {prefix + ".fusion", w_fusion},
            {prefix + ".bias", b_fusion}};
}

std::vector<double> sobel_h_kernel(std::size_t k) {
    if (k % 2 == 0) throw ContractError("wavelet kernel size must be odd");
    // binomial row (1 2 1 for K = 3) across rows, signed offset across columns
    std::vector<double> smooth(k, 0.0);
    smooth[0] = 1.0;
    for (std::size_t n = 1; n < k; ++n)
        for (std::size_t i = n; i > 0; --i) smooth[i] += smooth[i - 1];
    const double c = static_cast<double>(k / 2);
    std::vector<double> kern(k * k);
    double positive = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            kern[i * k + j] = smooth[i] * (static_cast<double>(j) - c);
            if (kern[i * k + j] > 0.0) positive += kern[i * k + j];
        }
    if (positive > 0.0)
        for (auto& v : kern) v /= positive;
    return kern;
}

WaveletLayer wavelet_init(std::size_t cin, std::size_t c_low, std::size_t c_high, std::size_t cout, std::size_t k,
                          std::uint64_t seed, double noise) {
    if (k % 2 == 0) throw ContractError("wavelet kernel size must be odd, got " + std::to_string(k));
    if (cin == 0 || c_low == 0 || c_high == 0 || cout == 0) throw ContractError("wavelet channel counts must be positive");
    Rng rng(seed);
    WaveletLayer layer;
    const double cin_d = static_cast<double>(cin);
    layer.w_low = Tensor({c_low, cin, k, k}, 1.0 / (cin_d * static_cast<double>(k * k)));

    const auto sobel = sobel_h_kernel(k);
    layer.w_high_h = Tensor({c_high, cin, k, k});
    layer.w_high_v = Tensor({c_high, cin, k, k});
    auto hh = layer.w_high_h.mutable_data();
    auto hv = layer.w_high_v.mutable_data();
    for (std::size_t o = 0; o < c_high * cin; ++o)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                hh[o * k * k + i * k + j] = sobel[i * k + j] / cin_d;
                hv[o * k * k + i * k + j] = sobel[j * k + i] / cin_d;
            }
    if (noise > 0.0)
        for (Tensor* t : {&layer.w_low, &layer.w_high_h, &layer.w_high_v})
            for (auto& v : t->mutable_data()) v += rng.normal(0.0, noise);

    const std::size_t fused = c_low + 2 * c_high;
    layer.w_fusion = fan_in_uniform({cout, fused, 1, 1}, fused, rng);
    layer.b_fusion = Tensor::zeros({cout});
    return layer;
}

}  // namespace hansnet
