#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hansnet/checkpoint.hpp"
#include "hansnet/tensor.hpp"

namespace hansnet {

class Rng;

struct UncertaintyMap {
    Tensor mean;      // [B,2,H,W], in [0,1]
    Tensor variance;  // [B,2,H,W], biased (divide by T)
};

using HeadFn = std::function<Tensor(const Tensor&)>;

/// T passes of sigmoid(head(dropout2d(x, p))), each with its own sub-seed
/// derived from `seed`, reduced to mean and biased variance. Runs without
/// recording. Throws ContractError when T < 1.
UncertaintyMap mc_dropout(const Tensor& x, const HeadFn& head, double p, std::size_t samples, std::uint64_t seed);

/// Lightweight conv head: conv3x3 -> tanh -> conv1x1 -> 2 logits. With
/// `residual` set, the first two input channels are added to the output, so
/// a head fed [logits, features] starts close to the incoming prediction.
struct UncertaintyHead {
    Tensor conv1_w, conv1_b;  // [hidden, Cin, 3, 3], [hidden]
    Tensor conv2_w, conv2_b;  // [2, hidden, 1, 1], [2]
    double dropout_p = 0.2;
    std::size_t samples = 10;
    bool residual = false;

    void validate() const;
    /// Head without dropout.
    Tensor logits(const Tensor& x) const;
    /// Training path: one pass with a fresh dropout mask.
    Tensor train_forward(const Tensor& x, Rng& rng) const;
    UncertaintyMap mc_predict(const Tensor& x, std::uint64_t seed) const;

    ParamList params(const std::string& prefix = "ue") const;
};

UncertaintyHead uncertainty_init(std::size_t cin, std::size_t hidden, double dropout_p, std::size_t samples,
                                 std::uint64_t seed, bool residual = false);

struct ErrorSplit {
    std::optional<double> correct;    // mean variance on correctly classified pixels
    std::optional<double> incorrect;  // absent when nothing is misclassified
};

/// Per class c of [B,C,H,W] binary masks: mean variance over pixels where
/// pred == gt and where pred != gt.
std::vector<ErrorSplit> uncertainty_error_correlation(const UncertaintyMap& map, const Tensor& pred,
                                                      const Tensor& gt);

/// Scalar summary: mean per-pixel standard deviation over pixels predicted
/// foreground in any class. Absent when nothing is predicted.
std::optional<double> foreground_uncertainty(const UncertaintyMap& map, const Tensor& pred);

}  // namespace hansnet
