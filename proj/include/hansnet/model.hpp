#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hansnet/attention.hpp"
#include "hansnet/checkpoint.hpp"
#include "hansnet/config.hpp"
#include "hansnet/hyperbolic.hpp"
#include "hansnet/implicit.hpp"
#include "hansnet/plasticity.hpp"
#include "hansnet/tensor.hpp"
#include "hansnet/uncertainty.hpp"
#include "hansnet/wavelet.hpp"

namespace hansnet {

class Rng;

enum class Mode { train, eval };

struct ForwardResult {
    Tensor logits;    // [B,2,H,W]
    Tensor features;  // deepest feature map after attention/plasticity
    Tensor probs;     // [B,2,H,W]: MC mean with the uncertainty head, else sigmoid(logits)
    std::optional<UncertaintyMap> uncertainty;
};

/// Conv with bias (used where a stage is switched off, and for the stem).
struct PlainConv {
    Tensor w, b;
    Tensor forward(const Tensor& x) const;
};

/// Full segmentation network:
///   stem conv -> filter bank -> [hyperbolic block + maxpool] x N -> attention
///   -> plasticity -> implicit head on the dense grid -> MC-dropout head
/// A disabled stage is replaced by conv + relu (filter bank, hyperbolic
/// blocks), identity (attention, plasticity), upsample + conv (implicit head)
/// or a plain sigmoid (uncertainty head).
class HansNet {
public:
    HansNet(const ModelConfig& cfg, std::size_t image_size, std::uint64_t seed);

    /// Train mode updates the plasticity trace (unless frozen) and draws one
    /// dropout mask from `dropout_rng`. Eval mode runs `mc_samples` passes
    /// seeded from `mc_seed`.
    ForwardResult forward(const Tensor& x, Mode mode, Rng* dropout_rng = nullptr, std::uint64_t mc_seed = 0);

    /// Trainable tensors, in a fixed order.
    ParamList parameters() const;
    /// Everything that is checkpointed (parameters plus buffers).
    ParamList state() const;
    /// Copies values from a checkpoint; names and shapes must match exactly.
    void load_state(const ParamList& saved);

    std::size_t parameter_count() const;
    const ModelConfig& config() const { return cfg_; }
    std::size_t image_size() const { return size_; }

    /// Freezes the plasticity trace (forced in eval mode regardless).
    void set_plasticity_frozen(bool frozen);

    /// Refreshes derived buffers (effective curvature) after an optimizer step.
    void sync_buffers();

private:
    ModelConfig cfg_;
    std::size_t size_;
    PlainConv stem_;
    std::optional<WaveletLayer> wavelet_;
    std::optional<PlainConv> plain_wavelet_;
    std::vector<HyperbolicConvLayer> hconv_;
    std::vector<PlainConv> plain_blocks_;
    std::optional<AttentionLayer> ata_;
    std::optional<PlasticityState> spm_;
    std::optional<ImplicitHead> inr_;
    std::optional<PlainConv> plain_head_;
    std::optional<UncertaintyHead> ue_;
};

/// w_dice * (1 - soft Dice, smoothing 1, averaged over batch and class)
///   + w_bce * mean(softplus(z) - z * t).
/// Throws ContractError if targets are not binary.
Tensor segmentation_loss(const Tensor& logits, const Tensor& targets, double w_dice, double w_bce);

class Adam {
public:
    explicit Adam(ParamList params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    /// One bias-corrected update from each parameter's accumulated gradient.
    /// Missing gradients count as zero.
    void step();
    void zero_grad();
    std::size_t steps() const { return t_; }

private:
    ParamList params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct SegCounts {
    // per class: intersection, |pred|, |gt|, |union|
    double inter[2] = {0, 0}, pred[2] = {0, 0}, gt[2] = {0, 0}, uni[2] = {0, 0};
    void add(const Tensor& pred_mask, const Tensor& gt_mask);
    double dice(int c) const;
    double iou(int c) const;
};

/// probs >= 0.5 as a 0/1 tensor.
Tensor threshold(const Tensor& probs);

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0.0;
    double dice_liver = 0.0, dice_tumor = 0.0, iou_liver = 0.0, iou_tumor = 0.0;
};

/// One JSON object per line: {epoch, loss, dice_liver, dice_tumor, iou_liver, iou_tumor}.
std::string epoch_log_json(const EpochLog& log);

/// Eval-mode predictions over a slice set in batches; returns pooled counts
/// and, if requested, the stacked probabilities.
SegCounts evaluate(HansNet& model, const SliceSet& data, std::size_t batch_size, std::uint64_t seed,
                   Tensor* probs_out = nullptr);

/// Seeded mini-batch Adam training. Dice/IoU in each log line are pooled
/// over `val` when it is non-empty, otherwise over `train`.
std::vector<EpochLog> train_model(HansNet& model, const SliceSet& train, const SliceSet& val, const TrainConfig& cfg,
                                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Selected entries along the first axis, in the given order.
Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows);

}  // namespace hansnet
