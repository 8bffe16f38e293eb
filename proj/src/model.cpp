#include "hansnet/model.hpp"

#include <algorithm>
#include <cmath>

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"
#include "json.hpp"

namespace hansnet {

namespace {

PlainConv plain_init(std::size_t cin, std::size_t cout, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    return {he_uniform({cout, cin, k, k}, cin * k * k, rng), Tensor::zeros({cout})};
}

void append(ParamList& out, const ParamList& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace

Tensor PlainConv::forward(const Tensor& x) const { return conv2d(x, w, b, 1, w.dim(2) / 2); }

HansNet::HansNet(const ModelConfig& cfg, std::size_t image_size, std::uint64_t seed) : cfg_(cfg), size_(image_size) {
    cfg_.validate(image_size);
    const std::size_t k = cfg_.kernel, c0 = cfg_.base_channels;
    std::uint64_t part = 0;
    auto next_seed = [&] { return derive_seed(seed, Stream::init, part++); };

    stem_ = plain_init(1, c0, k, next_seed());
    if (cfg_.use_wavelet)
        wavelet_ = wavelet_init(c0, c0 / 2, c0 / 4, c0, k, next_seed(), cfg_.init_noise);
    else
        plain_wavelet_ = plain_init(c0, c0, k, next_seed());

    std::size_t cin = c0;
    const PoincareParams pp{cfg_.kappa, cfg_.epsilon};
    for (std::size_t i = 0; i < cfg_.multipliers.size(); ++i) {
        const std::size_t cout = cfg_.block_channels(i);
        if (cfg_.use_hconv)
            hconv_.push_back(hyperbolic_init(cin, cout, k, pp, cfg_.learnable_curvature, next_seed(), cfg_.init_noise));
        else
            plain_blocks_.push_back(plain_init(cin, cout, k, next_seed()));
        cin = cout;
    }
    const std::size_t cf = cfg_.final_channels();
    if (cfg_.use_ata) ata_ = attention_init(cf, next_seed());
    if (cfg_.use_spm)
        spm_ = plasticity_init(cf, cf, k, cfg_.alpha, cfg_.plasticity_ema, next_seed(), cfg_.init_noise);
    if (cfg_.use_inr)
        inr_ = implicit_init(cf + (cfg_.inr_multiscale ? c0 : 0), cfg_.pe_levels, cfg_.inr_hidden, next_seed());
    else
        plain_head_ = plain_init(cf, 2, k, next_seed());
    if (cfg_.use_ue) ue_ = uncertainty_init(2 + cf, cfg_.ue_hidden, cfg_.dropout_p, cfg_.mc_samples, next_seed(), true);

    for (auto& p : parameters()) p.value.set_requires_grad(true);
}

ForwardResult HansNet::forward(const Tensor& x, Mode mode, Rng* dropout_rng, std::uint64_t mc_seed) {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != size_ || x.dim(3) != size_)
        throw DimensionError("model expects [B,1," + std::to_string(size_) + "," + std::to_string(size_) + "], got " +
                             shape_str(x.shape()));
    const std::size_t h = x.dim(2), w = x.dim(3);
    Tensor f0 = stem_.forward(x);
    Tensor fine = wavelet_ ? wavelet_->forward(f0) : relu(plain_wavelet_->forward(f0));
    Tensor cur = fine;
    for (std::size_t i = 0; i < cfg_.multipliers.size(); ++i) {
        cur = cfg_.use_hconv ? hconv_[i].forward(cur) : relu(plain_blocks_[i].forward(cur));
        cur = maxpool2d(cur);
    }
    if (ata_) cur = ata_->forward(cur);
    if (spm_) {
        if (mode == Mode::train && !spm_->frozen) spm_->update(cur);
        cur = spm_->forward(cur);
    }

    ForwardResult out;
    out.features = cur;
    Tensor logits;
    if (inr_) {
        std::vector<Tensor> feats{cur};
        if (cfg_.inr_multiscale) feats.push_back(fine);
        logits = inr_->query_dense(feats, h, w);
    } else {
        logits = plain_head_->forward(upsample_bilinear(cur, h, w));
    }
    if (!ue_) {
        out.logits = logits;
        out.probs = sigmoid(logits).detach();
        return out;
    }
    Tensor ue_in = concat({logits, upsample_bilinear(cur, h, w)}, 1);
    if (mode == Mode::train) {
        if (!dropout_rng) throw ContractError("training forward needs a dropout generator");
        out.logits = ue_->train_forward(ue_in, *dropout_rng);
        out.probs = sigmoid(out.logits).detach();
    } else {
        out.logits = ue_->logits(ue_in);
        out.uncertainty = ue_->mc_predict(ue_in.detach(), mc_seed);
        out.probs = out.uncertainty->mean;
    }
    return out;
}

ParamList HansNet::parameters() const {
    ParamList out{{"stem.w", stem_.w}, {"stem.b", stem_.b}};
    if (wavelet_) append(out, wavelet_->params("wavelet"));
    if (plain_wavelet_) append(out, {{"plain0.w", plain_wavelet_->w}, {"plain0.b", plain_wavelet_->b}});
    for (std::size_t i = 0; i < hconv_.size(); ++i) append(out, hconv_[i].params("hconv" + std::to_string(i + 1)));
    for (std::size_t i = 0; i < plain_blocks_.size(); ++i) {
        const std::string p = "plain" + std::to_string(i + 1);
        append(out, {{p + ".w", plain_blocks_[i].w}, {p + ".b", plain_blocks_[i].b}});
    }
    if (ata_) append(out, ata_->params("ata"));
    if (spm_) append(out, spm_->params("spm"));
    if (inr_) append(out, inr_->params("inr"));
    if (plain_head_) append(out, {{"head.w", plain_head_->w}, {"head.b", plain_head_->b}});
    if (ue_) append(out, ue_->params("ue"));
    return out;
}

ParamList HansNet::state() const {
    ParamList out = parameters();
    for (std::size_t i = 0; i < hconv_.size(); ++i) out.push_back({"hconv" + std::to_string(i + 1) + ".kappa", hconv_[i].kappa});
    if (spm_) out.push_back({"spm.eta", spm_->eta});
    return out;
}

void HansNet::load_state(const ParamList& saved) {
    assign_checkpoint(state(), saved);
    sync_buffers();
}

std::size_t HansNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value.size();
    return n;
}

void HansNet::set_plasticity_frozen(bool frozen) {
    if (spm_) spm_->frozen = frozen;
}

void HansNet::sync_buffers() {
    for (auto& l : hconv_) l.sync_kappa();
}

Tensor segmentation_loss(const Tensor& logits, const Tensor& targets, double w_dice, double w_bce) {
    if (logits.shape() != targets.shape()) throw DimensionError("logits and targets differ in shape");
    if (logits.rank() != 4) throw DimensionError("loss expects [B,C,H,W]");
    for (double t : targets.data())
        if (t != 0.0 && t != 1.0) throw ContractError("targets must be binary");
    Tensor p = sigmoid(logits);
    Tensor inter = sum(mul(p, targets), {2, 3});
    Tensor denom = add(sum(p, {2, 3}), add_scalar(sum(targets, {2, 3}), 1.0));
    Tensor dice = hansnet::div(add_scalar(scale(inter, 2.0), 1.0), denom);
    Tensor dice_loss = add_scalar(neg(mean_all(dice)), 1.0);
    Tensor bce = mean_all(sub(softplus(logits), mul(logits, targets)));
    return add(scale(dice_loss, w_dice), scale(bce, w_bce));
}

Adam::Adam(ParamList params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k].value;
        const bool has = p.has_grad();
        const auto g = has ? p.grad() : std::span<const double>{};
        auto d = p.mutable_data();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double gi = has ? g[i] : 0.0;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            d[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

void SegCounts::add(const Tensor& pred_mask, const Tensor& gt_mask) {
    if (pred_mask.shape() != gt_mask.shape() || pred_mask.rank() != 4 || pred_mask.dim(1) != 2)
        throw DimensionError("expected matching [B,2,H,W] masks");
    const std::size_t b = pred_mask.dim(0), area = pred_mask.dim(2) * pred_mask.dim(3);
    const auto pv = pred_mask.data(), gv = gt_mask.data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (int c = 0; c < 2; ++c)
            for (std::size_t i = 0; i < area; ++i) {
                const std::size_t k = (bi * 2 + static_cast<std::size_t>(c)) * area + i;
                const bool p = pv[k] != 0.0, g = gv[k] != 0.0;
                inter[c] += p && g;
                pred[c] += p;
                gt[c] += g;
                uni[c] += p || g;
            }
}

double SegCounts::dice(int c) const { return pred[c] + gt[c] == 0.0 ? 1.0 : 2.0 * inter[c] / (pred[c] + gt[c]); }

double SegCounts::iou(int c) const { return uni[c] == 0.0 ? 1.0 : inter[c] / uni[c]; }

Tensor threshold(const Tensor& probs) {
    Tensor out(probs.shape());
    auto o = out.mutable_data();
    const auto p = probs.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = p[i] >= 0.5 ? 1.0 : 0.0;
    return out;
}

std::string epoch_log_json(const EpochLog& log) {
    nlohmann::ordered_json j;
    j["epoch"] = log.epoch;
    j["loss"] = log.loss;
    j["dice_liver"] = log.dice_liver;
    j["dice_tumor"] = log.dice_tumor;
    j["iou_liver"] = log.iou_liver;
    j["iou_tumor"] = log.iou_tumor;
    return j.dump();
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    Shape shape = t.shape();
    const std::size_t stride = t.size() / shape[0];
    shape[0] = rows.size();
    Tensor out(shape);
    auto o = out.mutable_data();
    const auto d = t.data();
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                    o.begin() + static_cast<std::ptrdiff_t>(i * stride));
    return out;
}

SegCounts evaluate(HansNet& model, const SliceSet& data, std::size_t batch_size, std::uint64_t seed,
                   Tensor* probs_out) {
    SegCounts counts;
    std::vector<Tensor> all;
    NoGradScope no_grad;
    for (std::size_t start = 0, batch = 0; start < data.size(); start += batch_size, ++batch) {
        std::vector<std::size_t> rows;
        for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) rows.push_back(i);
        const ForwardResult r =
            model.forward(take_rows(data.images, rows), Mode::eval, nullptr, derive_seed(seed, Stream::mc, batch));
        counts.add(threshold(r.probs), take_rows(data.targets, rows));
        if (probs_out) all.push_back(r.probs);
    }
    if (probs_out && !all.empty()) *probs_out = concat(all, 0);
    return counts;
}

std::vector<EpochLog> train_model(HansNet& model, const SliceSet& train, const SliceSet& val, const TrainConfig& cfg,
                                  const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (train.size() == 0) throw ContractError("training set is empty");
    Adam opt(model.parameters(), cfg.lr);
    Rng shuffle(derive_seed(cfg.seed, Stream::shuffle));
    Rng dropout(derive_seed(cfg.seed, Stream::dropout));
    const SliceSet& scored = val.size() > 0 ? val : train;
    std::vector<EpochLog> logs;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        model.set_plasticity_frozen(false);
        const auto perm = shuffle.permutation(train.size());
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < perm.size(); start += cfg.batch_size, ++batches) {
            const std::vector<std::size_t> rows(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                                perm.begin() + static_cast<std::ptrdiff_t>(
                                                                   std::min(perm.size(), start + cfg.batch_size)));
            double value = 0.0;
            try {
                Tape tape;
                TapeScope scope(tape);
                const ForwardResult r = model.forward(take_rows(train.images, rows), Mode::train, &dropout);
                Tensor loss = segmentation_loss(r.logits, take_rows(train.targets, rows), cfg.w_dice, cfg.w_bce);
                value = loss.item();
                tape.backward(loss);
            } catch (const NumericalError& e) {
                throw NumericalError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batches) + " (first slice " + std::to_string(rows.front()) +
                                     "): " + e.what());
            }
            opt.step();
            opt.zero_grad();
            model.sync_buffers();
            loss_sum += value;
        }
        model.set_plasticity_frozen(true);
        const SegCounts c = evaluate(model, scored, cfg.batch_size, derive_seed(cfg.seed, Stream::mc, epoch));
        EpochLog log{epoch, loss_sum / static_cast<double>(batches), c.dice(0), c.dice(1), c.iou(0), c.iou(1)};
        logs.push_back(log);
        if (on_epoch) on_epoch(log);
    }
    model.set_plasticity_frozen(true);
    return logs;
}

}  // namespace hansnet
