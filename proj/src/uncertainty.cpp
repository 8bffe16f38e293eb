#include "hansnet/uncertainty.hpp"

#include <cmath>

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

UncertaintyMap mc_dropout(const Tensor& x, const HeadFn& head, double p, std::size_t samples, std::uint64_t seed) {
    if (samples < 1) throw ContractError("Monte Carlo sample count must be at least 1");
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout probability must be in [0, 1)");
    NoGradScope no_grad;
    std::vector<Tensor> draws;
    draws.reserve(samples);
    for (std::size_t t = 0; t < samples; ++t) {
        Rng rng(derive_seed(seed, Stream::mc, t));
        draws.push_back(sigmoid(head(dropout2d(x, p, rng))));
    }
    const Shape shape = draws.front().shape();
    const std::size_t n = draws.front().size();
    const double inv_t = 1.0 / static_cast<double>(samples);
    UncertaintyMap out{Tensor(shape), Tensor(shape)};
    auto mu = out.mean.mutable_data();
    auto var = out.variance.mutable_data();
    // shifted by the first draw so identical draws give exactly zero variance
    const auto u0 = draws.front().data();
    std::vector<double> shift(n, 0.0);
    for (const auto& d : draws) {
        const auto u = d.data();
        for (std::size_t i = 0; i < n; ++i) shift[i] += u[i] - u0[i];
    }
    for (auto& m : shift) m *= inv_t;
    for (std::size_t i = 0; i < n; ++i) mu[i] = u0[i] + shift[i];
    for (const auto& d : draws) {
        const auto u = d.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double dev = u[i] - u0[i] - shift[i];
            var[i] += dev * dev;
        }
    }
    for (auto& v : var) v *= inv_t;
    return out;
}

void UncertaintyHead::validate() const {
    if (dropout_p < 0.0 || dropout_p >= 1.0) throw ConfigError("dropout probability must be in [0, 1)");
    if (samples < 1) throw ConfigError("Monte Carlo sample count must be at least 1");
    if (residual && conv1_w.dim(1) < 2) throw ConfigError("residual head needs at least two input channels");
}

Tensor UncertaintyHead::logits(const Tensor& x) const {
    Tensor h = hansnet::tanh(conv2d(x, conv1_w, conv1_b, 1, conv1_w.dim(2) / 2));
    Tensor out = conv2d(h, conv2_w, conv2_b);
    if (!residual) return out;
    // fixed channel selector, not a parameter
    Tensor pick = Tensor::zeros({2, x.dim(1), 1, 1});
    pick.mutable_data()[0] = 1.0;
    pick.mutable_data()[x.dim(1) + 1] = 1.0;
    return add(out, conv2d(x, pick));
}

Tensor UncertaintyHead::train_forward(const Tensor& x, Rng& rng) const { return logits(dropout2d(x, dropout_p, rng)); }

UncertaintyMap UncertaintyHead::mc_predict(const Tensor& x, std::uint64_t seed) const {
    validate();
    return mc_dropout(x, [this](const Tensor& t) { return logits(t); }, dropout_p, samples, seed);
}

ParamList UncertaintyHead::params(const std::string& prefix) const {
    return {{prefix + ".conv1.w", conv1_w},
            {prefix + ".conv1.b", conv1_b},
            {prefix + ".conv2.w", conv2_w},
            {prefix + ".conv2.b", conv2_b}};
}

UncertaintyHead uncertainty_init(std::size_t cin, std::size_t hidden, double dropout_p, std::size_t samples,
                                 std::uint64_t seed, bool residual) {
    Rng rng(seed);
    UncertaintyHead head;
    head.conv1_w = fan_in_uniform({hidden, cin, 3, 3}, cin * 9, rng);
    head.conv1_b = Tensor::zeros({hidden});
    head.conv2_w = fan_in_uniform({2, hidden, 1, 1}, hidden, rng);
    head.conv2_b = Tensor::zeros({2});
    head.dropout_p = dropout_p;
    head.samples = samples;
    head.residual = residual;
    head.validate();
    return head;
}

namespace {

void check_binary(const Tensor& t, const char* what) {
    for (double v : t.data())
        if (v != 0.0 && v != 1.0) throw ContractError(std::string(what) + " mask must be binary");
}

}  // namespace

std::vector<ErrorSplit> uncertainty_error_correlation(const UncertaintyMap& map, const Tensor& pred,
                                                      const Tensor& gt) {
    if (pred.shape() != gt.shape() || pred.shape() != map.variance.shape())
        throw DimensionError("uncertainty, prediction and ground truth shapes differ");
    if (pred.rank() != 4) throw DimensionError("expected [B,C,H,W] masks");
    check_binary(pred, "prediction");
    check_binary(gt, "ground-truth");
    const std::size_t b = pred.dim(0), c = pred.dim(1), area = pred.dim(2) * pred.dim(3);
    const auto pv = pred.data(), gv = gt.data(), vv = map.variance.data();
    std::vector<ErrorSplit> out(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s_ok = 0.0, s_bad = 0.0;
        std::size_t n_ok = 0, n_bad = 0;
        for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t i = 0; i < area; ++i) {
                const std::size_t k = (bi * c + ch) * area + i;
                if (pv[k] == gv[k]) {
                    s_ok += vv[k];
                    ++n_ok;
                } else {
                    s_bad += vv[k];
                    ++n_bad;
                }
            }
        if (n_ok) out[ch].correct = s_ok / static_cast<double>(n_ok);
        if (n_bad) out[ch].incorrect = s_bad / static_cast<double>(n_bad);
    }
    return out;
}

std::optional<double> foreground_uncertainty(const UncertaintyMap& map, const Tensor& pred) {
    if (pred.shape() != map.variance.shape()) throw DimensionError("prediction and uncertainty shapes differ");
    const std::size_t b = pred.dim(0), c = pred.dim(1), area = pred.dim(2) * pred.dim(3);
    const auto pv = pred.data(), vv = map.variance.data();
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t i = 0; i < area; ++i) {
            bool fg = false;
            double sd = 0.0;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t k = (bi * c + ch) * area + i;
                fg = fg || pv[k] != 0.0;
                sd += std::sqrt(vv[k]);
            }
            if (fg) {
                s += sd / static_cast<double>(c);
                ++n;
            }
        }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
}

}  // namespace hansnet
