#include "hansnet/plasticity.hpp"

#include "hansnet/init.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

Tensor PlasticityState::activity_diag(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != channels())
        throw DimensionError("plasticity expects [B," + std::to_string(channels()) + ",H,W], got " +
                             shape_str(x.shape()));
    const std::size_t b = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
    const auto xd = x.data();
    Tensor d({c});
    auto dd = d.mutable_data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t ch = 0; ch < c; ++ch) {
            double a = 0.0;
            for (std::size_t i = 0; i < area; ++i) a += xd[(bi * c + ch) * area + i];
            a /= static_cast<double>(area);
            dd[ch] += a * a;
        }
    for (auto& v : dd) v /= static_cast<double>(b);
    return d;
}

void PlasticityState::update(const Tensor& x) {
    if (frozen) throw ContractError("plasticity trace update while frozen");
    if (alpha < 0.0) throw ContractError("plasticity rate must be nonnegative");
    const Tensor d = activity_diag(x);
    auto e = eta.mutable_data();
    const auto dd = d.data();
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = ema ? e[i] + alpha * (dd[i] - e[i]) : alpha * dd[i];
    detail::check_finite(eta, "plasticity_update");
}

Tensor PlasticityState::forward(const Tensor& x) const {
    const std::size_t c = channels();
    if (x.rank() != 4 || x.dim(1) != c)
        throw DimensionError("plasticity expects [B," + std::to_string(c) + ",H,W], got " + shape_str(x.shape()));
    Tensor trace = eta.detach();
    Tensor gain = reshape(mul(omega, add_scalar(trace, 1.0)), {1, c, 1, 1});
    Tensor mixed = conv2d(mul(x, gain), reshape(T, {c, c, 1, 1}));
    return conv2d(mixed, W, {}, 1, W.dim(2) / 2);
}

ParamList PlasticityState::params(const std::string& prefix) const {
    return {{prefix + ".omega", omega}, {prefix + ".T", T}, {prefix + ".W", W}};
}

ParamList PlasticityState::state(const std::string& prefix) const {
    return {{prefix + ".eta", eta}, {prefix + ".omega", omega}, {prefix + ".T", T}, {prefix + ".W", W}};
}

PlasticityState plasticity_init(std::size_t c, std::size_t cout, std::size_t k, double alpha, bool ema,
                                std::uint64_t seed, double t_noise) {
    if (k % 2 == 0) throw ContractError("plasticity conv kernel size must be odd");
    if (alpha < 0.0) throw ConfigError("plasticity rate must be nonnegative");
    Rng rng(seed);
    PlasticityState s;
    s.eta = Tensor::zeros({c});
    s.omega = Tensor::ones({c});
    s.T = near_identity(c, t_noise, rng);
    if (cout == c) {
        s.W = Tensor({cout, c, k, k});
        auto w = s.W.mutable_data();
        for (auto& v : w) v = rng.normal(0.0, t_noise);
        for (std::size_t o = 0; o < c; ++o) w[((o * c + o) * k + k / 2) * k + k / 2] += 1.0;
    } else {
        s.W = fan_in_uniform({cout, c, k, k}, c * k * k, rng);
    }
    s.alpha = alpha;
    s.ema = ema;
    return s;
}

}  // namespace hansnet
