#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>

#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"
#include "internal.hpp"

namespace hansnet {

namespace {

struct AxisSample {
    std::size_t i0, i1;
    double frac;    // weight of i1
    double dscale;  // d(pixel coordinate)/d(normalized coordinate); 0 when clamped or degenerate
};

AxisSample locate(double coord, std::size_t n) {
    if (n == 1) return {0, 0, 0.0, 0.0};
    const bool clamped = coord < -1.0 || coord > 1.0;
    const double c = std::clamp(coord, -1.0, 1.0);
    const double px = (c + 1.0) * 0.5 * static_cast<double>(n - 1);
    auto i0 = static_cast<std::size_t>(std::floor(px));
    i0 = std::min(i0, n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    return {i0, i1, px - static_cast<double>(i0), clamped ? 0.0 : 0.5 * static_cast<double>(n - 1)};
}

}  // namespace

Tensor grid_sample_bilinear(const Tensor& feat, const Tensor& coords) {
    if (feat.rank() != 4) throw DimensionError("grid_sample expects [B,C,H,W] features");
    if (coords.rank() != 3 || coords.dim(2) != 2 || coords.dim(0) != feat.dim(0))
        throw DimensionError("grid_sample expects [B,N,2] coordinates matching batch, got " +
                             shape_str(coords.shape()));
    const std::size_t b = feat.dim(0), c = feat.dim(1), h = feat.dim(2), w = feat.dim(3), n = coords.dim(1);
    Tensor out({b, n, c});
    auto od = out.mutable_data();
    const auto fd = feat.data();
    const auto cd = coords.data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t q = 0; q < n; ++q) {
            const AxisSample sx = locate(cd[(bi * n + q) * 2], w);
            const AxisSample sy = locate(cd[(bi * n + q) * 2 + 1], h);
            const double w00 = (1 - sy.frac) * (1 - sx.frac), w01 = (1 - sy.frac) * sx.frac;
            const double w10 = sy.frac * (1 - sx.frac), w11 = sy.frac * sx.frac;
            double* dst = od.data() + (bi * n + q) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* plane = fd.data() + (bi * c + ch) * h * w;
                dst[ch] = w00 * plane[sy.i0 * w + sx.i0] + w01 * plane[sy.i0 * w + sx.i1] +
                          w10 * plane[sy.i1 * w + sx.i0] + w11 * plane[sy.i1 * w + sx.i1];
            }
        }
    detail::check_finite(out, "grid_sample_bilinear");
    if (detail::should_record({&feat, &coords})) {
        Tensor self = out;
        active_tape()->record("grid_sample_bilinear", out, [feat, coords, self, b, c, h, w, n]() mutable {
            const auto g = self.grad();
            const auto fd = feat.data();
            const auto cd = coords.data();
            const bool gf = feat.requires_grad(), gc = coords.requires_grad();
            std::span<double> dfeat, dcoord;
            if (gf) dfeat = feat.mutable_grad();
            if (gc) dcoord = coords.mutable_grad();
            for (std::size_t bi = 0; bi < b; ++bi)
                for (std::size_t q = 0; q < n; ++q) {
                    const AxisSample sx = locate(cd[(bi * n + q) * 2], w);
                    const AxisSample sy = locate(cd[(bi * n + q) * 2 + 1], h);
                    const double w00 = (1 - sy.frac) * (1 - sx.frac), w01 = (1 - sy.frac) * sx.frac;
                    const double w10 = sy.frac * (1 - sx.frac), w11 = sy.frac * sx.frac;
                    const double* gq = g.data() + (bi * n + q) * c;
                    double dx = 0.0, dy = 0.0;
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t base = (bi * c + ch) * h * w;
                        const double gv = gq[ch];
                        if (gf) {
                            dfeat[base + sy.i0 * w + sx.i0] += w00 * gv;
                            dfeat[base + sy.i0 * w + sx.i1] += w01 * gv;
                            dfeat[base + sy.i1 * w + sx.i0] += w10 * gv;
                            dfeat[base + sy.i1 * w + sx.i1] += w11 * gv;
                        }
                        if (gc) {
                            const double v00 = fd[base + sy.i0 * w + sx.i0], v01 = fd[base + sy.i0 * w + sx.i1];
                            const double v10 = fd[base + sy.i1 * w + sx.i0], v11 = fd[base + sy.i1 * w + sx.i1];
                            dx += gv * ((1 - sy.frac) * (v01 - v00) + sy.frac * (v11 - v10));
                            dy += gv * ((1 - sx.frac) * (v10 - v00) + sx.frac * (v11 - v01));
                        }
                    }
                    if (gc) {
                        dcoord[(bi * n + q) * 2] += dx * sx.dscale;
                        dcoord[(bi * n + q) * 2 + 1] += dy * sy.dscale;
                    }
                }
        });
    }
    return out;
}

Tensor dropout2d(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout probability must be in [0, 1)");
    if (x.rank() != 4) throw DimensionError("dropout2d expects [B,C,H,W], got " + shape_str(x.shape()));
    if (p == 0.0) return x;
    const std::size_t planes = x.dim(0) * x.dim(1);
    const std::size_t area = x.dim(2) * x.dim(3);
    std::vector<double> mask(planes);
    const double keep_scale = 1.0 / (1.0 - p);
    for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
    Tensor out(x.shape());
    auto od = out.mutable_data();
    const auto xd = x.data();
    for (std::size_t pl = 0; pl < planes; ++pl)
        for (std::size_t i = 0; i < area; ++i) od[pl * area + i] = xd[pl * area + i] * mask[pl];
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("dropout2d", out, [x, self, mask = std::move(mask), area]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            for (std::size_t pl = 0; pl < mask.size(); ++pl)
                for (std::size_t i = 0; i < area; ++i) gx[pl * area + i] += g[pl * area + i] * mask[pl];
        });
    }
    return out;
}

Tensor poincare_expmap(const Tensor& v, const Tensor& kappa, double eps) {
    if (kappa.size() != 1) throw DimensionError("curvature must be a single value");
    const double k = kappa.item();
    if (!(k < 0.0)) throw ContractError("curvature must be strictly negative");
    if (!(eps > 0.0)) throw ContractError("stability constant must be positive");
    if (v.rank() < 1) throw DimensionError("expmap needs at least one axis");
    const double s = std::sqrt(-k);
    const std::size_t c = v.dim(-1);
    const std::size_t count = v.size() / c;
    Tensor out(v.shape());
    auto od = out.mutable_data();
    const auto vd = v.data();
    for (std::size_t i = 0; i < count; ++i) {
        const double* vi = vd.data() + i * c;
        double r2 = 0.0;
        for (std::size_t j = 0; j < c; ++j) r2 += vi[j] * vi[j];
        const double r = std::sqrt(r2);
        const double f = std::tanh(s * r) / (s * r + eps);
        for (std::size_t j = 0; j < c; ++j) od[i * c + j] = f * vi[j];
    }
    detail::check_finite(out, "poincare_expmap");
    if (detail::should_record({&v, &kappa})) {
        Tensor self = out;
        active_tape()->record("poincare_expmap", out, [v, kappa, self, s, eps, c, count]() mutable {
            const auto g = self.grad();
            const auto vd = v.data();
            const bool gv = v.requires_grad(), gk = kappa.requires_grad();
            std::span<double> dv;
            if (gv) dv = v.mutable_grad();
            double dkappa = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
                const double* vi = vd.data() + i * c;
                const double* gi = g.data() + i * c;
                double r2 = 0.0, vg = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    r2 += vi[j] * vi[j];
                    vg += vi[j] * gi[j];
                }
                const double r = std::sqrt(r2);
                const double t = std::tanh(s * r);
                const double den = s * r + eps;
                const double f = t / den;
                const double sech2 = 1.0 - t * t;
                if (gv) {
                    // d(f(r) v) = f dv + f'(r) (v.dv) v / r; the second term vanishes at r = 0
                    const double fr = r > 0.0 ? s * (sech2 * den - t) / (den * den) : 0.0;
                    const double coef = r > 0.0 ? fr * vg / r : 0.0;
                    for (std::size_t j = 0; j < c; ++j) dv[i * c + j] += f * gi[j] + coef * vi[j];
                }
                if (gk) {
                    const double fs = r * (sech2 * den - t) / (den * den);
                    dkappa += vg * fs * (-0.5 / s);
                }
            }
            if (gk) kappa.mutable_grad()[0] += dkappa;
        });
    }
    return out;
}

Tensor positional_encode(const Tensor& p, std::size_t levels) {
    if (levels < 1) throw ContractError("positional encoding needs at least one level");
    if (p.rank() < 1 || p.dim(-1) != 2) throw DimensionError("positional encoding expects [...,2] coordinates");
    const std::size_t count = p.size() / 2;
    const std::size_t width = 4 * levels;
    Shape out_shape = p.shape();
    out_shape.back() = width;
    Tensor out(out_shape);
    auto od = out.mutable_data();
    const auto pd = p.data();
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            const double x = pd[i * 2 + j];
            assert(x >= -1.0 && x <= 1.0 && "positional_encode expects coordinates in [-1,1]");
            for (std::size_t l = 0; l < levels; ++l) {
                const double w = std::ldexp(std::numbers::pi, static_cast<int>(l));
                od[i * width + j * 2 * levels + 2 * l] = std::sin(w * x);
                od[i * width + j * 2 * levels + 2 * l + 1] = std::cos(w * x);
            }
        }
    if (detail::should_record({&p})) {
        Tensor self = out;
        active_tape()->record("positional_encode", out, [p, self, count, levels, width]() mutable {
            const auto g = self.grad();
            const auto pd = p.data();
            auto dp = p.mutable_grad();
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < 2; ++j) {
                    const double x = pd[i * 2 + j];
                    double acc = 0.0;
                    for (std::size_t l = 0; l < levels; ++l) {
                        const double w = std::ldexp(std::numbers::pi, static_cast<int>(l));
                        const std::size_t k = i * width + j * 2 * levels + 2 * l;
                        acc += w * (g[k] * std::cos(w * x) - g[k + 1] * std::sin(w * x));
                    }
                    dp[i * 2 + j] += acc;
                }
        });
    }
    return out;
}

Tensor upsample_bilinear(const Tensor& x, std::size_t h, std::size_t w) {
    if (x.rank() != 4) throw DimensionError("upsample expects [B,C,H,W]");
    const std::size_t b = x.dim(0), c = x.dim(1);
    Tensor grid({b, h * w, 2});
    auto g = grid.mutable_data();
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                double* dst = g.data() + ((bi * h + i) * w + j) * 2;
                dst[0] = w == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(w - 1);
                dst[1] = h == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(h - 1);
            }
    Tensor sampled = grid_sample_bilinear(x, grid);  // [B, HW, C]
    return reshape(permute(sampled, {0, 2, 1}), {b, c, h, w});
}

}  // namespace hansnet
