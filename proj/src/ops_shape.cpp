#include <algorithm>
#include <cmath>
#include <limits>

#include "hansnet/ops.hpp"
#include "internal.hpp"

namespace hansnet {

namespace detail {

int normalize_axis(int axis, std::size_t rank) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r)
        throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
    return a;
}

}  // namespace detail

namespace {

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// Shape with reduced axes set to 1, plus the flag list.
Shape kept_shape(const Shape& in, const std::vector<int>& axes, std::vector<bool>& reduced) {
    reduced.assign(in.size(), false);
    for (int a : axes) reduced[static_cast<std::size_t>(detail::normalize_axis(a, in.size()))] = true;
    Shape k = in;
    for (std::size_t i = 0; i < in.size(); ++i)
        if (reduced[i]) k[i] = 1;
    return k;
}

Shape squeeze(const Shape& kept, const std::vector<bool>& reduced) {
    Shape s;
    for (std::size_t i = 0; i < kept.size(); ++i)
        if (!reduced[i]) s.push_back(kept[i]);
    return s;
}

}  // namespace

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
    Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("reshape", out, [x, self]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const Shape& in = x.shape();
    if (perm.size() != in.size()) throw DimensionError("permute: order length does not match rank");
    std::vector<bool> seen(in.size(), false);
    Shape out_shape(in.size());
    const auto in_strides = contiguous_strides(in);
    std::vector<std::size_t> src_strides(in.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= in.size() || seen[perm[i]]) throw DimensionError("permute: invalid axis order");
        seen[perm[i]] = true;
        out_shape[i] = in[perm[i]];
        src_strides[i] = in_strides[perm[i]];
    }
    // flat source index for each destination element
    std::vector<std::size_t> src(x.size());
    const std::vector<std::size_t> zero(in.size(), 0);
    detail::for_each_broadcast(out_shape, src_strides, zero,
                               [&](std::size_t o, std::size_t is, std::size_t) { src[o] = is; });
    Tensor out(out_shape);
    auto od = out.mutable_data();
    const auto xd = x.data();
    for (std::size_t o = 0; o < src.size(); ++o) od[o] = xd[src[o]];
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("permute", out, [x, self, src = std::move(src)]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            for (std::size_t o = 0; o < src.size(); ++o) gx[src[o]] += g[o];
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    const Shape& first = parts.front().shape();
    const auto ax = static_cast<std::size_t>(detail::normalize_axis(axis, first.size()));
    Shape out_shape = first;
    out_shape[ax] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != first.size()) throw DimensionError("concat rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != ax && s[i] != first[i])
                throw DimensionError("concat shape mismatch: " + shape_str(s) + " vs " + shape_str(first));
        out_shape[ax] += s[ax];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= first[i];
    for (std::size_t i = ax + 1; i < first.size(); ++i) inner *= first[i];
    const std::size_t out_row = out_shape[ax] * inner;

    Tensor out(out_shape);
    auto od = out.mutable_data();
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t row = p.dim(static_cast<int>(ax)) * inner;
        const auto pd = p.data();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * row), row, od.begin() +
                        static_cast<std::ptrdiff_t>(o * out_row + off));
        off += row;
    }
    bool any = false;
    for (const auto& p : parts) any = any || detail::should_record({&p});
    if (any) {
        Tensor self = out;
        active_tape()->record("concat", out, [parts, self, offsets, outer, inner, out_row, ax]() mutable {
            const auto g = self.grad();
            for (std::size_t k = 0; k < parts.size(); ++k) {
                if (!parts[k].requires_grad()) continue;
                const std::size_t row = parts[k].dim(static_cast<int>(ax)) * inner;
                auto gp = parts[k].mutable_grad();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < row; ++i) gp[o * row + i] += g[o * out_row + offsets[k] + i];
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x, const std::vector<int>& axes, bool keepdim) {
    std::vector<bool> reduced;
    const Shape kept = kept_shape(x.shape(), axes, reduced);
    Tensor out(keepdim ? kept : squeeze(kept, reduced));
    const auto sx = contiguous_strides(x.shape());
    const auto sk = detail::broadcast_strides(kept, x.shape());
    auto od = out.mutable_data();
    const auto xd = x.data();
    detail::for_each_broadcast(x.shape(), sx, sk, [&](std::size_t, std::size_t i, std::size_t o) { od[o] += xd[i]; });
    detail::check_finite(out, "sum");
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("sum", out, [x, self, sx, sk]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            detail::for_each_broadcast(x.shape(), sx, sk,
                                       [&](std::size_t, std::size_t i, std::size_t o) { gx[i] += g[o]; });
        });
    }
    return out;
}

Tensor mean(const Tensor& x, const std::vector<int>& axes, bool keepdim) {
    std::vector<bool> reduced;
    const Shape kept = kept_shape(x.shape(), axes, reduced);
    const double count = static_cast<double>(x.size()) / static_cast<double>(numel(kept));
    return scale(sum(x, axes, keepdim), 1.0 / count);
}

Tensor max(const Tensor& x, const std::vector<int>& axes, bool keepdim) {
    std::vector<bool> reduced;
    const Shape kept = kept_shape(x.shape(), axes, reduced);
    Tensor out(keepdim ? kept : squeeze(kept, reduced), -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> arg(out.size(), 0);
    const auto sx = contiguous_strides(x.shape());
    const auto sk = detail::broadcast_strides(kept, x.shape());
    auto od = out.mutable_data();
    const auto xd = x.data();
    detail::for_each_broadcast(x.shape(), sx, sk, [&](std::size_t, std::size_t i, std::size_t o) {
        if (xd[i] > od[o]) {
            od[o] = xd[i];
            arg[o] = i;
        }
    });
    detail::check_finite(out, "max");
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("max", out, [x, self, arg = std::move(arg)]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            for (std::size_t o = 0; o < arg.size(); ++o) gx[arg[o]] += g[o];
        });
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    std::vector<int> axes(x.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int>(i);
    return sum(x, axes, false);
}

Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

Tensor softmax(const Tensor& x, int axis) {
    const Shape& s = x.shape();
    const auto ax = static_cast<std::size_t>(detail::normalize_axis(axis, s.size()));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < ax; ++i) outer *= s[i];
    for (std::size_t i = ax + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[ax];
    Tensor out(s);
    auto od = out.mutable_data();
    const auto xd = x.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, xd[base + k * inner]);
            double z = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = std::exp(xd[base + k * inner] - mx);
                od[base + k * inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < n; ++k) od[base + k * inner] /= z;
        }
    detail::check_finite(out, "softmax");
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("softmax", out, [x, self, outer, inner, n]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            const auto y = self.data();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < n; ++k) dot += g[base + k * inner] * y[base + k * inner];
                    for (std::size_t k = 0; k < n; ++k) {
                        const std::size_t i = base + k * inner;
                        gx[i] += y[i] * (g[i] - dot);
                    }
                }
        });
    }
    return out;
}

Tensor maxpool2d(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("maxpool2d expects [B,C,H,W], got " + shape_str(x.shape()));
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t ho = h / 2, wo = w / 2;
    if (ho == 0 || wo == 0) throw DimensionError("maxpool2d input too small: " + shape_str(x.shape()));
    Tensor out({b, c, ho, wo});
    std::vector<std::size_t> arg(out.size());
    auto od = out.mutable_data();
    const auto xd = x.data();
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < b * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j, ++o) {
                std::size_t best = base + (2 * i) * w + 2 * j;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t k = base + (2 * i + di) * w + 2 * j + dj;
                        if (xd[k] > xd[best]) best = k;
                    }
                od[o] = xd[best];
                arg[o] = best;
            }
    }
    if (detail::should_record({&x})) {
        Tensor self = out;
        active_tape()->record("maxpool2d", out, [x, self, arg = std::move(arg)]() mutable {
            auto gx = x.mutable_grad();
            const auto g = self.grad();
            for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += g[k];
        });
    }
    return out;
}

}  // namespace hansnet
