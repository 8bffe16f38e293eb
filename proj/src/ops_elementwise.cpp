#include <algorithm>
#include <cmath>

#include "hansnet/ops.hpp"
#include "internal.hpp"

namespace hansnet {

namespace {

using detail::broadcast_strides;
using detail::for_each_broadcast;

// Binary op: fwd(x, y) -> z; dx(x, y, z) and dy(x, y, z) are local partials.
template <class Fwd, class Dx, class Dy>
Tensor binary(const Tensor& a, const Tensor& b, std::string_view name, Fwd fwd, Dx dx, Dy dy) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    Tensor out(out_shape);
    auto o = out.mutable_data();
    const auto av = a.data();
    const auto bv = b.data();
    const bool same = a.shape() == b.shape();
    std::vector<std::size_t> sa, sb;
    if (same) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i], bv[i]);
    } else {
        sa = broadcast_strides(a.shape(), out_shape);
        sb = broadcast_strides(b.shape(), out_shape);
        for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
            o[i] = fwd(av[ia], bv[ib]);
        });
    }
    detail::check_finite(out, name);
    if (detail::should_record({&a, &b})) {
        Tensor self = out;
        active_tape()->record(name, out, [a, b, self, same, sa, sb, out_shape, dx, dy]() mutable {
            const auto g = self.grad();
            const auto z = self.data();
            const auto av = a.data();
            const auto bv = b.data();
            const bool ga = a.requires_grad(), gb = b.requires_grad();
            std::span<double> gav, gbv;
            if (ga) gav = a.mutable_grad();
            if (gb) gbv = b.mutable_grad();
            if (same) {
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (ga) gav[i] += g[i] * dx(av[i], bv[i], z[i]);
                    if (gb) gbv[i] += g[i] * dy(av[i], bv[i], z[i]);
                }
            } else {
                for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                    if (ga) gav[ia] += g[i] * dx(av[ia], bv[ib], z[i]);
                    if (gb) gbv[ib] += g[i] * dy(av[ia], bv[ib], z[i]);
                });
            }
        });
    }
    return out;
}

// Unary op: fwd(x) -> y; d(x, y) is dy/dx.
template <class Fwd, class D>
Tensor unary(const Tensor& a, std::string_view name, Fwd fwd, D d) {
    Tensor out(a.shape());
    auto o = out.mutable_data();
    const auto av = a.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i]);
    detail::check_finite(out, name);
    if (detail::should_record({&a})) {
        Tensor self = out;
        active_tape()->record(name, out, [a, self, d]() mutable {
            const auto g = self.grad();
            const auto y = self.data();
            const auto x = a.data();
            auto ga = a.mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * d(x[i], y[i]);
        });
    }
    return out;
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double v : b.data())
        if (std::abs(v) < 1e-300) throw NumericalError("div: divisor magnitude below 1e-300");
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double z) { return -z / y; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor tanh(const Tensor& a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
    return unary(
        a, "softplus", [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
        [](double x, double) { return stable_sigmoid(x); });
}

}  // namespace hansnet
