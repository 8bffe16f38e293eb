#include <array>
#include <Eigen/Core>

#include "hansnet/ops.hpp"
#include "internal.hpp"

namespace hansnet {

using detail::ConstMatMap;
using detail::MatMap;
using detail::RowMat;

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2)
        throw DimensionError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    const std::size_t m = a.dim(-2), n = a.dim(-1), n2 = b.dim(-2), p = b.dim(-1);
    if (n != n2)
        throw DimensionError("matmul inner dimensions differ: " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    const Shape batch = broadcast_shape(a_batch, b_batch);
    Shape out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(p);
    Tensor out(out_shape);

    // (out_index, a_index, b_index) triples, in units of whole matrices
    std::vector<std::array<std::size_t, 3>> pairs;
    const bool flat_rhs = b_batch.empty();
    if (flat_rhs) {
        // [..., M, N] x [N, P] is one GEMM over the stacked rows of a
        const std::size_t rows = a.size() / n;
        MatMap(out.mutable_data().data(), rows, p).noalias() =
            ConstMatMap(a.data().data(), rows, n) * ConstMatMap(b.data().data(), n, p);
    } else {
        const auto sa = detail::broadcast_strides(a_batch, batch);
        const auto sb = detail::broadcast_strides(b_batch, batch);
        detail::for_each_broadcast(batch, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
            pairs.push_back({o, ia, ib});
        });
        auto od = out.mutable_data();
        for (const auto& [o, ia, ib] : pairs) {
            MatMap(od.data() + o * m * p, m, p).noalias() =
                ConstMatMap(a.data().data() + ia * m * n, m, n) * ConstMatMap(b.data().data() + ib * n * p, n, p);
        }
    }
    detail::check_finite(out, "matmul");

    if (detail::should_record({&a, &b})) {
        Tensor self = out;
        active_tape()->record("matmul", out, [a, b, self, pairs, flat_rhs, m, n, p]() mutable {
            const double* g = self.grad().data();
            if (flat_rhs) {
                const std::size_t rows = a.size() / n;
                ConstMatMap gm(g, rows, p);
                if (a.requires_grad())
                    MatMap(a.mutable_grad().data(), rows, n).noalias() +=
                        gm * ConstMatMap(b.data().data(), n, p).transpose();
                if (b.requires_grad())
                    MatMap(b.mutable_grad().data(), n, p).noalias() +=
                        ConstMatMap(a.data().data(), rows, n).transpose() * gm;
                return;
            }
            for (const auto& [o, ia, ib] : pairs) {
                ConstMatMap gm(g + o * m * p, m, p);
                if (a.requires_grad())
                    MatMap(a.mutable_grad().data() + ia * m * n, m, n).noalias() +=
                        gm * ConstMatMap(b.data().data() + ib * n * p, n, p).transpose();
                if (b.requires_grad())
                    MatMap(b.mutable_grad().data() + ib * n * p, n, p).noalias() +=
                        ConstMatMap(a.data().data() + ia * m * n, m, n).transpose() * gm;
            }
        });
    }
    return out;
}

namespace {

struct ConvGeometry {
    std::size_t batch, cin, h, w, cout, k, stride, pad, ho, wo;
    std::size_t patch() const { return cin * k * k; }
    std::size_t out_pixels() const { return ho * wo; }
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

// col[(c*K + ki)*K + kj, oy*Wo + ox] = x[c, oy*s - p + ki, ox*s - p + kj] (zero outside)
void im2col(const double* x, const ConvGeometry& g, double* col) {
    const std::size_t np = g.out_pixels();
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ki = 0; ki < g.k; ++ki)
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                double* row = col + ((c * g.k + ki) * g.k + kj) * np;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    double* dst = row + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(dst, dst + g.wo, 0.0);
                        continue;
                    }
                    const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0
                                                                                     : src[static_cast<std::size_t>(ix)];
                    }
                }
            }
}

void col2im_add(const double* col, const ConvGeometry& g, double* dx) {
    const std::size_t np = g.out_pixels();
    for (std::size_t c = 0; c < g.cin; ++c)
        for (std::size_t ki = 0; ki < g.k; ++ki)
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                const double* row = col + ((c * g.k + ki) * g.k + kj) * np;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                              static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const double* src = row + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    if (input.rank() != 4 || kernel.rank() != 4)
        throw DimensionError("conv2d expects [B,C,H,W] input and [Cout,Cin,K,K] kernel, got " +
                             shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
    ConvGeometry g{};
    g.batch = input.dim(0);
    g.cin = input.dim(1);
    g.h = input.dim(2);
    g.w = input.dim(3);
    g.cout = kernel.dim(0);
    g.k = kernel.dim(2);
    g.stride = stride;
    g.pad = padding;
    if (kernel.dim(1) != g.cin)
        throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) + ", kernel " +
                             shape_str(kernel.shape()));
    if (kernel.dim(3) != g.k) throw DimensionError("conv2d kernel must be square: " + shape_str(kernel.shape()));
    if (stride < 1) throw ContractError("conv2d stride must be >= 1");
    if (g.h + 2 * padding < g.k || g.w + 2 * padding < g.k)
        throw DimensionError("conv2d kernel larger than padded input");
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout))
        throw DimensionError("conv2d bias must be [Cout], got " + shape_str(bias.shape()));
    g.ho = (g.h + 2 * padding - g.k) / stride + 1;
    g.wo = (g.w + 2 * padding - g.k) / stride + 1;

    Tensor out({g.batch, g.cout, g.ho, g.wo});
    const std::size_t np = g.out_pixels();
    ConstMatMap wmat(kernel.data().data(), g.cout, g.patch());
    std::vector<double> col(g.pointwise() ? 0 : g.patch() * np);
    auto od = out.mutable_data();
    for (std::size_t b = 0; b < g.batch; ++b) {
        const double* xb = input.data().data() + b * g.cin * g.h * g.w;
        MatMap ob(od.data() + b * g.cout * np, g.cout, np);
        if (g.pointwise()) {
            ob.noalias() = wmat * ConstMatMap(xb, g.cin, np);
        } else {
            im2col(xb, g, col.data());
            ob.noalias() = wmat * ConstMatMap(col.data(), g.patch(), np);
        }
        if (bias.defined()) ob.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.data().data(), g.cout);
    }
    detail::check_finite(out, "conv2d");

    if (detail::should_record({&input, &kernel, &bias})) {
        Tensor self = out;
        active_tape()->record("conv2d", out, [input, kernel, bias, self, g]() mutable {
            const std::size_t np = g.out_pixels();
            const double* gd = self.grad().data();
            const bool gx = input.requires_grad(), gw = kernel.requires_grad();
            const bool gb = bias.defined() && bias.requires_grad();
            ConstMatMap wmat(kernel.data().data(), g.cout, g.patch());
            std::vector<double> col(g.pointwise() ? 0 : g.patch() * np);
            for (std::size_t b = 0; b < g.batch; ++b) {
                ConstMatMap gb_mat(gd + b * g.cout * np, g.cout, np);
                const double* xb = input.data().data() + b * g.cin * g.h * g.w;
                if (gw) {
                    MatMap dw(kernel.mutable_grad().data(), g.cout, g.patch());
                    if (g.pointwise()) {
                        dw.noalias() += gb_mat * ConstMatMap(xb, g.cin, np).transpose();
                    } else {
                        im2col(xb, g, col.data());
                        dw.noalias() += gb_mat * ConstMatMap(col.data(), g.patch(), np).transpose();
                    }
                }
                if (gx) {
                    double* dxb = input.mutable_grad().data() + b * g.cin * g.h * g.w;
                    if (g.pointwise()) {
                        MatMap(dxb, g.cin, np).noalias() += wmat.transpose() * gb_mat;
                    } else {
                        MatMap(col.data(), g.patch(), np).noalias() = wmat.transpose() * gb_mat;
                        col2im_add(col.data(), g, dxb);
                    }
                }
                if (gb) {
                    Eigen::Map<Eigen::VectorXd>(bias.mutable_grad().data(), g.cout) += gb_mat.rowwise().sum();
                }
            }
        });
    }
    return out;
}

}  // namespace hansnet
