#pragma once

#include <Eigen/Core>
#include <vector>

#include "hansnet/tensor.hpp"

namespace hansnet::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Strides of `in` laid over `out` (right-aligned); broadcast axes get stride 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    const std::size_t r = out.size();
    const std::size_t off = r - in.size();
    std::vector<std::size_t> strides(r, 0);
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        strides[off + i] = in[i] == 1 && out[off + i] != 1 ? 0 : s;
        s *= in[i];
    }
    return strides;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
    const std::size_t r = out.size();
    const std::size_t n = numel(out);
    if (r == 0) {
        f(0, 0, 0);
        return;
    }
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t o = 0; o < n; ++o) {
        f(o, ia, ib);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

int normalize_axis(int axis, std::size_t rank);

}  // namespace hansnet::detail
