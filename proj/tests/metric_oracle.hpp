#pragma once

// Brute-force reference implementations of the overlap and surface metrics, test-only.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "hansnet/metrics.hpp"
#include "hansnet/rng.hpp"

namespace hansnet::testing {

inline BinaryMask random_mask(const std::vector<std::size_t>& dims, const std::vector<double>& spacing, double density,
                       Rng& rng) {
    BinaryMask m(dims, spacing);
    for (auto& v : m.grid) v = rng.uniform() < density ? 1 : 0;
    if (m.empty()) m.grid[rng.below(m.size())] = 1;
    return m;
}

// all-pairs oracle, written against the definition only
struct Oracle {
    std::size_t inter = 0, uni = 0, p = 0, g = 0;
    std::optional<double> assd;
};

inline std::vector<std::array<long, 3>> oracle_surface(const BinaryMask& m) {
    const long d = static_cast<long>(m.dims[0]), h = static_cast<long>(m.dims[1]), w = static_cast<long>(m.dims[2]);
    auto at = [&](long z, long y, long x) {
        if (z < 0 || y < 0 || x < 0 || z >= d || y >= h || x >= w) return false;
        return m.grid[static_cast<std::size_t>((z * h + y) * w + x)] != 0;
    };
    std::vector<std::array<long, 3>> out;
    for (long z = 0; z < d; ++z)
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x) {
                if (!at(z, y, x)) continue;
                const bool inner = at(z - 1, y, x) && at(z + 1, y, x) && at(z, y - 1, x) && at(z, y + 1, x) &&
                                   at(z, y, x - 1) && at(z, y, x + 1);
                if (!inner) out.push_back({z, y, x});
            }
    return out;
}

inline Oracle oracle(const BinaryMask& a, const BinaryMask& b) {
    Oracle o;
    for (std::size_t i = 0; i < a.size(); ++i) {
        o.inter += a.grid[i] && b.grid[i];
        o.uni += a.grid[i] || b.grid[i];
        o.p += a.grid[i];
        o.g += b.grid[i];
    }
    if (o.p == 0 || o.g == 0) return o;
    const auto sa = oracle_surface(a), sb = oracle_surface(b);
    auto nearest = [&](const std::array<long, 3>& v, const std::vector<std::array<long, 3>>& set) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& u : set) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double diff = static_cast<double>(v[k] - u[k]) * a.spacing[k];
                s += diff * diff;
            }
            best = std::min(best, std::sqrt(s));
        }
        return best;
    };
    double total = 0.0;
    for (const auto& v : sa) total += nearest(v, sb);
    for (const auto& v : sb) total += nearest(v, sa);
    o.assd = total / static_cast<double>(sa.size() + sb.size());
    return o;
}

}  // namespace hansnet::testing
