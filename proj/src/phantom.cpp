#include <algorithm>
#include <cmath>
#include <numbers>

#include "hansnet/data.hpp"
#include "hansnet/rng.hpp"

namespace hansnet {

namespace {

void check_range(const Range& r, const char* what) {
    if (!(r.lo <= r.hi)) throw ConfigError(std::string(what) + " range is inverted");
}

bool overlaps(const Range& a, const Range& b) { return a.lo <= b.hi && b.lo <= a.hi; }

PhantomGeometry draw_geometry(const PhantomSpec& spec, Rng& rng) {
    PhantomGeometry g;
    const double mid_xy = 0.5 * static_cast<double>(spec.size - 1) * spec.spacing_xy;
    const double mid_z = 0.5 * static_cast<double>(spec.depth - 1) * spec.spacing_z;
    g.axes = {rng.uniform(spec.liver_a.lo, spec.liver_a.hi), rng.uniform(spec.liver_b.lo, spec.liver_b.hi),
              rng.uniform(spec.liver_c.lo, spec.liver_c.hi)};
    g.center = {mid_z + rng.uniform(-spec.spacing_z, spec.spacing_z),
                mid_xy + rng.uniform(-spec.center_jitter, spec.center_jitter),
                mid_xy + rng.uniform(-spec.center_jitter, spec.center_jitter)};
    g.angle = rng.uniform(0.0, std::numbers::pi);
    const std::size_t count = spec.tumor_min + rng.below(spec.tumor_max - spec.tumor_min + 1);
    const double a_min = std::min({g.axes[0], g.axes[1], g.axes[2]});
    const double c = std::cos(g.angle), s = std::sin(g.angle);
    for (std::size_t t = 0; t < count; ++t) {
        const double r = rng.uniform(spec.tumor_radius.lo, spec.tumor_radius.hi);
        const double limit = 1.0 - r / a_min;
        // unit-ball sample scaled into the shrunken ellipsoid, so the whole ball stays inside
        double u[3];
        do {
            for (auto& ui : u) ui = rng.uniform(-1.0, 1.0);
        } while (std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) > limit);
        const double lx = u[0] * g.axes[0], ly = u[1] * g.axes[1], lz = u[2] * g.axes[2];
        g.tumors.push_back({{g.center[0] + lz, g.center[1] + s * lx + c * ly, g.center[2] + c * lx - s * ly}, r});
    }
    return g;
}

}  // namespace

void PhantomSpec::validate() const {
    if (size < 8 || depth < 1) throw ConfigError("phantom size must be at least 8x8x1");
    if (!(spacing_xy > 0.0) || !(spacing_z > 0.0)) throw ConfigError("phantom spacing must be positive");
    check_range(liver_a, "liver_a");
    check_range(liver_b, "liver_b");
    check_range(liver_c, "liver_c");
    check_range(tumor_radius, "tumor_radius");
    check_range(hu_background, "hu_background");
    check_range(hu_liver, "hu_liver");
    check_range(hu_tumor, "hu_tumor");
    if (liver_a.lo <= 0.0 || liver_b.lo <= 0.0 || liver_c.lo <= 0.0) throw ConfigError("liver axes must be positive");
    if (tumor_min > tumor_max) throw ConfigError("tumor count range is inverted");
    if (tumor_max > 0) {
        if (tumor_radius.lo <= 0.0) throw ConfigError("tumor radius must be positive");
        if (tumor_radius.hi >= std::min({liver_a.lo, liver_b.lo, liver_c.lo}))
            throw ConfigError("tumor radius can exceed the smallest liver semi-axis; tumors would not fit");
    }
    if (overlaps(hu_background, hu_liver) || overlaps(hu_background, hu_tumor) || overlaps(hu_liver, hu_tumor))
        throw ConfigError("intensity bands must be disjoint");
    if (noise_sigma < 0.0) throw ConfigError("noise sigma must be nonnegative");
}

PhantomGeometry phantom_geometry(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    return draw_geometry(spec, rng);
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const PhantomGeometry g = draw_geometry(spec, rng);
    const std::size_t n = spec.size, d = spec.depth;
    const std::array<float, 3> spacing{static_cast<float>(spec.spacing_z), static_cast<float>(spec.spacing_xy),
                                       static_cast<float>(spec.spacing_xy)};
    Phantom p{make_hvol_f32(d, n, n, spacing), make_hvol_u8(d, n, n, spacing)};

    const double hu_bg = rng.uniform(spec.hu_background.lo, spec.hu_background.hi);
    const double hu_liver = rng.uniform(spec.hu_liver.lo, spec.hu_liver.hi);
    std::vector<double> hu_tumor(g.tumors.size());
    for (auto& h : hu_tumor) h = rng.uniform(spec.hu_tumor.lo, spec.hu_tumor.hi);

    const double c = std::cos(g.angle), s = std::sin(g.angle);
    for (std::size_t z = 0; z < d; ++z)
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                const double pz = static_cast<double>(z) * spec.spacing_z;
                const double py = static_cast<double>(y) * spec.spacing_xy;
                const double px = static_cast<double>(x) * spec.spacing_xy;
                const double dz = pz - g.center[0], dy = py - g.center[1], dx = px - g.center[2];
                const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
                const double e = (lx / g.axes[0]) * (lx / g.axes[0]) + (ly / g.axes[1]) * (ly / g.axes[1]) +
                                 (dz / g.axes[2]) * (dz / g.axes[2]);
                std::uint8_t label = 0;
                double hu = hu_bg;
                if (e <= 1.0) {
                    label = 1;
                    hu = hu_liver;
                    for (std::size_t t = 0; t < g.tumors.size(); ++t) {
                        const auto& b = g.tumors[t];
                        const double tz = pz - b.center[0], ty = py - b.center[1], tx = px - b.center[2];
                        if (tz * tz + ty * ty + tx * tx <= b.radius * b.radius) {
                            label = 2;
                            hu = hu_tumor[t];
                            break;
                        }
                    }
                }
                const std::size_t i = (z * n + y) * n + x;
                p.labels.u8[i] = label;
                p.image.f32[i] = static_cast<float>(hu + rng.normal(0.0, spec.noise_sigma));
            }
    return p;
}

Split split_dataset(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed) {
    if (n == 0) throw ContractError("cannot split an empty dataset");
    for (double f : fractions)
        if (f < 0.0) throw ContractError("split fractions must be nonnegative");
    if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
        throw ContractError("split fractions must sum to 1");
    Rng rng(seed);
    const auto perm = rng.permutation(n);
    const double nd = static_cast<double>(n);
    const auto n_val = static_cast<std::size_t>(std::floor(fractions[1] * nd + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(fractions[2] * nd + 1e-9));
    const std::size_t n_train = n - n_val - n_test;
    Split out;
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                   perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return out;
}

}  // namespace hansnet
