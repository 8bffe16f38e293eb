#include <algorithm>
#include <cmath>
#include <limits>

#include "doctest.h"
#include "hansnet/data.hpp"
#include "hansnet/metrics.hpp"
#include "hansnet/rng.hpp"
#include "json.hpp"
#include "metric_oracle.hpp"

using namespace hansnet;
using hansnet::testing::oracle;
using hansnet::testing::Oracle;
using hansnet::testing::random_mask;

namespace {

BinaryMask mask3(std::size_t d, std::size_t h, std::size_t w, std::vector<double> spacing = {1.0, 1.0, 1.0}) {
    return BinaryMask({d, h, w}, std::move(spacing));
}

void set(BinaryMask& m, std::size_t z, std::size_t y, std::size_t x) {
    m.grid[(z * m.dims[1] + y) * m.dims[2] + x] = 1;
}

}  // namespace

TEST_CASE("dice and IoU examples") {
    BinaryMask p = mask3(1, 4, 4), g = mask3(1, 4, 4);
    for (std::size_t x = 0; x < 4; ++x) set(p, 0, 1, x);
    set(g, 0, 1, 0);
    set(g, 0, 1, 1);
    CHECK(dice(p, g) == doctest::Approx(2.0 * 2.0 / 6.0).epsilon(1e-15));
    const auto iv = iou_voe(p, g);
    CHECK(iv.iou == 0.5);
    CHECK(iv.voe == 0.5);
    CHECK(dice(p, p) == 1.0);
    CHECK(iou_voe(p, p).iou == 1.0);
    CHECK(iou_voe(p, p).voe == 0.0);
    BinaryMask q = mask3(1, 4, 4);
    set(q, 0, 3, 3);
    CHECK(dice(p, q) == 0.0);
    BinaryMask e = mask3(1, 4, 4);
    CHECK(dice(e, e) == 1.0);
    CHECK(iou_voe(e, e).iou == 1.0);
    CHECK_THROWS_AS(dice(p, mask3(1, 4, 5)), DimensionError);
}

TEST_CASE("ASSD examples") {
    BinaryMask a = mask3(1, 1, 8), b = mask3(1, 1, 8);
    set(a, 0, 0, 1);
    set(b, 0, 0, 4);
    CHECK(*assd(a, b) == 3.0);
    a.spacing[2] = b.spacing[2] = 0.5;
    CHECK(*assd(a, b) == 1.5);
    CHECK(*assd(a, a) == 0.0);
    std::string why;
    CHECK_FALSE(assd(a, mask3(1, 1, 8, {1.0, 1.0, 0.5}), &why).has_value());
    CHECK_FALSE(why.empty());
}

TEST_CASE("surface voxels treat the array border as background") {
    BinaryMask m = mask3(3, 3, 3);
    std::fill(m.grid.begin(), m.grid.end(), 1);
    CHECK(surface_voxels(m).size() == 26);
    BinaryMask big = mask3(5, 5, 5);
    for (std::size_t z = 1; z < 4; ++z)
        for (std::size_t y = 1; y < 4; ++y)
            for (std::size_t x = 1; x < 4; ++x) set(big, z, y, x);
    CHECK(surface_voxels(big).size() == 26);
}

TEST_CASE("metrics agree with brute-force oracles on random masks") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::vector<std::size_t> dims = {1 + rng.below(4), 2 + rng.below(15), 2 + rng.below(15)};
        const std::vector<double> spacing = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        const double density = rng.uniform(0.05, 0.7);
        BinaryMask a = random_mask(dims, spacing, density, rng);
        BinaryMask b = random_mask(dims, spacing, rng.uniform(0.05, 0.7), rng);
        const Oracle o = oracle(a, b);
        const double d = dice(a, b);
        const auto iv = iou_voe(a, b);
        CHECK(std::abs(d - 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.p + o.g)) < 1e-9);
        CHECK(std::abs(iv.iou - static_cast<double>(o.inter) / static_cast<double>(o.uni)) < 1e-9);
        CHECK(std::abs(iv.voe - (1.0 - iv.iou)) < 1e-12);
        CHECK(std::abs(d - 2.0 * iv.iou / (1.0 + iv.iou)) < 1e-12);
        const auto fast = assd(a, b);
        REQUIRE(fast.has_value());
        CHECK(std::abs(*fast - *o.assd) < 1e-9);
        CHECK(*fast == *assd(b, a));
        CHECK(dice(b, a) == d);
        CHECK(iou_voe(b, a).iou == iv.iou);
    }
}

TEST_CASE("distance transform matches brute force") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<std::size_t> dims = {1 + rng.below(4), 1 + rng.below(9), 1 + rng.below(9)};
        const std::vector<double> spacing = {rng.uniform(0.5, 3.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
        const std::size_t n = dims[0] * dims[1] * dims[2];
        std::vector<std::size_t> features;
        for (std::size_t i = 0; i < n; ++i)
            if (rng.uniform() < 0.1) features.push_back(i);
        if (features.empty()) features.push_back(n - 1);
        const auto dt = squared_distance_transform(dims, spacing, features);
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t f : features) {
                const double dz = (static_cast<double>(i / (dims[1] * dims[2])) -
                                   static_cast<double>(f / (dims[1] * dims[2]))) * spacing[0];
                const double dy = (static_cast<double>(i / dims[2] % dims[1]) -
                                   static_cast<double>(f / dims[2] % dims[1])) * spacing[1];
                const double dx = (static_cast<double>(i % dims[2]) - static_cast<double>(f % dims[2])) * spacing[2];
                best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            CHECK(std::abs(dt[i] - best) < 1e-9);
        }
    }
}

TEST_CASE("metrics are invariant to translating both masks") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<double> spacing = {2.5, 1.0, 1.5};
        BinaryMask a = mask3(4, 16, 16, spacing), b = mask3(4, 16, 16, spacing);
        BinaryMask as = a, bs = b;
        const std::size_t sy = 1 + rng.below(5), sx = 1 + rng.below(5);
        for (std::size_t z = 0; z < 4; ++z)
            for (std::size_t y = 1; y < 9; ++y)
                for (std::size_t x = 1; x < 9; ++x) {
                    if (rng.uniform() < 0.5) {
                        set(a, z, y, x);
                        set(as, z, y + sy, x + sx);
                    }
                    if (rng.uniform() < 0.5) {
                        set(b, z, y, x);
                        set(bs, z, y + sy, x + sx);
                    }
                }
        CHECK(dice(a, b) == dice(as, bs));
        CHECK(iou_voe(a, b).iou == iou_voe(as, bs).iou);
        CHECK(std::abs(*assd(a, b) - *assd(as, bs)) < 1e-12);
    }
}

TEST_CASE("per-slice ASSD pools 2D surfaces") {
    BinaryMask a = mask3(2, 1, 8, {5.0, 1.0, 1.0}), b = mask3(2, 1, 8, {5.0, 1.0, 1.0});
    set(a, 0, 0, 1);
    set(b, 0, 0, 3);
    set(a, 1, 0, 0);
    set(b, 1, 0, 6);
    CHECK(*assd_per_slice(a, b) == doctest::Approx((2.0 * 2 + 6.0 * 2) / 4.0));
    BinaryMask c = mask3(2, 1, 8, {5.0, 1.0, 1.0});
    set(c, 1, 0, 2);
    BinaryMask d = mask3(2, 1, 8, {5.0, 1.0, 1.0});
    set(d, 0, 0, 2);
    CHECK_FALSE(assd_per_slice(c, d).has_value());
    CHECK(*assd(c, d) == 5.0);
}

TEST_CASE("rank correlation examples") {
    const auto r = average_ranks({10.0, 20.0, 20.0, 5.0});
    CHECK(r == std::vector<double>{2.0, 3.5, 3.5, 1.0});
    CHECK(*spearman({1, 2, 3}, {3, 2, 1}) == -1.0);
    CHECK(*pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_FALSE(pearson({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK_FALSE(spearman({1}, {1}).has_value());
}

TEST_CASE("volume statistics fixtures") {
    Rng rng(20);
    std::vector<double> gt(20);
    for (auto& v : gt) v = rng.uniform(2.0e5, 2.0e6);
    const VolumeStats same = volume_stats(gt, gt);
    CHECK(*same.pearson == 1.0);
    CHECK(*same.spearman == 1.0);
    CHECK(same.mae_ml == 0.0);
    CHECK(*same.rvd_pct == 0.0);

    std::vector<double> scaled(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) scaled[i] = 1.02 * gt[i];
    const VolumeStats s = volume_stats(scaled, gt);
    CHECK(std::abs(*s.pearson - 1.0) < 1e-12);
    CHECK(*s.spearman == 1.0);
    CHECK(std::abs(*s.rvd_pct - 2.0) < 1e-9);

    std::vector<double> doubled(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) doubled[i] = 2.0 * gt[i];
    const VolumeStats d = volume_stats(doubled, gt);
    CHECK(std::abs(*d.rvd_pct - 100.0) < 1e-9);
    CHECK(*d.spearman == 1.0);

    const VolumeStats mae = volume_stats({1000.0, 3000.0}, {2000.0, 2000.0});
    CHECK(mae.mae_ml == 1.0);
    CHECK_FALSE(mae.pearson.has_value());
    CHECK_FALSE(mae.diagnostics.empty());
    CHECK_THROWS(volume_stats({1.0, 2.0}, {1.0}));
}

TEST_CASE("class masks and the report") {
    Hvol gt = make_hvol_u8(2, 4, 4, {2.5f, 2.0f, 2.0f});
    Hvol pred = make_hvol_u8(2, 4, 4, {2.5f, 2.0f, 2.0f});
    for (std::size_t i = 0; i < 8; ++i) gt.u8[i] = 1;
    gt.u8[5] = 2;
    for (std::size_t i = 0; i < 6; ++i) pred.u8[i] = 1;
    CHECK(class_mask(gt, 0).count() == 8);
    CHECK(class_mask(gt, 1).count() == 1);
    CHECK(class_mask(gt, 0).spacing == std::vector<double>{2.5, 2.0, 2.0});

    const MetricsReport rep = build_report({{"case", &pred, &gt}});
    CHECK(rep.cases.size() == 1);
    CHECK(rep.cases[0].cls[0].dice == doctest::Approx(12.0 / 14.0));
    CHECK(rep.cases[0].cls[1].dice == 0.0);
    CHECK_FALSE(rep.cases[0].cls[1].assd_mm.has_value());
    CHECK(rep.mean[1].assd_absent == 1);
    CHECK(rep.cases[0].gt_ml[0] == doctest::Approx(8 * 10.0 / 1000.0));
    const auto j = nlohmann::json::parse(rep.to_json());
    for (const char* key : {"cases", "mean", "volumes", "assd_mode"}) CHECK(j.contains(key));
    CHECK(rep.to_table().find("Liver") != std::string::npos);
}
