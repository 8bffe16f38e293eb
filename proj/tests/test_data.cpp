#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "hansnet/checkpoint.hpp"
#include "hansnet/config.hpp"
#include "hansnet/data.hpp"
#include "hansnet/dataset.hpp"
#include "hansnet/png.hpp"

using namespace hansnet;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("hansnet_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

PhantomSpec small_spec() {
    PhantomSpec s;
    s.size = 32;
    s.depth = 8;
    s.spacing_xy = 4.0;
    s.spacing_z = 5.0;
    return s;
}

}  // namespace

TEST_CASE("window normalization examples") {
    CHECK(window_normalize(-200.0) == 0.0);
    CHECK(window_normalize(100.0) == 0.5);
    CHECK(window_normalize(400.0) == 1.0);
    CHECK(window_normalize(-1000.0) == 0.0);
    CHECK(window_normalize(3000.0) == 1.0);
    Tensor t({4}, {-200.0, 100.0, 400.0, -1000.0});
    Tensor n = window_normalize(t);
    CHECK(n.data()[0] == 0.0);
    CHECK(n.data()[1] == 0.5);
    CHECK(n.data()[2] == 1.0);
    CHECK(n.data()[3] == 0.0);
    for (double v = 0.0; v <= 1.0; v += 0.0625) CHECK(window_normalize(-200.0 + 600.0 * v) == v);
}

TEST_CASE("HVOL golden bytes and round trips") {
    Hvol v = make_hvol_u8(1, 1, 2, {2.5f, 1.0f, 0.5f});
    v.u8 = {1, 2};
    const auto bytes = encode_hvol(v);
    const std::vector<std::uint8_t> golden = {'H', 'V', 'O', 'L', 1, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0,
                                              0,   0,   0x20, 0x40, 0, 0, 0x80, 0x3f, 0, 0, 0, 0x3f, 1, 2};
    CHECK(bytes == golden);

    Hvol f = make_hvol_f32(3, 4, 5, {2.5f, 0.7f, 0.7f});
    for (std::size_t i = 0; i < f.f32.size(); ++i) f.f32[i] = static_cast<float>(i) * 0.37f - 4.0f;
    const auto dir = scratch("hvol");
    write_hvol(dir / "f.hvol", f);
    write_hvol(dir / "v.hvol", v);
    CHECK(encode_hvol(read_hvol(dir / "f.hvol")) == encode_hvol(f));
    CHECK(encode_hvol(read_hvol(dir / "v.hvol")) == bytes);
    CHECK(read_file_bytes(dir / "f.hvol") == encode_hvol(read_hvol(dir / "f.hvol")));

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_hvol(truncated), IoError);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_hvol(bad), IoError);
    auto dtype = bytes;
    dtype[6] = 7;
    CHECK_THROWS_AS(decode_hvol(dtype), IoError);
    CHECK_THROWS_AS(read_hvol(dir / "missing.hvol"), IoError);
}

TEST_CASE("resize examples") {
    Image2D img{3, 2, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}};
    const Image2D same = resize_image(img, 3, 2);
    CHECK(same.data == img.data);

    Image2D flat{2, 2, {0.3, 0.3, 0.3, 0.3}};
    for (std::size_t s : {1u, 3u, 5u, 8u}) {
        const Image2D r = resize_image(flat, s, s + 1);
        CHECK(r.data.size() == s * (s + 1));
        for (double v : r.data) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
    }
    const Image2D down = resize_image(Image2D{2, 2, {0.0, 1.0, 2.0, 3.0}}, 1, 1);
    CHECK(down.data[0] == 1.5);

    Mask2D m{2, 2, {0, 0, 0, 2}};
    const Mask2D up = resize_mask(m, 4, 4);
    const std::vector<std::uint8_t> expect = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 0, 0, 2, 2};
    CHECK(up.data == expect);
    Mask2D lab{3, 3, {0, 1, 2, 1, 1, 2, 0, 0, 1}};
    for (auto v : resize_mask(lab, 7, 5).data) CHECK(v <= 2);
}

TEST_CASE("tumor slice filter") {
    Hvol none = make_hvol_u8(4, 3, 3, {1, 1, 1});
    none.u8[5] = 1;
    CHECK(tumor_slice_filter(none).empty());
    Hvol one = make_hvol_u8(8, 3, 3, {1, 1, 1});
    one.u8[5 * 9 + 4] = 2;
    CHECK(tumor_slice_filter(one) == std::vector<std::size_t>{5});
    Hvol many = make_hvol_u8(10, 3, 3, {1, 1, 1});
    for (std::size_t z : {2u, 3u, 7u}) many.u8[z * 9 + z % 9] = 2;
    CHECK(tumor_slice_filter(many) == std::vector<std::size_t>{2, 3, 7});
}

TEST_CASE("phantoms are deterministic and nested") {
    const PhantomSpec spec = small_spec();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Phantom a = generate_phantom(spec, seed), b = generate_phantom(spec, seed);
        CHECK(encode_hvol(a.image) == encode_hvol(b.image));
        CHECK(encode_hvol(a.labels) == encode_hvol(b.labels));
        for (auto l : a.labels.u8) CHECK(l <= 2);
    }
    PhantomSpec clean = spec;
    clean.tumor_min = clean.tumor_max = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed)
        for (auto l : generate_phantom(clean, seed).labels.u8) CHECK(l <= 1);
}

TEST_CASE("phantom geometry: balls inside the ellipsoid, labels match an independent rasterizer") {
    const PhantomSpec spec = small_spec();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const PhantomGeometry g = phantom_geometry(spec, seed);
        const double ca = std::cos(g.angle), sa = std::sin(g.angle);
        // quadratic form of the rotated ellipsoid in (x, y, z) order
        const double ia = 1.0 / (g.axes[0] * g.axes[0]), ib = 1.0 / (g.axes[1] * g.axes[1]);
        const double mxx = ca * ca * ia + sa * sa * ib, myy = sa * sa * ia + ca * ca * ib;
        const double mxy = ca * sa * (ia - ib), mzz = 1.0 / (g.axes[2] * g.axes[2]);
        auto inside = [&](double z, double y, double x) {
            const double dx = x - g.center[2], dy = y - g.center[1], dz = z - g.center[0];
            return mxx * dx * dx + 2.0 * mxy * dx * dy + myy * dy * dy + mzz * dz * dz;
        };
        for (const auto& b : g.tumors)
            for (int k = 0; k < 200; ++k) {
                const double th = std::acos(1.0 - 2.0 * (k + 0.5) / 200.0), ph = 2.399963 * k;
                const double z = b.center[0] + b.radius * std::cos(th);
                const double y = b.center[1] + b.radius * std::sin(th) * std::sin(ph);
                const double x = b.center[2] + b.radius * std::sin(th) * std::cos(ph);
                CHECK(inside(z, y, x) <= 1.0 + 1e-12);
            }

        const Phantom p = generate_phantom(spec, seed);
        std::size_t liver = 0, oracle = 0, margin = 0;
        for (std::size_t z = 0; z < spec.depth; ++z)
            for (std::size_t y = 0; y < spec.size; ++y)
                for (std::size_t x = 0; x < spec.size; ++x) {
                    const double q = inside(z * spec.spacing_z, y * spec.spacing_xy, x * spec.spacing_xy);
                    oracle += q <= 1.0;
                    margin += std::abs(q - 1.0) < 1e-12;
                    liver += p.labels.u8[(z * spec.size + y) * spec.size + x] >= 1;
                }
        CHECK(margin == 0);
        CHECK(liver == oracle);
    }
}

TEST_CASE("infeasible phantom specs are rejected") {
    PhantomSpec s = small_spec();
    s.tumor_radius = {10.0, 30.0};
    CHECK_THROWS_AS(generate_phantom(s, 1), ConfigError);
    PhantomSpec bands = small_spec();
    bands.hu_tumor = {70.0, 90.0};
    CHECK_THROWS_AS(generate_phantom(bands, 1), ConfigError);
    PhantomSpec counts = small_spec();
    counts.tumor_min = 3;
    counts.tumor_max = 1;
    CHECK_THROWS_AS(generate_phantom(counts, 1), ConfigError);
}

TEST_CASE("split examples") {
    const Split s = split_dataset(100, {0.7, 0.15, 0.15}, 4);
    CHECK(s.train.size() == 70);
    CHECK(s.val.size() == 15);
    CHECK(s.test.size() == 15);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.val.begin(), s.val.end());
    all.insert(s.test.begin(), s.test.end());
    CHECK(all.size() == 100);
    CHECK(*all.rbegin() == 99);
    const Split t = split_dataset(100, {0.7, 0.15, 0.15}, 4);
    CHECK(t.train == s.train);
    CHECK(t.test == s.test);
    const Split odd = split_dataset(7, {0.7, 0.15, 0.15}, 1);
    CHECK(odd.train.size() == 5);
    CHECK(odd.val.size() == 1);
    CHECK_THROWS_AS(split_dataset(0, {0.7, 0.15, 0.15}, 1), ContractError);
    CHECK_THROWS_AS(split_dataset(10, {0.5, 0.15, 0.15}, 1), ContractError);
}

TEST_CASE("slice sets and targets") {
    Mask2D lab{1, 3, {0, 1, 2}};
    double liver[3], tumor[3];
    labels_to_targets(lab, liver, tumor);
    CHECK(liver[0] == 0.0);
    CHECK(liver[1] == 1.0);
    CHECK(liver[2] == 1.0);
    CHECK(tumor[1] == 0.0);
    CHECK(tumor[2] == 1.0);

    const Phantom p = generate_phantom(small_spec(), 3);
    const SliceSet set = make_slice_set({{&p.image, &p.labels, 2}, {&p.image, &p.labels, 4}}, 16);
    CHECK(set.images.shape() == Shape{2, 1, 16, 16});
    CHECK(set.targets.shape() == Shape{2, 2, 16, 16});
    for (double v : set.images.data()) CHECK((v >= 0.0 && v <= 1.0));
    for (std::size_t i = 0; i < 16 * 16; ++i) CHECK(set.targets.at(256 + i) <= set.targets.at(i));
}

TEST_CASE("phantom cases meet quotas and survive a save and load") {
    DataConfig cfg;
    cfg.phantom = small_spec();
    cfg.train_slices = 12;
    cfg.val_slices = 4;
    cfg.test_slices = 4;
    const auto cases = generate_phantom_cases(cfg, 9);
    std::size_t train = 0;
    for (const auto& c : cases)
        if (c.split == "train") train += c.selected.size();
    CHECK(train == 12);
    CHECK(slice_set(cases, "val", 16).size() == 4);

    const auto dir = scratch("cases");
    save_cases(dir, cases, 9);
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    const auto loaded = load_cases(dir, 9);
    REQUIRE(loaded.size() == cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        CHECK(loaded[i].name == cases[i].name);
        CHECK(loaded[i].split == cases[i].split);
        CHECK(loaded[i].selected == cases[i].selected);
        CHECK(encode_hvol(loaded[i].image) == encode_hvol(cases[i].image));
    }
    const auto again = generate_phantom_cases(cfg, 9);
    CHECK(encode_hvol(again.back().labels) == encode_hvol(cases.back().labels));
}

TEST_CASE("PNG export writes a valid file") {
    const auto dir = scratch("png");
    const auto px = to_gray8({0.0, 0.5, 1.0, 2.0}, 0.0, 1.0);
    CHECK(px == std::vector<std::uint8_t>{0, 128, 255, 255});
    write_png_gray(dir / "a.png", 2, 2, px);
    const auto bytes = read_file_bytes(dir / "a.png");
    REQUIRE(bytes.size() > 8);
    CHECK(bytes[1] == 'P');
    CHECK(bytes[2] == 'N');
    CHECK(bytes[3] == 'G');
}

TEST_CASE("config parsing") {
    Config cfg;
    apply_config_text(cfg, "# comment\nlr = 0.01\nuse_ata=false\n\nepochs = 3\n");
    CHECK(cfg.train.lr == 0.01);
    CHECK_FALSE(cfg.model.use_ata);
    CHECK(cfg.train.epochs == 3);
    apply_override(cfg, "image_size=32");
    CHECK(cfg.image_size() == 32);
    CHECK_THROWS_AS(apply_override(cfg, "no_such_key=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "epochs=abc"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "epochs"), ConfigError);
    CHECK_THROWS_AS(apply_config_text(cfg, "lr 0.1\n"), ConfigError);

    Config round;
    apply_config_text(round, dump_config(cfg));
    CHECK(dump_config(round) == dump_config(cfg));

    Config bad;
    bad.data.phantom.size = 60;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
