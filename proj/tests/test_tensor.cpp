#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "hansnet/checkpoint.hpp"
#include "hansnet/ops.hpp"
#include "hansnet/rng.hpp"

using namespace hansnet;
using hansnet::testing::gradcheck;
using hansnet::testing::kGradTolerance;
using hansnet::testing::random_tensor;

namespace {

// Direct 6-nested-loop convolution, independent of im2col/GEMM.
Tensor conv2d_oracle(const Tensor& x, const Tensor& k, const Tensor& bias, std::size_t stride, std::size_t pad) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = k.dim(0), K = k.dim(2);
    const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
    std::vector<double> out(B * O * Ho * Wo, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < Ho; ++i)
                for (std::size_t j = 0; j < Wo; ++j) {
                    double acc = bias.defined() ? bias.at(o) : 0.0;
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t ki = 0; ki < K; ++ki)
                            for (std::size_t kj = 0; kj < K; ++kj) {
                                const long y = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W))
                                    continue;
                                acc += x.at(((b * C + c) * H + y) * W + xx) * k.at(((o * C + c) * K + ki) * K + kj);
                            }
                    out[((b * O + o) * Ho + i) * Wo + j] = acc;
                }
    return Tensor({B, O, Ho, Wo}, out);
}

void check_close(const Tensor& a, const std::vector<double>& expected, double tol = 1e-12) {
    REQUIRE(a.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) CHECK(a.at(i) == doctest::Approx(expected[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("conv2d worked examples") {
    Tensor ones = Tensor::ones({1, 1, 3, 3});
    Tensor two({1, 1, 1, 1}, {2.0});
    check_close(conv2d(ones, two), std::vector<double>(9, 2.0));

    Rng rng(3);
    Tensor x = random_tensor({2, 3, 5, 5}, rng);
    Tensor zero_k = Tensor::zeros({4, 3, 3, 3});
    Tensor bias({4}, {0.5, -1.0, 2.0, 3.25});
    Tensor y = conv2d(x, zero_k, bias, 1, 1);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.at(i) == bias.at((i / 25) % 4));

    Tensor m({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor diag({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor s = conv2d(m, diag);
    CHECK(s.shape() == Shape{1, 1, 1, 1});
    CHECK(s.item() == 5.0);

    CHECK_THROWS_AS(conv2d(x, Tensor::zeros({4, 2, 3, 3})), DimensionError);
}

TEST_CASE("conv2d agrees with the nested-loop oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const std::size_t stride = 1 + seed % 2, pad = seed % 3, k = (seed % 2) ? 3 : 1;
        Tensor x = random_tensor({2, 3, 8, 8}, rng);
        Tensor w = random_tensor({4, 3, k, k}, rng);
        Tensor b = random_tensor({4}, rng);
        Tensor got = conv2d(x, w, b, stride, pad);
        Tensor ref = conv2d_oracle(x, w, b, stride, pad);
        REQUIRE(got.shape() == ref.shape());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.at(i) - ref.at(i)) < 1e-12);
    }
}

TEST_CASE("matmul worked examples") {
    Rng rng(1);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor ia = matmul(Tensor::eye(3), a);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(ia.at(i) == a.at(i));

    Tensor l({2, 2}, {1, 2, 3, 4});
    Tensor r({2, 1}, {5, 6});
    check_close(matmul(l, r), {17, 39});

    CHECK_THROWS_AS(matmul(l, a), DimensionError);

    // batched with broadcasting leading axes
    Tensor lb = random_tensor({2, 1, 3, 4}, rng);
    Tensor rb = random_tensor({3, 4, 2}, rng);
    Tensor out = matmul(lb, rb);
    CHECK(out.shape() == Shape{2, 3, 3, 2});
    const Tensor zero_prod = matmul(Tensor::zeros({3, 3}), random_tensor({3, 5}, rng));
    for (double v : zero_prod.data()) CHECK(v == 0.0);
}

TEST_CASE("elementwise examples and broadcasting") {
    CHECK(hansnet::tanh(Tensor::scalar(0.0)).item() == 0.0);
    CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    check_close(add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4})), {4, 6});
    Tensor row({1, 3}, {1, 2, 3});
    Tensor col({2, 1}, {10, 20});
    check_close(add(row, col), {11, 12, 13, 21, 22, 23});
    CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
    CHECK_THROWS_AS(hansnet::div(Tensor::ones({2}), Tensor({2}, {1.0, 1e-301})), NumericalError);
    CHECK_THROWS_AS(hansnet::exp(Tensor::scalar(1000.0)), NumericalError);
    CHECK(sigmoid(Tensor::scalar(-1000.0)).item() == 0.0);
    CHECK(softplus(Tensor::scalar(-800.0)).item() >= 0.0);
}

TEST_CASE("softmax examples") {
    check_close(softmax(Tensor({3}, {0, 0, 0}), 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});
    Tensor big = softmax(Tensor({2}, {1000, 0}), 0);
    CHECK(big.at(0) == doctest::Approx(1.0));
    CHECK(big.at(1) < 1e-300);
    check_close(softmax(Tensor({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}), 0), {1.0 / 6, 2.0 / 6, 3.0 / 6});

    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor({4, 7, 3}, rng, 1e3);
        for (int axis = 0; axis < 3; ++axis) {
            Tensor y = softmax(x, axis);
            Tensor s = sum(y, {axis});
            for (double v : s.data()) CHECK(std::abs(v - 1.0) < 1e-12);
            for (double v : y.data()) CHECK((v >= 0.0 && v <= 1.0));
        }
    }
}

TEST_CASE("grid_sample examples") {
    Rng rng(5);
    Tensor feat = random_tensor({1, 2, 4, 5}, rng);
    // pixel centers under the corner-aligned convention
    Tensor c({1, 1, 2}, {-1.0 + 2.0 * 3 / 4, -1.0 + 2.0 * 2 / 3});
    Tensor v = grid_sample_bilinear(feat, c);
    CHECK(v.at(0) == doctest::Approx(feat.at(2 * 5 + 3)).epsilon(1e-12));
    CHECK(v.at(1) == doctest::Approx(feat.at(20 + 2 * 5 + 3)).epsilon(1e-12));

    Tensor ab({1, 1, 1, 2}, {3.0, 7.0});
    CHECK(grid_sample_bilinear(ab, Tensor({1, 1, 2}, {0.0, 0.0})).item() == 5.0);

    Tensor constant({1, 1, 3, 3}, 2.5);
    Tensor coords = Tensor::uniform({1, 17, 2}, -1.5, 1.5, rng);
    const Tensor flat = grid_sample_bilinear(constant, coords);
    for (double x : flat.data()) CHECK(x == doctest::Approx(2.5).epsilon(1e-15));

    // four corners are exact
    Tensor corners({1, 4, 2}, {-1, -1, 1, -1, -1, 1, 1, 1});
    Tensor got = grid_sample_bilinear(feat, corners);
    const std::size_t expect_idx[4] = {0, 4, 15, 19};
    for (std::size_t q = 0; q < 4; ++q) {
        CHECK(got.at(q * 2) == feat.at(expect_idx[q]));
        CHECK(got.at(q * 2 + 1) == feat.at(20 + expect_idx[q]));
    }
    // clamping
    Tensor far({1, 1, 2}, {5.0, -9.0});
    CHECK(grid_sample_bilinear(feat, far).at(0) == feat.at(4));
}

TEST_CASE("backward examples and contracts") {
    Tensor x({3}, {1, 2, 3});
    x.set_requires_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = sum_all(mul(x, x));
        backward(loss);
        check_close(Tensor({3}, std::vector<double>(x.grad().begin(), x.grad().end())), {2, 4, 6});
        CHECK_THROWS_AS(backward(loss), ContractError);
    }
    x.zero_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = add_scalar(scale(sum_all(x), 0.0), 3.0);
        backward(loss);
        for (double g : x.grad()) CHECK(g == 0.0);
    }
    Tensor z = Tensor::scalar(0.0);
    z.set_requires_grad();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = hansnet::tanh(z);
        backward(loss);
        CHECK(z.grad()[0] == 1.0);
    }
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor y = mul(x, x);
        CHECK_THROWS_AS(backward(y), ContractError);
        CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), ContractError);
    }
}

TEST_CASE("tape visits nodes in reverse order and frees them") {
    Tensor x({2}, {0.3, -0.2});
    x.set_requires_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor y = hansnet::tanh(scale(x, 2.0));
    Tensor loss = sum_all(y);
    CHECK(tape.size() == 3);
    CHECK(tape.op_names() == std::vector<std::string_view>{"scale", "tanh", "sum"});
    tape.backward(loss);
    CHECK(tape.size() == 0);
    CHECK_FALSE(y.on_tape());
}

TEST_CASE("detached tensors act as constants") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad();
    Tape tape;
    TapeScope scope(tape);
    Tensor c = mul(x, x).detach();
    Tensor loss = sum_all(mul(x, c));
    backward(loss);
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("dropout2d: identity at p=0 and unbiased in expectation") {
    Rng rng(11);
    Tensor x = random_tensor({2, 3, 2, 2}, rng);
    Tensor same = dropout2d(x, 0.0, rng);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(same.at(i) == x.at(i));

    std::vector<double> acc(x.size(), 0.0);
    const int masks = 10000;
    for (int t = 0; t < masks; ++t) {
        Tensor d = dropout2d(x, 0.3, rng);
        for (std::size_t i = 0; i < x.size(); ++i) acc[i] += d.at(i);
        // whole channels are dropped together
        for (std::size_t pl = 0; pl < 6; ++pl) {
            const bool zero = d.at(pl * 4) == 0.0;
            for (std::size_t k = 1; k < 4; ++k) CHECK((d.at(pl * 4 + k) == 0.0) == zero);
        }
    }
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(std::abs(acc[i] / masks - x.at(i)) <= 0.02 * std::abs(x.at(i)) + 1e-12);
    CHECK_THROWS_AS(dropout2d(x, 1.0, rng), ContractError);
}

TEST_CASE("reductions, reshape, permute, concat, maxpool") {
    Tensor x({2, 3}, {1, 5, 3, 4, 2, 6});
    check_close(sum(x, {0}), {5, 7, 9});
    check_close(mean(x, {1}, true), {3, 4});
    CHECK(mean(x, {1}, true).shape() == Shape{2, 1});
    check_close(hansnet::max(x, {1}), {5, 6});
    check_close(permute(x, {1, 0}), {1, 4, 5, 2, 3, 6});
    check_close(concat({x, Tensor({2, 1}, {7, 8})}, 1), {1, 5, 3, 7, 4, 2, 6, 8});
    CHECK(reshape(x, {3, 2}).shape() == Shape{3, 2});
    CHECK_THROWS_AS(reshape(x, {4, 2}), DimensionError);
    Tensor img({1, 1, 2, 4}, {1, 9, 3, 2, 4, 0, 8, 5});
    check_close(maxpool2d(img), {9, 8});
}

TEST_CASE("every differentiable op passes finite-difference checks over 20 seeds") {
    struct Case {
        const char* name;
        std::vector<Shape> shapes;
        testing::TensorFn fn;
        double input_scale = 1.0;
    };
    const std::vector<Case> cases = {
        {"add", {{2, 3}, {1, 3}}, [](auto& v) { return add(v[0], v[1]); }},
        {"sub", {{2, 3}, {2, 1}}, [](auto& v) { return sub(v[0], v[1]); }},
        {"mul", {{2, 3}, {2, 3}}, [](auto& v) { return mul(v[0], v[1]); }},
        {"div", {{2, 3}, {2, 3}}, [](auto& v) { return hansnet::div(v[0], add_scalar(mul(v[1], v[1]), 0.5)); }},
        {"tanh", {{3, 4}}, [](auto& v) { return hansnet::tanh(v[0]); }},
        {"sigmoid", {{3, 4}}, [](auto& v) { return sigmoid(v[0]); }},
        {"exp", {{3, 4}}, [](auto& v) { return hansnet::exp(v[0]); }},
        {"scale", {{3, 4}}, [](auto& v) { return scale(v[0], -1.7); }},
        {"softplus", {{3, 4}}, [](auto& v) { return softplus(v[0]); }},
        {"matmul", {{2, 3, 4}, {4, 2}}, [](auto& v) { return matmul(v[0], v[1]); }},
        {"matmul_batched", {{2, 2, 3}, {2, 3, 2}}, [](auto& v) { return matmul(v[0], v[1]); }},
        {"conv2d", {{1, 2, 4, 4}, {2, 2, 3, 3}, {2}}, [](auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); }},
        {"conv2d_stride", {{1, 2, 5, 5}, {1, 2, 3, 3}}, [](auto& v) { return conv2d(v[0], v[1], {}, 2, 1); }},
        {"softmax", {{3, 5}}, [](auto& v) { return softmax(v[0], 1); }},
        {"grid_sample", {{1, 2, 3, 4}, {1, 5, 2}},
         [](auto& v) { return grid_sample_bilinear(v[0], hansnet::tanh(v[1])); }},
        {"maxpool2d", {{1, 2, 4, 4}}, [](auto& v) { return maxpool2d(v[0]); }},
        {"reshape", {{2, 6}}, [](auto& v) { return hansnet::tanh(reshape(v[0], {3, 4})); }},
        {"permute", {{2, 3, 4}}, [](auto& v) { return permute(v[0], {2, 0, 1}); }},
        {"sum", {{2, 3, 4}}, [](auto& v) { return sum(v[0], {0, 2}); }},
        {"mean", {{2, 3, 4}}, [](auto& v) { return mean(v[0], {1}, true); }},
        {"max", {{2, 3, 4}}, [](auto& v) { return hansnet::max(v[0], {2}); }},
        {"concat", {{2, 3}, {2, 2}}, [](auto& v) { return concat({v[0], v[1]}, 1); }},
        {"expmap", {{4, 3}, {1}},
         [](auto& v) { return poincare_expmap(v[0], neg(softplus(v[1])), 1e-7); }},
        {"posenc", {{3, 2}}, [](auto& v) { return positional_encode(hansnet::tanh(v[0]), 3); }},
    };
    for (const auto& c : cases) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(1000 + seed);
            std::vector<Tensor> in;
            for (const auto& s : c.shapes) in.push_back(random_tensor(s, rng, c.input_scale));
            const auto rep = gradcheck(c.fn, in, seed);
            INFO(c.name << " seed " << seed << " error " << rep.max_rel_error);
            CHECK(rep.max_rel_error < kGradTolerance);
        }
    }
}

TEST_CASE("dropout gradient routes through the sampled mask") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor x = random_tensor({2, 3, 2, 2}, rng);
        auto f = [seed](const std::vector<Tensor>& v) {
            Rng r(seed * 7 + 1);  // same mask every evaluation
            return dropout2d(v[0], 0.4, r);
        };
        CHECK(gradcheck(f, {x}, seed).max_rel_error < kGradTolerance);
    }
}

TEST_CASE("checkpoint byte layout") {
    ParamList params{{"ab", Tensor({2}, {1.0, -2.0})}};
    const auto bytes = encode_checkpoint(params);
    std::vector<std::uint8_t> expected = {'H', 'N', 'S', 'W', 1, 0,  // magic, version
                                          2, 0, 'a', 'b',              // name
                                          1,                           // rank
                                          2, 0, 0, 0};                 // dims
    const std::uint8_t one[8] = {0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    const std::uint8_t minus_two[8] = {0, 0, 0, 0, 0, 0, 0x00, 0xC0};
    expected.insert(expected.end(), one, one + 8);
    expected.insert(expected.end(), minus_two, minus_two + 8);
    CHECK(bytes == expected);

    Rng rng(2);
    ParamList many{{"w", random_tensor({2, 3, 1, 1}, rng)}, {"s", Tensor::scalar(0.25)}, {"v", random_tensor({7}, rng)}};
    const auto enc = encode_checkpoint(many);
    CHECK(encode_checkpoint(decode_checkpoint(enc)) == enc);
    auto bad = enc;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), IoError);
    bad = enc;
    bad.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(bad), IoError);
}
