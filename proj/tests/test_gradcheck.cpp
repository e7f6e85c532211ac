#include "doctest.h"
#include "segicl/diffusion.hpp"
#include "segicl/rng.hpp"
#include "segicl/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/helpers.hpp"

using namespace segicl;
using namespace segicl::testsupport;

using D = TensorBase<double>;

namespace {
constexpr double kTol = 1e-4;
constexpr int kSeeds = 5;
}  // namespace

TEST_CASE("gradcheck: matmul 2d and batched") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(100 + s);
        auto a = random_tensor<double>(rng, {3, 4}, 1.0, true);
        auto b = random_tensor<double>(rng, {4, 5}, 1.0, true);
        auto tgt = random_tensor<double>(rng, {3, 5});
        CHECK(gradcheck([&] { return mse(matmul(a, b), tgt); }, {&a, &b}, s) < kTol);

        auto a3 = random_tensor<double>(rng, {2, 3, 4}, 1.0, true);
        auto b3 = random_tensor<double>(rng, {2, 4, 3}, 1.0, true);
        auto t3 = random_tensor<double>(rng, {2, 3, 3});
        CHECK(gradcheck([&] { return mse(matmul(a3, b3), t3); }, {&a3, &b3}, s) < kTol);
    }
}

TEST_CASE("gradcheck: conv2d") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(200 + s);
        auto x = random_tensor<double>(rng, {2, 2, 5, 4}, 1.0, true);
        auto w = random_tensor<double>(rng, {3, 2, 3, 3}, 0.5, true);
        auto tgt = random_tensor<double>(rng, {2, 3, 5, 4});
        CHECK(gradcheck([&] { return mse(conv2d(x, w), tgt); }, {&x, &w}, s) < kTol);
    }
}

TEST_CASE("gradcheck: softmax over each axis") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(300 + s);
        auto x = random_tensor<double>(rng, {3, 4, 5}, 2.0, true);
        for (int ax : {0, 1, -1}) {
            auto tgt = random_tensor<double>(rng, {3, 4, 5});
            CHECK(gradcheck([&] { return mse(softmax(x, ax), tgt); }, {&x}, s) < kTol);
        }
    }
}

TEST_CASE("gradcheck: layer_norm") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(400 + s);
        auto x = random_tensor<double>(rng, {6, 8}, 2.0, true);
        auto g = random_tensor<double>(rng, {8}, 0.5, true);
        auto b = random_tensor<double>(rng, {8}, 0.5, true);
        auto tgt = random_tensor<double>(rng, {6, 8});
        CHECK(gradcheck([&] { return mse(layer_norm(x, g, b), tgt); }, {&x, &g, &b}, s) <
              kTol);
    }
}

TEST_CASE("gradcheck: gelu and silu") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(500 + s);
        auto x = random_tensor<double>(rng, {4, 6}, 1.5, true);
        auto tgt = random_tensor<double>(rng, {4, 6});
        CHECK(gradcheck([&] { return mse(gelu(x), tgt); }, {&x}, s) < kTol);
        CHECK(gradcheck([&] { return mse(silu(x), tgt); }, {&x}, s) < kTol);
    }
}

TEST_CASE("gradcheck: elementwise and scalar ops") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(600 + s);
        auto a = random_tensor<double>(rng, {3, 5}, 1.0, true);
        auto b = random_tensor<double>(rng, {3, 5}, 1.0, true);
        auto tgt = random_tensor<double>(rng, {3, 5});
        CHECK(gradcheck([&] { return mse(add(a, b), tgt); }, {&a, &b}, s) < kTol);
        CHECK(gradcheck([&] { return mse(sub(a, b), tgt); }, {&a, &b}, s) < kTol);
        CHECK(gradcheck([&] { return mse(mul(a, b), tgt); }, {&a, &b}, s) < kTol);
        CHECK(gradcheck([&] { return mse(add_scalar(a, 0.7), tgt); }, {&a}, s) < kTol);
        CHECK(gradcheck([&] { return mse(mul_scalar(a, -1.3), tgt); }, {&a}, s) < kTol);
    }
}

TEST_CASE("gradcheck: broadcast helpers") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(700 + s);
        auto x = random_tensor<double>(rng, {4, 6}, 1.0, true);
        auto v = random_tensor<double>(rng, {6}, 1.0, true);
        auto tgt = random_tensor<double>(rng, {4, 6});
        CHECK(gradcheck([&] { return mse(add_rowvec(x, v), tgt); }, {&x, &v}, s) < kTol);

        auto img = random_tensor<double>(rng, {2, 3, 3, 4}, 1.0, true);
        auto cv = random_tensor<double>(rng, {3}, 1.0, true);
        auto bv = random_tensor<double>(rng, {2, 3}, 1.0, true);
        auto it = random_tensor<double>(rng, {2, 3, 3, 4});
        CHECK(gradcheck([&] { return mse(add_channels(img, cv), it); }, {&img, &cv}, s) <
              kTol);
        CHECK(gradcheck([&] { return mse(add_channels(img, bv), it); }, {&img, &bv}, s) <
              kTol);

        auto scores = random_tensor<double>(rng, {3, 4, 5}, 1.0, true);
        auto m2 = random_tensor<double>(rng, {4, 5}, 1.0, true);
        auto st = random_tensor<double>(rng, {3, 4, 5});
        CHECK(gradcheck([&] { return mse(add_bcast0(scores, m2), st); }, {&scores, &m2},
                        s) < kTol);

        auto xb = random_tensor<double>(rng, {3, 7}, 1.0, true);
        auto coef = random_tensor<double>(rng, {3}, 1.0, true);
        auto bt = random_tensor<double>(rng, {3, 7});
        CHECK(gradcheck([&] { return mse(scale_batch(xb, coef), bt); }, {&xb, &coef}, s) <
              kTol);
    }
}

TEST_CASE("gradcheck: shape ops") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(800 + s);
        auto x = random_tensor<double>(rng, {2, 3, 4}, 1.0, true);
        auto tgt = random_tensor<double>(rng, {4, 6});
        CHECK(gradcheck(
                  [&] {
                      auto p = permute(x, {2, 0, 1});
                      return mse(reshape(p, {4, 6}), tgt);
                  },
                  {&x}, s) < kTol);

        auto a = random_tensor<double>(rng, {2, 2, 4}, 1.0, true);
        auto b = random_tensor<double>(rng, {2, 1, 4}, 1.0, true);
        auto ct = random_tensor<double>(rng, {2, 3, 4});
        CHECK(gradcheck([&] { return mse(concat({a, b}, 1), ct); }, {&a, &b}, s) < kTol);

        auto st = random_tensor<double>(rng, {2, 2, 4});
        CHECK(gradcheck([&] { return mse(slice(x, 1, 1, 2), st); }, {&x}, s) < kTol);

        auto m = random_tensor<double>(rng, {3, 5}, 1.0, true);
        auto tt = random_tensor<double>(rng, {5, 3});
        CHECK(gradcheck([&] { return mse(transpose(m), tt); }, {&m}, s) < kTol);
    }
}

TEST_CASE("gradcheck: embedding lookup") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(900 + s);
        auto table = random_tensor<double>(rng, {6, 4}, 1.0, true);
        std::vector<int> ids{1, 5, 1, 0};
        auto tgt = random_tensor<double>(rng, {4, 4});
        CHECK(gradcheck([&] { return mse(embedding_lookup(table, ids), tgt); }, {&table},
                        s) < kTol);
    }
}

TEST_CASE("gradcheck: reductions and losses") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(1000 + s);
        auto x = random_tensor<double>(rng, {3, 4}, 1.0, true);
        auto y = random_tensor<double>(rng, {3, 4}, 1.0, true);
        CHECK(gradcheck([&] { return mul_scalar(sum(mul(x, x)), 0.5); }, {&x}, s) < kTol);
        CHECK(gradcheck([&] { return mean(mul(x, y)); }, {&x, &y}, s) < kTol);
        CHECK(gradcheck([&] { return mse(x, y); }, {&x, &y}, s) < kTol);

        auto logits = random_tensor<double>(rng, {4, 6}, 2.0, true);
        std::vector<int> targets{0, 3, 5, 2};
        CHECK(gradcheck([&] { return cross_entropy(logits, targets); }, {&logits}, s) <
              kTol);
    }
}

TEST_CASE("gradcheck: mlp composite") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(1100 + s);
        auto x = random_tensor<double>(rng, {3, 4}, 1.0, true);
        auto w1 = random_tensor<double>(rng, {4, 8}, 0.5, true);
        auto b1 = random_tensor<double>(rng, {8}, 0.1, true);
        auto w2 = random_tensor<double>(rng, {8, 6}, 0.5, true);
        auto g = random_tensor<double>(rng, {6}, 0.3, true);
        auto bb = random_tensor<double>(rng, {6}, 0.3, true);
        auto tgt = random_tensor<double>(rng, {3, 6});
        auto err = gradcheck(
            [&] {
                auto h = gelu(add_rowvec(matmul(x, w1), b1));
                auto o = layer_norm(matmul(h, w2), g, bb);
                return mse(o, tgt);
            },
            {&x, &w1, &b1, &w2, &g, &bb}, s);
        CHECK(err < kTol);
    }
}

TEST_CASE("gradcheck: causal attention composite") {
    const int n = 5, h = 8, heads = 2, hd = h / heads;
    std::vector<double> maskv(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) maskv[std::size_t(i) * n + j] = -1e9;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(1200 + s);
        auto x = random_tensor<double>(rng, {n, h}, 1.0, true);
        auto wqkv = random_tensor<double>(rng, {h, 3 * h}, 0.5, true);
        auto wout = random_tensor<double>(rng, {h, h}, 0.5, true);
        auto tgt = random_tensor<double>(rng, {n, h});
        auto err = gradcheck(
            [&] {
                auto qkv = matmul(x, wqkv);
                auto q = permute(reshape(slice(qkv, 1, 0, h), {n, heads, hd}), {1, 0, 2});
                auto kt = permute(reshape(slice(qkv, 1, h, h), {n, heads, hd}), {1, 2, 0});
                auto v = permute(reshape(slice(qkv, 1, 2 * h, h), {n, heads, hd}), {1, 0, 2});
                auto scores = mul_scalar(matmul(q, kt), 1.0 / std::sqrt(double(hd)));
                auto mask = from_vector<double>({n, n}, maskv);
                auto att = softmax(add_bcast0(scores, mask), -1);
                auto o = reshape(permute(matmul(att, v), {1, 0, 2}), {n, h});
                return mse(matmul(o, wout), tgt);
            },
            {&x, &wqkv, &wout}, s);
        CHECK(err < kTol);
    }
}

TEST_CASE("gradcheck: channel_norm and pixel shuffles") {
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(1300 + s);
        auto x = random_tensor<double>(rng, {2, 4, 4, 4}, 1.0, true);
        auto g = random_tensor<double>(rng, {4}, 0.5, true);
        auto b = random_tensor<double>(rng, {4}, 0.5, true);
        auto tgt = random_tensor<double>(rng, {2, 4, 4, 4});
        auto err = gradcheck(
            [&] { return mse(channel_norm(x, g, b), tgt); }, {&x, &g, &b}, s);
        CHECK(err < kTol);

        auto w = random_tensor<double>(rng, {4, 16, 3, 3}, 0.3, true);
        auto t2 = random_tensor<double>(rng, {2, 1, 4, 4});
        auto err2 = gradcheck(
            [&] { return mse(pixel_shuffle(conv2d(pixel_unshuffle(x), w)), t2); },
            {&x, &w}, s);
        CHECK(err2 < kTol);
    }
}

TEST_CASE("gradcheck: residual block composite") {
    const int C = 4;
    for (std::uint64_t s = 0; s < kSeeds; ++s) {
        Rng rng(1400 + s);
        auto x = random_tensor<double>(rng, {2, C, 4, 4}, 1.0, true);
        auto g1 = random_tensor<double>(rng, {C}, 0.5, true);
        auto b1 = random_tensor<double>(rng, {C}, 0.5, true);
        auto w1 = random_tensor<double>(rng, {C, C, 3, 3}, 0.3, true);
        auto temb = random_tensor<double>(rng, {2, C}, 0.8, true);
        auto w2 = random_tensor<double>(rng, {C, C, 3, 3}, 0.3, true);
        auto tgt = random_tensor<double>(rng, {2, C, 4, 4});
        auto err = gradcheck(
            [&] {
                auto h = conv2d(silu(channel_norm(x, g1, b1)), w1);
                h = add_channels(h, temb);
                h = conv2d(silu(h), w2);
                return mse(add(x, h), tgt);
            },
            {&x, &g1, &b1, &w1, &temb, &w2}, s);
        CHECK(err < kTol);
    }
}

TEST_CASE("gradcheck: denoiser end to end") {
    // base 4 keeps every channel_norm wide enough for stable finite differences
    DenoiserConfig cfg;
    cfg.res = 8;
    cfg.base = 4;
    cfg.temb_dim = 4;
    cfg.cond_tokens = 2;
    cfg.token_dim = 4;
    Rng rng(1500);
    UNetT<double> net(cfg, rng);
    // the output conv starts at zero, which would zero every upstream gradient
    auto& wout = net.params().at("out.conv.w");
    for (auto& v : *wout.data) v = rng.normal() * 0.3;

    auto x = random_tensor<double>(rng, {1, 1, 8, 8}, 1.0, true);
    auto ctx = random_tensor<double>(rng, {1, 3, 4}, 1.0, true);
    auto tgt = random_tensor<double>(rng, {1, 1, 8, 8});
    const std::vector<int> ts{137};

    std::vector<TensorBase<double>*> inputs{
        &x,
        &ctx,
        &net.params().at("stem.w"),
        &net.params().at("temb.fc1.w"),
        &net.params().at("d0.rb0.c1.w"),
        &net.params().at("d1.xa.wk.w"),
        &net.params().at("mid.temb.w"),
        &net.params().at("u0.rb1.c2.w"),
        &wout,
    };
    auto err = gradcheck([&] { return mse(net.forward(x, ts, ctx), tgt); }, inputs, 7);
    CHECK(err < kTol);
}
