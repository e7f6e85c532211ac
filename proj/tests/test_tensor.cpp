#include <cmath>
#include <cstring>
#include <omp.h>

#include "doctest.h"
#include "segicl/nn.hpp"
#include "segicl/optim.hpp"
#include "segicl/ref.hpp"
#include "segicl/rng.hpp"
#include "segicl/tensor.hpp"
#include "segicl/threads.hpp"
#include "segicl/util.hpp"
#include "support/helpers.hpp"

using namespace segicl;
using namespace segicl::testsupport;

TEST_CASE("matmul identity and zero cases") {
    auto eye = from_vector<float>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(1);
    auto b = random_tensor<float>(rng, {3, 5});
    auto y = matmul(eye, b);
    for (std::size_t i = 0; i < b.numel(); ++i) CHECK((*y.data)[i] == (*b.data)[i]);

    auto z = zeros<float>({2, 3});
    auto r = random_tensor<float>(rng, {3, 4});
    auto zy = matmul(z, r);
    REQUIRE(zy.shape == std::vector<int>{2, 4});
    for (auto v : *zy.data) CHECK(v == 0.0f);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(2);
    auto a = random_tensor<float>(rng, {4, 5});
    auto b = random_tensor<float>(rng, {5, 6});
    auto y = matmul(a, b);
    std::vector<double> expect(24);
    auto ad = to_doubles(a), bd = to_doubles(b);
    ref::gemm(ad.data(), bd.data(), expect.data(), 4, 6, 5);
    CHECK(max_abs_diff(y, expect) < 1e-6);
}

TEST_CASE("matmul batched matches per-slice oracle") {
    Rng rng(3);
    auto a = random_tensor<float>(rng, {3, 2, 4});
    auto b = random_tensor<float>(rng, {3, 4, 5});
    auto y = matmul(a, b);
    REQUIRE(y.shape == std::vector<int>{3, 2, 5});
    auto ad = to_doubles(a), bd = to_doubles(b);
    std::vector<double> expect(30);
    for (int g = 0; g < 3; ++g)
        ref::gemm(ad.data() + g * 8, bd.data() + g * 20, expect.data() + g * 10, 2, 5, 4);
    CHECK(max_abs_diff(y, expect) < 1e-6);
}

TEST_CASE("matmul shape errors name both shapes") {
    Rng rng(4);
    auto a = random_tensor<float>(rng, {4, 5});
    auto b = random_tensor<float>(rng, {3, 6});
    check_throws_mentioning<dimension_error>([&] { (void)matmul(a, b); },
                                             {"[4, 5]", "[3, 6]"});
    auto c = random_tensor<float>(rng, {2, 4, 5});
    check_throws_mentioning<dimension_error>([&] { (void)matmul(a, c); },
                                             {"[4, 5]", "[2, 4, 5]"});
}

TEST_CASE("conv2d delta kernel is identity") {
    Rng rng(5);
    auto x = random_tensor<float>(rng, {2, 1, 5, 5});
    auto w = zeros<float>({1, 1, 3, 3});
    (*w.data)[4] = 1.0f;  // center tap
    auto y = conv2d(x, w);
    REQUIRE(y.shape == x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK((*y.data)[i] == (*x.data)[i]);
}

TEST_CASE("conv2d all-ones kernel counts the window") {
    auto x = full<float>({1, 1, 4, 4}, 1.0f);
    auto w = full<float>({1, 1, 3, 3}, 1.0f);
    auto y = conv2d(x, w);
    auto at = [&](int r, int c) { return (*y.data)[static_cast<std::size_t>(r * 4 + c)]; };
    CHECK(at(1, 1) == 9.0f);
    CHECK(at(1, 2) == 9.0f);
    CHECK(at(0, 0) == 4.0f);
    CHECK(at(0, 3) == 4.0f);
    CHECK(at(3, 0) == 4.0f);
    CHECK(at(3, 3) == 4.0f);
    CHECK(at(0, 1) == 6.0f);
    CHECK(at(2, 0) == 6.0f);
}

TEST_CASE("conv2d matches naive 6-loop oracle") {
    Rng rng(6);
    auto x = random_tensor<float>(rng, {2, 3, 6, 5});
    auto w = random_tensor<float>(rng, {4, 3, 3, 3});
    auto y = conv2d(x, w);
    auto xd = to_doubles(x), wd = to_doubles(w);
    std::vector<double> expect(y.numel());
    ref::conv2d_3x3(xd.data(), wd.data(), expect.data(), 2, 3, 6, 5, 4);
    CHECK(max_abs_diff(y, expect) < 1e-5);
}

TEST_CASE("conv2d channel mismatch raises") {
    Rng rng(7);
    auto x = random_tensor<float>(rng, {1, 3, 4, 4});
    auto w = random_tensor<float>(rng, {2, 5, 3, 3});
    check_throws_mentioning<dimension_error>([&] { (void)conv2d(x, w); },
                                             {"[1, 3, 4, 4]", "[2, 5, 3, 3]"});
}

TEST_CASE("softmax symmetry, stability and oracle") {
    auto u = softmax(from_vector<float>({3}, {0, 0, 0}), 0);
    for (auto v : *u.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    auto s = softmax(from_vector<float>({3}, {1000, 0, 0}), 0);
    CHECK((*s.data)[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK((*s.data)[1] == doctest::Approx(0.0).epsilon(1e-6));
    for (auto v : *s.data) CHECK(std::isfinite(v));

    // 64-bit instantiation against the exp/sum oracle.
    Rng rng(8);
    auto xd = random_tensor<double>(rng, {16}, 3.0);
    auto yd = softmax(xd, 0);
    std::vector<double> expect(16);
    ref::softmax(xd.ptr(), expect.data(), 16);
    CHECK(max_abs_diff(yd, expect) < 1e-12);

    auto xf = random_tensor<float>(rng, {16}, 3.0f);
    auto yf = softmax(xf, 0);
    auto xfd = to_doubles(xf);
    ref::softmax(xfd.data(), expect.data(), 16);
    CHECK(max_abs_diff(yf, expect) < 1e-6);

    // Rows sum to one along any axis.
    auto m = random_tensor<float>(rng, {4, 7, 5}, 2.0f);
    for (int ax = 0; ax < 3; ++ax) {
        auto sm = softmax(m, ax);
        const long outer = ax == 0 ? 1 : (ax == 1 ? 4 : 28);
        const int n = m.shape[static_cast<std::size_t>(ax)];
        const long inner = ax == 0 ? 35 : (ax == 1 ? 5 : 1);
        for (long o = 0; o < outer; ++o)
            for (long i = 0; i < inner; ++i) {
                double total = 0.0;
                for (int j = 0; j < n; ++j)
                    total += (*sm.data)[static_cast<std::size_t>((o * n + j) * inner + i)];
                CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
            }
    }
}

TEST_CASE("layer_norm closed-form and oracle") {
    auto g1 = full<float>({4}, 1.0f);
    auto b0 = zeros<float>({4});
    auto c = layer_norm(from_vector<float>({4}, {5, 5, 5, 5}), g1, b0);
    for (auto v : *c.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-6));

    auto g3 = full<float>({3}, 1.0f);
    auto b3 = zeros<float>({3});
    auto y = layer_norm(from_vector<float>({3}, {1, 2, 3}), g3, b3);
    CHECK((*y.data)[0] == doctest::Approx(-1.2247).epsilon(1e-3));
    CHECK((*y.data)[1] == doctest::Approx(0.0).epsilon(1e-3));
    CHECK((*y.data)[2] == doctest::Approx(1.2247).epsilon(1e-3));

    Rng rng(9);
    auto x = random_tensor<float>(rng, {6, 8}, 2.0f);
    auto g = random_tensor<float>(rng, {8});
    auto b = random_tensor<float>(rng, {8});
    auto out = layer_norm(x, g, b);
    auto xd = to_doubles(x), gd = to_doubles(g), bd = to_doubles(b);
    std::vector<double> expect(48);
    for (int r = 0; r < 6; ++r)
        ref::layer_norm(xd.data() + r * 8, gd.data(), bd.data(), expect.data() + r * 8,
                        8, 1e-5);
    CHECK(max_abs_diff(out, expect) < 1e-6);

    // Pre-affine rows have mean ~0 and variance ~1.
    auto plain = layer_norm(x, full<float>({8}, 1.0f), zeros<float>({8}));
    for (int r = 0; r < 6; ++r) {
        double mu = 0.0, var = 0.0;
        for (int j = 0; j < 8; ++j) mu += (*plain.data)[static_cast<std::size_t>(r * 8 + j)];
        mu /= 8;
        for (int j = 0; j < 8; ++j) {
            const double d = (*plain.data)[static_cast<std::size_t>(r * 8 + j)] - mu;
            var += d * d;
        }
        var /= 8;
        CHECK(std::abs(mu) < 1e-4);
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("gelu and silu point values") {
    auto x = from_vector<float>({3}, {0.0f, 1.0f, -1.0f});
    auto gy = gelu(x);
    CHECK((*gy.data)[0] == 0.0f);
    CHECK((*gy.data)[1] == doctest::Approx(0.84134474).epsilon(1e-5));
    CHECK((*gy.data)[2] == doctest::Approx(-0.15865525).epsilon(1e-4));
    auto sy = silu(x);
    CHECK((*sy.data)[0] == 0.0f);
    CHECK((*sy.data)[1] == doctest::Approx(0.73105858).epsilon(1e-5));
}

TEST_CASE("backward on sum gives ones, on sum of squares gives 2x") {
    Rng rng(10);
    auto x = random_tensor<float>(rng, {3, 4}, 1.0f, true);
    auto loss = sum(mul(x, x));
    backward(loss);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK((*x.grad)[i] == doctest::Approx(2.0 * (*x.data)[i]).epsilon(1e-6));

    x.zero_grad();
    auto loss2 = sum(x);
    backward(loss2);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK((*x.grad)[i] == 1.0f);
}

TEST_CASE("grads accumulate across backward calls until zeroed") {
    auto x = from_vector<float>({2}, {3, -2}, true);
    auto l1 = sum(x);
    backward(l1);
    auto l2 = sum(x);
    backward(l2);
    CHECK((*x.grad)[0] == 2.0f);
    CHECK((*x.grad)[1] == 2.0f);
    x.zero_grad();
    auto l3 = sum(x);
    backward(l3);
    CHECK((*x.grad)[0] == 1.0f);
}

TEST_CASE("diamond reuse visits each node once") {
    auto x = from_vector<float>({2}, {1.5f, -0.5f}, true);
    auto z = add(mul(x, x), mul(x, x));
    auto loss = sum(z);
    backward(loss);
    CHECK((*x.grad)[0] == doctest::Approx(4.0 * 1.5).epsilon(1e-6));
    CHECK((*x.grad)[1] == doctest::Approx(4.0 * -0.5).epsilon(1e-6));
    CHECK(Graph::current().size() == 0);  // freed after backward
}

TEST_CASE("backward contract errors") {
    auto x = from_vector<float>({2}, {1, 2}, true);
    auto y = mul(x, x);
    CHECK_THROWS_AS(backward(y), contract_error);
    Graph::current().clear();

    auto c = from_vector<float>({1}, {3});  // not tracked
    CHECK_THROWS_AS(backward(c), contract_error);
}

TEST_CASE("no-grad scope records nothing") {
    auto x = from_vector<float>({2}, {1, 2}, true);
    {
        NoGrad ng;
        auto y = mul(x, x);
        CHECK(!y.requires_grad);
        CHECK(Graph::current().size() == 0);
    }
    auto y = mul(x, x);
    CHECK(y.requires_grad);
    CHECK(Graph::current().size() == 1);
    Graph::current().clear();
}

TEST_CASE("reshape permute slice concat round trips") {
    Rng rng(11);
    auto x = random_tensor<float>(rng, {2, 3, 4}, 1.0f, true);

    auto r = reshape(x, {6, 4});
    CHECK(r.shape == std::vector<int>{6, 4});
    CHECK(r.data == x.data);  // view, no copy
    auto r2 = reshape(x, {2, -1});
    CHECK(r2.shape == std::vector<int>{2, 12});
    CHECK_THROWS_AS((void)reshape(x, {5, 5}), dimension_error);
    CHECK_THROWS_AS((void)reshape(x, {-1, -1}), dimension_error);

    auto p = permute(x, {2, 0, 1});
    REQUIRE(p.shape == std::vector<int>{4, 2, 3});
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 4; ++c)
                CHECK((*p.data)[static_cast<std::size_t>((c * 2 + a) * 3 + b)] ==
                      (*x.data)[static_cast<std::size_t>((a * 3 + b) * 4 + c)]);
    auto pp = permute(p, {1, 2, 0});
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK((*pp.data)[i] == (*x.data)[i]);

    auto t = transpose(reshape(x, {6, 4}));
    CHECK(t.shape == std::vector<int>{4, 6});

    auto s1 = slice(x, 1, 0, 2);
    auto s2 = slice(x, 1, 2, 1);
    auto back = concat({s1, s2}, 1);
    REQUIRE(back.shape == x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK((*back.data)[i] == (*x.data)[i]);
    CHECK_THROWS_AS((void)slice(x, 1, 2, 2), dimension_error);

    Graph::current().clear();
    x.zero_grad();

    // Gradient flows through the view chain back to x.
    auto loss = sum(mul(permute(reshape(x, {6, 4}), {1, 0}),
                        permute(reshape(x, {6, 4}), {1, 0})));
    backward(loss);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK((*x.grad)[i] == doctest::Approx(2.0 * (*x.data)[i]).epsilon(1e-6));
}

TEST_CASE("broadcast helpers match hand results") {
    auto x = from_vector<float>({2, 3}, {1, 2, 3, 4, 5, 6}, true);
    auto v = from_vector<float>({3}, {10, 20, 30}, true);
    auto y = add_rowvec(x, v);
    CHECK((*y.data)[0] == 11.0f);
    CHECK((*y.data)[5] == 36.0f);
    auto loss = sum(y);
    backward(loss);
    CHECK((*v.grad)[0] == 2.0f);  // two rows fold into each lane
    CHECK((*x.grad)[0] == 1.0f);

    auto img = from_vector<float>({1, 2, 2, 2}, {0, 0, 0, 0, 1, 1, 1, 1}, true);
    auto cv = from_vector<float>({2}, {5, 7}, true);
    auto yc = add_channels(img, cv);
    CHECK((*yc.data)[0] == 5.0f);
    CHECK((*yc.data)[4] == 8.0f);
    auto bv = from_vector<float>({1, 2}, {5, 7}, true);
    auto yb = add_channels(img, bv);
    CHECK((*yb.data)[7] == 8.0f);

    auto scores = from_vector<float>({2, 2, 2}, {0, 0, 0, 0, 1, 1, 1, 1}, true);
    auto mask2 = from_vector<float>({2, 2}, {0, -1, 0, 0});
    auto masked = add_bcast0(scores, mask2);
    CHECK((*masked.data)[1] == -1.0f);
    CHECK((*masked.data)[5] == 0.0f);

    auto xb = from_vector<float>({2, 3}, {1, 1, 1, 2, 2, 2}, true);
    auto coef = from_vector<float>({2}, {2, -1}, true);
    auto ys = scale_batch(xb, coef);
    CHECK((*ys.data)[0] == 2.0f);
    CHECK((*ys.data)[3] == -2.0f);
    Graph::current().clear();
}

TEST_CASE("embedding lookup forward and scatter grads") {
    auto table = from_vector<float>({4, 2}, {0, 1, 10, 11, 20, 21, 30, 31}, true);
    auto out = embedding_lookup(table, {1, 3, 1});
    REQUIRE(out.shape == std::vector<int>{3, 2});
    CHECK((*out.data)[0] == 10.0f);
    CHECK((*out.data)[2] == 30.0f);
    CHECK((*out.data)[4] == 10.0f);
    auto loss = sum(out);
    backward(loss);
    CHECK((*table.grad)[0] == 0.0f);   // row 0 untouched
    CHECK((*table.grad)[2] == 2.0f);   // row 1 hit twice
    CHECK((*table.grad)[6] == 1.0f);   // row 3 once
    CHECK_THROWS_AS((void)embedding_lookup(table, {4}), dimension_error);
}

TEST_CASE("mse and cross_entropy values") {
    auto a = from_vector<float>({2, 2}, {1, 2, 3, 4});
    auto b = from_vector<float>({2, 2}, {1, 0, 3, 0});
    CHECK(mse(a, b).item() == doctest::Approx((4.0 + 16.0) / 4.0).epsilon(1e-6));

    auto logits = from_vector<float>({1, 3}, {1, 2, 3});
    CHECK(cross_entropy(logits, {2}).item() ==
          doctest::Approx(0.40760596444438064).epsilon(1e-6));
    // Uniform logits cost log(V).
    auto flat = zeros<float>({2, 5});
    CHECK(cross_entropy(flat, {0, 4}).item() ==
          doctest::Approx(std::log(5.0)).epsilon(1e-6));
    CHECK_THROWS_AS((void)cross_entropy(logits, {3}), dimension_error);
    CHECK_THROWS_AS((void)cross_entropy(logits, {0, 1}), dimension_error);
}

TEST_CASE("adamw zero grad and zero decay leaves params unchanged") {
    ParamRegistry reg;
    Rng rng(12);
    auto& p = reg.add("p", random_tensor<float>(rng, {4, 4}, 1.0f, true));
    auto before = *p.data;
    AdamWConfig cfg;
    cfg.weight_decay = 0.0f;
    AdamW opt(reg, cfg);
    opt.step(0.1f);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK((*p.data)[i] == before[i]);
}

TEST_CASE("adamw single step shrinks x on a quadratic") {
    ParamRegistry reg;
    auto& x = reg.add("x", from_vector<float>({1}, {1.0f}, true));
    AdamW opt(reg, {});
    auto loss = sum(mul(x, x));
    backward(loss);
    opt.step(0.1f);
    CHECK(std::abs((*x.data)[0]) < 1.0f);
    CHECK(opt.steps() == 1);
}

TEST_CASE("adamw converges on a 2-d quadratic in 200 steps") {
    ParamRegistry reg;
    auto& p = reg.add("p", from_vector<float>({2}, {1.0f, -1.0f}, true));
    auto target = from_vector<float>({2}, {0.3f, -0.7f});
    AdamW opt(reg, {});
    float last = 0.0f;
    for (int t = 0; t < 200; ++t) {
        reg.zero_grads();
        auto d = sub(p, target);
        auto loss = sum(mul(d, d));
        last = loss.item();
        backward(loss);
        opt.step(0.1f * (1.0f - static_cast<float>(t) / 200.0f));
    }
    CHECK(last < 1e-4f);
}

TEST_CASE("adamw missing grad raises") {
    ParamRegistry reg;
    auto& p = reg.add("p", from_vector<float>({2}, {1, 2}, true));
    p.grad.reset();  // simulate a parameter that never saw backward
    p.requires_grad = false;
    AdamW opt(reg, {});
    CHECK_THROWS_AS(opt.step(0.1f), contract_error);
}

TEST_CASE("param registry names, counts, checksums") {
    ParamRegistry reg;
    Rng rng(13);
    Linear lin;
    lin.init(reg, "proj", 4, 3, rng, 0.1f);
    LayerNorm ln;
    ln.init(reg, "norm", 3);
    CHECK(reg.total_params() == 4 * 3 + 3 + 3 + 3);
    CHECK(reg.contains("proj.w"));
    CHECK(reg.contains("norm.g"));
    CHECK_THROWS_AS(reg.add("proj.w", zeros<float>({1}, true)), state_error);
    CHECK_THROWS_AS(reg.at("nope"), state_error);
    CHECK_THROWS_AS(reg.add("c", zeros<float>({1})), contract_error);

    const auto h1 = reg.checksum();
    CHECK(h1 == reg.checksum());
    (*reg.at("proj.w").data)[0] += 1.0f;
    CHECK(h1 != reg.checksum());
}

TEST_CASE("linear folds leading dims") {
    ParamRegistry reg;
    Rng rng(14);
    Linear lin;
    lin.init(reg, "l", 4, 2, rng, 0.5f);
    auto x3 = random_tensor<float>(rng, {2, 3, 4});
    auto y3 = lin(x3);
    REQUIRE(y3.shape == std::vector<int>{2, 3, 2});
    auto x2 = reshape(x3, {6, 4});
    auto y2 = lin(x2);
    for (std::size_t i = 0; i < y3.numel(); ++i) CHECK((*y3.data)[i] == (*y2.data)[i]);
    Graph::current().clear();
}

TEST_CASE("results are bit-identical for any thread count") {
    std::vector<std::vector<float>> outs, grads;
    const int prev = thread_count();
    for (int threads : {1, 2, 4}) {
        set_thread_count(threads);
        Rng rng(15);
        auto x = random_tensor<float>(rng, {2, 3, 8, 8}, 1.0f, true);
        auto w = random_tensor<float>(rng, {4, 3, 3, 3}, 0.3f, true);
        auto g = random_tensor<float>(rng, {8}, 0.5f, true);
        auto bb = random_tensor<float>(rng, {8}, 0.5f, true);
        auto wm = random_tensor<float>(rng, {64, 8}, 0.2f, true);

        auto h = gelu(conv2d(x, w));
        auto m = matmul(reshape(h, {-1, 64}), wm);
        auto n = layer_norm(m, g, bb);
        auto sm = softmax(n, -1);
        auto loss = mse(sm, zeros<float>({8, 8}));
        backward(loss);

        outs.push_back(*sm.data);
        auto all = *x.grad;
        all.insert(all.end(), w.grad->begin(), w.grad->end());
        all.insert(all.end(), g.grad->begin(), g.grad->end());
        all.insert(all.end(), wm.grad->begin(), wm.grad->end());
        grads.push_back(all);
    }
    set_thread_count(prev);
    for (int i = 1; i < 3; ++i) {
        CHECK(std::memcmp(outs[0].data(), outs[static_cast<std::size_t>(i)].data(),
                          outs[0].size() * sizeof(float)) == 0);
        CHECK(std::memcmp(grads[0].data(), grads[static_cast<std::size_t>(i)].data(),
                          grads[0].size() * sizeof(float)) == 0);
    }
}

TEST_CASE("independent graphs on separate threads") {
    // Each thread trains its own parameter against a shared frozen input; the
    // per-thread grads must match the serial result exactly.
    Rng rng(16);
    auto x = random_tensor<float>(rng, {4, 4});

    std::vector<float> expected;
    {
        auto p = from_vector<float>({4, 4}, *x.data, true);
        auto loss = mse(matmul(p, p), x);
        backward(loss);
        expected = *p.grad;
    }

    std::vector<int> ok(4, 0);
#pragma omp parallel for num_threads(4)
    for (int i = 0; i < 4; ++i) {
        auto p = from_vector<float>({4, 4}, *x.data, true);
        auto loss = mse(matmul(p, p), x);
        backward(loss);
        ok[static_cast<std::size_t>(i)] =
            std::memcmp(p.grad->data(), expected.data(), expected.size() * sizeof(float)) == 0;
    }
    for (int v : ok) CHECK(v == 1);
}

TEST_CASE("no NaN or Inf from finite inputs across 1000 fuzz cases") {
    const bool prev = finite_checks_enabled();
    set_finite_checks(true);  // ops throw on any non-finite output
    Rng rng(17);
    for (int iter = 0; iter < 1000; ++iter) {
        const float scale = static_cast<float>(std::pow(10.0, rng.uniform(-2.0, 2.0)));
        const int kind = static_cast<int>(rng.uniform_int(0, 7));
        switch (kind) {
            case 0: {
                auto a = random_tensor<float>(rng, {3, 4}, scale);
                auto b = random_tensor<float>(rng, {4, 2}, scale);
                (void)matmul(a, b);
                break;
            }
            case 1: {
                auto x = random_tensor<float>(rng, {1, 2, 4, 4}, scale);
                auto w = random_tensor<float>(rng, {3, 2, 3, 3}, scale);
                (void)conv2d(x, w);
                break;
            }
            case 2: {
                auto x = random_tensor<float>(rng, {5, 6}, scale);
                (void)softmax(x, static_cast<int>(rng.uniform_int(0, 1)));
                break;
            }
            case 3: {
                auto x = random_tensor<float>(rng, {4, 6}, scale);
                (void)layer_norm(x, full<float>({6}, 1.0f), zeros<float>({6}));
                break;
            }
            case 4: {
                auto x = random_tensor<float>(rng, {10}, scale);
                (void)gelu(x);
                (void)silu(x);
                break;
            }
            case 5: {
                auto a = random_tensor<float>(rng, {3, 3}, scale);
                auto b = random_tensor<float>(rng, {3, 3}, scale);
                (void)mse(a, b);
                break;
            }
            case 6: {
                auto x = random_tensor<float>(rng, {2, 8}, scale);
                (void)cross_entropy(x, {static_cast<int>(rng.uniform_int(0, 7)),
                                        static_cast<int>(rng.uniform_int(0, 7))});
                break;
            }
            default: {
                auto x = random_tensor<float>(rng, {6}, scale);
                auto s = softmax(x, 0);
                (void)mean(mul(s, s));
                break;
            }
        }
    }
    set_finite_checks(prev);
}
