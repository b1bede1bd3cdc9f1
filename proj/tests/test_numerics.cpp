// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "tcdnet/errors.hpp"
#include "tcdnet/gradcheck.hpp"
#include "tcdnet/ops.hpp"
#include "gradient_cases.hpp"
#include "test_support.hpp"

using namespace tcdnet;
using tcdnet::testing::PrimitiveCase;
using tcdnet::testing::primitive_cases;
using tcdnet::testing::project;
using tcdnet::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;
constexpr double kStep = 1e-5;

Tensor eval(const std::function<Var(Graph&)>& f) {
    Graph g(false);
    return g.value(f(g));
}

}  // namespace

TEST(Matmul, IdentityAndDirectProduct) {
    auto m = Tensor::matrix({{1, 2}, {3, 4}});
    auto out = eval([&](Graph& g) { return matmul(g.constant(Tensor::matrix({{1, 0}, {0, 1}})), g.constant(m)); });
    EXPECT_EQ(out, m);

    auto dot = eval([](Graph& g) {
        return matmul(g.constant(Tensor::matrix({{1, 2}})), g.constant(Tensor::matrix({{3}, {4}})));
    });
    EXPECT_EQ(dot.shape(), (Shape{1, 1}));
    EXPECT_DOUBLE_EQ(dot[0], 11.0);

    auto zeros = eval([](Graph& g) {
        return matmul(g.constant(Tensor::zeros({3, 2})), g.constant(random_tensor({2, 5}, 1)));
    });
    EXPECT_EQ(zeros, Tensor::zeros({3, 5}));
}

TEST(Matmul, ShapeMismatchIsDimensionError) {
    Graph g;
    EXPECT_THROW(matmul(g.constant(Tensor::zeros({2, 3})), g.constant(Tensor::zeros({2, 3}))), DimensionError);
}

TEST(DepthwiseConv, IdentityKernelAndBias) {
    auto x = random_tensor({2, 4, 5}, 2);
    Tensor delta({2, 3, 3});
    delta.at(0, 1, 1) = 1.0;
    delta.at(1, 1, 1) = 1.0;
    auto out = eval([&](Graph& g) { return depthwise_conv3x3(g.constant(x), g.constant(delta), g.constant(Tensor::zeros({2}))); });
    EXPECT_EQ(out, x);

    auto biased = eval([&](Graph& g) {
        return depthwise_conv3x3(g.constant(x), g.constant(Tensor::zeros({2, 3, 3})), g.constant(Tensor::vector({0.5, -1.5})));
    });
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(biased[i], 0.5);
    for (std::size_t i = 20; i < 40; ++i) EXPECT_EQ(biased[i], -1.5);
}

TEST(DepthwiseConv, HandConvolutionWithZeroPadding) {
    auto out = eval([](Graph& g) {
        return depthwise_conv3x3(g.constant(Tensor::ones({1, 3, 3})), g.constant(Tensor::ones({1, 3, 3})),
                                 g.constant(Tensor::zeros({1})));
    });
    EXPECT_DOUBLE_EQ(out.at(0, 1, 1), 9.0);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 4.0);
    EXPECT_DOUBLE_EQ(out.at(0, 2, 2), 4.0);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 1), 6.0);
}

TEST(DepthwiseConv, BadKernelShape) {
    Graph g;
    EXPECT_THROW(depthwise_conv3x3(g.constant(Tensor::zeros({2, 4, 4})), g.constant(Tensor::zeros({2, 5, 5})),
                                   g.constant(Tensor::zeros({2}))),
                 DimensionError);
}

TEST(LayerNorm, Examples) {
    auto ones = Tensor::ones({3});
    auto zero = Tensor::zeros({3});
    auto constant_row = eval([&](Graph& g) {
        return layer_norm(g.constant(Tensor::vector({2.5, 2.5, 2.5})), g.constant(ones), g.constant(zero));
    });
    EXPECT_EQ(constant_row, Tensor::zeros({3}));

    auto pm = eval([](Graph& g) {
        return layer_norm(g.constant(Tensor::vector({1, -1})), g.constant(Tensor::ones({2})),
                          g.constant(Tensor::zeros({2})), 1e-14);
    });
    EXPECT_NEAR(pm[0], 1.0, 1e-9);
    EXPECT_NEAR(pm[1], -1.0, 1e-9);

    auto beta = Tensor::vector({0.1, 0.2, 0.3});
    auto collapsed = eval([&](Graph& g) {
        return layer_norm(g.constant(random_tensor({4, 3}, 3)), g.constant(zero), g.constant(beta));
    });
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(collapsed.at(r, i), beta[i]);
    }
}

TEST(LayerNorm, RowStatistics) {
    auto x = random_tensor({16, 32}, 4, -100.0, 100.0);
    auto y = eval([&](Graph& g) {
        return layer_norm(g.constant(x), g.constant(Tensor::ones({32})), g.constant(Tensor::zeros({32})));
    });
    for (std::size_t r = 0; r < 16; ++r) {
        double mu = 0.0, var = 0.0;
        for (std::size_t i = 0; i < 32; ++i) mu += y.at(r, i);
        mu /= 32;
        for (std::size_t i = 0; i < 32; ++i) var += (y.at(r, i) - mu) * (y.at(r, i) - mu);
        var /= 32;
        EXPECT_LT(std::abs(mu), 1e-10);
        EXPECT_NEAR(var, 1.0, 1e-8);
    }
}

TEST(Gelu, Examples) {
    auto y = eval([](Graph& g) { return gelu(g.constant(Tensor::vector({0.0, 10.0, 1.0}))); });
    EXPECT_EQ(y[0], 0.0);
    EXPECT_NEAR(y[1], 10.0, 1e-9);
    // Tanh-approximation evaluated independently: 0.8411919906...
    EXPECT_NEAR(y[2], 0.8411919906082768, 1e-12);
    EXPECT_NEAR(y[2], 0.8412, 1e-4);
}

TEST(Softmax, Examples) {
    auto y = eval([](Graph& g) {
        return softmax_rows(g.constant(Tensor::matrix({{0, 0, 0}, {1000, 0, 0}, {std::log(1.0), std::log(2.0), std::log(3.0)}})));
    });
    EXPECT_DOUBLE_EQ(y.at(0, 0), 1.0 / 3);
    EXPECT_NEAR(y.at(1, 0), 1.0, 1e-15);
    EXPECT_NEAR(y.at(1, 1), 0.0, 1e-15);
    EXPECT_NEAR(y.at(2, 0), 1.0 / 6, 1e-15);
    EXPECT_NEAR(y.at(2, 1), 2.0 / 6, 1e-15);
    EXPECT_NEAR(y.at(2, 2), 3.0 / 6, 1e-15);

    auto pair = eval([](Graph& g) { return softmax_rows(g.constant(Tensor::vector({0, 0}))); });
    EXPECT_DOUBLE_EQ(pair[0], 0.5);
}

TEST(Softmax, RowsSumToOne) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto y = eval([&](Graph& g) { return softmax_rows(g.constant(random_tensor({8, 13}, seed, -50, 50))); });
        for (std::size_t r = 0; r < 8; ++r) {
            double s = 0.0;
            for (std::size_t i = 0; i < 13; ++i) {
                EXPECT_GE(y.at(r, i), 0.0);
                EXPECT_LE(y.at(r, i), 1.0);
                s += y.at(r, i);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Backward, SumAndSquare) {
    auto x = random_tensor({3, 4}, 5);
    {
        Graph g;
        Var xv = g.input(x);
        g.backward(sum(xv));
        EXPECT_EQ(g.grad(xv), Tensor::ones({3, 4}));
    }
    {
        Graph g;
        Var xv = g.input(x);
        g.backward(sum(mul(xv, xv)));
        auto gx = g.grad(xv);
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(gx[i], 2 * x[i]);
    }
}

TEST(Backward, FanOutAccumulates) {
    Graph g;
    Var x = g.input(random_tensor({5}, 6));
    g.backward(add(sum(x), sum(x)));
    EXPECT_EQ(g.grad(x), Tensor(Shape{5}, 2.0));
}

TEST(Backward, NonScalarLossRejected) {
    Graph g;
    Var x = g.input(random_tensor({2}, 7));
    EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
    Graph g;
    Var x = g.input(random_tensor({3}, 8));
    Var c = g.constant(random_tensor({3}, 9));
    g.backward(sum(mul(x, c)));
    EXPECT_FALSE(g.requires_grad(c));
    EXPECT_EQ(g.grad(c), Tensor::zeros({3}));
}

TEST(Backward, NonFiniteValueIsNumericError) {
    Graph g;
    Var x = g.input(Tensor::vector({1e300}));
    EXPECT_THROW(mul(x, x), NumericError);
}

TEST(GradCheck, SumIsExact) {
    EXPECT_LT(check_gradients([](Graph&, Var x) { return sum(x); }, random_tensor({4, 4}, 10)), 1e-9);
}

TEST(GradCheck, CorruptedBackwardRuleIsDetected) {
    // Forward x^2, backward claims 3x.
    auto broken = [](Graph& g, Var x) {
        Tensor out = x.value();
        out.clear_grad();
        for (double& v : out.data()) v = v * v;
        Var y = g.record("broken_square", std::move(out), {x}, [x](Graph& gg, const Tensor&, std::span<const double> go) {
            auto gx = gg.grad_buffer(x);
            const auto& xv = gg.value(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 3.0 * xv[i] * go[i];
        });
        return sum(y);
    };
    EXPECT_GT(check_gradients(broken, random_tensor({6}, 11), kStep), 1e-2);
}

TEST(GradCheck, CharbonnierComposite) {
    auto f = [](Graph& g, Var x) {
        return mean(charbonnier(sub(x, g.constant(random_tensor({3, 5}, 12))), 1e-3));
    };
    EXPECT_LT(check_gradients(f, random_tensor({3, 5}, 13), kStep), kGradTol);
}

class PrimitiveGradients : public ::testing::TestWithParam<PrimitiveCase> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
    const auto& pc = GetParam();
    for (std::uint64_t seed = 100; seed < 103; ++seed) {
        auto x = random_tensor(pc.shape, seed, pc.lo, pc.hi);
        auto f = [&](Graph& g, Var v) { return project(pc.op(g, v), seed + 1000); };
        EXPECT_LT(check_gradients(f, x, kStep), kGradTol) << pc.name << " seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradients, ::testing::ValuesIn(primitive_cases()),
                         [](const ::testing::TestParamInfo<PrimitiveCase>& info) { return std::string(info.param.name); });

TEST(Layout, PatchifyRoundTripIsIdentity) {
    auto img = random_tensor({3, 8, 12}, 30);
    auto back = eval([&](Graph& g) { return unpatchify(patchify(g.constant(img), 4), 3, 8, 12, 4); });
    EXPECT_EQ(back, img);
}

TEST(Layout, PatchifyIndexIsBijection) {
    auto idx = patchify_index(3, 8, 12, 4);
    std::vector<int> hits(idx.size(), 0);
    for (auto i : idx) ++hits.at(i);
    for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Layout, IndivisibleImageRejected) {
    Graph g;
    EXPECT_THROW(patchify(g.constant(Tensor::zeros({3, 10, 8})), 4), DimensionError);
}

TEST(AbsCosine, Examples) {
    auto v = eval([](Graph& g) {
        return abs_cosine_rows(g.constant(Tensor::matrix({{1, 0}, {1, 2}, {1, 2}, {1, 1}, {0, 0}})),
                               g.constant(Tensor::matrix({{0, 1}, {1, 2}, {-1, -2}, {1, 0}, {1, 0}})));
    });
    EXPECT_DOUBLE_EQ(v[0], 0.0);
    EXPECT_NEAR(v[1], 1.0, 1e-15);
    EXPECT_NEAR(v[2], 1.0, 1e-15);
    EXPECT_NEAR(v[3], 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_DOUBLE_EQ(v[4], 0.0);
}

TEST(Determinism, RepeatedEvaluationIsBitIdentical) {
    auto x = random_tensor({6, 8}, 31);
    auto run = [&] {
        Graph g;
        Var v = g.input(x);
        Var y = softmax_rows(matmul(gelu(v), transpose2d(v)));
        Var loss = sum(y);
        g.backward(loss);
        return std::pair{g.value(y), g.grad(v)};
    };
    auto a = run();
    auto b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}
