#include <gtest/gtest.h>

#include <cmath>

#include "msnn/layers.hpp"
#include "msnn/rng.hpp"
#include "oracles.hpp"

using msnn::BatchNorm;
using msnn::Conv2d;
using msnn::FullyConnected;
using msnn::GlobalAvgPool;
using msnn::MaxPool2;
using msnn::Relu;
using msnn::Softmax;
using msnn::Tensor;

namespace {

template <typename T>
Tensor<T> random_tensor(int n, int h, int w, int c, msnn::Rng& rng) {
    Tensor<T> t(n, h, w, c);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    return t;
}

Conv2d<float> one_by_one(float value) {
    Conv2d<float> l;
    l.filter_h = l.filter_w = 1;
    l.in_c = l.out_c = 1;
    l.w = {value};
    l.b = {0.0f};
    return l;
}

} // namespace

TEST(Conv2d, IdentityFilterReproducesInput) {
    msnn::Rng rng(1);
    auto x = random_tensor<float>(2, 4, 4, 1, rng);
    auto y = one_by_one(1.0f).forward(x);
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_FLOAT_EQ(y.data[i], x.data[i]);
}

TEST(Conv2d, ScalarFilterScales) {
    Tensor<float> x(1, 2, 2, 1);
    x.data = {1, 2, 3, 4};
    auto y = one_by_one(2.0f).forward(x);
    EXPECT_FLOAT_EQ(y.data[0], 2);
    EXPECT_FLOAT_EQ(y.data[1], 4);
    EXPECT_FLOAT_EQ(y.data[2], 6);
    EXPECT_FLOAT_EQ(y.data[3], 8);
}

TEST(Conv2d, SamePaddingKeepsTableOneShape) {
    // 512x512x1 through 8 filters of 6x6, stride 1, same padding
    Conv2d<float> l;
    l.filter_h = l.filter_w = 6;
    l.in_c = 1;
    l.out_c = 8;
    l.pad = msnn::same_padding(6, 6);
    l.w.assign(6 * 6 * 1 * 8, 0.01f);
    l.b.assign(8, 0.0f);
    Tensor<float> x(1, 512, 512, 1);
    auto y = l.forward(x);
    EXPECT_EQ(y.h, 512);
    EXPECT_EQ(y.w, 512);
    EXPECT_EQ(y.c, 8);
}

TEST(Conv2d, MatchesDirectConvolutionOracle) {
    msnn::Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        Conv2d<float> l;
        l.filter_h = 2 + static_cast<int>(rng.below(3));
        l.filter_w = 2 + static_cast<int>(rng.below(3));
        l.in_c = 1 + static_cast<int>(rng.below(3));
        l.out_c = 1 + static_cast<int>(rng.below(4));
        l.pad = msnn::same_padding(l.filter_h, l.filter_w);
        l.w.resize(static_cast<std::size_t>(l.filter_h) * l.filter_w * l.in_c * l.out_c);
        for (auto& v : l.w) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        l.b.resize(l.out_c);
        for (auto& v : l.b) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        auto x = random_tensor<float>(2, 7, 6, l.in_c, rng);
        auto got = l.forward(x);
        auto want = oracle::conv2d_direct(x, l.w, l.b, l.filter_h, l.filter_w, l.out_c, 1, l.pad);
        ASSERT_TRUE(got.same_shape(want));
        for (std::size_t i = 0; i < got.size(); ++i)
            EXPECT_NEAR(got.data[i], want.data[i], 1e-6 * std::max(1.0f, std::abs(want.data[i])));
    }
}

TEST(Conv2d, ChannelMismatchThrows) {
    auto l = one_by_one(1.0f);
    Tensor<float> x(1, 2, 2, 3);
    EXPECT_THROW(l.forward(x), msnn::shape_error);
}

TEST(BatchNorm, HandCaseTwoValues) {
    // batch values {1,3} in one channel: mean 2, variance 1 -> {-1,+1}
    BatchNorm<float> l;
    l.channels = 1;
    l.epsilon = 1e-12;
    l.gamma = {1.0f};
    l.beta = {0.0f};
    l.running_mean = {0.0f};
    l.running_var = {1.0f};
    Tensor<float> x(2, 1, 1, 1);
    x.data = {1, 3};
    typename BatchNorm<float>::Tape tape;
    auto y = l.forward_train(x, tape);
    EXPECT_NEAR(y.data[0], -1.0f, 1e-6);
    EXPECT_NEAR(y.data[1], 1.0f, 1e-6);
}

TEST(BatchNorm, ZeroVarianceFallsBackToBeta) {
    BatchNorm<float> l;
    l.channels = 1;
    l.gamma = {1.0f};
    l.beta = {5.0f};
    l.running_mean = {0.0f};
    l.running_var = {1.0f};
    Tensor<float> x(3, 1, 1, 1);
    x.data = {2, 2, 2};
    typename BatchNorm<float>::Tape tape;
    auto y = l.forward_train(x, tape);
    for (float v : y.data) EXPECT_NEAR(v, 5.0f, 1e-5);
}

TEST(BatchNorm, GammaBetaAffine) {
    // normalized values {-1,+1} scaled by gamma=2, beta=1 -> {-1, 3}
    BatchNorm<float> l;
    l.channels = 1;
    l.epsilon = 1e-12;
    l.gamma = {2.0f};
    l.beta = {1.0f};
    l.running_mean = {0.0f};
    l.running_var = {1.0f};
    Tensor<float> x(2, 1, 1, 1);
    x.data = {1, 3};
    typename BatchNorm<float>::Tape tape;
    auto y = l.forward_train(x, tape);
    EXPECT_NEAR(y.data[0], -1.0f, 1e-6);
    EXPECT_NEAR(y.data[1], 3.0f, 1e-6);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
    msnn::Rng rng(3);
    BatchNorm<double> l;
    l.channels = 3;
    l.gamma.assign(3, 1.0);
    l.beta.assign(3, 0.0);
    l.running_mean.assign(3, 0.0);
    l.running_var.assign(3, 1.0);
    auto x = random_tensor<double>(4, 5, 5, 3, rng);
    typename BatchNorm<double>::Tape tape;
    auto y = l.forward_train(x, tape);
    std::size_t m = y.size() / 3;
    for (int ch = 0; ch < 3; ++ch) {
        double mean = 0, var = 0;
        for (std::size_t i = 0; i < m; ++i) mean += y.data[i * 3 + ch];
        mean /= static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
            double d = y.data[i * 3 + ch] - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        EXPECT_LT(std::abs(mean), 1e-5);
        EXPECT_NEAR(var, 1.0, 1e-4);
    }
}

TEST(BatchNorm, InferModeIgnoresBatchComposition) {
    BatchNorm<float> l;
    l.channels = 1;
    l.gamma = {1.0f};
    l.beta = {0.0f};
    l.running_mean = {0.5f};
    l.running_var = {4.0f};
    Tensor<float> lone(1, 1, 1, 1);
    lone.data = {2.0f};
    Tensor<float> crowd(3, 1, 1, 1);
    crowd.data = {2.0f, -7.0f, 11.0f};
    auto alone = l.forward(lone);
    auto mixed = l.forward(crowd);
    EXPECT_FLOAT_EQ(alone.data[0], mixed.data[0]);
}

TEST(Relu, PiecewiseDefinition) {
    Tensor<float> x(1, 1, 3, 1);
    x.data = {-2, 3, 0};
    Relu<float> l;
    auto y = l.forward(x);
    EXPECT_EQ(y.data[0], 0.0f);
    EXPECT_EQ(y.data[1], 3.0f);
    EXPECT_EQ(y.data[2], 0.0f);
}

TEST(Relu, BackwardGatesOnInputSign) {
    Tensor<float> x(1, 1, 3, 1);
    x.data = {-2, 3, 0};
    Relu<float> l;
    typename Relu<float>::Tape tape;
    l.forward(x, &tape);
    Tensor<float> gy(1, 1, 3, 1);
    gy.data = {10, 10, 10};
    auto gx = l.backward(tape, gy);
    EXPECT_EQ(gx.data[0], 0.0f);
    EXPECT_EQ(gx.data[1], 10.0f);
    EXPECT_EQ(gx.data[2], 0.0f);
}

TEST(MaxPool, WindowMaximum) {
    Tensor<float> x(1, 2, 2, 1);
    x.data = {1, 2, 3, 4};
    MaxPool2<float> l;
    auto y = l.forward(x);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_EQ(y.data[0], 4.0f);
}

TEST(MaxPool, ConstantTensorHalvesExtent) {
    Tensor<float> x(1, 4, 6, 2);
    for (auto& v : x.data) v = 3.25f;
    MaxPool2<float> l;
    auto y = l.forward(x);
    EXPECT_EQ(y.h, 2);
    EXPECT_EQ(y.w, 3);
    EXPECT_EQ(y.c, 2);
    for (float v : y.data) EXPECT_EQ(v, 3.25f);
}

TEST(MaxPool, OddExtentThrows) {
    Tensor<float> x(1, 3, 4, 1);
    EXPECT_THROW(MaxPool2<float>{}.forward(x), msnn::shape_error);
}

TEST(MaxPool, BackwardRoutesToSingleArgmax) {
    Tensor<float> x(1, 2, 2, 1);
    x.data = {1, 4, 4, 2}; // tie between (0,1) and (1,0); first in scan order wins
    MaxPool2<float> l;
    typename MaxPool2<float>::Tape tape;
    l.forward(x, &tape);
    Tensor<float> gy(1, 1, 1, 1);
    gy.data = {1.0f};
    auto gx = l.backward(tape, gy);
    EXPECT_EQ(gx.data[0], 0.0f);
    EXPECT_EQ(gx.data[1], 1.0f); // scan-order winner
    EXPECT_EQ(gx.data[2], 0.0f);
    EXPECT_EQ(gx.data[3], 0.0f);
}

TEST(Gap, SpatialMean) {
    Tensor<float> x(1, 2, 2, 1);
    x.data = {1, 2, 3, 4};
    GlobalAvgPool<float> l;
    auto y = l.forward(x);
    ASSERT_EQ(y.size(), 1u);
    EXPECT_FLOAT_EQ(y.data[0], 2.5f);
}

TEST(Gap, TableOneShape) {
    Tensor<float> x(1, 16, 16, 256);
    for (auto& v : x.data) v = 1.5f;
    auto y = GlobalAvgPool<float>{}.forward(x);
    EXPECT_EQ(y.h, 1);
    EXPECT_EQ(y.w, 1);
    EXPECT_EQ(y.c, 256);
    for (float v : y.data) EXPECT_FLOAT_EQ(v, 1.5f);
}

TEST(FullyConnected, IdentityWeights) {
    FullyConnected<float> l;
    l.in_dim = l.out_dim = 3;
    l.w.assign(9, 0.0f);
    for (int i = 0; i < 3; ++i) l.w[i * 3 + i] = 1.0f;
    l.b.assign(3, 0.0f);
    Tensor<float> x(1, 1, 1, 3);
    x.data = {7, -2, 0.5f};
    auto y = l.forward(x);
    for (int i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(y.data[i], x.data[i]);
}

TEST(FullyConnected, TableOneParameterCounts) {
    FullyConnected<float> fc1;
    fc1.in_dim = 256;
    fc1.out_dim = 512;
    EXPECT_EQ(fc1.param_count(), 131584);
    FullyConnected<float> fc2;
    fc2.in_dim = 512;
    fc2.out_dim = 2;
    EXPECT_EQ(fc2.param_count(), 1026);
}

TEST(FullyConnected, DimensionMismatchThrows) {
    FullyConnected<float> l;
    l.in_dim = 4;
    l.out_dim = 2;
    l.w.assign(8, 0.0f);
    l.b.assign(2, 0.0f);
    Tensor<float> x(1, 1, 1, 3);
    EXPECT_THROW(l.forward(x), msnn::shape_error);
}

TEST(FullyConnected, BackwardHandCase) {
    // W=[1], b=0, x=2, L=y^2: dL/dW = 2*y*x = 8
    FullyConnected<double> l;
    l.in_dim = l.out_dim = 1;
    l.w = {1.0};
    l.b = {0.0};
    Tensor<double> x(1, 1, 1, 1);
    x.data = {2.0};
    typename FullyConnected<double>::Tape tape;
    auto y = l.forward(x, &tape);
    Tensor<double> gy(1, 1, 1, 1);
    gy.data = {2.0 * y.data[0]}; // dL/dy for L = y^2
    msnn::GradBlobs<double> grads;
    l.backward(tape, gy, grads);
    EXPECT_DOUBLE_EQ(grads[0][0], 8.0);
}

TEST(Softmax, SymmetricLogits) {
    Tensor<float> x(1, 1, 1, 2);
    x.data = {0, 0};
    auto y = Softmax<float>{}.forward(x);
    EXPECT_FLOAT_EQ(y.data[0], 0.5f);
    EXPECT_FLOAT_EQ(y.data[1], 0.5f);
}

TEST(Softmax, ClosedFormCase) {
    Tensor<double> x(1, 1, 1, 2);
    x.data = {std::log(2.0), 0.0};
    auto y = Softmax<double>{}.forward(x);
    EXPECT_NEAR(y.data[0], 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(y.data[1], 1.0 / 3.0, 1e-12);
}

TEST(Softmax, ShiftInvarianceAndNormalization) {
    msnn::Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<double> x(1, 1, 1, 5);
        for (auto& v : x.data) v = rng.uniform(-3.0, 3.0);
        Tensor<double> shifted = x;
        double shift = rng.uniform(-50.0, 50.0);
        for (auto& v : shifted.data) v += shift;
        auto a = Softmax<double>{}.forward(x);
        auto b = Softmax<double>{}.forward(shifted);
        double sum = 0;
        for (int i = 0; i < 5; ++i) {
            EXPECT_NEAR(a.data[i], b.data[i], 1e-12);
            EXPECT_GT(a.data[i], 0.0);
            sum += a.data[i];
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Loss, PerfectPredictionHasZeroMse) {
    Tensor<double> probs(1, 1, 1, 2);
    probs.data = {1.0, 0.0};
    auto res = msnn::loss_with_grad(probs, {0}, msnn::LossKind::Mse);
    EXPECT_DOUBLE_EQ(res.value, 0.0);
}

TEST(Loss, HandCases) {
    Tensor<double> probs(1, 1, 1, 2);
    probs.data = {0.5, 0.5};
    auto mse = msnn::loss_with_grad(probs, {0}, msnn::LossKind::Mse);
    EXPECT_NEAR(mse.value, 0.25, 1e-12); // ((0.5)^2 + (0.5)^2) / 2
    auto xent = msnn::loss_with_grad(probs, {0}, msnn::LossKind::CrossEntropy);
    EXPECT_NEAR(xent.value, std::log(2.0), 1e-12);
}
