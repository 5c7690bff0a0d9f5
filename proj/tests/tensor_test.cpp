#include <gtest/gtest.h>

#include <cmath>

#include "druformer/ops.hpp"
#include "druformer/optimizer.hpp"
#include "druformer/tensor.hpp"

using namespace druformer;

TEST(TensorTest, ShapeDataInvariant) {
    Tensor t = Tensor::zeros({2, 3});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_THROW(Tensor::from_data({2, 3}, {1.0, 2.0}), std::invalid_argument);
}

TEST(TensorTest, MatmulIdentity) {
    Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor out = matmul(eye, a);
    EXPECT_EQ(out.data(), a.data());
}

TEST(TensorTest, MatmulAnnihilator) {
    Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    Tensor zero = Tensor::zeros({2, 2});
    Tensor out = matmul(a, zero);
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(TensorTest, MatmulShapeMismatchThrows) {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 3});
    EXPECT_THROW(matmul(a, b), std::invalid_argument);
}

TEST(TensorTest, SoftmaxSymmetry) {
    Tensor x = Tensor::zeros({3});
    Tensor y = softmax_lastdim(x);
    for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
}

TEST(TensorTest, SoftmaxStability) {
    Tensor x = Tensor::from_data({2}, {1000.0, 0.0});
    Tensor y = softmax_lastdim(x);
    EXPECT_NEAR(y.data()[0], 1.0, 1e-12);
    EXPECT_NEAR(y.data()[1], 0.0, 1e-12);
}

TEST(TensorTest, SoftmaxRowsSumToOne) {
    RngService rng(11);
    Tensor x = Tensor::zeros({5, 7});
    for (double& v : x.data()) v = rng.uniform(-20.0, 20.0);
    Tensor y = softmax_lastdim(x);
    for (int r = 0; r < 5; ++r) {
        double s = 0.0;
        for (int j = 0; j < 7; ++j) {
            double v = y.data()[static_cast<size_t>(r) * 7 + j];
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(TensorTest, LayerNormConstantRow) {
    Tensor x = Tensor::full({1, 4}, 5.0);
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta = Tensor::zeros({4});
    Tensor y = layer_norm(x, gamma, beta, 1e-5);
    for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(TensorTest, LayerNormTwoPoint) {
    Tensor x = Tensor::from_data({1, 2}, {1.0, 3.0});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor y = layer_norm(x, gamma, beta, 0.0);
    EXPECT_NEAR(y.data()[0], -1.0, 1e-9);
    EXPECT_NEAR(y.data()[1], 1.0, 1e-9);
}

TEST(TensorTest, LayerNormRowStats) {
    RngService rng(5);
    Tensor x = Tensor::zeros({4, 16});
    for (double& v : x.data()) v = rng.normal() * 3.0 + 1.0;
    Tensor gamma = Tensor::full({16}, 1.0);
    Tensor beta = Tensor::zeros({16});
    Tensor y = layer_norm(x, gamma, beta, 1e-5);
    for (int r = 0; r < 4; ++r) {
        double mean = 0.0, var = 0.0;
        for (int j = 0; j < 16; ++j) mean += y.data()[static_cast<size_t>(r) * 16 + j];
        mean /= 16.0;
        for (int j = 0; j < 16; ++j) {
            double d = y.data()[static_cast<size_t>(r) * 16 + j] - mean;
            var += d * d;
        }
        var /= 16.0;
        EXPECT_LT(std::fabs(mean), 1e-9);
        EXPECT_NEAR(var, 1.0, 1e-4);
    }
}

TEST(TensorTest, Conv2dIdentityKernelSubsamples) {
    Tensor x = Tensor::from_data({1, 4, 4}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
    Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor y = conv2d(x, k, 2);
    ASSERT_EQ(y.shape(), (std::vector<int>{1, 2, 2}));
    EXPECT_EQ(y.data(), (std::vector<double>{0, 2, 8, 10}));
}

TEST(TensorTest, Conv2dAllOnes) {
    Tensor x = Tensor::full({1, 4, 4}, 1.0);
    Tensor k = Tensor::full({1, 1, 2, 2}, 1.0);
    Tensor y = conv2d(x, k, 2);
    ASSERT_EQ(y.shape(), (std::vector<int>{1, 2, 2}));
    for (double v : y.data()) EXPECT_EQ(v, 4.0);
}

TEST(TensorTest, Conv2dKernelTooLargeThrows) {
    Tensor x = Tensor::zeros({1, 2, 2});
    Tensor k = Tensor::zeros({1, 1, 3, 3});
    EXPECT_THROW(conv2d(x, k, 1), std::invalid_argument);
}

TEST(TensorTest, NonFiniteForwardThrows) {
    Tensor a = Tensor::scalar(1e308);
    Tensor b = Tensor::scalar(1e308);
    EXPECT_THROW(add(a, b), std::runtime_error);
}

TEST(TapeTest, SquareGradient) {
    Tensor x = Tensor::scalar(3.0, true);
    Tape tape;
    Tensor loss = mul(x, x);
    tape.backward(loss);
    EXPECT_NEAR(x.grad()[0], 6.0, 1e-12);
}

TEST(TapeTest, IndependentLeafZeroGrad) {
    Tensor x = Tensor::scalar(3.0, true);
    Tensor y = Tensor::scalar(2.0, true);
    Tape tape;
    Tensor loss = mul(x, x);
    tape.backward(loss);
    EXPECT_FALSE(y.has_grad());  // never touched
    y.zero_grad();
    EXPECT_EQ(y.grad()[0], 0.0);
}

TEST(TapeTest, RepeatedBackwardAccumulates) {
    Tensor x = Tensor::scalar(3.0, true);
    Tape tape;
    Tensor loss = mul(x, x);
    tape.backward(loss);
    tape.backward(loss);
    EXPECT_NEAR(x.grad()[0], 12.0, 1e-12);
}

TEST(TapeTest, NonScalarLossThrows) {
    Tensor x = Tensor::zeros({2}, true);
    Tape tape;
    Tensor y = relu(x);
    EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(TapeTest, BackwardIsLinear) {
    RngService rng(3);
    Tensor x = Tensor::zeros({4}, true);
    for (double& v : x.data()) v = rng.normal();

    auto grads_for = [&](double a, double b) {
        x.zero_grad();
        Tape tape;
        Tensor shared = sigmoid(x);
        Tensor l1 = sum_all(mul(shared, shared));
        Tensor l2 = sum_all(shared);
        Tensor loss = add(scalar_mul(l1, a), scalar_mul(l2, b));
        tape.backward(loss);
        return x.grad();
    };

    auto g1 = grads_for(1.0, 0.0);
    auto g2 = grads_for(0.0, 1.0);
    auto gc = grads_for(2.5, -1.5);
    for (size_t i = 0; i < gc.size(); ++i) {
        EXPECT_NEAR(gc[i], 2.5 * g1[i] - 1.5 * g2[i], 1e-10);
    }
}

TEST(TapeTest, ForwardIsPure) {
    RngService rng(17);
    Tensor x = Tensor::zeros({3, 3}, true);
    for (double& v : x.data()) v = rng.normal();
    Tensor y1, y2;
    {
        Tape tape;
        y1 = softmax_lastdim(matmul(x, x));
    }
    {
        Tape tape;
        y2 = softmax_lastdim(matmul(x, x));
    }
    EXPECT_EQ(y1.data(), y2.data());
}

TEST(AdamWTest, ZeroGradZeroDecayLeavesParams) {
    ParamRegistry reg;
    Tensor p = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    reg.add("p", p);
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(reg, cfg);
    p.zero_grad();
    const auto before = p.data();
    opt.step();
    EXPECT_EQ(p.data(), before);
}

TEST(AdamWTest, DescendsQuadratic) {
    ParamRegistry reg;
    Tensor x = Tensor::scalar(1.0, true);
    reg.add("x", x);
    AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.weight_decay = 0.0;
    AdamW opt(reg, cfg);
    x.zero_grad();
    {
        Tape tape;
        Tensor loss = mul(x, x);
        tape.backward(loss);
    }
    opt.step();
    EXPECT_LT(x.data()[0] * x.data()[0], 1.0);
}

TEST(AdamWTest, DeterministicAcrossRuns) {
    auto run = [](uint64_t seed) {
        RngService rng(seed);
        ParamRegistry reg;
        Tensor w = Tensor::zeros({4, 4}, true);
        for (double& v : w.data()) v = rng.normal();
        reg.add("w", w);
        AdamWConfig cfg;
        cfg.lr = 1e-2;
        AdamW opt(reg, cfg);
        for (int i = 0; i < 5; ++i) {
            w.zero_grad();
            Tape tape;
            Tensor loss = sum_all(mul(w, w));
            tape.backward(loss);
            opt.step();
        }
        return w.data();
    };
    EXPECT_EQ(run(42), run(42));
}

TEST(RngTest, StreamsAreIndependentAndDeterministic) {
    RngService a = RngService::for_stream(7, 1);
    RngService b = RngService::for_stream(7, 1);
    EXPECT_EQ(a.next_u64(), b.next_u64());
    RngService a2 = RngService::for_stream(7, 1);
    RngService c2 = RngService::for_stream(7, 2);
    EXPECT_NE(a2.next_u64(), c2.next_u64());
}

TEST(RngTest, SerializeRoundTrip) {
    RngService rng(99);
    for (int i = 0; i < 10; ++i) rng.uniform();
    std::string state = rng.serialize();
    RngService other(0);
    other.deserialize(state);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(rng.next_u64(), other.next_u64());
}
