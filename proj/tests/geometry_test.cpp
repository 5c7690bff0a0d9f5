#include <gtest/gtest.h>

#include <cmath>

#include "druformer/geometry.hpp"
#include "druformer/tensor.hpp"

using namespace druformer;

TEST(BoxTest, ToXyxyFullFrame) {
    BoxXyXy b = to_xyxy(BoxCxCyWh{0.5, 0.5, 1.0, 1.0});
    EXPECT_DOUBLE_EQ(b.x0, 0.0);
    EXPECT_DOUBLE_EQ(b.y0, 0.0);
    EXPECT_DOUBLE_EQ(b.x1, 1.0);
    EXPECT_DOUBLE_EQ(b.y1, 1.0);
}

TEST(BoxTest, ToXyxyQuarter) {
    BoxXyXy b = to_xyxy(BoxCxCyWh{0.25, 0.25, 0.5, 0.5});
    EXPECT_DOUBLE_EQ(b.x0, 0.0);
    EXPECT_DOUBLE_EQ(b.y0, 0.0);
    EXPECT_DOUBLE_EQ(b.x1, 0.5);
    EXPECT_DOUBLE_EQ(b.y1, 0.5);
}

TEST(BoxTest, DegenerateThrows) {
    EXPECT_THROW(to_xyxy(BoxCxCyWh{0.5, 0.5, 0.0, 0.1}), std::invalid_argument);
    EXPECT_THROW(to_xyxy(BoxCxCyWh{0.5, 0.5, 0.1, -0.2}), std::invalid_argument);
}

TEST(BoxTest, RoundTripIdentity) {
    RngService rng(1);
    for (int i = 0; i < 1000; ++i) {
        BoxCxCyWh b{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.01, 0.2),
                    rng.uniform(0.01, 0.2)};
        BoxCxCyWh rt = to_cxcywh(to_xyxy(b));
        EXPECT_NEAR(rt.cx, b.cx, 1e-12);
        EXPECT_NEAR(rt.cy, b.cy, 1e-12);
        EXPECT_NEAR(rt.w, b.w, 1e-12);
        EXPECT_NEAR(rt.h, b.h, 1e-12);
    }
}

TEST(IouTest, IdenticalBoxes) {
    BoxXyXy a{0.1, 0.2, 0.5, 0.6};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
}

TEST(IouTest, DisjointBoxes) {
    EXPECT_DOUBLE_EQ(iou(BoxXyXy{0, 0, 1, 1}, BoxXyXy{2, 2, 3, 3}), 0.0);
}

TEST(IouTest, HandComputedOverlap) {
    // I = 1, U = 7
    EXPECT_NEAR(iou(BoxXyXy{0, 0, 2, 2}, BoxXyXy{1, 1, 3, 3}), 1.0 / 7.0, 1e-12);
}

TEST(GiouTest, IdenticalBoxes) {
    BoxXyXy a{0.1, 0.2, 0.5, 0.6};
    EXPECT_DOUBLE_EQ(giou(a, a), 1.0);
}

TEST(GiouTest, HandComputedDisjoint) {
    // union 2, enclosing 3 -> 0 - 1/3
    EXPECT_NEAR(giou(BoxXyXy{0, 0, 1, 1}, BoxXyXy{2, 0, 3, 1}), -1.0 / 3.0, 1e-12);
}

TEST(GiouTest, NeverExceedsIou) {
    RngService rng(2);
    for (int i = 0; i < 10000; ++i) {
        BoxXyXy a{rng.uniform(0, 0.8), rng.uniform(0, 0.8), 0, 0};
        a.x1 = a.x0 + rng.uniform(0.01, 0.2);
        a.y1 = a.y0 + rng.uniform(0.01, 0.2);
        BoxXyXy b{rng.uniform(0, 0.8), rng.uniform(0, 0.8), 0, 0};
        b.x1 = b.x0 + rng.uniform(0.01, 0.2);
        b.y1 = b.y0 + rng.uniform(0.01, 0.2);
        EXPECT_LE(giou(a, b), iou(a, b) + 1e-12);
    }
}

TEST(GiouTest, EqualsIouWhenUnionFillsEnclosure) {
    // Abutting boxes of equal height: the union is exactly the enclosure.
    BoxXyXy a{0, 0, 1, 1};
    BoxXyXy b{1, 0, 2, 1};
    EXPECT_NEAR(giou(a, b), iou(a, b), 1e-12);
}

TEST(GiouTest, SymmetryAndScaleInvariance) {
    RngService rng(3);
    for (int i = 0; i < 1000; ++i) {
        BoxXyXy a{rng.uniform(0, 0.8), rng.uniform(0, 0.8), 0, 0};
        a.x1 = a.x0 + rng.uniform(0.01, 0.2);
        a.y1 = a.y0 + rng.uniform(0.01, 0.2);
        BoxXyXy b{rng.uniform(0, 0.8), rng.uniform(0, 0.8), 0, 0};
        b.x1 = b.x0 + rng.uniform(0.01, 0.2);
        b.y1 = b.y0 + rng.uniform(0.01, 0.2);
        EXPECT_NEAR(iou(a, b), iou(b, a), 1e-12);
        EXPECT_NEAR(giou(a, b), giou(b, a), 1e-12);
        const double s = 3.5;
        BoxXyXy as{a.x0 * s, a.y0 * s, a.x1 * s, a.y1 * s};
        BoxXyXy bs{b.x0 * s, b.y0 * s, b.x1 * s, b.y1 * s};
        EXPECT_NEAR(iou(as, bs), iou(a, b), 1e-9);
        EXPECT_NEAR(giou(as, bs), giou(a, b), 1e-9);
    }
}

namespace {
EvalPair pair_with_iou_one() {
    BoxXyXy b{0.1, 0.1, 0.3, 0.3};
    return EvalPair{b, b};
}
}  // namespace

TEST(MetricsTest, MiouArithmeticMean) {
    // IoU 1.0 and IoU 0.5 -> 0.75
    EvalPair perfect = pair_with_iou_one();
    EvalPair half{BoxXyXy{0, 0, 1, 1}, BoxXyXy{0, 0, 0.5, 1}};
    ASSERT_NEAR(pair_iou(half), 0.5, 1e-12);
    EXPECT_NEAR(miou({perfect, half}), 0.75, 1e-12);
}

TEST(MetricsTest, MiouAllPerfect) {
    EXPECT_DOUBLE_EQ(miou({pair_with_iou_one(), pair_with_iou_one()}), 1.0);
}

TEST(MetricsTest, MiouHandComputedThreeSamples) {
    // {1/7, 0, 1} -> 0.381 to 3 decimal places
    EvalPair a{BoxXyXy{0, 0, 2, 2}, BoxXyXy{1, 1, 3, 3}};
    EvalPair b{BoxXyXy{0, 0, 1, 1}, BoxXyXy{2, 2, 3, 3}};
    EvalPair c = pair_with_iou_one();
    EXPECT_NEAR(miou({a, b, c}), 0.381, 5e-4);
}

TEST(MetricsTest, MiouEmptyThrows) {
    EXPECT_THROW(miou({}), std::invalid_argument);
    EXPECT_THROW(acc({}), std::invalid_argument);
}

TEST(MetricsTest, MissingSideScoresZero) {
    EvalPair no_pred{std::nullopt, BoxXyXy{0, 0, 1, 1}};
    EvalPair no_label{BoxXyXy{0, 0, 1, 1}, std::nullopt};
    EXPECT_DOUBLE_EQ(pair_iou(no_pred), 0.0);
    EXPECT_DOUBLE_EQ(pair_iou(no_label), 0.0);
}

TEST(MetricsTest, BothAbsentCountsCorrect) {
    EvalPair both_absent{std::nullopt, std::nullopt};
    EXPECT_DOUBLE_EQ(pair_iou(both_absent), 1.0);
    EXPECT_DOUBLE_EQ(acc({both_absent}), 1.0);
}

TEST(MetricsTest, AccStrictInequalityAtThreshold) {
    // IoU exactly 0.5 is not counted.
    EvalPair half{BoxXyXy{0, 0, 1, 1}, BoxXyXy{0, 0, 0.5, 1}};
    ASSERT_DOUBLE_EQ(pair_iou(half), 0.5);
    EXPECT_DOUBLE_EQ(acc({half}), 0.0);
}

TEST(MetricsTest, AccAllPerfect) {
    EXPECT_DOUBLE_EQ(acc({pair_with_iou_one(), pair_with_iou_one()}), 1.0);
}

TEST(MetricsTest, AccDirectCount) {
    // {0.6, 0.4} -> 0.5
    EvalPair a{BoxXyXy{0, 0, 1, 1}, BoxXyXy{0, 0, 0.6, 1}};
    EvalPair b{BoxXyXy{0, 0, 1, 1}, BoxXyXy{0, 0, 0.4, 1}};
    ASSERT_NEAR(pair_iou(a), 0.6, 1e-12);
    ASSERT_NEAR(pair_iou(b), 0.4, 1e-12);
    EXPECT_DOUBLE_EQ(acc({a, b}), 0.5);
}

TEST(MetricsTest, PermutationInvariance) {
    RngService rng(4);
    std::vector<EvalPair> pairs;
    for (int i = 0; i < 50; ++i) {
        BoxXyXy a{rng.uniform(0, 0.5), rng.uniform(0, 0.5), 0, 0};
        a.x1 = a.x0 + rng.uniform(0.05, 0.3);
        a.y1 = a.y0 + rng.uniform(0.05, 0.3);
        BoxXyXy b{rng.uniform(0, 0.5), rng.uniform(0, 0.5), 0, 0};
        b.x1 = b.x0 + rng.uniform(0.05, 0.3);
        b.y1 = b.y0 + rng.uniform(0.05, 0.3);
        pairs.push_back(EvalPair{a, b});
    }
    auto shuffled = pairs;
    rng.shuffle(shuffled);
    EXPECT_DOUBLE_EQ(miou(pairs), miou(shuffled));
    EXPECT_DOUBLE_EQ(acc(pairs), acc(shuffled));
}

TEST(MetricsTest, DegeneratePredictionScoresZero) {
    EvalPair p{BoxXyXy{0.1, 0.1, 0.1 + 1e-9, 0.5}, BoxXyXy{0, 0, 1, 1}};
    EXPECT_DOUBLE_EQ(pair_iou(p), 0.0);
}
