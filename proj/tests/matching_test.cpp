#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "druformer/gradcheck.hpp"
#include "druformer/matching.hpp"
#include "druformer/ops.hpp"

using namespace druformer;

namespace {

// Exhaustive minimum over injective row->column maps; the oracle for the
// Hungarian implementation.
void enumerate(const CostMatrix& cm, int row, std::vector<int>& chosen, std::vector<char>& used,
               double cost_so_far, double& best, std::vector<int>& best_assign) {
    if (row == cm.rows) {
        if (cost_so_far < best - 1e-15 ||
            (std::fabs(cost_so_far - best) <= 1e-9 && chosen < best_assign)) {
            best = cost_so_far;
            best_assign = chosen;
        }
        return;
    }
    for (int c = 0; c < cm.cols; ++c) {
        if (used[static_cast<size_t>(c)]) continue;
        used[static_cast<size_t>(c)] = 1;
        chosen.push_back(c);
        enumerate(cm, row + 1, chosen, used, cost_so_far + cm.at(row, c), best, best_assign);
        chosen.pop_back();
        used[static_cast<size_t>(c)] = 0;
    }
}

Assignment brute_force(const CostMatrix& cm) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> best_assign;
    std::vector<int> chosen;
    std::vector<char> used(static_cast<size_t>(cm.cols), 0);
    if (cm.rows == 0) return Assignment{};
    enumerate(cm, 0, chosen, used, 0.0, best, best_assign);
    return Assignment{best_assign, best};
}

CostMatrix make_matrix(int rows, int cols, std::vector<double> vals) {
    CostMatrix cm;
    cm.rows = rows;
    cm.cols = cols;
    cm.cost = std::move(vals);
    return cm;
}

}  // namespace

TEST(HungarianTest, DiagonalDominance) {
    Assignment a = hungarian(make_matrix(2, 2, {1, 2, 2, 1}));
    EXPECT_EQ(a.pred_for_gt, (std::vector<int>{0, 1}));
    EXPECT_DOUBLE_EQ(a.total_cost, 2.0);
}

TEST(HungarianTest, SingleRowPicksArgmin) {
    Assignment a = hungarian(make_matrix(1, 5, {3, 1, 4, 0.5, 2}));
    EXPECT_EQ(a.pred_for_gt, (std::vector<int>{3}));
}

TEST(HungarianTest, RejectsNonFinite) {
    EXPECT_THROW(hungarian(make_matrix(1, 2, {1.0, std::nan("")})), std::invalid_argument);
    EXPECT_THROW(hungarian(make_matrix(2, 1, {1.0, 2.0})), std::invalid_argument);
}

TEST(HungarianTest, EmptyIsValid) {
    Assignment a = hungarian(make_matrix(0, 4, {}));
    EXPECT_TRUE(a.pred_for_gt.empty());
    EXPECT_DOUBLE_EQ(a.total_cost, 0.0);
}

TEST(HungarianTest, MatchesBruteForceOn500RandomMatrices) {
    RngService rng(12345);
    for (int trial = 0; trial < 500; ++trial) {
        const int rows = 1 + rng.uniform_int(6);
        const int cols = rows + rng.uniform_int(8 - rows + 1);
        CostMatrix cm;
        cm.rows = rows;
        cm.cols = cols;
        cm.cost.resize(static_cast<size_t>(rows) * cols);
        for (double& v : cm.cost) v = rng.uniform(-5.0, 5.0);
        Assignment fast = hungarian(cm);
        Assignment slow = brute_force(cm);
        EXPECT_NEAR(fast.total_cost, slow.total_cost, 1e-9) << "trial " << trial;
        EXPECT_EQ(fast.pred_for_gt, slow.pred_for_gt) << "trial " << trial;
    }
}

TEST(HungarianTest, TiesResolveLexicographically) {
    // All entries equal: every assignment is optimal; expect {0, 1}.
    Assignment a = hungarian(make_matrix(2, 3, {1, 1, 1, 1, 1, 1}));
    EXPECT_EQ(a.pred_for_gt, (std::vector<int>{0, 1}));
}

TEST(HungarianTest, ConstantShiftInvariance) {
    RngService rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        CostMatrix cm;
        cm.rows = 4;
        cm.cols = 6;
        cm.cost.resize(24);
        for (double& v : cm.cost) v = rng.uniform(-3.0, 3.0);
        CostMatrix shifted = cm;
        for (double& v : shifted.cost) v += 17.25;
        EXPECT_EQ(hungarian(cm).pred_for_gt, hungarian(shifted).pred_for_gt);
    }
}

TEST(MatchCostTest, PerfectPredictionCostsMinusLambdaC) {
    // Prediction identical to gt with p(important) ~= 1.
    Tensor boxes = Tensor::from_data({1, 4}, {0.5, 0.5, 0.2, 0.2});
    Tensor logits = Tensor::from_data({1, 2}, {60.0, 0.0});
    LossWeights w;
    CostMatrix cm = match_cost(boxes, logits, {BoxCxCyWh{0.5, 0.5, 0.2, 0.2}}, w);
    EXPECT_NEAR(cm.at(0, 0), -w.lambda_c, 1e-9);
}

TEST(MatchCostTest, ExactMatchesYieldIdentityAssignment) {
    Tensor boxes = Tensor::from_data({2, 4}, {0.2, 0.2, 0.1, 0.1, 0.7, 0.7, 0.1, 0.1});
    Tensor logits = Tensor::from_data({2, 2}, {5.0, 0.0, 5.0, 0.0});
    std::vector<BoxCxCyWh> gts = {{0.2, 0.2, 0.1, 0.1}, {0.7, 0.7, 0.1, 0.1}};
    Assignment a = hungarian(match_cost(boxes, logits, gts, LossWeights{}));
    EXPECT_EQ(a.pred_for_gt, (std::vector<int>{0, 1}));
}

TEST(MatchCostTest, EndToEndMatchesBruteForce) {
    RngService rng(777);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 5;
        const int G = 3;
        Tensor boxes = Tensor::zeros({k, 4});
        for (int i = 0; i < k; ++i) {
            boxes.data()[static_cast<size_t>(i) * 4 + 0] = rng.uniform(0.2, 0.8);
            boxes.data()[static_cast<size_t>(i) * 4 + 1] = rng.uniform(0.2, 0.8);
            boxes.data()[static_cast<size_t>(i) * 4 + 2] = rng.uniform(0.05, 0.3);
            boxes.data()[static_cast<size_t>(i) * 4 + 3] = rng.uniform(0.05, 0.3);
        }
        Tensor logits = Tensor::zeros({k, 2});
        for (double& v : logits.data()) v = rng.normal();
        std::vector<BoxCxCyWh> gts;
        for (int g = 0; g < G; ++g) {
            gts.push_back(BoxCxCyWh{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                                    rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)});
        }
        CostMatrix cm = match_cost(boxes, logits, gts, LossWeights{});
        Assignment fast = hungarian(cm);
        Assignment slow = brute_force(cm);
        EXPECT_NEAR(fast.total_cost, slow.total_cost, 1e-9);
        EXPECT_EQ(fast.pred_for_gt, slow.pred_for_gt);
    }
}

TEST(SetLossTest, PerfectBoxesZeroRegressionTerms) {
    Tensor boxes = Tensor::from_data({2, 4}, {0.3, 0.3, 0.2, 0.2, 0.7, 0.7, 0.2, 0.2}, true);
    Tensor logits = Tensor::from_data({2, 2}, {3.0, 0.0, 3.0, 0.0}, true);
    std::vector<BoxCxCyWh> gts = {{0.3, 0.3, 0.2, 0.2}, {0.7, 0.7, 0.2, 0.2}};
    Assignment a{{0, 1}, 0.0};
    SetLossOutput out = set_loss(boxes, logits, gts, a, LossWeights{});
    EXPECT_NEAR(out.l_b, 0.0, 1e-12);
    EXPECT_NEAR(out.l_giou, 0.0, 1e-12);
}

TEST(SetLossTest, EmptySceneIsPureNoObjectCrossEntropy) {
    Tensor boxes = Tensor::from_data({2, 4}, {0.3, 0.3, 0.2, 0.2, 0.7, 0.7, 0.2, 0.2}, true);
    Tensor logits = Tensor::from_data({2, 2}, {1.0, -1.0, 0.5, 0.5}, true);
    SetLossOutput out = set_loss(boxes, logits, {}, Assignment{}, LossWeights{});
    EXPECT_DOUBLE_EQ(out.l_b, 0.0);
    EXPECT_DOUBLE_EQ(out.l_giou, 0.0);
    // Hand-computed mean of -log softmax(logits)[no-object].
    const double ce0 = -std::log(std::exp(-1.0) / (std::exp(1.0) + std::exp(-1.0)));
    const double ce1 = -std::log(0.5);
    EXPECT_NEAR(out.l_c, (ce0 + ce1) / 2.0, 1e-9);
    EXPECT_NEAR(out.total.item(), out.l_c * 1.0, 1e-9);
}

TEST(SetLossTest, GiouHandCase) {
    // Matched pair with xyxy (0,0,1,1) vs (2,0,3,1): giou -1/3, l_giou 4/3.
    Tensor boxes = Tensor::from_data({1, 4}, {0.5, 0.5, 1.0, 1.0}, true);
    Tensor logits = Tensor::from_data({1, 2}, {0.0, 0.0}, true);
    std::vector<BoxCxCyWh> gts = {{2.5, 0.5, 1.0, 1.0}};
    Assignment a{{0}, 0.0};
    SetLossOutput out = set_loss(boxes, logits, gts, a, LossWeights{});
    EXPECT_NEAR(out.l_giou, 4.0 / 3.0, 1e-12);
}

TEST(SetLossTest, TotalIsWeightedSum) {
    RngService rng(5);
    Tensor boxes = Tensor::zeros({4, 4}, true);
    for (double& v : boxes.data()) v = rng.uniform(0.2, 0.8);
    Tensor logits = Tensor::zeros({4, 2}, true);
    for (double& v : logits.data()) v = rng.normal();
    std::vector<BoxCxCyWh> gts = {{0.4, 0.4, 0.2, 0.2}, {0.6, 0.6, 0.1, 0.1}};
    Assignment a{{2, 0}, 0.0};
    LossWeights w;
    SetLossOutput out = set_loss(boxes, logits, gts, a, w);
    EXPECT_NEAR(out.total.item(),
                w.lambda_b * out.l_b + w.lambda_giou * out.l_giou + w.lambda_c * out.l_c, 1e-9);
}

TEST(SetLossTest, PermutationEquivariance) {
    RngService rng(6);
    Tensor boxes = Tensor::zeros({5, 4});
    for (double& v : boxes.data()) v = rng.uniform(0.2, 0.8);
    Tensor logits = Tensor::zeros({5, 2});
    for (double& v : logits.data()) v = rng.normal();
    std::vector<BoxCxCyWh> gts = {{0.4, 0.4, 0.2, 0.2}, {0.6, 0.6, 0.1, 0.1}};
    Assignment a{{1, 3}, 0.0};
    SetLossOutput base = set_loss(boxes, logits, gts, a, LossWeights{});

    // Permute prediction slots and remap the assignment accordingly.
    const std::vector<int> perm = {4, 2, 0, 1, 3};  // new_index[old_index]
    Tensor pboxes = Tensor::zeros({5, 4});
    Tensor plogits = Tensor::zeros({5, 2});
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j)
            pboxes.data()[static_cast<size_t>(perm[static_cast<size_t>(i)]) * 4 + j] =
                boxes.data()[static_cast<size_t>(i) * 4 + j];
        for (int j = 0; j < 2; ++j)
            plogits.data()[static_cast<size_t>(perm[static_cast<size_t>(i)]) * 2 + j] =
                logits.data()[static_cast<size_t>(i) * 2 + j];
    }
    Assignment pa{{perm[1], perm[3]}, 0.0};
    SetLossOutput permuted = set_loss(pboxes, plogits, gts, pa, LossWeights{});
    EXPECT_NEAR(base.l_b, permuted.l_b, 1e-12);
    EXPECT_NEAR(base.l_giou, permuted.l_giou, 1e-12);
    EXPECT_NEAR(base.l_c, permuted.l_c, 1e-12);
    EXPECT_NEAR(base.total.item(), permuted.total.item(), 1e-12);
}

TEST(SetLossTest, GradientsPassFiniteDifferences) {
    RngService rng(8);
    Tensor boxes = Tensor::zeros({4, 4}, true);
    for (double& v : boxes.data()) v = rng.uniform(0.3, 0.7);
    Tensor logits = Tensor::zeros({4, 2}, true);
    for (double& v : logits.data()) v = rng.normal();
    std::vector<BoxCxCyWh> gts = {{0.4, 0.4, 0.2, 0.2}, {0.65, 0.6, 0.15, 0.12}};
    Assignment a{{0, 3}, 0.0};
    auto fwd = [&]() { return set_loss(boxes, logits, gts, a, LossWeights{}).total; };
    GradCheckResult r = gradcheck({boxes, logits}, fwd);
    EXPECT_TRUE(r.pass) << "rel-err " << r.max_rel_err << " at " << r.worst_site;
}

TEST(SetLossTest, GiouPairsGradcheck) {
    RngService rng(9);
    Tensor pred = Tensor::zeros({3, 4}, true);
    for (double& v : pred.data()) v = rng.uniform(0.3, 0.7);
    std::vector<BoxCxCyWh> gts = {{0.35, 0.4, 0.2, 0.2}, {0.6, 0.62, 0.18, 0.12}, {0.5, 0.5, 0.3, 0.3}};
    Tensor w = Tensor::from_data({3, 1}, {0.7, 1.1, 1.3});
    auto fwd = [&]() { return sum_all(mul(giou_pairs(pred, gts), w)); };
    GradCheckResult r = gradcheck({pred}, fwd);
    EXPECT_TRUE(r.pass) << "rel-err " << r.max_rel_err;
}

TEST(SetLossTest, OutOfRangeAssignmentThrows) {
    Tensor boxes = Tensor::zeros({2, 4});
    Tensor logits = Tensor::zeros({2, 2});
    std::vector<BoxCxCyWh> gts = {{0.5, 0.5, 0.2, 0.2}};
    Assignment bad{{5}, 0.0};
    EXPECT_THROW(set_loss(boxes, logits, gts, bad, LossWeights{}), std::invalid_argument);
}
