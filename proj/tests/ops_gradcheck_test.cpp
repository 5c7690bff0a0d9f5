#include <gtest/gtest.h>

#include "druformer/gradcheck.hpp"
#include "druformer/ops.hpp"
#include "druformer/tensor.hpp"

using namespace druformer;

// Central finite differences are the oracle for every backward rule.
// Each op runs across many seeds on randomized small tensors.
TEST(GradCheckTest, AllOpsPassFiniteDifferences) {
    const int seeds_per_op = 100;
    for (const auto& check : builtin_op_checks()) {
        double worst = 0.0;
        for (int s = 0; s < seeds_per_op; ++s) {
            GradCheckResult r = check.run(1000 + static_cast<uint64_t>(s));
            worst = std::max(worst, r.max_rel_err);
            if (!r.pass) {
                ADD_FAILURE() << check.name << " seed " << s << " rel-err " << r.max_rel_err
                              << " at " << r.worst_site;
                break;
            }
        }
        SCOPED_TRACE(check.name);
        EXPECT_LT(worst, 1e-4);
    }
}

TEST(GradCheckTest, OpListHasNoDuplicates) {
    auto checks = builtin_op_checks();
    for (size_t i = 0; i < checks.size(); ++i)
        for (size_t j = i + 1; j < checks.size(); ++j)
            EXPECT_NE(checks[i].name, checks[j].name);
}

TEST(GradCheckTest, CorruptedBackwardIsDetected) {
    Tape::set_corrupted_op("matmul");
    auto checks = builtin_op_checks();
    bool matmul_failed = false;
    for (const auto& check : checks) {
        if (check.name == "matmul") {
            GradCheckResult r = check.run(1);
            matmul_failed = !r.pass;
        }
    }
    Tape::clear_corrupted_op();
    EXPECT_TRUE(matmul_failed);
}

TEST(GradCheckTest, SoftmaxJacobianMatchesFiniteDifferences) {
    RngService rng(7);
    Tensor x = Tensor::zeros({6}, true);
    for (double& v : x.data()) v = rng.normal();
    // Check each row of the Jacobian via basis-weighted losses.
    for (int out_idx = 0; out_idx < 6; ++out_idx) {
        Tensor w = Tensor::zeros({6});
        w.data()[static_cast<size_t>(out_idx)] = 1.0;
        auto fwd = [&, w]() { return sum_all(mul(softmax_lastdim(x), w)); };
        GradCheckResult r = gradcheck({x}, fwd);
        EXPECT_TRUE(r.pass) << "row " << out_idx << " rel-err " << r.max_rel_err;
        EXPECT_LT(r.max_rel_err, 1e-6);
    }
}

TEST(GradCheckTest, GradOfMatmulSumMatchesFiniteDifferences) {
    RngService rng(21);
    Tensor a = Tensor::zeros({3, 4}, true);
    Tensor b = Tensor::zeros({4, 2}, true);
    for (double& v : a.data()) v = rng.normal();
    for (double& v : b.data()) v = rng.normal();
    auto fwd = [&]() { return sum_all(matmul(a, b)); };
    GradCheckResult r = gradcheck({a, b}, fwd);
    EXPECT_TRUE(r.pass);
    EXPECT_LT(r.max_rel_err, 1e-6);
}
