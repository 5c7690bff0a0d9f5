#pragma once

#include <vector>

#include "druformer/geometry.hpp"
#include "druformer/tensor.hpp"

namespace druformer {

// rows = ground-truth objects, cols = prediction slots, rows <= cols.
struct CostMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> cost;  // row-major

    double& at(int g, int i) { return cost[static_cast<size_t>(g) * cols + i]; }
    double at(int g, int i) const { return cost[static_cast<size_t>(g) * cols + i]; }
};

// Injective gt-index -> prediction-index map.
struct Assignment {
    std::vector<int> pred_for_gt;
    double total_cost = 0.0;
};

struct LossWeights {
    double lambda_b = 5.0;
    double lambda_giou = 2.0;
    double lambda_c = 1.0;
};

struct SetLossOutput {
    Tensor total;  // scalar, carries gradients
    double l_b = 0.0;
    double l_giou = 0.0;
    double l_c = 0.0;
};

// Minimum-cost assignment; ties resolved to the lexicographically smallest
// assignment vector. Throws on non-finite entries or rows > cols.
Assignment hungarian(const CostMatrix& cost);

// cost[g][i] = lambda_b * L1(box_i, gt_g) + lambda_giou * (1 - GIoU) -
// lambda_c * p_i(class_g), computed without gradient tracking. Boxes are
// cxcywh; class probabilities come from softmax over the logits row.
CostMatrix match_cost(const Tensor& pred_boxes, const Tensor& pred_logits,
                      const std::vector<BoxCxCyWh>& gt_boxes,
                      const std::vector<int>& gt_classes, const LossWeights& weights);
// Binary {important, no-object} case: every gt has class 0.
CostMatrix match_cost(const Tensor& pred_boxes, const Tensor& pred_logits,
                      const std::vector<BoxCxCyWh>& gt_boxes, const LossWeights& weights);

// Differentiable GIoU per matched pair, composed from tensor primitives.
// pred: [G x 4] cxcywh with gradients; gt: constants.
Tensor giou_pairs(const Tensor& pred_cxcywh, const std::vector<BoxCxCyWh>& gt_boxes);

// l_b: mean L1 over matched pairs; l_giou: mean (1 - GIoU); l_c: weighted
// cross-entropy over every slot with unmatched slots labeled no-object
// (last class index) at weight no_object_weight.
SetLossOutput set_loss(const Tensor& pred_boxes, const Tensor& pred_logits,
                       const std::vector<BoxCxCyWh>& gt_boxes,
                       const std::vector<int>& gt_classes, const Assignment& assignment,
                       const LossWeights& weights, double no_object_weight = 0.1);
SetLossOutput set_loss(const Tensor& pred_boxes, const Tensor& pred_logits,
                       const std::vector<BoxCxCyWh>& gt_boxes, const Assignment& assignment,
                       const LossWeights& weights, double no_object_weight = 0.1);

}  // namespace druformer
