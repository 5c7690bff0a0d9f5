#include "druformer/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "druformer/ops.hpp"

namespace druformer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Potentials-based O(rows * cols^2) assignment (shortest augmenting paths).
// Returns the column chosen for each row of `cost`.
std::vector<int> solve_min_cost(const std::vector<double>& cost, int rows, int cols,
                                double* total_out) {
    std::vector<double> u(static_cast<size_t>(rows) + 1, 0.0);
    std::vector<double> v(static_cast<size_t>(cols) + 1, 0.0);
    std::vector<int> p(static_cast<size_t>(cols) + 1, 0);
    std::vector<int> way(static_cast<size_t>(cols) + 1, 0);
    for (int i = 1; i <= rows; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(cols) + 1, kInf);
        std::vector<char> used(static_cast<size_t>(cols) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = p[static_cast<size_t>(j0)];
            double delta = kInf;
            int j1 = 0;
            for (int j = 1; j <= cols; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur =
                    cost[(static_cast<size_t>(i0) - 1) * cols + (j - 1)] - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> col_for_row(static_cast<size_t>(rows), -1);
    double total = 0.0;
    for (int j = 1; j <= cols; ++j) {
        if (p[static_cast<size_t>(j)] > 0) {
            col_for_row[static_cast<size_t>(p[static_cast<size_t>(j)]) - 1] = j - 1;
            total += cost[(static_cast<size_t>(p[static_cast<size_t>(j)]) - 1) * cols + (j - 1)];
        }
    }
    if (total_out) *total_out = total;
    return col_for_row;
}

double optimal_cost(const std::vector<double>& cost, int rows, int cols) {
    if (rows == 0) return 0.0;
    double total = 0.0;
    solve_min_cost(cost, rows, cols, &total);
    return total;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
    if (cost.rows > cost.cols) throw std::invalid_argument("hungarian: rows must be <= cols");
    for (double c : cost.cost) {
        if (!std::isfinite(c)) throw std::invalid_argument("hungarian: non-finite cost entry");
    }
    Assignment result;
    if (cost.rows == 0) return result;

    const double best = optimal_cost(cost.cost, cost.rows, cost.cols);

    // Fix rows in order to the smallest column that still reaches the
    // optimum, which makes ties deterministic (lexicographically smallest).
    std::vector<int> remaining_cols(static_cast<size_t>(cost.cols));
    for (int j = 0; j < cost.cols; ++j) remaining_cols[static_cast<size_t>(j)] = j;
    result.pred_for_gt.assign(static_cast<size_t>(cost.rows), -1);
    double fixed_cost = 0.0;
    for (int g = 0; g < cost.rows; ++g) {
        const double target = best - fixed_cost;
        const int sub_rows = cost.rows - g - 1;
        bool placed = false;
        for (size_t ci = 0; ci < remaining_cols.size() && !placed; ++ci) {
            const int c = remaining_cols[ci];
            const double here = cost.at(g, c);
            double rest = 0.0;
            if (sub_rows > 0) {
                std::vector<double> sub;
                sub.reserve(static_cast<size_t>(sub_rows) * (remaining_cols.size() - 1));
                for (int g2 = g + 1; g2 < cost.rows; ++g2) {
                    for (int c2 : remaining_cols) {
                        if (c2 != c) sub.push_back(cost.at(g2, c2));
                    }
                }
                rest = optimal_cost(sub, sub_rows, static_cast<int>(remaining_cols.size()) - 1);
            }
            const double tol = 1e-9 * std::max(1.0, std::fabs(target));
            if (here + rest <= target + tol) {
                result.pred_for_gt[static_cast<size_t>(g)] = c;
                fixed_cost += here;
                remaining_cols.erase(remaining_cols.begin() + static_cast<long>(ci));
                placed = true;
            }
        }
        if (!placed) throw std::runtime_error("hungarian: internal error, no column reaches optimum");
    }
    result.total_cost = fixed_cost;
    return result;
}

CostMatrix match_cost(const Tensor& pred_boxes, const Tensor& pred_logits,
                      const std::vector<BoxCxCyWh>& gt_boxes,
                      const std::vector<int>& gt_classes, const LossWeights& weights) {
    if (pred_boxes.ndim() != 2 || pred_boxes.dim(1) != 4) {
        throw std::invalid_argument("match_cost: pred_boxes must be [k x 4]");
    }
    if (pred_logits.ndim() != 2 || pred_logits.dim(0) != pred_boxes.dim(0)) {
        throw std::invalid_argument("match_cost: pred_logits must be [k x C+1]");
    }
    if (gt_classes.size() != gt_boxes.size()) {
        throw std::invalid_argument("match_cost: one class per gt box required");
    }
    const int k = pred_boxes.dim(0);
    const int n_logits = pred_logits.dim(1);
    for (int cls : gt_classes) {
        if (cls < 0 || cls >= n_logits - 1) throw std::invalid_argument("match_cost: class out of range");
    }

    NoGradGuard no_grad;
    Tensor probs = softmax_lastdim(pred_logits);

    CostMatrix cm;
    cm.rows = static_cast<int>(gt_boxes.size());
    cm.cols = k;
    cm.cost.assign(static_cast<size_t>(cm.rows) * k, 0.0);
    for (int g = 0; g < cm.rows; ++g) {
        const BoxCxCyWh& gt = gt_boxes[static_cast<size_t>(g)];
        const BoxXyXy gt_xy = to_xyxy(gt);
        for (int i = 0; i < k; ++i) {
            const double* b = pred_boxes.data().data() + static_cast<size_t>(i) * 4;
            const double l1 = std::fabs(b[0] - gt.cx) + std::fabs(b[1] - gt.cy) +
                              std::fabs(b[2] - gt.w) + std::fabs(b[3] - gt.h);
            const BoxXyXy pred_xy = to_xyxy_unchecked(BoxCxCyWh{b[0], b[1], b[2], b[3]});
            const double g_iou = giou(pred_xy, gt_xy);
            const double p_cls =
                probs.data()[static_cast<size_t>(i) * n_logits + gt_classes[static_cast<size_t>(g)]];
            cm.at(g, i) = weights.lambda_b * l1 + weights.lambda_giou * (1.0 - g_iou) -
                          weights.lambda_c * p_cls;
        }
    }
    return cm;
}

CostMatrix match_cost(const Tensor& pred_boxes, const Tensor& pred_logits,
                      const std::vector<BoxCxCyWh>& gt_boxes, const LossWeights& weights) {
    return match_cost(pred_boxes, pred_logits, gt_boxes,
                      std::vector<int>(gt_boxes.size(), 0), weights);
}

Tensor giou_pairs(const Tensor& pred_cxcywh, const std::vector<BoxCxCyWh>& gt_boxes) {
    const int G = pred_cxcywh.dim(0);
    if (G != static_cast<int>(gt_boxes.size()) || pred_cxcywh.dim(1) != 4) {
        throw std::invalid_argument("giou_pairs: expects matched [G x 4] against G gt boxes");
    }
    Tensor cx = slice_cols(pred_cxcywh, 0, 1);
    Tensor cy = slice_cols(pred_cxcywh, 1, 2);
    Tensor w = slice_cols(pred_cxcywh, 2, 3);
    Tensor h = slice_cols(pred_cxcywh, 3, 4);
    Tensor half_w = scalar_mul(w, 0.5);
    Tensor half_h = scalar_mul(h, 0.5);
    Tensor px0 = sub(cx, half_w);
    Tensor px1 = add(cx, half_w);
    Tensor py0 = sub(cy, half_h);
    Tensor py1 = add(cy, half_h);

    std::vector<double> gx0(static_cast<size_t>(G)), gy0(static_cast<size_t>(G)),
        gx1(static_cast<size_t>(G)), gy1(static_cast<size_t>(G)), garea(static_cast<size_t>(G));
    for (int g = 0; g < G; ++g) {
        const BoxXyXy b = to_xyxy(gt_boxes[static_cast<size_t>(g)]);
        gx0[static_cast<size_t>(g)] = b.x0;
        gy0[static_cast<size_t>(g)] = b.y0;
        gx1[static_cast<size_t>(g)] = b.x1;
        gy1[static_cast<size_t>(g)] = b.y1;
        garea[static_cast<size_t>(g)] = box_area(b);
    }
    Tensor tgx0 = Tensor::from_data({G, 1}, gx0);
    Tensor tgy0 = Tensor::from_data({G, 1}, gy0);
    Tensor tgx1 = Tensor::from_data({G, 1}, gx1);
    Tensor tgy1 = Tensor::from_data({G, 1}, gy1);
    Tensor tgarea = Tensor::from_data({G, 1}, garea);

    Tensor iw = relu(sub(minimum(px1, tgx1), maximum(px0, tgx0)));
    Tensor ih = relu(sub(minimum(py1, tgy1), maximum(py0, tgy0)));
    Tensor inter = mul(iw, ih);
    Tensor parea = mul(sub(px1, px0), sub(py1, py0));
    Tensor uni = sub(add(parea, tgarea), inter);
    Tensor cw = sub(maximum(px1, tgx1), minimum(px0, tgx0));
    Tensor ch = sub(maximum(py1, tgy1), minimum(py0, tgy0));
    Tensor encl = mul(cw, ch);
    Tensor iou_term = div(inter, uni);
    Tensor penalty = div(sub(encl, uni), encl);
    return sub(iou_term, penalty);
}

SetLossOutput set_loss(const Tensor& pred_boxes, const Tensor& pred_logits,
                       const std::vector<BoxCxCyWh>& gt_boxes,
                       const std::vector<int>& gt_classes, const Assignment& assignment,
                       const LossWeights& weights, double no_object_weight) {
    const int k = pred_boxes.dim(0);
    const int n_logits = pred_logits.dim(1);
    const int no_object = n_logits - 1;
    const int G = static_cast<int>(gt_boxes.size());
    if (static_cast<int>(assignment.pred_for_gt.size()) != G) {
        throw std::invalid_argument("set_loss: assignment size does not match gt count");
    }
    for (int i : assignment.pred_for_gt) {
        if (i < 0 || i >= k) throw std::invalid_argument("set_loss: assignment index out of range");
    }

    SetLossOutput out;
    Tensor total = Tensor::scalar(0.0);

    if (G > 0) {
        Tensor matched = select_rows(pred_boxes, assignment.pred_for_gt);
        std::vector<double> gt_flat;
        gt_flat.reserve(static_cast<size_t>(G) * 4);
        for (const auto& b : gt_boxes) {
            gt_flat.push_back(b.cx);
            gt_flat.push_back(b.cy);
            gt_flat.push_back(b.w);
            gt_flat.push_back(b.h);
        }
        Tensor gt_t = Tensor::from_data({G, 4}, std::move(gt_flat));
        Tensor l_b = scalar_mul(sum_all(abs_val(sub(matched, gt_t))), 1.0 / G);
        Tensor l_giou =
            scalar_add(scalar_mul(sum_all(giou_pairs(matched, gt_boxes)), -1.0 / G), 1.0);
        out.l_b = l_b.item();
        out.l_giou = l_giou.item();
        total = add(total, add(scalar_mul(l_b, weights.lambda_b),
                               scalar_mul(l_giou, weights.lambda_giou)));
    }

    // Classification over every slot: matched slots carry their gt class,
    // the rest no-object, down-weighted against the k >> G imbalance.
    std::vector<int> slot_label(static_cast<size_t>(k), no_object);
    std::vector<double> slot_weight(static_cast<size_t>(k), no_object_weight);
    for (int g = 0; g < G; ++g) {
        const int slot = assignment.pred_for_gt[static_cast<size_t>(g)];
        slot_label[static_cast<size_t>(slot)] = gt_classes[static_cast<size_t>(g)];
        slot_weight[static_cast<size_t>(slot)] = 1.0;
    }
    double weight_sum = 0.0;
    for (double w : slot_weight) weight_sum += w;
    Tensor logp = log_softmax_lastdim(pred_logits);
    Tensor picked = gather_rows(logp, slot_label);
    Tensor wt = Tensor::from_data({k}, slot_weight);
    Tensor l_c = scalar_mul(sum_all(mul(picked, wt)), -1.0 / weight_sum);
    out.l_c = l_c.item();
    total = add(total, scalar_mul(l_c, weights.lambda_c));

    out.total = total;
    return out;
}

SetLossOutput set_loss(const Tensor& pred_boxes, const Tensor& pred_logits,
                       const std::vector<BoxCxCyWh>& gt_boxes, const Assignment& assignment,
                       const LossWeights& weights, double no_object_weight) {
    return set_loss(pred_boxes, pred_logits, gt_boxes, std::vector<int>(gt_boxes.size(), 0),
                    assignment, weights, no_object_weight);
}

}  // namespace druformer
