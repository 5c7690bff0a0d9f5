#pragma once

#include <optional>
#include <vector>

namespace druformer {

// Box as center/size, normalized to [0,1] image coordinates.
struct BoxCxCyWh {
    double cx = 0, cy = 0, w = 0, h = 0;
};

// Box as corners; x0 < x1, y0 < y1.
struct BoxXyXy {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Throws std::invalid_argument when the box degenerates (w or h <= 0).
BoxXyXy to_xyxy(const BoxCxCyWh& b);
// Never throws; degenerate results are handled by pair_iou scoring 0.
BoxXyXy to_xyxy_unchecked(const BoxCxCyWh& b);
BoxCxCyWh to_cxcywh(const BoxXyXy& b);

double box_area(const BoxXyXy& b);
double iou(const BoxXyXy& a, const BoxXyXy& b);
// IoU minus the enclosing-box penalty; in (-1, 1], equals IoU when the
// union fills the enclosing box.
double giou(const BoxXyXy& a, const BoxXyXy& b);

// One evaluated sample; at least one side present.
struct EvalPair {
    std::optional<BoxXyXy> prediction;
    std::optional<BoxXyXy> label;
};

// Both absent -> 1 (correct "no important object" call); exactly one absent
// -> 0; degenerate boxes (side <= 1e-6) score 0 rather than erroring.
double pair_iou(const EvalPair& p);

double miou(const std::vector<EvalPair>& pairs);
double acc(const std::vector<EvalPair>& pairs, double threshold = 0.5);

}  // namespace druformer
