#include "druformer/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace druformer {

BoxXyXy to_xyxy(const BoxCxCyWh& b) {
    if (b.w <= 0.0 || b.h <= 0.0) {
        throw std::invalid_argument("to_xyxy: box degenerates (w and h must be positive)");
    }
    return to_xyxy_unchecked(b);
}

BoxXyXy to_xyxy_unchecked(const BoxCxCyWh& b) {
    return BoxXyXy{b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

BoxCxCyWh to_cxcywh(const BoxXyXy& b) {
    return BoxCxCyWh{(b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0, b.x1 - b.x0, b.y1 - b.y0};
}

double box_area(const BoxXyXy& b) {
    return std::max(0.0, b.x1 - b.x0) * std::max(0.0, b.y1 - b.y0);
}

double iou(const BoxXyXy& a, const BoxXyXy& b) {
    const double ix0 = std::max(a.x0, b.x0);
    const double iy0 = std::max(a.y0, b.y0);
    const double ix1 = std::min(a.x1, b.x1);
    const double iy1 = std::min(a.y1, b.y1);
    const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
    const double uni = box_area(a) + box_area(b) - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double giou(const BoxXyXy& a, const BoxXyXy& b) {
    const double ix0 = std::max(a.x0, b.x0);
    const double iy0 = std::max(a.y0, b.y0);
    const double ix1 = std::min(a.x1, b.x1);
    const double iy1 = std::min(a.y1, b.y1);
    const double inter = std::max(0.0, ix1 - ix0) * std::max(0.0, iy1 - iy0);
    const double uni = box_area(a) + box_area(b) - inter;
    const double cx0 = std::min(a.x0, b.x0);
    const double cy0 = std::min(a.y0, b.y0);
    const double cx1 = std::max(a.x1, b.x1);
    const double cy1 = std::max(a.y1, b.y1);
    const double encl = (cx1 - cx0) * (cy1 - cy0);
    if (uni <= 0.0 || encl <= 0.0) return 0.0;
    return inter / uni - (encl - uni) / encl;
}

namespace {
bool degenerate(const BoxXyXy& b) {
    return b.x1 - b.x0 <= 1e-6 || b.y1 - b.y0 <= 1e-6;
}
}  // namespace

double pair_iou(const EvalPair& p) {
    if (!p.prediction.has_value() && !p.label.has_value()) return 1.0;
    if (!p.prediction.has_value() || !p.label.has_value()) return 0.0;
    if (degenerate(*p.prediction) || degenerate(*p.label)) return 0.0;
    return iou(*p.prediction, *p.label);
}

double miou(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("miou: empty sample list");
    double s = 0.0;
    for (const auto& p : pairs) s += pair_iou(p);
    return s / static_cast<double>(pairs.size());
}

double acc(const std::vector<EvalPair>& pairs, double threshold) {
    if (pairs.empty()) throw std::invalid_argument("acc: empty sample list");
    size_t hits = 0;
    for (const auto& p : pairs) {
        if (pair_iou(p) > threshold) ++hits;  // strictly greater
    }
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

}  // namespace druformer
