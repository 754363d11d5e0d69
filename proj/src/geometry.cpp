#include "c4av/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace c4av {

Box Box::from_corners(double x1, double y1, double x2, double y2) {
    return Box{std::min(x1, x2), std::min(y1, y2), std::fabs(x2 - x1), std::fabs(y2 - y1)};
}

bool Box::valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h) &&
           w >= 0.0 && h >= 0.0;
}

Box Box::clamped(double img_w, double img_h) const {
    double x1 = std::clamp(x, 0.0, img_w);
    double y1 = std::clamp(y, 0.0, img_h);
    double x2c = std::clamp(x + w, x1, img_w);
    double y2c = std::clamp(y + h, y1, img_h);
    return Box{x1, y1, x2c - x1, y2c - y1};
}

double area(const Box& b) { return b.w * b.h; }

double iou(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
    double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
    double inter = ix * iy;
    double uni = area(a) + area(b) - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

std::vector<std::size_t> nms(const std::vector<ScoredBox>& candidates, double iou_threshold) {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].confidence > candidates[b].confidence;
    });

    std::vector<std::size_t> kept;
    std::vector<bool> suppressed(candidates.size(), false);
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        std::size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(i);
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            std::size_t j = order[oj];
            if (!suppressed[j] && iou(candidates[i].box, candidates[j].box) > iou_threshold)
                suppressed[j] = true;
        }
    }
    return kept;
}

std::vector<Label> assign_labels(const std::vector<Box>& proposals, const Box& gt,
                                 double threshold) {
    std::vector<Label> labels(proposals.size());
    for (std::size_t i = 0; i < proposals.size(); ++i)
        labels[i] = iou(proposals[i], gt) >= threshold ? Label::positive : Label::negative;
    return labels;
}

}  // namespace c4av
