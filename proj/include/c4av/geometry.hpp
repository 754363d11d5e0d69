#pragma once

#include <cstddef>
#include <vector>

namespace c4av {

// Axis-aligned box, pixel coordinates, top-left origin.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double x2() const { return x + w; }
    double y2() const { return y + h; }

    static Box from_corners(double x1, double y1, double x2, double y2);
    bool valid() const;  // finite, w >= 0, h >= 0
    Box clamped(double img_w, double img_h) const;
};

struct ScoredBox {
    Box box;
    double confidence = 0.0;  // detector confidence in [0,1]
};

enum class Label { negative = 0, positive = 1 };

double area(const Box& b);

// Intersection over union. Returns 0 when the union has zero area.
double iou(const Box& a, const Box& b);

// Greedy NMS: repeatedly keep the highest-confidence remaining candidate and
// drop everything with IoU strictly above `iou_threshold` against it.
// Confidence ties break toward the lower input index. Returned indices are in
// descending confidence order.
std::vector<std::size_t> nms(const std::vector<ScoredBox>& candidates, double iou_threshold);

// Positive iff iou(proposal, gt) >= threshold (inclusive).
std::vector<Label> assign_labels(const std::vector<Box>& proposals, const Box& gt,
                                 double threshold = 0.5);

}  // namespace c4av
