#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "c4av/geometry.hpp"

using namespace c4av;

namespace {

// Unit-pixel rasterization oracle for integer-coordinate boxes: count the
// pixels covered by the intersection and by the union.
double iou_rasterized(const Box& a, const Box& b) {
    auto covers = [](const Box& box, int px, int py) {
        return px >= box.x && px + 1 <= box.x2() && py >= box.y && py + 1 <= box.y2();
    };
    int x_lo = static_cast<int>(std::min(a.x, b.x));
    int y_lo = static_cast<int>(std::min(a.y, b.y));
    int x_hi = static_cast<int>(std::max(a.x2(), b.x2()));
    int y_hi = static_cast<int>(std::max(a.y2(), b.y2()));
    long long inter = 0, uni = 0;
    for (int y = y_lo; y < y_hi; ++y)
        for (int x = x_lo; x < x_hi; ++x) {
            bool in_a = covers(a, x, y), in_b = covers(b, x, y);
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Greedy NMS oracle written the slow, obvious way.
std::vector<std::size_t> nms_bruteforce(const std::vector<ScoredBox>& boxes, double thr) {
    std::vector<bool> alive(boxes.size(), true);
    std::vector<std::size_t> kept;
    for (;;) {
        std::size_t best = boxes.size();
        for (std::size_t i = 0; i < boxes.size(); ++i)
            if (alive[i] && (best == boxes.size() || boxes[i].confidence > boxes[best].confidence))
                best = i;
        if (best == boxes.size()) break;
        kept.push_back(best);
        alive[best] = false;
        for (std::size_t i = 0; i < boxes.size(); ++i)
            if (alive[i] && iou(boxes[best].box, boxes[i].box) > thr) alive[i] = false;
    }
    return kept;
}

Box random_int_box(std::mt19937& rng, int canvas) {
    std::uniform_int_distribution<int> coord(0, canvas - 1);
    std::uniform_int_distribution<int> side(0, canvas / 2);
    return Box{static_cast<double>(coord(rng)), static_cast<double>(coord(rng)),
               static_cast<double>(side(rng)), static_cast<double>(side(rng))};
}

}  // namespace

TEST_CASE("area") {
    CHECK(area(Box{0, 0, 10, 10}) == doctest::Approx(100.0));
    CHECK(area(Box{3, 7, 0, 5}) == doctest::Approx(0.0));
    CHECK(area(Box{1.5, 2.5, 4.0, 2.5}) == doctest::Approx(10.0));
}

TEST_CASE("iou worked examples") {
    CHECK(iou(Box{0, 0, 10, 10}, Box{0, 0, 10, 10}) == doctest::Approx(1.0));
    CHECK(iou(Box{0, 0, 10, 10}, Box{20, 20, 5, 5}) == doctest::Approx(0.0));
    // rasterization oracle: intersection 25 pixels, union 175
    CHECK(iou_rasterized(Box{0, 0, 10, 10}, Box{5, 5, 10, 10}) == doctest::Approx(25.0 / 175.0));
    CHECK(iou(Box{0, 0, 10, 10}, Box{5, 5, 10, 10}) == doctest::Approx(1.0 / 7.0));
    // intersection 100, union 200
    CHECK(iou_rasterized(Box{0, 0, 10, 10}, Box{0, 0, 10, 20}) == doctest::Approx(0.5));
    CHECK(iou(Box{0, 0, 10, 10}, Box{0, 0, 10, 20}) == doctest::Approx(0.5));
}

TEST_CASE("iou degenerate boxes") {
    CHECK(iou(Box{0, 0, 0, 0}, Box{0, 0, 0, 0}) == 0.0);
    CHECK(iou(Box{5, 5, 0, 10}, Box{5, 5, 0, 10}) == 0.0);
    CHECK(iou(Box{0, 0, 0, 0}, Box{0, 0, 10, 10}) == doctest::Approx(0.0));
}

TEST_CASE("iou properties: symmetry, range, identity, translation invariance") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    for (int i = 0; i < 2000; ++i) {
        Box a = random_int_box(rng, 256), b = random_int_box(rng, 256);
        double v = iou(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(iou(b, a) == doctest::Approx(v).epsilon(1e-12));
        if (area(a) > 0) CHECK(iou(a, a) == doctest::Approx(1.0));
        double tx = shift(rng), ty = shift(rng);
        Box at{a.x + tx, a.y + ty, a.w, a.h}, bt{b.x + tx, b.y + ty, b.w, b.h};
        CHECK(iou(at, bt) == doctest::Approx(v).epsilon(1e-9));
    }
}

TEST_CASE("iou matches rasterization oracle on 10000 random integer pairs") {
    std::mt19937 rng(123);
    for (int i = 0; i < 10000; ++i) {
        Box a = random_int_box(rng, 256), b = random_int_box(rng, 256);
        CHECK(std::fabs(iou(a, b) - iou_rasterized(a, b)) <= 1e-9);
    }
}

TEST_CASE("nms worked examples") {
    CHECK(nms({{Box{0, 0, 10, 10}, 0.9}}, 0.5) == std::vector<std::size_t>{0});
    CHECK(nms({}, 0.5).empty());
    std::vector<ScoredBox> boxes = {{Box{0, 0, 10, 10}, 0.9},
                                    {Box{0, 0, 10, 10}, 0.8},
                                    {Box{50, 50, 10, 10}, 0.5}};
    CHECK(nms(boxes, 0.7) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("nms: suppression comparison is strict, ties break by lower index") {
    // IoU exactly at the threshold survives
    std::vector<ScoredBox> at_thr = {{Box{0, 0, 10, 10}, 0.9}, {Box{0, 0, 10, 20}, 0.8}};
    CHECK(nms(at_thr, 0.5) == std::vector<std::size_t>{0, 1});
    CHECK(nms(at_thr, 0.4999) == std::vector<std::size_t>{0});
    // equal confidence: lower input index wins
    std::vector<ScoredBox> tied = {{Box{0, 0, 10, 10}, 0.5}, {Box{1, 1, 10, 10}, 0.5}};
    CHECK(nms(tied, 0.1) == std::vector<std::size_t>{0});
}

TEST_CASE("nms matches brute-force greedy oracle on 1000 random instances") {
    std::mt19937 rng(99);
    std::uniform_int_distribution<int> count(0, 20);
    std::uniform_real_distribution<double> conf(0.0, 1.0);
    std::uniform_real_distribution<double> thr(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        std::vector<ScoredBox> boxes;
        int n = count(rng);
        for (int j = 0; j < n; ++j) boxes.push_back({random_int_box(rng, 64), conf(rng)});
        double t = thr(rng);
        auto kept = nms(boxes, t);
        CHECK(kept == nms_bruteforce(boxes, t));
        // every kept candidate is compatible with every higher-confidence kept one
        for (std::size_t a = 0; a < kept.size(); ++a)
            for (std::size_t b = a + 1; b < kept.size(); ++b)
                CHECK(iou(boxes[kept[a]].box, boxes[kept[b]].box) <= t);
    }
}

TEST_CASE("assign_labels") {
    Box gt{0, 0, 10, 10};
    CHECK(assign_labels({gt}, gt) == std::vector<Label>{Label::positive});
    CHECK(assign_labels({Box{5, 5, 10, 10}}, gt) == std::vector<Label>{Label::negative});
    // IoU exactly 0.5: inclusive threshold
    CHECK(assign_labels({Box{0, 0, 10, 20}}, gt) == std::vector<Label>{Label::positive});
}

TEST_CASE("assign_labels threshold extremes") {
    std::mt19937 rng(5);
    Box gt{50, 50, 40, 40};
    std::vector<Box> proposals;
    for (int i = 0; i < 50; ++i) proposals.push_back(random_int_box(rng, 128));
    auto zero_thr = assign_labels(proposals, gt, 0.0);
    for (std::size_t i = 0; i < proposals.size(); ++i) CHECK(zero_thr[i] == Label::positive);
    // strictly above 1 is impossible to meet
    auto high = assign_labels(proposals, gt, 1.0 + 1e-9);
    for (auto l : high) CHECK(l == Label::negative);
    // order preserved, same length
    CHECK(zero_thr.size() == proposals.size());
}

TEST_CASE("corner-pair conversion helper") {
    Box b = Box::from_corners(10, 20, 4, 8);
    CHECK(b.x == doctest::Approx(4));
    CHECK(b.y == doctest::Approx(8));
    CHECK(b.w == doctest::Approx(6));
    CHECK(b.h == doctest::Approx(12));
    CHECK(b.x2() == doctest::Approx(10));
    CHECK(b.y2() == doctest::Approx(20));
}
