#include "c4av/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace c4av {

ImageBuffer load_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error("failed to read image: " + path);
    ImageBuffer img;
    img.width = bgr.cols;
    img.height = bgr.rows;
    img.rgb.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            std::size_t o = (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
            img.rgb[o + 0] = row[x][2] / 255.0f;
            img.rgb[o + 1] = row[x][1] / 255.0f;
            img.rgb[o + 2] = row[x][0] / 255.0f;
        }
    }
    return img;
}

void save_image(const std::string& path, const ImageBuffer& img) {
    cv::Mat bgr(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            std::size_t o = (static_cast<std::size_t>(y) * img.width + x) * 3;
            auto q = [&](int c) {
                return static_cast<unsigned char>(
                    std::clamp(std::lround(img.rgb[o + c] * 255.0f), 0L, 255L));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (!cv::imwrite(path, bgr)) throw std::runtime_error("failed to write image: " + path);
}

Tensor crop_resize(const ImageBuffer& img, const Box& box, int size) {
    Box b = box.clamped(img.width, img.height);
    if (area(b) <= 0.0)
        throw std::runtime_error("zero-area box after clamping to image bounds");

    Tensor out({3, size, size});
    const double sx = b.w / size;
    const double sy = b.h / size;
    for (int oy = 0; oy < size; ++oy) {
        double fy = b.y + (oy + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y0c = std::clamp(y0, 0, img.height - 1);
        int y1c = std::clamp(y0 + 1, 0, img.height - 1);
        for (int ox = 0; ox < size; ++ox) {
            double fx = b.x + (ox + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x0c = std::clamp(x0, 0, img.width - 1);
            int x1c = std::clamp(x0 + 1, 0, img.width - 1);
            for (int c = 0; c < 3; ++c) {
                double top = img.at(y0c, x0c, c) * (1.0 - wx) + img.at(y0c, x1c, c) * wx;
                double bot = img.at(y1c, x0c, c) * (1.0 - wx) + img.at(y1c, x1c, c) * wx;
                out.data[(static_cast<std::size_t>(c) * size + oy) * size + ox] =
                    top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace c4av
