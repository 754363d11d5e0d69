#pragma once

#include <string>
#include <vector>

#include "c4av/geometry.hpp"
#include "c4av/tensor.hpp"

namespace c4av {

// Decoded image, RGB interleaved, values in [0,1].
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;  // height*width*3

    float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

ImageBuffer load_image(const std::string& path);
void save_image(const std::string& path, const ImageBuffer& img);

// Clamp `box` to the image, crop it and bilinearly resize to size x size.
// Output is channel-planar 3 x size x size. Throws if the clamped box has
// zero area.
Tensor crop_resize(const ImageBuffer& img, const Box& box, int size);

}  // namespace c4av
