#pragma once

#include <vector>

namespace iclab {

// Grayscale image, row-major, values in [0, 1]. Stored as float32: this is
// also the wire format for episode caches and registry archives.
struct Image {
    int h = 0;
    int w = 0;
    std::vector<float> pix;

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), pix(static_cast<size_t>(h_) * static_cast<size_t>(w_), 0.0f) {}

    float& at(int y, int x) { return pix[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)]; }
    float at(int y, int x) const { return pix[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)]; }

    bool same_size(const Image& o) const { return h == o.h && w == o.w; }
};

Image resize_bilinear(const Image& src, int h, int w);

// Lattice transforms used for class augmentation. Rotations require square
// images. flip is applied first (left-right), then the rotation.
enum class Rotation { r0, r90, r180, r270 };

Image transform_image(const Image& src, Rotation rot, bool flip);

}  // namespace iclab
