#pragma once

#include <vector>

#include "xpolicy/error.hpp"

namespace xpolicy {

/// Square RGB image, planar channel-major layout, values nominally in [0,1].
struct Image {
    long size = 0;
    std::vector<double> px;  // 3 * size * size

    Image() = default;
    explicit Image(long s) : size(s), px(static_cast<size_t>(3 * s * s), 0.0) {}

    double& at(int c, long y, long x) { return px[static_cast<size_t>((c * size + y) * size + x)]; }
    double at(int c, long y, long x) const { return px[static_cast<size_t>((c * size + y) * size + x)]; }
};

/// Row-major patch grid; each patch flattens channel-major to 3*(size/P)^2.
inline std::vector<double> flatten_patch(const Image& img, long P, long patch_row, long patch_col) {
    if (img.size % P != 0) throw layout_error("image size " + std::to_string(img.size) + " not divisible by patch grid");
    const long ps = img.size / P;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(3 * ps * ps));
    for (int c = 0; c < 3; ++c)
        for (long y = 0; y < ps; ++y)
            for (long x = 0; x < ps; ++x) out.push_back(img.at(c, patch_row * ps + y, patch_col * ps + x));
    return out;
}

}  // namespace xpolicy
