#include "xpolicy/scene.hpp"

#include <algorithm>
#include <cmath>

#include "xpolicy/error.hpp"

namespace xpolicy {

namespace {

double background(int style, double wx, double wy) {
    switch (style) {
        case 0: return 0.12;
        case 1: return 0.05 + 0.20 * std::clamp((wx + kWorldHalf) / (2.0 * kWorldHalf), 0.0, 1.0);
        case 2: return 0.05 + 0.20 * std::clamp((wy + kWorldHalf) / (2.0 * kWorldHalf), 0.0, 1.0);
        case 3: {
            const long cell = static_cast<long>(std::floor(wx / 0.4)) + static_cast<long>(std::floor(wy / 0.4));
            return (cell & 1) ? 0.20 : 0.08;
        }
        case 4: return 0.05 + 0.20 * std::min(1.0, std::hypot(wx, wy) / kWorldHalf);
        default: throw layout_error("scene style " + std::to_string(style) + " outside 0..4");
    }
}

double blob_weight(const Blob& blob, double wx, double wy) {
    const double dx = wx - blob.x, dy = wy - blob.y;
    double d = 0.0, scale = blob.radius;
    switch (blob.shape) {
        case BlobShape::Circle: d = std::hypot(dx, dy); break;
        case BlobShape::Square: d = std::max(std::fabs(dx), std::fabs(dy)); break;
        case BlobShape::Diamond: d = std::fabs(dx) + std::fabs(dy); break;
        case BlobShape::Ring:
            d = std::fabs(std::hypot(dx, dy) - blob.radius);
            scale = 0.35 * blob.radius;
            break;
    }
    const double u = d / scale;
    return u > 3.0 ? 0.0 : std::exp(-2.0 * u * u);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

double stroke_weight(const Scene::Stroke& s, double wx, double wy) {
    double best = 1e30;
    for (size_t i = 0; i + 1 < s.points.size(); ++i)
        best = std::min(best, segment_distance(wx, wy, s.points[i].first, s.points[i].second, s.points[i + 1].first,
                                               s.points[i + 1].second));
    const double u = best / s.width;
    return u > 3.0 ? 0.0 : std::exp(-2.0 * u * u);
}

}  // namespace

std::vector<CameraPose> default_cameras(int count) {
    if (count < 1 || count > 4) throw layout_error("camera count " + std::to_string(count) + " outside 1..4");
    static const std::vector<CameraPose> all = {
        {0.0, 0.0, 0.0, 1.0},
        {0.5236, 0.2, 0.1, 1.15},
        {-0.7854, -0.15, 0.2, 0.9},
        {1.5708, 0.0, -0.2, 1.05},
    };
    return {all.begin(), all.begin() + count};
}

Image render_view(const Scene& scene, const CameraPose& cam, long resolution) {
    if (resolution < 4) throw layout_error("render resolution " + std::to_string(resolution) + " too small");
    Image img(resolution);
    const double ca = std::cos(cam.angle), sa = std::sin(cam.angle);
    for (long y = 0; y < resolution; ++y) {
        for (long x = 0; x < resolution; ++x) {
            // pixel center -> view square -> world point
            const double u = ((static_cast<double>(x) + 0.5) / static_cast<double>(resolution) * 2.0 - 1.0) *
                             kWorldHalf / cam.zoom;
            const double v = (1.0 - (static_cast<double>(y) + 0.5) / static_cast<double>(resolution) * 2.0) *
                             kWorldHalf / cam.zoom;
            const double wx = cam.cx + ca * u - sa * v;
            const double wy = cam.cy + sa * u + ca * v;

            double r = background(scene.style, wx, wy);
            double g = r, b = r;
            for (const auto& blob : scene.blobs) {
                const double w = blob_weight(blob, wx, wy);
                if (w == 0.0) continue;
                r += w * blob.r;
                g += w * blob.g;
                b += w * blob.b;
            }
            for (const auto& s : scene.strokes) {
                const double w = stroke_weight(s, wx, wy);
                if (w == 0.0) continue;
                r += w * s.r;
                g += w * s.g;
                b += w * s.b;
            }
            img.at(0, y, x) = std::min(1.0, r);
            img.at(1, y, x) = std::min(1.0, g);
            img.at(2, y, x) = std::min(1.0, b);
        }
    }
    return img;
}

std::vector<Image> render_views(const Scene& scene, const std::vector<CameraPose>& cams, long resolution) {
    std::vector<Image> out;
    out.reserve(cams.size());
    for (const auto& cam : cams) out.push_back(render_view(scene, cam, resolution));
    return out;
}

Image quantize_pixels(const Image& img) {
    Image out(img.size);
    for (size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = std::round(std::clamp(img.px[i], 0.0, 1.0) * 255.0) / 255.0;
    return out;
}

std::pair<double, double> channel_centroid(const Image& img, int channel) {
    double lo = 1e30;
    for (long y = 0; y < img.size; ++y)
        for (long x = 0; x < img.size; ++x) lo = std::min(lo, img.at(channel, y, x));
    double wsum = 0.0, xs = 0.0, ys = 0.0;
    for (long y = 0; y < img.size; ++y)
        for (long x = 0; x < img.size; ++x) {
            const double w = img.at(channel, y, x) - lo;
            wsum += w;
            xs += w * (static_cast<double>(x) + 0.5);
            ys += w * (static_cast<double>(y) + 0.5);
        }
    if (wsum <= 0.0) return {img.size / 2.0, img.size / 2.0};
    return {xs / wsum, ys / wsum};
}

}  // namespace xpolicy
