#pragma once

#include <utility>
#include <vector>

#include "xpolicy/image.hpp"

namespace xpolicy {

/// Soft-blob shapes. Diamond and Ring never appear in training data; they
/// are the object-shift holdout.
enum class BlobShape { Circle, Square, Diamond, Ring };

struct Blob {
    double x = 0.0, y = 0.0;
    double radius = 0.2;
    BlobShape shape = BlobShape::Circle;
    double r = 0.0, g = 0.0, b = 0.0;  // additive channel intensities
};

/// World -> view: rotate by -angle about (cx, cy), scale by zoom; the square
/// [-kWorldHalf, kWorldHalf]^2 of view space fills the image.
struct CameraPose {
    double angle = 0.0;
    double cx = 0.0, cy = 0.0;
    double zoom = 1.0;
};

inline constexpr double kWorldHalf = 1.6;

/// Background styles: 0 constant, 1 horizontal gradient, 2 vertical gradient,
/// 3 checker, 4 radial. Styles 3 and 4 never appear in training data; they
/// are the scene-shift holdout.
inline constexpr int kSceneStyles = 5;
inline constexpr int kTrainStyles = 3;

struct Scene {
    int style = 0;
    std::vector<Blob> blobs;

    /// Polylines drawn as chains of soft capsules.
    struct Stroke {
        std::vector<std::pair<double, double>> points;
        double width = 0.1;
        double r = 0.0, g = 0.0, b = 0.0;
    };
    std::vector<Stroke> strokes;
};

/// 1..4 fixed, pairwise-distinct viewpoints.
std::vector<CameraPose> default_cameras(int count);

Image render_view(const Scene& scene, const CameraPose& cam, long resolution);
std::vector<Image> render_views(const Scene& scene, const std::vector<CameraPose>& cams, long resolution);

/// Rounds pixels through the dataset's on-disk 8-bit precision so live
/// renders match reloaded episodes bitwise.
Image quantize_pixels(const Image& img);

/// Intensity-weighted centroid of one channel after subtracting that
/// channel's darkest pixel; (x, y) in pixel units. Diagnostic helper.
std::pair<double, double> channel_centroid(const Image& img, int channel);

}  // namespace xpolicy
