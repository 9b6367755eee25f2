#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xpolicy/canonical.hpp"
#include "xpolicy/error.hpp"

namespace xpolicy {

inline constexpr double kPi = 3.14159265358979323846;

/// Planar revolute chain anchored at a base point. Angles are relative per
/// joint (cumulative along the chain) and limited to [-pi, pi].
struct PlanarArm {
    double base_x = 0.0, base_y = 0.0;
    std::vector<double> links;

    long joints() const { return static_cast<long>(links.size()); }
    double reach() const;
    double inner_reach() const;  // smallest attainable tip distance from base
    void validate() const;       // 1..3 positive-length links

    /// Base point plus each link's endpoint: joints()+1 points.
    std::vector<std::pair<double, double>> points(const std::vector<double>& q) const;
    std::pair<double, double> tip(const std::vector<double>& q) const;

    /// Tip Jacobian, row-major 2 x joints(): [dx/dq..., dy/dq...].
    std::vector<double> jacobian(const std::vector<double>& q) const;

    /// Damped-least-squares joint step toward a tip displacement (ex, ey).
    std::vector<double> dls_step(const std::vector<double>& q, double ex, double ey, double damping = 0.1) const;

    /// Closed-form configuration whose tip lands on (gx, gy): direct angle for
    /// one link, elbow solution for two, wrist placement plus the two-link
    /// subproblem for three. Deterministic (fixed branch choices). Throws
    /// generation_error when the point is outside the reachable annulus.
    std::vector<double> ik(double gx, double gy) const;
};

/// Adds deltas to the angles, clamping at the +-pi limits; returns the deltas
/// actually applied, so recorded actions stay consistent with the states.
std::vector<double> apply_joint_deltas(std::vector<double>& q, const std::vector<double>& deltas);

/// A bi-manual synthetic robot: canonical-slot descriptor plus arm geometry.
/// States use joint-position and end-effector-xy slots; actions use the
/// joint-position slots (deltas).
struct SynthEmbodiment {
    EmbodimentDescriptor desc;
    PlanarArm left, right;
};

/// The fixed desk-scale embodiments: duo2 (2+2 joints, 1 camera),
/// duo3 (3+3, 2 cameras), mix32 (3 left + 2 right, 3 cameras).
const std::vector<SynthEmbodiment>& synth_embodiments();
const SynthEmbodiment& synth_embodiment(const std::string& id);  // throws io_error

}  // namespace xpolicy
