#include "xpolicy/arm.hpp"

#include <algorithm>
#include <cmath>

namespace xpolicy {

double PlanarArm::reach() const {
    double r = 0.0;
    for (double l : links) r += l;
    return r;
}

double PlanarArm::inner_reach() const {
    // longest link against the rest; a planar chain folds everything shorter
    if (links.size() <= 1) return links.empty() ? 0.0 : links[0];
    double longest = 0.0;
    for (double l : links) longest = std::max(longest, l);
    return std::max(0.0, 2.0 * longest - reach());
}

void PlanarArm::validate() const {
    if (links.empty() || links.size() > 3)
        throw layout_error("planar arm needs 1..3 links, got " + std::to_string(links.size()));
    for (double l : links)
        if (!(l > 0.0)) throw layout_error("planar arm link lengths must be positive");
}

std::vector<std::pair<double, double>> PlanarArm::points(const std::vector<double>& q) const {
    if (q.size() != links.size())
        throw layout_error("arm has " + std::to_string(links.size()) + " joints, got " + std::to_string(q.size()) +
                           " angles");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(links.size() + 1);
    double x = base_x, y = base_y, phi = 0.0;
    pts.emplace_back(x, y);
    for (size_t i = 0; i < links.size(); ++i) {
        phi += q[i];
        x += links[i] * std::cos(phi);
        y += links[i] * std::sin(phi);
        pts.emplace_back(x, y);
    }
    return pts;
}

std::pair<double, double> PlanarArm::tip(const std::vector<double>& q) const { return points(q).back(); }

std::vector<double> PlanarArm::jacobian(const std::vector<double>& q) const {
    const auto pts = points(q);
    const auto [tx, ty] = pts.back();
    const long n = joints();
    std::vector<double> jac(static_cast<size_t>(2 * n));
    for (long j = 0; j < n; ++j) {
        // rotating joint j sweeps the tip about joint j's anchor
        const auto [ax, ay] = pts[static_cast<size_t>(j)];
        jac[static_cast<size_t>(j)] = -(ty - ay);
        jac[static_cast<size_t>(n + j)] = tx - ax;
    }
    return jac;
}

std::vector<double> PlanarArm::dls_step(const std::vector<double>& q, double ex, double ey, double damping) const {
    const auto jac = jacobian(q);
    const long n = joints();
    // 2x2 J J^T + damping^2 I, inverted in closed form
    double a = damping * damping, b = 0.0, d = damping * damping;
    for (long j = 0; j < n; ++j) {
        a += jac[static_cast<size_t>(j)] * jac[static_cast<size_t>(j)];
        b += jac[static_cast<size_t>(j)] * jac[static_cast<size_t>(n + j)];
        d += jac[static_cast<size_t>(n + j)] * jac[static_cast<size_t>(n + j)];
    }
    const double det = a * d - b * b;
    const double vx = (d * ex - b * ey) / det;
    const double vy = (a * ey - b * ex) / det;
    std::vector<double> dq(static_cast<size_t>(n));
    for (long j = 0; j < n; ++j)
        dq[static_cast<size_t>(j)] = jac[static_cast<size_t>(j)] * vx + jac[static_cast<size_t>(n + j)] * vy;
    return dq;
}

namespace {

double wrap_pi(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
}

// Elbow-positive two-link solution for a local target (dx, dy).
std::pair<double, double> two_link(double dx, double dy, double a, double b) {
    const double c = std::clamp((dx * dx + dy * dy - a * a - b * b) / (2.0 * a * b), -1.0, 1.0);
    const double q1 = std::acos(c);
    const double q0 = std::atan2(dy, dx) - std::atan2(b * std::sin(q1), a + b * std::cos(q1));
    return {wrap_pi(q0), q1};
}

}  // namespace

std::vector<double> PlanarArm::ik(double gx, double gy) const {
    validate();
    const double dx = gx - base_x, dy = gy - base_y;
    const double d = std::hypot(dx, dy);
    if (d > reach() + 1e-7 || d < inner_reach() - 1e-7)
        throw generation_error("ik: target at distance " + std::to_string(d) + " outside the reachable annulus [" +
                               std::to_string(inner_reach()) + ", " + std::to_string(reach()) + "]");
    if (joints() == 1) return {std::atan2(dy, dx)};
    if (joints() == 2) {
        const auto [q0, q1] = two_link(dx, dy, links[0], links[1]);
        return {q0, q1};
    }
    // Three links: put the wrist on a circle the first two links can reach
    // that also lies one last-link length from the target, then solve the
    // remaining two-link subproblem.
    const double a = links[0], b = links[1], c = links[2];
    const double margin = 0.02;
    double lo = std::max(std::abs(a - b) + margin, std::abs(d - c));
    double hi = std::min(a + b - margin, d + c);
    if (lo > hi) {
        lo = std::max(std::abs(a - b), std::abs(d - c));
        hi = std::min(a + b, d + c);
        if (lo > hi) throw generation_error("ik: no wrist placement reaches the target");
    }
    const double rw = std::clamp(d, lo, hi);
    const double f = (d * d + rw * rw - c * c) / (2.0 * d);
    const double h = std::sqrt(std::max(0.0, rw * rw - f * f));
    const double ux = dx / d, uy = dy / d;
    const double wx = f * ux - h * uy, wy = f * uy + h * ux;
    const auto [q0, q1] = two_link(wx, wy, a, b);
    return {q0, q1, wrap_pi(std::atan2(dy - wy, dx - wx) - (q0 + q1))};
}

std::vector<double> apply_joint_deltas(std::vector<double>& q, const std::vector<double>& deltas) {
    if (q.size() != deltas.size()) throw layout_error("joint delta count != joint count");
    std::vector<double> applied(deltas.size());
    for (size_t i = 0; i < q.size(); ++i) {
        const double raw = q[i] + deltas[i];
        const double next = std::clamp(raw, -kPi, kPi);
        applied[i] = next == raw ? deltas[i] : next - q[i];
        q[i] = next;
    }
    return applied;
}

namespace {

std::vector<uint8_t> slot_mask(long left_joints, long right_joints, bool ee_slots) {
    std::vector<uint8_t> m(static_cast<size_t>(canon::kDim), 0);
    for (long j = 0; j < left_joints; ++j) m[static_cast<size_t>(canon::kLJointPos + j)] = 1;
    for (long j = 0; j < right_joints; ++j) m[static_cast<size_t>(canon::kRJointPos + j)] = 1;
    if (ee_slots) {
        m[static_cast<size_t>(canon::kLEePos)] = 1;
        m[static_cast<size_t>(canon::kLEePos + 1)] = 1;
        m[static_cast<size_t>(canon::kREePos)] = 1;
        m[static_cast<size_t>(canon::kREePos + 1)] = 1;
    }
    return m;
}

SynthEmbodiment make_embodiment(const std::string& id, PlanarArm left, PlanarArm right, int cameras) {
    SynthEmbodiment e;
    e.left = std::move(left);
    e.right = std::move(right);
    e.left.validate();
    e.right.validate();
    e.desc.id = id;
    e.desc.camera_count = cameras;
    e.desc.active_slots = slot_mask(e.left.joints(), e.right.joints(), true);
    e.desc.action_active_slots = slot_mask(e.left.joints(), e.right.joints(), false);
    e.desc.validate();
    return e;
}

}  // namespace

const std::vector<SynthEmbodiment>& synth_embodiments() {
    static const std::vector<SynthEmbodiment> all = {
        make_embodiment("duo2", {-0.55, 0.0, {0.45, 0.35}}, {0.55, 0.0, {0.45, 0.35}}, 1),
        make_embodiment("duo3", {-0.55, 0.0, {0.40, 0.30, 0.25}}, {0.55, 0.0, {0.40, 0.30, 0.25}}, 2),
        make_embodiment("mix32", {-0.50, 0.0, {0.40, 0.30, 0.25}}, {0.50, 0.0, {0.50, 0.40}}, 3),
    };
    return all;
}

const SynthEmbodiment& synth_embodiment(const std::string& id) {
    for (const auto& e : synth_embodiments())
        if (e.desc.id == id) return e;
    throw io_error("unknown embodiment '" + id + "' (expected duo2|duo3|mix32)");
}

}  // namespace xpolicy
