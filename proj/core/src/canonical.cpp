#include "xpolicy/canonical.hpp"

#include <algorithm>

namespace xpolicy {
namespace canon {

namespace {

std::array<std::string_view, kDim> build_names() {
    std::array<std::string_view, kDim> n{};
    static const std::array<std::string, kDim> storage = [] {
        std::array<std::string, kDim> s{};
        auto fill = [&](long base, long count, const std::string& stem) {
            for (long i = 0; i < count; ++i) s[static_cast<size_t>(base + i)] = count == 1 ? stem : stem + "." + std::to_string(i);
        };
        fill(kLJointPos, 7, "l.jpos");
        fill(kRJointPos, 7, "r.jpos");
        fill(kLJointVel, 7, "l.jvel");
        fill(kRJointVel, 7, "r.jvel");
        fill(kLGripper, 1, "l.grip");
        fill(kRGripper, 1, "r.grip");
        fill(kLEePos, 3, "l.ee_pos");
        fill(kLEeQuat, 4, "l.ee_quat");
        fill(kREePos, 3, "r.ee_pos");
        fill(kREeQuat, 4, "r.ee_quat");
        fill(kLEeLinVel, 3, "l.ee_linvel");
        fill(kLEeAngVel, 3, "l.ee_angvel");
        fill(kREeLinVel, 3, "r.ee_linvel");
        fill(kREeAngVel, 3, "r.ee_angvel");
        fill(kLGripperVel, 1, "l.grip_vel");
        fill(kRGripperVel, 1, "r.grip_vel");
        fill(kLGripperEffort, 1, "l.grip_effort");
        fill(kRGripperEffort, 1, "r.grip_effort");
        return s;
    }();
    for (long i = 0; i < kDim; ++i) n[static_cast<size_t>(i)] = storage[static_cast<size_t>(i)];
    return n;
}

}  // namespace

const std::array<std::string_view, kDim>& slot_names() {
    static const std::array<std::string_view, kDim> names = build_names();
    return names;
}

long slot_index(std::string_view name) {
    const auto& names = slot_names();
    for (long i = 0; i < kDim; ++i)
        if (names[static_cast<size_t>(i)] == name) return i;
    throw layout_error("unknown canonical slot '" + std::string(name) + "'");
}

}  // namespace canon

long EmbodimentDescriptor::state_dim() const {
    long n = 0;
    for (uint8_t b : active_slots) n += b;
    return n;
}

long EmbodimentDescriptor::action_dim() const {
    long n = 0;
    for (uint8_t b : action_active_slots) n += b;
    return n;
}

void EmbodimentDescriptor::validate() const {
    if (id.empty() || id.find_first_of(" \t\n") != std::string::npos)
        throw layout_error("embodiment id must be a non-empty token, got '" + id + "'");
    if (active_slots.size() != canon::kDim || action_active_slots.size() != canon::kDim)
        throw layout_error("embodiment '" + id + "': slot masks must have length " + std::to_string(canon::kDim));
    if (state_dim() == 0) throw layout_error("embodiment '" + id + "': no active state slots");
    if (action_dim() == 0) throw layout_error("embodiment '" + id + "': no active action slots");
    if (camera_count < 1 || camera_count > 4)
        throw layout_error("embodiment '" + id + "': camera_count " + std::to_string(camera_count) + " outside 1..4");
}

std::vector<long> active_indices(const std::vector<uint8_t>& mask) {
    std::vector<long> idx;
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(static_cast<long>(i));
    return idx;
}

}  // namespace xpolicy
