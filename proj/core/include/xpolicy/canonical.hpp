#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xpolicy/error.hpp"

namespace xpolicy {

// Fixed slot layout shared by every embodiment. Slot kinds follow the usual
// bi-manual arm state: joint positions/velocities (up to 7 per arm), gripper
// aperture, end-effector pose, end-effector twist, gripper velocity/effort.
// Uni-manual embodiments use only left-side slots.
namespace canon {

inline constexpr long kDim = 60;

inline constexpr long kLJointPos = 0;      // 7
inline constexpr long kRJointPos = 7;      // 7
inline constexpr long kLJointVel = 14;     // 7
inline constexpr long kRJointVel = 21;     // 7
inline constexpr long kLGripper = 28;      // 1
inline constexpr long kRGripper = 29;      // 1
inline constexpr long kLEePos = 30;        // 3
inline constexpr long kLEeQuat = 33;       // 4
inline constexpr long kREePos = 37;        // 3
inline constexpr long kREeQuat = 40;       // 4
inline constexpr long kLEeLinVel = 44;     // 3
inline constexpr long kLEeAngVel = 47;     // 3
inline constexpr long kREeLinVel = 50;     // 3
inline constexpr long kREeAngVel = 53;     // 3
inline constexpr long kLGripperVel = 56;   // 1
inline constexpr long kRGripperVel = 57;   // 1
inline constexpr long kLGripperEffort = 58;  // 1
inline constexpr long kRGripperEffort = 59;  // 1

/// Unique name per slot index; the bijection the layout promises.
const std::array<std::string_view, kDim>& slot_names();

long slot_index(std::string_view name);  // throws layout_error on unknown names

}  // namespace canon

/// Constant-size state token: values on active slots, zero elsewhere.
struct CanonicalState {
    std::array<double, canon::kDim> values{};
    std::array<uint8_t, canon::kDim> mask{};
};

/// Which slots an embodiment populates, for states and for actions, plus its
/// camera configuration and the key its scaling statistics live under.
struct EmbodimentDescriptor {
    std::string id;
    std::vector<uint8_t> active_slots;         // length kDim
    std::vector<uint8_t> action_active_slots;  // length kDim
    int camera_count = 1;

    long state_dim() const;
    long action_dim() const;
    void validate() const;  // throws layout_error
};

/// Indices of set bits, in slot order.
std::vector<long> active_indices(const std::vector<uint8_t>& mask);

}  // namespace xpolicy
