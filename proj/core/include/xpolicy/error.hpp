#pragma once

#include <stdexcept>
#include <string>

namespace xpolicy {

/// Shape or dimension disagreement between tensors or layouts.
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

/// Non-finite values where finite math was required.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

/// Raw vector does not match the embodiment's declared slot layout.
struct layout_error : std::runtime_error {
    explicit layout_error(const std::string& msg) : std::runtime_error("layout error: " + msg) {}
};

/// Scaling statistics missing for a requested (embodiment, slot) key.
struct store_miss_error : std::runtime_error {
    explicit store_miss_error(const std::string& msg) : std::runtime_error("store miss: " + msg) {}
};

/// fit_stats could not produce bounds for a declared-active slot.
struct fit_error : std::runtime_error {
    explicit fit_error(const std::string& msg) : std::runtime_error("fit error: " + msg) {}
};

/// Token groups or timestep maps that should line up do not.
struct alignment_error : std::runtime_error {
    explicit alignment_error(const std::string& msg) : std::runtime_error("alignment error: " + msg) {}
};

/// Corrupt, truncated or version-mismatched files.
struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

/// Non-finite loss or other unrecoverable training state.
struct training_error : std::runtime_error {
    explicit training_error(const std::string& msg) : std::runtime_error("training error: " + msg) {}
};

/// Episode generation failed (unreachable target etc).
struct generation_error : std::runtime_error {
    explicit generation_error(const std::string& msg) : std::runtime_error("generation error: " + msg) {}
};

}  // namespace xpolicy
