#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xpolicy/canonical.hpp"
#include "xpolicy/error.hpp"

namespace xpolicy {

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;
    bool degenerate() const { return lo == hi; }
    bool operator==(const Bounds&) const = default;
};

/// Per-(embodiment, slot) min-max bounds. Immutable once fitted; unknown keys
/// error instead of defaulting. Persisted as versioned sorted text so files
/// diff cleanly and round-trip bit-exactly.
class ScalingStore {
public:
    using Key = std::pair<std::string, long>;

    void set(const std::string& embodiment_id, long slot, Bounds b);
    const Bounds& at(const std::string& embodiment_id, long slot) const;  // throws store_miss_error
    bool contains(const std::string& embodiment_id, long slot) const;
    size_t size() const { return m_.size(); }
    const std::map<Key, Bounds>& entries() const { return m_; }

    void save(const std::filesystem::path& path) const;
    static ScalingStore load(const std::filesystem::path& path);  // throws io_error

    bool operator==(const ScalingStore&) const = default;

private:
    std::map<Key, Bounds> m_;
};

/// Extends per-slot bounds with compact rows (active slots in canonical
/// order) for one embodiment. Rows must be non-empty per declared-active slot.
void fit_rows(ScalingStore& store, const std::string& embodiment_id, const std::vector<uint8_t>& active,
              const std::vector<std::vector<double>>& rows);

/// Times a normalized value landed outside [-1,1]: data beyond the fitted
/// range passes through un-clipped, this only counts it.
uint64_t out_of_range_count();
void reset_out_of_range_count();

/// Compact raw vector (active slots, canonical order) -> canonical table in
/// [-1,1]. Degenerate slots map to 0. Never clips.
CanonicalState normalize_masked(const std::vector<double>& raw, const std::string& embodiment_id,
                                const std::vector<uint8_t>& active, const ScalingStore& store);

/// Exact inverse of normalize_masked on the active slots.
std::vector<double> denormalize_masked(const CanonicalState& state, const std::string& embodiment_id,
                                       const std::vector<uint8_t>& active, const ScalingStore& store);

inline CanonicalState normalize(const std::vector<double>& raw, const EmbodimentDescriptor& emb,
                                const ScalingStore& store) {
    return normalize_masked(raw, emb.id, emb.active_slots, store);
}

inline std::vector<double> denormalize(const CanonicalState& state, const EmbodimentDescriptor& emb,
                                       const ScalingStore& store) {
    return denormalize_masked(state, emb.id, emb.active_slots, store);
}

inline CanonicalState normalize_action(const std::vector<double>& raw, const EmbodimentDescriptor& emb,
                                       const ScalingStore& store) {
    return normalize_masked(raw, emb.id, emb.action_active_slots, store);
}

inline std::vector<double> denormalize_action(const CanonicalState& state, const EmbodimentDescriptor& emb,
                                              const ScalingStore& store) {
    return denormalize_masked(state, emb.id, emb.action_active_slots, store);
}

}  // namespace xpolicy
