#include "xpolicy/scaling.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace xpolicy {

namespace {

constexpr const char* kMagic = "xpolicy-scaling v1";

std::atomic<uint64_t> g_out_of_range{0};

std::string fmt_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw io_error("scaling store: cannot format value");
    return std::string(buf, p);
}

double parse_double(const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw io_error("scaling store: bad numeric field '" + s + "'");
    return v;
}

}  // namespace

void ScalingStore::set(const std::string& embodiment_id, long slot, Bounds b) {
    if (embodiment_id.empty() || embodiment_id.find_first_of(" \t\n") != std::string::npos)
        throw layout_error("scaling store: bad embodiment id '" + embodiment_id + "'");
    if (slot < 0 || slot >= canon::kDim)
        throw layout_error("scaling store: slot " + std::to_string(slot) + " outside canonical table");
    if (!(b.lo <= b.hi) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
        throw fit_error("scaling store: invalid bounds [" + fmt_double(b.lo) + ", " + fmt_double(b.hi) + "]");
    m_[{embodiment_id, slot}] = b;
}

const Bounds& ScalingStore::at(const std::string& embodiment_id, long slot) const {
    auto it = m_.find({embodiment_id, slot});
    if (it == m_.end())
        throw store_miss_error("no scaling stats for (" + embodiment_id + ", slot " + std::to_string(slot) + ")");
    return it->second;
}

bool ScalingStore::contains(const std::string& embodiment_id, long slot) const {
    return m_.find({embodiment_id, slot}) != m_.end();
}

void ScalingStore::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    f << kMagic << "\n" << m_.size() << "\n";
    for (const auto& [key, b] : m_)
        f << key.first << " " << key.second << " " << fmt_double(b.lo) << " " << fmt_double(b.hi) << "\n";
    if (!f) throw io_error("short write to " + path.string());
}

ScalingStore ScalingStore::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open " + path.string());
    std::string header;
    std::getline(f, header);
    if (header != kMagic) throw io_error(path.string() + ": unsupported scaling store header '" + header + "'");
    size_t count = 0;
    f >> count;
    ScalingStore s;
    for (size_t i = 0; i < count; ++i) {
        std::string id, lo, hi;
        long slot;
        if (!(f >> id >> slot >> lo >> hi)) throw io_error(path.string() + ": truncated at entry " + std::to_string(i));
        s.set(id, slot, Bounds{parse_double(lo), parse_double(hi)});
    }
    if (s.size() != count) throw io_error(path.string() + ": duplicate keys");
    return s;
}

void fit_rows(ScalingStore& store, const std::string& embodiment_id, const std::vector<uint8_t>& active,
              const std::vector<std::vector<double>>& rows) {
    const std::vector<long> idx = active_indices(active);
    if (rows.empty())
        throw fit_error("fit_rows(" + embodiment_id + "): no data for active slot '" +
                        std::string(idx.empty() ? "none" : canon::slot_names()[static_cast<size_t>(idx[0])]) + "'");
    for (const auto& row : rows)
        if (row.size() != idx.size())
            throw layout_error("fit_rows(" + embodiment_id + "): row has " + std::to_string(row.size()) +
                               " values, embodiment declares " + std::to_string(idx.size()) + " active slots");
    for (size_t j = 0; j < idx.size(); ++j) {
        double lo = rows[0][j], hi = rows[0][j];
        for (const auto& row : rows) {
            lo = std::min(lo, row[j]);
            hi = std::max(hi, row[j]);
        }
        if (store.contains(embodiment_id, idx[j])) {
            const Bounds& prev = store.at(embodiment_id, idx[j]);
            lo = std::min(lo, prev.lo);
            hi = std::max(hi, prev.hi);
        }
        store.set(embodiment_id, idx[j], Bounds{lo, hi});
    }
}

uint64_t out_of_range_count() { return g_out_of_range.load(); }
void reset_out_of_range_count() { g_out_of_range.store(0); }

CanonicalState normalize_masked(const std::vector<double>& raw, const std::string& embodiment_id,
                                const std::vector<uint8_t>& active, const ScalingStore& store) {
    const std::vector<long> idx = active_indices(active);
    if (raw.size() != idx.size())
        throw layout_error("normalize(" + embodiment_id + "): got " + std::to_string(raw.size()) + " values for " +
                           std::to_string(idx.size()) + " active slots");
    CanonicalState out;
    for (size_t j = 0; j < idx.size(); ++j) {
        const Bounds& b = store.at(embodiment_id, idx[j]);
        double v = 0.0;
        if (!b.degenerate()) {
            v = 2.0 * (raw[j] - b.lo) / (b.hi - b.lo) - 1.0;
            if (v < -1.0 || v > 1.0) g_out_of_range.fetch_add(1, std::memory_order_relaxed);
        }
        out.values[static_cast<size_t>(idx[j])] = v;
        out.mask[static_cast<size_t>(idx[j])] = 1;
    }
    return out;
}

std::vector<double> denormalize_masked(const CanonicalState& state, const std::string& embodiment_id,
                                       const std::vector<uint8_t>& active, const ScalingStore& store) {
    const std::vector<long> idx = active_indices(active);
    std::vector<double> out(idx.size());
    for (size_t j = 0; j < idx.size(); ++j) {
        const Bounds& b = store.at(embodiment_id, idx[j]);
        const double v = state.values[static_cast<size_t>(idx[j])];
        out[j] = b.degenerate() ? b.lo : b.lo + (v + 1.0) * 0.5 * (b.hi - b.lo);
    }
    return out;
}

}  // namespace xpolicy
