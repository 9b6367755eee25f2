#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "xpolicy/config.hpp"
#include "xpolicy/nn.hpp"
#include "xpolicy/optim.hpp"
#include "xpolicy/rng.hpp"
#include "xpolicy/scaling.hpp"

namespace xpolicy {

namespace detail {

inline constexpr char kCkptMagic[4] = {'X', 'P', 'C', 'K'};
inline constexpr uint32_t kCkptVersion = 1;
inline constexpr uint64_t kCkptMaxString = 1 << 24;

inline void ckpt_write(std::ostream& os, const void* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename U>
void ckpt_put(std::ostream& os, U v) {
    ckpt_write(os, &v, sizeof v);
}

inline void ckpt_put_str(std::ostream& os, const std::string& s) {
    ckpt_put<uint64_t>(os, s.size());
    ckpt_write(os, s.data(), s.size());
}

inline void ckpt_read(std::istream& is, void* p, size_t n) {
    is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n) throw io_error("checkpoint: truncated file");
}

template <typename U>
U ckpt_get(std::istream& is) {
    U v{};
    ckpt_read(is, &v, sizeof v);
    return v;
}

inline std::string ckpt_get_str(std::istream& is) {
    const uint64_t len = ckpt_get<uint64_t>(is);
    if (len > kCkptMaxString) throw io_error("checkpoint: implausible string length");
    std::string s(static_cast<size_t>(len), '\0');
    ckpt_read(is, s.data(), s.size());
    return s;
}

inline void ckpt_skip(std::istream& is, uint64_t bytes) {
    is.seekg(static_cast<std::streamoff>(bytes), std::ios::cur);
    if (!is) throw io_error("checkpoint: truncated file");
}

struct CkptHeader {
    uint32_t version = 0;
    uint32_t elem_size = 0;
    long step = 0;
    Config config;
    uint64_t config_hash = 0;
    ScalingStore stats;
};

inline CkptHeader ckpt_read_header(std::istream& is) {
    char magic[4];
    ckpt_read(is, magic, 4);
    for (int i = 0; i < 4; ++i)
        if (magic[i] != kCkptMagic[i]) throw io_error("checkpoint: bad magic");
    CkptHeader h;
    h.version = ckpt_get<uint32_t>(is);
    if (h.version != kCkptVersion)
        throw io_error("checkpoint: unsupported version " + std::to_string(h.version));
    h.elem_size = ckpt_get<uint32_t>(is);
    h.step = static_cast<long>(ckpt_get<int64_t>(is));
    h.config = Config::parse(ckpt_get_str(is));
    h.config_hash = ckpt_get<uint64_t>(is);
    if (h.config.hash() != h.config_hash) throw io_error("checkpoint: config hash mismatch");
    const uint64_t entries = ckpt_get<uint64_t>(is);
    if (entries > kCkptMaxString) throw io_error("checkpoint: implausible stats count");
    for (uint64_t i = 0; i < entries; ++i) {
        const std::string id = ckpt_get_str(is);
        const long slot = static_cast<long>(ckpt_get<int64_t>(is));
        Bounds b;
        b.lo = ckpt_get<double>(is);
        b.hi = ckpt_get<double>(is);
        h.stats.set(id, slot, b);
    }
    return h;
}

}  // namespace detail

struct CheckpointInfo {
    uint32_t version = 0;
    uint32_t elem_size = 0;
    long step = 0;
    Config config;
    uint64_t config_hash = 0;
    std::vector<std::pair<std::string, long>> params;  // name, element count
    long total_params = 0;
    bool has_ema = false;
    bool has_optimizer = false;
    bool has_rng = false;
};

/// Everything needed to rebuild and resume a run: the full config text, the
/// scaling store, named parameters, shadow averages, optimizer moments and
/// step count, and both training random streams. Resume is bit-identical.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Config& cfg, const ScalingStore& stats,
                     const ParamSet<T>& ps, const Ema<T>* ema, const AdamW<T>* adam, const Rng* data_rng,
                     const Rng* noise_rng) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    detail::ckpt_write(f, detail::kCkptMagic, 4);
    detail::ckpt_put<uint32_t>(f, detail::kCkptVersion);
    detail::ckpt_put<uint32_t>(f, static_cast<uint32_t>(sizeof(T)));
    detail::ckpt_put<int64_t>(f, adam ? adam->steps_done() : 0);
    detail::ckpt_put_str(f, cfg.serialize());
    detail::ckpt_put<uint64_t>(f, cfg.hash());
    detail::ckpt_put<uint64_t>(f, stats.entries().size());
    for (const auto& [key, b] : stats.entries()) {
        detail::ckpt_put_str(f, key.first);
        detail::ckpt_put<int64_t>(f, key.second);
        detail::ckpt_put<double>(f, b.lo);
        detail::ckpt_put<double>(f, b.hi);
    }
    detail::ckpt_put<uint64_t>(f, ps.items.size());
    for (const auto& [name, p] : ps.items) {
        detail::ckpt_put_str(f, name);
        detail::ckpt_put<uint64_t>(f, static_cast<uint64_t>(p.numel()));
        detail::ckpt_write(f, p.data().data(), p.data().size() * sizeof(T));
    }
    detail::ckpt_put<uint8_t>(f, ema ? 1 : 0);
    if (ema)
        for (const auto& s : ema->shadows()) {
            detail::ckpt_put<uint64_t>(f, s.size());
            detail::ckpt_write(f, s.data(), s.size() * sizeof(T));
        }
    detail::ckpt_put<uint8_t>(f, adam ? 1 : 0);
    if (adam) {
        for (const auto& m : adam->first_moments()) {
            detail::ckpt_put<uint64_t>(f, m.size());
            detail::ckpt_write(f, m.data(), m.size() * sizeof(T));
        }
        for (const auto& v : adam->second_moments()) {
            detail::ckpt_put<uint64_t>(f, v.size());
            detail::ckpt_write(f, v.data(), v.size() * sizeof(T));
        }
    }
    detail::ckpt_put<uint8_t>(f, data_rng && noise_rng ? 1 : 0);
    if (data_rng && noise_rng) {
        for (uint64_t w : data_rng->state()) detail::ckpt_put<uint64_t>(f, w);
        for (uint64_t w : noise_rng->state()) detail::ckpt_put<uint64_t>(f, w);
    }
    if (!f) throw io_error("short write to " + path.string());
}

/// Restores parameters (and, when requested, shadows, optimizer state, and
/// random streams) into an already-constructed model. Names, order, sizes,
/// and element width must match exactly. Returns the stored step count.
template <typename T>
long load_checkpoint(const std::filesystem::path& path, ParamSet<T>& ps, Ema<T>* ema = nullptr,
                     AdamW<T>* adam = nullptr, Rng* data_rng = nullptr, Rng* noise_rng = nullptr) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint " + path.string());
    const detail::CkptHeader h = detail::ckpt_read_header(f);
    if (h.elem_size != sizeof(T))
        throw io_error("checkpoint: element size " + std::to_string(h.elem_size) + " != " +
                       std::to_string(sizeof(T)));
    const uint64_t count = detail::ckpt_get<uint64_t>(f);
    if (count != ps.items.size())
        throw io_error("checkpoint: has " + std::to_string(count) + " parameters, model has " +
                       std::to_string(ps.items.size()));
    for (auto& [name, p] : ps.items) {
        const std::string stored = detail::ckpt_get_str(f);
        if (stored != name) throw io_error("checkpoint: parameter '" + stored + "' where '" + name + "' expected");
        const uint64_t numel = detail::ckpt_get<uint64_t>(f);
        if (numel != static_cast<uint64_t>(p.numel()))
            throw io_error("checkpoint: '" + name + "' has " + std::to_string(numel) + " values, model expects " +
                           std::to_string(p.numel()));
        detail::ckpt_read(f, p.data().data(), p.data().size() * sizeof(T));
    }
    const auto read_aligned = [&](std::vector<std::vector<T>>& dst, const char* what) {
        if (dst.size() != ps.items.size()) throw io_error(std::string("checkpoint: ") + what + " count mismatch");
        for (size_t i = 0; i < dst.size(); ++i) {
            const uint64_t numel = detail::ckpt_get<uint64_t>(f);
            if (numel != dst[i].size())
                throw io_error(std::string("checkpoint: ") + what + " size mismatch at index " + std::to_string(i));
            detail::ckpt_read(f, dst[i].data(), dst[i].size() * sizeof(T));
        }
    };
    const auto skip_aligned = [&]() {
        for (size_t i = 0; i < ps.items.size(); ++i) {
            const uint64_t numel = detail::ckpt_get<uint64_t>(f);
            detail::ckpt_skip(f, numel * sizeof(T));
        }
    };
    const bool has_ema = detail::ckpt_get<uint8_t>(f) != 0;
    if (ema && !has_ema) throw io_error("checkpoint: no shadow averages stored");
    if (has_ema) {
        if (ema)
            read_aligned(ema->shadows(), "shadow");
        else
            skip_aligned();
    }
    const bool has_optim = detail::ckpt_get<uint8_t>(f) != 0;
    if (adam && !has_optim) throw io_error("checkpoint: no optimizer state stored");
    if (has_optim) {
        if (adam) {
            read_aligned(adam->first_moments(), "first moment");
            read_aligned(adam->second_moments(), "second moment");
            adam->set_steps_done(h.step);
        } else {
            skip_aligned();
            skip_aligned();
        }
    }
    const bool has_rng = detail::ckpt_get<uint8_t>(f) != 0;
    if ((data_rng || noise_rng) && !has_rng) throw io_error("checkpoint: no random streams stored");
    if (has_rng) {
        std::array<uint64_t, 4> a{}, b{};
        for (auto& w : a) w = detail::ckpt_get<uint64_t>(f);
        for (auto& w : b) w = detail::ckpt_get<uint64_t>(f);
        if (data_rng) data_rng->set_state(a);
        if (noise_rng) noise_rng->set_state(b);
    }
    return h.step;
}

inline Config checkpoint_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint " + path.string());
    return detail::ckpt_read_header(f).config;
}

inline ScalingStore checkpoint_stats(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint " + path.string());
    return detail::ckpt_read_header(f).stats;
}

/// Metadata without reconstructing a model; parameter payloads are skipped.
inline CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open checkpoint " + path.string());
    const detail::CkptHeader h = detail::ckpt_read_header(f);
    CheckpointInfo info;
    info.version = h.version;
    info.elem_size = h.elem_size;
    info.step = h.step;
    info.config = h.config;
    info.config_hash = h.config_hash;
    const uint64_t count = detail::ckpt_get<uint64_t>(f);
    if (count > detail::kCkptMaxString) throw io_error("checkpoint: implausible parameter count");
    for (uint64_t i = 0; i < count; ++i) {
        const std::string name = detail::ckpt_get_str(f);
        const uint64_t numel = detail::ckpt_get<uint64_t>(f);
        detail::ckpt_skip(f, numel * h.elem_size);
        info.params.emplace_back(name, static_cast<long>(numel));
        info.total_params += static_cast<long>(numel);
    }
    const auto skip_aligned = [&]() {
        for (uint64_t i = 0; i < count; ++i) detail::ckpt_skip(f, detail::ckpt_get<uint64_t>(f) * h.elem_size);
    };
    info.has_ema = detail::ckpt_get<uint8_t>(f) != 0;
    if (info.has_ema) skip_aligned();
    info.has_optimizer = detail::ckpt_get<uint8_t>(f) != 0;
    if (info.has_optimizer) {
        skip_aligned();
        skip_aligned();
    }
    info.has_rng = detail::ckpt_get<uint8_t>(f) != 0;
    return info;
}

}  // namespace xpolicy
