#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "xpolicy/error.hpp"

namespace xpolicy {

/// Flat key = value configuration. Keys may contain spaces; '#' starts a
/// comment. Serialization is sorted, so equal configs hash equally.
class Config {
public:
    static Config defaults();
    static Config load(const std::filesystem::path& path);
    static Config parse(const std::string& text);

    void save(const std::filesystem::path& path) const;
    std::string serialize() const;
    uint64_t hash() const;

    bool has(const std::string& key) const;
    const std::string& str(const std::string& key) const;  // throws io_error when absent
    double real(const std::string& key) const;
    long integer(const std::string& key) const;
    bool flag(const std::string& key) const;  // yes/no, true/false, 1/0

    void set(const std::string& key, const std::string& value);
    void set_real(const std::string& key, double v);
    void set_integer(const std::string& key, long v);

    const std::map<std::string, std::string>& entries() const { return kv_; }
    bool operator==(const Config&) const = default;

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace xpolicy
