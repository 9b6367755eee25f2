#include "xpolicy/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "xpolicy/rng.hpp"

namespace xpolicy {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string fmt_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw io_error("config: cannot format real value");
    return std::string(buf, p);
}

}  // namespace

Config Config::defaults() {
    Config c;
    // training hyperparameters
    c.set("Learning rate", "1e-4");
    c.set("Batch size", "32");
    c.set("Global batch size", "32");
    c.set("Warmup steps", "500");
    c.set("Dropout", "0.0");
    c.set("Weight decay", "0.0");
    c.set("Gradient clipping", "none");
    c.set("Precision", "f32");
    c.set("Optimizer", "adamw");
    c.set("EMA", "yes");
    c.set("optimizer beta1", "0.9");
    c.set("optimizer beta2", "0.999");
    c.set("optimizer eps", "1e-8");
    c.set("ema decay", "0.9999");
    c.set("train steps", "4000");
    // model dimensions (desk scale)
    c.set("embed dim", "64");
    c.set("patch grid", "4");
    c.set("vision feature dim", "48");
    c.set("language feature dim", "32");
    c.set("prompt max tokens", "8");
    c.set("encoder depth", "4");
    c.set("decoder depth", "4");
    c.set("heads", "4");
    c.set("mlp ratio", "4");
    c.set("cross attn scope", "aligned");
    // horizons and diffusion
    c.set("obs horizon", "2");
    c.set("action horizon", "16");
    c.set("exec horizon", "8");
    c.set("diffusion steps", "1000");
    c.set("sample steps", "7");
    c.set("x0 clip delta", "0.05");
    // seeds and input geometry
    c.set("model seed", "1");
    c.set("frozen encoder seed", "7");
    c.set("image size", "48");
    return c;
}

Config Config::parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    long num = 0;
    while (std::getline(in, line)) {
        ++num;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw io_error("config line " + std::to_string(num) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw io_error("config line " + std::to_string(num) + ": empty key");
        c.kv_[key] = value;
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw io_error("cannot open config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

void Config::save(const std::filesystem::path& path) const {
    std::ofstream f(path);
    if (!f) throw io_error("cannot open " + path.string() + " for writing");
    f << serialize();
    if (!f) throw io_error("short write to " + path.string());
}

std::string Config::serialize() const {
    std::ostringstream ss;
    for (const auto& [k, v] : kv_) ss << k << " = " << v << "\n";
    return ss.str();
}

uint64_t Config::hash() const { return fnv1a(serialize()); }

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

const std::string& Config::str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw io_error("config key '" + key + "' not set");
    return it->second;
}

double Config::real(const std::string& key) const {
    const std::string& v = str(key);
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw io_error("config key '" + key + "': '" + v + "' is not a real number");
    return out;
}

long Config::integer(const std::string& key) const {
    const std::string& v = str(key);
    long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw io_error("config key '" + key + "': '" + v + "' is not an integer");
    return out;
}

bool Config::flag(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (v == "yes" || v == "true" || v == "1") return true;
    if (v == "no" || v == "false" || v == "0") return false;
    throw io_error("config key '" + key + "': '" + v + "' is not a yes/no flag");
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }
void Config::set_real(const std::string& key, double v) { kv_[key] = fmt_real(v); }
void Config::set_integer(const std::string& key, long v) { kv_[key] = std::to_string(v); }

}  // namespace xpolicy
