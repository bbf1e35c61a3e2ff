#include "config.hpp"

#include "csv.hpp"
#include "error.hpp"

#include <fstream>
#include <sstream>

namespace yieldcast {

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    Config c = parse(ss.str(), path.string());
    c.base_dir = path.parent_path();
    return c;
}

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto body = csv::trim(line);
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key(csv::trim(body.substr(0, eq)));
        std::string value(csv::trim(body.substr(eq + 1)));
        if (key.empty()) throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
        c.values_[key] = value;
    }
    return c;
}

std::optional<std::string> Config::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get(const std::string& key) const {
    auto v = find(key);
    if (!v) throw ValidationError("missing config key '" + key + "'");
    return *v;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

double Config::get_double(const std::string& key) const {
    return csv::parse_double(get(key), "config key '" + key + "'");
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long long Config::get_int(const std::string& key) const {
    return csv::parse_int(get(key), "config key '" + key + "'");
}

long long Config::get_int(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ValidationError("config key '" + key + "': expected boolean, got '" + *v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    auto v = find(key);
    if (!v || csv::trim(*v).empty()) return {};
    return csv::split(*v);
}

std::filesystem::path Config::get_path(const std::string& key) const {
    std::filesystem::path p = get(key);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p;
}

std::optional<std::filesystem::path> Config::find_path(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get_path(key);
}

std::string Config::to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace yieldcast
