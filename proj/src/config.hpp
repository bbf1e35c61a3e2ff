#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace yieldcast {

/// Flat key-value configuration: one `key = value` per line, `#` starts a comment.
class Config {
public:
    Config() = default;

    static Config load(const std::filesystem::path& path);
    static Config parse(const std::string& text, const std::string& origin = "<string>");

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void erase(const std::string& key) { values_.erase(key); }

    std::optional<std::string> find(const std::string& key) const;
    std::string get(const std::string& key) const;  // throws if absent
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    double get_double(const std::string& key) const;
    long long get_int(const std::string& key, long long fallback) const;
    long long get_int(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma separated; empty if absent

    /// Relative paths resolve against the directory of the loaded file.
    std::filesystem::path get_path(const std::string& key) const;
    std::optional<std::filesystem::path> find_path(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return values_; }
    std::string to_string() const;

    std::filesystem::path base_dir;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace yieldcast
