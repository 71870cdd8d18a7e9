#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace topokd::cfg {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key-value tree with dotted keys, one `key = value` pair per line.
/// Lines starting with '#' are comments. Lists are comma-separated.
class KvTree {
public:
    static KvTree parse(const std::string& text);
    static KvTree parse_file(const std::string& path);
    std::string to_text() const;  // keys sorted
    void save(const std::string& path) const;

    bool has(const std::string& key) const { return kv_.count(key) > 0; }
    std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }
    void set_int(const std::string& key, long long v) { kv_[key] = std::to_string(v); }
    void set_u64(const std::string& key, std::uint64_t v) { kv_[key] = std::to_string(v); }
    void set_double(const std::string& key, double v);
    void set_bool(const std::string& key, bool v) { kv_[key] = v ? "true" : "false"; }
    void set_ints(const std::string& key, const std::vector<int>& v);

private:
    std::map<std::string, std::string> kv_;
};

}  // namespace topokd::cfg
