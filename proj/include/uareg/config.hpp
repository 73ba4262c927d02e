#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace uareg {

// Flat `key = value` configuration. Later assignments win, so layering is
// defaults -> config file -> CLI flags -> UAREG_SEED.
class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path);
    static Config from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    void merge(const Config& other); // other wins

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_f64(const std::string& key, double fallback) const;
    std::int64_t get_i64(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_f64_list(const std::string& key, const std::vector<double>& fallback) const;
    std::vector<std::int64_t> get_i64_list(const std::string& key, const std::vector<std::int64_t>& fallback) const;

    // "LO:HI" -> pair; used for --band and --snr style values.
    std::pair<double, double> get_range(const std::string& key, std::pair<double, double> fallback) const;

    // Canonical serialization: sorted keys, one `key = value` per line.
    std::string resolved_text() const;
    void write_resolved(const std::string& path) const;

    // FNV-1a over the canonical text of keys matching any of the prefixes.
    std::uint64_t hash_subset(const std::vector<std::string>& prefixes) const;

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    std::map<std::string, std::string> kv_;
};

} // namespace uareg
