#include "uareg/config.hpp"

#include <fstream>
#include <sstream>

#include "uareg/common.hpp"

namespace uareg {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    return out;
}

} // namespace

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

Config Config::from_text(const std::string& text) {
    Config c;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(lineno) + ": expected `key = value`");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
        c.set(key, val);
    }
    return c;
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
}

std::string Config::get_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw UsageError("missing required config key: " + key);
    return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double Config::get_f64(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + ": not a number: " + it->second);
    }
}

std::int64_t Config::get_i64(const std::string& key, std::int64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
        std::size_t pos = 0;
        std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key " + key + ": not an integer: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw UsageError("config key " + key + ": not a boolean: " + v);
}

std::vector<double> Config::get_f64_list(const std::string& key, const std::vector<double>& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    for (const auto& item : split_list(it->second, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            double v = std::stod(item, &pos);
            if (pos != item.size()) throw std::invalid_argument("");
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("config key " + key + ": not a number list: " + it->second);
        }
    }
    return out;
}

std::vector<std::int64_t> Config::get_i64_list(const std::string& key,
                                               const std::vector<std::int64_t>& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<std::int64_t> out;
    for (const auto& item : split_list(it->second, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            std::int64_t v = std::stoll(item, &pos);
            if (pos != item.size()) throw std::invalid_argument("");
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError("config key " + key + ": not an integer list: " + it->second);
        }
    }
    return out;
}

std::pair<double, double> Config::get_range(const std::string& key,
                                            std::pair<double, double> fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    auto parts = split_list(it->second, ':');
    if (parts.size() != 2)
        throw UsageError("config key " + key + ": expected LO:HI, got: " + it->second);
    try {
        return {std::stod(parts[0]), std::stod(parts[1])};
    } catch (const std::exception&) {
        throw UsageError("config key " + key + ": expected LO:HI, got: " + it->second);
    }
}

std::string Config::resolved_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    return os.str();
}

void Config::write_resolved(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << resolved_text();
}

std::uint64_t Config::hash_subset(const std::vector<std::string>& prefixes) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : kv_) {
        bool match = prefixes.empty();
        for (const auto& p : prefixes)
            if (k.rfind(p, 0) == 0) { match = true; break; }
        if (!match) continue;
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    return h;
}

} // namespace uareg
