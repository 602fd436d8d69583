#include "conformal_ts/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "conformal_ts/errors.hpp"

namespace cts {

namespace {

// Full key schema with defaults. A single config file drives a whole
// synth -> fit -> calibrate -> report pipeline, so every command accepts the
// full schema and reads the keys it needs.
const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> defaults = {
        // paths
        {"dataset", ""},
        {"checkpoint", ""},
        {"traces", ""},
        {"out", ""},
        // shared statistical settings
        {"alpha", "0.1"},
        {"gamma", "0.002"},
        {"seed", "0"},
        {"methods", "ffdci"},
        {"eci_c", "0.2"},
        {"aci_append", "false"},
        {"aci_window", "0"},
        {"calib_fraction", "0.5"},
        // generator
        {"regime", "stationary"},
        {"T", "1000"},
        {"p", "2"},
        {"d1", "2"},
        {"d2", "4"},
        {"M", "10"},
        {"w", ""},
        {"noise_base", "1"},
        {"shift_step", "0"},
        {"shift_kappa", "1"},
        // net training
        {"hidden", "512,256"},
        {"lr", "0.001"},
        {"epochs", "100"},
        {"patience", "5"},
        {"batch", "256"},
        {"split_fraction", "0.8"},
        {"output_clip", "0"},
        // reporting
        {"window", "100"},
        {"sliding", "false"},
        {"svg", "false"},
    };
    return defaults;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos)
        return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

} // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::check_key(const std::string& key) const {
    if (default_values().count(key) == 0)
        throw ConfigError("unknown config key: " + key);
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    RunConfig cfg;
    cfg.load_file(path);
    return cfg;
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw FileError("cannot open config file: " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              " is not key=value: " + path.string());
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("empty key on config line " + std::to_string(lineno));
        set(key, value);
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    check_key(key);
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const {
    check_key(key);
    return !values_.at(key).empty();
}

std::string RunConfig::get_string(const std::string& key) const {
    check_key(key);
    return values_.at(key);
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string v = get_string(key);
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw ConfigError("key " + key + " expects true/false, got '" + v + "'");
}

long long RunConfig::get_int(const std::string& key) const {
    const std::string v = get_string(key);
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("key " + key + " expects an integer, got '" + v + "'");
    return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string v = get_string(key);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("key " + key + " expects an unsigned integer, got '" + v +
                          "'");
    return out;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("key " + key + " expects a number, got '" + v + "'");
    return out;
}

std::vector<std::string> RunConfig::get_string_list(const std::string& key) const {
    const std::string v = get_string(key);
    std::vector<std::string> out;
    if (v.empty())
        return out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        const auto comma = v.find(',', pos);
        const auto end = comma == std::string::npos ? v.size() : comma;
        const std::string item = trim(v.substr(pos, end - pos));
        if (item.empty())
            throw ConfigError("key " + key + " has an empty list element");
        out.push_back(item);
        if (comma == std::string::npos)
            break;
        pos = comma + 1;
    }
    return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : get_string_list(key)) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError("key " + key + " expects numbers, got '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : get_string_list(key)) {
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size())
            throw ConfigError("key " + key + " expects unsigned integers, got '" +
                              item + "'");
        out.push_back(v);
    }
    return out;
}

std::string RunConfig::resolved() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

void RunConfig::write_resolved(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FileError("cannot write resolved config: " + path.string());
    out << resolved();
    if (!out)
        throw FileError("failed writing resolved config: " + path.string());
}

} // namespace cts
