#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cts {

// Flat key=value run configuration. Files hold one pair per line with '#'
// comments; command-line --key value pairs override file entries. Keys
// outside the schema are rejected; every run echoes the effective values to
// resolved_config.txt so reruns are reproducible byte for byte.
class RunConfig {
public:
    RunConfig();

    static RunConfig from_file(const std::filesystem::path& path);
    void load_file(const std::filesystem::path& path);

    // Applies --key value overrides (keys given without the leading dashes).
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const;

    std::string get_string(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    long long get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& key) const;

    // Effective key=value lines, sorted by key.
    std::string resolved() const;
    void write_resolved(const std::filesystem::path& path) const;

private:
    void check_key(const std::string& key) const;

    std::map<std::string, std::string> values_;
};

} // namespace cts
