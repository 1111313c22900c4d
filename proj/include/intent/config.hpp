#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "intent/attention.hpp"
#include "intent/hierarchy.hpp"

namespace intent {

/// Every tunable of a clustering run.
struct RunConfig {
    Index h = 64;
    Index k_max = 200;
    Index M = 10;
    double alpha = 0.95;
    double tau_min_frac = 0.05;
    Index m = 100;
    double tau_contrast = 1e-3;
    AttentionMode attention_mode = AttentionMode::per_dim;
    Linkage linkage = Linkage::ward_attention;
    int epochs_pretrain = 100;
    int epochs_dec = 50;
    double lr_pretrain = 1e-2;
    double lr_dec = 1e-3;
    double delta_conf = 0.1;
    std::uint64_t seed = 0;

    /// Throws ConfigError for values outside their documented ranges.
    void validate() const;

    MergeConfig merge_config() const;

    /// Applies one `key = value` setting. Keys may use '_' or '-'.
    void set(const std::string& key, const std::string& value);

    nlohmann::ordered_json to_json() const;
};

/// Canonical (snake_case) names of every RunConfig key, in declaration order.
const std::vector<std::string>& config_keys();

/// Parses a flat `key = value` file; '#' starts a comment. Unknown keys and
/// malformed lines throw ConfigError with the line number.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

}  // namespace intent
