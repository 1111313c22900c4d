#include "intent/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

namespace intent {

namespace {

std::string canonical(std::string key) {
    std::replace(key.begin(), key.end(), '-', '_');
    return key;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigError("invalid value '" + value + "' for " + key);
    return out;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "h",           "k_max",      "M",          "alpha",          "tau_min_frac", "m",
        "tau_contrast", "attention_mode", "linkage", "epochs_pretrain", "epochs_dec", "lr_pretrain",
        "lr_dec",      "delta_conf", "seed"};
    return keys;
}

void RunConfig::validate() const {
    if (h < 1) throw ConfigError("h must be >= 1");
    if (k_max < 1) throw ConfigError("k_max must be >= 1");
    if (M < 1) throw ConfigError("M must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (!(tau_min_frac > 0.0 && tau_min_frac < 1.0)) throw ConfigError("tau_min_frac must lie in (0, 1)");
    if (m < 2) throw ConfigError("m must be >= 2");
    if (!(tau_contrast > 0.0)) throw ConfigError("tau_contrast must be > 0");
    if (epochs_pretrain < 0) throw ConfigError("epochs_pretrain must be >= 0");
    if (epochs_dec < 0) throw ConfigError("epochs_dec must be >= 0");
    if (!(lr_pretrain > 0.0)) throw ConfigError("lr_pretrain must be > 0");
    if (!(lr_dec > 0.0)) throw ConfigError("lr_dec must be > 0");
    if (!(delta_conf > 0.0 && delta_conf < 1.0)) throw ConfigError("delta_conf must lie in (0, 1)");
}

MergeConfig RunConfig::merge_config() const {
    MergeConfig c;
    c.tau_min_frac = tau_min_frac;
    c.alpha = alpha;
    c.M = M;
    c.m = m;
    c.tau_contrast = tau_contrast;
    c.linkage = linkage;
    return c;
}

void RunConfig::set(const std::string& raw_key, const std::string& value) {
    const std::string key = canonical(raw_key);
    if (key == "h") h = parse_number<Index>(key, value);
    else if (key == "k_max") k_max = parse_number<Index>(key, value);
    else if (key == "M") M = parse_number<Index>(key, value);
    else if (key == "alpha") alpha = parse_number<double>(key, value);
    else if (key == "tau_min_frac") tau_min_frac = parse_number<double>(key, value);
    else if (key == "m") m = parse_number<Index>(key, value);
    else if (key == "tau_contrast") tau_contrast = parse_number<double>(key, value);
    else if (key == "attention_mode") attention_mode = attention_mode_from_string(value);
    else if (key == "linkage") linkage = linkage_from_string(value);
    else if (key == "epochs_pretrain") epochs_pretrain = parse_number<int>(key, value);
    else if (key == "epochs_dec") epochs_dec = parse_number<int>(key, value);
    else if (key == "lr_pretrain") lr_pretrain = parse_number<double>(key, value);
    else if (key == "lr_dec") lr_dec = parse_number<double>(key, value);
    else if (key == "delta_conf") delta_conf = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else throw ConfigError("unknown config key '" + raw_key + "'");
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["h"] = h;
    j["k_max"] = k_max;
    j["M"] = M;
    j["alpha"] = alpha;
    j["tau_min_frac"] = tau_min_frac;
    j["m"] = m;
    j["tau_contrast"] = tau_contrast;
    j["attention_mode"] = to_string(attention_mode);
    j["linkage"] = to_string(linkage);
    j["epochs_pretrain"] = epochs_pretrain;
    j["epochs_dec"] = epochs_dec;
    j["lr_pretrain"] = lr_pretrain;
    j["lr_dec"] = lr_dec;
    j["delta_conf"] = delta_conf;
    j["seed"] = seed;
    return j;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    const auto& keys = config_keys();
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = canonical(trim(line.substr(0, eq)));
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

}  // namespace intent
