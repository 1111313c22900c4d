#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "intent/attention.hpp"
#include "intent/corpus.hpp"
#include "intent/hierarchy.hpp"

namespace intent {

using IdLists = std::map<Index, std::vector<std::string>>;

/// Hierarchy as JSON with stable key order. Leaves carry their prototype and
/// member utterance ids. Floats are rounded to 9 significant digits.
nlohmann::ordered_json hierarchy_to_json(const Hierarchy& h, const Prototypes& prototypes, const Corpus& corpus,
                                         const nlohmann::ordered_json& meta);

/// Compact dump plus trailing newline.
std::string dump_json(const nlohmann::ordered_json& j);

struct LoadedHierarchy {
    Hierarchy hierarchy;  ///< node members are empty
    nlohmann::ordered_json meta;
    IdLists prototypes;
    IdLists members;
};

LoadedHierarchy hierarchy_from_json(const nlohmann::ordered_json& j);
LoadedHierarchy load_hierarchy(const std::filesystem::path& path);

/// Prototype rows mapped to utterance ids.
IdLists prototype_ids(const Prototypes& prototypes, const Corpus& corpus);

/// "HICP", version 0x01, u32 LE header length, JSON header (shapes, mode, h,
/// d, seed, epoch, rescale), then w1, w2 and decoder as LE float32 row-major.
void save_params(const AttentionParams<double>& params, std::uint64_t seed, int epoch,
                 const std::filesystem::path& path);

struct LoadedParams {
    AttentionParams<double> params;
    std::uint64_t seed = 0;
    int epoch = 0;
};

LoadedParams load_params(const std::filesystem::path& path);

}  // namespace intent
