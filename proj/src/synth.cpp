#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "intent/corpus.hpp"
#include "intent/random.hpp"

namespace intent {

int SynthSpec::branching_at(int level) const {
    if (branching.empty()) throw ConfigError("synthetic branching list is empty");
    return branching[std::min<std::size_t>(static_cast<std::size_t>(level), branching.size() - 1)];
}

Index SynthSpec::leaf_count() const {
    Index leaves = 1;
    for (int l = 0; l < levels; ++l) leaves *= branching_at(l);
    return leaves;
}

std::vector<int> GroundTruthTree::leaves() const {
    int max_depth = 0;
    for (const auto& n : nodes) max_depth = std::max(max_depth, n.depth);
    std::vector<int> out;
    for (const auto& n : nodes) {
        if (n.depth == max_depth) out.push_back(n.id);
    }
    return out;
}

SyntheticCorpus generate_synthetic(const SynthSpec& spec) {
    if (spec.levels < 1) throw ConfigError("synthetic levels must be >= 1");
    for (int l = 0; l < spec.levels; ++l) {
        if (spec.branching_at(l) < 2) throw ConfigError("synthetic branching must be >= 2");
    }
    if (!(spec.separation > 0.0)) throw ConfigError("synthetic separation must be > 0");
    if (spec.d < 2) throw ConfigError("synthetic dimension must be >= 2");
    if (spec.points_per_leaf < 1) throw ConfigError("points per leaf must be >= 1");

    Rng rng = make_rng(spec.seed, seed_offset::synth);
    const Index d = spec.d;

    GroundTruthTree truth;
    truth.nodes.push_back({0, std::nullopt, 0, Vector::Zero(d)});
    std::vector<int> frontier{0};
    for (int level = 0; level < spec.levels; ++level) {
        std::vector<int> next;
        for (int parent : frontier) {
            for (int c = 0; c < spec.branching_at(level); ++c) {
                Vector dir(d);
                for (Index j = 0; j < d; ++j) dir(j) = standard_normal(rng);
                dir.normalize();
                const int id = static_cast<int>(truth.nodes.size());
                const Vector centroid = truth.nodes[static_cast<std::size_t>(parent)].centroid + spec.separation * dir;
                truth.nodes.push_back({id, parent, level + 1, centroid});
                next.push_back(id);
            }
        }
        frontier = std::move(next);
    }

    const Index n = static_cast<Index>(frontier.size()) * spec.points_per_leaf;
    Matrix emb(n, d);
    std::vector<std::string> ids, cats;
    std::vector<std::optional<std::string>> texts(static_cast<std::size_t>(n));
    ids.reserve(static_cast<std::size_t>(n));
    cats.reserve(static_cast<std::size_t>(n));
    Index row = 0;
    for (int leaf : frontier) {
        const Vector& mu = truth.nodes[static_cast<std::size_t>(leaf)].centroid;
        for (Index p = 0; p < spec.points_per_leaf; ++p, ++row) {
            for (Index j = 0; j < d; ++j) {
                emb(row, j) = static_cast<double>(static_cast<float>(mu(j) + standard_normal(rng)));
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "u%07lld", static_cast<long long>(row));
            ids.emplace_back(buf);
            cats.push_back("leaf_" + std::to_string(leaf));
            truth.leaf_of.push_back(leaf);
        }
    }
    return {Corpus::from_columns(std::move(ids), std::move(cats), std::move(texts), std::move(emb)), std::move(truth)};
}

void save_ground_truth(const GroundTruthTree& truth, const Corpus& corpus, const std::filesystem::path& path) {
    nlohmann::ordered_json doc;
    auto& nodes = doc["nodes"] = nlohmann::ordered_json::array();
    for (const auto& n : truth.nodes) {
        nlohmann::ordered_json node;
        node["id"] = n.id;
        node["parent"] = n.parent ? nlohmann::ordered_json(*n.parent) : nlohmann::ordered_json(nullptr);
        node["depth"] = n.depth;
        nodes.push_back(std::move(node));
    }
    auto& leaf_of = doc["leaf_of"] = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < truth.leaf_of.size(); ++i) leaf_of[corpus.ids().at(i)] = truth.leaf_of[i];
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace intent
