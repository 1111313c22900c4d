#pragma once

#include <string>
#include <vector>

#include "intent/ann.hpp"
#include "intent/attention.hpp"
#include "intent/config.hpp"
#include "intent/corpus.hpp"
#include "intent/hierarchy.hpp"

namespace intent {

struct Quality {
    double silhouette = 0;
    double ch = 0;
    double db = 0;
};

struct EngineResult {
    AttentionParams<double> params;
    TrainReport pretrain;
    TrainReport finetune;
    Matrix enhanced;
    ClusterSet clusters;
    Hierarchy hierarchy;
    MergeStats stats;
    Prototypes prototypes;
    Quality quality;
    std::vector<std::string> warnings;
};

/// Points used for the silhouette estimate; larger inputs use an even stride.
inline constexpr Index silhouette_sample_cap = 2000;

/// Leaf-partition quality on the enhanced embeddings. Values that are
/// undefined for the partition (fewer than two leaves) are NaN.
Quality leaf_quality(const Hierarchy& h, const Matrix& E_prime);

/// Attention training, adaptive k-means, hierarchical merging and prototype
/// selection for one corpus. `threads` only affects wall time.
EngineResult cluster_corpus(const Corpus& corpus, const RunConfig& cfg, unsigned threads = 1);

}  // namespace intent
