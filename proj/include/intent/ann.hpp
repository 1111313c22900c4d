#pragma once

#include <cstdint>
#include <vector>

#include "intent/types.hpp"

namespace intent {

/// max(1, min(floor(sqrt(n)), k_max)).
Index adaptive_k(Index n, Index k_max);

struct Neighbor {
    Index index;
    double sq_dist;
};

struct AnnOptions {
    /// Out-degree bound on upper layers; layer 0 allows twice this.
    Index max_degree = 16;
    Index ef_construction = 100;
    Index ef_search = 64;
    /// At or below this many points the index is an exact scan.
    Index exact_threshold = 2048;
};

/// Nearest-neighbor index over the rows of a point matrix.
///
/// Small inputs are answered by exhaustive scan. Larger inputs use a layered,
/// degree-bounded navigable proximity graph: each point is assigned a random
/// top layer, inserted by greedy descent, and linked to neighbors chosen with
/// the diversity heuristic. Immutable after construction; queries are
/// thread-safe.
class AnnIndex {
public:
    AnnIndex() = default;
    AnnIndex(Matrix points, std::uint64_t seed, AnnOptions options = {});

    /// Up to j distinct rows ordered by (squared distance, index).
    std::vector<Neighbor> query(const Eigen::Ref<const Vector>& v, Index j) const;
    /// Same, with `exclude` removed from the results.
    std::vector<Neighbor> query(const Eigen::Ref<const Vector>& v, Index j, Index exclude) const;

    bool exact() const { return exact_; }
    Index size() const { return points_.rows(); }
    const Matrix& points() const { return points_; }
    const AnnOptions& options() const { return options_; }

private:
    std::vector<Neighbor> search_layer(const Eigen::Ref<const Vector>& v, Index entry, Index ef, int layer) const;
    std::vector<Index> select_neighbors(const std::vector<Neighbor>& candidates, Index limit) const;
    double sq_dist(Index a, const Eigen::Ref<const Vector>& v) const;
    double sq_dist(Index a, Index b) const;

    Matrix points_;
    AnnOptions options_;
    bool exact_ = true;
    Index entry_ = 0;
    int top_layer_ = 0;
    /// links_[layer][node] -> adjacency (empty for nodes above their level)
    std::vector<std::vector<std::vector<Index>>> links_;
    std::vector<int> level_;
};

/// Convenience: build an index over `points` with options adapted to M.
AnnIndex build_index(const Matrix& points, Index M, std::uint64_t seed);

/// Exhaustive j-NN scan ordered by (squared distance, index).
std::vector<Neighbor> brute_force_knn(const Matrix& points, const Eigen::Ref<const Vector>& v, Index j);

struct ClusterSet {
    std::vector<Index> assignments;
    Matrix centroids;
    Index k = 0;
    /// Within-cluster sum of squares after each iteration.
    std::vector<double> objective_history;
    int iterations = 0;
};

struct KMeansOptions {
    int max_iters = 100;
    double tol = 1e-4;
    /// Use the index for the assignment step; false gives exact Lloyd.
    bool use_index = true;
    unsigned threads = 1;
    /// Independent seedings; the lowest final objective wins.
    int restarts = 3;
};

/// Greedy k-means++ seeding (2 + ln k candidates per step). Each restart
/// index gives an independent stream.
Matrix kmeans_pp_init(const Matrix& points, Index k, std::uint64_t seed, int restart = 0);

/// k-means with index-backed assignment. Stops when the largest centroid
/// displacement drops below `tol` or after `max_iters`. Empty clusters are
/// reseeded with the point farthest from its centroid. Runs `restarts`
/// seedings and keeps the one with the lowest objective, earliest on ties.
ClusterSet ann_kmeans(const Matrix& points, Index k, std::uint64_t seed, const KMeansOptions& options = {});

/// Lloyd iterations from given initial centroids.
ClusterSet lloyd_from(const Matrix& points, Matrix centroids, const KMeansOptions& options);

double within_cluster_ss(const Matrix& points, const std::vector<Index>& assignments, const Matrix& centroids);

}  // namespace intent
