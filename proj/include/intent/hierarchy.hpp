#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "intent/ann.hpp"
#include "intent/attention.hpp"
#include "intent/types.hpp"

namespace intent {

struct HierarchyNode {
    Index id = 0;
    std::optional<Index> parent;
    std::vector<Index> children;
    /// Sorted corpus row indices. Empty for nodes loaded from JSON.
    std::vector<Index> members;
    Vector centroid;
    Index size = 0;

    bool is_leaf() const { return children.empty(); }
};

/// A forest of merged clusters under one virtual root.
///
/// Node ids are indices into `nodes`. Leaves are the initial clusters, merged
/// nodes follow in creation order and the virtual root is last, so every
/// child id is smaller than its parent's.
struct Hierarchy {
    std::vector<HierarchyNode> nodes;
    std::vector<Index> roots;  ///< children of the virtual root
    Index virtual_root = -1;

    std::vector<Index> leaves() const;
    /// Nodes excluding the virtual root.
    Index node_count() const;
    const HierarchyNode& node(Index id) const { return nodes.at(static_cast<std::size_t>(id)); }

    /// Leaf id for each member row (requires members).
    std::vector<Index> leaf_labels(Index n) const;
    /// Root (child of the virtual root) id for each member row.
    std::vector<Index> root_labels(Index n) const;
    /// Leaf centroids stacked in `leaves()` order.
    Matrix leaf_centroids() const;
};

enum class Linkage { ward_attention, dist_entropy };

std::string to_string(Linkage linkage);
Linkage linkage_from_string(const std::string& name);

struct MergeConfig {
    /// Absolute stop threshold; when unset, tau_min_frac times the initial threshold.
    std::optional<double> tau_min;
    double tau_min_frac = 0.05;
    double alpha = 0.95;
    Index M = 10;
    /// Merged nodes larger than this are split and refined.
    Index m = 100;
    double tau_contrast = 1e-3;
    int refine_max_iters = 20;
    Linkage linkage = Linkage::ward_attention;
    /// Push rejected candidates back instead of discarding them.
    bool reinsert_rejected = false;
    /// Final nearest-centroid reassignment between leaves.
    bool polish_leaves = true;
    int polish_max_iters = 20;

    void validate() const;
};

struct MergeCandidate {
    Index a = 0;
    Index b = 0;
    double cost = 0;
    std::uint64_t gen_a = 0;
    std::uint64_t gen_b = 0;
};

struct MergeStats {
    Index initial_candidates = 0;
    Index iterations = 0;
    Index merges = 0;
    Index rejections = 0;
    Index stale = 0;
    Index refinements = 0;  ///< splits whose point migration was kept
    double tau_initial = 0;
    double tau_min = 0;
    double tau_final = 0;
    std::vector<double> accepted_costs;
    std::vector<double> tau_at_accept;
};

struct BuildResult {
    Hierarchy hierarchy;
    MergeStats stats;
};

/// Mean squared distance of the rows of E' to their mean.
double global_variance(const Matrix& E_prime);

/// Ward: |a||b| / (|a|+|b|) * |mu_a - mu_b|^2 / v_global.
/// Entropy: normalized Shannon entropy of a 16-bin histogram of pairwise
/// distances within a and b together (at most 128 members, evenly strided).
double merge_cost(const HierarchyNode& a, const HierarchyNode& b, Linkage linkage, const Matrix& E_prime,
                  double v_global);

/// Nearest-rank 75th percentile: sorted ascending, element ceil(0.75 len) - 1.
double initial_threshold(std::vector<double> costs);

struct SplitResult {
    std::vector<std::vector<Index>> parts;  ///< two member lists, or empty if degenerate
    Matrix centroids;
    std::vector<double> wcss_history;
    bool degenerate = true;
};

/// Seeded 2-means on the members' enhanced embeddings, then reassignment to
/// the nearest sub-centroid until the relative WCSS decrease drops below
/// tau_contrast or max_iters is reached.
SplitResult split_and_refine(const std::vector<Index>& members, const Matrix& E_prime, double tau_contrast,
                             int max_iters, std::uint64_t seed);

/// Annealed agglomerative merging over an initial flat clustering.
BuildResult build_hierarchy(const ClusterSet& clusters, const Matrix& E_prime, const MergeConfig& cfg,
                            std::uint64_t seed);

/// Leaf id -> up to three member rows, nearest the leaf centroid first, ties by id.
using Prototypes = std::map<Index, std::vector<Index>>;

Prototypes select_prototypes(const Hierarchy& h, const Matrix& E_prime, const std::vector<std::string>& ids);

struct Assignment {
    Index leaf = -1;
    double confidence = 0;
};

/// Nearest leaf centroid to the enhanced embedding; confidence (d2 - d1) / d2
/// over the two nearest leaf distances.
Assignment assign(const Hierarchy& h, const Eigen::Ref<const Vector>& embedding, const AttentionParams<double>& params);

/// Batch form of assign over raw embedding rows.
std::vector<Assignment> assign_all(const Hierarchy& h, const Matrix& embeddings, const AttentionParams<double>& params);

/// Nearest-leaf assignment of already-enhanced rows.
std::vector<Assignment> assign_enhanced(const Hierarchy& h, const Matrix& E_prime);

/// Acyclicity, member partition, size sums, centroid consistency (1e-6) and
/// prototype membership. Returns one message per violation.
std::vector<std::string> check_structure(const Hierarchy& h, const Matrix& E_prime, const Prototypes* prototypes = nullptr);

}  // namespace intent
