#include "intent/hierarchy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <queue>
#include <set>

namespace intent {

namespace {

constexpr int entropy_bins = 16;
constexpr std::size_t entropy_max_points = 128;

double round_sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

Vector round_sig9(const Vector& v) {
    return v.unaryExpr([](double x) { return round_sig9(x); });
}

Vector mean_of(const Matrix& E, const std::vector<Index>& rows) {
    Vector sum = Vector::Zero(E.cols());
    for (Index r : rows) sum += E.row(r).transpose();
    return rows.empty() ? sum : Vector(sum / static_cast<double>(rows.size()));
}

struct CandidateOrder {
    bool operator()(const MergeCandidate& x, const MergeCandidate& y) const {
        if (x.cost != y.cost) return x.cost > y.cost;
        if (x.a != y.a) return x.a > y.a;
        return x.b > y.b;
    }
};

/// Nearest and second-nearest rows of `centroids`, compared by squared distance.
struct NearestTwo {
    Index best = -1;
    double d1 = std::numeric_limits<double>::infinity();
    double d2 = std::numeric_limits<double>::infinity();
};

NearestTwo nearest_two(const Matrix& centroids, const Eigen::Ref<const Vector>& x) {
    NearestTwo out;
    for (Index c = 0; c < centroids.rows(); ++c) {
        const double dist = (centroids.row(c).transpose() - x).squaredNorm();
        if (dist < out.d1) {
            out.d2 = out.d1;
            out.d1 = dist;
            out.best = c;
        } else if (dist < out.d2) {
            out.d2 = dist;
        }
    }
    return out;
}

Assignment to_assignment(const NearestTwo& nt, const std::vector<Index>& leaves) {
    Assignment a;
    a.leaf = leaves.at(static_cast<std::size_t>(nt.best));
    if (!std::isfinite(nt.d2)) {
        a.confidence = 1.0;
    } else {
        const double d1 = std::sqrt(nt.d1);
        const double d2 = std::sqrt(nt.d2);
        a.confidence = d2 > 0.0 ? (d2 - d1) / d2 : 0.0;
    }
    return a;
}

/// Mutable state of one build_hierarchy call.
class Builder {
public:
    Builder(const ClusterSet& clusters, const Matrix& E, const MergeConfig& cfg, std::uint64_t seed)
        : E_(E), cfg_(cfg), seed_(seed), v_global_(global_variance(E)) {
        const Index n = E.rows();
        if (static_cast<Index>(clusters.assignments.size()) != n) {
            throw InputError("cluster assignments do not cover the embeddings");
        }
        leaf_of_.assign(static_cast<std::size_t>(n), -1);
        std::vector<std::vector<Index>> members(static_cast<std::size_t>(clusters.k));
        for (Index i = 0; i < n; ++i) {
            const Index c = clusters.assignments[static_cast<std::size_t>(i)];
            if (c < 0 || c >= clusters.k) throw InputError("cluster assignment out of range");
            members[static_cast<std::size_t>(c)].push_back(i);
            leaf_of_[static_cast<std::size_t>(i)] = c;
        }
        for (Index c = 0; c < clusters.k; ++c) {
            auto& mem = members[static_cast<std::size_t>(c)];
            if (mem.empty()) throw InputError("initial cluster " + std::to_string(c) + " is empty");
            HierarchyNode node;
            node.id = c;
            node.size = static_cast<Index>(mem.size());
            node.centroid = mean_of(E_, mem);
            node.members = std::move(mem);
            h_.nodes.push_back(std::move(node));
            alive_.push_back(1);
            gen_.push_back(0);
        }
    }

    BuildResult run() {
        const Index k = static_cast<Index>(h_.nodes.size());
        if (k >= 2) {
            std::vector<double> costs;
            costs.reserve(static_cast<std::size_t>(k * (k - 1) / 2));
            for (Index a = 0; a < k; ++a) {
                for (Index b = a + 1; b < k; ++b) costs.push_back(cost(a, b));
            }
            stats_.tau_initial = initial_threshold(std::move(costs));
            stats_.tau_min = cfg_.tau_min ? *cfg_.tau_min : cfg_.tau_min_frac * stats_.tau_initial;
            seed_heap();
            merge_loop();
        }
        stats_.tau_final = tau_;
        attach_virtual_root();
        if (cfg_.polish_leaves) polish();
        refresh();
        return {std::move(h_), std::move(stats_)};
    }

private:
    double cost(Index a, Index b) const {
        return merge_cost(h_.nodes[static_cast<std::size_t>(a)], h_.nodes[static_cast<std::size_t>(b)], cfg_.linkage,
                          E_, v_global_);
    }

    std::vector<Index> live_neighbors(Index x) const {
        std::vector<Index> ids;
        for (std::size_t i = 0; i < alive_.size(); ++i) {
            if (alive_[i] && static_cast<Index>(i) != x) ids.push_back(static_cast<Index>(i));
        }
        if (ids.empty()) return {};
        Matrix centroids(static_cast<Index>(ids.size()), E_.cols());
        for (std::size_t r = 0; r < ids.size(); ++r) {
            centroids.row(static_cast<Index>(r)) = h_.nodes[static_cast<std::size_t>(ids[r])].centroid.transpose();
        }
        const AnnIndex index = build_index(centroids, cfg_.M, seed_ + seed_offset::hierarchy);
        std::vector<Index> out;
        for (const auto& nb : index.query(h_.nodes[static_cast<std::size_t>(x)].centroid, cfg_.M)) {
            out.push_back(ids[static_cast<std::size_t>(nb.index)]);
        }
        return out;
    }

    void push(Index a, Index b) {
        if (a > b) std::swap(a, b);
        heap_.push({a, b, cost(a, b), gen_[static_cast<std::size_t>(a)], gen_[static_cast<std::size_t>(b)]});
    }

    void seed_heap() {
        std::set<std::pair<Index, Index>> pairs;
        for (Index x = 0; x < static_cast<Index>(h_.nodes.size()); ++x) {
            for (Index y : live_neighbors(x)) pairs.emplace(std::min(x, y), std::max(x, y));
        }
        for (const auto& [a, b] : pairs) push(a, b);
        stats_.initial_candidates = static_cast<Index>(pairs.size());
    }

    bool stale(const MergeCandidate& c) const {
        const auto a = static_cast<std::size_t>(c.a);
        const auto b = static_cast<std::size_t>(c.b);
        return !alive_[a] || !alive_[b] || gen_[a] != c.gen_a || gen_[b] != c.gen_b;
    }

    void merge_loop() {
        tau_ = stats_.tau_initial;
        while (!heap_.empty() && tau_ > stats_.tau_min) {
            ++stats_.iterations;
            const MergeCandidate c = heap_.top();
            heap_.pop();
            if (stale(c)) {
                ++stats_.stale;
                continue;
            }
            if (c.cost > tau_) {
                tau_ *= cfg_.alpha;
                ++stats_.rejections;
                if (cfg_.reinsert_rejected) heap_.push(c);
                continue;
            }
            const Index merged = merge(c.a, c.b);
            stats_.accepted_costs.push_back(c.cost);
            stats_.tau_at_accept.push_back(tau_);
            ++stats_.merges;
            if (h_.nodes[static_cast<std::size_t>(merged)].size > cfg_.m) refine(merged);
            for (Index y : live_neighbors(merged)) push(merged, y);
        }
    }

    Index merge(Index a, Index b) {
        auto& na = h_.nodes[static_cast<std::size_t>(a)];
        auto& nb = h_.nodes[static_cast<std::size_t>(b)];
        HierarchyNode node;
        node.id = static_cast<Index>(h_.nodes.size());
        node.children = {a, b};
        node.size = na.size + nb.size;
        node.centroid = (static_cast<double>(na.size) * na.centroid + static_cast<double>(nb.size) * nb.centroid) /
                        static_cast<double>(node.size);
        node.members.reserve(static_cast<std::size_t>(node.size));
        std::merge(na.members.begin(), na.members.end(), nb.members.begin(), nb.members.end(),
                   std::back_inserter(node.members));
        na.parent = node.id;
        nb.parent = node.id;
        // Internal members are rebuilt at the end; keep only leaf lists meanwhile.
        if (!na.is_leaf()) std::vector<Index>().swap(na.members);
        if (!nb.is_leaf()) std::vector<Index>().swap(nb.members);
        for (Index x : {a, b}) {
            alive_[static_cast<std::size_t>(x)] = 0;
            ++gen_[static_cast<std::size_t>(x)];
        }
        h_.nodes.push_back(std::move(node));
        alive_.push_back(1);
        gen_.push_back(0);
        return h_.nodes.back().id;
    }

    void collect_leaves(Index x, std::vector<Index>& out) const {
        const auto& node = h_.nodes[static_cast<std::size_t>(x)];
        if (node.is_leaf()) {
            out.push_back(x);
            return;
        }
        for (Index c : node.children) collect_leaves(c, out);
    }

    /// Recomputes size and centroid of every node under x from the leaf lists.
    std::pair<Index, Vector> recompute(Index x) {
        auto& node = h_.nodes[static_cast<std::size_t>(x)];
        if (node.is_leaf()) {
            node.size = static_cast<Index>(node.members.size());
            node.centroid = mean_of(E_, node.members);
            return {node.size, node.centroid * static_cast<double>(node.size)};
        }
        Index size = 0;
        Vector sum = Vector::Zero(E_.cols());
        for (Index c : std::vector<Index>(node.children)) {
            auto [s, v] = recompute(c);
            size += s;
            sum += v;
        }
        auto& same = h_.nodes[static_cast<std::size_t>(x)];
        same.size = size;
        same.centroid = sum / static_cast<double>(size);
        return {size, sum};
    }

    /// Splits the merged node's members in two and moves points between the
    /// two child subtrees so each subtree holds one refined part.
    void refine(Index x) {
        const auto& node = h_.nodes[static_cast<std::size_t>(x)];
        const SplitResult split = split_and_refine(node.members, E_, cfg_.tau_contrast, cfg_.refine_max_iters,
                                                   seed_ + seed_offset::hierarchy + static_cast<std::uint64_t>(x));
        if (split.degenerate) return;
        const std::array<Index, 2> child{node.children[0], node.children[1]};
        std::array<Index, 2> part_of_child{};
        for (int s = 0; s < 2; ++s) {
            part_of_child[static_cast<std::size_t>(s)] =
                nearest_two(split.centroids, h_.nodes[static_cast<std::size_t>(child[static_cast<std::size_t>(s)])].centroid).best;
        }
        if (part_of_child[0] == part_of_child[1]) return;

        std::array<std::vector<Index>, 2> side_leaves;
        for (int s = 0; s < 2; ++s) collect_leaves(child[static_cast<std::size_t>(s)], side_leaves[static_cast<std::size_t>(s)]);
        std::vector<char> leaf_side(h_.nodes.size(), -1);
        for (int s = 0; s < 2; ++s) {
            for (Index l : side_leaves[static_cast<std::size_t>(s)]) leaf_side[static_cast<std::size_t>(l)] = static_cast<char>(s);
        }
        std::array<Matrix, 2> side_centroids;
        for (int s = 0; s < 2; ++s) {
            const auto& ls = side_leaves[static_cast<std::size_t>(s)];
            side_centroids[static_cast<std::size_t>(s)].resize(static_cast<Index>(ls.size()), E_.cols());
            for (std::size_t r = 0; r < ls.size(); ++r) {
                side_centroids[static_cast<std::size_t>(s)].row(static_cast<Index>(r)) =
                    h_.nodes[static_cast<std::size_t>(ls[r])].centroid.transpose();
            }
        }

        std::map<Index, Index> leaf_size;
        for (const auto& ls : side_leaves) {
            for (Index l : ls) leaf_size[l] = h_.nodes[static_cast<std::size_t>(l)].size;
        }
        bool moved = false;
        for (int s = 0; s < 2; ++s) {
            const Index part = part_of_child[static_cast<std::size_t>(s)];
            for (Index row : split.parts[static_cast<std::size_t>(part)]) {
                const Index from = leaf_of_[static_cast<std::size_t>(row)];
                if (leaf_side[static_cast<std::size_t>(from)] == s) continue;
                if (leaf_size[from] <= 1) continue;
                const Index to = side_leaves[static_cast<std::size_t>(s)][static_cast<std::size_t>(
                    nearest_two(side_centroids[static_cast<std::size_t>(s)], E_.row(row).transpose()).best)];
                --leaf_size[from];
                ++leaf_size[to];
                leaf_of_[static_cast<std::size_t>(row)] = to;
                moved = true;
            }
        }
        if (!moved) return;
        std::map<Index, std::vector<Index>> regrouped;
        for (const auto& ls : side_leaves) {
            for (Index l : ls) regrouped[l];
        }
        for (Index row : h_.nodes[static_cast<std::size_t>(x)].members) {
            regrouped[leaf_of_[static_cast<std::size_t>(row)]].push_back(row);
        }
        // Keep the migration only if it tightens the affected leaves.
        double before = 0, after = 0;
        for (const auto& [l, rows] : regrouped) {
            before += leaf_wcss(h_.nodes[static_cast<std::size_t>(l)].members);
            after += leaf_wcss(rows);
        }
        if (!(after < before)) {
            for (const auto& [l, rows] : regrouped) {
                for (Index row : h_.nodes[static_cast<std::size_t>(l)].members) leaf_of_[static_cast<std::size_t>(row)] = l;
            }
            return;
        }
        ++stats_.refinements;
        for (auto& [l, rows] : regrouped) h_.nodes[static_cast<std::size_t>(l)].members = std::move(rows);
        for (Index c : child) recompute(c);
    }

    double leaf_wcss(const std::vector<Index>& rows) const {
        if (rows.empty()) return 0.0;
        const Vector mu = mean_of(E_, rows);
        double total = 0;
        for (Index r : rows) total += (E_.row(r).transpose() - mu).squaredNorm();
        return total;
    }

    void attach_virtual_root() {
        HierarchyNode root;
        root.id = static_cast<Index>(h_.nodes.size());
        for (std::size_t i = 0; i < alive_.size(); ++i) {
            if (alive_[i]) {
                root.children.push_back(static_cast<Index>(i));
                h_.nodes[i].parent = root.id;
            }
        }
        h_.roots = root.children;
        h_.virtual_root = root.id;
        h_.nodes.push_back(std::move(root));
    }

    /// Nearest-leaf-centroid reassignment until no point moves. Centroids are
    /// rounded to 9 significant digits, the precision they are serialized with,
    /// so a reloaded hierarchy assigns its own members consistently.
    void polish() {
        const std::vector<Index> leaves = h_.leaves();
        for (int it = 0; it < cfg_.polish_max_iters; ++it) {
            Matrix centroids(static_cast<Index>(leaves.size()), E_.cols());
            for (std::size_t r = 0; r < leaves.size(); ++r) {
                auto& leaf = h_.nodes[static_cast<std::size_t>(leaves[r])];
                leaf.centroid = round_sig9(mean_of(E_, leaf.members));
                centroids.row(static_cast<Index>(r)) = leaf.centroid.transpose();
            }
            std::map<Index, Index> sizes;
            for (Index l : leaves) sizes[l] = static_cast<Index>(h_.nodes[static_cast<std::size_t>(l)].members.size());
            bool moved = false;
            for (Index row = 0; row < E_.rows(); ++row) {
                const Index to = leaves[static_cast<std::size_t>(nearest_two(centroids, E_.row(row).transpose()).best)];
                const Index from = leaf_of_[static_cast<std::size_t>(row)];
                if (to == from || sizes[from] <= 1) continue;
                --sizes[from];
                ++sizes[to];
                leaf_of_[static_cast<std::size_t>(row)] = to;
                moved = true;
            }
            if (!moved) return;
            for (Index l : leaves) h_.nodes[static_cast<std::size_t>(l)].members.clear();
            for (Index row = 0; row < E_.rows(); ++row) {
                h_.nodes[static_cast<std::size_t>(leaf_of_[static_cast<std::size_t>(row)])].members.push_back(row);
            }
        }
    }

    /// Rebuilds members, sizes and centroids bottom-up (children precede parents).
    void refresh() {
        for (auto& node : h_.nodes) {
            if (!node.is_leaf()) {
                node.members.clear();
                for (Index c : node.children) {
                    const auto& cm = h_.nodes[static_cast<std::size_t>(c)].members;
                    node.members.insert(node.members.end(), cm.begin(), cm.end());
                }
                std::sort(node.members.begin(), node.members.end());
            }
            node.size = static_cast<Index>(node.members.size());
            node.centroid = round_sig9(mean_of(E_, node.members));
        }
    }

    const Matrix& E_;
    const MergeConfig& cfg_;
    std::uint64_t seed_;
    double v_global_;
    Hierarchy h_;
    std::vector<char> alive_;
    std::vector<std::uint64_t> gen_;
    std::vector<Index> leaf_of_;
    std::priority_queue<MergeCandidate, std::vector<MergeCandidate>, CandidateOrder> heap_;
    MergeStats stats_;
    double tau_ = 0;
};

}  // namespace

// ---------------------------------------------------------------------------

std::vector<Index> Hierarchy::leaves() const {
    std::vector<Index> out;
    for (const auto& n : nodes) {
        if (n.is_leaf() && n.id != virtual_root) out.push_back(n.id);
    }
    return out;
}

Index Hierarchy::node_count() const {
    return static_cast<Index>(nodes.size()) - (virtual_root >= 0 ? 1 : 0);
}

std::vector<Index> Hierarchy::leaf_labels(Index n) const {
    std::vector<Index> labels(static_cast<std::size_t>(n), -1);
    for (Index leaf : leaves()) {
        for (Index r : node(leaf).members) labels.at(static_cast<std::size_t>(r)) = leaf;
    }
    return labels;
}

std::vector<Index> Hierarchy::root_labels(Index n) const {
    std::vector<Index> labels(static_cast<std::size_t>(n), -1);
    for (Index root : roots) {
        for (Index r : node(root).members) labels.at(static_cast<std::size_t>(r)) = root;
    }
    return labels;
}

Matrix Hierarchy::leaf_centroids() const {
    const auto ls = leaves();
    if (ls.empty()) return {};
    Matrix out(static_cast<Index>(ls.size()), node(ls.front()).centroid.size());
    for (std::size_t r = 0; r < ls.size(); ++r) out.row(static_cast<Index>(r)) = node(ls[r]).centroid.transpose();
    return out;
}

std::string to_string(Linkage linkage) {
    return linkage == Linkage::ward_attention ? "ward-attention" : "dist-entropy";
}

Linkage linkage_from_string(const std::string& name) {
    if (name == "ward-attention" || name == "ward_attention") return Linkage::ward_attention;
    if (name == "dist-entropy" || name == "dist_entropy") return Linkage::dist_entropy;
    throw ConfigError("unknown linkage '" + name + "'");
}

void MergeConfig::validate() const {
    if (tau_min && !(*tau_min > 0.0)) throw ConfigError("tau_min must be > 0");
    if (!(tau_min_frac > 0.0)) throw ConfigError("tau_min_frac must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (M < 1) throw ConfigError("M must be >= 1");
    if (m < 1) throw ConfigError("m must be >= 1");
    if (!(tau_contrast > 0.0)) throw ConfigError("tau_contrast must be > 0");
    if (refine_max_iters < 1) throw ConfigError("refinement iterations must be >= 1");
}

double global_variance(const Matrix& E_prime) {
    if (E_prime.rows() == 0) return 0.0;
    const Vector mean = E_prime.colwise().mean().transpose();
    return (E_prime.rowwise() - mean.transpose()).rowwise().squaredNorm().mean();
}

double merge_cost(const HierarchyNode& a, const HierarchyNode& b, Linkage linkage, const Matrix& E_prime,
                  double v_global) {
    if (linkage == Linkage::ward_attention) {
        const double na = static_cast<double>(a.size);
        const double nb = static_cast<double>(b.size);
        const double raw = (na * nb / (na + nb)) * (a.centroid - b.centroid).squaredNorm();
        return v_global > 0.0 ? raw / v_global : raw;
    }

    std::vector<Index> rows;
    rows.reserve(a.members.size() + b.members.size());
    rows.insert(rows.end(), a.members.begin(), a.members.end());
    rows.insert(rows.end(), b.members.begin(), b.members.end());
    if (rows.size() > entropy_max_points) {
        std::vector<Index> strided;
        const double stride = static_cast<double>(rows.size()) / static_cast<double>(entropy_max_points);
        for (std::size_t i = 0; i < entropy_max_points; ++i) {
            strided.push_back(rows[static_cast<std::size_t>(static_cast<double>(i) * stride)]);
        }
        rows = std::move(strided);
    }
    if (rows.size() < 2) return 0.0;
    std::vector<double> dists;
    dists.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) dists.push_back((E_prime.row(rows[i]) - E_prime.row(rows[j])).norm());
    }
    const double hi = *std::max_element(dists.begin(), dists.end());
    if (!(hi > 0.0)) return 0.0;
    std::array<double, entropy_bins> hist{};
    for (double x : dists) {
        const int bin = std::min(entropy_bins - 1, static_cast<int>(x / hi * entropy_bins));
        hist[static_cast<std::size_t>(bin)] += 1.0;
    }
    double entropy = 0.0;
    for (double c : hist) {
        if (c > 0.0) {
            const double p = c / static_cast<double>(dists.size());
            entropy -= p * std::log(p);
        }
    }
    return entropy / std::log(static_cast<double>(entropy_bins));
}

double initial_threshold(std::vector<double> costs) {
    if (costs.empty()) throw InputError("initial threshold needs at least one cost");
    std::sort(costs.begin(), costs.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.75 * static_cast<double>(costs.size())));
    return costs[std::max<std::size_t>(rank, 1) - 1];
}

SplitResult split_and_refine(const std::vector<Index>& members, const Matrix& E_prime, double tau_contrast,
                             int max_iters, std::uint64_t seed) {
    SplitResult out;
    if (members.size() < 2) return out;
    Matrix pts(static_cast<Index>(members.size()), E_prime.cols());
    for (std::size_t r = 0; r < members.size(); ++r) pts.row(static_cast<Index>(r)) = E_prime.row(members[r]);

    Matrix centroids = kmeans_pp_init(pts, 2, seed);
    std::vector<Index> side(members.size(), 0);
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iters; ++it) {
        std::array<Index, 2> counts{0, 0};
        double wcss = 0;
        for (Index r = 0; r < pts.rows(); ++r) {
            const double d0 = (pts.row(r) - centroids.row(0)).squaredNorm();
            const double d1 = (pts.row(r) - centroids.row(1)).squaredNorm();
            side[static_cast<std::size_t>(r)] = d1 < d0 ? 1 : 0;
            ++counts[static_cast<std::size_t>(side[static_cast<std::size_t>(r)])];
        }
        if (counts[0] == 0 || counts[1] == 0) return out;
        Matrix next = Matrix::Zero(2, pts.cols());
        for (Index r = 0; r < pts.rows(); ++r) next.row(side[static_cast<std::size_t>(r)]) += pts.row(r);
        for (Index s = 0; s < 2; ++s) next.row(s) /= static_cast<double>(counts[static_cast<std::size_t>(s)]);
        centroids = std::move(next);
        for (Index r = 0; r < pts.rows(); ++r) wcss += (pts.row(r) - centroids.row(side[static_cast<std::size_t>(r)])).squaredNorm();
        out.wcss_history.push_back(wcss);
        const bool converged = std::isfinite(previous) &&
                               (previous <= 0.0 || (previous - wcss) / previous < tau_contrast);
        previous = wcss;
        if (converged) break;
    }
    out.parts.assign(2, {});
    for (std::size_t r = 0; r < members.size(); ++r) out.parts[static_cast<std::size_t>(side[r])].push_back(members[r]);
    out.centroids = std::move(centroids);
    out.degenerate = false;
    return out;
}

BuildResult build_hierarchy(const ClusterSet& clusters, const Matrix& E_prime, const MergeConfig& cfg,
                            std::uint64_t seed) {
    cfg.validate();
    if (clusters.k < 1) throw InputError("hierarchy needs at least one initial cluster");
    return Builder(clusters, E_prime, cfg, seed).run();
}

Prototypes select_prototypes(const Hierarchy& h, const Matrix& E_prime, const std::vector<std::string>& ids) {
    Prototypes out;
    for (Index leaf : h.leaves()) {
        const auto& node = h.node(leaf);
        const Vector mu = mean_of(E_prime, node.members);
        std::vector<std::pair<double, Index>> ranked;
        ranked.reserve(node.members.size());
        for (Index r : node.members) ranked.emplace_back((E_prime.row(r).transpose() - mu).norm(), r);
        const auto take = std::min<std::size_t>(3, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                          [&ids](const auto& x, const auto& y) {
                              if (x.first != y.first) return x.first < y.first;
                              return ids[static_cast<std::size_t>(x.second)] < ids[static_cast<std::size_t>(y.second)];
                          });
        auto& protos = out[leaf];
        for (std::size_t i = 0; i < take; ++i) protos.push_back(ranked[i].second);
    }
    return out;
}

std::vector<Assignment> assign_enhanced(const Hierarchy& h, const Matrix& E_prime) {
    const auto leaves = h.leaves();
    if (leaves.empty()) throw InputError("cannot assign against an empty hierarchy");
    const Matrix centroids = h.leaf_centroids();
    std::vector<Assignment> out;
    out.reserve(static_cast<std::size_t>(E_prime.rows()));
    for (Index i = 0; i < E_prime.rows(); ++i) out.push_back(to_assignment(nearest_two(centroids, E_prime.row(i).transpose()), leaves));
    return out;
}

std::vector<Assignment> assign_all(const Hierarchy& h, const Matrix& embeddings, const AttentionParams<double>& params) {
    if (params.mode != AttentionMode::per_utterance) {
        return assign_enhanced(h, attention_forward(embeddings, params).values);
    }
    // Per-utterance weights are a softmax over the batch; score each row alone.
    std::vector<Assignment> out;
    out.reserve(static_cast<std::size_t>(embeddings.rows()));
    for (Index i = 0; i < embeddings.rows(); ++i) out.push_back(assign(h, embeddings.row(i).transpose(), params));
    return out;
}

Assignment assign(const Hierarchy& h, const Eigen::Ref<const Vector>& embedding, const AttentionParams<double>& params) {
    const Matrix row = embedding.transpose();
    return assign_enhanced(h, attention_forward(row, params).values).front();
}

std::vector<std::string> check_structure(const Hierarchy& h, const Matrix& E_prime, const Prototypes* prototypes) {
    std::vector<std::string> issues;
    auto fail = [&issues](const std::string& m) { issues.push_back(m); };
    const auto count = static_cast<Index>(h.nodes.size());
    const Index n = E_prime.rows();

    for (Index i = 0; i < count; ++i) {
        const auto& node = h.nodes[static_cast<std::size_t>(i)];
        if (node.id != i) fail("node " + std::to_string(i) + " has id " + std::to_string(node.id));
        for (Index c : node.children) {
            if (c < 0 || c >= count) {
                fail("node " + std::to_string(i) + " has out-of-range child");
                continue;
            }
            if (h.nodes[static_cast<std::size_t>(c)].parent != i) fail("child " + std::to_string(c) + " does not point back to " + std::to_string(i));
        }
        // Acyclic: walking parents must reach a parentless node within `count` steps.
        Index cur = i;
        Index steps = 0;
        while (h.nodes[static_cast<std::size_t>(cur)].parent && steps <= count) {
            cur = *h.nodes[static_cast<std::size_t>(cur)].parent;
            ++steps;
        }
        if (steps > count) fail("cycle through node " + std::to_string(i));
        if (node.size != static_cast<Index>(node.members.size())) fail("node " + std::to_string(i) + " size disagrees with members");
        if (!std::is_sorted(node.members.begin(), node.members.end())) fail("node " + std::to_string(i) + " members unsorted");
        if (!node.is_leaf()) {
            std::vector<Index> uni;
            for (Index c : node.children) {
                const auto& cm = h.nodes[static_cast<std::size_t>(c)].members;
                uni.insert(uni.end(), cm.begin(), cm.end());
            }
            std::sort(uni.begin(), uni.end());
            if (std::adjacent_find(uni.begin(), uni.end()) != uni.end()) fail("children of node " + std::to_string(i) + " overlap");
            if (uni != node.members) fail("node " + std::to_string(i) + " members differ from union of children");
        }
        if (!node.members.empty()) {
            const Vector mu = mean_of(E_prime, node.members);
            if ((mu - node.centroid).cwiseAbs().maxCoeff() > 1e-6) fail("node " + std::to_string(i) + " centroid is not the member mean");
        } else {
            fail("node " + std::to_string(i) + " is empty");
        }
    }

    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    Index leaf_total = 0;
    for (Index leaf : h.leaves()) {
        leaf_total += h.node(leaf).size;
        for (Index r : h.node(leaf).members) {
            if (r < 0 || r >= n) {
                fail("leaf " + std::to_string(leaf) + " has out-of-range member");
                continue;
            }
            ++seen[static_cast<std::size_t>(r)];
        }
    }
    if (leaf_total != n) fail("leaf sizes sum to " + std::to_string(leaf_total) + ", expected " + std::to_string(n));
    for (Index r = 0; r < n; ++r) {
        if (seen[static_cast<std::size_t>(r)] != 1) fail("row " + std::to_string(r) + " appears in " + std::to_string(seen[static_cast<std::size_t>(r)]) + " leaves");
    }
    if (h.virtual_root < 0 || h.virtual_root >= count) {
        fail("missing virtual root");
    } else {
        const auto& vr = h.node(h.virtual_root);
        if (vr.parent) fail("virtual root has a parent");
        if (vr.children != h.roots) fail("roots differ from the virtual root's children");
    }

    if (prototypes) {
        for (Index leaf : h.leaves()) {
            const auto it = prototypes->find(leaf);
            if (it == prototypes->end()) {
                fail("leaf " + std::to_string(leaf) + " has no prototypes");
                continue;
            }
            const auto& node = h.node(leaf);
            const auto& protos = it->second;
            if (static_cast<Index>(protos.size()) != std::min<Index>(3, node.size)) fail("leaf " + std::to_string(leaf) + " prototype count");
            double last = -1.0;
            for (Index r : protos) {
                if (!std::binary_search(node.members.begin(), node.members.end(), r)) fail("prototype outside leaf " + std::to_string(leaf));
                const double dist = (E_prime.row(r).transpose() - mean_of(E_prime, node.members)).norm();
                if (dist < last) fail("prototypes of leaf " + std::to_string(leaf) + " out of order");
                last = dist;
            }
        }
    }
    return issues;
}

}  // namespace intent
