#include "intent/ann.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "intent/random.hpp"

namespace intent {

namespace {

bool closer(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
}

struct Farther {
    bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};
struct Nearer {
    bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(b, a); }
};

}  // namespace

Index adaptive_k(Index n, Index k_max) {
    if (n < 1 || k_max < 1) throw ConfigError("adaptive_k needs n >= 1 and k_max >= 1");
    auto root = static_cast<Index>(std::sqrt(static_cast<double>(n)));
    while (root * root > n) --root;
    while ((root + 1) * (root + 1) <= n) ++root;
    return std::max<Index>(1, std::min(root, k_max));
}

std::vector<Neighbor> brute_force_knn(const Matrix& points, const Eigen::Ref<const Vector>& v, Index j) {
    std::vector<Neighbor> all;
    all.reserve(static_cast<std::size_t>(points.rows()));
    for (Index i = 0; i < points.rows(); ++i) {
        all.push_back({i, (points.row(i).transpose() - v).squaredNorm()});
    }
    const auto take = static_cast<std::size_t>(std::min<Index>(j, points.rows()));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), closer);
    all.resize(take);
    return all;
}

// ---------------------------------------------------------------------------

AnnIndex::AnnIndex(Matrix points, std::uint64_t seed, AnnOptions options)
    : points_(std::move(points)), options_(options) {
    if (options_.max_degree < 2) throw ConfigError("index degree must be >= 2");
    const Index m = points_.rows();
    exact_ = m <= options_.exact_threshold;
    if (exact_ || m == 0) return;

    Rng rng = make_rng(seed, seed_offset::ann);
    const double level_mult = 1.0 / std::log(static_cast<double>(options_.max_degree));
    level_.resize(static_cast<std::size_t>(m));
    int max_level = 0;
    for (Index i = 0; i < m; ++i) {
        double u;
        do {
            u = uniform01(rng);
        } while (u <= 0.0);
        level_[static_cast<std::size_t>(i)] = std::min(16, static_cast<int>(-std::log(u) * level_mult));
        max_level = std::max(max_level, level_[static_cast<std::size_t>(i)]);
    }
    links_.assign(static_cast<std::size_t>(max_level + 1),
                  std::vector<std::vector<Index>>(static_cast<std::size_t>(m)));

    entry_ = 0;
    top_layer_ = level_[0];
    for (Index i = 1; i < m; ++i) {
        const int level = level_[static_cast<std::size_t>(i)];
        const Vector v = points_.row(i).transpose();
        Index cur = entry_;
        for (int layer = top_layer_; layer > level; --layer) {
            cur = search_layer(v, cur, 1, layer).front().index;
        }
        for (int layer = std::min(level, top_layer_); layer >= 0; --layer) {
            auto found = search_layer(v, cur, options_.ef_construction, layer);
            const Index limit = layer == 0 ? 2 * options_.max_degree : options_.max_degree;
            const auto chosen = select_neighbors(found, options_.max_degree);
            auto& adj = links_[static_cast<std::size_t>(layer)];
            adj[static_cast<std::size_t>(i)] = chosen;
            for (Index nb : chosen) {
                auto& back = adj[static_cast<std::size_t>(nb)];
                back.push_back(i);
                if (static_cast<Index>(back.size()) > limit) {
                    std::vector<Neighbor> cand;
                    cand.reserve(back.size());
                    for (Index x : back) cand.push_back({x, sq_dist(nb, x)});
                    std::sort(cand.begin(), cand.end(), closer);
                    back = select_neighbors(cand, limit);
                }
            }
            cur = found.front().index;
        }
        if (level > top_layer_) {
            top_layer_ = level;
            entry_ = i;
        }
    }
}

double AnnIndex::sq_dist(Index a, const Eigen::Ref<const Vector>& v) const {
    return (points_.row(a).transpose() - v).squaredNorm();
}

double AnnIndex::sq_dist(Index a, Index b) const {
    return (points_.row(a) - points_.row(b)).squaredNorm();
}

std::vector<Neighbor> AnnIndex::search_layer(const Eigen::Ref<const Vector>& v, Index entry, Index ef,
                                             int layer) const {
    std::vector<char> visited(static_cast<std::size_t>(points_.rows()), 0);
    std::priority_queue<Neighbor, std::vector<Neighbor>, Nearer> frontier;  // closest on top
    std::priority_queue<Neighbor, std::vector<Neighbor>, Farther> best;     // farthest on top
    const Neighbor start{entry, sq_dist(entry, v)};
    frontier.push(start);
    best.push(start);
    visited[static_cast<std::size_t>(entry)] = 1;
    const auto& adj = links_[static_cast<std::size_t>(layer)];
    while (!frontier.empty()) {
        const Neighbor c = frontier.top();
        if (closer(best.top(), c) && static_cast<Index>(best.size()) >= ef) break;
        frontier.pop();
        for (Index nb : adj[static_cast<std::size_t>(c.index)]) {
            if (visited[static_cast<std::size_t>(nb)]) continue;
            visited[static_cast<std::size_t>(nb)] = 1;
            const Neighbor cand{nb, sq_dist(nb, v)};
            if (static_cast<Index>(best.size()) < ef || closer(cand, best.top())) {
                frontier.push(cand);
                best.push(cand);
                if (static_cast<Index>(best.size()) > ef) best.pop();
            }
        }
    }
    std::vector<Neighbor> out;
    out.reserve(best.size());
    while (!best.empty()) {
        out.push_back(best.top());
        best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<Index> AnnIndex::select_neighbors(const std::vector<Neighbor>& candidates, Index limit) const {
    // Keep a candidate only if it is closer to the base than to every kept
    // neighbor, then top up with the nearest discarded ones.
    std::vector<Index> kept;
    std::vector<Index> discarded;
    for (const auto& c : candidates) {
        if (static_cast<Index>(kept.size()) >= limit) break;
        bool diverse = true;
        for (Index s : kept) {
            if (sq_dist(c.index, s) < c.sq_dist) {
                diverse = false;
                break;
            }
        }
        (diverse ? kept : discarded).push_back(c.index);
    }
    for (Index x : discarded) {
        if (static_cast<Index>(kept.size()) >= limit) break;
        kept.push_back(x);
    }
    return kept;
}

std::vector<Neighbor> AnnIndex::query(const Eigen::Ref<const Vector>& v, Index j) const {
    if (j < 1 || points_.rows() == 0) return {};
    if (exact_) return brute_force_knn(points_, v, j);
    Index cur = entry_;
    for (int layer = top_layer_; layer > 0; --layer) cur = search_layer(v, cur, 1, layer).front().index;
    auto found = search_layer(v, cur, std::max(options_.ef_search, j), 0);
    if (static_cast<Index>(found.size()) > j) found.resize(static_cast<std::size_t>(j));
    return found;
}

std::vector<Neighbor> AnnIndex::query(const Eigen::Ref<const Vector>& v, Index j, Index exclude) const {
    auto found = query(v, j + 1);
    std::erase_if(found, [exclude](const Neighbor& nb) { return nb.index == exclude; });
    if (static_cast<Index>(found.size()) > j) found.resize(static_cast<std::size_t>(j));
    return found;
}

AnnIndex build_index(const Matrix& points, Index M, std::uint64_t seed) {
    if (points.rows() < 1) throw ConfigError("cannot index an empty point set");
    if (M < 1) throw ConfigError("index neighbor count must be >= 1");
    AnnOptions opt;
    opt.max_degree = std::max<Index>(M, 16);
    opt.ef_search = std::max<Index>(64, 4 * M);
    return AnnIndex(points, seed, opt);
}

}  // namespace intent
