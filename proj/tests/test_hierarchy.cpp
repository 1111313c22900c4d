#include <doctest.h>

#include <set>

#include "intent/hierarchy.hpp"
#include "intent/metrics.hpp"
#include "support.hpp"

using namespace intent;

namespace {

HierarchyNode make_node(std::vector<Index> members, const Matrix& E) {
    HierarchyNode n;
    n.size = static_cast<Index>(members.size());
    n.centroid = Vector::Zero(E.cols());
    for (Index r : members) n.centroid += E.row(r).transpose();
    n.centroid /= static_cast<double>(n.size);
    n.members = std::move(members);
    return n;
}

/// `blobs` groups of `per` points, the b-th centred at sep * e_b.
Matrix blobs(Index count, Index per, Index d, double sep, std::uint64_t seed) {
    Matrix E = fixture::gaussian(count * per, d, seed);
    for (Index b = 0; b < count; ++b) E.block(b * per, b % d, per, 1).array() += sep;
    return E;
}

std::vector<Index> blob_labels(Index count, Index per) {
    std::vector<Index> l;
    for (Index b = 0; b < count; ++b) l.insert(l.end(), static_cast<std::size_t>(per), b);
    return l;
}

ClusterSet from_labels(const std::vector<Index>& labels, Index k) {
    ClusterSet c;
    c.assignments = labels;
    c.k = k;
    return c;
}

}  // namespace

TEST_CASE("Ward cost examples") {
    Matrix E(2, 2);
    E << 0, 0, 2, 0;
    const auto a = make_node({0}, E);
    const auto b = make_node({1}, E);
    CHECK(merge_cost(a, b, Linkage::ward_attention, E, 1.0) == doctest::Approx(2.0));
    CHECK(merge_cost(a, a, Linkage::ward_attention, E, 1.0) == 0.0);

    Matrix F(3, 1);
    F << 0, 1, 5;
    const auto ab = make_node({0, 1}, F);
    const auto c = make_node({2}, F);
    const double v = global_variance(F);
    CHECK(v == doctest::Approx(((0 - 2.0) * (0 - 2.0) + 1.0 + 9.0) / 3.0));
    CHECK(merge_cost(ab, c, Linkage::ward_attention, F, v) == doctest::Approx(2.0 / 3.0 * 4.5 * 4.5 / v));
    CHECK(merge_cost(ab, c, Linkage::ward_attention, F, v) == doctest::Approx(merge_cost(c, ab, Linkage::ward_attention, F, v)));
}

TEST_CASE("entropy cost lies in [0, 1]") {
    const Matrix E = fixture::gaussian(300, 4, 1);
    std::vector<Index> ra, rb;
    for (Index i = 0; i < 150; ++i) ra.push_back(i);
    for (Index i = 150; i < 300; ++i) rb.push_back(i);
    const double c = merge_cost(make_node(ra, E), make_node(rb, E), Linkage::dist_entropy, E, 1.0);
    CHECK(c > 0.0);
    CHECK(c <= 1.0);
    Matrix same = Matrix::Ones(2, 3);
    CHECK(merge_cost(make_node({0}, same), make_node({1}, same), Linkage::dist_entropy, same, 1.0) == 0.0);
}

TEST_CASE("initial threshold is the nearest-rank 75th percentile") {
    CHECK(initial_threshold({4, 1, 3, 2}) == 3.0);
    CHECK(initial_threshold({7}) == 7.0);
    CHECK(initial_threshold({1, 2, 3, 4, 5}) == 4.0);
    CHECK_THROWS_AS(initial_threshold({}), InputError);
}

TEST_CASE("two clusters merge once") {
    Matrix E(4, 1);
    E << 0, 0.1, 5, 5.1;
    const auto r = build_hierarchy(from_labels({0, 0, 1, 1}, 2), E, {}, 0);
    CHECK(r.stats.merges == 1);
    CHECK(r.hierarchy.roots.size() == 1);
    CHECK(r.hierarchy.node(r.hierarchy.roots[0]).size == 4);
    CHECK(check_structure(r.hierarchy, E).empty());
}

TEST_CASE("a floor above the initial threshold prevents every merge") {
    const Matrix E = blobs(3, 20, 4, 6.0, 2);
    MergeConfig cfg;
    cfg.tau_min = 1e9;
    const auto r = build_hierarchy(from_labels(blob_labels(3, 20), 3), E, cfg, 0);
    CHECK(r.stats.merges == 0);
    CHECK(r.hierarchy.roots.size() == 3);
    CHECK(r.hierarchy.node_count() == 3);
}

TEST_CASE("separated blobs become separate subtrees") {
    const Index per = 100;
    const Matrix E = blobs(4, per, 16, 8.0, 3);
    const auto clusters = ann_kmeans(E, 8, 1);
    const auto r = build_hierarchy(clusters, E, {}, 1);
    const auto& h = r.hierarchy;
    CHECK(check_structure(h, E).empty());
    CHECK(h.roots.size() == 4);
    const Partition roots(h.root_labels(E.rows()));
    const Partition truth(blob_labels(4, per));
    CHECK(nmi(roots, truth) == doctest::Approx(1.0));
    for (std::size_t i = 1; i < r.stats.accepted_costs.size(); ++i) {
        CHECK(r.stats.accepted_costs[i] <= r.stats.tau_at_accept[i]);
        CHECK(r.stats.tau_at_accept[i] <= r.stats.tau_at_accept[i - 1]);
    }
}

TEST_CASE("merge loop respects its iteration bound") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix E = fixture::gaussian(400, 6, seed);
        MergeConfig cfg;
        cfg.M = 5;
        cfg.m = 50;
        const auto r = build_hierarchy(ann_kmeans(E, 20, seed), E, cfg, seed);
        CHECK(r.stats.iterations <= r.stats.initial_candidates + cfg.M * r.stats.merges);
        CHECK(r.stats.merges <= 19);
        CHECK(r.stats.iterations == r.stats.merges + r.stats.rejections + r.stats.stale);
        CHECK(check_structure(r.hierarchy, E).empty());
    }
}

TEST_CASE("split and refine") {
    SUBCASE("two blobs separate cleanly") {
        const Matrix E = blobs(2, 50, 3, 10.0, 4);
        std::vector<Index> members(100);
        for (Index i = 0; i < 100; ++i) members[static_cast<std::size_t>(i)] = i;
        const auto s = split_and_refine(members, E, 1e-3, 20, 0);
        REQUIRE_FALSE(s.degenerate);
        const std::set<Index> p0(s.parts[0].begin(), s.parts[0].end());
        const bool first_in_0 = p0.count(0) > 0;
        for (Index i = 0; i < 100; ++i) CHECK((p0.count(i) > 0) == ((i < 50) == first_in_0));
        for (std::size_t i = 1; i < s.wcss_history.size(); ++i) CHECK(s.wcss_history[i] <= s.wcss_history[i - 1] + 1e-12);
    }
    SUBCASE("identical points are degenerate") {
        const Matrix E = Matrix::Ones(10, 2);
        std::vector<Index> members(10);
        for (Index i = 0; i < 10; ++i) members[static_cast<std::size_t>(i)] = i;
        CHECK(split_and_refine(members, E, 1e-3, 20, 0).degenerate);
    }
    SUBCASE("wcss is non-increasing on noise") {
        const Matrix E = fixture::gaussian(200, 5, 8);
        std::vector<Index> members(200);
        for (Index i = 0; i < 200; ++i) members[static_cast<std::size_t>(i)] = i;
        const auto s = split_and_refine(members, E, 1e-9, 50, 3);
        REQUIRE_FALSE(s.degenerate);
        for (std::size_t i = 1; i < s.wcss_history.size(); ++i) CHECK(s.wcss_history[i] <= s.wcss_history[i - 1] + 1e-9);
    }
}

TEST_CASE("large merges keep the partition valid") {
    const Matrix E = blobs(6, 60, 8, 5.0, 9);
    MergeConfig cfg;
    cfg.m = 40;
    const auto r = build_hierarchy(ann_kmeans(E, 18, 2), E, cfg, 2);
    CHECK(check_structure(r.hierarchy, E).empty());
}

TEST_CASE("refinement moves misplaced points across the split") {
    const Matrix E = blobs(2, 100, 3, 10.0, 15);
    auto labels = blob_labels(2, 100);
    for (Index i = 100; i < 110; ++i) labels[static_cast<std::size_t>(i)] = 0;  // ten of blob 1 start in cluster 0
    MergeConfig cfg;
    cfg.m = 50;
    cfg.polish_leaves = false;
    const auto r = build_hierarchy(from_labels(labels, 2), E, cfg, 0);
    REQUIRE(r.stats.merges == 1);
    CHECK(r.stats.refinements == 1);
    CHECK(r.hierarchy.node(0).size == 100);
    CHECK(r.hierarchy.node(1).size == 100);
    CHECK(r.hierarchy.node(0).members.back() == 99);
    CHECK(check_structure(r.hierarchy, E).empty());
}

TEST_CASE("refinement never loosens clean leaves") {
    const Matrix E = blobs(8, 40, 8, 12.0, 16);
    MergeConfig cfg;
    cfg.m = 30;
    cfg.polish_leaves = false;
    const auto clusters = from_labels(blob_labels(8, 40), 8);
    const auto r = build_hierarchy(clusters, E, cfg, 0);
    CHECK(r.stats.refinements == 0);
    for (Index leaf : r.hierarchy.leaves()) CHECK(r.hierarchy.node(leaf).size == 40);
}

TEST_CASE("prototypes") {
    Matrix E(4, 1);
    E << 0, 1, 2, 10;
    const std::vector<std::string> ids{"a", "b", "c", "d"};
    const auto r = build_hierarchy(from_labels({0, 0, 0, 0}, 1), E, {}, 0);
    const auto protos = select_prototypes(r.hierarchy, E, ids);
    REQUIRE(protos.size() == 1);
    CHECK(protos.begin()->second == std::vector<Index>{2, 1, 0});

    Matrix two(2, 1);
    two << 0, 2;
    const auto r2 = build_hierarchy(from_labels({0, 0}, 1), two, {}, 0);
    CHECK(select_prototypes(r2.hierarchy, two, {"y", "x"}).begin()->second == std::vector<Index>{1, 0});
}

TEST_CASE("prototypes match an exhaustive ranking") {
    const Matrix E = fixture::gaussian(120, 3, 11);
    std::vector<std::string> ids;
    for (Index i = 0; i < 120; ++i) ids.push_back("u" + std::to_string(1000 + i));
    const auto r = build_hierarchy(ann_kmeans(E, 10, 0), E, {}, 0);
    const auto protos = select_prototypes(r.hierarchy, E, ids);
    CHECK(check_structure(r.hierarchy, E, &protos).empty());
    for (Index leaf : r.hierarchy.leaves()) {
        const auto& members = r.hierarchy.node(leaf).members;
        Vector mu = Vector::Zero(3);
        for (Index m : members) mu += E.row(m).transpose();
        mu /= static_cast<double>(members.size());
        std::vector<std::pair<double, std::string>> all;
        for (Index m : members) all.emplace_back((E.row(m).transpose() - mu).norm(), ids[static_cast<std::size_t>(m)]);
        std::sort(all.begin(), all.end());
        const auto& got = protos.at(leaf);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(ids[static_cast<std::size_t>(got[i])] == all[i].second);
    }
}

TEST_CASE("assignment") {
    const Index per = 200;
    const Matrix E = blobs(3, per, 4, 10.0, 12);
    const auto clusters = ann_kmeans(E, 6, 0);
    const auto h = build_hierarchy(clusters, E, {}, 0).hierarchy;
    const auto params = AttentionParams<double>::init(4, 2, AttentionMode::off, 0);

    SUBCASE("a leaf centroid is assigned to its own leaf") {
        const auto leaves = h.leaves();
        const Vector c = h.node(leaves[0]).centroid;
        const auto a = assign(h, c, params);
        CHECK(a.leaf == leaves[0]);
        CHECK(a.confidence == doctest::Approx(1.0));
    }
    SUBCASE("equidistant point has zero confidence") {
        Matrix F(2, 1);
        F << -1, 1;
        const auto hf = build_hierarchy(from_labels({0, 1}, 2), F, {}, 0).hierarchy;
        Vector origin = Vector::Zero(1);
        const auto a = assign(hf, origin, AttentionParams<double>::init(1, 1, AttentionMode::off, 0));
        CHECK(a.confidence == 0.0);
        CHECK(a.leaf == hf.leaves()[0]);
    }
    SUBCASE("held-out points land in their blob's subtree") {
        const Matrix held = blobs(3, 100, 4, 10.0, 99);
        const auto truth = blob_labels(3, 100);
        const auto roots = h.root_labels(E.rows());
        std::map<Index, Index> root_of_leaf;
        for (Index leaf : h.leaves()) root_of_leaf[leaf] = roots[static_cast<std::size_t>(h.node(leaf).members[0])];
        std::map<Index, Index> root_of_blob;
        for (Index b = 0; b < 3; ++b) root_of_blob[b] = roots[static_cast<std::size_t>(b * per)];
        const auto assigned = assign_all(h, held, params);
        Index hits = 0;
        for (std::size_t i = 0; i < assigned.size(); ++i) {
            hits += root_of_leaf.at(assigned[i].leaf) == root_of_blob.at(truth[i]);
        }
        CHECK(static_cast<double>(hits) / 300.0 >= 0.95);
    }
}

TEST_CASE("structural checks catch corruption") {
    const Matrix E = fixture::gaussian(60, 2, 13);
    auto h = build_hierarchy(ann_kmeans(E, 6, 0), E, {}, 0).hierarchy;
    REQUIRE(check_structure(h, E).empty());
    SUBCASE("duplicate member") {
        auto leaves = h.leaves();
        auto& a = h.nodes[static_cast<std::size_t>(leaves[0])];
        a.members.push_back(h.node(leaves[1]).members[0]);
        std::sort(a.members.begin(), a.members.end());
        a.size += 1;
        CHECK_FALSE(check_structure(h, E).empty());
    }
    SUBCASE("wrong centroid") {
        h.nodes[0].centroid.array() += 1.0;
        CHECK_FALSE(check_structure(h, E).empty());
    }
    SUBCASE("cycle") {
        const Index top = h.roots[0];
        h.nodes[static_cast<std::size_t>(top)].parent = top;
        CHECK_FALSE(check_structure(h, E).empty());
    }
}

TEST_CASE("hierarchy build is deterministic") {
    const Matrix E = fixture::gaussian(500, 8, 14);
    const auto c = ann_kmeans(E, 22, 3);
    const auto a = build_hierarchy(c, E, {}, 3).hierarchy;
    const auto b = build_hierarchy(c, E, {}, 3).hierarchy;
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        CHECK(a.nodes[i].members == b.nodes[i].members);
        CHECK(a.nodes[i].children == b.nodes[i].children);
        CHECK(a.nodes[i].centroid == b.nodes[i].centroid);
    }
}

TEST_CASE("invalid merge configuration") {
    const Matrix E = fixture::gaussian(10, 2, 0);
    MergeConfig cfg;
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(build_hierarchy(from_labels(std::vector<Index>(10, 0), 1), E, cfg, 0), ConfigError);
    CHECK_THROWS_AS(build_hierarchy(from_labels(std::vector<Index>(10, 0), 2), E, {}, 0), InputError);
}
