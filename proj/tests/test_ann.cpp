#include <doctest.h>

#include <set>

#include "intent/ann.hpp"
#include "intent/metrics.hpp"
#include "support.hpp"

using namespace intent;

TEST_CASE("adaptive k") {
    CHECK(adaptive_k(100, 64) == 10);
    CHECK(adaptive_k(2550, 100) == 50);
    CHECK(adaptive_k(44112, 128) == 128);
    CHECK(adaptive_k(1, 10) == 1);
    CHECK(adaptive_k(3, 10) == 1);
    CHECK(adaptive_k(4, 10) == 2);
}

TEST_CASE("exact regime on a line") {
    Matrix pts(3, 1);
    pts << 0, 1, 3;
    const AnnIndex index(pts, 0);
    CHECK(index.exact());
    Vector q(1);
    q << 0.9;
    CHECK(index.query(q, 1).front().index == 1);
    q << 3.0;
    const auto hit = index.query(q, 1).front();
    CHECK(hit.index == 2);
    CHECK(hit.sq_dist == 0.0);
    CHECK(index.query(q, 1, 2).front().index == 1);
    CHECK(index.query(q, 10).size() == 3);
}

TEST_CASE("exact regime equals brute force, ties by index") {
    Matrix pts = fixture::gaussian(500, 8, 3);
    pts.row(7) = pts.row(3);  // a tie
    const AnnIndex index(pts, 1);
    REQUIRE(index.exact());
    for (Index i = 0; i < 50; ++i) {
        const Vector q = pts.row(i * 10).transpose();
        const auto a = index.query(q, 10);
        const auto b = brute_force_knn(pts, q, 10);
        REQUIRE(a.size() == b.size());
        for (std::size_t j = 0; j < a.size(); ++j) {
            CHECK(a[j].index == b[j].index);
            CHECK(a[j].sq_dist == b[j].sq_dist);
        }
    }
    const auto tie = index.query(pts.row(3).transpose(), 2);
    CHECK(tie[0].index == 3);
    CHECK(tie[1].index == 7);
}

TEST_CASE("graph regime returns distinct sorted results with good recall") {
    const Matrix pts = fixture::gaussian(3000, 16, 5);
    const AnnIndex index = build_index(pts, 10, 2);
    REQUIRE_FALSE(index.exact());
    const Matrix queries = fixture::gaussian(100, 16, 6);
    double hits = 0;
    for (Index i = 0; i < queries.rows(); ++i) {
        const Vector q = queries.row(i).transpose();
        const auto res = index.query(q, 10);
        REQUIRE(res.size() == 10);
        std::set<Index> seen;
        for (std::size_t j = 0; j < res.size(); ++j) {
            seen.insert(res[j].index);
            if (j > 0) CHECK(res[j - 1].sq_dist <= res[j].sq_dist);
        }
        CHECK(seen.size() == 10);
        std::set<Index> truth;
        for (const auto& nb : brute_force_knn(pts, q, 10)) truth.insert(nb.index);
        for (Index x : seen) hits += truth.count(x);
    }
    CHECK(hits / 1000.0 >= 0.9);
}

TEST_CASE("index build is deterministic") {
    const Matrix pts = fixture::gaussian(2500, 8, 9);
    const AnnIndex a(pts, 4), b(pts, 4);
    const Vector q = fixture::gaussian(1, 8, 10).row(0).transpose();
    const auto ra = a.query(q, 5), rb = b.query(q, 5);
    for (std::size_t j = 0; j < ra.size(); ++j) CHECK(ra[j].index == rb[j].index);
}

TEST_CASE("k-means degenerate cases") {
    const Matrix pts = fixture::gaussian(40, 3, 1);
    SUBCASE("k = 1 gives the global mean") {
        const auto c = ann_kmeans(pts, 1, 0);
        CHECK((c.centroids.row(0) - pts.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("k = n gives singletons") {
        const auto c = ann_kmeans(pts, 40, 0);
        CHECK(within_cluster_ss(pts, c.assignments, c.centroids) == doctest::Approx(0.0));
        CHECK(std::set<Index>(c.assignments.begin(), c.assignments.end()).size() == 40);
    }
    CHECK_THROWS_AS(ann_kmeans(pts, 41, 0), ConfigError);
}

TEST_CASE("k-means finds two separated blobs") {
    Matrix pts = fixture::gaussian(400, 4, 2);
    pts.topRows(200).col(0).array() += 8.0;
    const auto c = ann_kmeans(pts, 2, 3);
    const Vector m1 = pts.topRows(200).colwise().mean().transpose();
    const Vector m2 = pts.bottomRows(200).colwise().mean().transpose();
    const double d1 = std::min((c.centroids.row(0).transpose() - m1).norm(), (c.centroids.row(1).transpose() - m1).norm());
    const double d2 = std::min((c.centroids.row(0).transpose() - m2).norm(), (c.centroids.row(1).transpose() - m2).norm());
    CHECK(d1 < 0.1);
    CHECK(d2 < 0.1);
}

TEST_CASE("k-means invariants") {
    const Matrix pts = fixture::gaussian(300, 5, 4);
    const auto c = ann_kmeans(pts, 12, 1);
    std::vector<Index> counts(12, 0);
    for (Index a : c.assignments) ++counts[static_cast<std::size_t>(a)];
    for (Index k = 0; k < 12; ++k) {
        REQUIRE(counts[static_cast<std::size_t>(k)] > 0);
        Vector mu = Vector::Zero(5);
        for (std::size_t i = 0; i < c.assignments.size(); ++i) {
            if (c.assignments[i] == k) mu += pts.row(static_cast<Index>(i)).transpose();
        }
        mu /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
        CHECK((mu - c.centroids.row(k).transpose()).cwiseAbs().maxCoeff() < 1e-6);
    }
    KMeansOptions exact;
    exact.use_index = false;
    const auto e = lloyd_from(pts, kmeans_pp_init(pts, 12, 1), exact);
    for (std::size_t i = 1; i < e.objective_history.size(); ++i) {
        CHECK(e.objective_history[i] <= e.objective_history[i - 1] + 1e-9);
    }
}

TEST_CASE("index-backed k-means stays within 5% of exact Lloyd") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Matrix pts = fixture::gaussian(3000, 8, seed + 20);
        const Matrix init = kmeans_pp_init(pts, 60, seed);
        KMeansOptions exact;
        exact.use_index = false;
        const double ann_obj = lloyd_from(pts, init, {}).objective_history.back();
        const double exact_obj = lloyd_from(pts, init, exact).objective_history.back();
        CHECK(ann_obj <= 1.05 * exact_obj);
    }
}

TEST_CASE("k-means is deterministic and thread-count independent") {
    const Matrix pts = fixture::gaussian(2000, 6, 7);
    KMeansOptions one, four;
    four.threads = 4;
    const auto a = ann_kmeans(pts, 30, 9, one);
    const auto b = ann_kmeans(pts, 30, 9, four);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("empty clusters are reseeded") {
    Matrix pts(6, 1);
    pts << 0, 0.1, 0.2, 10, 10.1, 50;
    Matrix init(3, 1);
    init << 0.1, 10, 1000;  // the third centroid attracts nothing
    KMeansOptions exact;
    exact.use_index = false;
    const auto c = lloyd_from(pts, init, exact);
    std::vector<Index> counts(3, 0);
    for (Index a : c.assignments) ++counts[static_cast<std::size_t>(a)];
    for (Index n : counts) CHECK(n > 0);
}
