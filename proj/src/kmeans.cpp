#include <algorithm>
#include <cmath>
#include <limits>

#include "intent/ann.hpp"
#include "intent/parallel.hpp"
#include "intent/random.hpp"

namespace intent {

namespace {

void assign_points(const Matrix& points, const Matrix& centroids, const KMeansOptions& options,
                   std::vector<Index>& assignments, std::vector<double>& sq_dists) {
    const auto n = static_cast<std::size_t>(points.rows());
    assignments.resize(n);
    sq_dists.resize(n);
    if (options.use_index) {
        const AnnIndex index(centroids, 0);
        parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const auto nb = index.query(points.row(static_cast<Index>(i)).transpose(), 1).front();
                assignments[i] = nb.index;
                sq_dists[i] = nb.sq_dist;
            }
        });
        return;
    }
    parallel_for(n, options.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Index best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Index c = 0; c < centroids.rows(); ++c) {
                const double dist = (points.row(static_cast<Index>(i)) - centroids.row(c)).squaredNorm();
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            assignments[i] = best;
            sq_dists[i] = best_d;
        }
    });
}

/// Recomputes means; empty clusters take the point farthest from its centroid
/// (drawn from clusters with more than one member).
Matrix update_means(const Matrix& points, Index k, std::vector<Index>& assignments, std::vector<double>& sq_dists) {
    const Index d = points.cols();
    Matrix sums = Matrix::Zero(k, d);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        sums.row(assignments[i]) += points.row(static_cast<Index>(i));
        ++counts[static_cast<std::size_t>(assignments[i])];
    }
    for (Index c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) continue;
        std::size_t far = assignments.size();
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            if (counts[static_cast<std::size_t>(assignments[i])] < 2) continue;
            if (far == assignments.size() || sq_dists[i] > sq_dists[far]) far = i;
        }
        if (far == assignments.size()) throw InvariantError("cannot reseed empty cluster: k exceeds distinct support");
        const Index old = assignments[far];
        sums.row(old) -= points.row(static_cast<Index>(far));
        --counts[static_cast<std::size_t>(old)];
        assignments[far] = c;
        sums.row(c) = points.row(static_cast<Index>(far));
        counts[static_cast<std::size_t>(c)] = 1;
        sq_dists[far] = 0.0;
    }
    for (Index c = 0; c < k; ++c) sums.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    return sums;
}

}  // namespace

double within_cluster_ss(const Matrix& points, const std::vector<Index>& assignments, const Matrix& centroids) {
    double total = 0;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        total += (points.row(static_cast<Index>(i)) - centroids.row(assignments[i])).squaredNorm();
    }
    return total;
}

Matrix kmeans_pp_init(const Matrix& points, Index k, std::uint64_t seed, int restart) {
    const Index n = points.rows();
    if (k < 1 || k > n) throw ConfigError("k-means needs 1 <= k <= n");
    Rng rng = make_rng(seed + static_cast<std::uint64_t>(restart) * 0x9E3779B97F4A7C15ULL, seed_offset::kmeans);
    Matrix centers(k, points.cols());
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    Index first = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(n)));
    centers.row(0) = points.row(first);
    taken[static_cast<std::size_t>(first)] = 1;

    Vector closest(n);
    for (Index i = 0; i < n; ++i) closest(i) = (points.row(i) - centers.row(0)).squaredNorm();
    const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));

    for (Index c = 1; c < k; ++c) {
        const double potential = closest.sum();
        Index chosen = -1;
        if (!(potential > 0.0)) {
            // Remaining mass is zero: take the first untaken point in a random rotation.
            const Index start = static_cast<Index>(uniform_below(rng, static_cast<std::uint64_t>(n)));
            for (Index s = 0; s < n; ++s) {
                const Index i = (start + s) % n;
                if (!taken[static_cast<std::size_t>(i)]) {
                    chosen = i;
                    break;
                }
            }
        } else {
            double best_potential = std::numeric_limits<double>::infinity();
            for (int t = 0; t < trials; ++t) {
                const double target = uniform01(rng) * potential;
                double acc = 0;
                Index cand = n - 1;
                for (Index i = 0; i < n; ++i) {
                    acc += closest(i);
                    if (acc > target && closest(i) > 0.0) {
                        cand = i;
                        break;
                    }
                }
                double pot = 0;
                for (Index i = 0; i < n; ++i) {
                    pot += std::min(closest(i), (points.row(i) - points.row(cand)).squaredNorm());
                }
                if (pot < best_potential) {
                    best_potential = pot;
                    chosen = cand;
                }
            }
        }
        centers.row(c) = points.row(chosen);
        taken[static_cast<std::size_t>(chosen)] = 1;
        for (Index i = 0; i < n; ++i) {
            closest(i) = std::min(closest(i), (points.row(i) - centers.row(c)).squaredNorm());
        }
    }
    return centers;
}

ClusterSet lloyd_from(const Matrix& points, Matrix centroids, const KMeansOptions& options) {
    const Index k = centroids.rows();
    if (k < 1 || k > points.rows()) throw ConfigError("k-means needs 1 <= k <= n");
    ClusterSet out;
    out.k = k;
    std::vector<double> sq_dists;
    for (int it = 0; it < options.max_iters; ++it) {
        assign_points(points, centroids, options, out.assignments, sq_dists);
        Matrix next = update_means(points, k, out.assignments, sq_dists);
        const double shift = (next - centroids).rowwise().norm().maxCoeff();
        centroids = std::move(next);
        out.objective_history.push_back(within_cluster_ss(points, out.assignments, centroids));
        out.iterations = it + 1;
        if (shift < options.tol) break;
    }
    out.centroids = std::move(centroids);
    return out;
}

ClusterSet ann_kmeans(const Matrix& points, Index k, std::uint64_t seed, const KMeansOptions& options) {
    if (k > points.rows()) throw ConfigError("k-means: k exceeds the number of points");
    if (options.restarts < 1) throw ConfigError("k-means needs at least one restart");
    ClusterSet best = lloyd_from(points, kmeans_pp_init(points, k, seed), options);
    for (int r = 1; r < options.restarts; ++r) {
        ClusterSet next = lloyd_from(points, kmeans_pp_init(points, k, seed, r), options);
        if (next.objective_history.back() < best.objective_history.back()) best = std::move(next);
    }
    return best;
}

}  // namespace intent
