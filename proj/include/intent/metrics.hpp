#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "intent/hierarchy.hpp"
#include "intent/types.hpp"

namespace intent {

/// Cluster labels, densely renumbered to [0, k) in order of first appearance.
struct Partition {
    std::vector<Index> labels;
    Index k = 0;

    Partition() = default;
    template <typename Label>
    explicit Partition(const std::vector<Label>& raw) {
        std::map<Label, Index> ids;
        labels.reserve(raw.size());
        for (const auto& l : raw) {
            auto [it, inserted] = ids.try_emplace(l, static_cast<Index>(ids.size()));
            labels.push_back(it->second);
        }
        k = static_cast<Index>(ids.size());
    }

    Index size() const { return static_cast<Index>(labels.size()); }
};

/// Normalized mutual information with sqrt(H(U) H(V)) normalization.
double nmi(const Partition& u, const Partition& v);

/// Adjusted Rand index from pair counts.
double ari(const Partition& u, const Partition& v);

namespace detail {

inline void require_labels(const Partition& p, Index n, const char* what) {
    if (p.size() != n) throw InputError(std::string(what) + ": partition length does not match the points");
}

template <typename Derived>
RowMatrix<typename Derived::Scalar> cluster_means(const Eigen::MatrixBase<Derived>& X, const Partition& p,
                                                  std::vector<Index>& counts) {
    using Scalar = typename Derived::Scalar;
    RowMatrix<Scalar> means = RowMatrix<Scalar>::Zero(p.k, X.cols());
    counts.assign(static_cast<std::size_t>(p.k), 0);
    for (Index i = 0; i < X.rows(); ++i) {
        means.row(p.labels[static_cast<std::size_t>(i)]) += X.row(i);
        ++counts[static_cast<std::size_t>(p.labels[static_cast<std::size_t>(i)])];
    }
    for (Index c = 0; c < p.k; ++c) means.row(c) /= static_cast<Scalar>(counts[static_cast<std::size_t>(c)]);
    return means;
}

}  // namespace detail

/// Mean silhouette. Points in singleton clusters score 0, and 0/0 is taken as 0.
template <typename Derived>
double silhouette(const Eigen::MatrixBase<Derived>& X, const Partition& p) {
    detail::require_labels(p, X.rows(), "silhouette");
    if (p.k < 2) throw InputError("silhouette needs at least two clusters");
    const Index n = X.rows();
    std::vector<Index> counts(static_cast<std::size_t>(p.k), 0);
    for (Index l : p.labels) ++counts[static_cast<std::size_t>(l)];
    std::vector<double> sums(static_cast<std::size_t>(p.k));
    double total = 0;
    for (Index i = 0; i < n; ++i) {
        const Index own = p.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(own)] < 2) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            sums[static_cast<std::size_t>(p.labels[static_cast<std::size_t>(j)])] +=
                static_cast<double>((X.row(i) - X.row(j)).norm());
        }
        const double a = sums[static_cast<std::size_t>(own)] / static_cast<double>(counts[static_cast<std::size_t>(own)] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < p.k; ++c) {
            if (c == own) continue;
            b = std::min(b, sums[static_cast<std::size_t>(c)] / static_cast<double>(counts[static_cast<std::size_t>(c)]));
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

/// (B / (k-1)) / (W / (n-k)); +infinity when W = 0.
template <typename Derived>
double calinski_harabasz(const Eigen::MatrixBase<Derived>& X, const Partition& p) {
    detail::require_labels(p, X.rows(), "calinski_harabasz");
    const Index n = X.rows();
    if (p.k < 2 || p.k >= n) throw InputError("Calinski-Harabasz needs 2 <= k < n");
    std::vector<Index> counts;
    const auto means = detail::cluster_means(X, p, counts);
    const auto global = X.colwise().mean();
    double between = 0;
    for (Index c = 0; c < p.k; ++c) {
        between += static_cast<double>(counts[static_cast<std::size_t>(c)]) *
                   static_cast<double>((means.row(c) - global).squaredNorm());
    }
    double within = 0;
    for (Index i = 0; i < n; ++i) within += static_cast<double>((X.row(i) - means.row(p.labels[static_cast<std::size_t>(i)])).squaredNorm());
    if (!(within > 0.0)) return std::numeric_limits<double>::infinity();
    return (between / static_cast<double>(p.k - 1)) / (within / static_cast<double>(n - p.k));
}

/// Mean over clusters of max_{j != i} (s_i + s_j) / d_ij. Coincident centroids
/// make their term +infinity.
template <typename Derived>
double davies_bouldin(const Eigen::MatrixBase<Derived>& X, const Partition& p) {
    detail::require_labels(p, X.rows(), "davies_bouldin");
    if (p.k < 2) throw InputError("Davies-Bouldin needs at least two clusters");
    std::vector<Index> counts;
    const auto means = detail::cluster_means(X, p, counts);
    std::vector<double> scatter(static_cast<std::size_t>(p.k), 0.0);
    for (Index i = 0; i < X.rows(); ++i) {
        const Index c = p.labels[static_cast<std::size_t>(i)];
        scatter[static_cast<std::size_t>(c)] += static_cast<double>((X.row(i) - means.row(c)).norm());
    }
    for (Index c = 0; c < p.k; ++c) scatter[static_cast<std::size_t>(c)] /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    double total = 0;
    for (Index i = 0; i < p.k; ++i) {
        double worst = 0;
        for (Index j = 0; j < p.k; ++j) {
            if (i == j) continue;
            const double dist = static_cast<double>((means.row(i) - means.row(j)).norm());
            const double s = scatter[static_cast<std::size_t>(i)] + scatter[static_cast<std::size_t>(j)];
            const double r = dist > 0.0 ? s / dist : std::numeric_limits<double>::infinity();
            worst = std::max(worst, r);
        }
        total += worst;
    }
    return total / static_cast<double>(p.k);
}

/// Pairs (prev row, curr row) chosen greedily by ascending centroid distance.
std::vector<std::pair<Index, Index>> greedy_match(const Matrix& prev, const Matrix& curr);

struct Movement {
    double value = 0;  ///< mean matched distance / scale
    Index matched = 0;
    Index unmatched = 0;
};

Movement centroid_movement(const Matrix& prev, const Matrix& curr, double scale);

/// Fraction of assignments with confidence below delta.
double low_confidence_rate(const std::vector<Assignment>& assignments, double delta = 0.1);

/// Mean Jaccard overlap of prototype id sets over matched leaf pairs.
double prototype_consistency(const std::map<Index, std::vector<std::string>>& prev,
                             const std::map<Index, std::vector<std::string>>& curr,
                             const std::vector<std::pair<Index, Index>>& leaf_matching);

}  // namespace intent
