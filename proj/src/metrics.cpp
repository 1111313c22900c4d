#include "intent/metrics.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace intent {

namespace {

void require_same_length(const Partition& u, const Partition& v) {
    if (u.size() != v.size()) throw InputError("partitions differ in length");
}

/// Contingency table plus marginals, indexed [i * v.k + j].
struct Contingency {
    std::vector<double> cells;
    std::vector<double> rows;
    std::vector<double> cols;
};

Contingency contingency(const Partition& u, const Partition& v) {
    Contingency t;
    t.cells.assign(static_cast<std::size_t>(u.k * v.k), 0.0);
    t.rows.assign(static_cast<std::size_t>(u.k), 0.0);
    t.cols.assign(static_cast<std::size_t>(v.k), 0.0);
    for (std::size_t i = 0; i < u.labels.size(); ++i) {
        const auto a = static_cast<std::size_t>(u.labels[i]);
        const auto b = static_cast<std::size_t>(v.labels[i]);
        t.cells[a * static_cast<std::size_t>(v.k) + b] += 1.0;
        t.rows[a] += 1.0;
        t.cols[b] += 1.0;
    }
    return t;
}

double entropy(const std::vector<double>& counts, double n) {
    double h = 0;
    for (double c : counts) {
        if (c > 0.0) h -= (c / n) * std::log(c / n);
    }
    return h;
}

double pairs(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double nmi(const Partition& u, const Partition& v) {
    require_same_length(u, v);
    if (u.size() == 0) throw InputError("NMI of empty partitions");
    const auto t = contingency(u, v);
    const double n = static_cast<double>(u.size());
    const double hu = entropy(t.rows, n);
    const double hv = entropy(t.cols, n);
    const bool u_trivial = u.k <= 1;
    const bool v_trivial = v.k <= 1;
    if (u_trivial && v_trivial) return 1.0;
    if (u_trivial || v_trivial) return 0.0;
    double mi = 0;
    for (Index a = 0; a < u.k; ++a) {
        for (Index b = 0; b < v.k; ++b) {
            const double c = t.cells[static_cast<std::size_t>(a * v.k + b)];
            if (c <= 0.0) continue;
            mi += (c / n) * std::log(c * n / (t.rows[static_cast<std::size_t>(a)] * t.cols[static_cast<std::size_t>(b)]));
        }
    }
    return std::clamp(mi / std::sqrt(hu * hv), 0.0, 1.0);
}

double ari(const Partition& u, const Partition& v) {
    require_same_length(u, v);
    if (u.size() < 2) throw InputError("ARI needs at least two points");
    const auto t = contingency(u, v);
    double index = 0;
    for (double c : t.cells) index += pairs(c);
    double sum_rows = 0;
    for (double c : t.rows) sum_rows += pairs(c);
    double sum_cols = 0;
    for (double c : t.cols) sum_cols += pairs(c);
    const double expected = sum_rows * sum_cols / pairs(static_cast<double>(u.size()));
    const double max_index = 0.5 * (sum_rows + sum_cols);
    const double denom = max_index - expected;
    // Both partitions trivial in the same way (all singletons or one cluster).
    if (denom == 0.0) return 1.0;
    return (index - expected) / denom;
}

std::vector<std::pair<Index, Index>> greedy_match(const Matrix& prev, const Matrix& curr) {
    std::vector<std::tuple<double, Index, Index>> all;
    all.reserve(static_cast<std::size_t>(prev.rows() * curr.rows()));
    for (Index i = 0; i < prev.rows(); ++i) {
        for (Index j = 0; j < curr.rows(); ++j) all.emplace_back((prev.row(i) - curr.row(j)).squaredNorm(), i, j);
    }
    std::sort(all.begin(), all.end());
    std::vector<char> used_prev(static_cast<std::size_t>(prev.rows()), 0);
    std::vector<char> used_curr(static_cast<std::size_t>(curr.rows()), 0);
    std::vector<std::pair<Index, Index>> out;
    const Index limit = std::min(prev.rows(), curr.rows());
    for (const auto& [dist, i, j] : all) {
        if (used_prev[static_cast<std::size_t>(i)] || used_curr[static_cast<std::size_t>(j)]) continue;
        used_prev[static_cast<std::size_t>(i)] = used_curr[static_cast<std::size_t>(j)] = 1;
        out.emplace_back(i, j);
        if (static_cast<Index>(out.size()) == limit) break;
    }
    std::sort(out.begin(), out.end());
    return out;
}

Movement centroid_movement(const Matrix& prev, const Matrix& curr, double scale) {
    if (prev.rows() == 0 || curr.rows() == 0) throw InputError("centroid movement needs non-empty centroid sets");
    if (!(scale > 0.0)) throw InputError("centroid movement scale must be > 0");
    if (prev.cols() != curr.cols()) throw InputError("centroid sets differ in dimension");
    const auto matching = greedy_match(prev, curr);
    Movement m;
    double total = 0;
    for (const auto& [i, j] : matching) total += (prev.row(i) - curr.row(j)).norm();
    m.matched = static_cast<Index>(matching.size());
    m.unmatched = std::max(prev.rows(), curr.rows()) - m.matched;
    m.value = total / static_cast<double>(m.matched) / scale;
    return m;
}

double low_confidence_rate(const std::vector<Assignment>& assignments, double delta) {
    if (assignments.empty()) throw InputError("low-confidence rate of an empty assignment list");
    const auto low = std::count_if(assignments.begin(), assignments.end(),
                                   [delta](const Assignment& a) { return a.confidence < delta; });
    return static_cast<double>(low) / static_cast<double>(assignments.size());
}

double prototype_consistency(const std::map<Index, std::vector<std::string>>& prev,
                             const std::map<Index, std::vector<std::string>>& curr,
                             const std::vector<std::pair<Index, Index>>& leaf_matching) {
    double total = 0;
    Index matched = 0;
    for (const auto& [a, b] : leaf_matching) {
        const auto pa = prev.find(a);
        const auto pb = curr.find(b);
        if (pa == prev.end() || pb == curr.end()) continue;
        const std::set<std::string> sa(pa->second.begin(), pa->second.end());
        const std::set<std::string> sb(pb->second.begin(), pb->second.end());
        std::size_t common = 0;
        for (const auto& id : sa) common += sb.count(id);
        const std::size_t uni = sa.size() + sb.size() - common;
        total += uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
        ++matched;
    }
    if (matched == 0) throw InputError("prototype consistency needs at least one matched leaf");
    return total / static_cast<double>(matched);
}

}  // namespace intent
