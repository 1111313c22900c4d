#pragma once

// Independent reference implementations and fixtures shared by the unit tests
// and the acceptance binary. The oracles use plain loops over std containers
// and never call into the library's metric code.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "intent/attention.hpp"
#include "intent/corpus.hpp"

namespace oracle {

using Labels = std::vector<int>;
using Points = std::vector<std::vector<double>>;

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline std::map<int, double> counts(const Labels& l) {
    std::map<int, double> c;
    for (int x : l) c[x] += 1.0;
    return c;
}

inline double entropy(const Labels& l) {
    const double n = static_cast<double>(l.size());
    double h = 0;
    for (const auto& [label, c] : counts(l)) h -= c / n * std::log(c / n);
    return h;
}

inline double nmi(const Labels& u, const Labels& v) {
    const double n = static_cast<double>(u.size());
    const auto cu = counts(u);
    const auto cv = counts(v);
    if (cu.size() == 1 && cv.size() == 1) return 1.0;
    if (cu.size() == 1 || cv.size() == 1) return 0.0;
    std::map<std::pair<int, int>, double> joint;
    for (std::size_t i = 0; i < u.size(); ++i) joint[{u[i], v[i]}] += 1.0;
    double mi = 0;
    for (const auto& [key, c] : joint) {
        const double pij = c / n;
        mi += pij * std::log(pij / ((cu.at(key.first) / n) * (cv.at(key.second) / n)));
    }
    return mi / std::sqrt(entropy(u) * entropy(v));
}

/// Pair counting over all C(n, 2) pairs.
inline double ari(const Labels& u, const Labels& v) {
    double a = 0, b = 0, c = 0, d = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = i + 1; j < u.size(); ++j) {
            const bool su = u[i] == u[j];
            const bool sv = v[i] == v[j];
            if (su && sv) a += 1;
            else if (su) b += 1;
            else if (sv) c += 1;
            else d += 1;
        }
    }
    const double total = a + b + c + d;
    const double expected = (a + b) * (a + c) / total;
    const double max_index = ((a + b) + (a + c)) / 2.0;
    if (max_index == expected) return 1.0;
    return (a - expected) / (max_index - expected);
}

inline double silhouette(const Points& x, const Labels& l) {
    const auto cl = counts(l);
    double total = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (cl.at(l[i]) < 2) continue;
        std::map<int, double> sum;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j != i) sum[l[j]] += dist(x[i], x[j]);
        }
        const double a = sum[l[i]] / (cl.at(l[i]) - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, c] : cl) {
            if (label != l[i]) b = std::min(b, sum[label] / c);
        }
        const double m = std::max(a, b);
        total += m > 0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(x.size());
}

inline std::map<int, std::vector<double>> means(const Points& x, const Labels& l) {
    std::map<int, std::vector<double>> m;
    const auto cl = counts(l);
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto& v = m[l[i]];
        v.resize(x[i].size(), 0.0);
        for (std::size_t k = 0; k < x[i].size(); ++k) v[k] += x[i][k] / cl.at(l[i]);
    }
    return m;
}

inline double calinski_harabasz(const Points& x, const Labels& l) {
    const auto m = means(x, l);
    const auto cl = counts(l);
    std::vector<double> g(x[0].size(), 0.0);
    for (const auto& p : x) {
        for (std::size_t k = 0; k < p.size(); ++k) g[k] += p[k] / static_cast<double>(x.size());
    }
    double between = 0, within = 0;
    for (const auto& [label, mu] : m) between += cl.at(label) * std::pow(dist(mu, g), 2);
    for (std::size_t i = 0; i < x.size(); ++i) within += std::pow(dist(x[i], m.at(l[i])), 2);
    const double k = static_cast<double>(m.size());
    const double n = static_cast<double>(x.size());
    if (within == 0) return std::numeric_limits<double>::infinity();
    return (between / (k - 1)) / (within / (n - k));
}

inline double davies_bouldin(const Points& x, const Labels& l) {
    const auto m = means(x, l);
    const auto cl = counts(l);
    std::map<int, double> s;
    for (std::size_t i = 0; i < x.size(); ++i) s[l[i]] += dist(x[i], m.at(l[i])) / cl.at(l[i]);
    double total = 0;
    for (const auto& [a, ma] : m) {
        double worst = 0;
        for (const auto& [b, mb] : m) {
            if (a == b) continue;
            const double d = dist(ma, mb);
            worst = std::max(worst, d > 0 ? (s[a] + s[b]) / d : std::numeric_limits<double>::infinity());
        }
        total += worst;
    }
    return total / static_cast<double>(m.size());
}

inline Points to_points(const intent::Matrix& m) {
    Points p(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (intent::Index i = 0; i < m.rows(); ++i) {
        for (intent::Index j = 0; j < m.cols(); ++j) p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    }
    return p;
}

}  // namespace oracle

namespace fixture {

/// Relative error with an absolute floor so vanishing gradients do not divide by zero.
inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-7});
}

inline intent::Matrix gaussian(intent::Index n, intent::Index d, std::uint64_t seed, double scale = 1.0) {
    intent::Rng rng(seed);
    intent::Matrix m(n, d);
    for (intent::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * intent::standard_normal(rng);
    return m;
}

inline intent::Corpus corpus_from(const intent::Matrix& e, const std::vector<std::string>& categories) {
    std::vector<std::string> ids;
    for (intent::Index i = 0; i < e.rows(); ++i) ids.push_back("r" + std::to_string(i));
    return intent::Corpus::from_columns(ids, categories,
                                        std::vector<std::optional<std::string>>(static_cast<std::size_t>(e.rows())), e);
}

/// Corpus with `per_category[c]` rows in category "c<c>".
inline intent::Corpus categorical(const std::vector<intent::Index>& per_category, intent::Index d, std::uint64_t seed) {
    intent::Index n = 0;
    for (auto c : per_category) n += c;
    std::vector<std::string> cats;
    for (std::size_t c = 0; c < per_category.size(); ++c) {
        for (intent::Index i = 0; i < per_category[c]; ++i) cats.push_back("c" + std::to_string(c));
    }
    return corpus_from(gaussian(n, d, seed), cats);
}

using Ld = long double;

inline intent::RowMatrix<Ld>& select(intent::AttentionParams<Ld>& p, int which) {
    return which == 0 ? p.w1 : which == 1 ? p.w2 : p.decoder;
}

inline const intent::RowMatrix<double>& select(const intent::AttentionGradient<double>& g, int which) {
    return which == 0 ? g.w1 : which == 1 ? g.w2 : g.decoder;
}

/// Largest relative error between the analytic gradient and central
/// differences of `loss` (evaluated in long double) at `coords` random entries.
template <typename Loss>
double fd_check(const intent::AttentionParams<double>& params, const intent::AttentionGradient<double>& grad, Loss loss,
                int coords, std::uint64_t seed, bool with_decoder) {
    intent::Rng rng(seed);
    double worst = 0;
    const Ld h = 1e-6L;
    for (int c = 0; c < coords; ++c) {
        const int which = static_cast<int>(intent::uniform_below(rng, with_decoder ? 3 : 2));
        auto base = params.cast<Ld>();
        const auto size = static_cast<std::uint64_t>(select(base, which).size());
        const auto idx = static_cast<intent::Index>(intent::uniform_below(rng, size));
        auto plus = base;
        auto minus = base;
        select(plus, which).data()[idx] += h;
        select(minus, which).data()[idx] -= h;
        const double numeric = static_cast<double>((loss(plus) - loss(minus)) / (2 * h));
        worst = std::max(worst, rel_error(select(grad, which).data()[idx], numeric));
    }
    return worst;
}

/// Central-difference check of the centroid gradient of the DEC loss.
inline double fd_check_centroids(const intent::Matrix& E, const intent::AttentionParams<double>& params,
                                 const intent::Matrix& C, const intent::Matrix& target,
                                 const intent::RowMatrix<double>& grad, int coords, std::uint64_t seed) {
    intent::Rng rng(seed);
    const auto El = E.cast<Ld>();
    const intent::RowMatrix<Ld> Cl = C.cast<Ld>();
    const intent::RowMatrix<Ld> Pl = target.cast<Ld>();
    const auto pl = params.cast<Ld>();
    double worst = 0;
    for (int c = 0; c < coords; ++c) {
        const auto idx = static_cast<intent::Index>(intent::uniform_below(rng, static_cast<std::uint64_t>(C.size())));
        intent::RowMatrix<Ld> plus = Cl, minus = Cl;
        plus.data()[idx] += 1e-6L;
        minus.data()[idx] -= 1e-6L;
        const double numeric =
            static_cast<double>((intent::dec_loss(El, pl, plus, Pl) - intent::dec_loss(El, pl, minus, Pl)) / 2e-6L);
        worst = std::max(worst, rel_error(grad.data()[idx], numeric));
    }
    return worst;
}

/// Random attention parameters with a non-trivial decoder and attention.
inline intent::AttentionParams<double> random_params(intent::Index d, intent::Index h, intent::AttentionMode mode,
                                                     std::uint64_t seed, double scale = 0.5) {
    auto p = intent::AttentionParams<double>::init(d, h, mode, seed);
    intent::Rng rng(seed + 100);
    for (intent::Index i = 0; i < p.w2.size(); ++i) p.w2.data()[i] = scale * intent::standard_normal(rng);
    for (intent::Index i = 0; i < p.decoder.size(); ++i) p.decoder.data()[i] += 0.1 * intent::standard_normal(rng);
    return p;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("intent_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
