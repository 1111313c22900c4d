#include "intent/engine.hpp"

#include <limits>

#include "intent/metrics.hpp"

namespace intent {

Quality leaf_quality(const Hierarchy& h, const Matrix& E_prime) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    Quality q{nan, nan, nan};
    const Index n = E_prime.rows();
    const Partition full(h.leaf_labels(n));
    if (full.k < 2) return q;
    if (full.k < n) q.ch = calinski_harabasz(E_prime, full);
    q.db = davies_bouldin(E_prime, full);

    if (n <= silhouette_sample_cap) {
        q.silhouette = silhouette(E_prime, full);
        return q;
    }
    std::vector<Index> rows(static_cast<std::size_t>(silhouette_sample_cap));
    for (Index i = 0; i < silhouette_sample_cap; ++i) rows[static_cast<std::size_t>(i)] = i * n / silhouette_sample_cap;
    Matrix sample(silhouette_sample_cap, E_prime.cols());
    std::vector<Index> labels;
    labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        sample.row(static_cast<Index>(r)) = E_prime.row(rows[r]);
        labels.push_back(full.labels[static_cast<std::size_t>(rows[r])]);
    }
    const Partition sub(labels);
    if (sub.k >= 2) q.silhouette = silhouette(sample, sub);
    return q;
}

EngineResult cluster_corpus(const Corpus& corpus, const RunConfig& cfg, unsigned threads) {
    cfg.validate();
    if (corpus.empty()) throw InputError("cannot cluster an empty corpus");
    const Matrix& E = corpus.embeddings();
    const Index n = corpus.size();
    const Index k = adaptive_k(n, cfg.k_max);

    EngineResult out;
    auto params = AttentionParams<double>::init(corpus.dim(), cfg.h, cfg.attention_mode, cfg.seed);
    if (cfg.attention_mode != AttentionMode::off && cfg.epochs_pretrain > 0) {
        auto pre = pretrain_reconstruction(E, std::move(params), cfg.epochs_pretrain, cfg.lr_pretrain);
        params = std::move(pre.params);
        out.pretrain = std::move(pre.report);
    }
    if (cfg.attention_mode != AttentionMode::off && cfg.epochs_dec > 0 && k >= 2) {
        auto fine = finetune_dec(E, std::move(params), k, cfg.epochs_dec, cfg.lr_dec, cfg.seed);
        params = std::move(fine.params);
        out.finetune = std::move(fine.report);
    }
    for (const auto* rep : {&out.pretrain, &out.finetune}) {
        out.warnings.insert(out.warnings.end(), rep->warnings.begin(), rep->warnings.end());
    }
    // The checkpoint stores float32; train and serve from identical values.
    params.round_to_float();
    out.params = std::move(params);
    out.enhanced = attention_forward(E, out.params).values;

    KMeansOptions km;
    km.threads = threads;
    out.clusters = ann_kmeans(out.enhanced, k, cfg.seed, km);
    auto built = build_hierarchy(out.clusters, out.enhanced, cfg.merge_config(), cfg.seed);
    out.hierarchy = std::move(built.hierarchy);
    out.stats = std::move(built.stats);
    out.prototypes = select_prototypes(out.hierarchy, out.enhanced, corpus.ids());
    out.quality = leaf_quality(out.hierarchy, out.enhanced);
    return out;
}

}  // namespace intent
