#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "intent/types.hpp"

namespace intent {

struct Utterance {
    std::string id;
    std::string category;
    std::optional<std::string> text;
    Vector embedding;
};

/// An ordered set of utterances sharing one embedding dimension.
///
/// Metadata lives in parallel vectors and embeddings in one row-major matrix
/// so that downstream linear algebra works on `embeddings()` directly.
class Corpus {
public:
    Corpus() = default;

    /// Validates ids (unique), dimension (uniform, >= 2) and finiteness.
    /// Throws InputError naming the offending row.
    static Corpus from_utterances(std::vector<Utterance> rows);

    /// Same checks as from_utterances, from pre-split columns.
    static Corpus from_columns(std::vector<std::string> ids, std::vector<std::string> categories,
                               std::vector<std::optional<std::string>> texts, Matrix embeddings);

    Index size() const { return embeddings_.rows(); }
    Index dim() const { return embeddings_.cols(); }
    bool empty() const { return size() == 0; }

    const Matrix& embeddings() const { return embeddings_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::string>& categories() const { return categories_; }
    const std::vector<std::optional<std::string>>& texts() const { return texts_; }

    /// Sorted distinct category labels.
    std::vector<std::string> category_set() const;

    /// Row indices per category, categories in sorted order, rows in corpus order.
    std::vector<std::pair<std::string, std::vector<Index>>> rows_by_category() const;

    Utterance utterance(Index row) const;

    /// Rows `rows` in the given order.
    Corpus subset(const std::vector<Index>& rows) const;

    friend bool operator==(const Corpus&, const Corpus&);

private:
    std::vector<std::string> ids_;
    std::vector<std::string> categories_;
    std::vector<std::optional<std::string>> texts_;
    Matrix embeddings_;
};

enum class CorpusFormat { jsonl, binary };

/// Picks the format from the extension (".bin" -> binary, otherwise JSONL).
CorpusFormat format_from_path(const std::filesystem::path& path);

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
Corpus load_corpus(const std::filesystem::path& path);

/// Binary writes embeddings as float32; values that are not float-representable
/// are rounded. The binary format also writes `<path>.meta.jsonl`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format);

struct SplitCorpus {
    Corpus train;
    Corpus validation;
    double ratio = 0.8;
    std::vector<std::string> warnings;
};

/// Stratified train/validation split. Per category, floor((1 - ratio) * count)
/// rows go to validation and the remainder to train.
SplitCorpus split(const Corpus& corpus, double ratio, std::uint64_t seed);

enum class SamplingMode {
    balanced,      ///< min(per_category, count(c)) from every category
    proportional,  ///< total budget per_category * |C| spread by category share
};

/// Draws per category uniformly without replacement; selected rows keep corpus order.
Corpus stratified_sample(const Corpus& corpus, Index per_category, std::uint64_t seed,
                         SamplingMode mode = SamplingMode::balanced);

/// Sum over categories of min(cap, count(c)); no cap gives n.
Index max_balanced_size(const Corpus& corpus, std::optional<Index> per_category_cap = std::nullopt);

struct SampleSchedule {
    std::vector<Index> per_category_steps;
    std::vector<Index> total_sizes;
    std::vector<std::string> warnings;

    /// Steps must be strictly ascending and positive.
    static SampleSchedule from_steps(const Corpus& corpus, std::vector<Index> steps);

    /// Maps each total size to ceil(size / |C|) per category. Sizes beyond the
    /// balanced availability are clipped with a warning.
    static SampleSchedule from_sizes(const Corpus& corpus, const std::vector<Index>& sizes);

    /// [10, 20, 40, 60, 80, 100, 120] per category above 30000 rows; otherwise
    /// six evenly spaced steps up to the largest category.
    static SampleSchedule default_for(const Corpus& corpus);
};

inline constexpr Index large_corpus_threshold = 30000;

// ---------------------------------------------------------------------------
// Synthetic hierarchical mixtures

struct SynthSpec {
    int levels = 2;
    /// Children per node at each level; one entry is broadcast to all levels.
    std::vector<int> branching{3};
    Index d = 16;
    Index points_per_leaf = 50;
    double separation = 8.0;
    std::uint64_t seed = 0;

    int branching_at(int level) const;
    Index leaf_count() const;
};

struct GroundTruthNode {
    int id = 0;
    std::optional<int> parent;
    int depth = 0;
    Vector centroid;
};

struct GroundTruthTree {
    std::vector<GroundTruthNode> nodes;
    /// Leaf node id per corpus row.
    std::vector<int> leaf_of;
    std::vector<int> leaves() const;
};

struct SyntheticCorpus {
    Corpus corpus;
    GroundTruthTree truth;
};

/// Child centroids sit separation * sigma from their parent in a uniformly
/// random direction; points are N(leaf centroid, I). Values are rounded to
/// float32 so both file formats round-trip exactly. Category = "leaf_<id>".
SyntheticCorpus generate_synthetic(const SynthSpec& spec);

/// Writes {"nodes":[{"id","parent","depth"}], "leaf_of":{utterance_id: leaf_id}}.
void save_ground_truth(const GroundTruthTree& truth, const Corpus& corpus,
                       const std::filesystem::path& path);

}  // namespace intent
