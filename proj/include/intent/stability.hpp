#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "intent/config.hpp"
#include "intent/corpus.hpp"

namespace intent {

/// One schedule size. Comparisons against the previous size are NaN on the
/// first row.
struct StabilityRow {
    Index size = 0;
    Index leaf_count = 0;
    Index node_count = 0;
    double leaf_derivative = 0;  ///< |delta leaves| / delta size
    double movement = 0;
    double nmi_prev = 0;
    double ari_prev = 0;
    double low_conf_rate = 0;
    double proto_consistency = 0;
    double silhouette = 0;
    double ch = 0;
    double db = 0;
    double runtime_seconds = 0;
};

enum class Criterion { derivative, movement, nmi, ari, low_conf };

std::string to_string(Criterion c);
Criterion criterion_from_string(const std::string& name);

struct StabilizationCriteria {
    double derivative_max = 0.001;
    double movement_max = 0.05;
    double nmi_min = 0.85;
    double ari_min = 0.85;
    double low_conf_max = 0.05;
    std::set<Criterion> require{Criterion::derivative, Criterion::movement};

    /// Strict comparisons; NaN never holds.
    bool holds(const StabilityRow& row, Criterion c) const;
    void validate() const;
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    std::optional<Index> stabilized_at;
    std::optional<double> fraction_of_full;     ///< stabilized_at / last schedule size
    std::optional<double> fraction_of_corpus;   ///< stabilized_at / input corpus size
    Index corpus_size = 0;
    /// First size from which each criterion holds for every later row.
    std::map<Criterion, std::optional<Index>> criteria_status;
    /// Serialized hierarchy per row.
    std::vector<std::string> hierarchies;
    Index train_size = 0;
    Index validation_size = 0;
    std::vector<std::string> validation_ids;
    RunConfig config;
    StabilizationCriteria criteria;
    std::vector<std::string> warnings;
};

/// First size from which every required criterion holds for every later row.
std::optional<Index> detect_stabilization(const std::vector<StabilityRow>& rows, const StabilizationCriteria& criteria);

/// Same persistence rule for a single criterion.
std::optional<Index> first_persistent(const std::vector<StabilityRow>& rows, const StabilizationCriteria& criteria,
                                      Criterion c);

/// Fills stabilized_at, both fractions and criteria_status from rows,
/// criteria and corpus_size.
void summarize_report(StabilityReport& report);

struct PipelineOptions {
    double split_ratio = 0.8;
    SamplingMode sampling = SamplingMode::balanced;
    unsigned threads = 1;
};

/// Splits once, then for each per-category step samples the training side,
/// clusters it from scratch and scores the fixed validation set. `steps`
/// default to SampleSchedule::default_for on the training side.
StabilityReport run_pipeline(const Corpus& corpus, std::optional<std::vector<Index>> steps, const RunConfig& cfg,
                             const StabilizationCriteria& criteria, const PipelineOptions& options = {});

/// Column order of stability.csv.
const std::vector<std::string>& stability_columns();

/// Writes stability.csv, report.json and hierarchy_<size>.json into out_dir.
void emit_report(const StabilityReport& report, const std::filesystem::path& out_dir);

}  // namespace intent
