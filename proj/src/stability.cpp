#include "intent/stability.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "intent/engine.hpp"
#include "intent/metrics.hpp"
#include "intent/serialize.hpp"

namespace intent {

namespace {

using ojson = nlohmann::ordered_json;
constexpr double nan = std::numeric_limits<double>::quiet_NaN();

/// Leaf centroids over the raw embeddings, rows in `leaves()` order. Enhanced
/// spaces of independently trained runs are not comparable; the raw space is.
Matrix raw_leaf_centroids(const Hierarchy& h, const Matrix& E) {
    const auto leaves = h.leaves();
    Matrix out = Matrix::Zero(static_cast<Index>(leaves.size()), E.cols());
    for (std::size_t r = 0; r < leaves.size(); ++r) {
        const auto& members = h.node(leaves[r]).members;
        for (Index m : members) out.row(static_cast<Index>(r)) += E.row(m);
        out.row(static_cast<Index>(r)) /= static_cast<double>(members.size());
    }
    return out;
}

double rms_norm(const Matrix& E) {
    return std::sqrt(E.rowwise().squaredNorm().mean());
}

std::vector<Index> leaf_labels(const std::vector<Assignment>& assignments) {
    std::vector<Index> out;
    out.reserve(assignments.size());
    for (const auto& a : assignments) out.push_back(a.leaf);
    return out;
}

struct Snapshot {
    std::vector<Index> leaves;
    Matrix raw_centroids;
    IdLists prototypes;
    std::vector<Index> validation_labels;
};

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

ojson number(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

ojson optional_size(const std::optional<Index>& v) { return v ? ojson(*v) : ojson(nullptr); }

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
}

}  // namespace

std::string to_string(Criterion c) {
    switch (c) {
        case Criterion::derivative: return "derivative";
        case Criterion::movement: return "movement";
        case Criterion::nmi: return "nmi";
        case Criterion::ari: return "ari";
        case Criterion::low_conf: return "low_conf";
    }
    return "derivative";
}

Criterion criterion_from_string(const std::string& name) {
    for (auto c : {Criterion::derivative, Criterion::movement, Criterion::nmi, Criterion::ari, Criterion::low_conf}) {
        if (name == to_string(c)) return c;
    }
    if (name == "low-conf") return Criterion::low_conf;
    throw ConfigError("unknown stabilization criterion '" + name + "'");
}

bool StabilizationCriteria::holds(const StabilityRow& row, Criterion c) const {
    switch (c) {
        case Criterion::derivative: return row.leaf_derivative < derivative_max;
        case Criterion::movement: return row.movement < movement_max;
        case Criterion::nmi: return row.nmi_prev > nmi_min;
        case Criterion::ari: return row.ari_prev > ari_min;
        case Criterion::low_conf: return row.low_conf_rate < low_conf_max;
    }
    return false;
}

void StabilizationCriteria::validate() const {
    for (double t : {derivative_max, movement_max, nmi_min, ari_min, low_conf_max}) {
        if (!(t > 0.0)) throw ConfigError("stabilization thresholds must be > 0");
    }
    if (require.empty()) throw ConfigError("at least one stabilization criterion must be required");
}

std::optional<Index> first_persistent(const std::vector<StabilityRow>& rows, const StabilizationCriteria& criteria,
                                      Criterion c) {
    StabilizationCriteria one = criteria;
    one.require = {c};
    return detect_stabilization(rows, one);
}

std::optional<Index> detect_stabilization(const std::vector<StabilityRow>& rows, const StabilizationCriteria& criteria) {
    std::optional<Index> found;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
        bool all = true;
        for (Criterion c : criteria.require) all = all && criteria.holds(*it, c);
        if (!all) break;
        found = it->size;
    }
    return found;
}

void summarize_report(StabilityReport& report) {
    report.stabilized_at = detect_stabilization(report.rows, report.criteria);
    report.fraction_of_full.reset();
    report.fraction_of_corpus.reset();
    if (report.stabilized_at) {
        report.fraction_of_full =
            static_cast<double>(*report.stabilized_at) / static_cast<double>(report.rows.back().size);
        if (report.corpus_size > 0) {
            report.fraction_of_corpus =
                static_cast<double>(*report.stabilized_at) / static_cast<double>(report.corpus_size);
        }
    }
    report.criteria_status.clear();
    for (auto c : {Criterion::derivative, Criterion::movement, Criterion::nmi, Criterion::ari, Criterion::low_conf}) {
        report.criteria_status[c] = first_persistent(report.rows, report.criteria, c);
    }
}

StabilityReport run_pipeline(const Corpus& corpus, std::optional<std::vector<Index>> steps, const RunConfig& cfg,
                             const StabilizationCriteria& criteria, const PipelineOptions& options) {
    cfg.validate();
    criteria.validate();
    if (corpus.empty()) throw InputError("cannot run the stability pipeline on an empty corpus");

    StabilityReport report;
    report.corpus_size = corpus.size();
    report.config = cfg;
    report.criteria = criteria;
    SplitCorpus parts = split(corpus, options.split_ratio, cfg.seed);
    report.warnings = parts.warnings;
    report.train_size = parts.train.size();
    report.validation_size = parts.validation.size();
    report.validation_ids = parts.validation.ids();
    if (parts.train.empty()) throw InputError("training split is empty");

    const SampleSchedule schedule =
        steps ? SampleSchedule::from_steps(parts.train, *steps) : SampleSchedule::default_for(parts.train);
    report.warnings.insert(report.warnings.end(), schedule.warnings.begin(), schedule.warnings.end());

    std::optional<Snapshot> prev;
    for (std::size_t s = 0; s < schedule.per_category_steps.size(); ++s) {
        const Index step = schedule.per_category_steps[s];
        const auto start = std::chrono::steady_clock::now();
        const Corpus sample = stratified_sample(parts.train, step, cfg.seed, options.sampling);
        if (!report.rows.empty() && sample.size() <= report.rows.back().size) {
            report.warnings.push_back("step " + std::to_string(step) + " adds no utterances (size " +
                                      std::to_string(sample.size()) + "); skipped");
            continue;
        }
        const EngineResult run = cluster_corpus(sample, cfg, options.threads);
        for (const auto& w : run.warnings) report.warnings.push_back("size " + std::to_string(sample.size()) + ": " + w);

        Snapshot snap;
        snap.leaves = run.hierarchy.leaves();
        snap.raw_centroids = raw_leaf_centroids(run.hierarchy, sample.embeddings());
        snap.prototypes = prototype_ids(run.prototypes, sample);
        std::vector<Assignment> val;
        if (!parts.validation.empty()) {
            val = assign_all(run.hierarchy, parts.validation.embeddings(), run.params);
            snap.validation_labels = leaf_labels(val);
        }

        StabilityRow row;
        row.size = sample.size();
        row.leaf_count = static_cast<Index>(snap.leaves.size());
        row.node_count = run.hierarchy.node_count();
        row.leaf_derivative = row.movement = row.nmi_prev = row.ari_prev = row.proto_consistency = nan;
        row.low_conf_rate = val.empty() ? nan : low_confidence_rate(val, cfg.delta_conf);
        row.silhouette = run.quality.silhouette;
        row.ch = run.quality.ch;
        row.db = run.quality.db;
        if (prev) {
            const auto& last = report.rows.back();
            row.leaf_derivative = std::abs(static_cast<double>(row.leaf_count - last.leaf_count)) /
                                  static_cast<double>(row.size - last.size);
            row.movement = centroid_movement(prev->raw_centroids, snap.raw_centroids, rms_norm(sample.embeddings())).value;
            if (snap.validation_labels.size() >= 2) {
                const Partition a(prev->validation_labels);
                const Partition b(snap.validation_labels);
                row.nmi_prev = nmi(a, b);
                row.ari_prev = ari(a, b);
            }
            std::vector<std::pair<Index, Index>> matching;
            for (const auto& [i, j] : greedy_match(prev->raw_centroids, snap.raw_centroids)) {
                matching.emplace_back(prev->leaves[static_cast<std::size_t>(i)], snap.leaves[static_cast<std::size_t>(j)]);
            }
            row.proto_consistency = prototype_consistency(prev->prototypes, snap.prototypes, matching);
        }

        ojson meta;
        meta["n"] = sample.size();
        meta["d"] = sample.dim();
        meta["seed"] = cfg.seed;
        meta["config"] = cfg.to_json();
        report.hierarchies.push_back(dump_json(hierarchy_to_json(run.hierarchy, run.prototypes, sample, meta)));
        row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.rows.push_back(row);
        prev = std::move(snap);
    }

    summarize_report(report);
    return report;
}

const std::vector<std::string>& stability_columns() {
    static const std::vector<std::string> cols{"size",        "leaf_count", "node_count",        "leaf_derivative",
                                               "movement",    "nmi_prev",   "ari_prev",          "low_conf_rate",
                                               "proto_consistency", "silhouette", "ch", "db", "runtime_seconds"};
    return cols;
}

void emit_report(const StabilityReport& report, const std::filesystem::path& out_dir) {
    if (report.rows.empty()) throw InputError("cannot emit an empty stability report");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw InputError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    std::string csv;
    const auto& cols = stability_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) csv += (i ? "," : "") + cols[i];
    csv += "\n";
    for (const auto& r : report.rows) {
        const std::vector<std::string> cells{
            std::to_string(r.size), std::to_string(r.leaf_count), std::to_string(r.node_count),
            fmt(r.leaf_derivative), fmt(r.movement), fmt(r.nmi_prev), fmt(r.ari_prev), fmt(r.low_conf_rate),
            fmt(r.proto_consistency), fmt(r.silhouette), fmt(r.ch), fmt(r.db), fmt(r.runtime_seconds)};
        for (std::size_t i = 0; i < cells.size(); ++i) csv += (i ? "," : "") + cells[i];
        csv += "\n";
    }
    write_file(out_dir / "stability.csv", csv);

    ojson j;
    j["meta"]["seed"] = report.config.seed;
    j["meta"]["config"] = report.config.to_json();
    j["meta"]["corpus_size"] = report.corpus_size;
    j["meta"]["train_size"] = report.train_size;
    j["meta"]["validation_size"] = report.validation_size;
    auto& crit = j["criteria"];
    crit["derivative_max"] = report.criteria.derivative_max;
    crit["movement_max"] = report.criteria.movement_max;
    crit["nmi_min"] = report.criteria.nmi_min;
    crit["ari_min"] = report.criteria.ari_min;
    crit["low_conf_max"] = report.criteria.low_conf_max;
    crit["require"] = ojson::array();
    for (Criterion c : report.criteria.require) crit["require"].push_back(to_string(c));
    j["rows"] = ojson::array();
    for (const auto& r : report.rows) {
        ojson o;
        o["size"] = r.size;
        o["leaf_count"] = r.leaf_count;
        o["node_count"] = r.node_count;
        o["leaf_derivative"] = number(r.leaf_derivative);
        o["movement"] = number(r.movement);
        o["nmi_prev"] = number(r.nmi_prev);
        o["ari_prev"] = number(r.ari_prev);
        o["low_conf_rate"] = number(r.low_conf_rate);
        o["proto_consistency"] = number(r.proto_consistency);
        o["silhouette"] = number(r.silhouette);
        o["ch"] = number(r.ch);
        o["db"] = number(r.db);
        o["runtime_seconds"] = r.runtime_seconds;
        j["rows"].push_back(std::move(o));
    }
    j["stabilized_at"] = optional_size(report.stabilized_at);
    j["fraction_of_full"] = report.fraction_of_full ? ojson(*report.fraction_of_full) : ojson(nullptr);
    j["fraction_of_corpus"] = report.fraction_of_corpus ? ojson(*report.fraction_of_corpus) : ojson(nullptr);
    for (const auto& [c, size] : report.criteria_status) j["criteria_status"][to_string(c)] = optional_size(size);
    j["warnings"] = report.warnings;
    write_file(out_dir / "report.json", j.dump(2) + "\n");

    for (std::size_t i = 0; i < report.rows.size() && i < report.hierarchies.size(); ++i) {
        write_file(out_dir / ("hierarchy_" + std::to_string(report.rows[i].size) + ".json"), report.hierarchies[i]);
    }
}

}  // namespace intent
