#include "intent/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "intent/config.hpp"
#include "intent/corpus.hpp"
#include "intent/engine.hpp"
#include "intent/metrics.hpp"
#include "intent/serialize.hpp"
#include "intent/stability.hpp"

namespace intent {

namespace {

using ojson = nlohmann::ordered_json;

std::string kebab(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

struct GlobalFlags {
    std::string config_path;
    std::string out;
    unsigned threads = 1;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
};

void add_global_flags(CLI::App& app, GlobalFlags& g) {
    app.add_option("--config", g.config_path, "flat key = value config file");
    app.add_option("--out", g.out, "output path");
    app.add_option("--threads", g.threads, "worker threads (does not change results)")->check(CLI::PositiveNumber);
    for (const auto& key : config_keys()) {
        g.options[key] = app.add_option("--" + kebab(key), g.values[key], "RunConfig " + key);
    }
}

/// Defaults, then the config file, then explicit flags.
RunConfig resolve_config(const GlobalFlags& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) {
        for (const auto& [key, value] : read_config_file(g.config_path)) cfg.set(key, value);
    }
    for (const auto& key : config_keys()) {
        if (g.options.at(key)->count() > 0) cfg.set(key, g.values.at(key));
    }
    cfg.validate();
    return cfg;
}

std::string require_out(const GlobalFlags& g) {
    if (g.out.empty()) throw ConfigError("--out is required");
    return g.out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
    if (!out) throw InputError("failed writing " + path.string());
}

ojson run_meta(const Corpus& corpus, const RunConfig& cfg) {
    ojson meta;
    meta["n"] = corpus.size();
    meta["d"] = corpus.dim();
    meta["seed"] = cfg.seed;
    meta["config"] = cfg.to_json();
    return meta;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
    SynthSpec spec;
    std::string truth;
};

int cmd_synth(const SynthArgs& a, const GlobalFlags& g, const RunConfig& cfg, std::ostream& out) {
    SynthSpec spec = a.spec;
    spec.seed = cfg.seed;
    const std::string path = require_out(g);
    const auto synth = generate_synthetic(spec);
    save_corpus(synth.corpus, path, format_from_path(path));
    const std::string truth = a.truth.empty() ? path + ".truth.json" : a.truth;
    save_ground_truth(synth.truth, synth.corpus, truth);
    out << "wrote " << synth.corpus.size() << " utterances in " << spec.leaf_count() << " leaves to " << path << "\n";
    return exit_code::ok;
}

// --- cluster ---------------------------------------------------------------

std::string cluster_summary(const Corpus& corpus, const RunConfig& cfg, const EngineResult& r) {
    std::ostringstream s;
    s << "n = " << corpus.size() << ", d = " << corpus.dim() << ", seed = " << cfg.seed << "\n";
    s << "initial clusters = " << r.clusters.k << "\n";
    s << "leaves = " << r.hierarchy.leaves().size() << "\n";
    s << "nodes = " << r.hierarchy.node_count() << "\n";
    s << "roots = " << r.hierarchy.roots.size() << "\n";
    s << "merges = " << r.stats.merges << ", rejections = " << r.stats.rejections
      << ", refinements = " << r.stats.refinements << "\n";
    s << "tau initial = " << num(r.stats.tau_initial) << ", tau final = " << num(r.stats.tau_final) << "\n";
    s << "silhouette = " << num(r.quality.silhouette) << "\n";
    s << "calinski_harabasz = " << num(r.quality.ch) << "\n";
    s << "davies_bouldin = " << num(r.quality.db) << "\n";
    s << "pretrain loss = " << num(r.pretrain.initial_loss) << " -> " << num(r.pretrain.final_loss) << "\n";
    s << "dec loss = " << num(r.finetune.initial_loss) << " -> " << num(r.finetune.final_loss) << "\n";
    if (corpus.category_set().size() > 1) {
        const Partition truth(corpus.categories());
        const Partition roots(r.hierarchy.root_labels(corpus.size()));
        const Partition leaves(r.hierarchy.leaf_labels(corpus.size()));
        s << "root cut vs categories: nmi = " << num(nmi(roots, truth)) << ", ari = " << num(ari(roots, truth)) << "\n";
        s << "leaves vs categories: nmi = " << num(nmi(leaves, truth)) << ", ari = " << num(ari(leaves, truth)) << "\n";
    }
    s << "config = " << cfg.to_json().dump() << "\n";
    for (const auto& w : r.warnings) s << "warning: " << w << "\n";
    return s.str();
}

struct ClusterArgs {
    std::string input;
};

int cmd_cluster(const ClusterArgs& a, const GlobalFlags& g, const RunConfig& cfg, std::ostream& out) {
    const std::string path = require_out(g);
    const Corpus corpus = load_corpus(a.input);
    const EngineResult r = cluster_corpus(corpus, cfg, g.threads);
    const auto issues = check_structure(r.hierarchy, r.enhanced, &r.prototypes);
    if (!issues.empty()) throw InvariantError("hierarchy invariant violated: " + issues.front());
    write_text(path, dump_json(hierarchy_to_json(r.hierarchy, r.prototypes, corpus, run_meta(corpus, cfg))));
    save_params(r.params, cfg.seed, cfg.epochs_pretrain + cfg.epochs_dec, path + ".params");
    const std::string summary = cluster_summary(corpus, cfg, r);
    write_text(path + ".summary.txt", summary);
    out << summary;
    return exit_code::ok;
}

// --- stability -------------------------------------------------------------

struct StabilityArgs {
    std::string input;
    std::vector<Index> steps;
    std::vector<Index> sizes;
    std::vector<std::string> require;
    std::string sampling = "balanced";
    double split_ratio = 0.8;
    StabilizationCriteria criteria;
};

int cmd_stability(const StabilityArgs& a, const GlobalFlags& g, const RunConfig& cfg, std::ostream& out) {
    const std::string dir = require_out(g);
    if (!a.steps.empty() && !a.sizes.empty()) throw ConfigError("give either --steps or --sizes, not both");
    if (!(a.split_ratio > 0.0 && a.split_ratio < 1.0)) throw ConfigError("--split-ratio must lie in (0, 1)");
    const Corpus corpus = load_corpus(a.input);

    StabilizationCriteria criteria = a.criteria;
    if (!a.require.empty()) {
        criteria.require.clear();
        for (const auto& name : a.require) criteria.require.insert(criterion_from_string(name));
    }
    PipelineOptions options;
    options.split_ratio = a.split_ratio;
    options.threads = g.threads;
    if (a.sampling == "balanced") options.sampling = SamplingMode::balanced;
    else if (a.sampling == "proportional") options.sampling = SamplingMode::proportional;
    else throw ConfigError("--sampling must be balanced or proportional");

    std::optional<std::vector<Index>> steps;
    if (!a.steps.empty()) steps = a.steps;
    if (!a.sizes.empty()) {
        // Sizes are totals over the training side's categories.
        const auto train = split(corpus, a.split_ratio, cfg.seed).train;
        steps = SampleSchedule::from_sizes(train, a.sizes).per_category_steps;
    }
    const StabilityReport report = run_pipeline(corpus, steps, cfg, criteria, options);
    emit_report(report, dir);
    for (const auto& r : report.rows) {
        out << "size " << r.size << ": leaves " << r.leaf_count << ", derivative " << num(r.leaf_derivative)
            << ", movement " << num(r.movement) << ", nmi " << num(r.nmi_prev) << ", ari " << num(r.ari_prev) << "\n";
    }
    if (report.stabilized_at) {
        out << "stabilized at " << *report.stabilized_at << " (" << num(*report.fraction_of_full) << " of the largest size, "
            << num(*report.fraction_of_corpus) << " of the corpus)\n";
    } else {
        out << "no stabilization detected\n";
    }
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    return exit_code::ok;
}

// --- assign ----------------------------------------------------------------

struct AssignArgs {
    std::string hierarchy;
    std::string input;
    std::string params;
};

int cmd_assign(const AssignArgs& a, const GlobalFlags& g, std::ostream& out) {
    const LoadedHierarchy loaded = load_hierarchy(a.hierarchy);
    const LoadedParams params = load_params(a.params.empty() ? a.hierarchy + ".params" : a.params);
    const Corpus corpus = load_corpus(a.input);
    if (corpus.dim() != params.params.dim()) throw InputError("corpus dimension does not match the parameters");
    const auto assignments = assign_all(loaded.hierarchy, corpus.embeddings(), params.params);
    std::string text;
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        ojson o;
        o["id"] = corpus.ids()[i];
        o["leaf"] = assignments[i].leaf;
        o["confidence"] = std::strtod(num(assignments[i].confidence).c_str(), nullptr);
        text += o.dump() + "\n";
    }
    if (g.out.empty()) out << text;
    else write_text(g.out, text);
    return exit_code::ok;
}

// --- metrics ---------------------------------------------------------------

/// One label per line. JSON object lines contribute their "leaf", "label" or
/// "category" field.
std::vector<std::string> read_partition(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open partition file " + path);
    std::vector<std::string> labels;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() != '{') {
            labels.push_back(line);
            continue;
        }
        try {
            const auto j = ojson::parse(line);
            const ojson* v = nullptr;
            for (const char* key : {"leaf", "label", "category"}) {
                if (j.contains(key)) {
                    v = &j.at(key);
                    break;
                }
            }
            if (!v) throw InputError(path + ":" + std::to_string(lineno) + ": no leaf, label or category field");
            labels.push_back(v->is_string() ? v->get<std::string>() : v->dump());
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return labels;
}

int cmd_metrics(const std::vector<std::string>& files, std::ostream& out) {
    const Partition u(read_partition(files.at(0)));
    const Partition v(read_partition(files.at(1)));
    // 12 significant digits hides last-bit noise; JSON keeps "1.0" style output.
    auto show = [](double x) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", x);
        return ojson(std::strtod(buf, nullptr)).dump();
    };
    out << "nmi=" << show(nmi(u, v)) << " ari=" << show(ari(u, v)) << "\n";
    return exit_code::ok;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical intent clustering over utterance embeddings", "intent"};
    // "--h" is the attention-dim flag, so help is long-form only.
    app.set_help_flag("--help", "print this help and exit");
    app.require_subcommand(1);
    app.fallthrough();
    GlobalFlags g;
    add_global_flags(app, g);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic hierarchical mixture corpus");
    synth_cmd->add_option("--levels", synth.spec.levels)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--branching", synth.spec.branching, "children per node, one value or one per level")
        ->delimiter(',');
    synth_cmd->add_option("--dim", synth.spec.d)->check(CLI::Range(2, 1 << 20));
    synth_cmd->add_option("--points-per-leaf", synth.spec.points_per_leaf)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--separation", synth.spec.separation);
    synth_cmd->add_option("--truth", synth.truth, "ground-truth tree path (default <out>.truth.json)");

    ClusterArgs cluster;
    auto* cluster_cmd = app.add_subcommand("cluster", "build the intent hierarchy for a corpus");
    cluster_cmd->add_option("--input,input", cluster.input, "corpus (.jsonl or .bin)")->required();

    StabilityArgs stab;
    auto* stab_cmd = app.add_subcommand("stability", "run the sample-size stability pipeline");
    stab_cmd->add_option("--input,input", stab.input, "corpus (.jsonl or .bin)")->required();
    stab_cmd->add_option("--steps", stab.steps, "per-category sample sizes")->delimiter(',');
    stab_cmd->add_option("--sizes", stab.sizes, "total sample sizes")->delimiter(',');
    stab_cmd->add_option("--require", stab.require, "criteria that must hold together")->delimiter(',');
    stab_cmd->add_option("--sampling", stab.sampling, "balanced or proportional");
    stab_cmd->add_option("--split-ratio", stab.split_ratio);
    stab_cmd->add_option("--derivative-max", stab.criteria.derivative_max);
    stab_cmd->add_option("--movement-max", stab.criteria.movement_max);
    stab_cmd->add_option("--nmi-min", stab.criteria.nmi_min);
    stab_cmd->add_option("--ari-min", stab.criteria.ari_min);
    stab_cmd->add_option("--low-conf-max", stab.criteria.low_conf_max);

    AssignArgs assign_args;
    auto* assign_cmd = app.add_subcommand("assign", "assign utterances to leaves of a saved hierarchy");
    assign_cmd->add_option("--hierarchy", assign_args.hierarchy)->required();
    assign_cmd->add_option("--input,input", assign_args.input, "corpus (.jsonl or .bin)")->required();
    assign_cmd->add_option("--params", assign_args.params, "parameter checkpoint (default <hierarchy>.params)");

    std::vector<std::string> partition_files;
    auto* metrics_cmd = app.add_subcommand("metrics", "NMI and ARI between two partition files");
    metrics_cmd->add_option("files", partition_files, "two label files")->required()->expected(2);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_code::config_error;
    }

    try {
        const RunConfig cfg = resolve_config(g);
        if (*synth_cmd) return cmd_synth(synth, g, cfg, out);
        if (*cluster_cmd) return cmd_cluster(cluster, g, cfg, out);
        if (*stab_cmd) return cmd_stability(stab, g, cfg, out);
        if (*assign_cmd) return cmd_assign(assign_args, g, out);
        if (*metrics_cmd) return cmd_metrics(partition_files, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return exit_code::config_error;
    } catch (const InvariantError& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_code::invariant_error;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return exit_code::input_error;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return exit_code::input_error;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "input error: " << e.what() << "\n";
        return exit_code::input_error;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return exit_code::invariant_error;
    }
    return exit_code::config_error;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace intent
