#include "intent/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "intent/byteio.hpp"
#include "intent/random.hpp"

namespace intent {

namespace {

using json = nlohmann::json;

std::string record_label(std::size_t index) {
    return "record " + std::to_string(index);
}

void validate_columns(const std::vector<std::string>& ids, const std::vector<std::string>& categories,
                      const std::vector<std::optional<std::string>>& texts, const Matrix& embeddings) {
    const auto n = static_cast<std::size_t>(embeddings.rows());
    if (ids.size() != n || categories.size() != n || texts.size() != n) {
        throw InputError("corpus columns have inconsistent lengths");
    }
    if (n > 0 && embeddings.cols() < 2) {
        throw InputError("embedding dimension must be at least 2, got " +
                         std::to_string(embeddings.cols()));
    }
    std::unordered_set<std::string> seen;
    seen.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen.insert(ids[i]).second) {
            throw InputError(record_label(i) + ": duplicate id '" + ids[i] + "'");
        }
        if (!embeddings.row(static_cast<Index>(i)).allFinite()) {
            throw InputError(record_label(i) + ": non-finite embedding value");
        }
    }
}

using byteio::get_u32;
using byteio::put_f32;
using byteio::put_u32;

std::filesystem::path meta_path(const std::filesystem::path& path) {
    return std::filesystem::path(path.string() + ".meta.jsonl");
}

constexpr std::array<char, 4> corpus_magic{'H', 'I', 'C', 'V'};
constexpr char corpus_version = 0x01;

Corpus load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open corpus file " + path.string());

    std::vector<Utterance> rows;
    std::string line;
    std::size_t line_no = 0;
    Index d = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError(where + ": malformed JSON (" + e.what() + ")");
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("category") ||
            !obj["category"].is_string() || !obj.contains("embedding") || !obj["embedding"].is_array()) {
            throw InputError(where + ": record needs string 'id', string 'category' and array 'embedding'");
        }
        Utterance u;
        u.id = obj["id"].get<std::string>();
        u.category = obj["category"].get<std::string>();
        if (obj.contains("text") && !obj["text"].is_null()) {
            if (!obj["text"].is_string()) throw InputError(where + ": 'text' must be a string");
            u.text = obj["text"].get<std::string>();
        }
        const auto& emb = obj["embedding"];
        u.embedding.resize(static_cast<Index>(emb.size()));
        for (std::size_t j = 0; j < emb.size(); ++j) {
            if (!emb[j].is_number()) throw InputError(where + ": embedding entries must be numbers");
            u.embedding(static_cast<Index>(j)) = emb[j].get<double>();
        }
        if (!u.embedding.allFinite()) throw InputError(where + ": non-finite embedding value");
        if (d < 0) {
            d = u.embedding.size();
        } else if (u.embedding.size() != d) {
            throw InputError(where + " (id '" + u.id + "'): dimension mismatch, expected " + std::to_string(d) +
                             " got " + std::to_string(u.embedding.size()));
        }
        rows.push_back(std::move(u));
    }
    return Corpus::from_utterances(std::move(rows));
}

Corpus load_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open corpus file " + path.string());
    std::array<char, 5> head{};
    if (!in.read(head.data(), 5) || !std::equal(corpus_magic.begin(), corpus_magic.end(), head.begin())) {
        throw InputError(path.string() + ": bad magic, expected HICV");
    }
    if (head[4] != corpus_version) throw InputError(path.string() + ": unsupported version");
    const auto n = static_cast<Index>(get_u32(in, "binary corpus header"));
    const auto d = static_cast<Index>(get_u32(in, "binary corpus header"));

    Matrix emb(n, d);
    std::vector<unsigned char> buf(static_cast<std::size_t>(d) * 4);
    for (Index i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
            throw InputError(path.string() + ": truncated payload at " + record_label(static_cast<std::size_t>(i)));
        }
        for (Index j = 0; j < d; ++j) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(buf[static_cast<std::size_t>(4 * j + b)]) << (8 * b);
            emb(i, j) = static_cast<double>(std::bit_cast<float>(bits));
        }
    }

    std::ifstream meta(meta_path(path));
    if (!meta) throw InputError("missing companion metadata " + meta_path(path).string());
    std::vector<std::string> ids, cats;
    std::vector<std::optional<std::string>> texts;
    std::string line;
    std::size_t idx = 0;
    while (std::getline(meta, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw InputError("metadata " + record_label(idx) + ": malformed JSON (" + e.what() + ")");
        }
        if (!obj.contains("id") || !obj["id"].is_string() || !obj.contains("category") || !obj["category"].is_string()) {
            throw InputError("metadata " + record_label(idx) + ": needs string 'id' and 'category'");
        }
        ids.push_back(obj["id"].get<std::string>());
        cats.push_back(obj["category"].get<std::string>());
        if (obj.contains("text") && obj["text"].is_string()) {
            texts.emplace_back(obj["text"].get<std::string>());
        } else {
            texts.emplace_back(std::nullopt);
        }
        ++idx;
    }
    if (static_cast<Index>(ids.size()) != n) {
        throw InputError("metadata has " + std::to_string(ids.size()) + " rows, payload has " + std::to_string(n));
    }
    return Corpus::from_columns(std::move(ids), std::move(cats), std::move(texts), std::move(emb));
}

}  // namespace

// ---------------------------------------------------------------------------

Corpus Corpus::from_utterances(std::vector<Utterance> rows) {
    const Index d = rows.empty() ? 0 : rows.front().embedding.size();
    std::vector<std::string> ids, cats;
    std::vector<std::optional<std::string>> texts;
    ids.reserve(rows.size());
    cats.reserve(rows.size());
    texts.reserve(rows.size());
    Matrix emb(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].embedding.size() != d) {
            throw InputError(record_label(i) + " (id '" + rows[i].id + "'): dimension mismatch, expected " +
                             std::to_string(d) + " got " + std::to_string(rows[i].embedding.size()));
        }
        emb.row(static_cast<Index>(i)) = rows[i].embedding.transpose();
        ids.push_back(std::move(rows[i].id));
        cats.push_back(std::move(rows[i].category));
        texts.push_back(std::move(rows[i].text));
    }
    return from_columns(std::move(ids), std::move(cats), std::move(texts), std::move(emb));
}

Corpus Corpus::from_columns(std::vector<std::string> ids, std::vector<std::string> categories,
                            std::vector<std::optional<std::string>> texts, Matrix embeddings) {
    validate_columns(ids, categories, texts, embeddings);
    Corpus c;
    c.ids_ = std::move(ids);
    c.categories_ = std::move(categories);
    c.texts_ = std::move(texts);
    c.embeddings_ = std::move(embeddings);
    return c;
}

std::vector<std::string> Corpus::category_set() const {
    std::set<std::string> s(categories_.begin(), categories_.end());
    return {s.begin(), s.end()};
}

std::vector<std::pair<std::string, std::vector<Index>>> Corpus::rows_by_category() const {
    std::map<std::string, std::vector<Index>> groups;
    for (Index i = 0; i < size(); ++i) groups[categories_[static_cast<std::size_t>(i)]].push_back(i);
    return {groups.begin(), groups.end()};
}

Utterance Corpus::utterance(Index row) const {
    const auto r = static_cast<std::size_t>(row);
    return {ids_.at(r), categories_.at(r), texts_.at(r), embeddings_.row(row).transpose()};
}

Corpus Corpus::subset(const std::vector<Index>& rows) const {
    Corpus c;
    c.ids_.reserve(rows.size());
    c.categories_.reserve(rows.size());
    c.texts_.reserve(rows.size());
    c.embeddings_.resize(static_cast<Index>(rows.size()), dim());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<std::size_t>(rows[k]);
        c.ids_.push_back(ids_.at(r));
        c.categories_.push_back(categories_.at(r));
        c.texts_.push_back(texts_.at(r));
        c.embeddings_.row(static_cast<Index>(k)) = embeddings_.row(rows[k]);
    }
    return c;
}

bool operator==(const Corpus& a, const Corpus& b) {
    return a.ids_ == b.ids_ && a.categories_ == b.categories_ && a.texts_ == b.texts_ &&
           a.embeddings_.rows() == b.embeddings_.rows() && a.embeddings_.cols() == b.embeddings_.cols() &&
           a.embeddings_ == b.embeddings_;
}

// ---------------------------------------------------------------------------

CorpusFormat format_from_path(const std::filesystem::path& path) {
    return path.extension() == ".bin" ? CorpusFormat::binary : CorpusFormat::jsonl;
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    return format == CorpusFormat::binary ? load_binary(path) : load_jsonl(path);
}

Corpus load_corpus(const std::filesystem::path& path) {
    return load_corpus(path, format_from_path(path));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, CorpusFormat format) {
    auto meta_json = [&](Index i) {
        const auto r = static_cast<std::size_t>(i);
        json obj;
        obj["id"] = corpus.ids()[r];
        obj["category"] = corpus.categories()[r];
        if (corpus.texts()[r]) obj["text"] = *corpus.texts()[r];
        return obj;
    };

    if (format == CorpusFormat::jsonl) {
        std::ofstream out(path);
        if (!out) throw InputError("cannot write " + path.string());
        for (Index i = 0; i < corpus.size(); ++i) {
            json obj = meta_json(i);
            json emb = json::array();
            for (Index j = 0; j < corpus.dim(); ++j) emb.push_back(corpus.embeddings()(i, j));
            obj["embedding"] = std::move(emb);
            out << obj.dump() << '\n';
        }
        return;
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(corpus_magic.data(), 4);
    out.put(corpus_version);
    put_u32(out, static_cast<std::uint32_t>(corpus.size()));
    put_u32(out, static_cast<std::uint32_t>(corpus.dim()));
    for (Index i = 0; i < corpus.size(); ++i) {
        for (Index j = 0; j < corpus.dim(); ++j) put_f32(out, static_cast<float>(corpus.embeddings()(i, j)));
    }
    std::ofstream meta(meta_path(path));
    if (!meta) throw InputError("cannot write " + meta_path(path).string());
    for (Index i = 0; i < corpus.size(); ++i) meta << meta_json(i).dump() << '\n';
}

// ---------------------------------------------------------------------------

SplitCorpus split(const Corpus& corpus, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("split ratio must lie in (0, 1)");
    SplitCorpus out;
    out.ratio = ratio;
    Rng rng = make_rng(seed, seed_offset::split);
    std::vector<Index> train_rows, val_rows;
    for (auto& [category, rows] : corpus.rows_by_category()) {
        if (rows.size() < 2) out.warnings.push_back("category '" + category + "' has fewer than 2 members");
        std::vector<Index> order = rows;
        shuffle(std::span<Index>(order), rng);
        // Remainders round toward train.
        const auto n_val = static_cast<std::size_t>(
            std::floor((1.0 - ratio) * static_cast<double>(order.size()) + 1e-9));
        val_rows.insert(val_rows.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_rows.insert(train_rows.end(), order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    out.train = corpus.subset(train_rows);
    out.validation = corpus.subset(val_rows);
    return out;
}

Corpus stratified_sample(const Corpus& corpus, Index per_category, std::uint64_t seed, SamplingMode mode) {
    if (corpus.empty()) throw InputError("cannot sample from an empty corpus");
    if (per_category < 1) throw ConfigError("per-category sample size must be >= 1");
    Rng rng = make_rng(seed, seed_offset::sample);
    const auto groups = corpus.rows_by_category();
    const double budget = static_cast<double>(per_category) * static_cast<double>(groups.size());

    std::vector<Index> chosen;
    for (const auto& [category, rows] : groups) {
        Index quota = per_category;
        if (mode == SamplingMode::proportional) {
            const double share = static_cast<double>(rows.size()) / static_cast<double>(corpus.size());
            quota = std::max<Index>(1, static_cast<Index>(std::llround(budget * share)));
        }
        const auto take = static_cast<std::size_t>(std::min<Index>(quota, static_cast<Index>(rows.size())));
        std::vector<Index> order = rows;
        // Partial Fisher-Yates: the first `take` slots are a uniform draw.
        for (std::size_t i = 0; i < take; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_below(rng, order.size() - i));
            std::swap(order[i], order[j]);
        }
        chosen.insert(chosen.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());
    return corpus.subset(chosen);
}

Index max_balanced_size(const Corpus& corpus, std::optional<Index> per_category_cap) {
    Index total = 0;
    for (const auto& [category, rows] : corpus.rows_by_category()) {
        const auto count = static_cast<Index>(rows.size());
        total += per_category_cap ? std::min(*per_category_cap, count) : count;
    }
    return total;
}

SampleSchedule SampleSchedule::from_steps(const Corpus& corpus, std::vector<Index> steps) {
    if (steps.empty()) throw ConfigError("sample schedule must not be empty");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i] < 1) throw ConfigError("schedule steps must be positive");
        if (i > 0 && steps[i] <= steps[i - 1]) throw ConfigError("schedule steps must be strictly ascending");
    }
    SampleSchedule s;
    s.per_category_steps = std::move(steps);
    for (Index step : s.per_category_steps) s.total_sizes.push_back(max_balanced_size(corpus, step));
    return s;
}

SampleSchedule SampleSchedule::from_sizes(const Corpus& corpus, const std::vector<Index>& sizes) {
    const auto categories = static_cast<Index>(corpus.category_set().size());
    if (categories == 0) throw InputError("cannot build a schedule for an empty corpus");
    const Index available = max_balanced_size(corpus);
    std::vector<Index> steps;
    std::vector<std::string> warnings;
    for (Index size : sizes) {
        if (size < 1) throw ConfigError("schedule sizes must be positive");
        if (size > available) {
            warnings.push_back("size " + std::to_string(size) + " exceeds balanced availability " +
                               std::to_string(available) + "; clipped");
        }
        Index step = (size + categories - 1) / categories;
        // Clip to the largest useful step.
        Index largest = 0;
        for (const auto& [c, rows] : corpus.rows_by_category()) largest = std::max(largest, static_cast<Index>(rows.size()));
        step = std::min(step, largest);
        if (!steps.empty() && step <= steps.back()) {
            warnings.push_back("size " + std::to_string(size) + " duplicates an earlier step; dropped");
            continue;
        }
        steps.push_back(step);
    }
    SampleSchedule s = from_steps(corpus, std::move(steps));
    s.warnings = std::move(warnings);
    return s;
}

SampleSchedule SampleSchedule::default_for(const Corpus& corpus) {
    if (corpus.size() > large_corpus_threshold) return from_steps(corpus, {10, 20, 40, 60, 80, 100, 120});
    Index largest = 0;
    for (const auto& [c, rows] : corpus.rows_by_category()) largest = std::max(largest, static_cast<Index>(rows.size()));
    std::vector<Index> steps;
    for (Index i = 1; i <= 6; ++i) {
        const Index step = (largest * i + 5) / 6;
        if (step >= 1 && (steps.empty() || step > steps.back())) steps.push_back(step);
    }
    return from_steps(corpus, std::move(steps));
}

}  // namespace intent
