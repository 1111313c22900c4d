#include "intent/serialize.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "intent/byteio.hpp"

namespace intent {

namespace {

using ojson = nlohmann::ordered_json;

double sig9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

ojson vector_json(const Vector& v) {
    ojson arr = ojson::array();
    for (Index i = 0; i < v.size(); ++i) arr.push_back(sig9(v(i)));
    return arr;
}

constexpr std::array<char, 4> params_magic{'H', 'I', 'C', 'P'};
constexpr char params_version = 0x01;

void write_matrix(std::ostream& out, const Matrix& m) {
    for (Index i = 0; i < m.size(); ++i) byteio::put_f32(out, static_cast<float>(m.data()[i]));
}

Matrix read_matrix(std::istream& in, Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(byteio::get_f32(in, "parameter payload"));
    return m;
}

ojson shape(const Matrix& m) { return ojson::array({m.rows(), m.cols()}); }

}  // namespace

IdLists prototype_ids(const Prototypes& prototypes, const Corpus& corpus) {
    IdLists out;
    for (const auto& [leaf, rows] : prototypes) {
        auto& ids = out[leaf];
        for (Index r : rows) ids.push_back(corpus.ids()[static_cast<std::size_t>(r)]);
    }
    return out;
}

ojson hierarchy_to_json(const Hierarchy& h, const Prototypes& prototypes, const Corpus& corpus, const ojson& meta) {
    ojson j;
    j["meta"] = meta;
    ojson nodes = ojson::array();
    for (const auto& node : h.nodes) {
        ojson o;
        o["id"] = node.id;
        o["parent"] = node.parent ? ojson(*node.parent) : ojson(nullptr);
        o["children"] = node.children;
        o["size"] = node.size;
        o["centroid"] = vector_json(node.centroid);
        if (node.is_leaf() && node.id != h.virtual_root) {
            ojson protos = ojson::array();
            if (const auto it = prototypes.find(node.id); it != prototypes.end()) {
                for (Index r : it->second) protos.push_back(corpus.ids()[static_cast<std::size_t>(r)]);
            }
            o["prototypes"] = std::move(protos);
            ojson members = ojson::array();
            for (Index r : node.members) members.push_back(corpus.ids()[static_cast<std::size_t>(r)]);
            o["members"] = std::move(members);
        }
        nodes.push_back(std::move(o));
    }
    j["nodes"] = std::move(nodes);
    j["roots"] = h.roots;
    j["virtual_root"] = h.virtual_root;
    return j;
}

std::string dump_json(const ojson& j) { return j.dump() + "\n"; }

LoadedHierarchy hierarchy_from_json(const ojson& j) {
    LoadedHierarchy out;
    try {
        out.meta = j.at("meta");
        auto& h = out.hierarchy;
        for (const auto& o : j.at("nodes")) {
            HierarchyNode node;
            node.id = o.at("id").get<Index>();
            if (node.id != static_cast<Index>(h.nodes.size())) throw InputError("hierarchy node ids must be 0..N-1 in order");
            if (!o.at("parent").is_null()) node.parent = o.at("parent").get<Index>();
            node.children = o.at("children").get<std::vector<Index>>();
            node.size = o.at("size").get<Index>();
            const auto c = o.at("centroid").get<std::vector<double>>();
            node.centroid = Eigen::Map<const Vector>(c.data(), static_cast<Index>(c.size()));
            if (o.contains("prototypes")) out.prototypes[node.id] = o.at("prototypes").get<std::vector<std::string>>();
            if (o.contains("members")) out.members[node.id] = o.at("members").get<std::vector<std::string>>();
            h.nodes.push_back(std::move(node));
        }
        h.roots = j.at("roots").get<std::vector<Index>>();
        h.virtual_root = j.at("virtual_root").get<Index>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed hierarchy JSON: ") + e.what());
    }
    const auto count = static_cast<Index>(out.hierarchy.nodes.size());
    if (out.hierarchy.virtual_root < 0 || out.hierarchy.virtual_root >= count) {
        throw InputError("hierarchy JSON: virtual_root out of range");
    }
    for (const auto& node : out.hierarchy.nodes) {
        for (Index c : node.children) {
            if (c < 0 || c >= count) throw InputError("hierarchy JSON: child id out of range");
        }
    }
    return out;
}

LoadedHierarchy load_hierarchy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open hierarchy file " + path.string());
    ojson j;
    try {
        j = ojson::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return hierarchy_from_json(j);
}

void save_params(const AttentionParams<double>& params, std::uint64_t seed, int epoch,
                 const std::filesystem::path& path) {
    ojson header;
    header["mode"] = to_string(params.mode);
    header["h"] = params.hidden();
    header["d"] = params.dim();
    header["seed"] = seed;
    header["epoch"] = epoch;
    header["rescale"] = params.rescale;
    header["w1"] = shape(params.w1);
    header["w2"] = shape(params.w2);
    header["decoder"] = shape(params.decoder);
    const std::string text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write parameter file " + path.string());
    out.write(params_magic.data(), 4);
    out.put(params_version);
    byteio::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_matrix(out, params.w1);
    write_matrix(out, params.w2);
    write_matrix(out, params.decoder);
    if (!out) throw InputError("failed writing parameter file " + path.string());
}

LoadedParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open parameter file " + path.string());
    std::array<char, 5> head{};
    if (!in.read(head.data(), 5) || !std::equal(params_magic.begin(), params_magic.end(), head.begin())) {
        throw InputError(path.string() + ": bad magic, expected HICP");
    }
    if (head[4] != params_version) throw InputError(path.string() + ": unsupported version");
    const auto len = byteio::get_u32(in, "parameter header");
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw InputError(path.string() + ": truncated header");

    LoadedParams out;
    try {
        const auto header = ojson::parse(text);
        auto& p = out.params;
        p.mode = attention_mode_from_string(header.at("mode").get<std::string>());
        p.rescale = header.at("rescale").get<bool>();
        out.seed = header.at("seed").get<std::uint64_t>();
        out.epoch = header.at("epoch").get<int>();
        auto dims = [&header](const char* key) { return header.at(key).get<std::array<Index, 2>>(); };
        const auto s1 = dims("w1");
        const auto s2 = dims("w2");
        const auto sd = dims("decoder");
        p.w1 = read_matrix(in, s1[0], s1[1]);
        p.w2 = read_matrix(in, s2[0], s2[1]);
        p.decoder = read_matrix(in, sd[0], sd[1]);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": malformed header: " + e.what());
    }
    try {
        out.params.validate();
    } catch (const ConfigError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace intent
