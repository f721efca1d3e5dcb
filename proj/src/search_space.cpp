#include "raise/search_space.hpp"

#include "raise/digest.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace rag {

using nlohmann::json;

std::string_view to_string(ModuleTag tag) {
    switch (tag) {
    case ModuleTag::rewriter: return "rewriter";
    case ModuleTag::chunker: return "chunker";
    case ModuleTag::retriever: return "retriever";
    case ModuleTag::reranker: return "reranker";
    case ModuleTag::pruner: return "pruner";
    case ModuleTag::generator: return "generator";
    }
    return "generator";
}

ModuleTag module_tag_from_string(std::string_view name) {
    if (name == "rewriter") return ModuleTag::rewriter;
    if (name == "chunker") return ModuleTag::chunker;
    if (name == "retriever") return ModuleTag::retriever;
    if (name == "reranker") return ModuleTag::reranker;
    if (name == "pruner") return ModuleTag::pruner;
    if (name == "generator") return ModuleTag::generator;
    throw SpaceError("unknown module tag: " + std::string(name));
}

namespace {

bool overlap_lt_chunk_size(const SearchSpace& space, const PipelineConfig& config) {
    if (!space.has_dimension("chunk_size") || !space.has_dimension("chunk_overlap"))
        return true;
    const long size = std::stol(space.value_of(config, "chunk_size"));
    const long overlap = std::stol(space.value_of(config, "chunk_overlap"));
    return overlap < size;
}

} // namespace

Constraint lookup_constraint(std::string_view name) {
    if (name == "chunk_overlap_lt_size")
        return {"chunk_overlap_lt_size", overlap_lt_chunk_size};
    throw SpaceError("unknown constraint: " + std::string(name));
}

SearchSpace::SearchSpace(std::vector<Dimension> dims, std::vector<Constraint> constraints)
    : dims_(std::move(dims)), constraints_(std::move(constraints)) {
    std::set<std::string> names;
    for (const Dimension& d : dims_) {
        if (d.values.empty())
            throw SpaceError("dimension '" + d.name + "' has no values");
        if (!names.insert(d.name).second)
            throw SpaceError("duplicate dimension name '" + d.name + "'");
        std::set<std::string> labels(d.values.begin(), d.values.end());
        if (labels.size() != d.values.size())
            throw SpaceError("dimension '" + d.name + "' has duplicate value labels");
    }
}

std::size_t SearchSpace::dimension_index(std::string_view name) const {
    for (std::size_t i = 0; i < dims_.size(); ++i)
        if (dims_[i].name == name)
            return i;
    throw SpaceError("no dimension named '" + std::string(name) + "'");
}

bool SearchSpace::has_dimension(std::string_view name) const {
    return std::any_of(dims_.begin(), dims_.end(),
                       [&](const Dimension& d) { return d.name == name; });
}

bool SearchSpace::valid(const PipelineConfig& config) const {
    if (config.indices.size() != dims_.size())
        return false;
    for (std::size_t i = 0; i < dims_.size(); ++i)
        if (config.indices[i] >= dims_[i].values.size())
            return false;
    for (const Constraint& c : constraints_)
        if (!c.pred(*this, config))
            return false;
    return true;
}

void SearchSpace::require_valid(const PipelineConfig& config) const {
    if (config.indices.size() != dims_.size())
        throw SpaceError("config has " + std::to_string(config.indices.size()) +
                         " assignments, space has " + std::to_string(dims_.size()) +
                         " dimensions");
    if (!valid(config))
        throw SpaceError("config violates space constraints or value ranges");
}

const std::string& SearchSpace::value_of(const PipelineConfig& config,
                                         std::string_view dim_name) const {
    const std::size_t d = dimension_index(dim_name);
    return dims_[d].values.at(config.indices.at(d));
}

std::uint64_t SearchSpace::product_cardinality() const {
    std::uint64_t n = 1;
    for (const Dimension& d : dims_)
        n *= static_cast<std::uint64_t>(d.values.size());
    return n;
}

std::uint64_t SearchSpace::cardinality(std::uint64_t enumeration_bound) const {
    if (constraints_.empty())
        return product_cardinality();
    if (product_cardinality() > enumeration_bound)
        throw SpaceError("constrained cardinality needs enumeration but the product " +
                         std::to_string(product_cardinality()) + " exceeds the bound " +
                         std::to_string(enumeration_bound));
    std::uint64_t n = 0;
    enumerate([&](const PipelineConfig&) {
        ++n;
        return true;
    });
    return n;
}

void SearchSpace::enumerate(const std::function<bool(const PipelineConfig&)>& fn) const {
    if (dims_.empty())
        return;
    PipelineConfig config;
    config.indices.assign(dims_.size(), 0);
    for (;;) {
        if (valid(config) && !fn(config))
            return;
        std::size_t d = dims_.size();
        while (d > 0) {
            --d;
            if (++config.indices[d] < dims_[d].values.size())
                break;
            config.indices[d] = 0;
            if (d == 0)
                return;
        }
    }
}

std::string SearchSpace::digest() const {
    std::ostringstream os;
    for (const Dimension& d : dims_) {
        os << d.name << '\x1f' << to_string(d.module_tag);
        for (const std::string& v : d.values)
            os << '\x1f' << v;
        os << '\x1e';
    }
    for (const Constraint& c : constraints_)
        os << c.name << '\x1e';
    return sha256_hex(os.str());
}

SearchSpace default_text_space() {
    std::vector<Dimension> dims = {
        {"rewriter_prompt", ModuleTag::rewriter, {"off", "P1", "P2", "P3"}},
        {"chunk_size", ModuleTag::chunker, {"256", "512", "1024", "2048"}},
        {"chunk_overlap", ModuleTag::chunker, {"0", "64", "128", "192"}},
        {"retriever_embedder", ModuleTag::retriever, {"emb-a", "emb-b"}},
        {"retriever_top_k", ModuleTag::retriever, {"1", "3", "5", "10", "20", "50"}},
        {"bm25_weight_alpha", ModuleTag::retriever, {"0.0", "0.25", "0.5", "0.75", "1.0"}},
        {"reranker_model", ModuleTag::reranker, {"off", "rr-a", "rr-b"}},
        {"reranker_top_k", ModuleTag::reranker, {"1", "3", "5", "10", "20", "50"}},
        {"pruner_prompt", ModuleTag::pruner, {"off", "P1", "P2", "P3"}},
    };
    return SearchSpace(std::move(dims), {lookup_constraint("chunk_overlap_lt_size")});
}

PipelineConfig sample_uniform(const SearchSpace& space, SplitRng& rng) {
    constexpr int kMaxRetries = 1000;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        PipelineConfig config;
        config.indices.reserve(space.size());
        for (const Dimension& d : space.dimensions())
            config.indices.push_back(static_cast<std::uint32_t>(rng.next_index(d.values.size())));
        if (space.valid(config))
            return config;
    }
    throw SpaceError("sample_uniform: no valid config found within the retry bound; "
                     "constraints may be unsatisfiable");
}

std::vector<PipelineConfig> neighbors(const SearchSpace& space, const PipelineConfig& config) {
    space.require_valid(config);
    std::vector<PipelineConfig> out;
    for (std::size_t d = 0; d < space.size(); ++d) {
        const std::size_t count = space.dimension(d).values.size();
        for (std::uint32_t v = 0; v < count; ++v) {
            if (v == config.indices[d])
                continue;
            PipelineConfig n = config;
            n.indices[d] = v;
            if (space.valid(n))
                out.push_back(std::move(n));
        }
    }
    return out;
}

namespace {

std::string escape_key_part(const std::string& s) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (c == '%' || c == ';' || c == '=') {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xf]);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

std::string unescape_key_part(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

} // namespace

std::string canonical_key(const SearchSpace& space, const PipelineConfig& config) {
    space.require_valid(config);
    std::map<std::string, std::string> sorted;
    for (std::size_t d = 0; d < space.size(); ++d)
        sorted[space.dimension(d).name] = space.dimension(d).values[config.indices[d]];
    std::string out;
    for (const auto& [name, value] : sorted) {
        if (!out.empty())
            out.push_back(';');
        out += escape_key_part(name);
        out.push_back('=');
        out += escape_key_part(value);
    }
    return out;
}

PipelineConfig parse_canonical_key(const SearchSpace& space, std::string_view key) {
    PipelineConfig config;
    config.indices.assign(space.size(), 0);
    std::vector<bool> seen(space.size(), false);
    std::size_t pos = 0;
    while (pos <= key.size()) {
        const std::size_t end = std::min(key.find(';', pos), key.size());
        std::string_view pair = key.substr(pos, end - pos);
        const std::size_t eq = pair.find('=');
        if (eq == std::string_view::npos)
            throw SpaceError("malformed canonical key near '" + std::string(pair) + "'");
        const std::string name = unescape_key_part(pair.substr(0, eq));
        const std::string value = unescape_key_part(pair.substr(eq + 1));
        const std::size_t d = space.dimension_index(name);
        const auto& values = space.dimension(d).values;
        const auto it = std::find(values.begin(), values.end(), value);
        if (it == values.end())
            throw SpaceError("canonical key value '" + value + "' not in dimension '" + name + "'");
        config.indices[d] = static_cast<std::uint32_t>(it - values.begin());
        seen[d] = true;
        if (end == key.size())
            break;
        pos = end + 1;
    }
    for (std::size_t d = 0; d < space.size(); ++d)
        if (!seen[d])
            throw SpaceError("canonical key misses dimension '" + space.dimension(d).name + "'");
    space.require_valid(config);
    return config;
}

SearchSpace load_space_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw SpaceError("cannot open space file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw SpaceError("space file " + path.string() + ": " + e.what());
    }
    if (doc.value("version", 0) != 1)
        throw SpaceError("space file " + path.string() + ": unsupported version");
    std::vector<Dimension> dims;
    for (const json& jd : doc.at("dimensions")) {
        Dimension d;
        d.name = jd.at("name").get<std::string>();
        d.module_tag = module_tag_from_string(jd.at("module").get<std::string>());
        d.values = jd.at("values").get<std::vector<std::string>>();
        dims.push_back(std::move(d));
    }
    std::vector<Constraint> constraints;
    for (const json& jc : doc.value("constraints", json::array()))
        constraints.push_back(lookup_constraint(jc.get<std::string>()));
    return SearchSpace(std::move(dims), std::move(constraints));
}

void save_space_file(const SearchSpace& space, const std::filesystem::path& path) {
    json doc;
    doc["version"] = 1;
    doc["dimensions"] = json::array();
    for (const Dimension& d : space.dimensions()) {
        doc["dimensions"].push_back(
            {{"name", d.name}, {"module", std::string(to_string(d.module_tag))}, {"values", d.values}});
    }
    doc["constraints"] = json::array();
    for (const Constraint& c : space.constraints())
        doc["constraints"].push_back(c.name);
    std::ofstream out(path);
    if (!out)
        throw SpaceError("cannot write space file: " + path.string());
    out << doc.dump(2) << '\n';
}

SearchSpace resolve_space_arg(const std::string& arg) {
    if (arg == "default-text")
        return default_text_space();
    return load_space_file(arg);
}

} // namespace rag
