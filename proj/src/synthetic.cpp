#include "raise/synthetic.hpp"

#include "raise/digest.hpp"
#include "raise/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace rag {

using nlohmann::json;

SyntheticEnvironment::SyntheticEnvironment(SearchSpace space,
                                           std::vector<std::vector<double>> unary,
                                           std::vector<PairTerm> pairwise, double noise_sigma,
                                           std::uint64_t noise_seed,
                                           std::uint64_t enumeration_bound)
    : space_(std::move(space)), unary_(std::move(unary)), pairwise_(std::move(pairwise)),
      noise_sigma_(noise_sigma), noise_seed_(noise_seed) {
    if (unary_.size() != space_.size())
        throw SpaceError("synthetic environment: unary weights do not match dimensions");
    for (std::size_t d = 0; d < space_.size(); ++d)
        if (unary_[d].size() != space_.dimension(d).values.size())
            throw SpaceError("synthetic environment: unary weights for dimension '" +
                             space_.dimension(d).name + "' do not match its values");
    for (const PairTerm& t : pairwise_) {
        if (t.dim_a >= space_.size() || t.dim_b >= space_.size() ||
            t.val_a >= space_.dimension(t.dim_a).values.size() ||
            t.val_b >= space_.dimension(t.dim_b).values.size())
            throw SpaceError("synthetic environment: pairwise term out of range");
    }
    if (noise_sigma_ < 0.0)
        throw SpaceError("synthetic environment: noise_sigma must be non-negative");
    if (space_.product_cardinality() > enumeration_bound)
        throw SpaceError("synthetic environment needs exhaustive rescaling but cardinality " +
                         std::to_string(space_.product_cardinality()) + " exceeds the bound " +
                         std::to_string(enumeration_bound));
    min_raw_ = std::numeric_limits<double>::infinity();
    max_raw_ = -std::numeric_limits<double>::infinity();
    space_.enumerate([&](const PipelineConfig& c) {
        const double v = raw_value(c);
        min_raw_ = std::min(min_raw_, v);
        max_raw_ = std::max(max_raw_, v);
        return true;
    });
    if (!std::isfinite(min_raw_))
        throw SpaceError("synthetic environment: space has no valid configs");
}

double SyntheticEnvironment::raw_value(const PipelineConfig& config) const {
    double v = 0.0;
    for (std::size_t d = 0; d < space_.size(); ++d)
        v += unary_[d][config.indices[d]];
    for (const PairTerm& t : pairwise_)
        if (config.indices[t.dim_a] == t.val_a && config.indices[t.dim_b] == t.val_b)
            v += t.weight;
    return v;
}

double SyntheticEnvironment::noiseless_reward(const PipelineConfig& config) const {
    space_.require_valid(config);
    if (max_raw_ == min_raw_)
        return 0.5; // constant landscape: midpoint convention
    return (raw_value(config) - min_raw_) / (max_raw_ - min_raw_);
}

double SyntheticEnvironment::reward(const PipelineConfig& config) const {
    double r = noiseless_reward(config);
    if (noise_sigma_ > 0.0) {
        SplitRng rng(mix64(noise_seed_, fnv1a64(canonical_key(space_, config))));
        r += noise_sigma_ * rng.next_normal();
    }
    return std::clamp(r, 0.0, 1.0);
}

std::pair<PipelineConfig, double> SyntheticEnvironment::optimum() const {
    PipelineConfig best;
    std::string best_key;
    double best_reward = -std::numeric_limits<double>::infinity();
    space_.enumerate([&](const PipelineConfig& c) {
        const double r = noiseless_reward(c);
        const std::string key = canonical_key(space_, c);
        if (r > best_reward || (r == best_reward && key < best_key)) {
            best = c;
            best_key = key;
            best_reward = r;
        }
        return true;
    });
    return {best, best_reward};
}

double SyntheticEnvironment::uniform_mean_reward() const {
    double sum = 0.0;
    std::uint64_t n = 0;
    space_.enumerate([&](const PipelineConfig& c) {
        sum += noiseless_reward(c);
        ++n;
        return true;
    });
    return n ? sum / static_cast<double>(n) : 0.0;
}

std::string SyntheticEnvironment::digest() const {
    std::ostringstream os;
    os << space_.digest() << '|' << noise_sigma_ << '|' << noise_seed_ << '|';
    os.precision(17);
    for (const auto& dim : unary_) {
        for (double w : dim)
            os << w << ',';
        os << ';';
    }
    for (const PairTerm& t : pairwise_)
        os << t.dim_a << ':' << t.val_a << ':' << t.dim_b << ':' << t.val_b << ':' << t.weight
           << ';';
    return sha256_hex(os.str());
}

SyntheticEnvironment load_synthetic_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw SpaceError("cannot open synthetic environment file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw SpaceError("synthetic file " + path.string() + ": " + e.what());
    }
    SearchSpace space;
    if (doc.contains("space_file"))
        space = load_space_file(path.parent_path() / doc["space_file"].get<std::string>());
    else if (doc.contains("space") && doc["space"].is_string())
        space = resolve_space_arg(doc["space"].get<std::string>());
    else
        throw SpaceError("synthetic file " + path.string() +
                         ": needs 'space' (name) or 'space_file' (path)");

    std::vector<std::vector<double>> unary(space.size());
    for (std::size_t d = 0; d < space.size(); ++d)
        unary[d].assign(space.dimension(d).values.size(), 0.0);
    if (doc.contains("unary_weights")) {
        for (const auto& [dim_name, entries] : doc["unary_weights"].items()) {
            const std::size_t d = space.dimension_index(dim_name);
            for (const auto& [label, w] : entries.items()) {
                const auto& values = space.dimension(d).values;
                const auto it = std::find(values.begin(), values.end(), label);
                if (it == values.end())
                    throw SpaceError("synthetic file: unknown value '" + label +
                                     "' in dimension '" + dim_name + "'");
                unary[d][static_cast<std::size_t>(it - values.begin())] = w.get<double>();
            }
        }
    }
    std::vector<SyntheticEnvironment::PairTerm> pairwise;
    for (const json& jt : doc.value("pairwise_terms", json::array())) {
        SyntheticEnvironment::PairTerm t;
        t.dim_a = static_cast<std::uint32_t>(space.dimension_index(jt.at("dim_a").get<std::string>()));
        t.dim_b = static_cast<std::uint32_t>(space.dimension_index(jt.at("dim_b").get<std::string>()));
        auto value_index = [&](std::uint32_t d, const std::string& label) {
            const auto& values = space.dimension(d).values;
            const auto it = std::find(values.begin(), values.end(), label);
            if (it == values.end())
                throw SpaceError("synthetic file: unknown value '" + label + "'");
            return static_cast<std::uint32_t>(it - values.begin());
        };
        t.val_a = value_index(t.dim_a, jt.at("val_a").get<std::string>());
        t.val_b = value_index(t.dim_b, jt.at("val_b").get<std::string>());
        t.weight = jt.at("weight").get<double>();
        pairwise.push_back(t);
    }
    return SyntheticEnvironment(std::move(space), std::move(unary), std::move(pairwise),
                                doc.value("noise_sigma", 0.0),
                                doc.value("noise_seed", std::uint64_t{0}));
}

void save_synthetic_file(const SyntheticEnvironment& env, const std::filesystem::path& path) {
    json doc;
    doc["space"] = json::object();
    // Inline spaces are written next to the synthetic file.
    const std::filesystem::path space_path = path.string() + ".space.json";
    save_space_file(env.space(), space_path);
    doc["space_file"] = space_path.filename().string();
    doc["noise_sigma"] = env.noise_sigma();
    doc["noise_seed"] = env.noise_seed();
    doc["unary_weights"] = json::object();
    for (std::size_t d = 0; d < env.space().size(); ++d) {
        const Dimension& dim = env.space().dimension(d);
        json entries = json::object();
        for (std::size_t v = 0; v < dim.values.size(); ++v)
            entries[dim.values[v]] = env.unary()[d][v];
        doc["unary_weights"][dim.name] = std::move(entries);
    }
    doc["pairwise_terms"] = json::array();
    for (const auto& t : env.pairwise()) {
        doc["pairwise_terms"].push_back(
            {{"dim_a", env.space().dimension(t.dim_a).name},
             {"val_a", env.space().dimension(t.dim_a).values[t.val_a]},
             {"dim_b", env.space().dimension(t.dim_b).name},
             {"val_b", env.space().dimension(t.dim_b).values[t.val_b]},
             {"weight", t.weight}});
    }
    std::ofstream out(path);
    if (!out)
        throw SpaceError("cannot write synthetic environment file: " + path.string());
    out << doc.dump(2) << '\n';
}

SyntheticEnvironment make_random_synthetic(const SearchSpace& space, std::uint64_t seed,
                                           double noise_sigma, std::size_t pairwise_count) {
    SplitRng rng(mix64(seed, 0x5e17));
    std::vector<std::vector<double>> unary(space.size());
    for (std::size_t d = 0; d < space.size(); ++d) {
        unary[d].resize(space.dimension(d).values.size());
        for (double& w : unary[d])
            w = rng.next_double();
    }
    std::vector<SyntheticEnvironment::PairTerm> pairwise;
    for (std::size_t i = 0; i < pairwise_count && space.size() >= 2; ++i) {
        SyntheticEnvironment::PairTerm t;
        t.dim_a = static_cast<std::uint32_t>(rng.next_index(space.size()));
        do {
            t.dim_b = static_cast<std::uint32_t>(rng.next_index(space.size()));
        } while (t.dim_b == t.dim_a);
        if (t.dim_a > t.dim_b)
            std::swap(t.dim_a, t.dim_b);
        t.val_a = static_cast<std::uint32_t>(rng.next_index(space.dimension(t.dim_a).values.size()));
        t.val_b = static_cast<std::uint32_t>(rng.next_index(space.dimension(t.dim_b).values.size()));
        t.weight = rng.next_double() - 0.5;
        pairwise.push_back(t);
    }
    return SyntheticEnvironment(space, std::move(unary), std::move(pairwise), noise_sigma, seed);
}

} // namespace rag
