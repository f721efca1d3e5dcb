#pragma once

#include "raise/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rag {

struct SpaceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ModuleTag { rewriter, chunker, retriever, reranker, pruner, generator };

std::string_view to_string(ModuleTag tag);
ModuleTag module_tag_from_string(std::string_view name);

// One categorical search dimension: an ordered list of option labels.
// Numeric dimensions store their numeral as the label; optional modules carry
// an explicit "off" label instead of a separate boolean.
struct Dimension {
    std::string name;
    ModuleTag module_tag = ModuleTag::generator;
    std::vector<std::string> values;
};

// A point in the space: one value index per dimension, aligned with the
// owning space's dimension order. Immutable by convention once proposed.
struct PipelineConfig {
    std::vector<std::uint32_t> indices;

    bool operator==(const PipelineConfig&) const = default;
};

class SearchSpace;

// Validity predicates are registered by name so space definition files can
// reference them.
struct Constraint {
    std::string name;
    std::function<bool(const SearchSpace&, const PipelineConfig&)> pred;
};

Constraint lookup_constraint(std::string_view name);

class SearchSpace {
public:
    SearchSpace() = default;
    SearchSpace(std::vector<Dimension> dims, std::vector<Constraint> constraints);

    const std::vector<Dimension>& dimensions() const { return dims_; }
    const std::vector<Constraint>& constraints() const { return constraints_; }
    std::size_t size() const { return dims_.size(); }

    const Dimension& dimension(std::size_t i) const { return dims_.at(i); }
    std::size_t dimension_index(std::string_view name) const; // throws SpaceError
    bool has_dimension(std::string_view name) const;

    bool valid(const PipelineConfig& config) const;
    // Like valid() but assignment shape errors throw instead of returning false.
    void require_valid(const PipelineConfig& config) const;

    const std::string& value_of(const PipelineConfig& config, std::string_view dim_name) const;

    // Product of per-dimension value counts, ignoring constraints.
    std::uint64_t product_cardinality() const;
    // Constrained cardinality. Falls back to the plain product when there are
    // no constraints; otherwise counts by exhaustive enumeration, refusing
    // spaces whose product exceeds `enumeration_bound`.
    std::uint64_t cardinality(std::uint64_t enumeration_bound = 2000000) const;

    // Visit every valid config in odometer order (last dimension fastest).
    // The callback may return false to stop early.
    void enumerate(const std::function<bool(const PipelineConfig&)>& fn) const;

    // Stable content digest over dimensions and constraint names.
    std::string digest() const;

private:
    std::vector<Dimension> dims_;
    std::vector<Constraint> constraints_;
};

// The Table-1 text search space: 9 dimensions, "off" options for rewriter,
// reranker and pruner, and the overlap < chunk-size guard.
SearchSpace default_text_space();

// Uniform per-dimension draw, resampled until the constraints pass (bounded
// retries; throws SpaceError when the space looks unsatisfiable).
PipelineConfig sample_uniform(const SearchSpace& space, SplitRng& rng);

// All valid configs at Hamming distance exactly 1, in (dimension order,
// value order).
std::vector<PipelineConfig> neighbors(const SearchSpace& space, const PipelineConfig& config);

// "name=value;..." sorted by dimension name, with %-escaping of the
// delimiters. Equal configs give equal keys; this is the cache identity.
std::string canonical_key(const SearchSpace& space, const PipelineConfig& config);
PipelineConfig parse_canonical_key(const SearchSpace& space, std::string_view key);

SearchSpace load_space_file(const std::filesystem::path& path);
void save_space_file(const SearchSpace& space, const std::filesystem::path& path);

// Space definition accepted by the CLI: a path or the literal "default-text".
SearchSpace resolve_space_arg(const std::string& arg);

} // namespace rag
