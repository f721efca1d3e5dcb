#pragma once

#include "raise/search_space.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace rag {

// Tabular reward landscape over a search space, with a known enumerable
// optimum. Stands in for the QA environments when verifying controllers:
// rewards are deterministic, instant, and need no model.
class SyntheticEnvironment {
public:
    struct PairTerm {
        std::uint32_t dim_a = 0, val_a = 0;
        std::uint32_t dim_b = 0, val_b = 0;
        double weight = 0.0;
    };

    // unary[d][v] is the utility of value v in dimension d. The raw value of
    // a config is the unary sum plus all matching pairwise terms; rewards are
    // affinely rescaled so the enumerated min maps to 0 and the max to 1
    // (constant landscapes map everywhere to 0.5).
    SyntheticEnvironment(SearchSpace space, std::vector<std::vector<double>> unary,
                         std::vector<PairTerm> pairwise, double noise_sigma,
                         std::uint64_t noise_seed, std::uint64_t enumeration_bound = 1000000);

    const SearchSpace& space() const { return space_; }
    double noise_sigma() const { return noise_sigma_; }
    std::uint64_t noise_seed() const { return noise_seed_; }
    const std::vector<std::vector<double>>& unary() const { return unary_; }
    const std::vector<PairTerm>& pairwise() const { return pairwise_; }

    double raw_value(const PipelineConfig& config) const;
    double noiseless_reward(const PipelineConfig& config) const;
    // Noise is keyed by (noise_seed, canonical key), so re-querying one
    // config always returns the same reward.
    double reward(const PipelineConfig& config) const;

    // Exhaustive noiseless argmax; ties break toward the lexicographically
    // smaller canonical key.
    std::pair<PipelineConfig, double> optimum() const;

    // Mean noiseless reward of a uniform draw, by enumeration.
    double uniform_mean_reward() const;

    // Content digest; stands in for the dataset hashes in cache keys.
    std::string digest() const;

private:
    SearchSpace space_;
    std::vector<std::vector<double>> unary_;
    std::vector<PairTerm> pairwise_;
    double noise_sigma_ = 0.0;
    std::uint64_t noise_seed_ = 0;
    double min_raw_ = 0.0;
    double max_raw_ = 0.0;
};

SyntheticEnvironment load_synthetic_file(const std::filesystem::path& path);
void save_synthetic_file(const SyntheticEnvironment& env, const std::filesystem::path& path);

// Random landscape for a given space: unary weights uniform in [0,1], plus
// `pairwise_count` random cross terms in [-0.5, 0.5].
SyntheticEnvironment make_random_synthetic(const SearchSpace& space, std::uint64_t seed,
                                           double noise_sigma, std::size_t pairwise_count);

} // namespace rag
