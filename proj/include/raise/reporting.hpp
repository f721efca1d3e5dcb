#pragma once

#include "raise/engine.hpp"
#include "raise/search_space.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace rag {

// One env x algorithm cell of the interaction table: best-of-budget scores
// across seeds with their mean and population standard deviation.
struct InteractionCell {
    std::string env;
    std::string algorithm;
    std::vector<double> seed_scores;
    double mean = 0.0;
    double stddev = 0.0; // divisor n, not n-1
};

double population_std(const std::vector<double>& xs);

// Group run records by env x algorithm (best-of-budget per record). Envs and
// algorithms keep first-appearance order.
std::vector<InteractionCell> interaction_table(const std::vector<RunRecord>& records);

// Build cells directly from per-seed scores (fixture-style input).
InteractionCell make_cell(std::string env, std::string algorithm, std::vector<double> scores);

struct AlgorithmSummary {
    std::string algorithm;
    int wins = 0;        // env columns where this algorithm attains the max mean
    double avg_rank = 0; // mean of within-env ranks (ties share the average rank)
};

// Ranks by mean descending within each env; mean ties within 1e-9 share both
// the averaged rank and the win. Algorithms missing from some env are ranked
// over their present columns, with a coverage warning appended.
std::vector<AlgorithmSummary> wins_and_ranks(const std::vector<InteractionCell>& cells,
                                             std::vector<std::string>* warnings = nullptr);

// Per (algorithm, dimension): normalized frequency of each option label among
// the runs' best configs.
struct PreferenceMatrix {
    std::vector<std::string> algorithms;
    std::vector<std::string> dimensions;
    // freq[algorithm][dimension][label] -> fraction of contributing runs
    std::map<std::string, std::map<std::string, std::map<std::string, double>>> freq;
    std::map<std::string, int> runs_per_algorithm;
};

PreferenceMatrix module_preferences(const std::vector<RunRecord>& records,
                                    const SearchSpace& space);

struct BaselineDelta {
    std::string algorithm;
    double best = 0.0;  // best-of-budget
    double delta = 0.0; // best minus the random run's all-trial mean
};

// Baseline = mean reward over ALL trials of the random-search run(s) on the
// same env (not their best-of-budget). Throws when no random run is present.
std::vector<BaselineDelta> random_baseline_delta(const std::vector<RunRecord>& records,
                                                 const std::string& random_id = "random");

struct AblationSpec {
    enum class Kind { remove_module, fix_dimension };
    Kind kind = Kind::remove_module;
    std::string target;    // module tag or dimension name
    std::string fix_value; // fix_dimension only

    static AblationSpec load(const std::filesystem::path& path);
};

// remove_module collapses the module's prompt/model dimensions to "off" (and
// its top-k to the maximal value, which makes the stage inert); fix_dimension
// collapses one dimension to the given value. Everything else is untouched,
// so ablated configs stay schema-compatible with the full space.
SearchSpace build_ablation_space(const SearchSpace& space, const AblationSpec& spec);

struct StabilityRow {
    std::size_t size = 0;
    std::string algorithm;
    double mean = 0.0;
    double stddev = 0.0; // cross-seed dispersion of best scores
    int seeds = 0;
};

// Dispersion summary of best scores grouped by (subset size, algorithm).
std::vector<StabilityRow> stability_summarize(
    const std::vector<std::tuple<std::size_t, std::string, double>>& size_alg_best);

// --- plot-ready tabular emitters (TSV; byte-stable for identical inputs) ------

void emit_trajectories(const std::vector<RunRecord>& records, std::ostream& os);
void emit_interaction_table(const std::vector<InteractionCell>& cells,
                            const std::vector<AlgorithmSummary>& summaries, std::ostream& os);
void emit_preferences(const PreferenceMatrix& matrix, const SearchSpace& space, std::ostream& os);
void emit_baseline_deltas(const std::vector<BaselineDelta>& deltas, double baseline,
                          std::ostream& os);
void emit_stability(const std::vector<StabilityRow>& rows, std::ostream& os);

} // namespace rag
