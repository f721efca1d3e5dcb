#pragma once

#include "raise/controllers.hpp"
#include "raise/environment.hpp"
#include "raise/gateway.hpp"
#include "raise/metrics.hpp"
#include "raise/pipeline.hpp"
#include "raise/search_space.hpp"
#include "raise/synthetic.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rag {

struct TrialRecord {
    int index = 0;
    PipelineConfig config;
    std::string config_key;
    double reward = 0.0;
    MetricReport aggregate;
    bool cache_hit = false;
    bool failed = false; // failed => reward 0; the trial still spends budget
    double wall_time_s = 0.0;
    std::string failure_detail;
};

struct RunRecord {
    std::string env_name;
    std::string qa_hash;
    std::string corpus_hash;
    std::string modality;
    std::string space_digest;
    std::string algorithm;
    std::map<std::string, double> params;
    std::uint64_t seed = 0;
    int budget = 0;
    std::string weights_digest;
    std::vector<TrialRecord> trials;
    std::vector<double> best_so_far; // running max of trial rewards
    double total_time_s = 0.0;
    double overhead_s = 0.0; // total minus the summed trial times
    int eval_count = 0;      // completed (non-failed) trials

    double best_reward() const;
    int best_trial_index() const;
};

// Identity of one evaluation: configuration, dataset bytes, modality and
// scoring rule. Equal keys are interchangeable results.
struct CacheKey {
    std::string config_key;
    std::string qa_hash;
    std::string corpus_hash;
    std::string modality;
    std::string eval_mode; // metric weights digest

    std::string digest() const;
};

struct CacheValue {
    double reward = 0.0;
    MetricReport aggregate;
};

// In-memory map with an optional on-disk store (one JSON file per key;
// corrupt entries are dropped as misses). Safe for concurrent runs; writes
// go through a temp file and rename.
class EvalCache {
public:
    EvalCache() = default;
    explicit EvalCache(std::filesystem::path dir);

    std::optional<CacheValue> get(const CacheKey& key);
    void put(const CacheKey& key, const CacheValue& value);

private:
    std::optional<std::filesystem::path> dir_;
    std::mutex mutex_;
    std::map<std::string, CacheValue> memory_;
};

struct EvalOutcome {
    double reward = 0.0;
    MetricReport aggregate;
    bool failed = false;
    std::string failure_detail;
};

// One environment bound to one scoring rule; what a controller searches over.
class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual EvalOutcome evaluate(const PipelineConfig& config) = 0;
    virtual CacheKey key_for(const std::string& config_key) const = 0;
    virtual const std::string& env_name() const = 0;
};

struct PipelineEvaluatorOptions {
    int workers = 1;
    // Per-config wall-clock ceiling; <= 0 picks items x the 60 s per-call
    // timeout.
    double time_limit_s = 0.0;
    std::optional<std::filesystem::path> trace_dump_dir;
};

// Runs the full pipeline over every QA item (concurrently up to `workers`),
// then scores with the dataset objective. Items aggregate in QA order no
// matter which worker finished first.
class PipelineEvaluator : public Evaluator {
public:
    PipelineEvaluator(const SearchSpace& space, const Environment& env, Gateway gateway,
                      MetricWeights weights, PipelineEvaluatorOptions options = {});

    EvalOutcome evaluate(const PipelineConfig& config) override;
    CacheKey key_for(const std::string& config_key) const override;
    const std::string& env_name() const override { return env_.name; }

private:
    const SearchSpace& space_;
    const Environment& env_;
    Gateway gateway_;
    MetricWeights weights_;
    PipelineEvaluatorOptions options_;
    IndexCache index_cache_;
};

class SyntheticEvaluator : public Evaluator {
public:
    SyntheticEvaluator(const SyntheticEnvironment& env, std::string name = "synthetic");

    EvalOutcome evaluate(const PipelineConfig& config) override;
    CacheKey key_for(const std::string& config_key) const override;
    const std::string& env_name() const override { return name_; }

private:
    const SyntheticEnvironment& env_;
    std::string name_;
    std::string digest_;
};

// The budgeted loop: exactly controller.budget() propose/observe cycles, the
// cache consulted before every evaluation, failures scored zero without
// aborting the run.
RunRecord run_search(Evaluator& evaluator, const SearchSpace& space, Controller& controller,
                     EvalCache& cache, const MetricWeights& weights);

// --- run log I/O -----------------------------------------------------------------

// Writes run.meta (full JSON record), trials.log (one JSON line per trial)
// and best.config into `out_dir`.
void write_run(const RunRecord& record, const SearchSpace& space,
               const std::filesystem::path& out_dir);

RunRecord read_run_meta(const std::filesystem::path& meta_path);

// All run.meta files under `dir`, recursively, in sorted path order.
std::vector<RunRecord> load_runs(const std::filesystem::path& dir);

} // namespace rag
