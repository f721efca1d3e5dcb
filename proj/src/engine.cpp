#include "raise/engine.hpp"

#include "raise/digest.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace rag {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json report_to_json(const MetricReport& r) {
    json doc = {{"rouge_l", r.rouge_l}, {"meteor", r.meteor},   {"token_f1", r.token_f1},
                {"bleu", r.bleu},       {"weighted", r.weighted}};
    if (r.em)
        doc["em"] = *r.em;
    if (r.bertscore_recall)
        doc["bertscore_recall"] = *r.bertscore_recall;
    if (r.judge)
        doc["judge"] = *r.judge;
    if (!r.notes.empty())
        doc["notes"] = r.notes;
    return doc;
}

MetricReport report_from_json(const json& doc) {
    MetricReport r;
    r.rouge_l = doc.value("rouge_l", 0.0);
    r.meteor = doc.value("meteor", 0.0);
    r.token_f1 = doc.value("token_f1", 0.0);
    r.bleu = doc.value("bleu", 0.0);
    r.weighted = doc.value("weighted", 0.0);
    if (doc.contains("em"))
        r.em = doc["em"].get<int>();
    if (doc.contains("bertscore_recall"))
        r.bertscore_recall = doc["bertscore_recall"].get<double>();
    if (doc.contains("judge"))
        r.judge = doc["judge"].get<int>();
    if (doc.contains("notes"))
        r.notes = doc["notes"].get<std::vector<std::string>>();
    return r;
}

json trial_to_json(const TrialRecord& t) {
    json doc = {{"index", t.index},         {"config_key", t.config_key},
                {"reward", t.reward},       {"cache_hit", t.cache_hit},
                {"failed", t.failed},       {"wall_time_s", t.wall_time_s},
                {"metrics", report_to_json(t.aggregate)}};
    if (!t.failure_detail.empty())
        doc["failure_detail"] = t.failure_detail;
    return doc;
}

TrialRecord trial_from_json(const json& doc) {
    TrialRecord t;
    t.index = doc.value("index", 0);
    t.config_key = doc.value("config_key", "");
    t.reward = doc.value("reward", 0.0);
    t.cache_hit = doc.value("cache_hit", false);
    t.failed = doc.value("failed", false);
    t.wall_time_s = doc.value("wall_time_s", 0.0);
    t.failure_detail = doc.value("failure_detail", "");
    if (doc.contains("metrics"))
        t.aggregate = report_from_json(doc["metrics"]);
    return t;
}

} // namespace

double RunRecord::best_reward() const {
    return best_so_far.empty() ? 0.0 : best_so_far.back();
}

int RunRecord::best_trial_index() const {
    int best = 0;
    for (std::size_t i = 1; i < trials.size(); ++i)
        if (trials[i].reward > trials[best].reward)
            best = static_cast<int>(i);
    return trials.empty() ? -1 : best;
}

std::string CacheKey::digest() const {
    return sha256_hex(config_key + '\x1e' + qa_hash + '\x1e' + corpus_hash + '\x1e' + modality +
                      '\x1e' + eval_mode);
}

EvalCache::EvalCache(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(*dir_);
}

std::optional<CacheValue> EvalCache::get(const CacheKey& key) {
    const std::string digest = key.digest();
    {
        std::lock_guard lock(mutex_);
        auto it = memory_.find(digest);
        if (it != memory_.end())
            return it->second;
    }
    if (!dir_)
        return std::nullopt;
    const fs::path path = *dir_ / (digest + ".json");
    std::ifstream in(path);
    if (!in)
        return std::nullopt;
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.contains("reward") || !doc.contains("metrics")) {
        // Corrupt entry: drop it and treat as a miss.
        std::error_code ec;
        fs::remove(path, ec);
        std::cerr << "warning: dropped corrupt cache entry " << path << "\n";
        return std::nullopt;
    }
    CacheValue value;
    value.reward = doc["reward"].get<double>();
    value.aggregate = report_from_json(doc["metrics"]);
    std::lock_guard lock(mutex_);
    memory_[digest] = value;
    return value;
}

void EvalCache::put(const CacheKey& key, const CacheValue& value) {
    const std::string digest = key.digest();
    {
        std::lock_guard lock(mutex_);
        memory_[digest] = value;
    }
    if (!dir_)
        return;
    json doc = {{"config_key", key.config_key},
                {"qa_hash", key.qa_hash},
                {"corpus_hash", key.corpus_hash},
                {"modality", key.modality},
                {"eval_mode", key.eval_mode},
                {"reward", value.reward},
                {"metrics", report_to_json(value.aggregate)}};
    const fs::path path = *dir_ / (digest + ".json");
    const fs::path tmp = *dir_ / (digest + ".tmp" + std::to_string(
                                      std::hash<std::thread::id>{}(std::this_thread::get_id())));
    {
        std::ofstream out(tmp);
        out << doc.dump() << '\n';
    }
    std::error_code ec;
    fs::rename(tmp, path, ec); // concurrent writers carry identical values
    if (ec)
        fs::remove(tmp, ec);
}

PipelineEvaluator::PipelineEvaluator(const SearchSpace& space, const Environment& env,
                                     Gateway gateway, MetricWeights weights,
                                     PipelineEvaluatorOptions options)
    : space_(space), env_(env), gateway_(std::move(gateway)), weights_(std::move(weights)),
      options_(options) {
    if (options_.workers < 1)
        options_.workers = 1;
    if (options_.time_limit_s <= 0.0)
        options_.time_limit_s = 60.0 * static_cast<double>(env_.qa.size());
}

CacheKey PipelineEvaluator::key_for(const std::string& config_key) const {
    return {config_key, env_.qa_file_hash, env_.corpus_file_hash, env_.modality,
            weights_.digest()};
}

EvalOutcome PipelineEvaluator::evaluate(const PipelineConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = env_.qa.size();
    std::vector<PipelineTrace> traces(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || abort.load())
                return;
            traces[i] = run_pipeline(space_, config, env_.qa[i].question, env_, gateway_,
                                     index_cache_);
            if (traces[i].unrecoverable)
                abort.store(true);
            if (seconds_since(start) > options_.time_limit_s)
                abort.store(true);
        }
    };
    if (options_.workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int count = std::min<int>(options_.workers, static_cast<int>(n));
        pool.reserve(static_cast<std::size_t>(count));
        for (int w = 0; w < count; ++w)
            pool.emplace_back(worker);
        for (std::thread& t : pool)
            t.join();
    }

    EvalOutcome out;
    if (seconds_since(start) > options_.time_limit_s) {
        out.failed = true;
        out.failure_detail = "per-config time limit exceeded";
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (traces[i].unrecoverable) {
            out.failed = true;
            out.failure_detail = "item " + env_.qa[i].id + ": " + traces[i].unrecoverable_detail;
            return out;
        }
    }

    std::vector<ScoredItem> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        items.push_back({traces[i].answer, env_.qa[i].references});
    const DatasetScore score = score_dataset(items, weights_);
    out.reward = score.reward;
    out.aggregate = aggregate_reports(score.items);

    if (options_.trace_dump_dir) {
        fs::create_directories(*options_.trace_dump_dir);
        const std::string key_digest = sha256_hex(canonical_key(space_, config));
        std::ofstream dump(*options_.trace_dump_dir / (key_digest.substr(0, 16) + ".jsonl"));
        for (std::size_t i = 0; i < n; ++i) {
            const PipelineTrace& t = traces[i];
            json retrieved = json::array(), reranked = json::array();
            for (const ScoredChunkRef& r : t.retrieved)
                retrieved.push_back({{"doc_id", r.doc_id}, {"chunk", r.chunk_index}, {"score", r.score}});
            for (const ScoredChunkRef& r : t.reranked)
                reranked.push_back({{"doc_id", r.doc_id}, {"chunk", r.chunk_index}, {"score", r.score}});
            json doc = {{"qa_id", env_.qa[i].id},
                        {"original_query", t.original_query},
                        {"rewritten_query", t.rewritten_query},
                        {"retrieved", retrieved},
                        {"reranked", reranked},
                        {"pruned_context", t.pruned_context},
                        {"answer", t.answer},
                        {"failures", t.failures},
                        {"timings",
                         {{"rewrite_s", t.timings.rewrite_s},
                          {"retrieve_s", t.timings.retrieve_s},
                          {"rerank_s", t.timings.rerank_s},
                          {"prune_s", t.timings.prune_s},
                          {"generate_s", t.timings.generate_s}}}};
            dump << doc.dump() << '\n';
        }
    }
    return out;
}

SyntheticEvaluator::SyntheticEvaluator(const SyntheticEnvironment& env, std::string name)
    : env_(env), name_(std::move(name)), digest_(env.digest()) {}

CacheKey SyntheticEvaluator::key_for(const std::string& config_key) const {
    return {config_key, digest_, digest_, "synthetic", "reward"};
}

EvalOutcome SyntheticEvaluator::evaluate(const PipelineConfig& config) {
    EvalOutcome out;
    out.reward = env_.reward(config);
    out.aggregate.weighted = out.reward;
    return out;
}

RunRecord run_search(Evaluator& evaluator, const SearchSpace& space, Controller& controller,
                     EvalCache& cache, const MetricWeights& weights) {
    RunRecord record;
    record.env_name = evaluator.env_name();
    record.space_digest = space.digest();
    record.algorithm = controller.id();
    record.budget = controller.budget();
    record.weights_digest = weights.digest();
    {
        const CacheKey probe = evaluator.key_for("");
        record.qa_hash = probe.qa_hash;
        record.corpus_hash = probe.corpus_hash;
        record.modality = probe.modality;
    }

    const auto run_start = std::chrono::steady_clock::now();
    double trial_time_sum = 0.0;
    double best = 0.0;
    for (int t = 0; t < controller.budget(); ++t) {
        const auto trial_start = std::chrono::steady_clock::now();
        TrialRecord trial;
        trial.index = t;
        trial.config = controller.propose();
        trial.config_key = canonical_key(space, trial.config);
        const CacheKey key = evaluator.key_for(trial.config_key);
        if (std::optional<CacheValue> hit = cache.get(key)) {
            trial.cache_hit = true;
            trial.reward = hit->reward;
            trial.aggregate = hit->aggregate;
        } else {
            const EvalOutcome outcome = evaluator.evaluate(trial.config);
            if (outcome.failed) {
                trial.failed = true;
                trial.reward = 0.0; // failure: zero reward, budget still spent
                trial.failure_detail = outcome.failure_detail;
            } else {
                trial.reward = outcome.reward;
                trial.aggregate = outcome.aggregate;
                cache.put(key, {outcome.reward, outcome.aggregate});
            }
        }
        controller.observe(trial.config, trial.reward);
        trial.wall_time_s = seconds_since(trial_start);
        trial_time_sum += trial.wall_time_s;
        best = std::max(best, trial.reward);
        record.best_so_far.push_back(best);
        if (!trial.failed)
            ++record.eval_count;
        record.trials.push_back(std::move(trial));
    }
    record.total_time_s = seconds_since(run_start);
    record.overhead_s = std::max(0.0, record.total_time_s - trial_time_sum);
    return record;
}

void write_run(const RunRecord& record, const SearchSpace& space, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    json trials = json::array();
    for (const TrialRecord& t : record.trials)
        trials.push_back(trial_to_json(t));
    json best_so_far = json::array();
    for (double b : record.best_so_far)
        best_so_far.push_back(b);
    json doc = {{"env_name", record.env_name},
                {"qa_hash", record.qa_hash},
                {"corpus_hash", record.corpus_hash},
                {"modality", record.modality},
                {"space_digest", record.space_digest},
                {"algorithm", record.algorithm},
                {"params", record.params},
                {"seed", record.seed},
                {"budget", record.budget},
                {"weights_digest", record.weights_digest},
                {"trials", trials},
                {"best_so_far", best_so_far},
                {"total_time_s", record.total_time_s},
                {"overhead_s", record.overhead_s},
                {"eval_count", record.eval_count}};
    {
        std::ofstream meta(out_dir / "run.meta");
        meta << doc.dump(2) << '\n';
    }
    {
        std::ofstream log(out_dir / "trials.log");
        for (const TrialRecord& t : record.trials)
            log << trial_to_json(t).dump() << '\n';
    }
    {
        const int best = record.best_trial_index();
        json best_doc;
        best_doc["config_key"] = best >= 0 ? record.trials[best].config_key : "";
        best_doc["reward"] = best >= 0 ? record.trials[best].reward : 0.0;
        if (best >= 0) {
            json assignment = json::object();
            const PipelineConfig& config = record.trials[best].config;
            if (config.indices.size() == space.size())
                for (std::size_t d = 0; d < space.size(); ++d)
                    assignment[space.dimension(d).name] =
                        space.dimension(d).values[config.indices[d]];
            best_doc["assignment"] = assignment;
        }
        std::ofstream out(out_dir / "best.config");
        out << best_doc.dump(2) << '\n';
    }
}

RunRecord read_run_meta(const fs::path& meta_path) {
    std::ifstream in(meta_path);
    if (!in)
        throw LoadError("cannot open run meta: " + meta_path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw LoadError("corrupt run meta: " + meta_path.string());
    RunRecord record;
    record.env_name = doc.value("env_name", "");
    record.qa_hash = doc.value("qa_hash", "");
    record.corpus_hash = doc.value("corpus_hash", "");
    record.modality = doc.value("modality", "text");
    record.space_digest = doc.value("space_digest", "");
    record.algorithm = doc.value("algorithm", "");
    if (doc.contains("params"))
        record.params = doc["params"].get<std::map<std::string, double>>();
    record.seed = doc.value("seed", std::uint64_t{0});
    record.budget = doc.value("budget", 0);
    record.weights_digest = doc.value("weights_digest", "");
    for (const json& jt : doc.value("trials", json::array()))
        record.trials.push_back(trial_from_json(jt));
    for (const json& jb : doc.value("best_so_far", json::array()))
        record.best_so_far.push_back(jb.get<double>());
    record.total_time_s = doc.value("total_time_s", 0.0);
    record.overhead_s = doc.value("overhead_s", 0.0);
    record.eval_count = doc.value("eval_count", 0);
    return record;
}

std::vector<RunRecord> load_runs(const fs::path& dir) {
    std::vector<fs::path> metas;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename() == "run.meta")
            metas.push_back(entry.path());
    std::sort(metas.begin(), metas.end());
    std::vector<RunRecord> records;
    records.reserve(metas.size());
    for (const fs::path& p : metas)
        records.push_back(read_run_meta(p));
    return records;
}

} // namespace rag
