// Command-line surface: budgeted searches over RAG pipeline configurations,
// batch benchmarks, ablations, proxy-size stability studies, metric scoring
// and report generation over run logs.

#include "raise/controllers.hpp"
#include "raise/engine.hpp"
#include "raise/environment.hpp"
#include "raise/gateway.hpp"
#include "raise/metrics.hpp"
#include "raise/reporting.hpp"
#include "raise/search_space.hpp"
#include "raise/synthetic.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonRunArgs {
    std::string space_arg = "default-text";
    std::string qa_path, corpus_path, synthetic_path;
    std::string gateway_config;
    std::string weights_spec = "default";
    std::string cache_dir;
    std::string out_dir = "runs";
    int workers = 1;
    double time_limit_s = 0.0;
    std::string dump_traces_dir;
    std::string env_name;
    std::size_t subsample_n = 0; // 0 -> use the full QA set
    std::uint64_t subsample_seed = 42;
    bool subsample_no_shuffle = false;
};

void add_common_options(CLI::App* cmd, CommonRunArgs& args) {
    cmd->add_option("--space", args.space_arg, "Space definition file or 'default-text'");
    cmd->add_option("--qa", args.qa_path, "QA file (line-delimited JSON)");
    cmd->add_option("--corpus", args.corpus_path, "Corpus file (line-delimited JSON)");
    cmd->add_option("--synthetic", args.synthetic_path, "Synthetic environment definition file");
    cmd->add_option("--gateway", args.gateway_config, "Gateway config file (default: mock+hash)");
    cmd->add_option("--weights", args.weights_spec, "Metric weights, e.g. rouge_l=0.25,...");
    cmd->add_option("--cache", args.cache_dir, "On-disk evaluation cache directory");
    cmd->add_option("--out", args.out_dir, "Output directory for run logs");
    cmd->add_option("--workers", args.workers, "Concurrent per-question evaluations");
    cmd->add_option("--time-limit", args.time_limit_s, "Per-config time limit in seconds");
    cmd->add_option("--dump-traces", args.dump_traces_dir, "Directory for per-question traces");
    cmd->add_option("--env-name", args.env_name, "Override the environment name");
    cmd->add_option("--subsample", args.subsample_n, "Use a seeded QA subset of this size");
    cmd->add_option("--subsample-seed", args.subsample_seed, "Subset seed (default 42)");
    cmd->add_flag("--subsample-stored-order", args.subsample_no_shuffle,
                  "Take the stored-order prefix instead of shuffling");
}

rag::Gateway resolve_gateway(const CommonRunArgs& args) {
    if (args.gateway_config.empty())
        return rag::make_mock_gateway();
    return rag::make_gateway(rag::load_gateway_config(args.gateway_config));
}

struct ResolvedEnv {
    std::unique_ptr<rag::Environment> env;
    std::unique_ptr<rag::SyntheticEnvironment> synthetic;
};

ResolvedEnv resolve_env(const CommonRunArgs& args) {
    ResolvedEnv resolved;
    if (!args.synthetic_path.empty()) {
        resolved.synthetic = std::make_unique<rag::SyntheticEnvironment>(
            rag::load_synthetic_file(args.synthetic_path));
        return resolved;
    }
    if (args.qa_path.empty() || args.corpus_path.empty())
        throw CLI::ValidationError("need --qa and --corpus, or --synthetic");
    resolved.env = std::make_unique<rag::Environment>(
        rag::load_environment(args.qa_path, args.corpus_path));
    if (args.subsample_n > 0)
        *resolved.env = rag::subsample(*resolved.env, args.subsample_n, args.subsample_seed,
                                       !args.subsample_no_shuffle);
    if (!args.env_name.empty())
        resolved.env->name = args.env_name;
    return resolved;
}

rag::RunRecord execute_one(const CommonRunArgs& args, const rag::SearchSpace& space,
                             const std::string& algo, std::uint64_t seed, int budget,
                             const rag::ControllerParams& params, rag::EvalCache& cache,
                             const ResolvedEnv& resolved, const rag::MetricWeights& weights) {
    auto controller = rag::make_controller(algo, space, seed, budget, params);
    std::unique_ptr<rag::Evaluator> evaluator;
    rag::Gateway gateway;
    if (resolved.synthetic) {
        evaluator = std::make_unique<rag::SyntheticEvaluator>(
            *resolved.synthetic, args.env_name.empty() ? "synthetic" : args.env_name);
    } else {
        gateway = resolve_gateway(args);
        rag::PipelineEvaluatorOptions options;
        options.workers = args.workers;
        options.time_limit_s = args.time_limit_s;
        if (!args.dump_traces_dir.empty())
            options.trace_dump_dir = fs::path(args.dump_traces_dir);
        evaluator = std::make_unique<rag::PipelineEvaluator>(space, *resolved.env, gateway,
                                                               weights, options);
    }
    rag::RunRecord record = rag::run_search(*evaluator, space, *controller, cache, weights);
    record.seed = seed;
    record.params = params.values;
    return record;
}

std::string run_dir_name(const rag::RunRecord& record) {
    std::ostringstream os;
    os << record.env_name << "__" << record.algorithm << "__seed" << record.seed;
    return os.str();
}

rag::ControllerParams parse_params_file(const std::string& path, std::string* algo) {
    rag::ControllerParams params;
    if (path.empty())
        return params;
    std::ifstream in(path);
    if (!in)
        throw CLI::ValidationError("cannot open run config: " + path);
    json doc;
    in >> doc;
    if (algo && doc.contains("algorithm"))
        *algo = doc["algorithm"].get<std::string>();
    if (doc.contains("params"))
        for (const auto& [key, value] : doc["params"].items())
            params.values[key] = value.get<double>();
    return params;
}

int cmd_run(const CommonRunArgs& args, std::string algo, std::uint64_t seed, int budget,
            const std::string& run_config) {
    rag::ControllerParams params = parse_params_file(run_config, &algo);
    const rag::SearchSpace space = rag::resolve_space_arg(args.space_arg);
    const ResolvedEnv resolved = resolve_env(args);
    rag::EvalCache cache = args.cache_dir.empty() ? rag::EvalCache()
                                                    : rag::EvalCache(args.cache_dir);
    const rag::MetricWeights weights = rag::MetricWeights::parse(args.weights_spec);
    const rag::RunRecord record =
        execute_one(args, space, algo, seed, budget, params, cache, resolved, weights);
    const fs::path out = fs::path(args.out_dir) / run_dir_name(record);
    rag::write_run(record, space, out);
    std::cout << record.env_name << " " << record.algorithm << " seed=" << record.seed
              << " best=" << record.best_reward() << " evals=" << record.eval_count
              << " total_s=" << record.total_time_s << "\n"
              << "wrote " << out.string() << "\n";
    return 0;
}

struct ManifestEnv {
    std::string name;
    std::string qa, corpus, synthetic;
};

struct Manifest {
    std::vector<ManifestEnv> envs;
    std::vector<std::string> algorithms;
    std::vector<std::uint64_t> seeds = {11, 22, 33};
    int budget = 30;
    std::string weights = "default";
};

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw CLI::ValidationError("cannot open manifest: " + path);
    json doc;
    in >> doc;
    Manifest m;
    for (const json& je : doc.at("envs")) {
        ManifestEnv env;
        env.name = je.value("name", "");
        env.qa = je.value("qa", "");
        env.corpus = je.value("corpus", "");
        env.synthetic = je.value("synthetic", "");
        m.envs.push_back(std::move(env));
    }
    if (doc.contains("algorithms"))
        m.algorithms = doc["algorithms"].get<std::vector<std::string>>();
    else
        m.algorithms = rag::controller_ids();
    if (doc.contains("seeds"))
        m.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    m.budget = doc.value("budget", 30);
    m.weights = doc.value("weights", std::string("default"));
    return m;
}

int run_matrix(const CommonRunArgs& base_args, const Manifest& manifest,
               const rag::SearchSpace& space) {
    rag::EvalCache cache = base_args.cache_dir.empty() ? rag::EvalCache()
                                                         : rag::EvalCache(base_args.cache_dir);
    const rag::MetricWeights weights = rag::MetricWeights::parse(manifest.weights);
    for (const ManifestEnv& env : manifest.envs) {
        CommonRunArgs args = base_args;
        args.qa_path = env.qa;
        args.corpus_path = env.corpus;
        args.synthetic_path = env.synthetic;
        args.env_name = env.name;
        const ResolvedEnv resolved = resolve_env(args);
        for (const std::string& algo : manifest.algorithms) {
            for (std::uint64_t seed : manifest.seeds) {
                rag::RunRecord record = execute_one(args, space, algo, seed, manifest.budget,
                                                      {}, cache, resolved, weights);
                const fs::path out = fs::path(args.out_dir) / run_dir_name(record);
                rag::write_run(record, space, out);
                std::cout << record.env_name << " " << algo << " seed=" << seed
                          << " best=" << record.best_reward() << "\n";
            }
        }
    }
    return 0;
}

int cmd_bench(const CommonRunArgs& args, const std::string& manifest_path) {
    const Manifest manifest = load_manifest(manifest_path);
    const rag::SearchSpace space = rag::resolve_space_arg(args.space_arg);
    return run_matrix(args, manifest, space);
}

int cmd_ablate(const CommonRunArgs& args, const std::string& manifest_path,
               const std::string& spec_path) {
    const Manifest manifest = load_manifest(manifest_path);
    const rag::AblationSpec spec = rag::AblationSpec::load(spec_path);
    const rag::SearchSpace space =
        rag::build_ablation_space(rag::resolve_space_arg(args.space_arg), spec);
    return run_matrix(args, manifest, space);
}

int cmd_stability(const CommonRunArgs& args, const std::string& sizes_arg,
                  const std::string& algos_arg, const std::string& seeds_arg, int budget,
                  bool no_shuffle) {
    const rag::SearchSpace space = rag::resolve_space_arg(args.space_arg);
    if (args.qa_path.empty() || args.corpus_path.empty())
        throw CLI::ValidationError("stability needs --qa and --corpus");
    rag::Environment pool = rag::load_environment(args.qa_path, args.corpus_path);
    if (!args.env_name.empty())
        pool.name = args.env_name;

    auto split_list = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty())
                out.push_back(item);
        return out;
    };
    std::vector<std::size_t> sizes;
    for (const std::string& s : split_list(sizes_arg))
        sizes.push_back(std::stoull(s));
    std::vector<std::string> algos = split_list(algos_arg);
    if (algos.empty())
        algos = {"cem", "tpe"};
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(seeds_arg))
        seeds.push_back(std::stoull(s));
    if (seeds.empty())
        seeds = {11, 22, 33, 44, 55};

    rag::EvalCache cache = args.cache_dir.empty() ? rag::EvalCache()
                                                    : rag::EvalCache(args.cache_dir);
    const rag::MetricWeights weights = rag::MetricWeights::parse(args.weights_spec);
    std::vector<std::tuple<std::size_t, std::string, double>> results;
    for (std::size_t size : sizes) {
        for (std::uint64_t seed : seeds) {
            rag::Environment subset = rag::subsample(pool, size, seed, !no_shuffle);
            subset.name = pool.name + "-n" + std::to_string(size);
            ResolvedEnv resolved;
            resolved.env = std::make_unique<rag::Environment>(std::move(subset));
            CommonRunArgs sub_args = args;
            sub_args.env_name = resolved.env->name;
            for (const std::string& algo : algos) {
                rag::RunRecord record =
                    execute_one(sub_args, space, algo, seed, budget, {}, cache, resolved, weights);
                record.seed = seed;
                const fs::path out = fs::path(args.out_dir) / run_dir_name(record);
                rag::write_run(record, space, out);
                results.emplace_back(size, algo, record.best_reward());
            }
        }
    }
    rag::emit_stability(rag::stability_summarize(results), std::cout);
    return 0;
}

int cmd_report(const std::string& runs_dir, bool table2, bool fig2, bool fig3, bool table13,
               const std::string& space_arg, const std::string& out_dir) {
    const std::vector<rag::RunRecord> records = rag::load_runs(runs_dir);
    if (records.empty()) {
        std::cerr << "no run.meta files under " << runs_dir << "\n";
        return 1;
    }
    const bool any = table2 || fig2 || fig3 || table13;
    auto sink = [&](const std::string& name, auto emit) {
        if (out_dir.empty()) {
            emit(std::cout);
        } else {
            fs::create_directories(out_dir);
            std::ofstream os(fs::path(out_dir) / name);
            emit(os);
            std::cout << "wrote " << (fs::path(out_dir) / name).string() << "\n";
        }
    };
    if (table2 || !any) {
        const auto cells = rag::interaction_table(records);
        std::vector<std::string> warnings;
        const auto summaries = rag::wins_and_ranks(cells, &warnings);
        sink("interaction_table.tsv", [&](std::ostream& os) {
            rag::emit_interaction_table(cells, summaries, os);
        });
        for (const std::string& w : warnings)
            std::cerr << "warning: " << w << "\n";
    }
    if (fig2) {
        const rag::SearchSpace space = rag::resolve_space_arg(space_arg);
        const auto matrix = rag::module_preferences(records, space);
        sink("module_preferences.tsv",
             [&](std::ostream& os) { rag::emit_preferences(matrix, space, os); });
    }
    if (fig3) {
        sink("trajectories.tsv",
             [&](std::ostream& os) { rag::emit_trajectories(records, os); });
    }
    if (table13) {
        double baseline_sum = 0.0;
        std::size_t baseline_n = 0;
        for (const rag::RunRecord& r : records)
            if (r.algorithm == "random")
                for (const rag::TrialRecord& t : r.trials) {
                    baseline_sum += t.reward;
                    ++baseline_n;
                }
        const auto deltas = rag::random_baseline_delta(records);
        const double baseline = baseline_sum / static_cast<double>(baseline_n);
        sink("random_baseline_deltas.tsv",
             [&](std::ostream& os) { rag::emit_baseline_deltas(deltas, baseline, os); });
    }
    return 0;
}

int cmd_score(const std::string& pred_path, const std::string& ref_path,
              const std::string& weights_spec, bool raw_tokens) {
    std::ifstream pred_in(pred_path), ref_in(ref_path);
    if (!pred_in)
        throw CLI::ValidationError("cannot open --pred file: " + pred_path);
    if (!ref_in)
        throw CLI::ValidationError("cannot open --ref file: " + ref_path);
    const rag::MetricWeights weights = rag::MetricWeights::parse(weights_spec);
    const rag::TokenMode mode = raw_tokens ? rag::TokenMode::raw : rag::TokenMode::normalized;

    // pred: one answer per line (plain text or {"answer": ...}); ref: one
    // {"answers": [...]} or a plain reference string per line.
    std::vector<rag::ScoredItem> items;
    std::string pred_line, ref_line;
    while (std::getline(pred_in, pred_line) && std::getline(ref_in, ref_line)) {
        rag::ScoredItem item;
        json pd = json::parse(pred_line, nullptr, false);
        item.answer = (!pd.is_discarded() && pd.is_object() && pd.contains("answer"))
                          ? pd["answer"].get<std::string>()
                          : pred_line;
        json rd = json::parse(ref_line, nullptr, false);
        if (!rd.is_discarded() && rd.is_object() && rd.contains("answers"))
            item.references = rd["answers"].get<std::vector<std::string>>();
        else
            item.references = {ref_line};
        items.push_back(std::move(item));
    }
    if (items.empty())
        throw CLI::ValidationError("no items to score");
    const rag::DatasetScore score = rag::score_dataset(items, weights, mode);
    for (std::size_t i = 0; i < score.items.size(); ++i) {
        const rag::MetricReport& r = score.items[i];
        json doc = {{"index", i},          {"rouge_l", r.rouge_l}, {"meteor", r.meteor},
                    {"token_f1", r.token_f1}, {"bleu", r.bleu},     {"em", r.em.value_or(0)},
                    {"weighted", r.weighted}};
        std::cout << doc.dump() << "\n";
    }
    json agg = {{"items", score.items.size()}, {"reward", score.reward}};
    std::cout << agg.dump() << "\n";
    return 0;
}

int cmd_synth_gen(const std::string& space_arg, std::uint64_t seed, double sigma,
                  std::size_t pairwise, const std::string& out_path) {
    const rag::SearchSpace space = rag::resolve_space_arg(space_arg);
    const rag::SyntheticEnvironment env =
        rag::make_random_synthetic(space, seed, sigma, pairwise);
    rag::save_synthetic_file(env, out_path);
    const auto [best, reward] = env.optimum();
    std::cout << "wrote " << out_path << "\n"
              << "cardinality=" << space.cardinality() << " optimum_reward=" << reward
              << " optimum=" << rag::canonical_key(space, best) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budgeted black-box search over RAG pipeline configurations"};
    app.require_subcommand(1);

    // run
    CommonRunArgs run_args;
    std::string run_algo = "random", run_config;
    std::uint64_t run_seed = 11;
    int run_budget = 30;
    CLI::App* run = app.add_subcommand("run", "One budgeted search");
    add_common_options(run, run_args);
    run->add_option("--algo", run_algo, "Controller id");
    run->add_option("--seed", run_seed, "Random seed");
    run->add_option("--budget", run_budget, "Configuration evaluations");
    run->add_option("--config", run_config, "Run config file {algorithm, params}");

    // bench
    CommonRunArgs bench_args;
    std::string bench_manifest;
    CLI::App* bench = app.add_subcommand("bench", "Env x algorithm x seed matrix from a manifest");
    add_common_options(bench, bench_args);
    bench->add_option("--manifest", bench_manifest, "Manifest file")->required();

    // ablate
    CommonRunArgs ablate_args;
    std::string ablate_manifest, ablate_spec;
    CLI::App* ablate = app.add_subcommand("ablate", "Benchmark over an ablated space");
    add_common_options(ablate, ablate_args);
    ablate->add_option("--manifest", ablate_manifest, "Manifest file")->required();
    ablate->add_option("--spec", ablate_spec, "Ablation spec file")->required();

    // stability
    CommonRunArgs stability_args;
    std::string sizes = "20,50,100,200", stability_algos = "cem,tpe", stability_seeds;
    int stability_budget = 30;
    bool no_shuffle = false;
    CLI::App* stability = app.add_subcommand("stability", "Proxy-size stability study");
    add_common_options(stability, stability_args);
    stability->add_option("--sizes", sizes, "Comma-separated QA subset sizes");
    stability->add_option("--algos", stability_algos, "Comma-separated controller ids");
    stability->add_option("--seeds", stability_seeds, "Comma-separated seeds (default 11,22,33,44,55)");
    stability->add_option("--budget", stability_budget, "Evaluations per run");
    stability->add_flag("--no-shuffle", no_shuffle, "Stored-order prefix instead of shuffle");

    // report
    std::string report_runs, report_space = "default-text", report_out;
    bool table2 = false, fig2 = false, fig3 = false, table13 = false;
    CLI::App* report = app.add_subcommand("report", "Aggregate run logs into tables");
    report->add_option("--runs", report_runs, "Directory holding run outputs")->required();
    report->add_flag("--table2", table2, "Interaction table (mean/std, wins, rank)");
    report->add_flag("--fig2", fig2, "Module-preference matrix");
    report->add_flag("--fig3", fig3, "Best-so-far trajectories");
    report->add_flag("--table13", table13, "Deltas over the random-trial mean");
    report->add_option("--space", report_space, "Space for the preference matrix");
    report->add_option("--out", report_out, "Write TSVs here instead of stdout");

    // score
    std::string pred_path, ref_path, score_weights = "default";
    bool raw_tokens = false;
    CLI::App* score = app.add_subcommand("score", "Batch metric scoring");
    score->add_option("--pred", pred_path, "Predictions, one per line")->required();
    score->add_option("--ref", ref_path, "References, one record per line")->required();
    score->add_option("--weights", score_weights, "Metric weights spec");
    score->add_flag("--raw-tokens", raw_tokens, "Skip lexical normalization");

    // synth-gen
    std::string synth_space = "default-text", synth_out = "synthetic.json";
    std::uint64_t synth_seed = 7;
    double synth_sigma = 0.0;
    std::size_t synth_pairwise = 0;
    CLI::App* synth = app.add_subcommand("synth-gen", "Generate a synthetic environment");
    synth->add_option("--space", synth_space, "Space definition or 'default-text'");
    synth->add_option("--seed", synth_seed, "Landscape seed");
    synth->add_option("--sigma", synth_sigma, "Reward noise sigma");
    synth->add_option("--pairwise", synth_pairwise, "Number of pairwise terms");
    synth->add_option("--out", synth_out, "Output file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(run_args, run_algo, run_seed, run_budget, run_config);
        if (bench->parsed())
            return cmd_bench(bench_args, bench_manifest);
        if (ablate->parsed())
            return cmd_ablate(ablate_args, ablate_manifest, ablate_spec);
        if (stability->parsed())
            return cmd_stability(stability_args, sizes, stability_algos, stability_seeds,
                                 stability_budget, no_shuffle);
        if (report->parsed())
            return cmd_report(report_runs, table2, fig2, fig3, table13, report_space, report_out);
        if (score->parsed())
            return cmd_score(pred_path, ref_path, score_weights, raw_tokens);
        if (synth->parsed())
            return cmd_synth_gen(synth_space, synth_seed, synth_sigma, synth_pairwise, synth_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
