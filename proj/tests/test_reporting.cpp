#include "raise/reporting.hpp"

#include "fixtures/paper_tables.hpp"
#include "support.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

using namespace rag;

namespace {

// Fixture cells: one InteractionCell per (env, algorithm), in the aggregate
// table's env/algorithm order.
std::vector<InteractionCell> fixture_cells() {
    std::vector<InteractionCell> cells;
    for (const fixtures::AggregateRow& row : fixtures::aggregate_table()) {
        for (const std::string& env : fixtures::aggregate_env_order()) {
            for (const fixtures::EnvTable& table : fixtures::detailed_results()) {
                if (table.env != env)
                    continue;
                for (const fixtures::SeedScores& scores : table.rows) {
                    if (row.algorithm == std::string(scores.algorithm)) {
                        cells.push_back(make_cell(env, scores.algorithm,
                                                  {scores.seeds[0], scores.seeds[1],
                                                   scores.seeds[2]}));
                    }
                }
            }
        }
    }
    return cells;
}

RunRecord make_run(std::string env, std::string algorithm, std::uint64_t seed,
                   std::vector<double> rewards, std::vector<std::string> keys = {}) {
    RunRecord r;
    r.env_name = std::move(env);
    r.algorithm = std::move(algorithm);
    r.seed = seed;
    r.budget = static_cast<int>(rewards.size());
    double best = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        TrialRecord t;
        t.index = static_cast<int>(i);
        t.reward = rewards[i];
        t.config_key = i < keys.size() ? keys[i] : "d0=v0";
        best = std::max(best, rewards[i]);
        r.best_so_far.push_back(best);
        r.trials.push_back(std::move(t));
    }
    r.eval_count = static_cast<int>(rewards.size());
    return r;
}

} // namespace

// ============================================================================
// population std and aggregation
// ============================================================================

TEST_CASE("population std convention is inferable from the published numbers") {
    // {0.4109, 0.4205, 0.4207}: population std 0.0046, sample std 0.0056
    std::vector<double> greedy_hotpot = {0.4109, 0.4205, 0.4207};
    CHECK(population_std(greedy_hotpot) == doctest::Approx(0.0046).epsilon(0.02));
    const double n = 3.0;
    const double mean = (0.4109 + 0.4205 + 0.4207) / n;
    double sample_var = 0.0;
    for (double x : greedy_hotpot)
        sample_var += (x - mean) * (x - mean) / (n - 1.0);
    CHECK(std::sqrt(sample_var) == doctest::Approx(0.0056).epsilon(0.02));

    CHECK(population_std({0.5}) == doctest::Approx(0.0)); // single seed
}

TEST_CASE("aggregate reproduces the published mean/std cells within display rounding") {
    const std::vector<InteractionCell> cells = fixture_cells();
    REQUIRE(cells.size() == 13 * 7);
    std::map<std::pair<std::string, std::string>, const InteractionCell*> lookup;
    for (const InteractionCell& c : cells)
        lookup[{c.env, c.algorithm}] = &c;

    // Display rounding (0.0005) plus the double-rounding slack from
    // recomputing on 4-decimal seed values: perturbing each seed by up to
    // 5e-5 can shift the recomputed std past the display boundary by a few
    // millionths (three of the 91 std cells sit exactly there).
    const double tol = 0.0005 + 1e-4;
    for (const fixtures::AggregateRow& row : fixtures::aggregate_table()) {
        for (std::size_t e = 0; e < fixtures::aggregate_env_order().size(); ++e) {
            const InteractionCell* cell =
                lookup.at({fixtures::aggregate_env_order()[e], row.algorithm});
            CHECK(std::abs(cell->mean - row.cells[e].first) <= tol);
            CHECK(std::abs(cell->stddev - row.cells[e].second) <= tol);
        }
    }

    // spot checks from the detailed table
    const InteractionCell* greedy = lookup.at({"hotpotqa", "greedy"});
    CHECK(greedy->mean == doctest::Approx(0.4174).epsilon(1e-3));
    CHECK(greedy->stddev == doctest::Approx(0.0046).epsilon(2e-2));
    const InteractionCell* coord = lookup.at({"hotpotqa", "coordinate"});
    CHECK(coord->mean == doctest::Approx(0.4086).epsilon(1e-3));
    CHECK(coord->stddev == doctest::Approx(0.0205).epsilon(2e-2));
}

TEST_CASE("wins match the published wins column exactly") {
    const auto summaries = wins_and_ranks(fixture_cells());
    std::map<std::string, const AlgorithmSummary*> by_name;
    for (const AlgorithmSummary& s : summaries)
        by_name[s.algorithm] = &s;
    for (const fixtures::AggregateRow& row : fixtures::aggregate_table()) {
        CAPTURE(row.algorithm);
        CHECK(by_name.at(row.algorithm)->wins == row.wins);
    }
}

TEST_CASE("average ranks match the published column within 0.05 outside the allowlist") {
    const auto summaries = wins_and_ranks(fixture_cells());
    std::map<std::string, double> ranks;
    for (const AlgorithmSummary& s : summaries)
        ranks[s.algorithm] = s.avg_rank;
    const auto& allow = fixtures::rank_discrepancy_allowlist();
    for (const fixtures::AggregateRow& row : fixtures::aggregate_table()) {
        CAPTURE(row.algorithm);
        const double diff = std::abs(ranks.at(row.algorithm) - row.rank);
        if (std::find(allow.begin(), allow.end(), row.algorithm) != allow.end()) {
            // Known tie-rule/rounding ambiguity; recomputation from 4-decimal
            // seed values lands within 0.10.
            CHECK(diff <= 0.101);
        } else {
            CHECK(diff <= 0.05);
        }
    }
}

TEST_CASE("wins_and_ranks basics: distinct means rank 1..n, eps ties share") {
    std::vector<InteractionCell> cells = {
        make_cell("env1", "a", {0.9}),
        make_cell("env1", "b", {0.5}),
        make_cell("env1", "c", {0.1}),
    };
    auto summaries = wins_and_ranks(cells);
    REQUIRE(summaries.size() == 3);
    CHECK(summaries[0].avg_rank == doctest::Approx(1.0));
    CHECK(summaries[1].avg_rank == doctest::Approx(2.0));
    CHECK(summaries[2].avg_rank == doctest::Approx(3.0));
    CHECK(summaries[0].wins == 1);
    CHECK(summaries[1].wins == 0);

    // two algorithms tied at the top share rank 1.5 and both count the win
    std::vector<InteractionCell> tied = {
        make_cell("env1", "a", {0.9}),
        make_cell("env1", "b", {0.9}),
        make_cell("env1", "c", {0.1}),
    };
    summaries = wins_and_ranks(tied);
    CHECK(summaries[0].avg_rank == doctest::Approx(1.5));
    CHECK(summaries[1].avg_rank == doctest::Approx(1.5));
    CHECK(summaries[0].wins == 1);
    CHECK(summaries[1].wins == 1);
    CHECK(summaries[2].avg_rank == doctest::Approx(3.0));
}

TEST_CASE("missing cells rank over present columns with a warning") {
    std::vector<InteractionCell> cells = {
        make_cell("env1", "a", {0.9}),
        make_cell("env1", "b", {0.5}),
        make_cell("env2", "a", {0.9}),
    };
    std::vector<std::string> warnings;
    const auto summaries = wins_and_ranks(cells, &warnings);
    CHECK(!warnings.empty());
    for (const AlgorithmSummary& s : summaries)
        if (s.algorithm == "b")
            CHECK(s.avg_rank == doctest::Approx(2.0)); // only env1 counts
}

// ============================================================================
// Table 13: deltas over the random-trial mean
// ============================================================================

TEST_CASE("random_baseline_delta reproduces the published deltas within 1e-4") {
    std::vector<RunRecord> records;
    // The random run: 20 trials whose mean is exactly the published baseline.
    std::vector<double> random_trials(20, fixtures::kAblationBaseline);
    random_trials[0] = fixtures::kAblationBaseline - 0.01;
    random_trials[1] = fixtures::kAblationBaseline + 0.01;
    // best-of-budget for random must still match its published score
    random_trials[2] = 0.1134;
    random_trials[3] = fixtures::kAblationBaseline * 2 - 0.1134; // keep the mean
    for (const fixtures::AblationRow& row : fixtures::ablation_rows()) {
        if (std::string(row.algorithm) == "random") {
            records.push_back(make_run("hotpotqa", "random", 1, random_trials));
        } else {
            std::vector<double> trials(20, 0.0);
            trials[10] = row.score; // best-of-budget
            records.push_back(make_run("hotpotqa", row.algorithm, 1, trials));
        }
    }
    const auto deltas = random_baseline_delta(records);
    std::map<std::string, const BaselineDelta*> by_name;
    for (const BaselineDelta& d : deltas)
        by_name[d.algorithm] = &d;
    for (const fixtures::AblationRow& row : fixtures::ablation_rows()) {
        CAPTURE(row.algorithm);
        REQUIRE(by_name.count(row.algorithm));
        CHECK(std::abs(by_name.at(row.algorithm)->delta - row.delta) <= 1e-4 + 1e-12);
    }
    // random's own delta is best-of-budget minus trial mean, never negative
    CHECK(by_name.at("random")->delta == doctest::Approx(0.1134 - 0.0660).epsilon(1e-6));
    CHECK(by_name.at("random")->delta >= 0.0);
}

TEST_CASE("random_baseline_delta degenerate cases") {
    // all-equal rewards: delta = best - mean = 0
    std::vector<RunRecord> records = {make_run("e", "random", 1, std::vector<double>(10, 0.25)),
                                      make_run("e", "greedy", 1, std::vector<double>(10, 0.25))};
    const auto deltas = random_baseline_delta(records);
    for (const BaselineDelta& d : deltas)
        CHECK(d.delta == doctest::Approx(0.0));

    // missing random run -> error
    std::vector<RunRecord> no_random = {make_run("e", "greedy", 1, {0.5})};
    CHECK_THROWS_AS(random_baseline_delta(no_random), std::invalid_argument);
}

// ============================================================================
// module preferences
// ============================================================================

TEST_CASE("module_preferences tallies best-config options and normalizes") {
    const SearchSpace space = default_text_space();
    std::vector<RunRecord> records;
    // 21 runs for one algorithm; rewriter always off, chunk_size split 14/7
    for (int i = 0; i < 21; ++i) {
        PipelineConfig c;
        c.indices.assign(space.size(), 0);
        c.indices[space.dimension_index("chunk_size")] = i < 14 ? 0 : 1;
        RunRecord r = make_run("env", "greedy", static_cast<std::uint64_t>(i), {0.5});
        r.trials[0].config = c;
        r.trials[0].config_key = canonical_key(space, c);
        records.push_back(std::move(r));
    }
    const PreferenceMatrix matrix = module_preferences(records, space);
    CHECK(matrix.runs_per_algorithm.at("greedy") == 21);
    CHECK(matrix.freq.at("greedy").at("rewriter_prompt").at("off") == doctest::Approx(1.0));
    CHECK(matrix.freq.at("greedy").at("chunk_size").at("256") ==
          doctest::Approx(14.0 / 21.0).epsilon(1e-12));
    CHECK(matrix.freq.at("greedy").at("chunk_size").at("512") ==
          doctest::Approx(7.0 / 21.0).epsilon(1e-12));

    // frequencies per (algorithm, dimension) sum to 1
    for (const auto& [alg, dims] : matrix.freq) {
        for (const auto& [dim, labels] : dims) {
            double sum = 0.0;
            for (const auto& [label, f] : labels)
                sum += f;
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("module_preferences reconstructs configs from keys when needed") {
    const SearchSpace space = default_text_space();
    PipelineConfig c;
    c.indices.assign(space.size(), 0);
    c.indices[space.dimension_index("pruner_prompt")] = 3;
    RunRecord r = make_run("env", "tpe", 1, {0.4});
    r.trials[0].config.indices.clear(); // as if loaded from disk
    r.trials[0].config_key = canonical_key(space, c);
    const PreferenceMatrix matrix = module_preferences({r}, space);
    CHECK(matrix.freq.at("tpe").at("pruner_prompt").at("P3") == doctest::Approx(1.0));
}

// ============================================================================
// ablation spaces
// ============================================================================

TEST_CASE("remove_module collapses prompt dimensions to off") {
    const SearchSpace space = default_text_space();
    AblationSpec spec;
    spec.kind = AblationSpec::Kind::remove_module;
    spec.target = "pruner";
    const SearchSpace ablated = build_ablation_space(space, spec);
    const Dimension& pruner = ablated.dimension(ablated.dimension_index("pruner_prompt"));
    CHECK(pruner.values == std::vector<std::string>{"off"});
    CHECK(ablated.cardinality() == space.cardinality() / 4);

    // untouched dimensions unchanged
    for (const Dimension& d : space.dimensions()) {
        if (d.name == "pruner_prompt")
            continue;
        CHECK(ablated.dimension(ablated.dimension_index(d.name)).values == d.values);
    }

    // collapsed dimension never varies in neighbor moves
    SplitRng rng(3);
    const PipelineConfig c = sample_uniform(ablated, rng);
    for (const PipelineConfig& n : neighbors(ablated, c))
        CHECK(n.indices[ablated.dimension_index("pruner_prompt")] ==
              c.indices[ablated.dimension_index("pruner_prompt")]);
}

TEST_CASE("remove_module on the reranker pins model off and top-k maximal") {
    const SearchSpace space = default_text_space();
    AblationSpec spec;
    spec.kind = AblationSpec::Kind::remove_module;
    spec.target = "reranker";
    const SearchSpace ablated = build_ablation_space(space, spec);
    CHECK(ablated.dimension(ablated.dimension_index("reranker_model")).values ==
          std::vector<std::string>{"off"});
    CHECK(ablated.dimension(ablated.dimension_index("reranker_top_k")).values ==
          std::vector<std::string>{"50"});
}

TEST_CASE("fix_dimension pins exactly one dimension") {
    const SearchSpace space = default_text_space();
    AblationSpec spec;
    spec.kind = AblationSpec::Kind::fix_dimension;
    spec.target = "retriever_top_k";
    spec.fix_value = "5";
    const SearchSpace ablated = build_ablation_space(space, spec);
    CHECK(ablated.dimension(ablated.dimension_index("retriever_top_k")).values ==
          std::vector<std::string>{"5"});
    CHECK(ablated.cardinality() == space.cardinality() / 6);

    spec.fix_value = "7";
    CHECK_THROWS_AS(build_ablation_space(space, spec), std::invalid_argument);
    spec.kind = AblationSpec::Kind::remove_module;
    spec.target = "retriever";
    CHECK_THROWS_AS(build_ablation_space(space, spec), std::invalid_argument);
}

// ============================================================================
// stability + emitters
// ============================================================================

TEST_CASE("stability_summarize groups by size and algorithm") {
    std::vector<std::tuple<std::size_t, std::string, double>> results = {
        {20, "cem", 0.2}, {20, "cem", 0.4}, {20, "tpe", 0.3},
        {200, "cem", 0.3}, {200, "cem", 0.31}, {200, "tpe", 0.3},
    };
    const auto rows = stability_summarize(results);
    REQUIRE(rows.size() == 4); // sizes x algorithms
    CHECK(rows[0].size == 20);
    CHECK(rows[0].algorithm == "cem");
    CHECK(rows[0].mean == doctest::Approx(0.3));
    CHECK(rows[0].seeds == 2);
    // smaller proxies disperse more in this fixture
    CHECK(rows[0].stddev > rows[2].stddev);
}

TEST_CASE("emitters are byte-stable and carry the expected shapes") {
    std::vector<RunRecord> records = {make_run("envA", "random", 11, {0.1, 0.3, 0.2}),
                                      make_run("envA", "greedy", 11, {0.2, 0.25, 0.5})};
    std::ostringstream a, b;
    emit_trajectories(records, a);
    emit_trajectories(records, b);
    const std::string traj = a.str();
    CHECK(traj == b.str());
    // 1 header + 3 rows per run
    CHECK(std::count(traj.begin(), traj.end(), '\n') == 1 + 3 + 3);
    CHECK(traj.find("envA\trandom\t11\t0\t0.100000") != std::string::npos);
    // monotone best column
    CHECK(traj.find("envA\trandom\t11\t2\t0.300000") != std::string::npos);

    const auto cells = interaction_table(records);
    const auto summaries = wins_and_ranks(cells);
    std::ostringstream table1, table2;
    emit_interaction_table(cells, summaries, table1);
    emit_interaction_table(cells, summaries, table2);
    CHECK(table1.str() == table2.str());
    CHECK(table1.str().find("envA_mean") != std::string::npos);

    std::ostringstream deltas;
    emit_baseline_deltas(random_baseline_delta(records), 0.2, deltas);
    CHECK(deltas.str().find("delta_vs_random_trial_mean") != std::string::npos);
}

TEST_CASE("interaction_table groups run records by env and algorithm") {
    std::vector<RunRecord> records = {
        make_run("e1", "random", 11, {0.1, 0.4}),
        make_run("e1", "random", 22, {0.2, 0.2}),
        make_run("e1", "greedy", 11, {0.6}),
    };
    const auto cells = interaction_table(records);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].env == "e1");
    CHECK(cells[0].algorithm == "random");
    CHECK(cells[0].seed_scores == std::vector<double>{0.4, 0.2});
    CHECK(cells[0].mean == doctest::Approx(0.3));
    CHECK(cells[1].algorithm == "greedy");
}
