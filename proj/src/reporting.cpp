#include "raise/reporting.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

namespace rag {

using nlohmann::json;

namespace {

constexpr double kTieEps = 1e-9;

std::vector<std::string> first_appearance_order(const std::vector<InteractionCell>& cells,
                                                bool envs) {
    std::vector<std::string> order;
    std::set<std::string> seen;
    for (const InteractionCell& c : cells) {
        const std::string& key = envs ? c.env : c.algorithm;
        if (seen.insert(key).second)
            order.push_back(key);
    }
    return order;
}

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

} // namespace

double population_std(const std::vector<double>& xs) {
    if (xs.empty())
        return 0.0;
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs)
        mean += x / n;
    double var = 0.0;
    for (double x : xs)
        var += (x - mean) * (x - mean) / n;
    return std::sqrt(var);
}

InteractionCell make_cell(std::string env, std::string algorithm, std::vector<double> scores) {
    InteractionCell cell;
    cell.env = std::move(env);
    cell.algorithm = std::move(algorithm);
    cell.seed_scores = std::move(scores);
    double mean = 0.0;
    for (double s : cell.seed_scores)
        mean += s;
    cell.mean = cell.seed_scores.empty() ? 0.0 : mean / static_cast<double>(cell.seed_scores.size());
    cell.stddev = population_std(cell.seed_scores);
    return cell;
}

std::vector<InteractionCell> interaction_table(const std::vector<RunRecord>& records) {
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
    for (const RunRecord& r : records) {
        const auto key = std::make_pair(r.env_name, r.algorithm);
        if (!groups.count(key))
            order.push_back(key);
        groups[key].push_back(r.best_reward());
    }
    std::vector<InteractionCell> cells;
    cells.reserve(order.size());
    for (const auto& key : order)
        cells.push_back(make_cell(key.first, key.second, groups[key]));
    return cells;
}

std::vector<AlgorithmSummary> wins_and_ranks(const std::vector<InteractionCell>& cells,
                                             std::vector<std::string>* warnings) {
    const std::vector<std::string> envs = first_appearance_order(cells, true);
    const std::vector<std::string> algorithms = first_appearance_order(cells, false);
    std::map<std::pair<std::string, std::string>, double> means;
    for (const InteractionCell& c : cells)
        means[{c.env, c.algorithm}] = c.mean;

    std::map<std::string, std::vector<double>> ranks;
    std::map<std::string, int> wins;
    for (const std::string& env : envs) {
        std::vector<std::pair<double, std::string>> column;
        for (const std::string& alg : algorithms) {
            auto it = means.find({env, alg});
            if (it == means.end()) {
                if (warnings)
                    warnings->push_back("missing cell: env=" + env + " algorithm=" + alg +
                                        "; rank computed over present columns");
                continue;
            }
            column.emplace_back(it->second, alg);
        }
        std::sort(column.begin(), column.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first)
                return a.first > b.first;
            return a.second < b.second;
        });
        // Average rank across tie groups; ties within eps share the win.
        std::size_t i = 0;
        while (i < column.size()) {
            std::size_t j = i;
            while (j + 1 < column.size() && std::abs(column[j + 1].first - column[i].first) < kTieEps)
                ++j;
            const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
            for (std::size_t k = i; k <= j; ++k) {
                ranks[column[k].second].push_back(avg_rank);
                if (i == 0)
                    ++wins[column[k].second];
            }
            i = j + 1;
        }
    }

    std::vector<AlgorithmSummary> out;
    out.reserve(algorithms.size());
    for (const std::string& alg : algorithms) {
        AlgorithmSummary s;
        s.algorithm = alg;
        s.wins = wins.count(alg) ? wins[alg] : 0;
        const std::vector<double>& r = ranks[alg];
        double sum = 0.0;
        for (double v : r)
            sum += v;
        s.avg_rank = r.empty() ? 0.0 : sum / static_cast<double>(r.size());
        out.push_back(std::move(s));
    }
    return out;
}

PreferenceMatrix module_preferences(const std::vector<RunRecord>& records,
                                    const SearchSpace& space) {
    PreferenceMatrix matrix;
    for (const Dimension& d : space.dimensions())
        matrix.dimensions.push_back(d.name);
    std::set<std::string> seen;
    std::map<std::string, std::map<std::string, std::map<std::string, int>>> counts;
    for (const RunRecord& r : records) {
        if (r.trials.empty())
            continue;
        if (seen.insert(r.algorithm).second)
            matrix.algorithms.push_back(r.algorithm);
        const TrialRecord& best = r.trials[static_cast<std::size_t>(r.best_trial_index())];
        PipelineConfig config = best.config;
        if (config.indices.size() != space.size())
            config = parse_canonical_key(space, best.config_key);
        for (std::size_t d = 0; d < space.size(); ++d) {
            const Dimension& dim = space.dimension(d);
            ++counts[r.algorithm][dim.name][dim.values[config.indices[d]]];
        }
        ++matrix.runs_per_algorithm[r.algorithm];
    }
    for (const auto& [alg, dims] : counts) {
        const double n = static_cast<double>(matrix.runs_per_algorithm[alg]);
        for (const auto& [dim, labels] : dims)
            for (const auto& [label, count] : labels)
                matrix.freq[alg][dim][label] = static_cast<double>(count) / n;
    }
    return matrix;
}

std::vector<BaselineDelta> random_baseline_delta(const std::vector<RunRecord>& records,
                                                 const std::string& random_id) {
    double baseline_sum = 0.0;
    std::size_t baseline_n = 0;
    for (const RunRecord& r : records) {
        if (r.algorithm != random_id)
            continue;
        for (const TrialRecord& t : r.trials) {
            baseline_sum += t.reward;
            ++baseline_n;
        }
    }
    if (baseline_n == 0)
        throw std::invalid_argument("random_baseline_delta: no '" + random_id +
                                    "' run present to compute the baseline");
    const double baseline = baseline_sum / static_cast<double>(baseline_n);

    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> bests;
    for (const RunRecord& r : records) {
        if (!bests.count(r.algorithm))
            order.push_back(r.algorithm);
        bests[r.algorithm].push_back(r.best_reward());
    }
    std::vector<BaselineDelta> out;
    for (const std::string& alg : order) {
        BaselineDelta d;
        d.algorithm = alg;
        double sum = 0.0;
        for (double b : bests[alg])
            sum += b;
        d.best = sum / static_cast<double>(bests[alg].size());
        d.delta = d.best - baseline;
        out.push_back(std::move(d));
    }
    return out;
}

AblationSpec AblationSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw LoadError("cannot open ablation spec: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded())
        throw LoadError("corrupt ablation spec: " + path.string());
    AblationSpec spec;
    const std::string kind = doc.value("kind", "");
    if (kind == "remove_module")
        spec.kind = Kind::remove_module;
    else if (kind == "fix_dimension")
        spec.kind = Kind::fix_dimension;
    else
        throw LoadError("ablation spec kind must be remove_module or fix_dimension");
    spec.target = doc.value("target", "");
    spec.fix_value = doc.value("value", "");
    return spec;
}

SearchSpace build_ablation_space(const SearchSpace& space, const AblationSpec& spec) {
    std::vector<Dimension> dims = space.dimensions();
    if (spec.kind == AblationSpec::Kind::remove_module) {
        const ModuleTag tag = module_tag_from_string(spec.target);
        if (tag != ModuleTag::rewriter && tag != ModuleTag::reranker && tag != ModuleTag::pruner)
            throw std::invalid_argument("remove_module targets rewriter, reranker or pruner");
        bool touched = false;
        for (Dimension& d : dims) {
            if (d.module_tag != tag)
                continue;
            touched = true;
            if (std::find(d.values.begin(), d.values.end(), "off") != d.values.end()) {
                d.values = {"off"};
            } else {
                // No "off" label (the reranker's top-k): pin the maximal value
                // so the stage never truncates.
                d.values = {d.values.back()};
            }
        }
        if (!touched)
            throw std::invalid_argument("no dimensions tagged '" + spec.target + "' in this space");
    } else {
        const std::size_t d = space.dimension_index(spec.target);
        const auto& values = dims[d].values;
        if (std::find(values.begin(), values.end(), spec.fix_value) == values.end())
            throw std::invalid_argument("fix_dimension: value '" + spec.fix_value +
                                        "' not present in dimension '" + spec.target + "'");
        dims[d].values = {spec.fix_value};
    }
    return SearchSpace(std::move(dims), space.constraints());
}

std::vector<StabilityRow> stability_summarize(
    const std::vector<std::tuple<std::size_t, std::string, double>>& size_alg_best) {
    std::vector<std::pair<std::size_t, std::string>> order;
    std::map<std::pair<std::size_t, std::string>, std::vector<double>> groups;
    for (const auto& [size, alg, best] : size_alg_best) {
        const auto key = std::make_pair(size, alg);
        if (!groups.count(key))
            order.push_back(key);
        groups[key].push_back(best);
    }
    std::vector<StabilityRow> rows;
    for (const auto& key : order) {
        StabilityRow row;
        row.size = key.first;
        row.algorithm = key.second;
        const std::vector<double>& xs = groups[key];
        double mean = 0.0;
        for (double x : xs)
            mean += x / static_cast<double>(xs.size());
        row.mean = mean;
        row.stddev = population_std(xs);
        row.seeds = static_cast<int>(xs.size());
        rows.push_back(std::move(row));
    }
    return rows;
}

void emit_trajectories(const std::vector<RunRecord>& records, std::ostream& os) {
    os << "env\talgorithm\tseed\ttrial\tbest_so_far\n";
    for (const RunRecord& r : records)
        for (std::size_t t = 0; t < r.best_so_far.size(); ++t)
            os << r.env_name << '\t' << r.algorithm << '\t' << r.seed << '\t' << t << '\t'
               << fmt(r.best_so_far[t]) << '\n';
}

void emit_interaction_table(const std::vector<InteractionCell>& cells,
                            const std::vector<AlgorithmSummary>& summaries, std::ostream& os) {
    const std::vector<std::string> envs = first_appearance_order(cells, true);
    const std::vector<std::string> algorithms = first_appearance_order(cells, false);
    std::map<std::pair<std::string, std::string>, const InteractionCell*> lookup;
    for (const InteractionCell& c : cells)
        lookup[{c.env, c.algorithm}] = &c;
    std::map<std::string, const AlgorithmSummary*> summary;
    for (const AlgorithmSummary& s : summaries)
        summary[s.algorithm] = &s;

    os << "algorithm";
    for (const std::string& env : envs)
        os << '\t' << env << "_mean\t" << env << "_std";
    os << "\twins\tavg_rank\n";
    for (const std::string& alg : algorithms) {
        os << alg;
        for (const std::string& env : envs) {
            auto it = lookup.find({env, alg});
            if (it == lookup.end())
                os << "\t-\t-";
            else
                os << '\t' << fmt(it->second->mean, 4) << '\t' << fmt(it->second->stddev, 4);
        }
        auto s = summary.find(alg);
        if (s == summary.end())
            os << "\t-\t-\n";
        else
            os << '\t' << s->second->wins << '\t' << fmt(s->second->avg_rank, 2) << '\n';
    }
}

void emit_preferences(const PreferenceMatrix& matrix, const SearchSpace& space, std::ostream& os) {
    os << "algorithm\tdimension\toption\tfrequency\tn_runs\n";
    for (const std::string& alg : matrix.algorithms) {
        auto alg_it = matrix.freq.find(alg);
        if (alg_it == matrix.freq.end())
            continue;
        for (const Dimension& dim : space.dimensions()) {
            auto dim_it = alg_it->second.find(dim.name);
            if (dim_it == alg_it->second.end())
                continue;
            for (const std::string& label : dim.values) {
                auto f = dim_it->second.find(label);
                os << alg << '\t' << dim.name << '\t' << label << '\t'
                   << fmt(f == dim_it->second.end() ? 0.0 : f->second, 4) << '\t'
                   << matrix.runs_per_algorithm.at(alg) << '\n';
            }
        }
    }
}

void emit_baseline_deltas(const std::vector<BaselineDelta>& deltas, double baseline,
                          std::ostream& os) {
    os << "algorithm\tbest\tdelta_vs_random_trial_mean\n";
    os << "(baseline)\t" << fmt(baseline, 4) << "\t0.0000\n";
    for (const BaselineDelta& d : deltas)
        os << d.algorithm << '\t' << fmt(d.best, 4) << '\t' << fmt(d.delta, 4) << '\n';
}

void emit_stability(const std::vector<StabilityRow>& rows, std::ostream& os) {
    os << "size\talgorithm\tmean_best\tcross_seed_std\tseeds\n";
    for (const StabilityRow& row : rows)
        os << row.size << '\t' << row.algorithm << '\t' << fmt(row.mean, 4) << '\t'
           << fmt(row.stddev, 4) << '\t' << row.seeds << '\n';
}

} // namespace rag
