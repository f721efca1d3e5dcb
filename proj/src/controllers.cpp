#include "raise/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

namespace rag {

// --- pure helpers --------------------------------------------------------------

double ucb_score(double mean, std::size_t pulls, std::size_t total, double c) {
    if (pulls == 0)
        return std::numeric_limits<double>::infinity();
    if (total == 0)
        return mean;
    return mean + c * std::sqrt(std::log(static_cast<double>(total)) /
                                static_cast<double>(pulls));
}

double sa_accept_probability(double delta, double temperature) {
    if (delta >= 0.0)
        return 1.0;
    return std::exp(delta / temperature);
}

double add_one_density(std::size_t count, std::size_t total, std::size_t num_values) {
    return (static_cast<double>(count) + 1.0) /
           (static_cast<double>(total) + static_cast<double>(num_values));
}

std::vector<double> mix_distribution(const std::vector<double>& p,
                                     const std::vector<double>& elite_freq, double mix) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        out[i] = (1.0 - mix) * p[i] + mix * elite_freq[i];
    return out;
}

std::vector<double> group_advantages(std::span<const double> rewards, bool divide_by_std) {
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    std::vector<double> adv(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i)
        adv[i] = rewards[i] - mean;
    if (divide_by_std) {
        double var = 0.0;
        for (double a : adv)
            var += a * a;
        const double std_dev = std::sqrt(var / n); // population std
        for (double& a : adv)
            a /= std_dev + 1e-8;
    }
    return adv;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out)
        v /= sum;
    return out;
}

std::vector<double> entropy_gradient(std::span<const double> probs) {
    double entropy = 0.0;
    for (double p : probs)
        if (p > 0.0)
            entropy -= p * std::log(p);
    std::vector<double> grad(probs.size(), 0.0);
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (probs[i] > 0.0)
            grad[i] = -probs[i] * (std::log(probs[i]) + entropy);
    return grad;
}

// --- base class ------------------------------------------------------------------

Controller::Controller(std::string id, const SearchSpace& space, std::uint64_t seed, int budget,
                       ControllerParams params)
    : id_(std::move(id)), space_(space), params_(std::move(params)), rng_(seed), budget_(budget) {
    if (budget < 1)
        throw ProtocolError("controller budget must be at least 1");
}

PipelineConfig Controller::propose() {
    if (awaiting_observation_)
        throw ProtocolError(id_ + ": propose() called before observing the previous proposal");
    if (proposals_ >= budget_)
        throw ProtocolError(id_ + ": budget of " + std::to_string(budget_) + " proposals exhausted");
    last_proposal_ = do_propose();
    space_.require_valid(last_proposal_);
    ++proposals_;
    awaiting_observation_ = true;
    return last_proposal_;
}

void Controller::observe(const PipelineConfig& config, double reward) {
    if (!awaiting_observation_)
        throw ProtocolError(id_ + ": observe() without a pending proposal");
    if (!(config == last_proposal_))
        throw ProtocolError(id_ + ": observation does not match the pending proposal");
    awaiting_observation_ = false;
    TrialObservation obs;
    obs.trial_index = proposals_ - 1;
    obs.config = config;
    obs.reward = reward;
    history_.push_back(obs);
    do_observe(history_.back());
}

// --- shared sampling utilities -----------------------------------------------------

namespace {

constexpr int kResampleBound = 100;

// Per-dimension categorical draw from `dist`, retried until the constraints
// pass; degrades to plain uniform sampling if the distribution keeps landing
// on invalid assignments.
PipelineConfig sample_categorical(const SearchSpace& space,
                                  const std::vector<std::vector<double>>& dist, SplitRng& rng) {
    for (int attempt = 0; attempt < kResampleBound; ++attempt) {
        PipelineConfig config;
        config.indices.reserve(space.size());
        for (std::size_t d = 0; d < space.size(); ++d) {
            const double u = rng.next_double();
            double cum = 0.0;
            std::uint32_t chosen = static_cast<std::uint32_t>(dist[d].size() - 1);
            for (std::size_t v = 0; v < dist[d].size(); ++v) {
                cum += dist[d][v];
                if (u < cum) {
                    chosen = static_cast<std::uint32_t>(v);
                    break;
                }
            }
            config.indices.push_back(chosen);
        }
        if (space.valid(config))
            return config;
    }
    return sample_uniform(space, rng);
}

// Uniform single-dimension move away from `base`.
PipelineConfig random_hamming1(const SearchSpace& space, const PipelineConfig& base,
                               SplitRng& rng) {
    for (int attempt = 0; attempt < kResampleBound; ++attempt) {
        const std::size_t d = rng.next_index(space.size());
        const std::size_t count = space.dimension(d).values.size();
        if (count < 2)
            continue;
        std::size_t v = rng.next_index(count - 1);
        if (v >= base.indices[d])
            ++v;
        PipelineConfig candidate = base;
        candidate.indices[d] = static_cast<std::uint32_t>(v);
        if (space.valid(candidate))
            return candidate;
    }
    return sample_uniform(space, rng);
}

std::vector<std::vector<double>> uniform_distributions(const SearchSpace& space) {
    std::vector<std::vector<double>> dist(space.size());
    for (std::size_t d = 0; d < space.size(); ++d)
        dist[d].assign(space.dimension(d).values.size(),
                       1.0 / static_cast<double>(space.dimension(d).values.size()));
    return dist;
}

std::vector<std::vector<double>> zero_table(const SearchSpace& space) {
    std::vector<std::vector<double>> table(space.size());
    for (std::size_t d = 0; d < space.size(); ++d)
        table[d].assign(space.dimension(d).values.size(), 0.0);
    return table;
}

// --- 1. random search ---------------------------------------------------------------

class RandomSearch final : public Controller {
public:
    RandomSearch(const SearchSpace& space, std::uint64_t seed, int budget, ControllerParams params)
        : Controller("random", space, seed, budget, std::move(params)) {}

    PipelineConfig do_propose() override { return sample_uniform(space(), rng()); }
    void do_observe(const TrialObservation&) override {}
};

// --- 2. greedy search ----------------------------------------------------------------

class GreedySearch final : public Controller {
public:
    GreedySearch(const SearchSpace& space, std::uint64_t seed, int budget, ControllerParams params)
        : Controller("greedy", space, seed, budget, std::move(params)) {}

    PipelineConfig do_propose() override {
        if (!have_incumbent_)
            return sample_uniform(space(), rng());
        while (scan_pos_ < scan_.size()) {
            if (!evaluated_.count(canonical_key(space(), scan_[scan_pos_])))
                return scan_[scan_pos_];
            ++scan_pos_;
        }
        return random_restart();
    }

    void do_observe(const TrialObservation& obs) override {
        evaluated_.insert(canonical_key(space(), obs.config));
        if (!have_incumbent_ || obs.reward > incumbent_reward_) {
            have_incumbent_ = true;
            incumbent_ = obs.config;
            incumbent_reward_ = obs.reward;
            scan_ = neighbors(space(), incumbent_);
            scan_pos_ = 0;
        }
    }

private:
    PipelineConfig random_restart() {
        for (int i = 0; i < 20; ++i) {
            PipelineConfig c = sample_uniform(space(), rng());
            if (!evaluated_.count(canonical_key(space(), c)))
                return c;
        }
        return sample_uniform(space(), rng());
    }

    bool have_incumbent_ = false;
    PipelineConfig incumbent_;
    double incumbent_reward_ = 0.0;
    std::vector<PipelineConfig> scan_;
    std::size_t scan_pos_ = 0;
    std::set<std::string> evaluated_;
};

// --- 3. coordinate descent ------------------------------------------------------------

class CoordinateDescent final : public Controller {
public:
    CoordinateDescent(const SearchSpace& space, std::uint64_t seed, int budget,
                      ControllerParams params)
        : Controller("coordinate", space, seed, budget, std::move(params)) {}

    PipelineConfig do_propose() override {
        if (!have_base_)
            return sample_uniform(space(), rng());
        if (pending_.empty())
            start_sweep();
        if (pending_.empty())
            return base_; // no dimension has alternatives
        PipelineConfig c = base_;
        c.indices[dim_] = pending_[pending_pos_];
        return c;
    }

    void do_observe(const TrialObservation& obs) override {
        if (!have_base_) {
            have_base_ = true;
            base_ = obs.config;
            base_reward_ = obs.reward;
            return;
        }
        if (pending_.empty())
            return; // degenerate space, the base was re-proposed
        results_.emplace_back(obs.config.indices[dim_], obs.reward);
        if (++pending_pos_ < pending_.size())
            return;
        // Sweep complete: fix the argmax value, ties to the lower value index.
        std::uint32_t best_value = base_.indices[dim_];
        double best_reward = base_reward_;
        for (const auto& [value, reward] : results_) {
            if (reward > best_reward || (reward == best_reward && value < best_value)) {
                best_value = value;
                best_reward = reward;
            }
        }
        base_.indices[dim_] = best_value;
        base_reward_ = best_reward;
        pending_.clear();
        results_.clear();
        pending_pos_ = 0;
        dim_ = (dim_ + 1) % space().size();
    }

private:
    void start_sweep() {
        for (std::size_t scanned = 0; scanned < space().size(); ++scanned) {
            pending_.clear();
            const std::size_t count = space().dimension(dim_).values.size();
            for (std::uint32_t v = 0; v < count; ++v) {
                if (v == base_.indices[dim_])
                    continue;
                PipelineConfig c = base_;
                c.indices[dim_] = v;
                if (space().valid(c))
                    pending_.push_back(v);
            }
            if (!pending_.empty())
                return;
            dim_ = (dim_ + 1) % space().size();
        }
    }

    bool have_base_ = false;
    PipelineConfig base_;
    double base_reward_ = 0.0;
    std::size_t dim_ = 0;
    std::vector<std::uint32_t> pending_;
    std::vector<std::pair<std::uint32_t, double>> results_;
    std::size_t pending_pos_ = 0;
};

// --- 4. simulated annealing -------------------------------------------------------------

class SimulatedAnnealing final : public Controller {
public:
    SimulatedAnnealing(const SearchSpace& space, std::uint64_t seed, int budget,
                       ControllerParams params)
        : Controller("sa", space, seed, budget, std::move(params)),
          temperature_(this->params().get("sa.t0", 0.1)),
          cooling_(this->params().get("sa.cooling", 0.95)) {}

    PipelineConfig do_propose() override {
        if (!have_current_)
            return sample_uniform(space(), rng());
        return random_hamming1(space(), current_, rng());
    }

    void do_observe(const TrialObservation& obs) override {
        if (!have_current_) {
            have_current_ = true;
            current_ = obs.config;
            current_reward_ = obs.reward;
        } else {
            const double delta = obs.reward - current_reward_;
            const double p = sa_accept_probability(delta, temperature_);
            if (delta >= 0.0 || rng().next_double() < p) {
                current_ = obs.config;
                current_reward_ = obs.reward;
            }
        }
        temperature_ *= cooling_;
    }

private:
    bool have_current_ = false;
    PipelineConfig current_;
    double current_reward_ = 0.0;
    double temperature_;
    double cooling_;
};

// --- 5. iterated local search --------------------------------------------------------------

class IteratedLocalSearch final : public Controller {
public:
    IteratedLocalSearch(const SearchSpace& space, std::uint64_t seed, int budget,
                        ControllerParams params)
        : Controller("ils", space, seed, budget, std::move(params)),
          patience_(static_cast<int>(this->params().get("ils.patience", 3))),
          perturb_dims_(static_cast<std::size_t>(this->params().get("ils.perturb", 2))) {}

    PipelineConfig do_propose() override {
        if (!have_center_)
            return sample_uniform(space(), rng());
        if (non_improving_ >= patience_)
            return propose_perturbation();
        while (scan_pos_ < scan_.size()) {
            if (!evaluated_.count(canonical_key(space(), scan_[scan_pos_])))
                return scan_[scan_pos_];
            ++scan_pos_;
        }
        return propose_perturbation();
    }

    void do_observe(const TrialObservation& obs) override {
        evaluated_.insert(canonical_key(space(), obs.config));
        if (!have_center_ || obs.reward > best_reward_) {
            best_ = obs.config;
            best_reward_ = obs.reward;
            non_improving_ = 0;
        } else {
            ++non_improving_;
        }
        if (!have_center_) {
            have_center_ = true;
            set_center(obs.config, obs.reward);
            return;
        }
        if (perturbation_pending_) {
            // Accept the perturbed point as the new local center regardless of
            // its reward; local improvement continues from there.
            perturbation_pending_ = false;
            non_improving_ = 0;
            set_center(obs.config, obs.reward);
            return;
        }
        if (obs.reward > center_reward_)
            set_center(obs.config, obs.reward);
    }

private:
    void set_center(const PipelineConfig& config, double reward) {
        center_ = config;
        center_reward_ = reward;
        scan_ = neighbors(space(), center_);
        scan_pos_ = 0;
    }

    PipelineConfig propose_perturbation() {
        perturbation_pending_ = true;
        for (int attempt = 0; attempt < kResampleBound; ++attempt) {
            PipelineConfig c = best_;
            std::size_t d1 = rng().next_index(space().size());
            std::size_t d2 = d1;
            if (space().size() > 1 && perturb_dims_ >= 2) {
                d2 = rng().next_index(space().size() - 1);
                if (d2 >= d1)
                    ++d2;
            }
            c.indices[d1] = static_cast<std::uint32_t>(
                rng().next_index(space().dimension(d1).values.size()));
            c.indices[d2] = static_cast<std::uint32_t>(
                rng().next_index(space().dimension(d2).values.size()));
            if (space().valid(c))
                return c;
        }
        return sample_uniform(space(), rng());
    }

    int patience_;
    std::size_t perturb_dims_;
    bool have_center_ = false;
    bool perturbation_pending_ = false;
    PipelineConfig center_, best_;
    double center_reward_ = 0.0, best_reward_ = 0.0;
    int non_improving_ = 0;
    std::vector<PipelineConfig> scan_;
    std::size_t scan_pos_ = 0;
    std::set<std::string> evaluated_;
};

// --- 6. tree-structured parzen estimator -------------------------------------------------------

class TpeSearch final : public Controller {
public:
    TpeSearch(const SearchSpace& space, std::uint64_t seed, int budget, ControllerParams params)
        : Controller("tpe", space, seed, budget, std::move(params)),
          startup_(static_cast<std::size_t>(this->params().get("tpe.startup", 5))),
          gamma_(this->params().get("tpe.gamma", 0.25)),
          candidates_(static_cast<std::size_t>(this->params().get("tpe.candidates", 10))) {}

    PipelineConfig do_propose() override {
        if (history().size() < startup_)
            return sample_uniform(space(), rng());

        // Split at the gamma reward quantile; ties resolve by trial order so
        // degenerate reward streams still produce a proper split.
        std::vector<std::size_t> order(history().size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (history()[a].reward != history()[b].reward)
                return history()[a].reward > history()[b].reward;
            return a < b;
        });
        const std::size_t n_good = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::ceil(gamma_ * static_cast<double>(history().size()))));

        auto good_counts = zero_table(space());
        auto bad_counts = zero_table(space());
        for (std::size_t rank = 0; rank < order.size(); ++rank) {
            auto& table = rank < n_good ? good_counts : bad_counts;
            const PipelineConfig& c = history()[order[rank]].config;
            for (std::size_t d = 0; d < space().size(); ++d)
                table[d][c.indices[d]] += 1.0;
        }
        const std::size_t n_bad = history().size() - n_good;

        std::vector<std::vector<double>> good_density(space().size());
        for (std::size_t d = 0; d < space().size(); ++d) {
            const std::size_t k = space().dimension(d).values.size();
            good_density[d].resize(k);
            for (std::size_t v = 0; v < k; ++v)
                good_density[d][v] =
                    add_one_density(static_cast<std::size_t>(good_counts[d][v]), n_good, k);
        }

        PipelineConfig best;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates_; ++i) {
            PipelineConfig c = sample_categorical(space(), good_density, rng());
            double score = 0.0;
            for (std::size_t d = 0; d < space().size(); ++d) {
                const std::size_t k = space().dimension(d).values.size();
                const double l = good_density[d][c.indices[d]];
                const double g = add_one_density(
                    static_cast<std::size_t>(bad_counts[d][c.indices[d]]), n_bad, k);
                score += std::log(l) - std::log(g);
            }
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        return best;
    }

    void do_observe(const TrialObservation&) override {}

private:
    std::size_t startup_;
    double gamma_;
    std::size_t candidates_;
};

// --- 7. cross-entropy method -----------------------------------------------------------------

class CrossEntropyMethod final : public Controller {
public:
    CrossEntropyMethod(const SearchSpace& space, std::uint64_t seed, int budget,
                       ControllerParams params)
        : Controller("cem", space, seed, budget, std::move(params)),
          batch_(static_cast<std::size_t>(this->params().get("cem.batch", 5))),
          elite_(static_cast<std::size_t>(this->params().get("cem.elite", 2))),
          mix_(this->params().get("cem.mixing", 0.3)),
          dist_(uniform_distributions(space)) {}

    PipelineConfig do_propose() override { return sample_categorical(space(), dist_, rng()); }

    void do_observe(const TrialObservation& obs) override {
        generation_.push_back(obs);
        if (generation_.size() < batch_)
            return;
        std::stable_sort(generation_.begin(), generation_.end(),
                         [](const TrialObservation& a, const TrialObservation& b) {
                             return a.reward > b.reward;
                         });
        const std::size_t n_elite = std::min(elite_, generation_.size());
        for (std::size_t d = 0; d < space().size(); ++d) {
            std::vector<double> freq(space().dimension(d).values.size(), 0.0);
            for (std::size_t e = 0; e < n_elite; ++e)
                freq[generation_[e].config.indices[d]] += 1.0 / static_cast<double>(n_elite);
            dist_[d] = mix_distribution(dist_[d], freq, mix_);
        }
        generation_.clear();
    }

private:
    std::size_t batch_, elite_;
    double mix_;
    std::vector<std::vector<double>> dist_;
    std::vector<TrialObservation> generation_;
};

// --- 8. regularized evolution -------------------------------------------------------------------

class RegularizedEvolution final : public Controller {
public:
    RegularizedEvolution(const SearchSpace& space, std::uint64_t seed, int budget,
                         ControllerParams params)
        : Controller("regevo", space, seed, budget, std::move(params)),
          capacity_(static_cast<std::size_t>(this->params().get("regevo.population", 8))),
          tournament_(static_cast<std::size_t>(this->params().get("regevo.tournament", 3))) {}

    PipelineConfig do_propose() override {
        if (history().size() < capacity_)
            return sample_uniform(space(), rng());
        const TrialObservation* parent = nullptr;
        for (std::size_t t = 0; t < tournament_; ++t) {
            const TrialObservation& pick = population_[rng().next_index(population_.size())];
            if (!parent || pick.reward > parent->reward)
                parent = &pick;
        }
        return mutate(parent->config);
    }

    void do_observe(const TrialObservation& obs) override {
        population_.push_back(obs);
        while (population_.size() > capacity_)
            population_.pop_front(); // aging: the oldest individual dies
    }

private:
    PipelineConfig mutate(const PipelineConfig& parent) {
        for (int attempt = 0; attempt < kResampleBound; ++attempt) {
            const std::size_t d = rng().next_index(space().size());
            const std::size_t count = space().dimension(d).values.size();
            if (count < 2)
                continue;
            std::size_t v = rng().next_index(count - 1);
            if (v >= parent.indices[d])
                ++v;
            PipelineConfig child = parent;
            child.indices[d] = static_cast<std::uint32_t>(v);
            if (space().valid(child))
                return child;
        }
        return sample_uniform(space(), rng());
    }

    std::size_t capacity_, tournament_;
    std::deque<TrialObservation> population_;
};

// --- 9. thompson sampling (factored Beta posteriors) ----------------------------------------------

class ThompsonSampling final : public Controller {
public:
    ThompsonSampling(const SearchSpace& space, std::uint64_t seed, int budget,
                     ControllerParams params)
        : Controller("thompson", space, seed, budget, std::move(params)),
          alpha_(zero_table(space)), beta_(zero_table(space)) {
        for (auto& dim : alpha_)
            std::fill(dim.begin(), dim.end(), 1.0);
        for (auto& dim : beta_)
            std::fill(dim.begin(), dim.end(), 1.0);
    }

    PipelineConfig do_propose() override {
        for (int attempt = 0; attempt < kResampleBound; ++attempt) {
            PipelineConfig c;
            c.indices.reserve(space().size());
            for (std::size_t d = 0; d < space().size(); ++d) {
                std::uint32_t best = 0;
                double best_sample = -1.0;
                for (std::size_t v = 0; v < alpha_[d].size(); ++v) {
                    const double s = rng().next_beta(alpha_[d][v], beta_[d][v]);
                    if (s > best_sample) {
                        best_sample = s;
                        best = static_cast<std::uint32_t>(v);
                    }
                }
                c.indices.push_back(best);
            }
            if (space().valid(c))
                return c;
        }
        return sample_uniform(space(), rng());
    }

    void do_observe(const TrialObservation& obs) override {
        const double r = std::clamp(obs.reward, 0.0, 1.0);
        for (std::size_t d = 0; d < space().size(); ++d) {
            alpha_[d][obs.config.indices[d]] += r;
            beta_[d][obs.config.indices[d]] += 1.0 - r;
        }
    }

private:
    std::vector<std::vector<double>> alpha_, beta_;
};

// --- 10. upper confidence bound -------------------------------------------------------------------

class UcbSearch final : public Controller {
public:
    UcbSearch(const SearchSpace& space, std::uint64_t seed, int budget, ControllerParams params)
        : Controller("ucb", space, seed, budget, std::move(params)),
          c_(this->params().get("ucb.c", std::sqrt(2.0))),
          sum_(zero_table(space)), count_(zero_table(space)) {}

    PipelineConfig do_propose() override {
        PipelineConfig c;
        c.indices.reserve(space().size());
        for (std::size_t d = 0; d < space().size(); ++d) {
            std::uint32_t best = 0;
            double best_score = -std::numeric_limits<double>::infinity();
            for (std::size_t v = 0; v < sum_[d].size(); ++v) {
                const std::size_t n = static_cast<std::size_t>(count_[d][v]);
                const double mean = n ? sum_[d][v] / static_cast<double>(n) : 0.0;
                const double score = ucb_score(mean, n, total_, c_);
                if (score > best_score) { // ties keep the lower value index
                    best_score = score;
                    best = static_cast<std::uint32_t>(v);
                }
            }
            c.indices.push_back(best);
        }
        if (!space().valid(c))
            return sample_uniform(space(), rng());
        return c;
    }

    void do_observe(const TrialObservation& obs) override {
        ++total_;
        for (std::size_t d = 0; d < space().size(); ++d) {
            sum_[d][obs.config.indices[d]] += obs.reward;
            count_[d][obs.config.indices[d]] += 1.0;
        }
    }

private:
    double c_;
    std::size_t total_ = 0;
    std::vector<std::vector<double>> sum_, count_;
};

// --- 11/12. GRPO and Dr. GRPO ------------------------------------------------------------------------

// Per-dimension softmax policy updated with group-relative advantages; the
// "dr" variant skips the standard-deviation normalization.
class GrpoSearch : public Controller {
public:
    GrpoSearch(std::string id, bool divide_by_std, const SearchSpace& space, std::uint64_t seed,
               int budget, ControllerParams params)
        : Controller(std::move(id), space, seed, budget, std::move(params)),
          group_size_(static_cast<std::size_t>(this->params().get("grpo.group", 5))),
          lr_(this->params().get("grpo.lr", 0.5)),
          divide_by_std_(divide_by_std), logits_(zero_table(space)) {}

    PipelineConfig do_propose() override {
        std::vector<std::vector<double>> dist(space().size());
        for (std::size_t d = 0; d < space().size(); ++d)
            dist[d] = softmax(logits_[d]);
        return sample_categorical(space(), dist, rng());
    }

    void do_observe(const TrialObservation& obs) override {
        group_.push_back(obs);
        if (group_.size() < group_size_)
            return;
        std::vector<double> rewards;
        rewards.reserve(group_.size());
        for (const TrialObservation& o : group_)
            rewards.push_back(o.reward);
        const std::vector<double> adv = group_advantages(rewards, divide_by_std_);
        for (std::size_t d = 0; d < space().size(); ++d) {
            const std::vector<double> pi = softmax(logits_[d]);
            std::vector<double> grad(pi.size(), 0.0);
            for (std::size_t i = 0; i < group_.size(); ++i) {
                for (std::size_t v = 0; v < pi.size(); ++v) {
                    const double onehot = group_[i].config.indices[d] == v ? 1.0 : 0.0;
                    grad[v] += adv[i] * (onehot - pi[v]);
                }
            }
            for (std::size_t v = 0; v < pi.size(); ++v)
                logits_[d][v] += lr_ * grad[v];
        }
        group_.clear();
    }

private:
    std::size_t group_size_;
    double lr_;
    bool divide_by_std_;
    std::vector<std::vector<double>> logits_;
    std::vector<TrialObservation> group_;
};

// --- 13. Reinforce++ -----------------------------------------------------------------------------------

// Critic-free per-trial policy gradient with globally normalized advantages
// and an entropy bonus pulling the policy toward uniform.
class ReinforcePlusPlus final : public Controller {
public:
    ReinforcePlusPlus(const SearchSpace& space, std::uint64_t seed, int budget,
                      ControllerParams params)
        : Controller("reinforcepp", space, seed, budget, std::move(params)),
          lr_(this->params().get("reinforcepp.lr", 0.5)),
          entropy_weight_(this->params().get("reinforcepp.entropy", 0.01)),
          logits_(zero_table(space)) {}

    PipelineConfig do_propose() override {
        std::vector<std::vector<double>> dist(space().size());
        for (std::size_t d = 0; d < space().size(); ++d)
            dist[d] = softmax(logits_[d]);
        return sample_categorical(space(), dist, rng());
    }

    void do_observe(const TrialObservation& obs) override {
        ++count_;
        sum_ += obs.reward;
        sum_sq_ += obs.reward * obs.reward;
        const double mean = sum_ / static_cast<double>(count_);
        const double var = std::max(0.0, sum_sq_ / static_cast<double>(count_) - mean * mean);
        const double adv =
            count_ == 1 ? 0.0 : (obs.reward - mean) / (std::sqrt(var) + 1e-8);
        for (std::size_t d = 0; d < space().size(); ++d) {
            const std::vector<double> pi = softmax(logits_[d]);
            const std::vector<double> ent = entropy_gradient(pi);
            for (std::size_t v = 0; v < pi.size(); ++v) {
                const double onehot = obs.config.indices[d] == v ? 1.0 : 0.0;
                logits_[d][v] += lr_ * adv * (onehot - pi[v]) + entropy_weight_ * ent[v];
            }
        }
    }

private:
    double lr_;
    double entropy_weight_;
    std::vector<std::vector<double>> logits_;
    std::size_t count_ = 0;
    double sum_ = 0.0, sum_sq_ = 0.0;
};

std::map<std::string, ControllerFactory>& registry() {
    static std::map<std::string, ControllerFactory> factories = [] {
        std::map<std::string, ControllerFactory> m;
        auto add = [&m](const std::string& id, auto maker) { m[id] = maker; };
        add("random", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new RandomSearch(s, seed, b, p));
        });
        add("greedy", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new GreedySearch(s, seed, b, p));
        });
        add("coordinate",
            [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
                return std::unique_ptr<Controller>(new CoordinateDescent(s, seed, b, p));
            });
        add("sa", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new SimulatedAnnealing(s, seed, b, p));
        });
        add("ils", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new IteratedLocalSearch(s, seed, b, p));
        });
        add("tpe", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new TpeSearch(s, seed, b, p));
        });
        add("cem", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new CrossEntropyMethod(s, seed, b, p));
        });
        add("regevo", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new RegularizedEvolution(s, seed, b, p));
        });
        add("thompson",
            [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
                return std::unique_ptr<Controller>(new ThompsonSampling(s, seed, b, p));
            });
        add("ucb", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new UcbSearch(s, seed, b, p));
        });
        add("grpo", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new GrpoSearch("grpo", true, s, seed, b, p));
        });
        add("drgrpo", [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
            return std::unique_ptr<Controller>(new GrpoSearch("drgrpo", false, s, seed, b, p));
        });
        add("reinforcepp",
            [](const SearchSpace& s, std::uint64_t seed, int b, const ControllerParams& p) {
                return std::unique_ptr<Controller>(new ReinforcePlusPlus(s, seed, b, p));
            });
        return m;
    }();
    return factories;
}

} // namespace

std::vector<std::string> controller_ids() {
    std::vector<std::string> ids;
    for (const auto& [id, factory] : registry())
        ids.push_back(id);
    return ids;
}

std::unique_ptr<Controller> make_controller(const std::string& algo_id, const SearchSpace& space,
                                            std::uint64_t seed, int budget,
                                            const ControllerParams& params) {
    auto it = registry().find(algo_id);
    if (it == registry().end())
        throw ProtocolError("unknown controller id: " + algo_id);
    return it->second(space, seed, budget, params);
}

bool register_controller(const std::string& algo_id, ControllerFactory factory) {
    return registry().emplace(algo_id, std::move(factory)).second;
}

} // namespace rag
