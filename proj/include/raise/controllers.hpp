#pragma once

#include "raise/rng.hpp"
#include "raise/search_space.hpp"

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rag {

struct ProtocolError : std::logic_error {
    using std::logic_error::logic_error;
};

struct TrialObservation {
    int trial_index = 0;
    PipelineConfig config;
    double reward = 0.0;
    bool failed = false; // zero-reward failures still count as observations
};

using TrialHistory = std::vector<TrialObservation>;

// Named numeric hyperparameters with defaults; every constant in the preset
// controllers is overridable through here.
struct ControllerParams {
    std::map<std::string, double> values;

    double get(const std::string& key, double fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }
};

// The propose/observe contract shared by all thirteen algorithms. Strictly
// sequential: propose() may be called exactly `budget` times, each followed
// by exactly one observe() for the proposed config (cache-served and failed
// trials included). State transitions are a pure function of (seed,
// observation sequence).
class Controller {
public:
    virtual ~Controller() = default;

    const std::string& id() const { return id_; }
    int budget() const { return budget_; }
    const SearchSpace& space() const { return space_; }
    const TrialHistory& history() const { return history_; }
    int proposals_made() const { return proposals_; }

    PipelineConfig propose();
    void observe(const PipelineConfig& config, double reward);

protected:
    Controller(std::string id, const SearchSpace& space, std::uint64_t seed, int budget,
               ControllerParams params);

    virtual PipelineConfig do_propose() = 0;
    virtual void do_observe(const TrialObservation& obs) = 0;

    SplitRng& rng() { return rng_; }
    const ControllerParams& params() const { return params_; }

private:
    std::string id_;
    SearchSpace space_;
    ControllerParams params_;
    SplitRng rng_;
    int budget_ = 0;
    int proposals_ = 0;
    bool awaiting_observation_ = false;
    PipelineConfig last_proposal_;
    TrialHistory history_;
};

using ControllerFactory = std::function<std::unique_ptr<Controller>(
    const SearchSpace&, std::uint64_t seed, int budget, const ControllerParams&)>;

// Preset algorithm ids: random, greedy, coordinate, sa, ils, tpe, cem,
// regevo, thompson, ucb, grpo, drgrpo, reinforcepp.
std::vector<std::string> controller_ids();

std::unique_ptr<Controller> make_controller(const std::string& algo_id, const SearchSpace& space,
                                            std::uint64_t seed, int budget,
                                            const ControllerParams& params = {});

// Extension point: register a custom algorithm by id. Returns false if the
// id is already taken.
bool register_controller(const std::string& algo_id, ControllerFactory factory);

// --- pure scoring helpers (the hand-checkable pieces) -------------------------

// r_bar + c * sqrt(ln(total) / n); +inf while the arm is unvisited.
double ucb_score(double mean, std::size_t pulls, std::size_t total, double c);

// Metropolis acceptance: 1 for non-negative deltas, exp(delta / T) otherwise.
double sa_accept_probability(double delta, double temperature);

// Add-one-smoothed categorical density (count + 1) / (total + num_values).
double add_one_density(std::size_t count, std::size_t total, std::size_t num_values);

// p <- (1 - mix) * p + mix * elite_freq, elementwise.
std::vector<double> mix_distribution(const std::vector<double>& p,
                                     const std::vector<double>& elite_freq, double mix);

// Group-relative advantages: mean-centered, optionally divided by the
// population standard deviation + 1e-8.
std::vector<double> group_advantages(std::span<const double> rewards, bool divide_by_std);

std::vector<double> softmax(std::span<const double> logits);

// d entropy / d logits for a softmax policy: -p_k (log p_k + H).
std::vector<double> entropy_gradient(std::span<const double> probs);

} // namespace rag
