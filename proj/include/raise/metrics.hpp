#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rag {

class EmbedBackend;

// Token handling for the lexical metrics. `normalized` lowercases, strips
// punctuation and collapses whitespace before splitting; `raw` splits the
// input on whitespace as-is.
enum class TokenMode { normalized, raw };

std::vector<std::string> metric_tokens(std::string_view text, TokenMode mode);

// --- per-answer metrics, string level ---------------------------------------

int exact_match(std::string_view answer, std::string_view reference,
                TokenMode mode = TokenMode::normalized);

double token_f1(std::string_view answer, std::string_view reference,
                TokenMode mode = TokenMode::normalized);

double rouge_l(std::string_view answer, std::string_view reference,
               TokenMode mode = TokenMode::normalized);

double bleu(std::string_view answer, std::string_view reference,
            TokenMode mode = TokenMode::normalized);

double meteor(std::string_view answer, std::string_view reference,
              TokenMode mode = TokenMode::normalized);

// --- token-level cores (shared with the tests' oracles) ---------------------

double token_f1_tokens(std::span<const std::string> answer, std::span<const std::string> reference);
double rouge_l_tokens(std::span<const std::string> answer, std::span<const std::string> reference);
double bleu_tokens(std::span<const std::string> answer, std::span<const std::string> reference);
double meteor_tokens(std::span<const std::string> answer, std::span<const std::string> reference);

// Smoothed modified n-gram precision used by bleu_tokens: (clipped matches
// + 1) / (candidate n-gram count + 1).
double bleu_modified_precision(std::span<const std::string> answer,
                               std::span<const std::string> reference, std::size_t n);

// Greedy-matching embedding recall over per-token embeddings (the recall term
// of the BERTScore family, over whatever embedding provider is configured).
// Returns nullopt when the provider fails.
std::optional<double> bertscore_recall(std::string_view answer, std::string_view reference,
                                       EmbedBackend& provider,
                                       TokenMode mode = TokenMode::normalized);

struct JudgeVerdict {
    int score = 0; // in {0,1}
    bool parse_failure = false;
};

// Extract the first JSON object in raw text and read its integer "score"
// field; anything unparseable scores 0 with the failure flag set.
JudgeVerdict parse_judge(std::string_view raw);

// --- aggregation -------------------------------------------------------------

struct MetricReport {
    double rouge_l = 0.0;
    double meteor = 0.0;
    double token_f1 = 0.0;
    double bleu = 0.0;
    std::optional<int> em;
    std::optional<double> bertscore_recall;
    std::optional<int> judge;
    double weighted = 0.0;
    std::vector<std::string> notes;
};

// Non-negative per-metric weights, sum 1 within 1e-9. Defaults to 0.25 on
// each of rouge_l / meteor / token_f1 / bleu.
class MetricWeights {
public:
    static MetricWeights defaults();
    // "rouge_l=0.25,meteor=0.25,..." or the literal "default".
    static MetricWeights parse(std::string_view spec);
    static MetricWeights from_map(std::map<std::string, double> weights);

    const std::map<std::string, double>& values() const { return weights_; }
    double weight(std::string_view metric) const;
    bool uses(std::string_view metric) const;

    // Stable digest; part of the cache key's eval mode.
    std::string digest() const;

private:
    explicit MetricWeights(std::map<std::string, double> weights);
    std::map<std::string, double> weights_;
};

// Score one answer against every reference, taking the per-metric max.
// `bert_provider` may be null when the weights do not use bertscore_recall;
// `judge` is filled in by callers that ran a judge model.
MetricReport score_answer(std::string_view answer, std::span<const std::string> references,
                          const MetricWeights& weights,
                          TokenMode mode = TokenMode::normalized,
                          EmbedBackend* bert_provider = nullptr,
                          std::optional<int> judge = std::nullopt);

struct DatasetScore {
    double reward = 0.0; // arithmetic mean of per-item weighted scores
    std::vector<MetricReport> items;
};

struct ScoredItem {
    std::string answer;
    std::vector<std::string> references;
};

DatasetScore score_dataset(std::span<const ScoredItem> items, const MetricWeights& weights,
                           TokenMode mode = TokenMode::normalized,
                           EmbedBackend* bert_provider = nullptr);

// Mean of the per-item metric values; the aggregate stored in run logs.
MetricReport aggregate_reports(std::span<const MetricReport> items);

} // namespace rag
