#include "raise/metrics.hpp"

#include "raise/digest.hpp"
#include "raise/gateway.hpp"
#include "raise/textproc.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace rag {

using nlohmann::json;

std::vector<std::string> metric_tokens(std::string_view text, TokenMode mode) {
    return mode == TokenMode::normalized ? normalized_tokens(text)
                                         : split_whitespace(text);
}

int exact_match(std::string_view answer, std::string_view reference, TokenMode mode) {
    if (mode == TokenMode::raw)
        return answer == reference ? 1 : 0;
    return normalize_text(answer) == normalize_text(reference) ? 1 : 0;
}

// Bag-of-words F1 with multiset intersection. Both sides empty counts as a
// perfect match, exactly one empty as zero.
double token_f1_tokens(std::span<const std::string> answer, std::span<const std::string> reference) {
    if (answer.empty() && reference.empty())
        return 1.0;
    if (answer.empty() || reference.empty())
        return 0.0;
    std::map<std::string_view, std::size_t> counts;
    for (const std::string& t : answer)
        ++counts[t];
    std::size_t overlap = 0;
    for (const std::string& t : reference) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return 2.0 * static_cast<double>(overlap) /
           static_cast<double>(answer.size() + reference.size());
}

namespace {

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    if (a.empty() || b.empty())
        return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace

// LCS-based F with beta = 1: harmonic mean of LCS recall and precision.
double rouge_l_tokens(std::span<const std::string> answer, std::span<const std::string> reference) {
    if (answer.empty() && reference.empty())
        return 1.0;
    if (answer.empty() || reference.empty())
        return 0.0;
    const double lcs = static_cast<double>(lcs_length(answer, reference));
    if (lcs == 0.0)
        return 0.0;
    const double r = lcs / static_cast<double>(reference.size());
    const double p = lcs / static_cast<double>(answer.size());
    return 2.0 * r * p / (r + p);
}

double bleu_modified_precision(std::span<const std::string> answer,
                               std::span<const std::string> reference, std::size_t n) {
    std::map<std::string, std::size_t> cand, ref;
    auto grams = [n](std::span<const std::string> toks, std::map<std::string, std::size_t>& out) {
        if (toks.size() < n)
            return;
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            std::string g;
            for (std::size_t k = 0; k < n; ++k) {
                if (k)
                    g.push_back('\x1f');
                g += toks[i + k];
            }
            ++out[g];
        }
    };
    grams(answer, cand);
    grams(reference, ref);
    std::size_t total = 0, matched = 0;
    for (const auto& [g, c] : cand) {
        total += c;
        auto it = ref.find(g);
        if (it != ref.end())
            matched += std::min(c, it->second);
    }
    return (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
}

// Sentence-level BLEU-4, uniform weights, add-one smoothing on every modified
// precision, brevity penalty min(1, exp(1 - |ref|/|cand|)).
double bleu_tokens(std::span<const std::string> answer, std::span<const std::string> reference) {
    if (answer.empty())
        return 0.0;
    constexpr std::size_t kMaxOrder = 4;
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= kMaxOrder; ++n)
        log_sum += 0.25 * std::log(bleu_modified_precision(answer, reference, n));
    const double bp = std::min(
        1.0, std::exp(1.0 - static_cast<double>(reference.size()) / static_cast<double>(answer.size())));
    return bp * std::exp(log_sum);
}

// Exact-unigram METEOR: greedy left-to-right alignment, F-mean with the
// 9-to-1 recall bias, fragmentation penalty 0.5 * (chunks / matches)^3.
double meteor_tokens(std::span<const std::string> answer, std::span<const std::string> reference) {
    if (answer.empty() || reference.empty())
        return 0.0;
    std::vector<bool> used(reference.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // (answer pos, reference pos)
    for (std::size_t i = 0; i < answer.size(); ++i) {
        for (std::size_t j = 0; j < reference.size(); ++j) {
            if (!used[j] && reference[j] == answer[i]) {
                used[j] = true;
                pairs.emplace_back(i, j);
                break;
            }
        }
    }
    const double m = static_cast<double>(pairs.size());
    if (m == 0.0)
        return 0.0;
    const double p = m / static_cast<double>(answer.size());
    const double r = m / static_cast<double>(reference.size());
    const double f = 10.0 * p * r / (r + 9.0 * p);
    std::size_t chunks = 1;
    for (std::size_t k = 1; k < pairs.size(); ++k) {
        if (pairs[k].first != pairs[k - 1].first + 1 || pairs[k].second != pairs[k - 1].second + 1)
            ++chunks;
    }
    const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / m, 3.0);
    return f * (1.0 - penalty);
}

double token_f1(std::string_view answer, std::string_view reference, TokenMode mode) {
    return token_f1_tokens(metric_tokens(answer, mode), metric_tokens(reference, mode));
}

double rouge_l(std::string_view answer, std::string_view reference, TokenMode mode) {
    return rouge_l_tokens(metric_tokens(answer, mode), metric_tokens(reference, mode));
}

double bleu(std::string_view answer, std::string_view reference, TokenMode mode) {
    return bleu_tokens(metric_tokens(answer, mode), metric_tokens(reference, mode));
}

double meteor(std::string_view answer, std::string_view reference, TokenMode mode) {
    return meteor_tokens(metric_tokens(answer, mode), metric_tokens(reference, mode));
}

std::optional<double> bertscore_recall(std::string_view answer, std::string_view reference,
                                       EmbedBackend& provider, TokenMode mode) {
    const std::vector<std::string> cand = metric_tokens(answer, mode);
    const std::vector<std::string> ref = metric_tokens(reference, mode);
    if (ref.empty())
        return cand.empty() ? std::optional<double>(1.0) : std::optional<double>(0.0);
    if (cand.empty())
        return 0.0;
    std::vector<std::string> all(cand.begin(), cand.end());
    all.insert(all.end(), ref.begin(), ref.end());
    const EmbedResult res = provider.embed(all, provider.default_label());
    if (!res.ok())
        return std::nullopt;
    auto cosine = [](const EmbeddingVector& a, const EmbeddingVector& b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < a.values.size() && i < b.values.size(); ++i)
            dot += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
        return dot;
    };
    double sum = 0.0;
    for (std::size_t j = 0; j < ref.size(); ++j) {
        double best = -1.0;
        for (std::size_t i = 0; i < cand.size(); ++i)
            best = std::max(best, cosine(res.vectors[cand.size() + j], res.vectors[i]));
        sum += best;
    }
    return sum / static_cast<double>(ref.size());
}

JudgeVerdict parse_judge(std::string_view raw) {
    const std::size_t open = raw.find('{');
    if (open == std::string_view::npos)
        return {0, true};
    // First balanced object starting at the first brace.
    int depth = 0;
    std::size_t end = std::string_view::npos;
    bool in_string = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}') {
            if (--depth == 0) {
                end = i + 1;
                break;
            }
        }
    }
    if (end == std::string_view::npos)
        return {0, true};
    json doc = json::parse(raw.substr(open, end - open), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("score") ||
        !doc["score"].is_number_integer())
        return {0, true};
    const int score = doc["score"].get<int>();
    if (score != 0 && score != 1)
        return {0, true};
    return {score, false};
}

// --- weights and aggregation -------------------------------------------------

namespace {

const std::vector<std::string>& known_metrics() {
    static const std::vector<std::string> names = {
        "rouge_l", "meteor", "token_f1", "bleu", "em", "bertscore_recall", "judge"};
    return names;
}

} // namespace

MetricWeights::MetricWeights(std::map<std::string, double> weights)
    : weights_(std::move(weights)) {
    double sum = 0.0;
    for (const auto& [name, w] : weights_) {
        if (std::find(known_metrics().begin(), known_metrics().end(), name) ==
            known_metrics().end())
            throw std::invalid_argument("unknown metric in weights: " + name);
        if (w < 0.0)
            throw std::invalid_argument("negative weight for metric " + name);
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("metric weights must sum to 1, got " + std::to_string(sum));
}

MetricWeights MetricWeights::defaults() {
    return MetricWeights(
        {{"rouge_l", 0.25}, {"meteor", 0.25}, {"token_f1", 0.25}, {"bleu", 0.25}});
}

MetricWeights MetricWeights::from_map(std::map<std::string, double> weights) {
    return MetricWeights(std::move(weights));
}

MetricWeights MetricWeights::parse(std::string_view spec) {
    if (spec.empty() || spec == "default")
        return defaults();
    std::map<std::string, double> weights;
    std::size_t pos = 0;
    while (pos <= spec.size()) {
        const std::size_t end = std::min(spec.find(',', pos), spec.size());
        std::string_view item = spec.substr(pos, end - pos);
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument("weight spec item missing '=': " + std::string(item));
        weights[std::string(item.substr(0, eq))] = std::stod(std::string(item.substr(eq + 1)));
        if (end == spec.size())
            break;
        pos = end + 1;
    }
    return MetricWeights(std::move(weights));
}

double MetricWeights::weight(std::string_view metric) const {
    auto it = weights_.find(std::string(metric));
    return it == weights_.end() ? 0.0 : it->second;
}

bool MetricWeights::uses(std::string_view metric) const {
    return weight(metric) > 0.0;
}

std::string MetricWeights::digest() const {
    std::string repr;
    char buf[64];
    for (const auto& [name, w] : weights_) {
        std::snprintf(buf, sizeof(buf), "%s=%.12g;", name.c_str(), w);
        repr += buf;
    }
    return sha256_hex(repr);
}

MetricReport score_answer(std::string_view answer, std::span<const std::string> references,
                          const MetricWeights& weights, TokenMode mode,
                          EmbedBackend* bert_provider, std::optional<int> judge) {
    if (references.empty())
        throw std::invalid_argument("score_answer: references must be non-empty");
    MetricReport report;
    report.rouge_l = report.meteor = report.token_f1 = report.bleu = 0.0;
    int em_best = 0;
    std::optional<double> bert_best;
    bool bert_failed = false;
    for (const std::string& ref : references) {
        report.rouge_l = std::max(report.rouge_l, rouge_l(answer, ref, mode));
        report.meteor = std::max(report.meteor, meteor(answer, ref, mode));
        report.token_f1 = std::max(report.token_f1, token_f1(answer, ref, mode));
        report.bleu = std::max(report.bleu, bleu(answer, ref, mode));
        em_best = std::max(em_best, exact_match(answer, ref, mode));
        if (bert_provider) {
            if (auto b = bertscore_recall(answer, ref, *bert_provider, mode))
                bert_best = std::max(bert_best.value_or(-1.0), *b);
            else
                bert_failed = true;
        }
    }
    report.em = em_best;
    if (bert_best)
        report.bertscore_recall = bert_best;
    else if (bert_failed)
        report.notes.push_back("bertscore_recall omitted: embedding provider failure");
    report.judge = judge;

    double weighted = 0.0;
    weighted += weights.weight("rouge_l") * report.rouge_l;
    weighted += weights.weight("meteor") * report.meteor;
    weighted += weights.weight("token_f1") * report.token_f1;
    weighted += weights.weight("bleu") * report.bleu;
    weighted += weights.weight("em") * static_cast<double>(report.em.value_or(0));
    if (weights.uses("bertscore_recall")) {
        if (report.bertscore_recall)
            weighted += weights.weight("bertscore_recall") * *report.bertscore_recall;
        else
            report.notes.push_back("weighted objective missing bertscore_recall contribution");
    }
    if (weights.uses("judge"))
        weighted += weights.weight("judge") * static_cast<double>(report.judge.value_or(0));
    report.weighted = weighted;
    return report;
}

DatasetScore score_dataset(std::span<const ScoredItem> items, const MetricWeights& weights,
                           TokenMode mode, EmbedBackend* bert_provider) {
    if (items.empty())
        throw std::invalid_argument("score_dataset: need at least one item");
    DatasetScore out;
    out.items.reserve(items.size());
    double sum = 0.0;
    for (const ScoredItem& item : items) {
        out.items.push_back(score_answer(item.answer, item.references, weights, mode, bert_provider));
        sum += out.items.back().weighted;
    }
    out.reward = sum / static_cast<double>(items.size());
    return out;
}

MetricReport aggregate_reports(std::span<const MetricReport> items) {
    MetricReport agg;
    if (items.empty())
        return agg;
    const double n = static_cast<double>(items.size());
    double em_sum = 0.0, bert_sum = 0.0, judge_sum = 0.0;
    std::size_t em_n = 0, bert_n = 0, judge_n = 0;
    for (const MetricReport& r : items) {
        agg.rouge_l += r.rouge_l / n;
        agg.meteor += r.meteor / n;
        agg.token_f1 += r.token_f1 / n;
        agg.bleu += r.bleu / n;
        agg.weighted += r.weighted / n;
        if (r.em) {
            em_sum += *r.em;
            ++em_n;
        }
        if (r.bertscore_recall) {
            bert_sum += *r.bertscore_recall;
            ++bert_n;
        }
        if (r.judge) {
            judge_sum += *r.judge;
            ++judge_n;
        }
    }
    if (em_n)
        agg.em = static_cast<int>(em_sum / static_cast<double>(em_n) + 0.5);
    if (bert_n)
        agg.bertscore_recall = bert_sum / static_cast<double>(bert_n);
    if (judge_n)
        agg.judge = static_cast<int>(judge_sum / static_cast<double>(judge_n) + 0.5);
    return agg;
}

} // namespace rag
