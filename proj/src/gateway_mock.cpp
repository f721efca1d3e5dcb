#include "raise/gateway_mock.hpp"

#include "raise/digest.hpp"
#include "raise/metrics.hpp"
#include "raise/rng.hpp"
#include "raise/textproc.hpp"

#include "json.hpp"

#include <array>
#include <cmath>
#include <set>

namespace rag {

using nlohmann::json;

namespace {

const std::array<std::string_view, 50> kStopwords = {
    "a",    "an",   "the",  "and",  "or",    "but",  "if",    "then",  "else",  "when",
    "while", "of",  "to",   "in",   "on",    "at",   "by",    "for",   "with",  "about",
    "as",   "into", "from", "up",   "down",  "out",  "over",  "under", "is",    "are",
    "was",  "were", "be",   "been", "being", "am",   "do",    "does",  "did",   "have",
    "has",  "had",  "it",   "its",  "this",  "that", "these", "those", "not",   "no"};

std::set<std::string> token_set(std::string_view text) {
    std::set<std::string> out;
    for (std::string& t : pipeline_tokens(text))
        out.insert(std::move(t));
    return out;
}

ChatResult mock_prune(const ChatRequest& request) {
    const auto parts = parse_question_context(request.user_content);
    if (!parts)
        return ChatResult::fail(ChatFailure::malformed, "mock pruner: unparseable user content");
    std::set<std::string> question_tokens;
    for (const std::string& t : pipeline_tokens(parts->question))
        if (!is_mock_stopword(t))
            question_tokens.insert(t);
    std::vector<std::string> kept;
    for (const std::string& sentence : split_sentences(parts->context)) {
        bool keep = false;
        for (const std::string& t : pipeline_tokens(sentence)) {
            if (question_tokens.count(t)) {
                keep = true;
                break;
            }
        }
        if (keep)
            kept.push_back(sentence);
    }
    if (kept.empty())
        return ChatResult::fail(ChatFailure::malformed, "mock pruner: nothing to keep");
    return ChatResult::success(join(kept, " "));
}

ChatResult mock_generate(const ChatRequest& request) {
    const auto parts = parse_question_context(request.user_content);
    if (!parts)
        return ChatResult::fail(ChatFailure::malformed, "mock generator: unparseable user content");
    const std::set<std::string> question_tokens = token_set(parts->question);
    const std::vector<std::string> sentences = split_sentences(parts->context);
    if (sentences.empty())
        return ChatResult::fail(ChatFailure::malformed, "mock generator: empty context");
    std::size_t best = 0, best_overlap = 0;
    bool first = true;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        std::size_t overlap = 0;
        for (const std::string& t : token_set(sentences[i]))
            if (question_tokens.count(t))
                ++overlap;
        if (first || overlap > best_overlap) {
            best = i;
            best_overlap = overlap;
            first = false;
        }
    }
    return ChatResult::success(sentences[best]);
}

ChatResult mock_judge(const ChatRequest& request) {
    const auto parts = parse_judge_user(request.user_content);
    if (!parts)
        return ChatResult::fail(ChatFailure::malformed, "mock judge: unparseable user content");
    double best_f1 = 0.0;
    for (const std::string& ref : parts->references)
        best_f1 = std::max(best_f1, token_f1(parts->answer, ref));
    json verdict = {
        {"score", best_f1 >= 0.5 ? 1 : 0},
        {"reason", best_f1 >= 0.5 ? "answer overlaps a reference" : "answer does not match"}};
    return ChatResult::success(verdict.dump());
}

} // namespace

bool is_mock_stopword(std::string_view token) {
    for (std::string_view w : kStopwords)
        if (w == token)
            return true;
    return false;
}

ChatResult MockChatBackend::complete(const ChatRequest& request) {
    const auto prompt = identify_prompt(request.system_prompt);
    if (!prompt)
        return ChatResult::fail(ChatFailure::malformed, "mock: unrecognized system prompt");
    switch (prompt->role) {
    case PromptRole::rewriter:
        return ChatResult::success(request.user_content);
    case PromptRole::pruner:
        return mock_prune(request);
    case PromptRole::generator:
        return mock_generate(request);
    case PromptRole::judge:
        return mock_judge(request);
    }
    return ChatResult::fail(ChatFailure::malformed, "mock: unknown role");
}

HashEmbedBackend::HashEmbedBackend(std::size_t dim) : dim_(dim == 0 ? 256 : dim) {}

EmbedResult HashEmbedBackend::embed(std::span<const std::string> texts,
                                    const std::string& model_label) {
    EmbedResult out;
    out.vectors.reserve(texts.size());
    const std::uint64_t salt = fnv1a64(model_label);
    for (const std::string& text : texts) {
        EmbeddingVector vec;
        vec.provider_id = "hash-" + std::to_string(dim_) + "/" + model_label;
        vec.values.assign(dim_, 0.0f);
        for (const std::string& token : pipeline_tokens(text)) {
            const std::uint64_t h = mix64(fnv1a64(token), salt);
            const std::size_t slot = static_cast<std::size_t>(h % dim_);
            vec.values[slot] += (h >> 63) ? 1.0f : -1.0f;
        }
        double norm_sq = 0.0;
        for (float v : vec.values)
            norm_sq += static_cast<double>(v) * static_cast<double>(v);
        if (norm_sq == 0.0) {
            vec.values[0] = 1.0f;
        } else {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (float& v : vec.values)
                v = static_cast<float>(v * inv);
        }
        out.vectors.push_back(std::move(vec));
    }
    return out;
}

} // namespace rag
