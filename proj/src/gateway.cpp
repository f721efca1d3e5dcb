#include "raise/gateway.hpp"

#include "json.hpp"

#include <fstream>

namespace rag {

using nlohmann::json;

std::string_view to_string(ChatFailure cause) {
    switch (cause) {
    case ChatFailure::none: return "none";
    case ChatFailure::timeout: return "timeout";
    case ChatFailure::transport: return "transport";
    case ChatFailure::malformed: return "malformed";
    }
    return "none";
}

std::string_view to_string(PromptRole role) {
    switch (role) {
    case PromptRole::rewriter: return "rewriter";
    case PromptRole::pruner: return "pruner";
    case PromptRole::generator: return "generator";
    case PromptRole::judge: return "judge";
    }
    return "generator";
}

const std::vector<PromptTemplate>& all_prompts() {
    static const std::vector<PromptTemplate> prompts = {
        {PromptRole::rewriter, "P1",
         "Rewrite the user query for retrieval. Output only the rewritten query; do not answer "
         "the question or add explanations."},
        {PromptRole::rewriter, "P2",
         "Rewrite the user query for retrieval with keywords and entities. Output only the "
         "rewritten query; do not answer the question or add explanations."},
        {PromptRole::rewriter, "P3",
         "Rewrite the user query as a standalone question for retrieval. Output only the "
         "rewritten query; do not answer the question or add explanations."},
        {PromptRole::pruner, "P1",
         "Keep only sentences that directly support the answer. Output only the pruned context "
         "text; do not answer the question or add explanations."},
        {PromptRole::pruner, "P2",
         "Select the minimal context needed to answer. Output only the pruned context text; do "
         "not answer the question or add explanations."},
        {PromptRole::pruner, "P3",
         "Remove irrelevant content and keep key evidence only. Output only the pruned context "
         "text; do not answer the question or add explanations."},
        {PromptRole::generator, "fixed",
         "Answer the question using only the provided context. If the answer is not in the "
         "context, state that it is unknown."},
        {PromptRole::judge, "fixed",
         "Judge whether the answer matches the reference list and return a JSON score with a "
         "short reason."},
    };
    return prompts;
}

const PromptTemplate& get_prompt(PromptRole role, std::string_view id) {
    for (const PromptTemplate& p : all_prompts())
        if (p.role == role && p.id == id)
            return p;
    throw GatewayError("no prompt registered for (" + std::string(to_string(role)) + ", " +
                       std::string(id) + ")");
}

std::optional<PromptTemplate> identify_prompt(std::string_view system_prompt) {
    for (const PromptTemplate& p : all_prompts())
        if (p.text == system_prompt)
            return p;
    return std::nullopt;
}

namespace {

constexpr std::string_view kQuestionMarker = "Question:\n";
constexpr std::string_view kContextMarker = "\n\nContext:\n";
constexpr std::string_view kAnswerMarker = "\n\nAnswer:\n";
constexpr std::string_view kReferencesMarker = "\n\nReferences:\n";

} // namespace

std::string compose_prune_user(std::string_view question, std::string_view context) {
    std::string out;
    out += kQuestionMarker;
    out += question;
    out += kContextMarker;
    out += context;
    return out;
}

std::string compose_generate_user(std::string_view question, std::string_view context) {
    return compose_prune_user(question, context);
}

std::string compose_judge_user(std::string_view question, std::string_view answer,
                               std::span<const std::string> references) {
    std::string out;
    out += kQuestionMarker;
    out += question;
    out += kAnswerMarker;
    out += answer;
    out += kReferencesMarker;
    json refs = json::array();
    for (const std::string& r : references)
        refs.push_back(r);
    out += refs.dump();
    return out;
}

std::optional<QuestionContext> parse_question_context(std::string_view user_content) {
    if (user_content.substr(0, kQuestionMarker.size()) != kQuestionMarker)
        return std::nullopt;
    const std::size_t ctx = user_content.find(kContextMarker);
    if (ctx == std::string_view::npos)
        return std::nullopt;
    QuestionContext parts;
    parts.question = std::string(user_content.substr(kQuestionMarker.size(),
                                                     ctx - kQuestionMarker.size()));
    parts.context = std::string(user_content.substr(ctx + kContextMarker.size()));
    return parts;
}

std::optional<JudgeParts> parse_judge_user(std::string_view user_content) {
    if (user_content.substr(0, kQuestionMarker.size()) != kQuestionMarker)
        return std::nullopt;
    const std::size_t ans = user_content.find(kAnswerMarker);
    const std::size_t refs = user_content.find(kReferencesMarker);
    if (ans == std::string_view::npos || refs == std::string_view::npos || refs < ans)
        return std::nullopt;
    JudgeParts parts;
    parts.question = std::string(user_content.substr(kQuestionMarker.size(),
                                                     ans - kQuestionMarker.size()));
    parts.answer = std::string(user_content.substr(ans + kAnswerMarker.size(),
                                                   refs - ans - kAnswerMarker.size()));
    json doc = json::parse(user_content.substr(refs + kReferencesMarker.size()), nullptr, false);
    if (doc.is_discarded() || !doc.is_array())
        return std::nullopt;
    for (const json& r : doc)
        parts.references.push_back(r.get<std::string>());
    return parts;
}

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw GatewayError("cannot open gateway config: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw GatewayError("gateway config " + path.string() + ": " + e.what());
    }
    GatewayConfig cfg;
    if (doc.contains("chat")) {
        const json& c = doc["chat"];
        cfg.chat.kind = c.value("kind", cfg.chat.kind);
        cfg.chat.base_url = c.value("base_url", cfg.chat.base_url);
        cfg.chat.model = c.value("model", cfg.chat.model);
        cfg.chat.key_env = c.value("key_env", cfg.chat.key_env);
        cfg.chat.temperature = c.value("temperature", cfg.chat.temperature);
        cfg.chat.max_tokens = c.value("max_tokens", cfg.chat.max_tokens);
        cfg.chat.timeout_ms = c.value("timeout_ms", cfg.chat.timeout_ms);
    }
    if (doc.contains("embed")) {
        const json& e = doc["embed"];
        cfg.embed.kind = e.value("kind", cfg.embed.kind);
        cfg.embed.base_url = e.value("base_url", cfg.embed.base_url);
        cfg.embed.key_env = e.value("key_env", cfg.embed.key_env);
        cfg.embed.dim = e.value("dim", cfg.embed.dim);
        if (e.contains("model_map"))
            for (const auto& [label, model] : e["model_map"].items())
                cfg.embed.model_map.emplace_back(label, model.get<std::string>());
    }
    if (doc.contains("rerank")) {
        const json& r = doc["rerank"];
        cfg.rerank.kind = r.value("kind", cfg.rerank.kind);
        cfg.rerank.base_url = r.value("base_url", cfg.rerank.base_url);
        cfg.rerank.model = r.value("model", cfg.rerank.model);
        cfg.rerank.key_env = r.value("key_env", cfg.rerank.key_env);
    }
    return cfg;
}

ChatRequest make_chat_request(const GatewayConfig::Chat& chat, std::string system_prompt,
                              std::string user_content) {
    ChatRequest req;
    req.system_prompt = std::move(system_prompt);
    req.user_content = std::move(user_content);
    req.temperature = chat.temperature;
    req.max_tokens = chat.max_tokens;
    req.timeout = std::chrono::milliseconds(chat.timeout_ms);
    return req;
}

} // namespace rag
