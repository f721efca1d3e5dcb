#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rag {

struct GatewayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- chat completion ---------------------------------------------------------

enum class ChatFailure { none, timeout, transport, malformed };

std::string_view to_string(ChatFailure cause);

struct ChatRequest {
    std::string system_prompt;
    std::string user_content;
    double temperature = 0.0;
    int max_tokens = 256;
    std::chrono::milliseconds timeout{60000};
};

struct ChatResult {
    std::string text;
    ChatFailure failure = ChatFailure::none;
    std::string detail;

    bool ok() const { return failure == ChatFailure::none; }

    static ChatResult success(std::string text) { return {std::move(text), ChatFailure::none, {}}; }
    static ChatResult fail(ChatFailure cause, std::string detail) {
        return {{}, cause, std::move(detail)};
    }
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResult complete(const ChatRequest& request) = 0;
};

// --- embeddings ---------------------------------------------------------------

struct EmbeddingVector {
    std::vector<float> values;
    std::string provider_id;
};

struct EmbedResult {
    std::vector<EmbeddingVector> vectors;
    bool failed = false;
    std::string detail;

    bool ok() const { return !failed; }
};

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    // One vector per input text; `model_label` selects the provider-side model
    // (the search space's embedder labels are resolved here).
    virtual EmbedResult embed(std::span<const std::string> texts,
                              const std::string& model_label) = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string default_label() const { return "emb-a"; }
};

// --- rerank scoring (optional remote cross-encoder) ---------------------------

struct RerankResult {
    std::vector<double> scores;
    bool failed = false;
    std::string detail;

    bool ok() const { return !failed; }
};

class RerankBackend {
public:
    virtual ~RerankBackend() = default;
    virtual RerankResult score(const std::string& query, std::span<const std::string> passages,
                               const std::string& model_label) = 0;
};

// --- prompt registry -----------------------------------------------------------

enum class PromptRole { rewriter, pruner, generator, judge };

std::string_view to_string(PromptRole role);

struct PromptTemplate {
    PromptRole role;
    std::string id; // P1..P3 for rewriter/pruner, "fixed" otherwise
    std::string text;
};

// Throws GatewayError for unregistered (role, id).
const PromptTemplate& get_prompt(PromptRole role, std::string_view id);
const std::vector<PromptTemplate>& all_prompts();

// Reverse lookup by verbatim template text; the mock backend uses it to infer
// which module is calling.
std::optional<PromptTemplate> identify_prompt(std::string_view system_prompt);

// --- message composition --------------------------------------------------------
// Shared between the pipeline (which writes requests) and the mock backend
// (which parses them back).

std::string compose_prune_user(std::string_view question, std::string_view context);
std::string compose_generate_user(std::string_view question, std::string_view context);
std::string compose_judge_user(std::string_view question, std::string_view answer,
                               std::span<const std::string> references);

struct QuestionContext {
    std::string question;
    std::string context;
};

std::optional<QuestionContext> parse_question_context(std::string_view user_content);

struct JudgeParts {
    std::string question;
    std::string answer;
    std::vector<std::string> references;
};

std::optional<JudgeParts> parse_judge_user(std::string_view user_content);

// --- gateway bundle --------------------------------------------------------------

struct Gateway {
    std::shared_ptr<ChatBackend> chat;
    std::shared_ptr<EmbedBackend> embed;
    std::shared_ptr<RerankBackend> rerank; // null -> built-in deterministic scorers
};

struct GatewayConfig {
    struct Chat {
        std::string kind = "mock"; // mock | http
        std::string base_url;
        std::string model;
        std::string key_env;
        double temperature = 0.0;
        int max_tokens = 256;
        int timeout_ms = 60000;
    } chat;
    struct Embed {
        std::string kind = "hash"; // hash | http
        std::string base_url;
        std::string key_env;
        std::size_t dim = 256;
        // label -> provider model name (http kind)
        std::vector<std::pair<std::string, std::string>> model_map;
    } embed;
    struct Rerank {
        std::string kind = "builtin"; // builtin | http
        std::string base_url;
        std::string model;
        std::string key_env;
    } rerank;
};

GatewayConfig load_gateway_config(const std::filesystem::path& path);
Gateway make_gateway(const GatewayConfig& config);

// Deterministic mock chat + 256-dim hash embeddings; what the tests and the
// default CLI configuration run against.
Gateway make_mock_gateway();

// Fixed request parameters applied by the pipeline unless a config file
// overrides them.
ChatRequest make_chat_request(const GatewayConfig::Chat& chat, std::string system_prompt,
                              std::string user_content);

} // namespace rag
