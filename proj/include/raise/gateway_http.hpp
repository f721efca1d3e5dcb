#pragma once

#include "raise/gateway.hpp"

#include <map>

namespace rag {

// OpenAI-compatible chat-completions endpoint. Transport failures retry once;
// timeouts do not.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(GatewayConfig::Chat config);

    ChatResult complete(const ChatRequest& request) override;

private:
    GatewayConfig::Chat config_;
    std::string origin_;
    std::string path_prefix_;
};

// OpenAI-compatible embeddings endpoint; the space's embedder labels map to
// provider model names through the config's model_map.
class HttpEmbedBackend : public EmbedBackend {
public:
    explicit HttpEmbedBackend(GatewayConfig::Embed config);

    EmbedResult embed(std::span<const std::string> texts,
                      const std::string& model_label) override;
    std::size_t dimension() const override { return config_.dim; }

private:
    std::string resolve_model(const std::string& label) const;

    GatewayConfig::Embed config_;
    std::string origin_;
    std::string path_prefix_;
};

// Cohere-style /rerank endpoint returning per-document relevance scores.
class HttpRerankBackend : public RerankBackend {
public:
    explicit HttpRerankBackend(GatewayConfig::Rerank config);

    RerankResult score(const std::string& query, std::span<const std::string> passages,
                       const std::string& model_label) override;

private:
    GatewayConfig::Rerank config_;
    std::string origin_;
    std::string path_prefix_;
};

// Splits "http://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

} // namespace rag
