#include "raise/gateway_http.hpp"

#include "raise/gateway_mock.hpp"

#include "httplib.h"
#include "json.hpp"

#include <chrono>
#include <cstdlib>

namespace rag {

using nlohmann::json;

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const std::size_t scheme = base_url.find("://");
    if (scheme == std::string::npos)
        throw GatewayError("base_url must include a scheme: " + base_url);
    const std::size_t path = base_url.find('/', scheme + 3);
    if (path == std::string::npos)
        return {base_url, ""};
    std::string prefix = base_url.substr(path);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    return {base_url.substr(0, path), prefix};
}

namespace {

httplib::Headers auth_headers(const std::string& key_env) {
    httplib::Headers headers;
    if (!key_env.empty()) {
        if (const char* key = std::getenv(key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

void apply_timeout(httplib::Client& client, std::chrono::milliseconds timeout) {
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
}

struct PostOutcome {
    httplib::Result result;
    bool timed_out = false;
};

// One POST with at most one retry on transport-level failure; a request that
// exhausts its deadline is reported as a timeout and never retried.
PostOutcome post_with_retry(const std::string& origin, const std::string& path,
                            const httplib::Headers& headers, const std::string& body,
                            std::chrono::milliseconds timeout) {
    for (int attempt = 0;; ++attempt) {
        httplib::Client client(origin);
        apply_timeout(client, timeout);
        const auto start = std::chrono::steady_clock::now();
        httplib::Result res = client.Post(path, headers, body, "application/json");
        if (res)
            return {std::move(res), false};
        const auto elapsed = std::chrono::steady_clock::now() - start;
        const bool timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                               (res.error() == httplib::Error::Read && elapsed >= timeout);
        if (timed_out)
            return {std::move(res), true};
        if (attempt >= 1)
            return {std::move(res), false};
    }
}

} // namespace

HttpChatBackend::HttpChatBackend(GatewayConfig::Chat config) : config_(std::move(config)) {
    std::tie(origin_, path_prefix_) = split_base_url(config_.base_url);
}

ChatResult HttpChatBackend::complete(const ChatRequest& request) {
    json body = {
        {"model", config_.model},
        {"messages",
         json::array({{{"role", "system"}, {"content", request.system_prompt}},
                      {{"role", "user"}, {"content", request.user_content}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    PostOutcome out = post_with_retry(origin_, path_prefix_ + "/chat/completions",
                                      auth_headers(config_.key_env), body.dump(), request.timeout);
    if (out.timed_out)
        return ChatResult::fail(ChatFailure::timeout, "request exceeded deadline");
    if (!out.result)
        return ChatResult::fail(ChatFailure::transport, httplib::to_string(out.result.error()));
    if (out.result->status != 200)
        return ChatResult::fail(ChatFailure::transport,
                                "HTTP status " + std::to_string(out.result->status));
    json doc = json::parse(out.result->body, nullptr, false);
    if (doc.is_discarded())
        return ChatResult::fail(ChatFailure::malformed, "response is not JSON");
    try {
        std::string text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
        if (text.empty())
            return ChatResult::fail(ChatFailure::malformed, "empty completion");
        return ChatResult::success(std::move(text));
    } catch (const json::exception& e) {
        return ChatResult::fail(ChatFailure::malformed, e.what());
    }
}

HttpEmbedBackend::HttpEmbedBackend(GatewayConfig::Embed config) : config_(std::move(config)) {
    std::tie(origin_, path_prefix_) = split_base_url(config_.base_url);
}

std::string HttpEmbedBackend::resolve_model(const std::string& label) const {
    for (const auto& [l, model] : config_.model_map)
        if (l == label)
            return model;
    return label;
}

EmbedResult HttpEmbedBackend::embed(std::span<const std::string> texts,
                                    const std::string& model_label) {
    json body = {{"model", resolve_model(model_label)}, {"input", json::array()}};
    for (const std::string& t : texts)
        body["input"].push_back(t);
    PostOutcome out = post_with_retry(origin_, path_prefix_ + "/embeddings",
                                      auth_headers(config_.key_env), body.dump(),
                                      std::chrono::milliseconds(60000));
    EmbedResult result;
    if (out.timed_out || !out.result || out.result->status != 200) {
        result.failed = true;
        result.detail = out.timed_out ? "timeout"
                        : out.result ? "HTTP status " + std::to_string(out.result->status)
                                     : httplib::to_string(out.result.error());
        return result;
    }
    json doc = json::parse(out.result->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("data")) {
        result.failed = true;
        result.detail = "malformed embeddings response";
        return result;
    }
    try {
        for (const json& item : doc["data"]) {
            EmbeddingVector vec;
            vec.provider_id = resolve_model(model_label);
            for (const json& v : item.at("embedding"))
                vec.values.push_back(v.get<float>());
            result.vectors.push_back(std::move(vec));
        }
    } catch (const json::exception& e) {
        result.failed = true;
        result.detail = e.what();
        return result;
    }
    if (result.vectors.size() != texts.size()) {
        result.failed = true;
        result.detail = "embedding count mismatch";
    }
    return result;
}

HttpRerankBackend::HttpRerankBackend(GatewayConfig::Rerank config) : config_(std::move(config)) {
    std::tie(origin_, path_prefix_) = split_base_url(config_.base_url);
}

RerankResult HttpRerankBackend::score(const std::string& query,
                                      std::span<const std::string> passages,
                                      const std::string& model_label) {
    json body = {{"model", config_.model.empty() ? model_label : config_.model},
                 {"query", query},
                 {"documents", json::array()}};
    for (const std::string& p : passages)
        body["documents"].push_back(p);
    PostOutcome out = post_with_retry(origin_, path_prefix_ + "/rerank",
                                      auth_headers(config_.key_env), body.dump(),
                                      std::chrono::milliseconds(60000));
    RerankResult result;
    if (out.timed_out || !out.result || out.result->status != 200) {
        result.failed = true;
        result.detail = "rerank request failed";
        return result;
    }
    json doc = json::parse(out.result->body, nullptr, false);
    if (doc.is_discarded() || !doc.contains("results")) {
        result.failed = true;
        result.detail = "malformed rerank response";
        return result;
    }
    result.scores.assign(passages.size(), 0.0);
    try {
        for (const json& item : doc["results"]) {
            const std::size_t ix = item.at("index").get<std::size_t>();
            if (ix < result.scores.size())
                result.scores[ix] = item.at("relevance_score").get<double>();
        }
    } catch (const json::exception& e) {
        result.failed = true;
        result.detail = e.what();
    }
    return result;
}

Gateway make_gateway(const GatewayConfig& config) {
    Gateway gw;
    if (config.chat.kind == "mock")
        gw.chat = std::make_shared<MockChatBackend>();
    else if (config.chat.kind == "http")
        gw.chat = std::make_shared<HttpChatBackend>(config.chat);
    else
        throw GatewayError("unknown chat backend kind: " + config.chat.kind);

    if (config.embed.kind == "hash")
        gw.embed = std::make_shared<HashEmbedBackend>(config.embed.dim);
    else if (config.embed.kind == "http")
        gw.embed = std::make_shared<HttpEmbedBackend>(config.embed);
    else
        throw GatewayError("unknown embed backend kind: " + config.embed.kind);

    if (config.rerank.kind == "http")
        gw.rerank = std::make_shared<HttpRerankBackend>(config.rerank);
    else if (config.rerank.kind != "builtin")
        throw GatewayError("unknown rerank backend kind: " + config.rerank.kind);
    return gw;
}

Gateway make_mock_gateway() {
    return make_gateway(GatewayConfig{});
}

} // namespace rag
