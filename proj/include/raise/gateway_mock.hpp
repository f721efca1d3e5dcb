#pragma once

#include "raise/gateway.hpp"

namespace rag {

// Pure deterministic chat backend: identifies the calling module by its
// system prompt and answers from fixed token-overlap rules, so end-to-end
// runs need no model at all.
//
//   rewriter  -> user content unchanged
//   pruner    -> sentences sharing >= 1 non-stopword question token
//   generator -> context sentence sharing the most question tokens (ties:
//                earliest)
//   judge     -> {"score": 1} iff token-F1(answer, some reference) >= 0.5
class MockChatBackend : public ChatBackend {
public:
    ChatResult complete(const ChatRequest& request) override;
};

// 256-dim signed-hash bag-of-words embeddings, L2-normalized; the model
// label salts the hash so "emb-a" and "emb-b" rank differently. All-zero
// degenerate vectors are replaced by the first basis vector.
class HashEmbedBackend : public EmbedBackend {
public:
    explicit HashEmbedBackend(std::size_t dim = 256);

    EmbedResult embed(std::span<const std::string> texts,
                      const std::string& model_label) override;
    std::size_t dimension() const override { return dim_; }

private:
    std::size_t dim_;
};

// The 50-word stopword list used by the mock pruner.
bool is_mock_stopword(std::string_view token);

} // namespace rag
