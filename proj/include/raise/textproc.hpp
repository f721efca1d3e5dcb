#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rag {

// Split on runs of ASCII whitespace, preserving token text verbatim.
std::vector<std::string> split_whitespace(std::string_view text);

std::string lowercase(std::string_view text);

// Lowercased whitespace tokens with leading/trailing ASCII punctuation
// stripped; empty tokens dropped. This is the tokenization used by the
// chunker, BM25 and the hash embedder.
std::vector<std::string> pipeline_tokens(std::string_view text);

// Metric normalization: lowercase, ASCII punctuation removed, whitespace
// collapsed to single spaces.
std::string normalize_text(std::string_view text);

// Tokens of normalize_text(text).
std::vector<std::string> normalized_tokens(std::string_view text);

// Sentence segmentation on '.', '!', '?' and newlines; the terminating
// punctuation stays attached, surrounding whitespace is trimmed.
std::vector<std::string> split_sentences(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace rag
