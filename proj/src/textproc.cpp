#include "raise/textproc.hpp"

#include <cctype>

namespace rag {

namespace {

inline bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline bool is_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

} // namespace

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i]))
            ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j]))
            ++j;
        if (j > i)
            out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string lowercase(std::string_view text) {
    std::string out(text);
    for (char& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> pipeline_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (const std::string& raw : split_whitespace(text)) {
        std::size_t b = 0, e = raw.size();
        while (b < e && is_punct(raw[b]))
            ++b;
        while (e > b && is_punct(raw[e - 1]))
            --e;
        if (e > b)
            out.push_back(lowercase(std::string_view(raw).substr(b, e - b)));
    }
    return out;
}

std::string normalize_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (is_punct(c))
            continue;
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::vector<std::string> normalized_tokens(std::string_view text) {
    return split_whitespace(normalize_text(text));
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto flush = [&](std::size_t end) {
        std::size_t b = start, e = end;
        while (b < e && is_space(text[b]))
            ++b;
        while (e > b && is_space(text[e - 1]))
            --e;
        if (e > b)
            out.emplace_back(text.substr(b, e - b));
        start = end;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.' || c == '!' || c == '?' || c == '\n')
            flush(i + 1);
    }
    flush(text.size());
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace rag
