#include "raise/environment.hpp"

#include "raise/digest.hpp"
#include "raise/rng.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace rag {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

[[noreturn]] void record_error(const std::filesystem::path& path, std::size_t line,
                               const std::string& what) {
    throw LoadError(path.string() + ":" + std::to_string(line) + ": " + what);
}

template <typename Fn>
void for_each_line(const std::string& bytes, Fn&& fn) {
    std::size_t pos = 0, line = 0;
    while (pos <= bytes.size()) {
        const std::size_t end = std::min(bytes.find('\n', pos), bytes.size());
        ++line;
        std::string_view row(bytes.data() + pos, end - pos);
        if (!row.empty() && row.back() == '\r')
            row.remove_suffix(1);
        if (!row.empty())
            fn(row, line);
        if (end == bytes.size())
            break;
        pos = end + 1;
    }
}

std::vector<QAItem> parse_qa(const std::string& bytes, const std::filesystem::path& path) {
    std::vector<QAItem> items;
    for_each_line(bytes, [&](std::string_view row, std::size_t line) {
        json doc = json::parse(row, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            record_error(path, line, "not a JSON object");
        QAItem item;
        if (!doc.contains("id") || !doc["id"].is_string())
            record_error(path, line, "missing field 'id'");
        item.id = doc["id"].get<std::string>();
        if (!doc.contains("question") || !doc["question"].is_string() ||
            doc["question"].get<std::string>().empty())
            record_error(path, line, "record '" + item.id + "': missing or empty 'question'");
        item.question = doc["question"].get<std::string>();
        if (!doc.contains("answers") || !doc["answers"].is_array() || doc["answers"].empty())
            record_error(path, line, "record '" + item.id + "': missing or empty 'answers'");
        for (const json& a : doc["answers"]) {
            if (!a.is_string())
                record_error(path, line, "record '" + item.id + "': non-string answer");
            item.references.push_back(a.get<std::string>());
        }
        items.push_back(std::move(item));
    });
    return items;
}

std::vector<CorpusDoc> parse_corpus(const std::string& bytes, const std::filesystem::path& path) {
    std::vector<CorpusDoc> docs;
    std::set<std::string> seen;
    for_each_line(bytes, [&](std::string_view row, std::size_t line) {
        json doc = json::parse(row, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            record_error(path, line, "not a JSON object");
        CorpusDoc d;
        if (!doc.contains("id") || !doc["id"].is_string())
            record_error(path, line, "missing field 'id'");
        d.id = doc["id"].get<std::string>();
        if (!seen.insert(d.id).second)
            record_error(path, line, "duplicate corpus id '" + d.id + "'");
        if (!doc.contains("text") || !doc["text"].is_string() ||
            doc["text"].get<std::string>().empty())
            record_error(path, line, "record '" + d.id + "': missing or empty 'text'");
        d.text = doc["text"].get<std::string>();
        if (doc.contains("image_path") && doc["image_path"].is_string())
            d.image_path = doc["image_path"].get<std::string>();
        docs.push_back(std::move(d));
    });
    return docs;
}

} // namespace

Environment load_environment(const std::filesystem::path& qa_path,
                             const std::filesystem::path& corpus_path) {
    Environment env;
    const std::string qa_bytes = read_file(qa_path);
    const std::string corpus_bytes = read_file(corpus_path);
    env.qa = parse_qa(qa_bytes, qa_path);
    env.corpus = parse_corpus(corpus_bytes, corpus_path);
    env.qa_file_hash = sha256_hex(qa_bytes);
    env.corpus_file_hash = sha256_hex(corpus_bytes);
    env.name = qa_path.stem().string();
    return env;
}

std::string serialize_qa(const Environment& env) {
    std::string out;
    for (const QAItem& item : env.qa) {
        json doc = {{"id", item.id}, {"question", item.question}, {"answers", item.references}};
        out += doc.dump();
        out += '\n';
    }
    return out;
}

std::string serialize_corpus(const Environment& env) {
    std::string out;
    for (const CorpusDoc& d : env.corpus) {
        json doc = {{"id", d.id}, {"text", d.text}};
        if (!d.image_path.empty())
            doc["image_path"] = d.image_path;
        out += doc.dump();
        out += '\n';
    }
    return out;
}

void save_environment(const Environment& env, const std::filesystem::path& qa_path,
                      const std::filesystem::path& corpus_path) {
    std::ofstream qa(qa_path, std::ios::binary);
    if (!qa)
        throw LoadError("cannot write qa file: " + qa_path.string());
    qa << serialize_qa(env);
    std::ofstream corpus(corpus_path, std::ios::binary);
    if (!corpus)
        throw LoadError("cannot write corpus file: " + corpus_path.string());
    corpus << serialize_corpus(env);
}

Environment subsample(const Environment& env, std::size_t n, std::uint64_t seed, bool shuffle) {
    if (n < 1 || n > env.qa.size())
        throw std::invalid_argument("subsample: n=" + std::to_string(n) +
                                    " out of range [1, " + std::to_string(env.qa.size()) + "]");
    Environment out = env;
    if (shuffle) {
        SplitRng rng(mix64(seed, static_cast<std::uint64_t>(n)));
        for (std::size_t i = out.qa.size() - 1; i > 0; --i)
            std::swap(out.qa[i], out.qa[rng.next_index(i + 1)]);
    }
    out.qa.resize(n);
    // The QA hash identifies the materialized subset; the corpus is untouched
    // and keeps its digest, so chunk indexes built for the pool stay reusable.
    out.qa_file_hash = sha256_hex(serialize_qa(out));
    return out;
}

} // namespace rag
