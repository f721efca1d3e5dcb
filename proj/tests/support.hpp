#pragma once

#include "raise/digest.hpp"
#include "raise/engine.hpp"
#include "raise/environment.hpp"
#include "raise/gateway.hpp"
#include "raise/gateway_mock.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("raise_test_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Chat backend that fails (or throws) on chosen call indices and otherwise
// delegates to the mock.
class FaultChatBackend : public rag::ChatBackend {
public:
    using FaultFn = std::function<bool(int call_index, const rag::ChatRequest&)>;

    FaultChatBackend(rag::ChatFailure cause, FaultFn should_fail, bool throw_instead = false)
        : cause_(cause), should_fail_(std::move(should_fail)), throw_instead_(throw_instead) {}

    rag::ChatResult complete(const rag::ChatRequest& request) override {
        const int ix = calls_++;
        if (should_fail_(ix, request)) {
            if (throw_instead_)
                throw std::runtime_error("injected unrecoverable fault");
            return rag::ChatResult::fail(cause_, "injected fault");
        }
        return inner_.complete(request);
    }

    int calls() const { return calls_; }

private:
    rag::ChatFailure cause_;
    FaultFn should_fail_;
    bool throw_instead_;
    rag::MockChatBackend inner_;
    int calls_ = 0;
};

// Embed backend that always fails; retrieval should fall back to BM25 only.
class FailingEmbedBackend : public rag::EmbedBackend {
public:
    rag::EmbedResult embed(std::span<const std::string>, const std::string&) override {
        rag::EmbedResult res;
        res.failed = true;
        res.detail = "injected embedding failure";
        return res;
    }
    std::size_t dimension() const override { return 256; }
};

inline rag::Environment make_env(const std::vector<std::pair<std::string, std::string>>& qa,
                                 const std::vector<std::pair<std::string, std::string>>& corpus,
                                 const std::string& name = "fixture") {
    rag::Environment env;
    env.name = name;
    for (const auto& [question, answer] : qa) {
        rag::QAItem item;
        item.id = "q" + std::to_string(env.qa.size());
        item.question = question;
        item.references = {answer};
        env.qa.push_back(std::move(item));
    }
    for (const auto& [id, text] : corpus)
        env.corpus.push_back({id, text, ""});
    env.qa_file_hash = rag::sha256_hex(rag::serialize_qa(env));
    env.corpus_file_hash = rag::sha256_hex(rag::serialize_corpus(env));
    return env;
}

// Five QA items whose reference sentences appear verbatim in retrievable
// docs, plus distractors; the mock pipeline should answer them exactly.
inline rag::Environment make_retrievable_env() {
    std::vector<std::pair<std::string, std::string>> qa = {
        {"Which spacecraft visited the outer gas planets during the grand tour",
         "The voyager spacecraft toured the outer gas planets during its grand mission"},
        {"What enzyme unwinds the double helix before replication begins",
         "The helicase enzyme unwinds the double helix before replication starts"},
        {"Which mountain range separates the iberian peninsula from france",
         "The pyrenees mountain range separates the iberian peninsula from france"},
        {"What pigment makes plant leaves absorb light for photosynthesis",
         "The chlorophyll pigment lets plant leaves absorb light for photosynthesis"},
        {"Which ocean current warms the western coast of northern europe",
         "The gulf stream current warms the western coast of northern europe"},
    };
    std::vector<std::pair<std::string, std::string>> corpus;
    for (std::size_t i = 0; i < qa.size(); ++i) {
        corpus.emplace_back("doc" + std::to_string(i),
                            qa[i].second + ". Completely unrelated filler trivia follows here.");
    }
    corpus.emplace_back("distractor0", "Penguins huddle tightly through antarctic storms.");
    corpus.emplace_back("distractor1", "Medieval scribes copied manuscripts by candlelight.");
    return make_env(qa, corpus, "retrievable");
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace testsupport
