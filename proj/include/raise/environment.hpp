#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace rag {

struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QAItem {
    std::string id;
    std::string question;
    std::vector<std::string> references;
};

struct CorpusDoc {
    std::string id;
    std::string text;
    std::string image_path; // ignored by the text pipeline
};

// A proxy task: a QA set plus its retrieval corpus. Immutable after load;
// the stored digests identify the exact bytes this environment came from.
struct Environment {
    std::string name;
    std::vector<QAItem> qa;
    std::vector<CorpusDoc> corpus;
    std::string qa_file_hash;
    std::string corpus_file_hash;
    std::string modality = "text";
};

// Line-delimited JSON: QA records {id, question, answers: [...]}, corpus
// records {id, text, image_path?}. Validation errors name the file and line.
Environment load_environment(const std::filesystem::path& qa_path,
                             const std::filesystem::path& corpus_path);

// Canonical serializations (stable field order); what subsampled
// environments are hashed over.
std::string serialize_qa(const Environment& env);
std::string serialize_corpus(const Environment& env);

void save_environment(const Environment& env, const std::filesystem::path& qa_path,
                      const std::filesystem::path& corpus_path);

// First n of a seeded uniform shuffle of the QA list (the shuffle stream is
// keyed by seed and n, so different sizes draw independent permutations).
// With shuffle = false, takes the stored-order prefix. The corpus is
// unchanged; digests are recomputed over the materialized subset.
Environment subsample(const Environment& env, std::size_t n, std::uint64_t seed,
                      bool shuffle = true);

} // namespace rag
