#pragma once

#include "raise/environment.hpp"
#include "raise/gateway.hpp"
#include "raise/search_space.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

namespace rag {

// Typed view of one configuration, decoded from the dimension labels.
struct PipelineSettings {
    std::string rewriter_prompt = "off"; // off | P1..P3
    int chunk_size = 256;
    int chunk_overlap = 0;
    std::string embedder = "emb-a";
    int retriever_top_k = 5;
    double bm25_alpha = 0.5;
    std::string reranker_model = "off"; // off | rr-a | rr-b | remote label
    int reranker_top_k = 5;
    std::string pruner_prompt = "off"; // off | P1..P3
};

PipelineSettings decode_settings(const SearchSpace& space, const PipelineConfig& config);

struct Chunk {
    std::string doc_id;
    std::uint32_t index = 0; // ordinal within the document
    std::string text;
    std::uint32_t token_begin = 0; // whitespace-token span in the document
    std::uint32_t token_end = 0;
};

// Spans start at multiples of the stride (size - overlap) while the start is
// inside the document; a span fully contained in its predecessor is dropped.
std::vector<Chunk> chunk_document(const CorpusDoc& doc, int size, int overlap);

// BM25 statistics over a chunked corpus.
struct CorpusStats {
    std::size_t chunk_count = 0;
    double avg_length = 0.0;
    std::map<std::string, std::size_t> doc_freq; // chunks containing the term
};

CorpusStats build_corpus_stats(const std::vector<Chunk>& chunks);

// Okapi BM25 with k1 = 1.2, b = 0.75 and idf = ln(1 + (N - df + .5)/(df + .5));
// distinct query terms each contribute once.
double bm25_score(const std::vector<std::string>& query_tokens, const Chunk& chunk,
                  const CorpusStats& stats);

struct ScoredChunkRef {
    std::string doc_id;
    std::uint32_t chunk_index = 0;
    double score = 0.0;
};

struct StageTimings {
    double rewrite_s = 0.0;
    double retrieve_s = 0.0;
    double rerank_s = 0.0;
    double prune_s = 0.0;
    double generate_s = 0.0;
};

struct PipelineTrace {
    std::string original_query;
    std::string rewritten_query;
    std::vector<ScoredChunkRef> retrieved;
    std::vector<ScoredChunkRef> reranked;
    std::string pruned_context;
    std::string answer;
    StageTimings timings;
    std::vector<std::string> failures; // stage-level degradations
    bool unrecoverable = false;        // engine maps this to a zero-reward trial
    std::string unrecoverable_detail;
};

// Chunked, indexed view of one corpus under one (size, overlap, embedder)
// choice. Embedding failure is recorded rather than fatal; retrieval falls
// back to pure BM25.
struct BuiltIndex {
    std::vector<Chunk> chunks;
    CorpusStats stats;
    std::string embedder_label;
    std::vector<EmbeddingVector> embeddings;
    bool embeddings_ok = false;
    std::string embed_failure;
};

// Keyed by (corpus hash, chunk size, overlap, embedder label). Concurrent
// readers share built entries; duplicate concurrent builds are allowed and
// produce identical content.
class IndexCache {
public:
    std::shared_ptr<const BuiltIndex> get_or_build(const Environment& env,
                                                   const PipelineSettings& settings,
                                                   Gateway& gateway);

private:
    std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const BuiltIndex>> entries_;
};

// --- stages -------------------------------------------------------------------
// Stage failures degrade (identity rewrite, pass-through rerank, concatenation
// prune, empty answer) and append a note to trace.failures.

std::string rewrite(const PipelineSettings& settings, const std::string& question,
                    Gateway& gateway, PipelineTrace& trace);

struct ScoredChunk {
    const Chunk* chunk = nullptr;
    double score = 0.0;
};

std::vector<ScoredChunk> hybrid_retrieve(const std::string& query, const BuiltIndex& index,
                                         double alpha, int top_k, Gateway& gateway,
                                         PipelineTrace& trace);

std::vector<ScoredChunk> rerank(const std::string& query, const std::vector<ScoredChunk>& candidates,
                                const std::string& model_label, int top_k, Gateway& gateway,
                                PipelineTrace& trace);

std::string prune(const PipelineSettings& settings, const std::string& query,
                  const std::vector<ScoredChunk>& reranked, Gateway& gateway,
                  PipelineTrace& trace);

std::string generate(const std::string& question, const std::string& pruned_context,
                     Gateway& gateway, PipelineTrace& trace);

// Full composition: rewrite -> chunk/index -> hybrid retrieve -> rerank ->
// prune -> generate. Never throws; internal errors set trace.unrecoverable.
PipelineTrace run_pipeline(const SearchSpace& space, const PipelineConfig& config,
                           const std::string& question, const Environment& env,
                           Gateway& gateway, IndexCache& index_cache);

} // namespace rag
