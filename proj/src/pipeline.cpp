#include "raise/pipeline.hpp"

#include "raise/metrics.hpp"
#include "raise/textproc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace rag {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int parse_int_label(const SearchSpace& space, const PipelineConfig& config,
                    std::string_view dim) {
    return std::stoi(space.value_of(config, dim));
}

bool chunk_order_before(const Chunk& a, const Chunk& b) {
    if (a.doc_id != b.doc_id)
        return a.doc_id < b.doc_id;
    return a.index < b.index;
}

// Shared ordering rule: score descending, ties by (doc_id, index) ascending.
void sort_scored(std::vector<ScoredChunk>& scored) {
    std::stable_sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return chunk_order_before(*a.chunk, *b.chunk);
    });
}

ScoredChunkRef to_ref(const ScoredChunk& s) {
    return {s.chunk->doc_id, s.chunk->index, s.score};
}

} // namespace

PipelineSettings decode_settings(const SearchSpace& space, const PipelineConfig& config) {
    space.require_valid(config);
    PipelineSettings s;
    s.rewriter_prompt = space.value_of(config, "rewriter_prompt");
    s.chunk_size = parse_int_label(space, config, "chunk_size");
    s.chunk_overlap = parse_int_label(space, config, "chunk_overlap");
    s.embedder = space.value_of(config, "retriever_embedder");
    s.retriever_top_k = parse_int_label(space, config, "retriever_top_k");
    s.bm25_alpha = std::stod(space.value_of(config, "bm25_weight_alpha"));
    s.reranker_model = space.value_of(config, "reranker_model");
    s.reranker_top_k = parse_int_label(space, config, "reranker_top_k");
    s.pruner_prompt = space.value_of(config, "pruner_prompt");
    return s;
}

std::vector<Chunk> chunk_document(const CorpusDoc& doc, int size, int overlap) {
    if (size <= 0 || overlap < 0 || overlap >= size)
        throw std::invalid_argument("chunk_document: need 0 <= overlap < size");
    const std::vector<std::string> tokens = split_whitespace(doc.text);
    std::vector<Chunk> chunks;
    if (tokens.empty())
        return chunks;
    const std::size_t n = tokens.size();
    const std::size_t stride = static_cast<std::size_t>(size - overlap);
    std::size_t prev_end = 0;
    std::uint32_t ordinal = 0;
    for (std::size_t start = 0; start < n; start += stride) {
        const std::size_t end = std::min(start + static_cast<std::size_t>(size), n);
        if (ordinal > 0 && end <= prev_end)
            break; // fully contained in the previous span
        Chunk c;
        c.doc_id = doc.id;
        c.index = ordinal++;
        c.token_begin = static_cast<std::uint32_t>(start);
        c.token_end = static_cast<std::uint32_t>(end);
        std::string text;
        for (std::size_t i = start; i < end; ++i) {
            if (i > start)
                text.push_back(' ');
            text += tokens[i];
        }
        c.text = std::move(text);
        chunks.push_back(std::move(c));
        prev_end = end;
        if (end == n)
            break;
    }
    return chunks;
}

CorpusStats build_corpus_stats(const std::vector<Chunk>& chunks) {
    CorpusStats stats;
    stats.chunk_count = chunks.size();
    double total_len = 0.0;
    for (const Chunk& c : chunks) {
        const std::vector<std::string> tokens = pipeline_tokens(c.text);
        total_len += static_cast<double>(tokens.size());
        std::vector<std::string> uniq = tokens;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (std::string& t : uniq)
            ++stats.doc_freq[std::move(t)];
    }
    stats.avg_length = chunks.empty() ? 0.0 : total_len / static_cast<double>(chunks.size());
    return stats;
}

double bm25_score(const std::vector<std::string>& query_tokens, const Chunk& chunk,
                  const CorpusStats& stats) {
    constexpr double k1 = 1.2;
    constexpr double b = 0.75;
    if (stats.chunk_count == 0 || stats.avg_length <= 0.0)
        return 0.0;
    const std::vector<std::string> chunk_tokens = pipeline_tokens(chunk.text);
    std::map<std::string_view, std::size_t> tf;
    for (const std::string& t : chunk_tokens)
        ++tf[t];
    const double len_ratio = static_cast<double>(chunk_tokens.size()) / stats.avg_length;
    std::vector<std::string> uniq = query_tokens;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    const double n_docs = static_cast<double>(stats.chunk_count);
    double score = 0.0;
    for (const std::string& term : uniq) {
        const auto tf_it = tf.find(term);
        if (tf_it == tf.end())
            continue;
        const auto df_it = stats.doc_freq.find(term);
        const double df = df_it == stats.doc_freq.end() ? 0.0 : static_cast<double>(df_it->second);
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        const double f = static_cast<double>(tf_it->second);
        score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_ratio));
    }
    return score;
}

std::shared_ptr<const BuiltIndex> IndexCache::get_or_build(const Environment& env,
                                                           const PipelineSettings& settings,
                                                           Gateway& gateway) {
    std::ostringstream key_os;
    key_os << env.corpus_file_hash << '|' << settings.chunk_size << '|' << settings.chunk_overlap
           << '|' << settings.embedder;
    const std::string key = key_os.str();
    {
        std::shared_lock lock(mutex_);
        auto it = entries_.find(key);
        if (it != entries_.end())
            return it->second;
    }
    auto index = std::make_shared<BuiltIndex>();
    index->embedder_label = settings.embedder;
    for (const CorpusDoc& doc : env.corpus) {
        std::vector<Chunk> chunks = chunk_document(doc, settings.chunk_size, settings.chunk_overlap);
        index->chunks.insert(index->chunks.end(), std::make_move_iterator(chunks.begin()),
                             std::make_move_iterator(chunks.end()));
    }
    index->stats = build_corpus_stats(index->chunks);
    std::vector<std::string> texts;
    texts.reserve(index->chunks.size());
    for (const Chunk& c : index->chunks)
        texts.push_back(c.text);
    if (!texts.empty() && gateway.embed) {
        EmbedResult res = gateway.embed->embed(texts, settings.embedder);
        if (res.ok()) {
            index->embeddings = std::move(res.vectors);
            index->embeddings_ok = true;
        } else {
            index->embed_failure = res.detail;
        }
    }
    std::unique_lock lock(mutex_);
    auto [it, inserted] = entries_.emplace(key, std::move(index));
    return it->second; // concurrent duplicate builds: first insert wins
}

std::string rewrite(const PipelineSettings& settings, const std::string& question,
                    Gateway& gateway, PipelineTrace& trace) {
    if (settings.rewriter_prompt == "off")
        return question;
    const PromptTemplate& prompt = get_prompt(PromptRole::rewriter, settings.rewriter_prompt);
    ChatRequest req;
    req.system_prompt = prompt.text;
    req.user_content = question;
    const ChatResult res = gateway.chat->complete(req);
    if (!res.ok()) {
        trace.failures.push_back("rewrite degraded to identity: " +
                                 std::string(to_string(res.failure)) + " (" + res.detail + ")");
        return question;
    }
    return res.text;
}

std::vector<ScoredChunk> hybrid_retrieve(const std::string& query, const BuiltIndex& index,
                                         double alpha, int top_k, Gateway& gateway,
                                         PipelineTrace& trace) {
    std::vector<ScoredChunk> scored;
    if (index.chunks.empty() || top_k < 1)
        return scored;
    const std::vector<std::string> query_tokens = pipeline_tokens(query);

    std::vector<double> bm25(index.chunks.size());
    for (std::size_t i = 0; i < index.chunks.size(); ++i)
        bm25[i] = bm25_score(query_tokens, index.chunks[i], index.stats);
    const auto [mn_it, mx_it] = std::minmax_element(bm25.begin(), bm25.end());
    const double mn = *mn_it, mx = *mx_it;
    for (double& v : bm25)
        v = (mx > mn) ? (v - mn) / (mx - mn) : 0.5;

    double effective_alpha = alpha;
    std::vector<double> cos(index.chunks.size(), 0.5);
    bool have_embeddings = false;
    if (alpha < 1.0) {
        if (index.embeddings_ok) {
            const EmbedResult q =
                gateway.embed->embed(std::vector<std::string>{query}, index.embedder_label);
            if (q.ok() && q.vectors.size() == 1) {
                have_embeddings = true;
                for (std::size_t i = 0; i < index.chunks.size(); ++i) {
                    double dot = 0.0;
                    const auto& a = q.vectors[0].values;
                    const auto& b = index.embeddings[i].values;
                    for (std::size_t k = 0; k < a.size() && k < b.size(); ++k)
                        dot += static_cast<double>(a[k]) * static_cast<double>(b[k]);
                    cos[i] = (dot + 1.0) / 2.0;
                }
            }
        }
        if (!have_embeddings) {
            effective_alpha = 1.0;
            trace.failures.push_back(
                "retrieval fell back to BM25 only: " +
                (index.embeddings_ok ? std::string("query embedding failed") : index.embed_failure));
        }
    }

    scored.reserve(index.chunks.size());
    for (std::size_t i = 0; i < index.chunks.size(); ++i) {
        const double s = effective_alpha * bm25[i] + (1.0 - effective_alpha) * cos[i];
        scored.push_back({&index.chunks[i], s});
    }
    sort_scored(scored);
    if (scored.size() > static_cast<std::size_t>(top_k))
        scored.resize(static_cast<std::size_t>(top_k));
    return scored;
}

namespace {

// Built-in deterministic rerank scorers: rr-a is token-overlap F1 between the
// query and the chunk, rr-b is recall of query tokens in the chunk.
double builtin_rerank_score(const std::string& model_label, const std::string& query,
                            const std::string& passage) {
    const std::vector<std::string> q = pipeline_tokens(query);
    const std::vector<std::string> p = pipeline_tokens(passage);
    if (model_label == "rr-a")
        return token_f1_tokens(q, p);
    if (q.empty())
        return 0.0;
    std::map<std::string_view, std::size_t> counts;
    for (const std::string& t : p)
        ++counts[t];
    std::size_t hit = 0;
    for (const std::string& t : q) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(q.size());
}

} // namespace

std::vector<ScoredChunk> rerank(const std::string& query, const std::vector<ScoredChunk>& candidates,
                                const std::string& model_label, int top_k, Gateway& gateway,
                                PipelineTrace& trace) {
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(std::max(top_k, 0)));
    if (model_label == "off")
        return {candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep)};

    std::vector<double> scores;
    if (model_label == "rr-a" || model_label == "rr-b") {
        scores.reserve(candidates.size());
        for (const ScoredChunk& c : candidates)
            scores.push_back(builtin_rerank_score(model_label, query, c.chunk->text));
    } else if (gateway.rerank) {
        std::vector<std::string> texts;
        texts.reserve(candidates.size());
        for (const ScoredChunk& c : candidates)
            texts.push_back(c.chunk->text);
        RerankResult res = gateway.rerank->score(query, texts, model_label);
        if (!res.ok() || res.scores.size() != candidates.size()) {
            trace.failures.push_back("rerank degraded to pass-through: " + res.detail);
            return {candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep)};
        }
        scores = std::move(res.scores);
    } else {
        trace.failures.push_back("rerank degraded to pass-through: no scorer for model '" +
                                 model_label + "'");
        return {candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep)};
    }

    std::vector<ScoredChunk> rescored;
    rescored.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i)
        rescored.push_back({candidates[i].chunk, scores[i]});
    sort_scored(rescored);
    rescored.resize(keep);
    return rescored;
}

std::string prune(const PipelineSettings& settings, const std::string& query,
                  const std::vector<ScoredChunk>& reranked, Gateway& gateway,
                  PipelineTrace& trace) {
    if (reranked.empty())
        return "";
    std::vector<std::string> texts;
    texts.reserve(reranked.size());
    for (const ScoredChunk& c : reranked)
        texts.push_back(c.chunk->text);
    std::string concatenated = join(texts, "\n\n");
    if (settings.pruner_prompt == "off")
        return concatenated;
    const PromptTemplate& prompt = get_prompt(PromptRole::pruner, settings.pruner_prompt);
    ChatRequest req;
    req.system_prompt = prompt.text;
    req.user_content = compose_prune_user(query, concatenated);
    const ChatResult res = gateway.chat->complete(req);
    if (!res.ok()) {
        trace.failures.push_back("prune degraded to concatenation: " +
                                 std::string(to_string(res.failure)) + " (" + res.detail + ")");
        return concatenated;
    }
    return res.text;
}

std::string generate(const std::string& question, const std::string& pruned_context,
                     Gateway& gateway, PipelineTrace& trace) {
    if (pruned_context.empty())
        return "";
    const PromptTemplate& prompt = get_prompt(PromptRole::generator, "fixed");
    ChatRequest req;
    req.system_prompt = prompt.text;
    req.user_content = compose_generate_user(question, pruned_context);
    const ChatResult res = gateway.chat->complete(req);
    if (!res.ok()) {
        trace.failures.push_back("generate degraded to empty answer: " +
                                 std::string(to_string(res.failure)) + " (" + res.detail + ")");
        return "";
    }
    return res.text;
}

PipelineTrace run_pipeline(const SearchSpace& space, const PipelineConfig& config,
                           const std::string& question, const Environment& env,
                           Gateway& gateway, IndexCache& index_cache) {
    PipelineTrace trace;
    trace.original_query = question;
    try {
        const PipelineSettings settings = decode_settings(space, config);

        auto t0 = std::chrono::steady_clock::now();
        trace.rewritten_query = rewrite(settings, question, gateway, trace);
        trace.timings.rewrite_s = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        const auto index = index_cache.get_or_build(env, settings, gateway);
        std::vector<ScoredChunk> retrieved =
            hybrid_retrieve(trace.rewritten_query, *index, settings.bm25_alpha,
                            settings.retriever_top_k, gateway, trace);
        trace.timings.retrieve_s = seconds_since(t0);
        for (const ScoredChunk& s : retrieved)
            trace.retrieved.push_back(to_ref(s));

        t0 = std::chrono::steady_clock::now();
        std::vector<ScoredChunk> reranked =
            rerank(trace.rewritten_query, retrieved, settings.reranker_model,
                   settings.reranker_top_k, gateway, trace);
        trace.timings.rerank_s = seconds_since(t0);
        for (const ScoredChunk& s : reranked)
            trace.reranked.push_back(to_ref(s));

        t0 = std::chrono::steady_clock::now();
        trace.pruned_context = prune(settings, trace.rewritten_query, reranked, gateway, trace);
        trace.timings.prune_s = seconds_since(t0);

        t0 = std::chrono::steady_clock::now();
        trace.answer = generate(question, trace.pruned_context, gateway, trace);
        trace.timings.generate_s = seconds_since(t0);
    } catch (const std::exception& e) {
        trace.unrecoverable = true;
        trace.unrecoverable_detail = e.what();
    } catch (...) {
        trace.unrecoverable = true;
        trace.unrecoverable_detail = "unknown error";
    }
    return trace;
}

} // namespace rag
