#include "raise/pipeline.hpp"

#include "raise/gateway_mock.hpp"
#include "raise/textproc.hpp"
#include "support.hpp"

#include "doctest.h"

#include <cmath>
#include <set>

using namespace rag;

namespace {

CorpusDoc doc_of(std::string id, std::string text) {
    return {std::move(id), std::move(text), ""};
}

std::string tokens_text(int n) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i)
            out += ' ';
        out += "t" + std::to_string(i);
    }
    return out;
}

PipelineConfig config_from_labels(const SearchSpace& space,
                                  const std::map<std::string, std::string>& labels) {
    PipelineConfig c;
    c.indices.assign(space.size(), 0);
    for (const auto& [name, value] : labels) {
        const std::size_t d = space.dimension_index(name);
        const auto& values = space.dimension(d).values;
        c.indices[d] = static_cast<std::uint32_t>(
            std::find(values.begin(), values.end(), value) - values.begin());
    }
    return c;
}

} // namespace

// ============================================================================
// chunking
// ============================================================================

TEST_CASE("chunk_document stride rule, no overlap") {
    const auto chunks = chunk_document(doc_of("d", tokens_text(10)), 4, 0);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].token_begin == 0);
    CHECK(chunks[0].token_end == 4);
    CHECK(chunks[1].token_begin == 4);
    CHECK(chunks[1].token_end == 8);
    CHECK(chunks[2].token_begin == 8);
    CHECK(chunks[2].token_end == 10);
    CHECK(chunks[0].text == "t0 t1 t2 t3");
    CHECK(chunks[2].text == "t8 t9");
}

TEST_CASE("chunk_document with overlap drops spans contained in the predecessor") {
    const auto chunks = chunk_document(doc_of("d", tokens_text(10)), 4, 2);
    REQUIRE(chunks.size() == 4);
    CHECK(chunks[0].token_begin == 0);
    CHECK(chunks[0].token_end == 4);
    CHECK(chunks[1].token_begin == 2);
    CHECK(chunks[1].token_end == 6);
    CHECK(chunks[2].token_begin == 4);
    CHECK(chunks[2].token_end == 8);
    CHECK(chunks[3].token_begin == 6);
    CHECK(chunks[3].token_end == 10);
    // the would-be [8,10) span is contained in [6,10) and must be dropped
}

TEST_CASE("document shorter than the chunk size is a single whole-doc chunk") {
    const auto chunks = chunk_document(doc_of("d", "only three tokens"), 256, 0);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].text == "only three tokens");
    CHECK(chunks[0].token_end == 3);
}

TEST_CASE("chunk spans cover the document with overlaps only at stride boundaries") {
    for (int len : {1, 5, 16, 57, 301}) {
        for (auto [s, o] : std::vector<std::pair<int, int>>{{4, 0}, {8, 3}, {16, 8}, {10, 9}}) {
            const auto chunks = chunk_document(doc_of("d", tokens_text(len)), s, o);
            REQUIRE(!chunks.empty());
            CHECK(chunks.front().token_begin == 0);
            CHECK(chunks.back().token_end == static_cast<std::uint32_t>(len));
            for (std::size_t i = 0; i < chunks.size(); ++i) {
                CHECK(chunks[i].token_end - chunks[i].token_begin <= static_cast<std::uint32_t>(s));
                if (i) {
                    // consecutive spans connect (no gap) and advance by the stride
                    CHECK(chunks[i].token_begin <= chunks[i - 1].token_end);
                    CHECK(chunks[i].token_begin ==
                          chunks[i - 1].token_begin + static_cast<std::uint32_t>(s - o));
                    CHECK(chunks[i].token_end > chunks[i - 1].token_end);
                }
            }
        }
    }
}

TEST_CASE("chunk_document rejects overlap >= size") {
    CHECK_THROWS_AS(chunk_document(doc_of("d", "a b c"), 4, 4), std::invalid_argument);
    CHECK_THROWS_AS(chunk_document(doc_of("d", "a b c"), 4, 9), std::invalid_argument);
}

// ============================================================================
// BM25
// ============================================================================

TEST_CASE("bm25: absent terms score zero") {
    const auto chunks = chunk_document(doc_of("d", "alpha beta gamma"), 256, 0);
    const CorpusStats stats = build_corpus_stats(chunks);
    CHECK(bm25_score({"zeta"}, chunks[0], stats) == doctest::Approx(0.0));
}

TEST_CASE("bm25 single-term hand evaluation") {
    // Two chunks; the term appears once in chunk 0 only.
    std::vector<Chunk> chunks;
    {
        auto a = chunk_document(doc_of("a", "quasar shines bright"), 256, 0);
        auto b = chunk_document(doc_of("b", "dull rocks sit still here"), 256, 0);
        chunks.push_back(a[0]);
        chunks.push_back(b[0]);
    }
    const CorpusStats stats = build_corpus_stats(chunks);

    // Straight-line evaluation, written out independently:
    // N=2, df=1, idf = ln(1 + (2 - 1 + 0.5) / (1 + 0.5)) = ln(2)
    // tf=1, len=3, avg=(3+5)/2=4, k1=1.2, b=0.75
    const double idf = std::log(1.0 + (2.0 - 1.0 + 0.5) / (1.0 + 0.5));
    const double denom = 1.0 + 1.2 * (1.0 - 0.75 + 0.75 * 3.0 / 4.0);
    const double expected = idf * 1.0 * (1.2 + 1.0) / denom;
    CHECK(bm25_score({"quasar"}, chunks[0], stats) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected > 0.0);
}

TEST_CASE("bm25 length normalization: padding a chunk lowers its score") {
    auto short_chunks = chunk_document(doc_of("a", "quasar shines"), 256, 0);
    auto long_chunks = chunk_document(
        doc_of("b", "quasar shines pad pad pad pad pad pad pad pad pad pad"), 256, 0);
    std::vector<Chunk> corpus = {short_chunks[0], long_chunks[0]};
    const CorpusStats stats = build_corpus_stats(corpus);
    CHECK(bm25_score({"quasar"}, corpus[0], stats) > bm25_score({"quasar"}, corpus[1], stats));
}

// ============================================================================
// retrieval / rerank / prune / generate
// ============================================================================

namespace {

struct RetrievalFixture {
    Environment env = testsupport::make_env(
        {{"which molten rock flows", "volcano answer"}},
        {{"d0", "molten rock flows from the volcano"},
         {"d1", "a library holds many quiet books"},
         {"d2", "molten iron sits in the planetary core"}});
    Gateway gateway = make_mock_gateway();
    IndexCache cache;
    PipelineSettings settings;
    PipelineTrace trace;

    const BuiltIndex& index() {
        built_ = cache.get_or_build(env, settings, gateway);
        return *built_;
    }

private:
    std::shared_ptr<const BuiltIndex> built_;
};

} // namespace

TEST_CASE("hybrid_retrieve boundaries: alpha=1 equals BM25 ranking, alpha=0 equals cosine") {
    RetrievalFixture fx;
    const BuiltIndex& index = fx.index();
    REQUIRE(index.embeddings_ok);

    const std::string query = "molten rock flows";
    const std::vector<std::string> query_tokens = pipeline_tokens(query);

    // independent BM25 ranking
    std::vector<std::pair<double, std::string>> by_bm25;
    for (const Chunk& c : index.chunks)
        by_bm25.emplace_back(-bm25_score(query_tokens, c, index.stats), c.doc_id);
    std::stable_sort(by_bm25.begin(), by_bm25.end());

    const auto at_alpha1 = hybrid_retrieve(query, index, 1.0, 10, fx.gateway, fx.trace);
    REQUIRE(at_alpha1.size() == index.chunks.size());
    for (std::size_t i = 0; i < at_alpha1.size(); ++i)
        CHECK(at_alpha1[i].chunk->doc_id == by_bm25[i].second);

    // independent cosine ranking through the embed provider
    const EmbedResult q = fx.gateway.embed->embed(std::vector<std::string>{query}, "emb-a");
    std::vector<std::pair<double, std::string>> by_cos;
    for (std::size_t i = 0; i < index.chunks.size(); ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < q.vectors[0].values.size(); ++k)
            dot += static_cast<double>(q.vectors[0].values[k]) *
                   static_cast<double>(index.embeddings[i].values[k]);
        by_cos.emplace_back(-dot, index.chunks[i].doc_id);
    }
    std::stable_sort(by_cos.begin(), by_cos.end());
    const auto at_alpha0 = hybrid_retrieve(query, index, 0.0, 10, fx.gateway, fx.trace);
    for (std::size_t i = 0; i < at_alpha0.size(); ++i)
        CHECK(at_alpha0[i].chunk->doc_id == by_cos[i].second);
}

TEST_CASE("hybrid_retrieve scores stay in [0,1] and top-k truncates") {
    RetrievalFixture fx;
    const BuiltIndex& index = fx.index();
    for (double alpha : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto all = hybrid_retrieve("molten rock", index, alpha, 50, fx.gateway, fx.trace);
        CHECK(all.size() == index.chunks.size()); // k exceeding candidates returns all
        for (const ScoredChunk& s : all) {
            CHECK(s.score >= 0.0);
            CHECK(s.score <= 1.0);
        }
        const auto top1 = hybrid_retrieve("molten rock", index, alpha, 1, fx.gateway, fx.trace);
        CHECK(top1.size() == 1);
    }
}

TEST_CASE("hybrid_retrieve falls back to BM25 when embeddings fail") {
    RetrievalFixture fx;
    fx.gateway.embed = std::make_shared<testsupport::FailingEmbedBackend>();
    IndexCache fresh;
    const auto index = fresh.get_or_build(fx.env, fx.settings, fx.gateway);
    CHECK_FALSE(index->embeddings_ok);
    PipelineTrace trace;
    const auto out = hybrid_retrieve("molten rock", *index, 0.25, 10, fx.gateway, trace);
    CHECK(!out.empty());
    CHECK(!trace.failures.empty());
    // ranking equals the alpha=1 ranking
    PipelineTrace trace2;
    const auto bm25_only = hybrid_retrieve("molten rock", *index, 1.0, 10, fx.gateway, trace2);
    REQUIRE(out.size() == bm25_only.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out[i].chunk->doc_id == bm25_only[i].chunk->doc_id);
}

TEST_CASE("rerank: off truncates in retrieval order; rr-a ranks the identical chunk first") {
    RetrievalFixture fx;
    const BuiltIndex& index = fx.index();
    PipelineTrace trace;
    const auto retrieved = hybrid_retrieve("molten rock flows", index, 0.5, 10, fx.gateway, trace);
    REQUIRE(retrieved.size() == 3);

    const auto off = rerank("molten rock flows", retrieved, "off", 2, fx.gateway, trace);
    REQUIRE(off.size() == 2);
    CHECK(off[0].chunk->doc_id == retrieved[0].chunk->doc_id);
    CHECK(off[1].chunk->doc_id == retrieved[1].chunk->doc_id);

    // query identical to one chunk's text -> that chunk first under rr-a
    const auto rra = rerank("molten rock flows from the volcano", retrieved, "rr-a", 3,
                            fx.gateway, trace);
    REQUIRE(!rra.empty());
    CHECK(rra[0].chunk->doc_id == "d0");

    // k exceeding the candidate count returns all candidates
    const auto wide = rerank("molten", retrieved, "rr-a", 10, fx.gateway, trace);
    CHECK(wide.size() == 3);

    // output is a sub-multiset of the input
    std::set<std::string> input_ids;
    for (const auto& s : retrieved)
        input_ids.insert(s.chunk->doc_id + "#" + std::to_string(s.chunk->index));
    for (const auto& s : rra)
        CHECK(input_ids.count(s.chunk->doc_id + "#" + std::to_string(s.chunk->index)));
}

TEST_CASE("rerank rr-b is query-token recall") {
    RetrievalFixture fx;
    const BuiltIndex& index = fx.index();
    PipelineTrace trace;
    const auto retrieved = hybrid_retrieve("molten rock", index, 1.0, 10, fx.gateway, trace);
    const auto rrb = rerank("molten rock", retrieved, "rr-b", 3, fx.gateway, trace);
    // d0 contains both query tokens (recall 1), d2 only "molten" (recall .5)
    CHECK(rrb[0].chunk->doc_id == "d0");
    CHECK(rrb[0].score == doctest::Approx(1.0));
    CHECK(rrb[1].chunk->doc_id == "d2");
    CHECK(rrb[1].score == doctest::Approx(0.5));
}

TEST_CASE("rerank with unknown model and no remote scorer degrades to pass-through") {
    RetrievalFixture fx;
    const BuiltIndex& index = fx.index();
    PipelineTrace trace;
    const auto retrieved = hybrid_retrieve("molten", index, 1.0, 10, fx.gateway, trace);
    const auto out = rerank("molten", retrieved, "rr-remote", 2, fx.gateway, trace);
    CHECK(out.size() == 2);
    CHECK(out[0].chunk->doc_id == retrieved[0].chunk->doc_id);
    CHECK(!trace.failures.empty());
}

TEST_CASE("prune: off concatenates with blank lines; empty input is empty without a call") {
    RetrievalFixture fx;
    const BuiltIndex& index = fx.index();
    PipelineTrace trace;
    auto retrieved = hybrid_retrieve("molten rock flows", index, 1.0, 2, fx.gateway, trace);
    REQUIRE(retrieved.size() == 2);

    PipelineSettings settings;
    settings.pruner_prompt = "off";
    const std::string joined = prune(settings, "q", retrieved, fx.gateway, trace);
    CHECK(joined ==
          retrieved[0].chunk->text + "\n\n" + retrieved[1].chunk->text);

    const std::string empty = prune(settings, "q", {}, fx.gateway, trace);
    CHECK(empty.empty());
}

TEST_CASE("mock prune keeps only sentences sharing question tokens") {
    Environment env = testsupport::make_env(
        {{"q", "a"}},
        {{"d0", "Glaciers carve deep valleys. Santa wears a red suit."}});
    Gateway gateway = make_mock_gateway();
    IndexCache cache;
    PipelineSettings settings;
    settings.pruner_prompt = "P1";
    const auto index = cache.get_or_build(env, settings, gateway);
    PipelineTrace trace;
    const auto retrieved = hybrid_retrieve("glaciers", *index, 1.0, 5, gateway, trace);
    const std::string pruned = prune(settings, "how do glaciers move", retrieved, gateway, trace);
    CHECK(pruned.find("Glaciers carve deep valleys.") != std::string::npos);
    CHECK(pruned.find("Santa") == std::string::npos);
}

TEST_CASE("generate answers from context; failures degrade to empty with a note") {
    Gateway gateway = make_mock_gateway();
    PipelineTrace trace;
    const std::string answer =
        generate("which enzyme unwinds dna", "Helicase unwinds dna. The sky is blue.", gateway,
                 trace);
    CHECK(answer == "Helicase unwinds dna.");
    CHECK(generate("q", "", gateway, trace).empty());

    Gateway failing = gateway;
    failing.chat = std::make_shared<testsupport::FaultChatBackend>(
        ChatFailure::timeout, [](int, const ChatRequest&) { return true; });
    PipelineTrace trace2;
    CHECK(generate("q", "Some context here.", failing, trace2).empty());
    REQUIRE(!trace2.failures.empty());
    CHECK(trace2.failures[0].find("timeout") != std::string::npos);
}

TEST_CASE("rewrite: off and mock identity both return the question; failures degrade") {
    Gateway gateway = make_mock_gateway();
    PipelineTrace trace;
    PipelineSettings settings;
    settings.rewriter_prompt = "off";
    CHECK(rewrite(settings, "the question", gateway, trace) == "the question");
    settings.rewriter_prompt = "P2";
    CHECK(rewrite(settings, "the question", gateway, trace) == "the question");
    CHECK(trace.failures.empty());

    Gateway failing = gateway;
    failing.chat = std::make_shared<testsupport::FaultChatBackend>(
        ChatFailure::transport, [](int, const ChatRequest&) { return true; });
    PipelineTrace trace2;
    CHECK(rewrite(settings, "the question", failing, trace2) == "the question");
    CHECK(!trace2.failures.empty());
}

// ============================================================================
// end-to-end composition
// ============================================================================

TEST_CASE("run_pipeline composes the stages and fills the trace") {
    Environment env = testsupport::make_retrievable_env();
    Gateway gateway = make_mock_gateway();
    IndexCache cache;
    const SearchSpace space = default_text_space();
    const PipelineConfig config = config_from_labels(
        space, {{"rewriter_prompt", "off"},
                {"chunk_size", "256"},
                {"chunk_overlap", "0"},
                {"retriever_top_k", "3"},
                {"bm25_weight_alpha", "0.5"},
                {"reranker_model", "off"},
                {"reranker_top_k", "3"},
                {"pruner_prompt", "off"}});

    const PipelineTrace trace =
        run_pipeline(space, config, env.qa[1].question, env, gateway, cache);
    CHECK_FALSE(trace.unrecoverable);
    CHECK(trace.rewritten_query == env.qa[1].question);
    CHECK(!trace.retrieved.empty());
    CHECK(trace.retrieved.size() <= 3);
    CHECK(trace.reranked.size() <= trace.retrieved.size());
    CHECK(trace.answer == env.qa[1].references[0] + ".");
    CHECK(trace.failures.empty());

    // identical (config, question) twice -> identical traces (mock purity)
    const PipelineTrace again =
        run_pipeline(space, config, env.qa[1].question, env, gateway, cache);
    CHECK(again.answer == trace.answer);
    CHECK(again.pruned_context == trace.pruned_context);
    REQUIRE(again.retrieved.size() == trace.retrieved.size());
    for (std::size_t i = 0; i < again.retrieved.size(); ++i) {
        CHECK(again.retrieved[i].doc_id == trace.retrieved[i].doc_id);
        CHECK(again.retrieved[i].score == trace.retrieved[i].score);
    }
}

TEST_CASE("run_pipeline on a single short doc retrieves that chunk for any k") {
    Environment env = testsupport::make_env({{"what is here", "tiny"}},
                                            {{"solo", "just a tiny document"}});
    Gateway gateway = make_mock_gateway();
    IndexCache cache;
    const SearchSpace space = default_text_space();
    for (const std::string k : {"1", "50"}) {
        const PipelineConfig config = config_from_labels(
            space, {{"retriever_top_k", k}, {"reranker_model", "off"}});
        const PipelineTrace trace =
            run_pipeline(space, config, "what is here", env, gateway, cache);
        REQUIRE(trace.retrieved.size() == 1);
        CHECK(trace.retrieved[0].doc_id == "solo");
    }
}

TEST_CASE("reranked length never exceeds min(k_rerank, retrieved)") {
    Environment env = testsupport::make_retrievable_env();
    Gateway gateway = make_mock_gateway();
    IndexCache cache;
    const SearchSpace space = default_text_space();
    const PipelineConfig config = config_from_labels(
        space, {{"retriever_top_k", "5"}, {"reranker_model", "rr-a"}, {"reranker_top_k", "3"}});
    const PipelineTrace trace =
        run_pipeline(space, config, env.qa[0].question, env, gateway, cache);
    CHECK(trace.retrieved.size() <= 5);
    CHECK(trace.reranked.size() <= std::min<std::size_t>(3, trace.retrieved.size()));
}

TEST_CASE("index cache reuses one build per (corpus, size, overlap, embedder)") {
    Environment env = testsupport::make_retrievable_env();
    Gateway gateway = make_mock_gateway();
    IndexCache cache;
    PipelineSettings a, b;
    a.chunk_size = b.chunk_size = 256;
    const auto first = cache.get_or_build(env, a, gateway);
    const auto second = cache.get_or_build(env, b, gateway);
    CHECK(first.get() == second.get());
    b.embedder = "emb-b";
    const auto third = cache.get_or_build(env, b, gateway);
    CHECK(first.get() != third.get());
}

TEST_CASE("internal exceptions set the unrecoverable flag instead of throwing") {
    Environment env = testsupport::make_retrievable_env();
    Gateway gateway = make_mock_gateway();
    gateway.chat = std::make_shared<testsupport::FaultChatBackend>(
        ChatFailure::transport, [](int, const ChatRequest&) { return true; },
        /*throw_instead=*/true);
    IndexCache cache;
    const SearchSpace space = default_text_space();
    const PipelineConfig config = config_from_labels(space, {{"pruner_prompt", "P1"}});
    const PipelineTrace trace =
        run_pipeline(space, config, env.qa[0].question, env, gateway, cache);
    CHECK(trace.unrecoverable);
    CHECK(!trace.unrecoverable_detail.empty());
}
