#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ragforge/embedding.hpp"
#include "ragforge/index.hpp"
#include "ragforge/metadata.hpp"

namespace ragforge {

// One cell of the 3x3 chunking × embedding matrix.
struct RetrieverConfig {
    ChunkingStrategy chunking = ChunkingStrategy::naive;
    EmbeddingStrategy embedding = EmbeddingStrategy::content;
    std::size_t k = 10;
    FusionWeights weights;  // tfidf_weighted only

    std::string cell_name() const {
        return std::string(to_string(chunking)) + ":" + std::string(to_string(embedding));
    }
};

struct QueryRecord {
    std::string query_id;
    std::string text;
    std::optional<Intent> detected_intent;
};

inline json query_to_json(const QueryRecord& q) {
    json j{{"query_id", q.query_id}, {"text", q.text}};
    if (q.detected_intent)
        j["detected_intent"] = std::string(to_string(*q.detected_intent));
    return j;
}

inline QueryRecord query_from_json(const json& j) {
    QueryRecord q;
    q.query_id = j.at("query_id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    if (q.text.empty())
        throw Error("query " + q.query_id + " has empty text");
    if (j.contains("detected_intent"))
        q.detected_intent = intent_from(j.at("detected_intent").get<std::string>());
    return q;
}

struct RankedHit {
    std::string chunk_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based, contiguous
};

struct RetrievalResult {
    std::string query_id;
    ChunkingStrategy chunking = ChunkingStrategy::naive;
    EmbeddingStrategy embedding = EmbeddingStrategy::content;
    std::vector<RankedHit> hits;
    std::int64_t latency_micros = 0;    // around the index search only
    std::int64_t embedding_micros = 0;  // query embedding, reported separately
};

inline json retrieval_result_to_json(const RetrievalResult& r) {
    json hits = json::array();
    for (const auto& h : r.hits)
        hits.push_back(json{{"chunk_id", h.chunk_id}, {"score", h.score}, {"rank", h.rank}});
    return json{{"query_id", r.query_id},
                {"chunking", std::string(to_string(r.chunking))},
                {"embedding", std::string(to_string(r.embedding))},
                {"hits", hits},
                {"latency_micros", r.latency_micros},
                {"embedding_micros", r.embedding_micros}};
}

inline RetrievalResult retrieval_result_from_json(const json& j) {
    RetrievalResult r;
    r.query_id = j.at("query_id").get<std::string>();
    r.chunking = chunking_strategy_from(j.at("chunking").get<std::string>());
    r.embedding = embedding_strategy_from(j.at("embedding").get<std::string>());
    for (const auto& h : j.at("hits")) {
        r.hits.push_back(RankedHit{h.at("chunk_id").get<std::string>(),
                                   h.at("score").get<double>(),
                                   h.at("rank").get<std::size_t>()});
    }
    r.latency_micros = j.value("latency_micros", 0);
    r.embedding_micros = j.value("embedding_micros", 0);
    return r;
}

// Query vector for one retriever cell. The TF-IDF side applies the
// chunk-fitted vocabulary to the raw query text; all-OOV queries fall back to
// the plain content embedding. Prefix fusion prepends the detected intent in
// the same bracket vocabulary the chunk prefixes use.
inline EmbeddingVector embed_query(const QueryRecord& query, const RetrieverConfig& config,
                                   const EmbeddingProvider& provider,
                                   const TfidfModel* tfidf_model = nullptr,
                                   const Tokenizer& tok = default_tokenizer()) {
    if (query.text.empty())
        throw Error("query " + query.query_id + " has empty text");
    try {
        switch (config.embedding) {
            case EmbeddingStrategy::content:
                return embed_content(query.text, provider, query.query_id);
            case EmbeddingStrategy::tfidf_weighted: {
                if (tfidf_model == nullptr)
                    throw Error("tfidf_weighted retrieval requires a fitted TF-IDF model");
                EmbeddingVector out = embed_content(query.text, provider, query.query_id);
                out.strategy = EmbeddingStrategy::tfidf_weighted;
                const TfidfProjection tfidf = tfidf_model->vectorize(query.text, tok);
                if (tfidf.is_zero)
                    return out;
                out.values = fuse_unit_vectors(out.values, tfidf.values, config.weights);
                const double norm = l2_norm(std::span<const float>(out.values));
                for (auto& x : out.values)
                    x = static_cast<float>(static_cast<double>(x) / norm);
                return out;
            }
            case EmbeddingStrategy::prefix_fusion: {
                const Intent intent =
                    query.detected_intent ? *query.detected_intent : detect_intent(query.text);
                const std::string prefixed =
                    "[intent: " + std::string(to_string(intent)) + "]\n" + query.text;
                EmbeddingVector out = embed_content(prefixed, provider, query.query_id);
                out.strategy = EmbeddingStrategy::prefix_fusion;
                return out;
            }
        }
    } catch (const ProviderError& e) {
        throw ProviderError("query " + query.query_id + ": " + e.what());
    }
    throw Error("unreachable");
}

// All nine retriever cells over one corpus: indexes keyed by cell plus one
// TF-IDF model per chunking strategy.
struct RetrieverMatrix {
    std::map<std::pair<ChunkingStrategy, EmbeddingStrategy>, const VectorIndex*> indexes;
    std::map<ChunkingStrategy, const TfidfModel*> tfidf_models;
    const EmbeddingProvider* provider = nullptr;
    FusionWeights weights;

    void validate() const {
        if (provider == nullptr)
            throw Error("retriever matrix has no embedding provider");
        std::string missing;
        for (auto c : kChunkingStrategies)
            for (auto e : kEmbeddingStrategies) {
                auto it = indexes.find({c, e});
                if (it == indexes.end() || it->second == nullptr) {
                    if (!missing.empty())
                        missing += ", ";
                    missing += std::string(to_string(c)) + ":" + std::string(to_string(e));
                }
            }
        if (!missing.empty())
            throw Error("retriever matrix is missing indexes for: " + missing);
        for (auto c : kChunkingStrategies) {
            auto it = tfidf_models.find(c);
            if (it == tfidf_models.end() || it->second == nullptr)
                throw Error("retriever matrix is missing the TF-IDF model for " +
                            std::string(to_string(c)));
        }
    }
};

// Executes every query against every cell, config-major in the canonical
// (semantic, naive, recursive) × (content, tfidf_weighted, prefix_fusion)
// order. Validation runs before the first query so a missing index is an
// error, never a silent skip.
inline std::vector<RetrievalResult> run_matrix(std::span<const QueryRecord> queries,
                                               const RetrieverMatrix& matrix, std::size_t k,
                                               const Tokenizer& tok = default_tokenizer()) {
    matrix.validate();
    if (k < 1)
        throw Error("k must be >= 1");

    using clock = std::chrono::steady_clock;
    std::vector<RetrievalResult> results;
    results.reserve(queries.size() * 9);
    for (auto chunking : kChunkingStrategies) {
        for (auto embedding : kEmbeddingStrategies) {
            const VectorIndex& index = *matrix.indexes.at({chunking, embedding});
            const TfidfModel* model = matrix.tfidf_models.at(chunking);
            RetrieverConfig config{chunking, embedding, k, matrix.weights};
            for (const auto& query : queries) {
                RetrievalResult r;
                r.query_id = query.query_id;
                r.chunking = chunking;
                r.embedding = embedding;

                const auto embed_start = clock::now();
                const EmbeddingVector qv =
                    embed_query(query, config, *matrix.provider, model, tok);
                const auto embed_end = clock::now();

                const auto search_start = clock::now();
                const auto hits = index.search(qv.values, k);
                const auto search_end = clock::now();

                r.embedding_micros = std::chrono::duration_cast<std::chrono::microseconds>(
                                         embed_end - embed_start)
                                         .count();
                r.latency_micros = std::chrono::duration_cast<std::chrono::microseconds>(
                                       search_end - search_start)
                                       .count();
                r.hits.reserve(hits.size());
                for (std::size_t i = 0; i < hits.size(); ++i)
                    r.hits.push_back(RankedHit{hits[i].chunk_id, hits[i].score, i + 1});
                results.push_back(std::move(r));
            }
        }
    }
    return results;
}

}  // namespace ragforge
