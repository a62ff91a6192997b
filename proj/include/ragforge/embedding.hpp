#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragforge/jsonl.hpp"
#include "ragforge/metadata.hpp"
#include "ragforge/numeric.hpp"
#include "ragforge/providers.hpp"
#include "ragforge/tokenizer.hpp"

namespace ragforge {

enum class EmbeddingStrategy { content, tfidf_weighted, prefix_fusion };

inline std::string_view to_string(EmbeddingStrategy s) {
    switch (s) {
        case EmbeddingStrategy::content: return "content";
        case EmbeddingStrategy::tfidf_weighted: return "tfidf_weighted";
        case EmbeddingStrategy::prefix_fusion: return "prefix_fusion";
    }
    return "content";
}

inline EmbeddingStrategy embedding_strategy_from(std::string_view name) {
    if (name == "content") return EmbeddingStrategy::content;
    if (name == "tfidf_weighted") return EmbeddingStrategy::tfidf_weighted;
    if (name == "prefix_fusion") return EmbeddingStrategy::prefix_fusion;
    throw Error("unknown embedding strategy: " + std::string(name));
}

inline constexpr std::array<EmbeddingStrategy, 3> kEmbeddingStrategies = {
    EmbeddingStrategy::content, EmbeddingStrategy::tfidf_weighted,
    EmbeddingStrategy::prefix_fusion};
inline constexpr std::array<ChunkingStrategy, 3> kChunkingStrategies = {
    ChunkingStrategy::semantic, ChunkingStrategy::naive, ChunkingStrategy::recursive};

// Unit-norm vector with strategy provenance. id is a chunk_id or query_id.
struct EmbeddingVector {
    std::string id;
    EmbeddingStrategy strategy = EmbeddingStrategy::content;
    std::vector<float> values;
};

namespace detail {

// Lowercased word tokens; punctuation runs are skipped. Term space shared by
// the TF-IDF vocabulary and query-side term extraction.
inline std::vector<std::string> word_terms(std::string_view text, const Tokenizer& tok) {
    std::vector<std::string> terms;
    for (const auto& t : tok.tokenize(text)) {
        const auto view = t.view(text);
        if (WordTokenizer::is_word(static_cast<unsigned char>(view.front())))
            terms.push_back(lowercased(view));
    }
    return terms;
}

}  // namespace detail

// Bag-of-words mock embedding: every distinct lowercased token maps to a fixed
// seeded pseudo-random unit vector; the output is the frequency-weighted sum,
// normalized. Token order cannot matter because accumulation runs in sorted
// token order.
inline std::vector<float> mock_embed(std::string_view text, std::size_t dimension,
                                     std::uint64_t seed,
                                     const Tokenizer& tok = default_tokenizer()) {
    if (dimension < 8)
        throw Error("mock embedding dimension must be >= 8");

    std::map<std::string, std::size_t> counts;
    for (const auto& t : tok.tokenize(text))
        ++counts[detail::lowercased(t.view(text))];

    std::vector<double> acc(dimension, 0.0);
    auto add_token = [&](std::uint64_t token_hash, double weight) {
        const std::uint64_t base = splitmix64(seed ^ token_hash);
        std::vector<double> v(dimension);
        double norm_sq = 0.0;
        for (std::size_t d = 0; d < dimension; ++d) {
            v[d] = hash_to_unit(splitmix64(base + 0x9e3779b97f4a7c15ULL * (d + 1)));
            norm_sq += v[d] * v[d];
        }
        const double norm = std::sqrt(norm_sq);
        for (std::size_t d = 0; d < dimension; ++d)
            acc[d] += weight * v[d] / norm;
    };

    if (counts.empty()) {
        add_token(0x656d707479ULL, 1.0);
    } else {
        for (const auto& [token, count] : counts)
            add_token(fnv1a64(token), static_cast<double>(count));
    }

    double norm = 0.0;
    for (double x : acc)
        norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(dimension);
    for (std::size_t d = 0; d < dimension; ++d)
        out[d] = static_cast<float>(acc[d] / norm);
    return out;
}

class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    MockEmbeddingProvider(std::size_t dimension, std::uint64_t seed)
        : dimension_(dimension), seed_(seed) {}

    std::vector<float> embed(std::string_view text) const override {
        return mock_embed(text, dimension_, seed_);
    }
    std::size_t dimension() const override { return dimension_; }
    std::string model_name() const override { return "mock-embed"; }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

// Seeded sparse sign projection from vocabulary space into the embedding
// dimension: each input index spreads over nonzeros_per_row positions with
// ±1/sqrt(D) weights, both drawn from a generator keyed on (seed, index).
class SparseSignProjection {
public:
    SparseSignProjection(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed)
        : input_dim_(input_dim), output_dim_(output_dim), seed_(seed),
          nonzeros_(std::max<std::size_t>(1, output_dim / 32)) {
        if (output_dim_ < 2)
            throw Error("projection output dimension must be >= 2");
        if (nonzeros_ > output_dim_)
            nonzeros_ = output_dim_;
    }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    std::uint64_t seed() const { return seed_; }

    // sparse input: (index, value) pairs
    std::vector<double> project(const std::vector<std::pair<std::size_t, double>>& sparse) const {
        std::vector<double> out(output_dim_, 0.0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(output_dim_));
        for (const auto& [index, value] : sparse) {
            if (index >= input_dim_)
                throw Error("projection index out of range");
            std::uint64_t state = splitmix64(seed_ ^ (0x517cc1b727220a95ULL * (index + 1)));
            std::size_t placed = 0;
            std::vector<std::size_t> used;
            used.reserve(nonzeros_);
            while (placed < nonzeros_) {
                state = splitmix64(state);
                const std::size_t pos = static_cast<std::size_t>(state % output_dim_);
                if (std::find(used.begin(), used.end(), pos) != used.end())
                    continue;
                used.push_back(pos);
                state = splitmix64(state);
                const double sign = (state & 1) ? 1.0 : -1.0;
                out[pos] += value * sign * scale;
                ++placed;
            }
        }
        return out;
    }

    std::vector<double> project_dense(std::span<const double> dense) const {
        if (dense.size() != input_dim_)
            throw Error("projection input dimension mismatch");
        std::vector<std::pair<std::size_t, double>> sparse;
        for (std::size_t i = 0; i < dense.size(); ++i)
            if (dense[i] != 0.0)
                sparse.emplace_back(i, dense[i]);
        return project(sparse);
    }

private:
    std::size_t input_dim_;
    std::size_t output_dim_;
    std::uint64_t seed_;
    std::size_t nonzeros_;
};

// The text a chunk's TF-IDF representation is built from: all metadata fields
// joined with spaces, never the chunk body.
inline std::string metadata_text(const ChunkMetadata& m) {
    std::string out;
    auto append = [&](std::string_view part) {
        if (part.empty())
            return;
        if (!out.empty())
            out += ' ';
        out += part;
    };
    for (const auto& kw : m.keywords)
        append(kw);
    for (const auto& e : m.entities)
        append(e);
    append(m.primary_category);
    for (const auto& c : m.secondary_categories)
        append(c);
    for (const auto& s : m.services)
        append(s);
    for (const auto& t : m.tools)
        append(t);
    for (auto i : m.intents)
        append(to_string(i));
    append(m.summary);
    return out;
}

struct TfidfProjection {
    std::vector<float> values;
    bool is_zero = false;  // all terms out of vocabulary; values are all zeros
};

// Vocabulary, document frequencies and the projection spec fitted over chunk
// metadata text. idf(t) = ln((1+N) / (1+df(t))) + 1.
class TfidfModel {
public:
    TfidfModel() = default;
    TfidfModel(std::vector<std::string> vocabulary, std::vector<std::size_t> document_frequency,
               std::size_t n_chunks, std::size_t dimension, std::uint64_t projection_seed)
        : vocabulary_(std::move(vocabulary)), df_(std::move(document_frequency)),
          n_chunks_(n_chunks),
          projection_(vocabulary_.size(), dimension, projection_seed) {
        if (vocabulary_.size() != df_.size())
            throw Error("vocabulary / document_frequency size mismatch");
        for (std::size_t i = 0; i < vocabulary_.size(); ++i)
            index_.emplace(vocabulary_[i], i);
        idf_.resize(df_.size());
        for (std::size_t i = 0; i < df_.size(); ++i)
            idf_[i] = std::log((1.0 + static_cast<double>(n_chunks_)) /
                               (1.0 + static_cast<double>(df_[i]))) +
                      1.0;
    }

    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    const std::vector<std::size_t>& document_frequency() const { return df_; }
    std::size_t n_chunks() const { return n_chunks_; }
    std::size_t dimension() const { return projection_.output_dim(); }
    std::uint64_t projection_seed() const { return projection_.seed(); }
    const SparseSignProjection& projection() const { return projection_; }

    double idf(std::string_view term) const {
        auto it = index_.find(std::string(term));
        if (it == index_.end())
            throw Error("term not in vocabulary: " + std::string(term));
        return idf_[it->second];
    }

    // Raw term counts × idf, unit-normalized in vocabulary space, then
    // projected and unit-normalized again. All-OOV text yields the flagged
    // zero vector, which callers must not treat as a real embedding.
    TfidfProjection vectorize(std::string_view text,
                              const Tokenizer& tok = default_tokenizer()) const {
        std::unordered_map<std::size_t, double> weights;
        for (const auto& term : detail::word_terms(text, tok)) {
            auto it = index_.find(term);
            if (it != index_.end())
                weights[it->second] += 1.0;
        }
        TfidfProjection out;
        if (weights.empty()) {
            out.values.assign(dimension(), 0.0f);
            out.is_zero = true;
            return out;
        }
        std::vector<std::pair<std::size_t, double>> sparse(weights.begin(), weights.end());
        std::sort(sparse.begin(), sparse.end());
        double norm_sq = 0.0;
        for (auto& [index, value] : sparse) {
            value *= idf_[index];
            norm_sq += value * value;
        }
        const double norm = std::sqrt(norm_sq);
        for (auto& [index, value] : sparse)
            value /= norm;
        const auto projected = projection_.project(sparse);
        double out_norm = std::sqrt(dot(std::span<const double>(projected),
                                        std::span<const double>(projected)));
        out.values.resize(dimension());
        for (std::size_t d = 0; d < projected.size(); ++d)
            out.values[d] = static_cast<float>(projected[d] / out_norm);
        return out;
    }

private:
    std::vector<std::string> vocabulary_;
    std::vector<std::size_t> df_;
    std::size_t n_chunks_ = 0;
    SparseSignProjection projection_{0, 2, 0};
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> idf_;
};

inline TfidfModel fit_tfidf(std::span<const EnrichedChunk> enriched, std::size_t dimension,
                            std::uint64_t projection_seed,
                            const Tokenizer& tok = default_tokenizer()) {
    if (enriched.empty())
        throw Error("cannot fit TF-IDF on an empty chunk set");
    std::map<std::string, std::size_t> df;  // sorted vocabulary for free
    for (const auto& e : enriched) {
        const auto terms = detail::word_terms(metadata_text(e.metadata), tok);
        std::set<std::string> distinct(terms.begin(), terms.end());
        for (auto& term : distinct)
            ++df[term];
    }
    if (df.empty())
        throw Error("empty metadata vocabulary");
    std::vector<std::string> vocabulary;
    std::vector<std::size_t> counts;
    vocabulary.reserve(df.size());
    counts.reserve(df.size());
    for (auto& [term, count] : df) {
        vocabulary.push_back(term);
        counts.push_back(count);
    }
    return TfidfModel(std::move(vocabulary), std::move(counts), enriched.size(), dimension,
                      projection_seed);
}

inline void save_tfidf_model(const TfidfModel& model, const std::filesystem::path& path) {
    json j{{"vocabulary", model.vocabulary()},
           {"document_frequency", model.document_frequency()},
           {"n_chunks", model.n_chunks()},
           {"dimension", model.dimension()},
           {"projection_seed", model.projection_seed()}};
    write_file(path, j.dump(2) + "\n");
}

inline TfidfModel load_tfidf_model(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(path.string() + ": malformed TF-IDF model: " + e.what());
    }
    return TfidfModel(j.at("vocabulary").get<std::vector<std::string>>(),
                      j.at("document_frequency").get<std::vector<std::size_t>>(),
                      j.at("n_chunks").get<std::size_t>(), j.at("dimension").get<std::size_t>(),
                      j.at("projection_seed").get<std::uint64_t>());
}

struct FusionWeights {
    double content_weight = 0.7;
    double metadata_weight = 0.3;

    void validate() const {
        if (content_weight < 0.0 || metadata_weight < 0.0 ||
            std::abs(content_weight + metadata_weight - 1.0) > 1e-9)
            throw Error("fusion weights must be non-negative and sum to 1");
    }
};

namespace detail {

inline std::vector<float> normalized_copy(std::vector<float> v, const std::string& what) {
    const double norm = l2_norm(std::span<const float>(v));
    if (norm == 0.0)
        throw Error(what + ": provider returned a zero vector");
    for (auto& x : v)
        x = static_cast<float>(static_cast<double>(x) / norm);
    return v;
}

}  // namespace detail

// Convex combination of two unit vectors, NOT renormalized; callers decide.
// Exposed separately so the combination geometry is testable in isolation.
inline std::vector<float> fuse_unit_vectors(std::span<const float> content_unit,
                                            std::span<const float> metadata_unit,
                                            const FusionWeights& weights) {
    weights.validate();
    if (content_unit.size() != metadata_unit.size())
        throw Error("fusion dimension mismatch");
    std::vector<float> out(content_unit.size());
    for (std::size_t d = 0; d < out.size(); ++d)
        out[d] = static_cast<float>(weights.content_weight * content_unit[d] +
                                    weights.metadata_weight * metadata_unit[d]);
    return out;
}

inline EmbeddingVector embed_content(std::string_view text, const EmbeddingProvider& provider,
                                     std::string id = {}) {
    if (text.empty())
        throw Error("cannot embed empty text");
    EmbeddingVector v;
    v.id = std::move(id);
    v.strategy = EmbeddingStrategy::content;
    v.values = detail::normalized_copy(provider.embed(text), "embed_content");
    return v;
}

// 0.7 · ĉ + 0.3 · t̂ (configurable), renormalized. When every metadata term is
// out of vocabulary the TF-IDF side is the flagged zero vector and the result
// falls back to the content embedding alone.
inline EmbeddingVector embed_tfidf_weighted(const EnrichedChunk& enriched,
                                            const EmbeddingProvider& provider,
                                            const TfidfModel& model,
                                            const FusionWeights& weights = {},
                                            const Tokenizer& tok = default_tokenizer()) {
    weights.validate();
    if (provider.dimension() != model.dimension())
        throw Error("embedding provider dimension " + std::to_string(provider.dimension()) +
                    " does not match projection dimension " + std::to_string(model.dimension()));
    EmbeddingVector out = embed_content(enriched.chunk.text, provider, enriched.chunk.chunk_id);
    out.strategy = EmbeddingStrategy::tfidf_weighted;
    const TfidfProjection tfidf = model.vectorize(metadata_text(enriched.metadata), tok);
    if (tfidf.is_zero)
        return out;
    out.values = fuse_unit_vectors(out.values, tfidf.values, weights);
    const double norm = l2_norm(std::span<const float>(out.values));
    for (auto& x : out.values)
        x = static_cast<float>(static_cast<double>(x) / norm);
    return out;
}

// Deterministic metadata prefix; field order is fixed and empty lists render
// as "-" so the same metadata always produces byte-identical prefixes.
inline std::string render_prefix(const ChunkMetadata& m) {
    auto csv = [](const auto& items, auto&& to_text) {
        if (items.empty())
            return std::string("-");
        std::string out;
        for (const auto& item : items) {
            if (!out.empty())
                out += ", ";
            out += to_text(item);
        }
        return out;
    };
    std::string prefix = "[category: " + m.primary_category;
    prefix += " | type: " + std::string(to_string(m.content_type));
    prefix += " | intents: " + csv(m.intents, [](Intent i) { return std::string(to_string(i)); });
    prefix += " | keywords: " + csv(m.keywords, [](const std::string& s) { return s; });
    prefix += "]\n" + m.summary + "\n---\n";
    return prefix;
}

struct PrefixFusionOptions {
    std::size_t token_budget = 8192;  // provider input budget, prefix included
};

// Embeds render_prefix(metadata) + chunk text. The prefix is never truncated;
// the chunk text is cut at a token boundary to respect the budget.
inline EmbeddingVector embed_prefix_fusion(const EnrichedChunk& enriched,
                                           const EmbeddingProvider& provider,
                                           const PrefixFusionOptions& options = {},
                                           const Tokenizer& tok = default_tokenizer()) {
    const std::string prefix = render_prefix(enriched.metadata);
    const std::size_t prefix_tokens = tok.count(prefix);
    if (prefix_tokens > options.token_budget)
        throw Error("metadata prefix alone exceeds the token budget for " +
                    enriched.chunk.chunk_id);
    std::string body = enriched.chunk.text;
    const std::size_t body_budget = options.token_budget - prefix_tokens;
    const auto tokens = tok.tokenize(body);
    if (tokens.size() > body_budget)
        body = body_budget == 0 ? std::string() : body.substr(0, tokens[body_budget - 1].end);
    EmbeddingVector v;
    v.id = enriched.chunk.chunk_id;
    v.strategy = EmbeddingStrategy::prefix_fusion;
    v.values = detail::normalized_copy(provider.embed(prefix + body), "embed_prefix_fusion");
    return v;
}

}  // namespace ragforge
