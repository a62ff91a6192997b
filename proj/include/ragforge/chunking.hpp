#pragma once

#include <array>
#include <cassert>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragforge/corpus.hpp"
#include "ragforge/numeric.hpp"
#include "ragforge/providers.hpp"
#include "ragforge/tokenizer.hpp"

namespace ragforge {

enum class ChunkingStrategy { naive, recursive, semantic };

inline std::string_view to_string(ChunkingStrategy s) {
    switch (s) {
        case ChunkingStrategy::naive: return "naive";
        case ChunkingStrategy::recursive: return "recursive";
        case ChunkingStrategy::semantic: return "semantic";
    }
    return "naive";
}

inline ChunkingStrategy chunking_strategy_from(std::string_view name) {
    if (name == "naive") return ChunkingStrategy::naive;
    if (name == "recursive") return ChunkingStrategy::recursive;
    if (name == "semantic") return ChunkingStrategy::semantic;
    throw Error("unknown chunking strategy: " + std::string(name));
}

struct ChunkingConfig {
    ChunkingStrategy strategy = ChunkingStrategy::recursive;
    std::size_t max_tokens = 512;
    std::size_t overlap_tokens = 0;
    std::size_t min_tokens = 64;          // semantic merge floor
    double breakpoint_percentile = 25.0;  // semantic breakpoints

    void validate() const {
        if (max_tokens < 1)
            throw Error("max_tokens must be >= 1");
        if (overlap_tokens >= max_tokens)
            throw Error("overlap_tokens must be < max_tokens");
        if (strategy == ChunkingStrategy::semantic) {
            if (min_tokens >= max_tokens)
                throw Error("min_tokens must be < max_tokens");
            if (breakpoint_percentile <= 0.0 || breakpoint_percentile >= 100.0)
                throw Error("breakpoint_percentile must be in (0, 100)");
        }
    }
};

struct ChunkRecord {
    std::string chunk_id;  // doc_id + "#" + index
    std::string doc_id;
    ChunkingStrategy strategy = ChunkingStrategy::naive;
    std::string text;
    std::size_t token_count = 0;
    std::size_t span_begin = 0;  // char span into the source body
    std::size_t span_end = 0;
    std::optional<double> coherence;  // semantic strategy only

    // source_tag prefix of the owning document's id
    std::string source_tag() const {
        const auto slash = doc_id.find('/');
        return slash == std::string::npos ? std::string("general") : doc_id.substr(0, slash);
    }

    bool operator==(const ChunkRecord&) const = default;
};

namespace detail {

struct TokenRange {
    std::size_t begin = 0;  // token indexes, half-open
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

inline ChunkRecord make_chunk(const Document& doc, ChunkingStrategy strategy, std::size_t index,
                              const std::vector<Token>& tokens, TokenRange range,
                              std::optional<double> coherence = std::nullopt) {
    const std::size_t from = tokens[range.begin].begin;
    const std::size_t to = tokens[range.end - 1].end;
    ChunkRecord rec;
    rec.chunk_id = doc.doc_id + "#" + std::to_string(index);
    rec.doc_id = doc.doc_id;
    rec.strategy = strategy;
    rec.text = doc.body.substr(from, to - from);
    rec.token_count = range.size();
    rec.span_begin = from;
    rec.span_end = to;
    rec.coherence = coherence;
    return rec;
}

// Splits a token range at every occurrence of a text delimiter. All delimiters
// contain whitespace, and tokens never do, so cuts always fall between tokens.
// Returns the range itself when the delimiter does not occur inside it.
inline std::vector<TokenRange> split_on_delimiter(std::string_view body,
                                                  const std::vector<Token>& tokens,
                                                  TokenRange range, std::string_view delimiter) {
    const std::size_t span_begin = tokens[range.begin].begin;
    const std::size_t span_end = tokens[range.end - 1].end;

    std::vector<TokenRange> parts;
    std::size_t part_begin = range.begin;
    std::size_t pos = span_begin;
    while (pos < span_end) {
        const std::size_t hit = body.find(delimiter, pos);
        if (hit == std::string_view::npos || hit >= span_end)
            break;
        // first token starting at or after the delimiter's end
        std::size_t cut = part_begin;
        while (cut < range.end && tokens[cut].begin < hit + delimiter.size())
            ++cut;
        if (cut > part_begin && cut < range.end) {
            parts.push_back(TokenRange{part_begin, cut});
            part_begin = cut;
        }
        pos = hit + delimiter.size();
    }
    if (parts.empty())
        return {range};
    parts.push_back(TokenRange{part_begin, range.end});
    return parts;
}

// Greedy chunk assembly with lazy descent through the delimiter hierarchy.
// A segment that cannot join the open chunk closes it; a segment that cannot
// fit even a fresh chunk (overlap carry included) is split one level finer.
// The token-boundary level guarantees termination because a single token and
// the carry always fit (overlap < max).
class RecursiveAssembler {
public:
    RecursiveAssembler(std::string_view body, const std::vector<Token>& tokens,
                       std::size_t max_tokens, std::size_t overlap_tokens)
        : body_(body), tokens_(tokens), max_(max_tokens), overlap_(overlap_tokens) {}

    std::vector<TokenRange> run() {
        process(TokenRange{0, tokens_.size()}, 0);
        if (cur_end_ > content_start_)
            emit();
        return std::move(chunks_);
    }

private:
    static constexpr std::array<std::string_view, 4> kDelimiters = {"\n\n", "\n", ". ", " "};

    bool fits(TokenRange seg) const { return (cur_end_ - cur_begin_) + seg.size() <= max_; }

    void append(TokenRange seg) {
        assert(seg.begin == cur_end_);
        cur_end_ = seg.end;
    }

    void emit() {
        chunks_.push_back(TokenRange{cur_begin_, cur_end_});
        const std::size_t carry = std::min(overlap_, cur_end_ - cur_begin_);
        cur_begin_ = cur_end_ - carry;
        content_start_ = cur_end_;
    }

    void process(TokenRange seg, std::size_t level) {
        if (fits(seg)) {
            append(seg);
            return;
        }
        if (cur_end_ > content_start_) {
            emit();
            if (fits(seg)) {
                append(seg);
                return;
            }
        }
        if (level < kDelimiters.size()) {
            for (TokenRange sub : split_on_delimiter(body_, tokens_, seg, kDelimiters[level]))
                process(sub, level + 1);
        } else {
            // token-boundary fallback
            for (std::size_t t = seg.begin; t < seg.end; ++t)
                process_token(TokenRange{t, t + 1});
        }
    }

    void process_token(TokenRange one) {
        if (!fits(one)) {
            emit();
            assert(fits(one));
        }
        append(one);
    }

    std::string_view body_;
    const std::vector<Token>& tokens_;
    std::size_t max_;
    std::size_t overlap_;
    std::vector<TokenRange> chunks_;
    std::size_t cur_begin_ = 0;
    std::size_t content_start_ = 0;
    std::size_t cur_end_ = 0;
};

}  // namespace detail

// Fixed-size token windows, no overlap. Concatenating the chunks' token
// sequences reproduces the document's token sequence exactly.
inline std::vector<ChunkRecord> chunk_naive(const Document& doc, const ChunkingConfig& cfg,
                                            const Tokenizer& tok = default_tokenizer()) {
    cfg.validate();
    const auto tokens = tok.tokenize(doc.body);
    std::vector<ChunkRecord> out;
    for (std::size_t start = 0, index = 0; start < tokens.size(); start += cfg.max_tokens, ++index) {
        const std::size_t end = std::min(tokens.size(), start + cfg.max_tokens);
        out.push_back(detail::make_chunk(doc, ChunkingStrategy::naive, index, tokens,
                                         detail::TokenRange{start, end}));
    }
    return out;
}

// Hierarchical splitting on ["\n\n", "\n", ". ", " "], descending only where a
// segment cannot fit, then greedy reassembly. Consecutive chunks created by a
// forced split share exactly overlap_tokens tokens: the carry extends the new
// chunk's span back over the previous chunk's tail, so the shared region is
// token-identical by construction. Every chunk, carry included, stays within
// max_tokens.
inline std::vector<ChunkRecord> chunk_recursive(const Document& doc, const ChunkingConfig& cfg,
                                                const Tokenizer& tok = default_tokenizer()) {
    cfg.validate();
    const auto tokens = tok.tokenize(doc.body);
    if (tokens.empty())
        return {};
    detail::RecursiveAssembler assembler(doc.body, tokens, cfg.max_tokens, cfg.overlap_tokens);
    const auto ranges = assembler.run();
    std::vector<ChunkRecord> out;
    out.reserve(ranges.size());
    for (std::size_t i = 0; i < ranges.size(); ++i)
        out.push_back(detail::make_chunk(doc, ChunkingStrategy::recursive, i, tokens, ranges[i]));
    return out;
}

// Embedding-driven segmentation:
//   1. sentence split
//   2. cosine similarity between consecutive sentence vectors
//   3. breakpoint where similarity falls strictly below the configured
//      percentile of the document's consecutive similarities
//   4. forced splits keep every chunk within max_tokens
//   5. chunks under min_tokens merge into the adjacent chunk with the more
//      similar centroid, unless the merge would break the max_tokens bound
//   6. coherence = mean pairwise cosine of the chunk's sentence vectors
inline std::vector<ChunkRecord> chunk_semantic(const Document& doc, const ChunkingConfig& cfg,
                                               const EmbeddingProvider& embedder,
                                               const Tokenizer& tok = default_tokenizer()) {
    cfg.validate();
    const auto tokens = tok.tokenize(doc.body);
    if (tokens.empty())
        return {};
    const auto sentences = split_sentences(doc.body);

    // per-sentence token ranges; sentences align to token boundaries
    std::vector<detail::TokenRange> sent_tokens(sentences.size());
    {
        std::size_t t = 0;
        for (std::size_t s = 0; s < sentences.size(); ++s) {
            while (t < tokens.size() && tokens[t].begin < sentences[s].begin)
                ++t;
            const std::size_t first = t;
            while (t < tokens.size() && tokens[t].end <= sentences[s].end)
                ++t;
            sent_tokens[s] = detail::TokenRange{first, t};
        }
    }

    std::vector<std::vector<float>> vectors(sentences.size());
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        vectors[s] = embedder.embed(sentences[s].view(doc.body));
        if (vectors[s].size() != vectors[0].size())
            throw Error("sentence embedder returned inconsistent dimensions for " + doc.doc_id);
    }

    auto cos = [&](std::size_t a, std::size_t b) {
        return cosine(std::span<const float>(vectors[a]), std::span<const float>(vectors[b]));
    };

    // groups of sentence indexes between breakpoints
    std::vector<std::vector<std::size_t>> groups;
    {
        std::vector<double> sims;
        for (std::size_t s = 0; s + 1 < sentences.size(); ++s)
            sims.push_back(cos(s, s + 1));
        double threshold = 0.0;
        if (!sims.empty())
            threshold = percentile(sims, cfg.breakpoint_percentile);
        std::vector<std::size_t> group{0};
        for (std::size_t s = 0; s + 1 < sentences.size(); ++s) {
            if (sims[s] < threshold) {
                groups.push_back(std::move(group));
                group = {};
            }
            group.push_back(s + 1);
        }
        groups.push_back(std::move(group));
    }

    // forced max_tokens splits: pack whole sentences; an oversized single
    // sentence falls back to plain token windows
    struct Piece {
        detail::TokenRange range;
        std::vector<std::size_t> sentence_ids;
    };
    std::vector<Piece> pieces;
    for (const auto& group : groups) {
        Piece open;
        bool has_open = false;
        auto close = [&]() {
            if (has_open) {
                pieces.push_back(std::move(open));
                open = {};
                has_open = false;
            }
        };
        for (std::size_t sid : group) {
            const auto sr = sent_tokens[sid];
            if (sr.size() == 0)
                continue;
            if (sr.size() > cfg.max_tokens) {
                close();
                for (std::size_t w = sr.begin; w < sr.end; w += cfg.max_tokens) {
                    const std::size_t we = std::min(sr.end, w + cfg.max_tokens);
                    pieces.push_back(Piece{detail::TokenRange{w, we}, {sid}});
                }
                continue;
            }
            if (has_open && open.range.size() + sr.size() > cfg.max_tokens)
                close();
            if (!has_open) {
                open.range = sr;
                has_open = true;
            } else {
                open.range.end = sr.end;
            }
            open.sentence_ids.push_back(sid);
        }
        close();
    }

    // merge fragments into the neighbor with the more similar centroid
    auto centroid = [&](const Piece& piece) {
        std::vector<double> c(vectors[0].size(), 0.0);
        for (std::size_t sid : piece.sentence_ids)
            for (std::size_t d = 0; d < c.size(); ++d)
                c[d] += vectors[sid][d];
        return c;
    };
    auto centroid_cos = [&](const Piece& a, const Piece& b) {
        const auto ca = centroid(a);
        const auto cb = centroid(b);
        return cosine(std::span<const double>(ca), std::span<const double>(cb));
    };
    bool merged = true;
    while (merged && pieces.size() > 1) {
        merged = false;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            if (pieces[i].range.size() >= cfg.min_tokens)
                continue;
            const bool has_left = i > 0;
            const bool has_right = i + 1 < pieces.size();
            double left_sim = has_left ? centroid_cos(pieces[i], pieces[i - 1]) : -2.0;
            double right_sim = has_right ? centroid_cos(pieces[i], pieces[i + 1]) : -2.0;
            auto fits_with = [&](std::size_t j) {
                return pieces[i].range.size() + pieces[j].range.size() <= cfg.max_tokens;
            };
            if (has_left && !fits_with(i - 1))
                left_sim = -2.0;
            if (has_right && !fits_with(i + 1))
                right_sim = -2.0;
            if (left_sim < -1.5 && right_sim < -1.5)
                continue;
            const std::size_t target = left_sim >= right_sim ? i - 1 : i + 1;
            auto& dst = pieces[target];
            auto& src = pieces[i];
            if (target < i) {
                dst.range.end = src.range.end;
                dst.sentence_ids.insert(dst.sentence_ids.end(), src.sentence_ids.begin(),
                                        src.sentence_ids.end());
            } else {
                dst.range.begin = src.range.begin;
                dst.sentence_ids.insert(dst.sentence_ids.begin(), src.sentence_ids.begin(),
                                        src.sentence_ids.end());
            }
            pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(i));
            merged = true;
            break;
        }
    }

    std::vector<ChunkRecord> out;
    out.reserve(pieces.size());
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto& piece = pieces[i];
        double coherence = 1.0;
        const auto& ids = piece.sentence_ids;
        if (ids.size() > 1) {
            double sum = 0.0;
            std::size_t pairs = 0;
            for (std::size_t a = 0; a < ids.size(); ++a)
                for (std::size_t b = a + 1; b < ids.size(); ++b) {
                    sum += cos(ids[a], ids[b]);
                    ++pairs;
                }
            coherence = sum / static_cast<double>(pairs);
        }
        out.push_back(
            detail::make_chunk(doc, ChunkingStrategy::semantic, i, tokens, piece.range, coherence));
    }
    return out;
}

inline json chunk_to_json(const ChunkRecord& c) {
    json j{{"chunk_id", c.chunk_id},
           {"doc_id", c.doc_id},
           {"strategy", std::string(to_string(c.strategy))},
           {"text", c.text},
           {"token_count", c.token_count},
           {"span_begin", c.span_begin},
           {"span_end", c.span_end}};
    if (c.coherence)
        j["coherence"] = *c.coherence;
    return j;
}

inline ChunkRecord chunk_from_json(const json& j) {
    ChunkRecord c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.strategy = chunking_strategy_from(j.at("strategy").get<std::string>());
    c.text = j.at("text").get<std::string>();
    c.token_count = j.at("token_count").get<std::size_t>();
    c.span_begin = j.at("span_begin").get<std::size_t>();
    c.span_end = j.at("span_end").get<std::size_t>();
    if (j.contains("coherence"))
        c.coherence = j.at("coherence").get<double>();
    return c;
}

struct ChunkStats {
    std::size_t document_count = 0;
    std::size_t chunk_count = 0;
    std::size_t total_tokens = 0;
    double mean_token_count = 0.0;
    std::size_t max_token_count = 0;
};

struct ChunkSet {
    ChunkingStrategy strategy = ChunkingStrategy::naive;
    std::vector<ChunkRecord> chunks;
    ChunkStats stats;
};

// Applies the configured strategy to every document in insertion order.
// Per-document failures are rethrown with the doc_id attached.
inline ChunkSet chunk_corpus(const Corpus& corpus, const ChunkingConfig& cfg,
                             const Tokenizer& tok = default_tokenizer(),
                             const EmbeddingProvider* embedder = nullptr) {
    cfg.validate();
    if (cfg.strategy == ChunkingStrategy::semantic && embedder == nullptr)
        throw Error("semantic chunking requires a sentence embedder");

    ChunkSet set;
    set.strategy = cfg.strategy;
    set.stats.document_count = corpus.size();
    for (const auto& doc : corpus.documents()) {
        std::vector<ChunkRecord> chunks;
        try {
            switch (cfg.strategy) {
                case ChunkingStrategy::naive: chunks = chunk_naive(doc, cfg, tok); break;
                case ChunkingStrategy::recursive: chunks = chunk_recursive(doc, cfg, tok); break;
                case ChunkingStrategy::semantic:
                    chunks = chunk_semantic(doc, cfg, *embedder, tok);
                    break;
            }
        } catch (const Error& e) {
            throw Error("chunking failed for " + doc.doc_id + ": " + e.what());
        }
        for (auto& c : chunks) {
            set.stats.total_tokens += c.token_count;
            set.stats.max_token_count = std::max(set.stats.max_token_count, c.token_count);
            set.chunks.push_back(std::move(c));
        }
    }
    set.stats.chunk_count = set.chunks.size();
    if (set.stats.chunk_count > 0)
        set.stats.mean_token_count = static_cast<double>(set.stats.total_tokens) /
                                     static_cast<double>(set.stats.chunk_count);
    return set;
}

}  // namespace ragforge
