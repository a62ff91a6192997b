#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ragforge/numeric.hpp"
#include "ragforge/retrieval.hpp"

namespace ragforge {

struct RelevanceJudgment {
    std::string query_id;
    std::string chunk_id;
    double raw_score = 0.0;
    double normalized_score = 0.0;  // per-query min-max, in [0, 1]
    bool relevant = false;          // normalized >= tau
    bool highly_relevant = false;   // normalized strictly above the per-query percentile
};

inline json judgment_to_json(const RelevanceJudgment& j) {
    return json{{"query_id", j.query_id},
                {"chunk_id", j.chunk_id},
                {"raw_score", j.raw_score},
                {"normalized_score", j.normalized_score},
                {"relevant", j.relevant},
                {"highly_relevant", j.highly_relevant}};
}

inline RelevanceJudgment judgment_from_json(const json& j) {
    return RelevanceJudgment{j.at("query_id").get<std::string>(),
                             j.at("chunk_id").get<std::string>(),
                             j.at("raw_score").get<double>(),
                             j.at("normalized_score").get<double>(),
                             j.at("relevant").get<bool>(),
                             j.at("highly_relevant").get<bool>()};
}

// Judgments indexed by query then chunk. Unjudged pairs read as non-relevant
// with zero gain.
class JudgmentSet {
public:
    void add(RelevanceJudgment j) {
        by_query_[j.query_id].emplace(j.chunk_id, std::move(j));
    }

    const RelevanceJudgment* find(const std::string& query_id, const std::string& chunk_id) const {
        auto q = by_query_.find(query_id);
        if (q == by_query_.end())
            return nullptr;
        auto c = q->second.find(chunk_id);
        return c == q->second.end() ? nullptr : &c->second;
    }

    // the full judged pool for one query, in chunk_id order
    const std::map<std::string, RelevanceJudgment>* pool(const std::string& query_id) const {
        auto q = by_query_.find(query_id);
        return q == by_query_.end() ? nullptr : &q->second;
    }

    std::vector<RelevanceJudgment> all() const {
        std::vector<RelevanceJudgment> out;
        for (const auto& [qid, pool] : by_query_)
            for (const auto& [cid, j] : pool)
                out.push_back(j);
        return out;
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [qid, pool] : by_query_)
            n += pool.size();
        return n;
    }

private:
    std::map<std::string, std::map<std::string, RelevanceJudgment>> by_query_;
};

struct GroundTruthOptions {
    std::size_t pool_size = 50;
    double relevance_threshold = 0.8;        // tau on the normalized score
    double highly_relevant_percentile = 95.0;  // per query
    std::size_t max_retries = 2;
    std::optional<std::filesystem::path> checkpoint_path;
};

// Pools the top pool_size candidates of every configuration per query
// (first-seen union, deduplicated), scores every pooled pair with the
// cross-encoder, then min-max normalizes per query. A pool the reranker
// cannot spread (all raw scores equal, or a single candidate) normalizes to
// 1.0 everywhere.
inline std::vector<RelevanceJudgment> build_ground_truth(
    std::span<const QueryRecord> queries, std::span<const RetrievalResult> all_config_results,
    const std::function<const std::string&(const std::string&)>& chunk_text_of,
    const RerankProvider& provider, const GroundTruthOptions& options = {}) {
    if (options.pool_size < 1)
        throw Error("pool_size must be >= 1");

    std::vector<RelevanceJudgment> judgments;
    for (const auto& query : queries) {
        std::vector<std::string> pool;
        std::set<std::string> seen;
        for (const auto& result : all_config_results) {
            if (result.query_id != query.query_id)
                continue;
            const std::size_t take = std::min(options.pool_size, result.hits.size());
            for (std::size_t i = 0; i < take; ++i)
                if (seen.insert(result.hits[i].chunk_id).second)
                    pool.push_back(result.hits[i].chunk_id);
        }
        if (pool.empty())
            throw Error("no retrieval results pooled for query " + query.query_id);

        std::vector<double> raw(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            std::size_t attempt = 0;
            for (;;) {
                try {
                    raw[i] = provider.score(query.text, chunk_text_of(pool[i]));
                    break;
                } catch (const ProviderError& e) {
                    if (attempt++ >= options.max_retries) {
                        if (options.checkpoint_path) {
                            JsonlWriter out(*options.checkpoint_path);
                            for (const auto& j : judgments)
                                out.write(judgment_to_json(j));
                        }
                        throw ProviderError(
                            "rerank provider failed for query " + query.query_id + ": " + e.what() +
                            (options.checkpoint_path ? " (progress checkpointed to " +
                                                           options.checkpoint_path->string() + ")"
                                                     : ""));
                    }
                }
            }
        }

        const double lo = *std::min_element(raw.begin(), raw.end());
        const double hi = *std::max_element(raw.begin(), raw.end());
        std::vector<double> normalized(pool.size());
        if (pool.size() == 1 || hi == lo) {
            std::fill(normalized.begin(), normalized.end(), 1.0);
        } else {
            for (std::size_t i = 0; i < pool.size(); ++i)
                normalized[i] = (raw[i] - lo) / (hi - lo);
        }
        const double high_cut = percentile(normalized, options.highly_relevant_percentile);

        for (std::size_t i = 0; i < pool.size(); ++i) {
            RelevanceJudgment j;
            j.query_id = query.query_id;
            j.chunk_id = pool[i];
            j.raw_score = raw[i];
            j.normalized_score = normalized[i];
            j.relevant = normalized[i] >= options.relevance_threshold;
            j.highly_relevant = normalized[i] > high_cut;
            judgments.push_back(std::move(j));
        }
    }
    return judgments;
}

namespace detail {

// results for one configuration, one entry per query
inline void require_queries(std::span<const RetrievalResult> results) {
    if (results.empty())
        throw Error("metric over an empty query set");
}

template <typename Fn>
double mean_over_queries(std::span<const RetrievalResult> results, Fn&& per_query) {
    require_queries(results);
    double sum = 0.0;
    for (const auto& r : results)
        sum += per_query(r);
    return sum / static_cast<double>(results.size());
}

}  // namespace detail

// Fraction of queries with at least one highly relevant chunk in the top k.
inline double hit_rate_at_k(const JudgmentSet& judgments,
                            std::span<const RetrievalResult> results, std::size_t k) {
    return detail::mean_over_queries(results, [&](const RetrievalResult& r) {
        const std::size_t n = std::min(k, r.hits.size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto* j = judgments.find(r.query_id, r.hits[i].chunk_id);
            if (j != nullptr && j->highly_relevant)
                return 1.0;
        }
        return 0.0;
    });
}

// Mean fraction of relevant chunks among the top k; the denominator stays k
// even when fewer results came back.
inline double precision_at_k(const JudgmentSet& judgments,
                             std::span<const RetrievalResult> results, std::size_t k) {
    return detail::mean_over_queries(results, [&](const RetrievalResult& r) {
        const std::size_t n = std::min(k, r.hits.size());
        std::size_t relevant = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto* j = judgments.find(r.query_id, r.hits[i].chunk_id);
            if (j != nullptr && j->relevant)
                ++relevant;
        }
        return static_cast<double>(relevant) / static_cast<double>(k);
    });
}

// Mean reciprocal rank of the first relevant chunk within the top k.
inline double mrr_at_k(const JudgmentSet& judgments, std::span<const RetrievalResult> results,
                       std::size_t k) {
    return detail::mean_over_queries(results, [&](const RetrievalResult& r) {
        const std::size_t n = std::min(k, r.hits.size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto* j = judgments.find(r.query_id, r.hits[i].chunk_id);
            if (j != nullptr && j->relevant)
                return 1.0 / static_cast<double>(i + 1);
        }
        return 0.0;
    });
}

// Graded NDCG: gains are normalized reranker scores (or 0/1 under the binary
// flag), the ideal ranking is the query's pooled judgments sorted descending,
// and a zero ideal DCG defines NDCG as 0.
inline double ndcg_at_k(const JudgmentSet& judgments, std::span<const RetrievalResult> results,
                        std::size_t k, bool binary_gains = false) {
    return detail::mean_over_queries(results, [&](const RetrievalResult& r) {
        auto gain_of = [&](const RelevanceJudgment& j) {
            return binary_gains ? (j.relevant ? 1.0 : 0.0) : j.normalized_score;
        };
        double dcg = 0.0;
        const std::size_t n = std::min(k, r.hits.size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto* j = judgments.find(r.query_id, r.hits[i].chunk_id);
            if (j != nullptr)
                dcg += gain_of(*j) / std::log2(static_cast<double>(i) + 2.0);
        }
        const auto* pool = judgments.pool(r.query_id);
        if (pool == nullptr)
            return 0.0;
        std::vector<double> gains;
        gains.reserve(pool->size());
        for (const auto& [cid, j] : *pool)
            gains.push_back(gain_of(j));
        std::sort(gains.begin(), gains.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, gains.size()); ++i)
            idcg += gains[i] / std::log2(static_cast<double>(i) + 2.0);
        return idcg == 0.0 ? 0.0 : dcg / idcg;
    });
}

// Modal primary_category fraction among the top-k hits actually returned.
inline double metadata_consistency_at_k(
    const std::function<std::string(const std::string&)>& category_of,
    std::span<const RetrievalResult> results, std::size_t k) {
    return detail::mean_over_queries(results, [&](const RetrievalResult& r) {
        const std::size_t n = std::min(k, r.hits.size());
        if (n == 0)
            return 0.0;
        std::map<std::string, std::size_t> counts;
        for (std::size_t i = 0; i < n; ++i)
            ++counts[category_of(r.hits[i].chunk_id)];
        std::size_t modal = 0;
        for (const auto& [category, count] : counts)
            modal = std::max(modal, count);
        return static_cast<double>(modal) / static_cast<double>(n);
    });
}

struct ConfigMetrics {
    double hit_rate = 0.0;
    double precision = 0.0;
    double mrr = 0.0;
    double ndcg = 0.0;
    double metadata_consistency = 0.0;
};

struct LatencySummary {
    double mean_micros = 0.0;
    double p50_micros = 0.0;
    double p95_micros = 0.0;
    double max_micros = 0.0;
};

struct MetricReport {
    std::vector<std::size_t> k_values;
    std::size_t query_count = 0;
    // canonical cell order: (semantic, naive, recursive) × (content,
    // tfidf_weighted, prefix_fusion)
    std::map<std::pair<ChunkingStrategy, EmbeddingStrategy>, std::map<std::size_t, ConfigMetrics>>
        cells;
    std::map<std::pair<ChunkingStrategy, EmbeddingStrategy>, LatencySummary> search_latency;
    std::map<std::pair<ChunkingStrategy, EmbeddingStrategy>, LatencySummary> embedding_latency;
};

namespace detail {

inline LatencySummary summarize_latency(std::vector<double> micros) {
    LatencySummary s;
    if (micros.empty())
        return s;
    double sum = 0.0;
    for (double m : micros)
        sum += m;
    s.mean_micros = sum / static_cast<double>(micros.size());
    s.max_micros = *std::max_element(micros.begin(), micros.end());
    s.p50_micros = percentile(micros, 50.0);
    s.p95_micros = percentile(micros, 95.0);
    return s;
}

}  // namespace detail

// Full 9-cell × 5-metric table at every requested k, plus latency summaries.
// Errors out when any of the nine cells is missing from the results.
inline MetricReport evaluate_all(std::span<const RetrievalResult> results,
                                 const JudgmentSet& judgments,
                                 const std::function<std::string(const std::string&)>& category_of,
                                 std::vector<std::size_t> k_values, bool ndcg_binary = false) {
    if (k_values.empty())
        throw Error("no k values requested");
    std::sort(k_values.begin(), k_values.end());

    std::map<std::pair<ChunkingStrategy, EmbeddingStrategy>, std::vector<RetrievalResult>>
        grouped;
    std::set<std::string> query_ids;
    for (const auto& r : results) {
        grouped[{r.chunking, r.embedding}].push_back(r);
        query_ids.insert(r.query_id);
    }
    std::string missing;
    for (auto c : kChunkingStrategies)
        for (auto e : kEmbeddingStrategies)
            if (!grouped.contains({c, e})) {
                if (!missing.empty())
                    missing += ", ";
                missing += std::string(to_string(c)) + ":" + std::string(to_string(e));
            }
    if (!missing.empty())
        throw Error("results are missing configurations: " + missing);

    MetricReport report;
    report.k_values = k_values;
    report.query_count = query_ids.size();
    for (auto& [cell, cell_results] : grouped) {
        for (std::size_t k : k_values) {
            ConfigMetrics m;
            m.hit_rate = hit_rate_at_k(judgments, cell_results, k);
            m.precision = precision_at_k(judgments, cell_results, k);
            m.mrr = mrr_at_k(judgments, cell_results, k);
            m.ndcg = ndcg_at_k(judgments, cell_results, k, ndcg_binary);
            m.metadata_consistency = metadata_consistency_at_k(category_of, cell_results, k);
            report.cells[cell][k] = m;
        }
        std::vector<double> search_micros, embed_micros;
        for (const auto& r : cell_results) {
            search_micros.push_back(static_cast<double>(r.latency_micros));
            embed_micros.push_back(static_cast<double>(r.embedding_micros));
        }
        report.search_latency[cell] = detail::summarize_latency(std::move(search_micros));
        report.embedding_latency[cell] = detail::summarize_latency(std::move(embed_micros));
    }
    return report;
}

inline json latency_to_json(const LatencySummary& s) {
    return json{{"mean_micros", s.mean_micros},
                {"p50_micros", s.p50_micros},
                {"p95_micros", s.p95_micros},
                {"max_micros", s.max_micros}};
}

inline json report_to_json(const MetricReport& report) {
    json cells = json::array();
    for (auto c : kChunkingStrategies) {
        for (auto e : kEmbeddingStrategies) {
            const auto it = report.cells.find({c, e});
            if (it == report.cells.end())
                continue;
            json at_k = json::object();
            for (const auto& [k, m] : it->second) {
                at_k[std::to_string(k)] = json{{"hit_rate", m.hit_rate},
                                               {"precision", m.precision},
                                               {"mrr", m.mrr},
                                               {"ndcg", m.ndcg},
                                               {"metadata_consistency", m.metadata_consistency}};
            }
            json cell{{"chunking", std::string(to_string(c))},
                      {"embedding", std::string(to_string(e))},
                      {"metrics", at_k}};
            if (auto lat = report.search_latency.find({c, e}); lat != report.search_latency.end())
                cell["search_latency"] = latency_to_json(lat->second);
            if (auto lat = report.embedding_latency.find({c, e});
                lat != report.embedding_latency.end())
                cell["embedding_latency"] = latency_to_json(lat->second);
            cells.push_back(std::move(cell));
        }
    }
    return json{{"k_values", report.k_values},
                {"query_count", report.query_count},
                {"cells", cells}};
}

inline MetricReport report_from_json(const json& j) {
    MetricReport report;
    report.k_values = j.at("k_values").get<std::vector<std::size_t>>();
    report.query_count = j.at("query_count").get<std::size_t>();
    for (const auto& cell : j.at("cells")) {
        const auto key = std::make_pair(
            chunking_strategy_from(cell.at("chunking").get<std::string>()),
            embedding_strategy_from(cell.at("embedding").get<std::string>()));
        for (const auto& [k_str, m] : cell.at("metrics").items()) {
            ConfigMetrics metrics;
            metrics.hit_rate = m.at("hit_rate").get<double>();
            metrics.precision = m.at("precision").get<double>();
            metrics.mrr = m.at("mrr").get<double>();
            metrics.ndcg = m.at("ndcg").get<double>();
            metrics.metadata_consistency = m.at("metadata_consistency").get<double>();
            report.cells[key][std::stoul(k_str)] = metrics;
        }
        auto read_latency = [&](const char* field, auto& target) {
            if (!cell.contains(field))
                return;
            const auto& l = cell.at(field);
            LatencySummary s;
            s.mean_micros = l.value("mean_micros", 0.0);
            s.p50_micros = l.value("p50_micros", 0.0);
            s.p95_micros = l.value("p95_micros", 0.0);
            s.max_micros = l.value("max_micros", 0.0);
            target[key] = s;
        };
        read_latency("search_latency", report.search_latency);
        read_latency("embedding_latency", report.embedding_latency);
    }
    return report;
}

// One 3x3 table per metric: retriever rows (Content, Prefix-Fusion, TF-IDF)
// against chunking columns (Semantic, Naive, Recursive).
inline std::string render_report_tables(const MetricReport& report, std::size_t k) {
    struct Row {
        std::string_view label;
        EmbeddingStrategy strategy;
    };
    static constexpr std::array<Row, 3> rows = {
        Row{"Content", EmbeddingStrategy::content},
        Row{"Prefix-Fusion", EmbeddingStrategy::prefix_fusion},
        Row{"TF-IDF", EmbeddingStrategy::tfidf_weighted}};
    struct Metric {
        std::string_view label;
        double ConfigMetrics::*field;
    };
    static constexpr std::array<Metric, 5> metrics = {
        Metric{"Hit Rate", &ConfigMetrics::hit_rate},
        Metric{"MRR", &ConfigMetrics::mrr},
        Metric{"NDCG", &ConfigMetrics::ndcg},
        Metric{"Precision", &ConfigMetrics::precision},
        Metric{"Metadata Consistency", &ConfigMetrics::metadata_consistency}};

    char buffer[64];
    std::string out;
    for (const auto& metric : metrics) {
        out += std::string(metric.label) + " (@" + std::to_string(k) + ")\n";
        out += "Retriever        Semantic   Naive      Recursive\n";
        for (const auto& row : rows) {
            std::snprintf(buffer, sizeof(buffer), "%-16s", std::string(row.label).c_str());
            out += buffer;
            for (auto chunking : kChunkingStrategies) {
                const auto cell = report.cells.find({chunking, row.strategy});
                if (cell == report.cells.end() || !cell->second.contains(k)) {
                    std::snprintf(buffer, sizeof(buffer), " %-10s", "-");
                } else {
                    std::snprintf(buffer, sizeof(buffer), " %-10.3f",
                                  cell->second.at(k).*metric.field);
                }
                out += buffer;
            }
            out += '\n';
        }
        out += '\n';
    }
    return out;
}

// Cross-encoder stand-in: cosine of the two bag-of-words mock embeddings,
// stretched to a raw score in [-10, 10].
inline double mock_rerank(std::string_view query_text, std::string_view chunk_text,
                          std::uint64_t seed) {
    constexpr std::size_t kDim = 384;
    const auto q = mock_embed(query_text, kDim, seed);
    const auto c = mock_embed(chunk_text, kDim, seed);
    return 10.0 * cosine(std::span<const float>(q), std::span<const float>(c));
}

class MockRerankProvider final : public RerankProvider {
public:
    explicit MockRerankProvider(std::uint64_t seed) : seed_(seed) {}

    double score(std::string_view query, std::string_view document) const override {
        return mock_rerank(query, document, seed_);
    }
    std::string model_name() const override { return "mock-rerank"; }

private:
    std::uint64_t seed_;
};

}  // namespace ragforge
