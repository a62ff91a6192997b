#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragforge/config.hpp"
#include "ragforge/corpus.hpp"
#include "ragforge/evaluation.hpp"
#include "ragforge/index.hpp"
#include "ragforge/retrieval.hpp"

namespace ragforge {

enum class Stage { ingest, chunk, enrich, embed, index, retrieve, groundtruth, evaluate, all };

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::chunk: return "chunk";
        case Stage::enrich: return "enrich";
        case Stage::embed: return "embed";
        case Stage::index: return "index";
        case Stage::retrieve: return "retrieve";
        case Stage::groundtruth: return "groundtruth";
        case Stage::evaluate: return "evaluate";
        case Stage::all: return "all";
    }
    return "all";
}

inline Stage stage_from(std::string_view name) {
    for (Stage s : {Stage::ingest, Stage::chunk, Stage::enrich, Stage::embed, Stage::index,
                    Stage::retrieve, Stage::groundtruth, Stage::evaluate, Stage::all})
        if (name == to_string(s))
            return s;
    throw Error("unknown stage: " + std::string(name));
}

enum class StageStatus { ran, up_to_date };

struct Providers {
    std::unique_ptr<ChatProvider> chat;
    std::unique_ptr<EmbeddingProvider> embedding;
    std::unique_ptr<RerankProvider> rerank;
};

// The rerank mock runs on a seed derived from the embedding mock's, so the
// ground truth is not literally the content retriever's own score function.
inline Providers make_mock_providers(const PipelineConfig& cfg) {
    Providers p;
    p.chat = std::make_unique<MockChatProvider>(PromptOptions{cfg.prompt_token_budget});
    p.embedding = std::make_unique<MockEmbeddingProvider>(cfg.embedding_dimension, cfg.mock_seed);
    p.rerank = std::make_unique<MockRerankProvider>(splitmix64(cfg.mock_seed) + 1);
    return p;
}

// Strips volatile fields (timestamps, latency figures) so two runs of the
// same inputs can be compared byte for byte.
inline json canonical_report(const json& j) {
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [key, value] : j.items()) {
            if (key == "generated_at" || key.find("latency") != std::string::npos ||
                key.find("micros") != std::string::npos)
                continue;
            out[key] = canonical_report(value);
        }
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& value : j)
            out.push_back(canonical_report(value));
        return out;
    }
    return j;
}

// Shape check for report.json; returns the list of missing 3x3 cells.
inline std::vector<std::string> report_missing_cells(const json& report) {
    std::vector<std::string> missing;
    std::set<std::string> present;
    if (report.contains("cells") && report.at("cells").is_array())
        for (const auto& cell : report.at("cells"))
            present.insert(cell.value("chunking", "") + ":" + cell.value("embedding", ""));
    for (auto c : kChunkingStrategies)
        for (auto e : kEmbeddingStrategies) {
            const std::string name =
                std::string(to_string(c)) + ":" + std::string(to_string(e));
            if (!present.contains(name))
                missing.push_back(name);
        }
    return missing;
}

inline void validate_report_json(const json& report) {
    for (const char* key : {"k_values", "query_count", "cells"})
        if (!report.contains(key))
            throw Error(std::string("report is missing required field \"") + key + "\"");
    const auto missing = report_missing_cells(report);
    if (!missing.empty()) {
        std::string joined;
        for (const auto& m : missing)
            joined += (joined.empty() ? "" : ", ") + m;
        throw Error("report is missing configuration cells: " + joined);
    }
    for (const auto& cell : report.at("cells"))
        for (const char* key : {"chunking", "embedding", "metrics"})
            if (!cell.contains(key))
                throw Error(std::string("report cell is missing field \"") + key + "\"");
}

// Staged, resumable pipeline over one workspace directory. Every stage writes
// its artifacts plus a content-hash stamp; rerunning with unchanged inputs is
// a logged no-op.
class Pipeline {
public:
    Pipeline(PipelineConfig config, Providers providers, std::ostream* log = &std::cout)
        : cfg_(std::move(config)), providers_(std::move(providers)), log_(log) {
        cfg_.validate();
        ws_ = cfg_.workspace_dir;
    }

    const PipelineConfig& config() const { return cfg_; }
    const std::filesystem::path& workspace() const { return ws_; }

    std::filesystem::path corpus_path() const { return ws_ / "corpus.jsonl"; }
    std::filesystem::path chunks_path(ChunkingStrategy s) const {
        return ws_ / ("chunks-" + std::string(to_string(s)) + ".jsonl");
    }
    std::filesystem::path chunk_stats_path() const { return ws_ / "chunk_stats.json"; }
    std::filesystem::path enriched_path(ChunkingStrategy s) const {
        return ws_ / ("enriched-" + std::string(to_string(s)) + ".jsonl");
    }
    std::filesystem::path failures_path(ChunkingStrategy s) const {
        return ws_ / ("failures-" + std::string(to_string(s)) + ".json");
    }
    std::filesystem::path tfidf_path(ChunkingStrategy s) const {
        return ws_ / ("tfidf-" + std::string(to_string(s)) + ".json");
    }
    std::filesystem::path index_path(ChunkingStrategy c, EmbeddingStrategy e) const {
        return ws_ / ("index-" + std::string(to_string(c)) + "-" + std::string(to_string(e)) +
                      ".rfi");
    }
    std::filesystem::path nn_stats_path() const { return ws_ / "nn_stats.json"; }
    std::filesystem::path results_path() const { return ws_ / "results.jsonl"; }
    std::filesystem::path judgments_path() const { return ws_ / "judgments.jsonl"; }
    std::filesystem::path report_json_path() const { return ws_ / "report.json"; }
    std::filesystem::path report_text_path() const { return ws_ / "report.txt"; }

    StageStatus run(Stage stage) {
        std::filesystem::create_directories(ws_);
        write_file(ws_ / "config.snapshot.json", cfg_.to_json().dump(2) + "\n");
        switch (stage) {
            case Stage::ingest: return run_ingest();
            case Stage::chunk: return run_chunk();
            case Stage::enrich: return run_enrich();
            case Stage::embed: return run_embed();
            case Stage::index: return run_index();
            case Stage::retrieve: return run_retrieve();
            case Stage::groundtruth: return run_groundtruth();
            case Stage::evaluate: return run_evaluate();
            case Stage::all: {
                StageStatus status = StageStatus::up_to_date;
                for (Stage s : {Stage::ingest, Stage::chunk, Stage::enrich, Stage::embed,
                                Stage::index, Stage::retrieve, Stage::groundtruth,
                                Stage::evaluate})
                    if (run(s) == StageStatus::ran)
                        status = StageStatus::ran;
                return status;
            }
        }
        throw Error("unknown stage");
    }

private:
    void log(const std::string& line) const {
        if (log_ != nullptr)
            *log_ << line << '\n';
    }

    static std::string hex64(std::uint64_t h) {
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    std::uint64_t file_hash(const std::filesystem::path& path) const {
        return fnv1a64(read_file(path));
    }

    std::string input_stamp(const json& stage_config,
                            const std::vector<std::filesystem::path>& inputs) const {
        std::uint64_t h = fnv1a64(stage_config.dump());
        for (const auto& path : inputs) {
            h = fnv1a64(path.filename().string(), h);
            h = fnv1a64(read_file(path), h);
        }
        return hex64(h);
    }

    std::filesystem::path stamp_path(std::string_view stage) const {
        return ws_ / "stamps" / (std::string(stage) + ".json");
    }

    bool up_to_date(std::string_view stage, const std::string& stamp,
                    const std::vector<std::filesystem::path>& outputs) const {
        const auto path = stamp_path(stage);
        if (!std::filesystem::exists(path))
            return false;
        for (const auto& out : outputs)
            if (!std::filesystem::exists(out))
                return false;
        try {
            const json j = json::parse(read_file(path));
            return j.value("input_stamp", "") == stamp;
        } catch (...) {
            return false;
        }
    }

    void write_stamp(std::string_view stage, const std::string& stamp) const {
        write_file(stamp_path(stage), json{{"input_stamp", stamp}}.dump() + "\n");
    }

    void require(const std::filesystem::path& artifact, std::string_view produced_by) const {
        if (!std::filesystem::exists(artifact))
            throw Error(std::string(produced_by) + " artifacts missing (" +
                        artifact.filename().string() + " not found); run 'ragforge run " +
                        std::string(produced_by) + "' first");
    }

    void require_credentials(const ProviderConfig& provider, std::string_view role) const {
        if (!provider.is_mock() && provider.api_key.empty())
            throw Error("no API key configured for the " + std::string(role) +
                        " provider; set RAGFORGE_API_KEY or providers." + std::string(role) +
                        ".api_key");
    }

    json chunking_config_json() const {
        auto one = [](const ChunkingConfig& c) {
            return json{{"max_tokens", c.max_tokens},
                        {"overlap_tokens", c.overlap_tokens},
                        {"min_tokens", c.min_tokens},
                        {"breakpoint_percentile", c.breakpoint_percentile}};
        };
        return json{{"naive", one(cfg_.naive_chunking)},
                    {"recursive", one(cfg_.recursive_chunking)},
                    {"semantic", one(cfg_.semantic_chunking)},
                    {"dimension", cfg_.embedding_dimension},
                    {"mock_seed", cfg_.mock_seed},
                    {"embedding_provider", cfg_.embedding_provider.type},
                    {"embedding_model", cfg_.embedding_provider.model}};
    }

    const ChunkingConfig& chunking_for(ChunkingStrategy s) const {
        switch (s) {
            case ChunkingStrategy::naive: return cfg_.naive_chunking;
            case ChunkingStrategy::recursive: return cfg_.recursive_chunking;
            case ChunkingStrategy::semantic: return cfg_.semantic_chunking;
        }
        return cfg_.naive_chunking;
    }

    StageStatus run_ingest() {
        if (cfg_.sources.empty())
            throw Error("config has no corpus sources");
        std::vector<std::filesystem::path> inputs;
        for (const auto& source : cfg_.sources) {
            if (!std::filesystem::is_directory(source.path))
                throw Error("source directory not found: " + source.path);
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::recursive_directory_iterator(source.path))
                if (entry.is_regular_file())
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            inputs.insert(inputs.end(), files.begin(), files.end());
        }
        json stage_cfg{{"corpus_id", cfg_.corpus_id}, {"sources", json::array()}};
        for (const auto& s : cfg_.sources)
            stage_cfg["sources"].push_back(json{{"path", s.path}, {"tag", s.tag}});
        const std::string stamp = input_stamp(stage_cfg, inputs);
        if (up_to_date("ingest", stamp, {corpus_path()})) {
            log("[ingest] up to date");
            return StageStatus::up_to_date;
        }

        Corpus corpus(cfg_.corpus_id);
        for (const auto& source : cfg_.sources) {
            const Corpus part = ingest_directory(source.path, source.tag, cfg_.corpus_id);
            for (const auto& doc : part.documents())
                corpus.add(doc);
        }
        save_corpus(corpus, corpus_path());
        write_stamp("ingest", stamp);
        log("[ingest] " + std::to_string(corpus.size()) + " documents -> " +
            corpus_path().filename().string());
        return StageStatus::ran;
    }

    StageStatus run_chunk() {
        require(corpus_path(), "ingest");
        const std::string stamp = input_stamp(chunking_config_json(), {corpus_path()});
        std::vector<std::filesystem::path> outputs{chunk_stats_path()};
        for (auto s : kChunkingStrategies)
            outputs.push_back(chunks_path(s));
        if (up_to_date("chunk", stamp, outputs)) {
            log("[chunk] up to date");
            return StageStatus::up_to_date;
        }

        const Corpus corpus = load_corpus(corpus_path());
        json stats = json::object();
        for (auto strategy : kChunkingStrategies) {
            const ChunkSet set =
                chunk_corpus(corpus, chunking_for(strategy), default_tokenizer(),
                             providers_.embedding.get());
            JsonlWriter out(chunks_path(strategy));
            for (const auto& chunk : set.chunks)
                out.write(chunk_to_json(chunk));
            stats[std::string(to_string(strategy))] =
                json{{"chunk_count", set.stats.chunk_count},
                     {"document_count", set.stats.document_count},
                     {"total_tokens", set.stats.total_tokens},
                     {"mean_token_count", set.stats.mean_token_count},
                     {"max_token_count", set.stats.max_token_count}};
            log("[chunk] " + std::string(to_string(strategy)) + ": " +
                std::to_string(set.stats.chunk_count) + " chunks");
        }
        write_file(chunk_stats_path(), stats.dump(2) + "\n");
        write_stamp("chunk", stamp);
        return StageStatus::ran;
    }

    StageStatus run_enrich() {
        for (auto s : kChunkingStrategies)
            require(chunks_path(s), "chunk");
        require_credentials(cfg_.chat_provider, "chat");
        const json stage_cfg{{"provider", cfg_.chat_provider.type},
                             {"model", cfg_.chat_provider.model},
                             {"endpoint", cfg_.chat_provider.endpoint},
                             {"temperature", cfg_.temperature},
                             {"prompt_token_budget", cfg_.prompt_token_budget},
                             {"batch_size", cfg_.batch_size},
                             {"max_retries", cfg_.max_retries}};
        std::vector<std::filesystem::path> inputs, outputs;
        for (auto s : kChunkingStrategies) {
            inputs.push_back(chunks_path(s));
            outputs.push_back(enriched_path(s));
            outputs.push_back(failures_path(s));
        }
        const std::string stamp = input_stamp(stage_cfg, inputs);
        if (up_to_date("enrich", stamp, outputs)) {
            log("[enrich] up to date");
            return StageStatus::up_to_date;
        }

        for (auto strategy : kChunkingStrategies) {
            std::vector<ChunkRecord> chunks;
            for_each_jsonl(chunks_path(strategy), [&](std::size_t, const json& record) {
                chunks.push_back(chunk_from_json(record));
            });
            EnrichOptions options;
            options.batch_size = cfg_.batch_size;
            options.max_retries = cfg_.max_retries;
            options.parallelism = cfg_.parallelism;
            options.prompt.max_text_tokens = cfg_.prompt_token_budget;
            options.temperature = cfg_.temperature;
            options.checkpoint_path =
                ws_ / ("enrich-" + std::string(to_string(strategy)) + ".checkpoint.jsonl");
            const EnrichResult result = enrich_chunks(chunks, *providers_.chat, options);
            JsonlWriter out(enriched_path(strategy));
            for (const auto& e : result.enriched)
                out.write(enriched_to_json(e));
            json failures{{"total_chunks", result.report.total_chunks},
                          {"failure_count", result.report.failure_count},
                          {"total_retries", result.report.total_retries},
                          {"failures", json::array()}};
            for (const auto& f : result.report.failures)
                failures["failures"].push_back(json{
                    {"chunk_id", f.chunk_id}, {"attempts", f.attempts}, {"error", f.error}});
            write_file(failures_path(strategy), failures.dump(2) + "\n");
            log("[enrich] " + std::string(to_string(strategy)) + ": " +
                std::to_string(result.enriched.size()) + " chunks, " +
                std::to_string(result.report.failure_count) + " fallbacks");
        }
        write_stamp("enrich", stamp);
        return StageStatus::ran;
    }

    StageStatus run_embed() {
        for (auto s : kChunkingStrategies)
            require(enriched_path(s), "enrich");
        require_credentials(cfg_.embedding_provider, "embedding");
        const json stage_cfg{{"provider", cfg_.embedding_provider.type},
                             {"model", cfg_.embedding_provider.model},
                             {"endpoint", cfg_.embedding_provider.endpoint},
                             {"dimension", cfg_.embedding_dimension},
                             {"content_weight", cfg_.fusion_weights.content_weight},
                             {"metadata_weight", cfg_.fusion_weights.metadata_weight},
                             {"prefix_token_budget", cfg_.prefix_token_budget},
                             {"projection_seed", cfg_.projection_seed},
                             {"mock_seed", cfg_.mock_seed}};
        std::vector<std::filesystem::path> inputs, outputs;
        for (auto c : kChunkingStrategies) {
            inputs.push_back(enriched_path(c));
            outputs.push_back(tfidf_path(c));
            for (auto e : kEmbeddingStrategies)
                outputs.push_back(index_path(c, e));
        }
        const std::string stamp = input_stamp(stage_cfg, inputs);
        if (up_to_date("embed", stamp, outputs)) {
            log("[embed] up to date");
            return StageStatus::up_to_date;
        }

        for (auto chunking : kChunkingStrategies) {
            std::vector<EnrichedChunk> enriched;
            for_each_jsonl(enriched_path(chunking), [&](std::size_t, const json& record) {
                enriched.push_back(enriched_from_json(record));
            });
            if (enriched.empty())
                throw Error("no enriched chunks for " + std::string(to_string(chunking)));
            const TfidfModel model =
                fit_tfidf(enriched, cfg_.embedding_dimension, cfg_.projection_seed);
            save_tfidf_model(model, tfidf_path(chunking));

            for (auto embedding : kEmbeddingStrategies) {
                std::vector<EmbeddingVector> vectors;
                vectors.reserve(enriched.size());
                for (const auto& e : enriched) {
                    switch (embedding) {
                        case EmbeddingStrategy::content:
                            vectors.push_back(embed_content(e.chunk.text, *providers_.embedding,
                                                            e.chunk.chunk_id));
                            break;
                        case EmbeddingStrategy::tfidf_weighted:
                            vectors.push_back(embed_tfidf_weighted(e, *providers_.embedding,
                                                                   model, cfg_.fusion_weights));
                            break;
                        case EmbeddingStrategy::prefix_fusion:
                            vectors.push_back(embed_prefix_fusion(
                                e, *providers_.embedding,
                                PrefixFusionOptions{cfg_.prefix_token_budget}));
                            break;
                    }
                }
                const VectorIndex index =
                    build_index(vectors, std::string(to_string(chunking)),
                                std::string(to_string(embedding)));
                index.save(index_path(chunking, embedding));
            }
            log("[embed] " + std::string(to_string(chunking)) + ": 3 indexes over " +
                std::to_string(enriched.size()) + " chunks");
        }
        write_stamp("embed", stamp);
        return StageStatus::ran;
    }

    StageStatus run_index() {
        std::vector<std::filesystem::path> inputs;
        for (auto c : kChunkingStrategies)
            for (auto e : kEmbeddingStrategies) {
                require(index_path(c, e), "embed");
                inputs.push_back(index_path(c, e));
            }
        const std::string stamp = input_stamp(json::object(), inputs);
        if (up_to_date("index", stamp, {nn_stats_path()})) {
            log("[index] up to date");
            return StageStatus::up_to_date;
        }

        json stats = json::object();
        for (auto c : kChunkingStrategies)
            for (auto e : kEmbeddingStrategies) {
                const VectorIndex index = VectorIndex::load(index_path(c, e));
                const std::string cell =
                    std::string(to_string(c)) + ":" + std::string(to_string(e));
                stats[cell] = index.size() >= 2 ? nn_stats_to_json(index.nn_stats())
                                                : json{{"note", "fewer than 2 vectors"}};
            }
        write_file(nn_stats_path(), stats.dump(2) + "\n");
        write_stamp("index", stamp);
        log("[index] nearest-neighbor stats for 9 cells");
        return StageStatus::ran;
    }

    std::size_t retrieval_depth() const {
        std::size_t k = cfg_.pool_size;
        for (auto v : cfg_.k_values)
            k = std::max(k, v);
        return k;
    }

    StageStatus run_retrieve() {
        for (auto c : kChunkingStrategies) {
            require(tfidf_path(c), "embed");
            for (auto e : kEmbeddingStrategies)
                require(index_path(c, e), "embed");
        }
        if (cfg_.queries_path.empty())
            throw Error("config has no queries file");
        if (!std::filesystem::exists(cfg_.queries_path))
            throw Error("queries file not found: " + cfg_.queries_path);
        require_credentials(cfg_.embedding_provider, "embedding");

        const json stage_cfg{{"k", retrieval_depth()},
                             {"content_weight", cfg_.fusion_weights.content_weight},
                             {"metadata_weight", cfg_.fusion_weights.metadata_weight},
                             {"provider", cfg_.embedding_provider.type},
                             {"model", cfg_.embedding_provider.model}};
        std::vector<std::filesystem::path> inputs{cfg_.queries_path};
        for (auto c : kChunkingStrategies) {
            inputs.push_back(tfidf_path(c));
            for (auto e : kEmbeddingStrategies)
                inputs.push_back(index_path(c, e));
        }
        const std::string stamp = input_stamp(stage_cfg, inputs);
        if (up_to_date("retrieve", stamp, {results_path()})) {
            log("[retrieve] up to date");
            return StageStatus::up_to_date;
        }

        std::vector<QueryRecord> queries;
        for_each_jsonl(cfg_.queries_path, [&](std::size_t, const json& record) {
            queries.push_back(query_from_json(record));
        });
        if (queries.empty())
            throw Error("queries file is empty: " + cfg_.queries_path);
        for (auto& q : queries)
            if (!q.detected_intent)
                q.detected_intent = detect_intent(q.text);

        std::map<ChunkingStrategy, TfidfModel> models;
        std::map<std::pair<ChunkingStrategy, EmbeddingStrategy>, VectorIndex> indexes;
        RetrieverMatrix matrix;
        for (auto c : kChunkingStrategies) {
            models.emplace(c, load_tfidf_model(tfidf_path(c)));
            for (auto e : kEmbeddingStrategies)
                indexes.emplace(std::make_pair(c, e), VectorIndex::load(index_path(c, e)));
        }
        for (auto& [c, model] : models)
            matrix.tfidf_models[c] = &model;
        for (auto& [cell, index] : indexes)
            matrix.indexes[cell] = &index;
        matrix.provider = providers_.embedding.get();
        matrix.weights = cfg_.fusion_weights;

        const auto results = run_matrix(queries, matrix, retrieval_depth());
        JsonlWriter out(results_path());
        for (const auto& r : results)
            out.write(retrieval_result_to_json(r));
        write_stamp("retrieve", stamp);
        log("[retrieve] " + std::to_string(results.size()) + " results (" +
            std::to_string(queries.size()) + " queries x 9 configs)");
        return StageStatus::ran;
    }

    StageStatus run_groundtruth() {
        require(results_path(), "retrieve");
        for (auto s : kChunkingStrategies)
            require(enriched_path(s), "enrich");
        require_credentials(cfg_.rerank_provider, "rerank");
        const json stage_cfg{{"pool_size", cfg_.pool_size},
                             {"relevance_threshold", cfg_.relevance_threshold},
                             {"highly_relevant_percentile", cfg_.highly_relevant_percentile},
                             {"provider", cfg_.rerank_provider.type},
                             {"model", cfg_.rerank_provider.model}};
        std::vector<std::filesystem::path> inputs{results_path(),
                                                  std::filesystem::path(cfg_.queries_path)};
        const std::string stamp = input_stamp(stage_cfg, inputs);
        if (up_to_date("groundtruth", stamp, {judgments_path()})) {
            log("[groundtruth] up to date");
            return StageStatus::up_to_date;
        }

        std::vector<QueryRecord> queries;
        for_each_jsonl(cfg_.queries_path, [&](std::size_t, const json& record) {
            queries.push_back(query_from_json(record));
        });
        std::vector<RetrievalResult> results;
        for_each_jsonl(results_path(), [&](std::size_t, const json& record) {
            results.push_back(retrieval_result_from_json(record));
        });
        std::unordered_map<std::string, std::string> text_of;
        for (auto s : kChunkingStrategies)
            for_each_jsonl(enriched_path(s), [&](std::size_t, const json& record) {
                text_of.emplace(record.at("chunk_id").get<std::string>(),
                                record.at("text").get<std::string>());
            });

        GroundTruthOptions options;
        options.pool_size = cfg_.pool_size;
        options.relevance_threshold = cfg_.relevance_threshold;
        options.highly_relevant_percentile = cfg_.highly_relevant_percentile;
        options.max_retries = cfg_.max_retries;
        options.checkpoint_path = ws_ / "groundtruth.checkpoint.jsonl";

        const auto judgments = build_ground_truth(
            queries, results,
            [&](const std::string& chunk_id) -> const std::string& {
                auto it = text_of.find(chunk_id);
                if (it == text_of.end())
                    throw Error("no chunk text for pooled id " + chunk_id);
                return it->second;
            },
            *providers_.rerank, options);

        JsonlWriter out(judgments_path());
        for (const auto& j : judgments)
            out.write(judgment_to_json(j));
        if (std::filesystem::exists(*options.checkpoint_path))
            std::filesystem::remove(*options.checkpoint_path);
        write_stamp("groundtruth", stamp);
        log("[groundtruth] " + std::to_string(judgments.size()) + " judgments over " +
            std::to_string(queries.size()) + " queries");
        return StageStatus::ran;
    }

    StageStatus run_evaluate() {
        require(judgments_path(), "groundtruth");
        require(results_path(), "retrieve");
        for (auto s : kChunkingStrategies)
            require(enriched_path(s), "enrich");
        const json stage_cfg{{"k_values", cfg_.k_values},
                             {"ndcg_binary_gains", cfg_.ndcg_binary_gains}};
        std::vector<std::filesystem::path> inputs{judgments_path(), results_path()};
        const std::string stamp = input_stamp(stage_cfg, inputs);
        if (up_to_date("evaluate", stamp, {report_json_path(), report_text_path()})) {
            log("[evaluate] up to date");
            return StageStatus::up_to_date;
        }

        JudgmentSet judgments;
        for_each_jsonl(judgments_path(), [&](std::size_t, const json& record) {
            judgments.add(judgment_from_json(record));
        });
        std::vector<RetrievalResult> results;
        for_each_jsonl(results_path(), [&](std::size_t, const json& record) {
            results.push_back(retrieval_result_from_json(record));
        });
        std::unordered_map<std::string, std::string> category_of;
        for (auto s : kChunkingStrategies)
            for_each_jsonl(enriched_path(s), [&](std::size_t, const json& record) {
                category_of.emplace(
                    record.at("chunk_id").get<std::string>(),
                    record.at("metadata").at("primary_category").get<std::string>());
            });

        const MetricReport report = evaluate_all(
            results, judgments,
            [&](const std::string& chunk_id) {
                auto it = category_of.find(chunk_id);
                return it == category_of.end() ? std::string() : it->second;
            },
            cfg_.k_values, cfg_.ndcg_binary_gains);

        json report_json = report_to_json(report);
        report_json["generated_at"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count();
        if (std::filesystem::exists(chunk_stats_path()))
            report_json["chunk_stats"] = json::parse(read_file(chunk_stats_path()));
        if (std::filesystem::exists(nn_stats_path()))
            report_json["nn_stats"] = json::parse(read_file(nn_stats_path()));
        validate_report_json(report_json);
        write_file(report_json_path(), report_json.dump(2) + "\n");

        write_file(report_text_path(), render_report_text(report_json));
        write_stamp("evaluate", stamp);
        log("[evaluate] report written to " + report_json_path().string());
        return StageStatus::ran;
    }

public:
    // k shown in the rendered tables: 10 when requested, else the largest k
    static std::size_t display_k(const std::vector<std::size_t>& k_values) {
        std::size_t best = 0;
        for (auto k : k_values) {
            if (k == 10)
                return 10;
            best = std::max(best, k);
        }
        return best;
    }

    static std::string render_report_text(const json& report_json) {
        const MetricReport report = report_from_json(report_json);
        std::string out = render_report_tables(report, display_k(report.k_values));
        if (report_json.contains("chunk_stats")) {
            out += "Chunks per strategy\n";
            for (const auto& [strategy, stats] : report_json.at("chunk_stats").items()) {
                char line[160];
                std::snprintf(line, sizeof(line),
                              "%-10s count %-6llu mean tokens %-8.1f max tokens %llu\n",
                              strategy.c_str(),
                              static_cast<unsigned long long>(
                                  stats.value("chunk_count", 0ULL)),
                              stats.value("mean_token_count", 0.0),
                              static_cast<unsigned long long>(
                                  stats.value("max_token_count", 0ULL)));
                out += line;
            }
            out += '\n';
        }
        if (report_json.contains("nn_stats")) {
            out += "Average nearest-neighbor distance (1 - cosine)\n";
            for (const auto& [cell, stats] : report_json.at("nn_stats").items()) {
                char line[160];
                std::snprintf(line, sizeof(line), "%-28s %.4f\n", cell.c_str(),
                              stats.value("avg_nn_distance", 0.0));
                out += line;
            }
            out += '\n';
        }
        return out;
    }

private:
    PipelineConfig cfg_;
    Providers providers_;
    std::ostream* log_;
    std::filesystem::path ws_;
};

}  // namespace ragforge
