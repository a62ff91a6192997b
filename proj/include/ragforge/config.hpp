#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "ragforge/chunking.hpp"
#include "ragforge/embedding.hpp"
#include "ragforge/jsonl.hpp"

namespace ragforge {

struct ProviderConfig {
    std::string type = "mock";  // "mock" or "http"
    std::string endpoint;
    std::string model;
    std::string api_key;

    bool is_mock() const { return type == "mock"; }
};

// One configuration file drives the whole pipeline. Relative paths resolve
// against the directory of the config file; "${VAR}" in any string value is
// replaced from the environment, so secrets stay out of the file itself.
struct PipelineConfig {
    struct Source {
        std::string path;
        std::string tag;
    };

    std::string corpus_id = "corpus";
    std::vector<Source> sources;
    std::string workspace_dir = "workspace";
    std::string queries_path;

    ChunkingConfig naive_chunking{ChunkingStrategy::naive, 1024, 0, 64, 25.0};
    ChunkingConfig recursive_chunking{ChunkingStrategy::recursive, 512, 128, 64, 25.0};
    ChunkingConfig semantic_chunking{ChunkingStrategy::semantic, 1024, 0, 64, 25.0};

    std::size_t embedding_dimension = 1536;
    FusionWeights fusion_weights;           // 0.7 / 0.3
    std::size_t prefix_token_budget = 8192;
    std::size_t prompt_token_budget = 1536;

    ProviderConfig chat_provider;
    ProviderConfig embedding_provider;
    ProviderConfig rerank_provider;
    double temperature = 0.5;

    std::vector<std::size_t> k_values = {1, 5, 10};
    double relevance_threshold = 0.8;
    double highly_relevant_percentile = 95.0;
    std::size_t pool_size = 50;
    bool ndcg_binary_gains = false;

    std::uint64_t projection_seed = 42;
    std::uint64_t mock_seed = 1234;

    std::size_t parallelism = 4;
    std::size_t batch_size = 16;
    std::size_t max_retries = 2;

    void validate() const {
        naive_chunking.validate();
        recursive_chunking.validate();
        semantic_chunking.validate();
        fusion_weights.validate();
        if (embedding_dimension < 8)
            throw Error("embedding dimension must be >= 8");
        if (k_values.empty())
            throw Error("k_values must not be empty");
        for (auto k : k_values)
            if (k < 1)
                throw Error("k values must be >= 1");
        if (relevance_threshold < 0.0 || relevance_threshold > 1.0)
            throw Error("relevance_threshold must be in [0, 1]");
        if (highly_relevant_percentile <= 0.0 || highly_relevant_percentile >= 100.0)
            throw Error("highly_relevant_percentile must be in (0, 100)");
        if (pool_size < 1)
            throw Error("pool_size must be >= 1");
        if (batch_size < 1)
            throw Error("batch_size must be >= 1");
    }

    json to_json() const {
        json sources_json = json::array();
        for (const auto& s : sources)
            sources_json.push_back(json{{"path", s.path}, {"tag", s.tag}});
        auto chunking_json = [](const ChunkingConfig& c) {
            return json{{"max_tokens", c.max_tokens},
                        {"overlap_tokens", c.overlap_tokens},
                        {"min_tokens", c.min_tokens},
                        {"breakpoint_percentile", c.breakpoint_percentile}};
        };
        auto provider_json = [](const ProviderConfig& p) {
            return json{{"type", p.type},
                        {"endpoint", p.endpoint},
                        {"model", p.model},
                        {"api_key", p.api_key}};
        };
        return json{
            {"corpus_id", corpus_id},
            {"sources", sources_json},
            {"workspace_dir", workspace_dir},
            {"queries", queries_path},
            {"chunking",
             json{{"naive", chunking_json(naive_chunking)},
                  {"recursive", chunking_json(recursive_chunking)},
                  {"semantic", chunking_json(semantic_chunking)}}},
            {"embedding",
             json{{"dimension", embedding_dimension},
                  {"content_weight", fusion_weights.content_weight},
                  {"metadata_weight", fusion_weights.metadata_weight},
                  {"prefix_token_budget", prefix_token_budget},
                  {"prompt_token_budget", prompt_token_budget}}},
            {"providers",
             json{{"chat", provider_json(chat_provider)},
                  {"embedding", provider_json(embedding_provider)},
                  {"rerank", provider_json(rerank_provider)}}},
            {"temperature", temperature},
            {"k_values", k_values},
            {"relevance_threshold", relevance_threshold},
            {"highly_relevant_percentile", highly_relevant_percentile},
            {"pool_size", pool_size},
            {"ndcg_binary_gains", ndcg_binary_gains},
            {"seeds", json{{"projection", projection_seed}, {"mock", mock_seed}}},
            {"parallelism", parallelism},
            {"batch_size", batch_size},
            {"max_retries", max_retries}};
    }

    static PipelineConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
};

namespace detail {

inline std::string interpolate_env(const std::string& value) {
    std::string out;
    std::size_t i = 0;
    while (i < value.size()) {
        const auto open = value.find("${", i);
        if (open == std::string::npos) {
            out += value.substr(i);
            break;
        }
        const auto close = value.find('}', open + 2);
        if (close == std::string::npos) {
            out += value.substr(i);
            break;
        }
        out += value.substr(i, open - i);
        const std::string name = value.substr(open + 2, close - open - 2);
        if (const char* env = std::getenv(name.c_str()))
            out += env;
        i = close + 1;
    }
    return out;
}

inline json interpolate_env(const json& j) {
    if (j.is_string())
        return interpolate_env(j.get<std::string>());
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [key, value] : j.items())
            out[key] = interpolate_env(value);
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& value : j)
            out.push_back(interpolate_env(value));
        return out;
    }
    return j;
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base_dir) {
    if (p.empty() || base_dir.empty())
        return p;
    std::filesystem::path path(p);
    if (path.is_absolute())
        return p;
    return (base_dir / path).lexically_normal().string();
}

}  // namespace detail

inline PipelineConfig PipelineConfig::from_json(const json& raw,
                                                const std::filesystem::path& base_dir) {
    const json j = detail::interpolate_env(raw);
    PipelineConfig cfg;
    cfg.corpus_id = j.value("corpus_id", cfg.corpus_id);
    if (j.contains("sources"))
        for (const auto& s : j.at("sources"))
            cfg.sources.push_back(Source{
                detail::resolve_path(s.at("path").get<std::string>(), base_dir),
                s.at("tag").get<std::string>()});
    cfg.workspace_dir = detail::resolve_path(j.value("workspace_dir", cfg.workspace_dir), base_dir);
    cfg.queries_path = detail::resolve_path(j.value("queries", cfg.queries_path), base_dir);

    if (j.contains("chunking")) {
        const auto& c = j.at("chunking");
        auto read = [&](const char* key, ChunkingConfig& target) {
            if (!c.contains(key))
                return;
            const auto& block = c.at(key);
            target.max_tokens = block.value("max_tokens", target.max_tokens);
            target.overlap_tokens = block.value("overlap_tokens", target.overlap_tokens);
            target.min_tokens = block.value("min_tokens", target.min_tokens);
            target.breakpoint_percentile =
                block.value("breakpoint_percentile", target.breakpoint_percentile);
        };
        read("naive", cfg.naive_chunking);
        read("recursive", cfg.recursive_chunking);
        read("semantic", cfg.semantic_chunking);
    }

    if (j.contains("embedding")) {
        const auto& e = j.at("embedding");
        cfg.embedding_dimension = e.value("dimension", cfg.embedding_dimension);
        cfg.fusion_weights.content_weight =
            e.value("content_weight", cfg.fusion_weights.content_weight);
        cfg.fusion_weights.metadata_weight =
            e.value("metadata_weight", cfg.fusion_weights.metadata_weight);
        cfg.prefix_token_budget = e.value("prefix_token_budget", cfg.prefix_token_budget);
        cfg.prompt_token_budget = e.value("prompt_token_budget", cfg.prompt_token_budget);
    }

    if (j.contains("providers")) {
        const auto& p = j.at("providers");
        auto read = [&](const char* key, ProviderConfig& target) {
            if (!p.contains(key))
                return;
            const auto& block = p.at(key);
            target.type = block.value("type", target.type);
            target.endpoint = block.value("endpoint", target.endpoint);
            target.model = block.value("model", target.model);
            target.api_key = block.value("api_key", target.api_key);
            if (target.api_key.empty())
                if (const char* env = std::getenv("RAGFORGE_API_KEY"))
                    target.api_key = env;
        };
        read("chat", cfg.chat_provider);
        read("embedding", cfg.embedding_provider);
        read("rerank", cfg.rerank_provider);
    }

    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.k_values = j.value("k_values", cfg.k_values);
    cfg.relevance_threshold = j.value("relevance_threshold", cfg.relevance_threshold);
    cfg.highly_relevant_percentile =
        j.value("highly_relevant_percentile", cfg.highly_relevant_percentile);
    cfg.pool_size = j.value("pool_size", cfg.pool_size);
    cfg.ndcg_binary_gains = j.value("ndcg_binary_gains", cfg.ndcg_binary_gains);
    if (j.contains("seeds")) {
        cfg.projection_seed = j.at("seeds").value("projection", cfg.projection_seed);
        cfg.mock_seed = j.at("seeds").value("mock", cfg.mock_seed);
    }
    cfg.parallelism = j.value("parallelism", cfg.parallelism);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.max_retries = j.value("max_retries", cfg.max_retries);

    cfg.validate();
    return cfg;
}

inline PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(path.string() + ": malformed config: " + e.what());
    }
    return from_json(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path());
}

}  // namespace ragforge
