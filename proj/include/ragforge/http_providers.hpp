#pragma once

// HTTP-backed providers speaking the de-facto open completion/embedding/rerank
// schemas. Define CPPHTTPLIB_OPENSSL_SUPPORT before including this header to
// reach https endpoints.

#include <memory>
#include <string>

#include <httplib.h>

#include "ragforge/config.hpp"
#include "ragforge/jsonl.hpp"
#include "ragforge/pipeline.hpp"
#include "ragforge/providers.hpp"

namespace ragforge {

namespace detail {

struct ParsedUrl {
    std::string scheme_host_port;  // e.g. "http://localhost:8080"
    std::string path;              // e.g. "/v1/chat/completions"
};

inline ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error("endpoint is not a URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return ParsedUrl{url, "/"};
    return ParsedUrl{url.substr(0, path_start), url.substr(path_start)};
}

class HttpJsonClient {
public:
    HttpJsonClient(const std::string& endpoint, std::string api_key)
        : url_(parse_url(endpoint)), api_key_(std::move(api_key)) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (url_.scheme_host_port.rfind("https://", 0) == 0)
            throw Error("https endpoints need a TLS-enabled build: " + endpoint);
#endif
    }

    json post(const json& body) const {
        httplib::Client client(url_.scheme_host_port);
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!api_key_.empty())
            headers.emplace("Authorization", "Bearer " + api_key_);
        const auto res = client.Post(url_.path, headers, body.dump(), "application/json");
        if (!res)
            throw ProviderUnreachableError("cannot reach " + url_.scheme_host_port + ": " +
                                           httplib::to_string(res.error()));
        if (res->status != 200)
            throw ProviderError("HTTP " + std::to_string(res->status) + " from " + url_.path +
                                ": " + res->body.substr(0, 256));
        try {
            return json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProviderError(std::string("malformed JSON response: ") + e.what());
        }
    }

private:
    ParsedUrl url_;
    std::string api_key_;
};

}  // namespace detail

// {model, messages:[{role, content}], temperature, max_tokens}
//   -> {choices:[{message:{content}}]}
class HttpChatProvider final : public ChatProvider {
public:
    HttpChatProvider(const std::string& endpoint, std::string model, std::string api_key)
        : client_(endpoint, std::move(api_key)), model_(std::move(model)) {}

    std::string complete(const ChatRequest& request) const override {
        const json body{{"model", model_},
                        {"messages",
                         json::array({json{{"role", "system"}, {"content", request.system}},
                                      json{{"role", "user"}, {"content", request.user}}})},
                        {"temperature", request.temperature},
                        {"max_tokens", request.max_output_tokens}};
        const json response = client_.post(body);
        try {
            return response.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw ProviderError(std::string("unexpected chat response shape: ") + e.what());
        }
    }

    std::string model_name() const override { return model_; }

private:
    detail::HttpJsonClient client_;
    std::string model_;
};

// {model, input:[texts]} -> {data:[{embedding:[floats]}]}
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(const std::string& endpoint, std::string model, std::string api_key,
                          std::size_t dimension)
        : client_(endpoint, std::move(api_key)), model_(std::move(model)),
          dimension_(dimension) {}

    std::vector<float> embed(std::string_view text) const override {
        const std::string one(text);
        return embed_batch(std::span<const std::string>(&one, 1)).front();
    }

    std::vector<std::vector<float>> embed_batch(
        std::span<const std::string> texts) const override {
        const json body{{"model", model_}, {"input", texts}};
        const json response = client_.post(body);
        std::vector<std::vector<float>> out;
        try {
            for (const auto& row : response.at("data"))
                out.push_back(row.at("embedding").get<std::vector<float>>());
        } catch (const json::exception& e) {
            throw ProviderError(std::string("unexpected embedding response shape: ") + e.what());
        }
        if (out.size() != texts.size())
            throw ProviderError("embedding response count mismatch");
        for (const auto& v : out)
            if (v.size() != dimension_)
                throw ProviderError("embedding dimension " + std::to_string(v.size()) +
                                    " does not match configured " + std::to_string(dimension_));
        return out;
    }

    std::size_t dimension() const override { return dimension_; }
    std::string model_name() const override { return model_; }

private:
    detail::HttpJsonClient client_;
    std::string model_;
    std::size_t dimension_;
};

// {model, query, documents:[texts]} -> {results:[{index, relevance_score}]}
class HttpRerankProvider final : public RerankProvider {
public:
    HttpRerankProvider(const std::string& endpoint, std::string model, std::string api_key)
        : client_(endpoint, std::move(api_key)), model_(std::move(model)) {}

    double score(std::string_view query, std::string_view document) const override {
        const std::string one(document);
        return score_batch(query, std::span<const std::string>(&one, 1)).front();
    }

    std::vector<double> score_batch(std::string_view query,
                                    std::span<const std::string> documents) const override {
        const json body{{"model", model_}, {"query", std::string(query)},
                        {"documents", documents}};
        const json response = client_.post(body);
        std::vector<double> out(documents.size(), 0.0);
        std::size_t filled = 0;
        try {
            for (const auto& row : response.at("results")) {
                const std::size_t index = row.at("index").get<std::size_t>();
                if (index >= out.size())
                    throw ProviderError("rerank result index out of range");
                out[index] = row.at("relevance_score").get<double>();
                ++filled;
            }
        } catch (const json::exception& e) {
            throw ProviderError(std::string("unexpected rerank response shape: ") + e.what());
        }
        if (filled != documents.size())
            throw ProviderError("rerank response count mismatch");
        return out;
    }

    std::string model_name() const override { return model_; }

private:
    detail::HttpJsonClient client_;
    std::string model_;
};

// Builds the provider set from config: mocks need no network or credentials,
// http providers require an endpoint and (checked at stage start) an API key.
inline Providers make_providers(const PipelineConfig& cfg) {
    Providers mocks = make_mock_providers(cfg);
    Providers out;

    const auto require_endpoint = [](const ProviderConfig& p, const char* role) {
        if (p.endpoint.empty())
            throw Error(std::string("http ") + role + " provider needs an endpoint");
    };

    if (cfg.chat_provider.is_mock()) {
        out.chat = std::move(mocks.chat);
    } else {
        require_endpoint(cfg.chat_provider, "chat");
        out.chat = std::make_unique<HttpChatProvider>(
            cfg.chat_provider.endpoint, cfg.chat_provider.model, cfg.chat_provider.api_key);
    }
    if (cfg.embedding_provider.is_mock()) {
        out.embedding = std::move(mocks.embedding);
    } else {
        require_endpoint(cfg.embedding_provider, "embedding");
        out.embedding = std::make_unique<HttpEmbeddingProvider>(
            cfg.embedding_provider.endpoint, cfg.embedding_provider.model,
            cfg.embedding_provider.api_key, cfg.embedding_dimension);
    }
    if (cfg.rerank_provider.is_mock()) {
        out.rerank = std::move(mocks.rerank);
    } else {
        require_endpoint(cfg.rerank_provider, "rerank");
        out.rerank = std::make_unique<HttpRerankProvider>(
            cfg.rerank_provider.endpoint, cfg.rerank_provider.model,
            cfg.rerank_provider.api_key);
    }
    return out;
}

}  // namespace ragforge
