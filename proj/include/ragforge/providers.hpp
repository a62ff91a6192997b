#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragforge/error.hpp"

namespace ragforge {

// A provider call failed but retrying may help (5xx, timeout, rate limit).
class ProviderError : public Error {
public:
    using Error::Error;
};

// The provider cannot be reached at all (connect failure, bad endpoint).
// Batch drivers persist a checkpoint and abort on this one.
class ProviderUnreachableError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = 0.5;
    int max_output_tokens = 1024;
};

// Chat-completion contract: request -> response text. Implementations must be
// safe to share across concurrent callers.
class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const ChatRequest& request) const = 0;
    virtual std::string model_name() const = 0;
};

// Text -> fixed-dimension float vector. Same text must produce the same
// vector; output dimension is constant for the provider's lifetime.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<float> embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string model_name() const = 0;

    virtual std::vector<std::vector<float>> embed_batch(std::span<const std::string> texts) const {
        std::vector<std::vector<float>> out;
        out.reserve(texts.size());
        for (const auto& t : texts)
            out.push_back(embed(t));
        return out;
    }
};

// Cross-encoder contract: (query, document) -> raw relevance score,
// deterministic per pair. Raw scores are unbounded; consumers normalize.
class RerankProvider {
public:
    virtual ~RerankProvider() = default;
    virtual double score(std::string_view query, std::string_view document) const = 0;
    virtual std::string model_name() const = 0;

    virtual std::vector<double> score_batch(std::string_view query,
                                            std::span<const std::string> documents) const {
        std::vector<double> out;
        out.reserve(documents.size());
        for (const auto& d : documents)
            out.push_back(score(query, d));
        return out;
    }
};

}  // namespace ragforge
