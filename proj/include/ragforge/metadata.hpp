#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ragforge/chunking.hpp"
#include "ragforge/providers.hpp"

namespace ragforge {

enum class ContentType { procedural, conceptual, reference, warning, example };
enum class Intent { how_to, debugging, comparison, reference };

inline std::string_view to_string(ContentType t) {
    switch (t) {
        case ContentType::procedural: return "procedural";
        case ContentType::conceptual: return "conceptual";
        case ContentType::reference: return "reference";
        case ContentType::warning: return "warning";
        case ContentType::example: return "example";
    }
    return "conceptual";
}

inline std::optional<ContentType> content_type_from(std::string_view name) {
    if (name == "procedural") return ContentType::procedural;
    if (name == "conceptual") return ContentType::conceptual;
    if (name == "reference") return ContentType::reference;
    if (name == "warning") return ContentType::warning;
    if (name == "example") return ContentType::example;
    return std::nullopt;
}

inline std::string_view to_string(Intent i) {
    switch (i) {
        case Intent::how_to: return "how-to";
        case Intent::debugging: return "debugging";
        case Intent::comparison: return "comparison";
        case Intent::reference: return "reference";
    }
    return "reference";
}

inline std::optional<Intent> intent_from(std::string_view name) {
    if (name == "how-to") return Intent::how_to;
    if (name == "debugging") return Intent::debugging;
    if (name == "comparison") return Intent::comparison;
    if (name == "reference") return Intent::reference;
    return std::nullopt;
}

inline constexpr std::array<ContentType, 5> kContentTypes = {
    ContentType::procedural, ContentType::conceptual, ContentType::reference,
    ContentType::warning, ContentType::example};
inline constexpr std::array<Intent, 4> kIntents = {Intent::how_to, Intent::debugging,
                                                   Intent::comparison, Intent::reference};

struct ChunkMetadata {
    ContentType content_type = ContentType::conceptual;
    std::vector<std::string> keywords;  // lowercase, deduplicated, at most 10
    std::vector<std::string> entities;
    bool has_code = false;
    std::string primary_category;
    std::vector<std::string> secondary_categories;
    std::vector<std::string> services;
    std::vector<std::string> tools;
    std::string summary;  // never empty
    std::vector<Intent> intents;  // non-empty, at most 4
    std::vector<std::string> questions;  // at most 5

    bool operator==(const ChunkMetadata&) const = default;
};

struct EnrichedChunk {
    ChunkRecord chunk;
    ChunkMetadata metadata;
    std::string generator_tag;

    bool operator==(const EnrichedChunk&) const = default;
};

inline json metadata_to_json(const ChunkMetadata& m) {
    json intents = json::array();
    for (auto i : m.intents)
        intents.push_back(std::string(to_string(i)));
    return json{{"content_type", std::string(to_string(m.content_type))},
                {"keywords", m.keywords},
                {"entities", m.entities},
                {"has_code", m.has_code},
                {"primary_category", m.primary_category},
                {"secondary_categories", m.secondary_categories},
                {"services", m.services},
                {"tools", m.tools},
                {"summary", m.summary},
                {"intents", intents},
                {"questions", m.questions}};
}

// The LLM response could not be interpreted; the caller may retry the request.
class RetryableParseError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string lowercased(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    return lowercased(haystack).find(lowercased(needle)) != std::string::npos;
}

inline const std::unordered_set<std::string>& stopwords() {
    static const std::unordered_set<std::string> words = {
        "the", "a", "an", "and", "or", "of", "to", "in", "is", "are", "for", "on",
        "with", "that", "this", "it", "as", "be", "by", "at", "from", "was", "were",
        "can", "will", "has", "have", "had", "not", "its", "into", "your", "you",
        "their", "they", "these", "those", "then", "than", "when", "which", "each",
        "all", "any", "also", "but", "if", "so", "such", "may", "must", "should"};
    return words;
}

inline const std::unordered_set<std::string>& imperative_verbs() {
    static const std::unordered_set<std::string> verbs = {
        "create", "delete", "run", "set", "use", "click", "open", "add", "remove",
        "configure", "enable", "disable", "install", "select", "choose", "type",
        "enter", "go", "do", "apply", "attach", "copy", "move", "update", "upload",
        "download", "verify", "check", "restart", "stop", "start", "define", "call"};
    return verbs;
}

}  // namespace detail

// First-match rule table over case-insensitive substrings. Queries and chunk
// text share the same table so query prefixes and chunk intents line up.
inline Intent detect_intent(std::string_view text) {
    static constexpr std::array<std::string_view, 6> how_to = {"how do i", "how to", "steps",
                                                               "configure", "set up", "enable"};
    static constexpr std::array<std::string_view, 6> debugging = {"error", "fail", "fix",
                                                                  "debug", "not working",
                                                                  "troubleshoot"};
    static constexpr std::array<std::string_view, 5> comparison = {" vs ", "difference",
                                                                   "compare", "versus", "better"};
    const std::string lower = detail::lowercased(text);
    for (auto marker : how_to)
        if (lower.find(marker) != std::string::npos)
            return Intent::how_to;
    for (auto marker : debugging)
        if (lower.find(marker) != std::string::npos)
            return Intent::debugging;
    for (auto marker : comparison)
        if (lower.find(marker) != std::string::npos)
            return Intent::comparison;
    return Intent::reference;
}

struct PromptPair {
    std::string system;
    std::string user;
};

struct PromptOptions {
    std::size_t max_text_tokens = 1536;
    std::string truncation_marker = "…[truncated]";
};

// System prompt pins the output schema; user prompt carries the chunk text
// verbatim, truncated at a token boundary when it exceeds the budget.
inline PromptPair build_prompt(const ChunkRecord& chunk, const PromptOptions& options = {},
                               const Tokenizer& tok = default_tokenizer()) {
    std::string system =
        "You are a metadata extraction engine for technical documentation chunks.\n"
        "Respond with one JSON object only, no prose and no code fences, with exactly these "
        "fields:\n"
        "  \"content_type\": one of \"procedural\", \"conceptual\", \"reference\", \"warning\", "
        "\"example\"\n"
        "  \"keywords\": up to 10 lowercase strings\n"
        "  \"entities\": named things mentioned in the text\n"
        "  \"has_code\": true when the text contains code\n"
        "  \"primary_category\": one short category string\n"
        "  \"secondary_categories\": list of strings\n"
        "  \"services\": services mentioned in the text\n"
        "  \"tools\": technical tools mentioned in the text\n"
        "  \"summary\": one or two sentences, never empty\n"
        "  \"intents\": non-empty subset of \"how-to\", \"debugging\", \"comparison\", "
        "\"reference\"\n"
        "  \"questions\": up to 5 user questions this text answers\n";

    std::string body = chunk.text;
    bool truncated = false;
    const auto tokens = tok.tokenize(body);
    if (tokens.size() > options.max_text_tokens) {
        body = body.substr(0, tokens[options.max_text_tokens - 1].end);
        truncated = true;
    }
    std::string user = "Source: " + chunk.doc_id + "\n\nText:\n" + body;
    if (truncated)
        user += "\n" + options.truncation_marker;
    return PromptPair{std::move(system), std::move(user)};
}

struct ParsedMetadata {
    ChunkMetadata metadata;
    std::vector<std::string> warnings;
};

// Strips markdown fences, parses JSON, validates enums, lowercases and
// deduplicates keywords, and clamps list lengths (keywords 10, questions 5,
// intents 4). Unknown content types are coerced to "reference" with a warning
// rather than dropped; anything structurally unusable raises
// RetryableParseError.
inline ParsedMetadata parse_metadata(std::string_view response_text) {
    std::string_view text = response_text;
    // fence stripping: first and last ``` lines, with an optional language tag
    const auto fence = text.find("```");
    if (fence != std::string_view::npos) {
        auto body_start = text.find('\n', fence);
        if (body_start != std::string_view::npos) {
            const auto closing = text.rfind("```");
            if (closing > body_start) {
                text = text.substr(body_start + 1, closing - body_start - 1);
            }
        }
    }

    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw RetryableParseError(std::string("metadata response is not valid JSON: ") + e.what());
    }
    if (!j.is_object())
        throw RetryableParseError("metadata response is not a JSON object");

    ParsedMetadata out;
    auto& m = out.metadata;

    const std::string type_name = j.value("content_type", "");
    if (auto t = content_type_from(type_name)) {
        m.content_type = *t;
    } else {
        m.content_type = ContentType::reference;
        out.warnings.push_back("unknown content_type \"" + type_name + "\" coerced to reference");
    }

    auto string_list = [&](const char* key) {
        std::vector<std::string> items;
        if (j.contains(key) && j.at(key).is_array())
            for (const auto& v : j.at(key))
                if (v.is_string())
                    items.push_back(v.get<std::string>());
        return items;
    };

    std::set<std::string> seen;
    for (const auto& raw : string_list("keywords")) {
        std::string kw = detail::lowercased(raw);
        if (kw.empty() || !seen.insert(kw).second)
            continue;
        m.keywords.push_back(std::move(kw));
        if (m.keywords.size() == 10)
            break;
    }

    m.entities = string_list("entities");
    m.has_code = j.value("has_code", false);
    m.primary_category = j.value("primary_category", "");
    m.secondary_categories = string_list("secondary_categories");
    m.services = string_list("services");
    m.tools = string_list("tools");

    m.summary = j.value("summary", "");
    if (m.summary.empty())
        throw RetryableParseError("metadata response has no summary");

    for (const auto& raw : string_list("intents")) {
        if (auto i = intent_from(raw)) {
            if (std::find(m.intents.begin(), m.intents.end(), *i) == m.intents.end())
                m.intents.push_back(*i);
        } else {
            out.warnings.push_back("unknown intent \"" + raw + "\" dropped");
        }
        if (m.intents.size() == 4)
            break;
    }
    if (m.intents.empty()) {
        m.intents.push_back(Intent::reference);
        out.warnings.push_back("empty intents defaulted to reference");
    }

    for (const auto& q : string_list("questions")) {
        m.questions.push_back(q);
        if (m.questions.size() == 5)
            break;
    }
    return out;
}

// Fully deterministic heuristic metadata, used as the offline provider and as
// the fallback when a real provider keeps failing.
inline ChunkMetadata mock_enrich(const ChunkRecord& chunk,
                                 const Tokenizer& tok = default_tokenizer()) {
    const std::string& text = chunk.text;
    const auto tokens = tok.tokenize(text);
    const auto sentences = split_sentences(text);

    ChunkMetadata m;

    // keywords: top-5 word tokens by frequency, stopwords excluded,
    // ties broken by first occurrence
    std::map<std::string, std::pair<std::size_t, std::size_t>> freq;  // term -> (count, first)
    std::size_t word_count = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto view = tokens[i].view(text);
        if (!WordTokenizer::is_word(static_cast<unsigned char>(view.front())))
            continue;
        ++word_count;
        std::string term = detail::lowercased(view);
        if (detail::stopwords().contains(term))
            continue;
        auto [it, inserted] = freq.try_emplace(std::move(term), std::make_pair(0, i));
        ++it->second.first;
    }
    {
        std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> ranked(
            freq.begin(), freq.end());
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second.first != b.second.first)
                return a.second.first > b.second.first;
            return a.second.second < b.second.second;
        });
        for (const auto& [term, stats] : ranked) {
            m.keywords.push_back(term);
            if (m.keywords.size() == 5)
                break;
        }
    }

    // entities: capitalized tokens that do not open a sentence
    {
        std::set<std::size_t> sentence_starts;
        for (const auto& s : sentences)
            sentence_starts.insert(s.begin);
        std::set<std::string> seen;
        for (const auto& t : tokens) {
            const auto view = t.view(text);
            if (view.size() < 2 || sentence_starts.contains(t.begin))
                continue;
            const unsigned char first = static_cast<unsigned char>(view.front());
            if (first < 'A' || first > 'Z')
                continue;
            std::string entity(view);
            if (seen.insert(entity).second) {
                m.entities.push_back(std::move(entity));
                if (m.entities.size() == 5)
                    break;
            }
        }
    }

    m.has_code = text.find('`') != std::string::npos || text.find("();") != std::string::npos ||
                 text.find("\n    ") != std::string::npos || text.find("\n\t") != std::string::npos;

    // content type rule chain
    {
        std::size_t imperative = 0;
        for (const auto& s : sentences) {
            const auto sent_tokens = tok.tokenize(s.view(text));
            if (sent_tokens.empty())
                continue;
            const std::string head = detail::lowercased(sent_tokens[0].view(s.view(text)));
            if (detail::imperative_verbs().contains(head))
                ++imperative;
        }
        std::size_t signature_tokens = 0;
        for (const auto& t : tokens) {
            const auto view = t.view(text);
            const bool called = t.end < text.size() && text[t.end] == '(';
            bool lower = false, upper = false;
            for (char c : view) {
                lower |= (c >= 'a' && c <= 'z');
                upper |= (c >= 'A' && c <= 'Z');
            }
            const bool camel = lower && upper &&
                               !(view.front() >= 'A' && view.front() <= 'Z' &&
                                 view.find_first_of("ABCDEFGHIJKLMNOPQRSTUVWXYZ", 1) ==
                                     std::string_view::npos);
            if (called || camel || (view.find('_') != std::string_view::npos && view.size() > 2))
                ++signature_tokens;
        }
        if (!sentences.empty() && imperative * 2 > sentences.size())
            m.content_type = ContentType::procedural;
        else if (detail::contains_ci(text, "warning") || detail::contains_ci(text, "caution"))
            m.content_type = ContentType::warning;
        else if (detail::contains_ci(text, "for example"))
            m.content_type = ContentType::example;
        else if (word_count > 0 &&
                 static_cast<double>(signature_tokens) >= 0.1 * static_cast<double>(word_count))
            m.content_type = ContentType::reference;
        else
            m.content_type = ContentType::conceptual;
    }

    m.primary_category = chunk.source_tag();

    // summary: first sentence, capped at 30 tokens
    if (!sentences.empty()) {
        const auto first = sentences[0].view(text);
        const auto sent_tokens = tok.tokenize(first);
        if (sent_tokens.size() > 30)
            m.summary = std::string(first.substr(0, sent_tokens[29].end));
        else
            m.summary = std::string(first);
    }
    if (m.summary.empty() && !tokens.empty())
        m.summary = text.substr(tokens.front().begin,
                                tokens[std::min<std::size_t>(tokens.size(), 30) - 1].end -
                                    tokens.front().begin);
    if (m.summary.empty())
        m.summary = "(empty)";

    // intents: every matching rule category, document order of the table
    {
        const std::string lower = detail::lowercased(text);
        auto any = [&](std::initializer_list<std::string_view> markers) {
            for (auto marker : markers)
                if (lower.find(marker) != std::string::npos)
                    return true;
            return false;
        };
        if (any({"how do i", "how to", "steps", "configure", "set up", "enable"}))
            m.intents.push_back(Intent::how_to);
        if (any({"error", "fail", "fix", "debug", "not working", "troubleshoot"}))
            m.intents.push_back(Intent::debugging);
        if (any({" vs ", "difference", "compare", "versus", "better"}))
            m.intents.push_back(Intent::comparison);
        if (m.intents.empty())
            m.intents.push_back(Intent::reference);
    }

    for (const auto& kw : m.keywords) {
        m.questions.push_back("What is " + kw + "?");
        if (m.questions.size() == 2)
            break;
    }
    if (std::find(m.intents.begin(), m.intents.end(), Intent::how_to) != m.intents.end() &&
        !m.keywords.empty())
        m.questions.push_back("How do I configure " + m.keywords.front() + "?");

    return m;
}

// Offline chat provider: reconstructs the chunk from the prompt layout that
// build_prompt emits and answers with mock_enrich metadata as plain JSON.
class MockChatProvider final : public ChatProvider {
public:
    explicit MockChatProvider(PromptOptions options = {}) : options_(std::move(options)) {}

    std::string complete(const ChatRequest& request) const override {
        ChunkRecord chunk;
        const std::string& user = request.user;
        if (user.rfind("Source: ", 0) == 0) {
            const auto eol = user.find('\n');
            chunk.doc_id = user.substr(8, eol - 8);
        }
        const auto marker = user.find("\nText:\n");
        std::string text = marker == std::string::npos ? user : user.substr(marker + 7);
        const std::string trunc = "\n" + options_.truncation_marker;
        if (text.size() >= trunc.size() && text.compare(text.size() - trunc.size(), trunc.size(), trunc) == 0)
            text.resize(text.size() - trunc.size());
        chunk.text = std::move(text);
        return metadata_to_json(mock_enrich(chunk)).dump();
    }

    std::string model_name() const override { return "mock"; }

private:
    PromptOptions options_;
};

struct EnrichOptions {
    std::size_t batch_size = 16;
    std::size_t max_retries = 2;
    std::size_t parallelism = 4;
    PromptOptions prompt;
    double temperature = 0.5;
    int max_output_tokens = 1024;
    // partial progress lands here when the provider becomes unreachable; an
    // existing file is loaded and its chunks are skipped
    std::optional<std::filesystem::path> checkpoint_path;
};

struct EnrichFailure {
    std::string chunk_id;
    std::size_t attempts = 0;
    std::string error;
};

struct EnrichReport {
    std::size_t total_chunks = 0;
    std::size_t failure_count = 0;
    std::size_t total_retries = 0;
    std::vector<EnrichFailure> failures;
};

struct EnrichResult {
    std::vector<EnrichedChunk> enriched;
    EnrichReport report;
};

inline json enriched_to_json(const EnrichedChunk& e) {
    json j = chunk_to_json(e.chunk);
    j["metadata"] = metadata_to_json(e.metadata);
    j["generator_tag"] = e.generator_tag;
    return j;
}

inline EnrichedChunk enriched_from_json(const json& j) {
    EnrichedChunk e;
    e.chunk = chunk_from_json(j);
    const auto parsed = parse_metadata(j.at("metadata").dump());
    e.metadata = parsed.metadata;
    e.generator_tag = j.at("generator_tag").get<std::string>();
    return e;
}

namespace detail {

inline void write_checkpoint(const std::filesystem::path& path,
                             const std::vector<EnrichedChunk>& done) {
    JsonlWriter out(path);
    for (const auto& e : done)
        out.write(enriched_to_json(e));
}

}  // namespace detail

// Batched enrichment with bounded concurrency inside each batch. Output order
// equals input order. A chunk that keeps failing gets deterministic fallback
// metadata and shows up in the report; an unreachable provider aborts after
// persisting a resumable checkpoint.
inline EnrichResult enrich_chunks(std::span<const ChunkRecord> chunks, const ChatProvider& provider,
                                  const EnrichOptions& options = {},
                                  const Tokenizer& tok = default_tokenizer()) {
    if (options.batch_size < 1)
        throw Error("batch_size must be >= 1");

    EnrichResult result;
    result.report.total_chunks = chunks.size();

    std::size_t resume_from = 0;
    if (options.checkpoint_path && std::filesystem::exists(*options.checkpoint_path)) {
        for_each_jsonl(*options.checkpoint_path, [&](std::size_t, const json& record) {
            result.enriched.push_back(enriched_from_json(record));
        });
        if (result.enriched.size() > chunks.size())
            throw Error("checkpoint has more records than the input chunk set");
        for (std::size_t i = 0; i < result.enriched.size(); ++i)
            if (result.enriched[i].chunk.chunk_id != chunks[i].chunk_id)
                throw Error("checkpoint does not match the input chunk set at " +
                            chunks[i].chunk_id);
        resume_from = result.enriched.size();
    }

    struct Outcome {
        EnrichedChunk enriched;
        std::size_t retries = 0;
        std::optional<EnrichFailure> failure;
        bool unreachable = false;
        std::string unreachable_error;
    };

    auto run_one = [&](const ChunkRecord& chunk) {
        Outcome outcome;
        const PromptPair prompt = build_prompt(chunk, options.prompt, tok);
        ChatRequest request{prompt.system, prompt.user, options.temperature,
                            options.max_output_tokens};
        std::string last_error;
        for (std::size_t attempt = 0; attempt <= options.max_retries; ++attempt) {
            if (attempt > 0)
                ++outcome.retries;
            try {
                const std::string response = provider.complete(request);
                const auto parsed = parse_metadata(response);
                outcome.enriched = EnrichedChunk{chunk, parsed.metadata, provider.model_name()};
                return outcome;
            } catch (const ProviderUnreachableError& e) {
                outcome.unreachable = true;
                outcome.unreachable_error = e.what();
                return outcome;
            } catch (const RetryableParseError& e) {
                last_error = e.what();
            } catch (const ProviderError& e) {
                last_error = e.what();
            }
        }
        outcome.enriched = EnrichedChunk{chunk, mock_enrich(chunk, tok), "fallback-mock"};
        outcome.failure = EnrichFailure{chunk.chunk_id, options.max_retries + 1, last_error};
        return outcome;
    };

    const std::size_t parallelism = std::max<std::size_t>(1, options.parallelism);
    for (std::size_t batch_start = resume_from; batch_start < chunks.size();
         batch_start += options.batch_size) {
        const std::size_t batch_end = std::min(chunks.size(), batch_start + options.batch_size);
        std::vector<Outcome> outcomes(batch_end - batch_start);
        for (std::size_t wave = batch_start; wave < batch_end; wave += parallelism) {
            const std::size_t wave_end = std::min(batch_end, wave + parallelism);
            std::vector<std::future<Outcome>> inflight;
            for (std::size_t i = wave; i < wave_end; ++i)
                inflight.push_back(std::async(std::launch::async, run_one, std::cref(chunks[i])));
            for (std::size_t i = wave; i < wave_end; ++i)
                outcomes[i - batch_start] = inflight[i - wave].get();
        }
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            auto& outcome = outcomes[i];
            if (outcome.unreachable) {
                if (options.checkpoint_path)
                    detail::write_checkpoint(*options.checkpoint_path, result.enriched);
                throw ProviderUnreachableError(
                    "chat provider unreachable at " + chunks[batch_start + i].chunk_id + ": " +
                    outcome.unreachable_error +
                    (options.checkpoint_path
                         ? " (progress checkpointed to " + options.checkpoint_path->string() + ")"
                         : ""));
            }
            result.report.total_retries += outcome.retries;
            if (outcome.failure) {
                ++result.report.failure_count;
                result.report.failures.push_back(*outcome.failure);
            }
            result.enriched.push_back(std::move(outcome.enriched));
        }
    }

    if (options.checkpoint_path && std::filesystem::exists(*options.checkpoint_path))
        std::filesystem::remove(*options.checkpoint_path);
    return result;
}

}  // namespace ragforge
