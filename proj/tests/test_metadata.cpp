#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <functional>
#include <mutex>

#include "support.hpp"

using namespace ragforge;

namespace {

ChunkRecord make_chunk(std::string text, std::string id = "guide/doc#0") {
    ChunkRecord c;
    c.chunk_id = id;
    const auto hash = id.find('#');
    c.doc_id = hash == std::string::npos ? id : id.substr(0, hash);
    c.strategy = ChunkingStrategy::naive;
    c.text = std::move(text);
    c.token_count = default_tokenizer().count(c.text);
    c.span_end = c.text.size();
    return c;
}

// test double with programmable behavior per call
class ScriptedChatProvider final : public ChatProvider {
public:
    using Behavior = std::function<std::string(std::size_t call_index, const ChatRequest&)>;
    explicit ScriptedChatProvider(Behavior behavior) : behavior_(std::move(behavior)) {}

    std::string complete(const ChatRequest& request) const override {
        std::size_t index;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            index = calls_++;
            requests_.push_back(request.user);
        }
        return behavior_(index, request);
    }
    std::string model_name() const override { return "scripted"; }

    std::size_t calls() const { return calls_; }
    std::vector<std::string> requests() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return requests_;
    }

private:
    Behavior behavior_;
    mutable std::mutex mutex_;
    mutable std::size_t calls_ = 0;
    mutable std::vector<std::string> requests_;
};

std::string valid_response(const std::string& summary = "A fine summary.") {
    return json{{"content_type", "procedural"},
                {"keywords", {"bucket", "policy"}},
                {"entities", {"S3"}},
                {"has_code", false},
                {"primary_category", "storage"},
                {"secondary_categories", json::array()},
                {"services", json::array()},
                {"tools", json::array()},
                {"summary", summary},
                {"intents", {"how-to"}},
                {"questions", {"How do I set a policy?"}}}
        .dump();
}

}  // namespace

TEST_CASE("build_prompt spells out the whole schema", "[metadata]") {
    const auto prompt = build_prompt(make_chunk("Some text."));
    for (const char* value : {"procedural", "conceptual", "reference", "warning", "example"})
        CHECK(prompt.system.find(value) != std::string::npos);
    for (const char* value : {"how-to", "debugging", "comparison", "reference"})
        CHECK(prompt.system.find(value) != std::string::npos);
    CHECK(prompt.user.find("Some text.") != std::string::npos);
}

TEST_CASE("build_prompt truncates long chunks and marks it", "[metadata]") {
    PromptOptions options;
    options.max_text_tokens = 5;
    std::string text = "one two three four five six seven eight";
    const auto prompt = build_prompt(make_chunk(text), options);
    CHECK(prompt.user.find("six") == std::string::npos);
    REQUIRE(prompt.user.size() >= options.truncation_marker.size());
    CHECK(prompt.user.substr(prompt.user.size() - options.truncation_marker.size()) ==
          options.truncation_marker);

    const auto short_prompt = build_prompt(make_chunk("short text"), options);
    CHECK(short_prompt.user.find(options.truncation_marker) == std::string::npos);
}

TEST_CASE("build_prompt is deterministic for identical chunks", "[metadata]") {
    const auto a = build_prompt(make_chunk("same text", "g/d#1"));
    const auto b = build_prompt(make_chunk("same text", "g/d#1"));
    CHECK(a.system == b.system);
    CHECK(a.user == b.user);
}

TEST_CASE("parse_metadata accepts plain and fenced JSON", "[metadata]") {
    const auto plain = parse_metadata(valid_response());
    CHECK(plain.metadata.content_type == ContentType::procedural);
    CHECK(plain.metadata.summary == "A fine summary.");
    CHECK(plain.warnings.empty());

    const auto fenced = parse_metadata("```json\n" + valid_response() + "\n```");
    CHECK(fenced.metadata == plain.metadata);
}

TEST_CASE("parse_metadata dedups, lowercases and clamps keywords", "[metadata]") {
    // 14 keywords, 3 of them duplicated
    std::vector<std::string> raw = {"Alpha", "beta",  "GAMMA", "delta", "epsilon",
                                    "zeta",  "eta",   "theta", "iota",  "kappa",
                                    "alpha", "BETA",  "gamma", "lambda"};
    // oracle: dedup lowercase first-seen, then clamp to 10
    std::vector<std::string> expected;
    for (const auto& kw : raw) {
        std::string lower;
        for (char c : kw)
            lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (std::find(expected.begin(), expected.end(), lower) == expected.end())
            expected.push_back(lower);
    }
    expected.resize(10);

    json j = json::parse(valid_response());
    j["keywords"] = raw;
    const auto parsed = parse_metadata(j.dump());
    CHECK(parsed.metadata.keywords == expected);
}

TEST_CASE("parse_metadata failure modes", "[metadata]") {
    CHECK_THROWS_AS(parse_metadata("this is not json"), RetryableParseError);
    CHECK_THROWS_AS(parse_metadata("[1, 2, 3]"), RetryableParseError);

    json no_summary = json::parse(valid_response());
    no_summary["summary"] = "";
    CHECK_THROWS_AS(parse_metadata(no_summary.dump()), RetryableParseError);

    json bad_type = json::parse(valid_response());
    bad_type["content_type"] = "sonnet";
    const auto parsed = parse_metadata(bad_type.dump());
    CHECK(parsed.metadata.content_type == ContentType::reference);
    REQUIRE_FALSE(parsed.warnings.empty());
    CHECK(parsed.warnings[0].find("sonnet") != std::string::npos);

    json bad_intents = json::parse(valid_response());
    bad_intents["intents"] = {"singing"};
    const auto fallback = parse_metadata(bad_intents.dump());
    CHECK(fallback.metadata.intents == std::vector<Intent>{Intent::reference});
}

TEST_CASE("parse_metadata clamps questions and intents", "[metadata]") {
    json j = json::parse(valid_response());
    j["questions"] = {"q1?", "q2?", "q3?", "q4?", "q5?", "q6?", "q7?"};
    j["intents"] = {"how-to", "debugging", "comparison", "reference", "how-to"};
    const auto parsed = parse_metadata(j.dump());
    CHECK(parsed.metadata.questions.size() == 5);
    CHECK(parsed.metadata.intents.size() == 4);
}

TEST_CASE("enrich_chunks: happy path through the mock provider", "[metadata]") {
    const MockChatProvider provider;
    std::vector<ChunkRecord> chunks;
    for (int i = 0; i < 10; ++i)
        chunks.push_back(make_chunk("Configure the replica gateway number " + std::to_string(i) +
                                        " for the archive tier.",
                                    "guide/doc#" + std::to_string(i)));
    EnrichOptions options;
    options.batch_size = 4;
    const auto result = enrich_chunks(chunks, provider, options);
    REQUIRE(result.enriched.size() == 10);
    CHECK(result.report.failure_count == 0);
    CHECK(result.report.total_retries == 0);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(result.enriched[i].chunk.chunk_id == chunks[i].chunk_id);  // order preserved
        CHECK(result.enriched[i].generator_tag == "mock");
        CHECK(result.enriched[i].metadata == mock_enrich(chunks[i]));
    }
}

TEST_CASE("enrich_chunks: one transient failure is retried", "[metadata]") {
    const ScriptedChatProvider provider([](std::size_t call, const ChatRequest&) -> std::string {
        if (call == 0)
            throw ProviderError("flaky");
        return valid_response();
    });
    std::vector<ChunkRecord> chunks{make_chunk("Some text.")};
    EnrichOptions options;
    options.max_retries = 2;
    options.parallelism = 1;
    const auto result = enrich_chunks(chunks, provider, options);
    CHECK(result.report.total_retries == 1);
    CHECK(result.report.failure_count == 0);
    CHECK(result.enriched[0].generator_tag == "scripted");
}

TEST_CASE("enrich_chunks: permanent failures fall back to deterministic metadata",
          "[metadata]") {
    const ScriptedChatProvider provider([](std::size_t, const ChatRequest&) -> std::string {
        throw ProviderError("always down");
    });
    std::vector<ChunkRecord> chunks;
    for (int i = 0; i < 10; ++i)
        chunks.push_back(make_chunk("Chunk body " + std::to_string(i) + " with prose.",
                                    "g/d#" + std::to_string(i)));
    EnrichOptions options;
    options.max_retries = 1;
    options.parallelism = 2;
    const auto result = enrich_chunks(chunks, provider, options);
    REQUIRE(result.enriched.size() == 10);
    CHECK(result.report.failure_count == 10);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(result.enriched[i].generator_tag == "fallback-mock");
        CHECK(result.enriched[i].metadata == mock_enrich(chunks[i]));
        CHECK(result.report.failures[i].attempts == 2);
    }
}

TEST_CASE("enrich_chunks: unreachable provider checkpoints and resumes", "[metadata]") {
    testsup::TempDir dir("enrich-resume");
    const auto checkpoint = dir.path() / "checkpoint.jsonl";

    std::vector<ChunkRecord> chunks;
    for (int i = 0; i < 10; ++i)
        chunks.push_back(make_chunk("Deterministic text " + std::to_string(i) + ".",
                                    "g/d#" + std::to_string(i)));

    EnrichOptions options;
    options.batch_size = 4;
    options.max_retries = 0;
    options.parallelism = 1;
    options.checkpoint_path = checkpoint;

    const MockChatProvider good;
    // reference run, no interruptions
    EnrichOptions plain = options;
    plain.checkpoint_path.reset();
    const auto uninterrupted = enrich_chunks(chunks, good, plain);

    // provider dies at the 6th call
    const MockChatProvider inner;
    const ScriptedChatProvider dying([&](std::size_t call,
                                         const ChatRequest& request) -> std::string {
        if (call == 5)
            throw ProviderUnreachableError("socket closed");
        return inner.complete(request);
    });
    CHECK_THROWS_AS(enrich_chunks(chunks, dying, options), ProviderUnreachableError);
    REQUIRE(std::filesystem::exists(checkpoint));
    {
        std::size_t lines = 0;
        for_each_jsonl(checkpoint, [&](std::size_t, const json&) { ++lines; });
        CHECK(lines == 5);  // batch of 4 plus the one completed before the failure
    }

    const auto resumed = enrich_chunks(chunks, good, options);
    REQUIRE(resumed.enriched.size() == uninterrupted.enriched.size());
    for (std::size_t i = 0; i < resumed.enriched.size(); ++i)
        CHECK(resumed.enriched[i] == uninterrupted.enriched[i]);
    CHECK_FALSE(std::filesystem::exists(checkpoint));  // cleaned up on success
}

TEST_CASE("mock_enrich rule table", "[metadata]") {
    SECTION("warning marker") {
        const auto m = mock_enrich(make_chunk("Warning: do not delete the bucket."));
        CHECK(m.content_type == ContentType::warning);
    }
    SECTION("code markers") {
        CHECK(mock_enrich(make_chunk("Run ```code``` to start.")).has_code);
        CHECK(mock_enrich(make_chunk("Call shutdown(); afterwards.")).has_code);
        CHECK_FALSE(mock_enrich(make_chunk("Plain prose without markers.")).has_code);
    }
    SECTION("pure prose is conceptual") {
        const auto m = mock_enrich(
            make_chunk("The archive tier stores rarely accessed payloads in cold vaults."));
        CHECK(m.content_type == ContentType::conceptual);
        CHECK_FALSE(m.has_code);
    }
    SECTION("imperative majority is procedural") {
        const auto m = mock_enrich(
            make_chunk("Create the vault. Configure the lease. Run the crawler."));
        CHECK(m.content_type == ContentType::procedural);
    }
    SECTION("example marker") {
        const auto m = mock_enrich(make_chunk("For example, the catalog keeps digests."));
        CHECK(m.content_type == ContentType::example);
    }
    SECTION("keywords are frequency-ranked, stopwords excluded") {
        const auto m = mock_enrich(make_chunk(
            "The vault keeps the vault manifest. The vault lease and the manifest digest."));
        REQUIRE_FALSE(m.keywords.empty());
        CHECK(m.keywords[0] == "vault");
        CHECK(m.keywords[1] == "manifest");
        for (const auto& kw : m.keywords)
            CHECK(kw != "the");
    }
    SECTION("primary category comes from the source tag") {
        CHECK(mock_enrich(make_chunk("text", "user-guide/a.txt#0")).primary_category ==
              "user-guide");
    }
    SECTION("deterministic") {
        const auto chunk = make_chunk("Enable versioning. For example, check the catalog.");
        CHECK(mock_enrich(chunk) == mock_enrich(chunk));
    }
}

TEST_CASE("detect_intent first-match rules", "[metadata]") {
    CHECK(detect_intent("How do I enable versioning?") == Intent::how_to);
    CHECK(detect_intent("S3 Standard vs Glacier retrieval cost") == Intent::comparison);
    CHECK(detect_intent("ListObjectsV2 pagination token") == Intent::reference);
    CHECK(detect_intent("upload fails with a timeout") == Intent::debugging);
    CHECK(detect_intent("why is my request failing, how to fix") == Intent::how_to);
}

TEST_CASE("enriched chunks serialize losslessly", "[metadata]") {
    const auto chunk =
        make_chunk("Configure the replica set. Warning: leases expire.", "api/ref.txt:3#7");
    const EnrichedChunk e{chunk, mock_enrich(chunk), "mock"};
    const EnrichedChunk round = enriched_from_json(enriched_to_json(e));
    CHECK(round == e);
}

TEST_CASE("mock chat provider agrees with mock_enrich", "[metadata]") {
    const MockChatProvider provider;
    const auto chunk = make_chunk("Enable the archive tier for the vault catalog.",
                                  "user-guide/intro.txt#2");
    const auto prompt = build_prompt(chunk);
    const auto parsed = parse_metadata(provider.complete({prompt.system, prompt.user, 0.5, 512}));
    CHECK(parsed.metadata == mock_enrich(chunk));
}
