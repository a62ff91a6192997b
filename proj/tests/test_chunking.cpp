#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>

#include "support.hpp"

using namespace ragforge;

namespace {

Document make_doc(std::string body, std::string id = "tag/doc") {
    return Document{std::move(id), "doc", "doc.txt", std::move(body), "tag"};
}

// n single-token words
std::string words(std::size_t n, const std::string& prefix = "w") {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.empty())
            out += ' ';
        out += prefix + std::to_string(i);
    }
    return out;
}

// token index range a chunk occupies inside its document
std::pair<std::size_t, std::size_t> token_range(const Document& doc, const ChunkRecord& chunk,
                                                const Tokenizer& tok) {
    const auto tokens = tok.tokenize(doc.body);
    std::size_t begin = tokens.size(), end = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].begin >= chunk.span_begin && tokens[i].end <= chunk.span_end) {
            begin = std::min(begin, i);
            end = std::max(end, i + 1);
        }
    }
    return {begin, end};
}

void check_recursive_invariants(const Document& doc, const ChunkingConfig& cfg,
                                const std::vector<ChunkRecord>& chunks, const Tokenizer& tok) {
    const auto tokens = tok.tokenize(doc.body);
    if (tokens.empty()) {
        CHECK(chunks.empty());
        return;
    }
    REQUIRE_FALSE(chunks.empty());
    std::size_t prev_begin = 0, prev_end = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].token_count <= cfg.max_tokens);
        CHECK(tok.count(chunks[i].text) == chunks[i].token_count);
        const auto [begin, end] = token_range(doc, chunks[i], tok);
        CHECK(end - begin == chunks[i].token_count);
        if (i == 0) {
            CHECK(begin == 0);
        } else {
            // the new chunk starts exactly overlap tokens before the previous end
            const std::size_t carry = std::min(cfg.overlap_tokens, prev_end - prev_begin);
            CHECK(begin == prev_end - carry);
            CHECK(end > prev_end);
        }
        prev_begin = begin;
        prev_end = end;
    }
    CHECK(prev_end == tokens.size());
}

// fixed vectors per topic keyword; mixes scale with occurrence counts
class TopicEmbedder final : public EmbeddingProvider {
public:
    std::vector<float> embed(std::string_view text) const override {
        const std::string lower = detail::lowercased(text);
        double a = 0, b = 0;
        for (std::size_t p = lower.find("alpha"); p != std::string::npos;
             p = lower.find("alpha", p + 1))
            a += 1;
        for (std::size_t p = lower.find("beta"); p != std::string::npos;
             p = lower.find("beta", p + 1))
            b += 1;
        std::vector<float> v(8, 0.0f);
        if (a == 0 && b == 0) {
            v[2] = 1.0f;
            return v;
        }
        const double norm = std::sqrt(a * a + b * b);
        v[0] = static_cast<float>(a / norm);
        v[1] = static_cast<float>(b / norm);
        return v;
    }
    std::size_t dimension() const override { return 8; }
    std::string model_name() const override { return "topic"; }
};

class ConstEmbedder final : public EmbeddingProvider {
public:
    std::vector<float> embed(std::string_view) const override {
        std::vector<float> v(8, 0.0f);
        v[0] = 1.0f;
        return v;
    }
    std::size_t dimension() const override { return 8; }
    std::string model_name() const override { return "const"; }
};

class LookupEmbedder final : public EmbeddingProvider {
public:
    explicit LookupEmbedder(std::map<std::string, std::vector<float>> table)
        : table_(std::move(table)) {}
    std::vector<float> embed(std::string_view text) const override {
        auto it = table_.find(std::string(text));
        if (it == table_.end())
            throw Error("no vector for sentence: " + std::string(text));
        return it->second;
    }
    std::size_t dimension() const override { return 4; }
    std::string model_name() const override { return "lookup"; }

private:
    std::map<std::string, std::vector<float>> table_;
};

double coherence_of_text(const std::string& text, const EmbeddingProvider& embedder) {
    const auto sentences = split_sentences(text);
    if (sentences.size() < 2)
        return 1.0;
    std::vector<std::vector<float>> vs;
    for (const auto& s : sentences)
        vs.push_back(embedder.embed(s.view(text)));
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < vs.size(); ++a)
        for (std::size_t b = a + 1; b < vs.size(); ++b) {
            sum += cosine(std::span<const float>(vs[a]), std::span<const float>(vs[b]));
            ++pairs;
        }
    return sum / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("naive: document shorter than the window stays whole", "[chunking]") {
    const WordTokenizer tok;
    const Document doc = make_doc(words(1000));
    ChunkingConfig cfg{ChunkingStrategy::naive, 1024, 0};
    const auto chunks = chunk_naive(doc, cfg, tok);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].token_count == 1000);
    CHECK(chunks[0].chunk_id == "tag/doc#0");
}

TEST_CASE("naive: window arithmetic on a 2500-token document", "[chunking]") {
    const WordTokenizer tok;
    const std::size_t n = 2500, max = 1024;
    const Document doc = make_doc(words(n));
    const auto chunks = chunk_naive(doc, ChunkingConfig{ChunkingStrategy::naive, max, 0}, tok);
    // window oracle: ceil(n / max) windows, all full except the last
    const std::size_t expected = (n + max - 1) / max;
    REQUIRE(chunks.size() == expected);
    CHECK(chunks[0].token_count == 1024);
    CHECK(chunks[1].token_count == 1024);
    CHECK(chunks[2].token_count == 452);
}

TEST_CASE("naive: empty document gives no chunks", "[chunking]") {
    const Document doc = make_doc("");
    CHECK(chunk_naive(doc, ChunkingConfig{ChunkingStrategy::naive, 1024, 0}).empty());
}

TEST_CASE("naive reconstruction: chunk tokens concatenate to document tokens", "[chunking]") {
    const WordTokenizer tok;
    std::mt19937_64 rng(21);
    for (int round = 0; round < 25; ++round) {
        const Document doc = make_doc(testsup::random_document(rng, 1 + rng() % 4, 5, 9));
        const std::size_t max = 4 + rng() % 40;
        const auto chunks = chunk_naive(doc, ChunkingConfig{ChunkingStrategy::naive, max, 0}, tok);
        std::vector<std::string> rebuilt;
        for (const auto& c : chunks) {
            CHECK(c.token_count <= max);
            for (const auto& t : tok.tokenize(c.text))
                rebuilt.emplace_back(t.view(c.text));
        }
        std::vector<std::string> original;
        for (const auto& t : tok.tokenize(doc.body))
            original.emplace_back(t.view(doc.body));
        CHECK(rebuilt == original);
    }
}

TEST_CASE("recursive: whole document fits in one chunk", "[chunking]") {
    const WordTokenizer tok;
    std::string body;
    for (int p = 0; p < 4; ++p)
        body += (p ? "\n\n" : "") + words(100, "p" + std::to_string(p) + "w");
    const Document doc = make_doc(body);
    const auto chunks =
        chunk_recursive(doc, ChunkingConfig{ChunkingStrategy::recursive, 512, 128}, tok);
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].token_count == 400);
}

TEST_CASE("recursive: paragraph too big for the overlap budget splits at sentences",
          "[chunking]") {
    const WordTokenizer tok;
    // two paragraphs of 400 tokens (20 sentences of 19 words + period)
    auto paragraph = [&](const std::string& tag) {
        std::string out;
        for (int s = 0; s < 20; ++s) {
            if (s)
                out += ' ';
            out += words(19, tag + std::to_string(s) + "x") + ".";
        }
        return out;
    };
    const Document doc = make_doc(paragraph("a") + "\n\n" + paragraph("b"));
    REQUIRE(tok.count(doc.body) == 800);

    const ChunkingConfig cfg{ChunkingStrategy::recursive, 512, 128};
    const auto chunks = chunk_recursive(doc, cfg, tok);
    check_recursive_invariants(doc, cfg, chunks, tok);
    // first chunk is exactly the first paragraph; the second starts with the
    // 128-token overlap
    CHECK(chunks[0].token_count == 400);
    CHECK(chunks.size() >= 2);
}

TEST_CASE("recursive: single long sentence becomes sliding token windows", "[chunking]") {
    const WordTokenizer tok;
    const Document doc = make_doc(words(1000));
    const ChunkingConfig cfg{ChunkingStrategy::recursive, 512, 128};
    const auto chunks = chunk_recursive(doc, cfg, tok);
    // stride arithmetic: ceil((1000 - 512) / 384) + 1 = 3
    REQUIRE(chunks.size() == 3);
    const auto r0 = token_range(doc, chunks[0], tok);
    const auto r1 = token_range(doc, chunks[1], tok);
    const auto r2 = token_range(doc, chunks[2], tok);
    CHECK(r0 == std::pair<std::size_t, std::size_t>{0, 512});
    CHECK(r1 == std::pair<std::size_t, std::size_t>{384, 896});
    CHECK(r2 == std::pair<std::size_t, std::size_t>{768, 1000});
    check_recursive_invariants(doc, cfg, chunks, tok);
}

TEST_CASE("recursive: overlap region is token-exact", "[chunking]") {
    const WordTokenizer tok;
    const Document doc = make_doc(words(1000));
    const ChunkingConfig cfg{ChunkingStrategy::recursive, 512, 128};
    const auto chunks = chunk_recursive(doc, cfg, tok);
    REQUIRE(chunks.size() >= 2);
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) {
        const auto prev = tok.tokenize(chunks[i].text);
        const auto next = tok.tokenize(chunks[i + 1].text);
        const std::size_t carry = std::min<std::size_t>(cfg.overlap_tokens, prev.size());
        REQUIRE(next.size() >= carry);
        for (std::size_t t = 0; t < carry; ++t) {
            CHECK(prev[prev.size() - carry + t].view(chunks[i].text) ==
                  next[t].view(chunks[i + 1].text));
        }
    }
}

TEST_CASE("recursive: invariants hold across random documents and configs", "[chunking]") {
    const WordTokenizer tok;
    std::mt19937_64 rng(22);
    for (int round = 0; round < 30; ++round) {
        const Document doc = make_doc(testsup::random_document(rng, 1 + rng() % 5, 6, 10));
        ChunkingConfig cfg{ChunkingStrategy::recursive, 16 + rng() % 120, 0};
        cfg.overlap_tokens = rng() % (cfg.max_tokens / 2 + 1);
        const auto chunks = chunk_recursive(doc, cfg, tok);
        check_recursive_invariants(doc, cfg, chunks, tok);
        CHECK(chunk_recursive(doc, cfg, tok) == chunks);  // deterministic
    }
}

TEST_CASE("semantic: equal similarities fire no percentile breakpoints", "[chunking]") {
    const ConstEmbedder embedder;
    std::string body;
    for (int s = 0; s < 3; ++s)
        body += words(9, "s" + std::to_string(s)) + ". ";
    const Document doc = make_doc(body);

    SECTION("everything fits: one chunk, coherence 1.0") {
        ChunkingConfig cfg{ChunkingStrategy::semantic, 100, 0, 2, 25.0};
        const auto chunks = chunk_semantic(doc, cfg, embedder);
        REQUIRE(chunks.size() == 1);
        REQUIRE(chunks[0].coherence.has_value());
        CHECK(*chunks[0].coherence == Catch::Approx(1.0));
    }

    SECTION("splits come only from max_tokens") {
        ChunkingConfig cfg{ChunkingStrategy::semantic, 16, 0, 2, 25.0};
        const auto chunks = chunk_semantic(doc, cfg, embedder);
        CHECK(chunks.size() == 3);  // 10 tokens per sentence, pairs exceed 16
        for (const auto& c : chunks)
            CHECK(c.token_count <= 16);
    }
}

TEST_CASE("semantic: two-topic document splits at the similarity drop", "[chunking]") {
    const TopicEmbedder embedder;
    std::string body;
    for (int s = 0; s < 5; ++s)
        body += "alpha alpha " + words(6, "a" + std::to_string(s)) + ". ";
    for (int s = 0; s < 5; ++s)
        body += "beta beta " + words(6, "b" + std::to_string(s)) + ". ";
    const Document doc = make_doc(body);

    // oracle: consecutive similarities are eight 1.0 and one 0.0; the 25th
    // linear-interpolation percentile of the sorted values is 1.0, and only
    // the 0.0 falls strictly below it
    {
        std::vector<double> sims = {1, 1, 1, 1, 0, 1, 1, 1, 1};
        std::sort(sims.begin(), sims.end());
        const double h = 0.25 * static_cast<double>(sims.size() - 1);
        const auto lo = static_cast<std::size_t>(h);
        const double threshold = sims[lo] + (h - lo) * (sims[lo + 1] - sims[lo]);
        CHECK(threshold == 1.0);
        CHECK(std::count_if(sims.begin(), sims.end(),
                            [&](double s) { return s < threshold; }) == 1);
    }

    ChunkingConfig cfg{ChunkingStrategy::semantic, 1024, 0, 4, 25.0};
    const auto chunks = chunk_semantic(doc, cfg, embedder);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text.find("alpha") != std::string::npos);
    CHECK(chunks[0].text.find("beta") == std::string::npos);
    CHECK(chunks[1].text.find("beta") != std::string::npos);
    CHECK(*chunks[0].coherence == Catch::Approx(1.0));
    CHECK(*chunks[1].coherence == Catch::Approx(1.0));
}

TEST_CASE("semantic: single sentence gives one chunk with coherence 1.0", "[chunking]") {
    const ConstEmbedder embedder;
    const Document doc = make_doc("just one sentence without much content");
    ChunkingConfig cfg{ChunkingStrategy::semantic, 1024, 0, 2, 25.0};
    const auto chunks = chunk_semantic(doc, cfg, embedder);
    REQUIRE(chunks.size() == 1);
    CHECK(*chunks[0].coherence == Catch::Approx(1.0));
}

TEST_CASE("semantic: inconsistent embedder dimensions are an error", "[chunking]") {
    class VaryingEmbedder final : public EmbeddingProvider {
    public:
        std::vector<float> embed(std::string_view) const override {
            calls_++;
            return std::vector<float>(calls_ % 2 == 1 ? 8 : 9, 0.5f);
        }
        std::size_t dimension() const override { return 8; }
        std::string model_name() const override { return "varying"; }

    private:
        mutable int calls_ = 0;
    };
    const VaryingEmbedder embedder;
    const Document doc = make_doc("First sentence here. Second sentence here.");
    ChunkingConfig cfg{ChunkingStrategy::semantic, 1024, 0, 2, 25.0};
    CHECK_THROWS_WITH(chunk_semantic(doc, cfg, embedder),
                      Catch::Matchers::ContainsSubstring("dimension"));
}

TEST_CASE("semantic: fragments merge into the more similar neighbor", "[chunking]") {
    // sentences: A1 A2 S B1 B2 with pairwise-consecutive sims 1, 0.1, 0.3, 1
    const std::string a1 = words(12, "aa") + " endA1";
    const std::string a2 = words(12, "ab") + " endA2";
    const std::string s = "tiny bridge s1";
    const std::string b1 = words(12, "ba") + " endB1";
    const std::string b2 = words(12, "bb") + " endB2";
    const std::vector<float> eA = {1, 0, 0, 0};
    const std::vector<float> eB = {0, 1, 0, 0};
    // eS·eA = 0.1, eS·eB = 0.3
    std::vector<float> eS = {0.1f, 0.3f, std::sqrt(1.0f - 0.01f - 0.09f), 0};
    const LookupEmbedder embedder({{a1 + ".", eA},
                                   {a2 + ".", eA},
                                   {s + ".", eS},
                                   {b1 + ".", eB},
                                   {b2 + ".", eB}});
    const Document doc = make_doc(a1 + ". " + a2 + ". " + s + ". " + b1 + ". " + b2 + ".");

    ChunkingConfig cfg{ChunkingStrategy::semantic, 1024, 0, 6, 50.0};
    const auto chunks = chunk_semantic(doc, cfg, embedder);
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text.find("endA2") != std::string::npos);
    CHECK(chunks[0].text.find("bridge") == std::string::npos);
    CHECK(chunks[1].text.find("bridge") != std::string::npos);  // merged rightward
    CHECK(chunks[1].text.find("endB2") != std::string::npos);
    // coherence of the merged chunk: pairs (S,B1), (S,B2), (B1,B2)
    CHECK(*chunks[1].coherence == Catch::Approx((0.3 + 0.3 + 1.0) / 3.0).epsilon(1e-6));
}

TEST_CASE("semantic size bound survives merging", "[chunking]") {
    const ConstEmbedder embedder;
    std::mt19937_64 rng(23);
    for (int round = 0; round < 10; ++round) {
        const Document doc = make_doc(testsup::random_document(rng, 2, 8, 12));
        ChunkingConfig cfg{ChunkingStrategy::semantic, 24 + rng() % 40, 0, 8, 25.0};
        for (const auto& c : chunk_semantic(doc, cfg, embedder))
            CHECK(c.token_count <= cfg.max_tokens);
    }
}

TEST_CASE("semantic coherence beats naive on the two-topic corpus", "[chunking]") {
    const TopicEmbedder embedder;
    Corpus corpus("two-topic");
    std::mt19937_64 rng(24);
    for (int d = 0; d < 8; ++d) {
        std::string body;
        for (int s = 0; s < 5; ++s)
            body += "alpha " + testsup::word_soup(rng, 6) + ". ";
        for (int s = 0; s < 5; ++s)
            body += "beta " + testsup::word_soup(rng, 6) + ". ";
        corpus.add(Document{"t/d" + std::to_string(d), "d", "d.txt", body, "t"});
    }

    // naive windows sized to straddle the topic boundary
    ChunkingConfig naive_cfg{ChunkingStrategy::naive, 45, 0};
    ChunkingConfig semantic_cfg{ChunkingStrategy::semantic, 1024, 0, 4, 25.0};
    const ChunkSet naive_set = chunk_corpus(corpus, naive_cfg);
    const ChunkSet semantic_set =
        chunk_corpus(corpus, semantic_cfg, default_tokenizer(), &embedder);

    auto mean_coherence = [&](const ChunkSet& set) {
        double sum = 0.0;
        for (const auto& c : set.chunks)
            sum += c.coherence ? *c.coherence : coherence_of_text(c.text, embedder);
        return sum / static_cast<double>(set.chunks.size());
    };
    CHECK(mean_coherence(semantic_set) >= mean_coherence(naive_set));
}

TEST_CASE("chunk_corpus: identical docs, counts and stats", "[chunking]") {
    Corpus corpus("ten");
    for (int d = 0; d < 10; ++d)
        corpus.add(Document{"t/d" + std::to_string(d), "d", "d.txt", words(100), "t"});
    const ChunkSet set = chunk_corpus(corpus, ChunkingConfig{ChunkingStrategy::naive, 1024, 0});
    CHECK(set.stats.chunk_count == 10);
    CHECK(set.stats.mean_token_count == Catch::Approx(100.0));
    CHECK(set.stats.max_token_count == 100);
    CHECK(set.stats.document_count == 10);
}

TEST_CASE("chunk_corpus: smaller recursive windows give at least as many chunks", "[chunking]") {
    std::mt19937_64 rng(25);
    Corpus corpus("counts");
    for (int d = 0; d < 6; ++d)
        corpus.add(Document{"t/d" + std::to_string(d), "d", "d.txt",
                            testsup::random_document(rng, 4, 8, 12), "t"});
    const auto recursive =
        chunk_corpus(corpus, ChunkingConfig{ChunkingStrategy::recursive, 512, 128});
    const auto naive = chunk_corpus(corpus, ChunkingConfig{ChunkingStrategy::naive, 1024, 0});
    CHECK(recursive.stats.chunk_count >= naive.stats.chunk_count);
}

TEST_CASE("chunk_corpus: empty corpus gives empty stats", "[chunking]") {
    const Corpus corpus("empty");
    const ChunkSet set = chunk_corpus(corpus, ChunkingConfig{ChunkingStrategy::naive, 1024, 0});
    CHECK(set.chunks.empty());
    CHECK(set.stats.chunk_count == 0);
    CHECK(set.stats.mean_token_count == 0.0);
}

TEST_CASE("chunk_corpus: semantic without an embedder is an error", "[chunking]") {
    Corpus corpus("no-embedder");
    corpus.add(Document{"t/d", "d", "d.txt", "Some text.", "t"});
    CHECK_THROWS_WITH(
        chunk_corpus(corpus, ChunkingConfig{ChunkingStrategy::semantic, 1024, 0, 64, 25.0}),
        Catch::Matchers::ContainsSubstring("embedder"));
}

TEST_CASE("chunk_corpus: per-document failures carry the doc id", "[chunking]") {
    class ThrowingEmbedder final : public EmbeddingProvider {
    public:
        std::vector<float> embed(std::string_view text) const override {
            if (text.find("poison") != std::string_view::npos)
                throw Error("poisoned sentence");
            return std::vector<float>(8, 0.5f);
        }
        std::size_t dimension() const override { return 8; }
        std::string model_name() const override { return "throwing"; }
    };
    const ThrowingEmbedder embedder;
    Corpus corpus("ctx");
    corpus.add(Document{"t/fine", "f", "f.txt", "All good here.", "t"});
    corpus.add(Document{"t/bad", "b", "b.txt", "This one has poison inside.", "t"});
    CHECK_THROWS_WITH(
        chunk_corpus(corpus, ChunkingConfig{ChunkingStrategy::semantic, 1024, 0, 2, 25.0},
                     default_tokenizer(), &embedder),
        Catch::Matchers::ContainsSubstring("t/bad"));
}

TEST_CASE("chunk records serialize losslessly", "[chunking]") {
    ChunkRecord c;
    c.chunk_id = "t/doc#3";
    c.doc_id = "t/doc";
    c.strategy = ChunkingStrategy::semantic;
    c.text = "body text";
    c.token_count = 2;
    c.span_begin = 10;
    c.span_end = 19;
    c.coherence = 0.75;
    CHECK(chunk_from_json(chunk_to_json(c)) == c);

    c.coherence.reset();
    c.strategy = ChunkingStrategy::recursive;
    CHECK(chunk_from_json(chunk_to_json(c)) == c);
}
