#pragma once

// Shared test helpers: scratch directories, deterministic generators, and
// independent brute-force oracles. Oracle code must stay naive and separate
// from the library implementations it checks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <ragforge/ragforge.hpp>

namespace testsup {

class TempDir {
public:
    explicit TempDir(const std::string& label) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("ragforge-test-" + label + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// words without stopword collisions, cycled deterministically
inline std::string word_soup(std::mt19937_64& rng, std::size_t n_words) {
    static const std::vector<std::string> vocab = {
        "replica",  "bucket",   "vault",    "policy", "archive", "shard",   "quorum",
        "gateway",  "manifest", "tier",     "region", "billing", "crawler", "catalog",
        "snapshot", "journal",  "lifetime", "node",   "lease",   "token",   "quota",
        "payload",  "registry", "cluster",  "digest", "metric",  "router",  "stream"};
    std::string out;
    for (std::size_t i = 0; i < n_words; ++i) {
        if (!out.empty())
            out += ' ';
        out += vocab[rng() % vocab.size()];
    }
    return out;
}

// multi-paragraph, multi-sentence prose with deterministic shape
inline std::string random_document(std::mt19937_64& rng, std::size_t paragraphs,
                                   std::size_t max_sentences, std::size_t max_words) {
    std::string body;
    for (std::size_t p = 0; p < paragraphs; ++p) {
        if (p > 0)
            body += "\n\n";
        const std::size_t sentences = 1 + rng() % max_sentences;
        for (std::size_t s = 0; s < sentences; ++s) {
            if (s > 0)
                body += ' ';
            body += word_soup(rng, 2 + rng() % max_words);
            body += '.';
        }
    }
    return body;
}

namespace oracle {

// plain re-statement of the ranking metrics, kept free of library calls

struct Judged {
    double gain = 0.0;  // normalized score
    bool relevant = false;
    bool highly_relevant = false;
};

// key: (query_id, chunk_id)
using JudgmentMap = std::map<std::pair<std::string, std::string>, Judged>;
// per query: ranked chunk ids
using RankedLists = std::map<std::string, std::vector<std::string>>;

inline double hit_rate(const JudgmentMap& judgments, const RankedLists& lists, std::size_t k) {
    double hits = 0.0;
    for (const auto& [qid, ranking] : lists) {
        bool hit = false;
        for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
            auto it = judgments.find({qid, ranking[i]});
            if (it != judgments.end() && it->second.highly_relevant)
                hit = true;
        }
        hits += hit ? 1.0 : 0.0;
    }
    return hits / static_cast<double>(lists.size());
}

inline double precision(const JudgmentMap& judgments, const RankedLists& lists, std::size_t k) {
    double total = 0.0;
    for (const auto& [qid, ranking] : lists) {
        std::size_t relevant = 0;
        for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
            auto it = judgments.find({qid, ranking[i]});
            if (it != judgments.end() && it->second.relevant)
                ++relevant;
        }
        total += static_cast<double>(relevant) / static_cast<double>(k);
    }
    return total / static_cast<double>(lists.size());
}

inline double mrr(const JudgmentMap& judgments, const RankedLists& lists, std::size_t k) {
    double total = 0.0;
    for (const auto& [qid, ranking] : lists) {
        for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
            auto it = judgments.find({qid, ranking[i]});
            if (it != judgments.end() && it->second.relevant) {
                total += 1.0 / static_cast<double>(i + 1);
                break;
            }
        }
    }
    return total / static_cast<double>(lists.size());
}

inline double ndcg(const JudgmentMap& judgments, const RankedLists& lists, std::size_t k) {
    double total = 0.0;
    for (const auto& [qid, ranking] : lists) {
        double dcg = 0.0;
        for (std::size_t i = 0; i < ranking.size() && i < k; ++i) {
            auto it = judgments.find({qid, ranking[i]});
            if (it != judgments.end())
                dcg += it->second.gain / std::log2(static_cast<double>(i + 2));
        }
        std::vector<double> pool_gains;
        for (const auto& [key, judged] : judgments)
            if (key.first == qid)
                pool_gains.push_back(judged.gain);
        std::sort(pool_gains.begin(), pool_gains.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t i = 0; i < pool_gains.size() && i < k; ++i)
            idcg += pool_gains[i] / std::log2(static_cast<double>(i + 2));
        total += idcg == 0.0 ? 0.0 : dcg / idcg;
    }
    return total / static_cast<double>(lists.size());
}

inline double consistency(const std::map<std::string, std::string>& category_of,
                          const RankedLists& lists, std::size_t k) {
    double total = 0.0;
    for (const auto& [qid, ranking] : lists) {
        const std::size_t n = std::min(k, ranking.size());
        if (n == 0)
            continue;
        std::map<std::string, std::size_t> counts;
        for (std::size_t i = 0; i < n; ++i) {
            auto it = category_of.find(ranking[i]);
            ++counts[it == category_of.end() ? std::string() : it->second];
        }
        std::size_t modal = 0;
        for (const auto& [cat, count] : counts)
            modal = std::max(modal, count);
        total += static_cast<double>(modal) / static_cast<double>(n);
    }
    return total / static_cast<double>(lists.size());
}

// independent full ranking by cosine, score desc then id asc
inline std::vector<ragforge::SearchHit> full_ranking(
    const std::vector<std::pair<std::string, std::vector<float>>>& entries,
    const std::vector<float>& query) {
    std::vector<ragforge::SearchHit> hits;
    for (const auto& [id, values] : entries) {
        double score = 0.0;
        for (std::size_t d = 0; d < values.size(); ++d)
            score += static_cast<double>(values[d]) * static_cast<double>(query[d]);
        hits.push_back(ragforge::SearchHit{id, score});
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const ragforge::SearchHit& a, const ragforge::SearchHit& b) {
                         if (a.score != b.score)
                             return a.score > b.score;
                         return a.chunk_id < b.chunk_id;
                     });
    return hits;
}

}  // namespace oracle

}  // namespace testsup
