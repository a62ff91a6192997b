#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragforge/jsonl.hpp"

namespace ragforge {

struct Document {
    std::string doc_id;
    std::string title;
    std::string source_path;
    std::string body;
    std::string source_tag;

    bool operator==(const Document&) const = default;
};

// Immutable after ingestion; iteration order is insertion order.
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::string corpus_id) : corpus_id_(std::move(corpus_id)) {}

    const std::string& corpus_id() const { return corpus_id_; }
    const std::vector<Document>& documents() const { return documents_; }
    std::size_t size() const { return documents_.size(); }
    bool empty() const { return documents_.empty(); }

    void add(Document doc) {
        if (by_id_.contains(doc.doc_id))
            throw Error("duplicate doc_id: " + doc.doc_id);
        by_id_.emplace(doc.doc_id, documents_.size());
        documents_.push_back(std::move(doc));
    }

    const Document* find(const std::string& doc_id) const {
        auto it = by_id_.find(doc_id);
        return it == by_id_.end() ? nullptr : &documents_[it->second];
    }

    bool operator==(const Corpus& other) const {
        return corpus_id_ == other.corpus_id_ && documents_ == other.documents_;
    }

private:
    std::string corpus_id_ = "corpus";
    std::vector<Document> documents_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

namespace detail {

inline std::string trimmed(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return std::string(s.substr(b, e - b));
}

inline void check_body(const std::string& body, const std::string& origin) {
    const std::size_t bad = utf8_invalid_at(body);
    if (bad != std::string::npos)
        throw Error(origin + ": invalid UTF-8 at byte offset " + std::to_string(bad));
    if (trimmed(body).empty())
        throw Error(origin + ": document body is empty");
}

}  // namespace detail

// One Document per .txt file, one per .jsonl line (fields "title" and "body"
// required). doc_id = source_tag + "/" + relative path, with ":{line_index}"
// appended for JSONL records. File order is the sorted relative path, so
// re-ingesting the same tree reproduces ids and ordering exactly.
inline Corpus ingest_directory(const std::filesystem::path& root, const std::string& source_tag,
                               const std::string& corpus_id = "corpus") {
    namespace fs = std::filesystem;
    if (!fs::exists(root) || !fs::is_directory(root))
        throw Error("not a directory: " + root.string());

    std::vector<std::pair<std::string, fs::path>> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file())
            continue;
        const auto ext = entry.path().extension().string();
        if (ext != ".txt" && ext != ".jsonl")
            continue;
        files.emplace_back(fs::relative(entry.path(), root).generic_string(), entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw Error("no documents in " + root.string());

    Corpus corpus(corpus_id);
    for (const auto& [rel, abs] : files) {
        if (abs.extension() == ".txt") {
            Document doc;
            doc.doc_id = source_tag + "/" + rel;
            doc.title = abs.stem().string();
            doc.source_path = rel;
            doc.body = read_file(abs);
            doc.source_tag = source_tag;
            detail::check_body(doc.body, rel);
            corpus.add(std::move(doc));
        } else {
            for_each_jsonl(abs, [&](std::size_t line_no, const json& record) {
                if (!record.contains("title") || !record.contains("body"))
                    throw Error(abs.string() + ":" + std::to_string(line_no) +
                                ": record needs \"title\" and \"body\" fields");
                Document doc;
                doc.doc_id = source_tag + "/" + rel + ":" + std::to_string(line_no - 1);
                doc.title = record.at("title").get<std::string>();
                doc.source_path = rel;
                doc.body = record.at("body").get<std::string>();
                doc.source_tag = source_tag;
                detail::check_body(doc.body, rel + ":" + std::to_string(line_no - 1));
                corpus.add(std::move(doc));
            });
        }
    }
    return corpus;
}

// JSONL with one header line {corpus_id, document_count} followed by one
// document per line. load(save(c)) == c field for field.
inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    JsonlWriter out(path);
    out.write(json{{"corpus_id", corpus.corpus_id()},
                   {"document_count", corpus.documents().size()}});
    for (const auto& doc : corpus.documents()) {
        out.write(json{{"doc_id", doc.doc_id},
                       {"title", doc.title},
                       {"source_path", doc.source_path},
                       {"body", doc.body},
                       {"source_tag", doc.source_tag}});
    }
}

inline Corpus load_corpus(const std::filesystem::path& path) {
    Corpus corpus;
    bool have_header = false;
    std::size_t expected = 0;
    for_each_jsonl(path, [&](std::size_t line_no, const json& record) {
        try {
            if (!have_header) {
                corpus = Corpus(record.at("corpus_id").get<std::string>());
                expected = record.at("document_count").get<std::size_t>();
                have_header = true;
                return;
            }
            Document doc;
            doc.doc_id = record.at("doc_id").get<std::string>();
            doc.title = record.at("title").get<std::string>();
            doc.source_path = record.at("source_path").get<std::string>();
            doc.body = record.at("body").get<std::string>();
            doc.source_tag = record.at("source_tag").get<std::string>();
            corpus.add(std::move(doc));
        } catch (const json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) +
                        ": malformed corpus record: " + e.what());
        }
    });
    if (!have_header)
        throw Error(path.string() + ": missing corpus header line");
    if (corpus.size() != expected)
        throw Error(path.string() + ": header count " + std::to_string(expected) +
                    " does not match " + std::to_string(corpus.size()) + " records");
    return corpus;
}

}  // namespace ragforge
