#pragma once

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragforge/embedding.hpp"
#include "ragforge/jsonl.hpp"
#include "ragforge/numeric.hpp"

namespace ragforge {

struct SearchHit {
    std::string chunk_id;
    double score = 0.0;
};

struct NeighborStats {
    double avg_nn_distance = 0.0;  // 1 - cosine to the nearest other vector
    double min = 0.0;
    double p25 = 0.0;
    double median = 0.0;
    double p75 = 0.0;
    double max = 0.0;
};

// Exact cosine-similarity store. float32 storage, double accumulation.
// Immutable after build; concurrent searches are safe.
class VectorIndex {
public:
    VectorIndex() = default;

    static VectorIndex build(const std::vector<EmbeddingVector>& vectors,
                             std::string chunking_tag = "unspecified",
                             std::string embedding_tag = "unspecified") {
        if (vectors.empty())
            throw Error("cannot build an index from zero vectors");
        VectorIndex index;
        index.dimension_ = vectors[0].values.size();
        index.chunking_tag_ = std::move(chunking_tag);
        index.embedding_tag_ = std::move(embedding_tag);
        for (const auto& v : vectors) {
            if (v.values.size() != index.dimension_)
                throw Error("dimension mismatch for " + v.id + ": expected " +
                            std::to_string(index.dimension_) + ", got " +
                            std::to_string(v.values.size()));
            if (index.position_.contains(v.id))
                throw Error("duplicate chunk_id: " + v.id);
            const double norm = l2_norm(std::span<const float>(v.values));
            if (std::abs(norm - 1.0) > 1e-3)
                throw Error("vector " + v.id + " is not unit norm (|v| = " + std::to_string(norm) +
                            ")");
            index.position_.emplace(v.id, index.ids_.size());
            index.ids_.push_back(v.id);
            index.data_.insert(index.data_.end(), v.values.begin(), v.values.end());
        }
        return index;
    }

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dimension_; }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::string& chunking_tag() const { return chunking_tag_; }
    const std::string& embedding_tag() const { return embedding_tag_; }

    std::span<const float> vector_at(std::size_t row) const {
        return std::span<const float>(data_.data() + row * dimension_, dimension_);
    }

    // Top-k by cosine similarity, descending, ties broken by ascending
    // chunk_id. k beyond the index size returns the full ranking.
    std::vector<SearchHit> search(std::span<const float> query, std::size_t k) const {
        if (k < 1)
            throw Error("k must be >= 1");
        if (query.size() != dimension_)
            throw Error("query dimension mismatch");
        std::vector<std::size_t> order(size());
        std::vector<double> scores(size());
        for (std::size_t row = 0; row < size(); ++row) {
            order[row] = row;
            scores[row] = dot(vector_at(row), query);
        }
        const std::size_t take = std::min(k, size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                          order.end(), [&](std::size_t a, std::size_t b) {
                              if (scores[a] != scores[b])
                                  return scores[a] > scores[b];
                              return ids_[a] < ids_[b];
                          });
        std::vector<SearchHit> hits;
        hits.reserve(take);
        for (std::size_t i = 0; i < take; ++i)
            hits.push_back(SearchHit{ids_[order[i]], scores[order[i]]});
        return hits;
    }

    // Distance 1 - cos from every vector to its nearest other vector.
    NeighborStats nn_stats() const {
        if (size() < 2)
            throw Error("nearest-neighbor stats need at least 2 vectors");
        std::vector<double> distances(size());
        for (std::size_t a = 0; a < size(); ++a) {
            double best = -2.0;
            for (std::size_t b = 0; b < size(); ++b) {
                if (a == b)
                    continue;
                best = std::max(best, dot(vector_at(a), vector_at(b)));
            }
            distances[a] = 1.0 - best;
        }
        NeighborStats stats;
        double sum = 0.0;
        for (double d : distances)
            sum += d;
        stats.avg_nn_distance = sum / static_cast<double>(distances.size());
        stats.min = *std::min_element(distances.begin(), distances.end());
        stats.max = *std::max_element(distances.begin(), distances.end());
        stats.p25 = percentile(distances, 25.0);
        stats.median = percentile(distances, 50.0);
        stats.p75 = percentile(distances, 75.0);
        return stats;
    }

    // Format: one JSON header line, count*dimension little-endian float32
    // values, then a JSON line with the id table.
    void save(const std::filesystem::path& path) const {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write file: " + path.string());
        const json header{{"format", "ragforge-index"},
                          {"version", kFormatVersion},
                          {"dimension", dimension_},
                          {"count", size()},
                          {"chunking_strategy", chunking_tag_},
                          {"embedding_strategy", embedding_tag_}};
        out << header.dump() << '\n';
        if constexpr (std::endian::native == std::endian::little) {
            out.write(reinterpret_cast<const char*>(data_.data()),
                      static_cast<std::streamsize>(data_.size() * sizeof(float)));
        } else {
            for (float v : data_) {
                std::uint32_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                const char le[4] = {static_cast<char>(bits), static_cast<char>(bits >> 8),
                                    static_cast<char>(bits >> 16), static_cast<char>(bits >> 24)};
                out.write(le, 4);
            }
        }
        out << '\n' << json(ids_).dump() << '\n';
        if (!out)
            throw Error("cannot write file: " + path.string());
    }

    static VectorIndex load(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw Error("cannot read file: " + path.string());
        std::string header_line;
        if (!std::getline(in, header_line))
            throw Error(path.string() + ": missing index header");
        json header;
        try {
            header = json::parse(header_line);
        } catch (const json::exception& e) {
            throw Error(path.string() + ": malformed index header: " + e.what());
        }
        if (header.value("format", "") != "ragforge-index")
            throw Error(path.string() + ": not a ragforge index file");
        if (header.value("version", -1) != kFormatVersion)
            throw Error(path.string() + ": unsupported index format version " +
                        header.value("version", json()).dump() + " (expected " +
                        std::to_string(kFormatVersion) + ")");

        VectorIndex index;
        index.dimension_ = header.at("dimension").get<std::size_t>();
        index.chunking_tag_ = header.value("chunking_strategy", "unspecified");
        index.embedding_tag_ = header.value("embedding_strategy", "unspecified");
        const std::size_t count = header.at("count").get<std::size_t>();
        const std::size_t blob_bytes = count * index.dimension_ * sizeof(float);

        index.data_.resize(count * index.dimension_);
        in.read(reinterpret_cast<char*>(index.data_.data()),
                static_cast<std::streamsize>(blob_bytes));
        if (static_cast<std::size_t>(in.gcount()) != blob_bytes)
            throw Error(path.string() + ": truncated index file at byte offset " +
                        std::to_string(header_line.size() + 1 +
                                       static_cast<std::size_t>(std::max<std::streamsize>(
                                           in.gcount(), 0))));
        if constexpr (std::endian::native == std::endian::big) {
            for (float& v : index.data_) {
                std::uint32_t bits;
                std::memcpy(&bits, &v, sizeof(bits));
                bits = ((bits & 0xff) << 24) | ((bits & 0xff00) << 8) | ((bits >> 8) & 0xff00) |
                       (bits >> 24);
                std::memcpy(&v, &bits, sizeof(bits));
            }
        }

        std::string id_line;
        std::getline(in, id_line);  // newline after the blob
        if (!std::getline(in, id_line))
            throw Error(path.string() + ": truncated index file at byte offset " +
                        std::to_string(header_line.size() + 1 + blob_bytes));
        try {
            index.ids_ = json::parse(id_line).get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw Error(path.string() + ": malformed id table: " + e.what());
        }
        if (index.ids_.size() != count)
            throw Error(path.string() + ": id table has " + std::to_string(index.ids_.size()) +
                        " entries, header says " + std::to_string(count));
        for (std::size_t i = 0; i < index.ids_.size(); ++i)
            if (!index.position_.emplace(index.ids_[i], i).second)
                throw Error(path.string() + ": duplicate chunk_id " + index.ids_[i]);
        return index;
    }

    static constexpr int kFormatVersion = 1;

private:
    std::size_t dimension_ = 0;
    std::vector<float> data_;  // row-major, size() * dimension_
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> position_;
    std::string chunking_tag_ = "unspecified";
    std::string embedding_tag_ = "unspecified";
};

inline VectorIndex build_index(const std::vector<EmbeddingVector>& vectors,
                               std::string chunking_tag = "unspecified",
                               std::string embedding_tag = "unspecified") {
    return VectorIndex::build(vectors, std::move(chunking_tag), std::move(embedding_tag));
}

inline json nn_stats_to_json(const NeighborStats& s) {
    return json{{"avg_nn_distance", s.avg_nn_distance}, {"min", s.min},    {"p25", s.p25},
                {"median", s.median},                   {"p75", s.p75},    {"max", s.max}};
}

}  // namespace ragforge
