#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ragforge/error.hpp"

namespace ragforge {

using json = nlohmann::json;

// Returns the byte offset of the first invalid UTF-8 sequence, or npos if the
// input is valid.
inline std::size_t utf8_invalid_at(std::string_view bytes) {
    const std::size_t n = bytes.size();
    std::size_t i = 0;
    while (i < n) {
        const unsigned char c = static_cast<unsigned char>(bytes[i]);
        std::size_t len;
        unsigned cp_min;
        if (c < 0x80) {
            i += 1;
            continue;
        } else if ((c & 0xe0) == 0xc0) {
            len = 2;
            cp_min = 0x80;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
            cp_min = 0x800;
        } else if ((c & 0xf8) == 0xf0) {
            len = 4;
            cp_min = 0x10000;
        } else {
            return i;
        }
        if (i + len > n)
            return i;
        unsigned cp = c & (0x7f >> len);
        for (std::size_t k = 1; k < len; ++k) {
            const unsigned char cc = static_cast<unsigned char>(bytes[i + k]);
            if ((cc & 0xc0) != 0x80)
                return i;
            cp = (cp << 6) | (cc & 0x3f);
        }
        if (cp < cp_min || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))
            return i;
        i += len;
    }
    return std::string_view::npos;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad())
        throw Error("cannot read file: " + path.string());
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write file: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
        throw Error("cannot write file: " + path.string());
}

// Calls fn(line_number, parsed_json) for every non-empty line; line numbers
// are 1-based. Parse failures name the file and line.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(std::size_t, const json&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) +
                        ": malformed JSON record: " + e.what());
        }
        fn(line_no, record);
    }
}

class JsonlWriter {
public:
    explicit JsonlWriter(const std::filesystem::path& path) : path_(path) {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_)
            throw Error("cannot write file: " + path.string());
    }

    void write(const json& record) {
        out_ << record.dump() << '\n';
        if (!out_)
            throw Error("cannot write file: " + path_.string());
    }

    void close() { out_.close(); }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

}  // namespace ragforge
