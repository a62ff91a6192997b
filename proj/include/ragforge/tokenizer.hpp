#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ragforge {

// Byte span of one token inside its source text.
struct Token {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    std::string_view view(std::string_view source) const {
        return source.substr(begin, end - begin);
    }
};

// Deterministic text -> token sequence contract. Every module that counts or
// slices tokens goes through the same instance, so counts agree everywhere.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual std::vector<Token> tokenize(std::string_view text) const = 0;

    virtual std::size_t count(std::string_view text) const {
        return tokenize(text).size();
    }
};

// Word-and-punctuation tokenizer: a token is a maximal run of word characters
// (ASCII alnum, '_', any byte >= 0x80) or a maximal run of non-space
// non-word characters. Whitespace separates tokens and is never part of one.
// Multi-byte UTF-8 sequences fall entirely in the word class, so tokens never
// split a code point.
class WordTokenizer final : public Tokenizer {
public:
    static bool is_space(unsigned char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    }
    static bool is_word(unsigned char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
               (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
    }

    std::vector<Token> tokenize(std::string_view text) const override {
        std::vector<Token> out;
        std::size_t i = 0;
        const std::size_t n = text.size();
        while (i < n) {
            unsigned char c = static_cast<unsigned char>(text[i]);
            if (is_space(c)) {
                ++i;
                continue;
            }
            const bool word = is_word(c);
            std::size_t j = i + 1;
            while (j < n) {
                unsigned char d = static_cast<unsigned char>(text[j]);
                if (is_space(d) || is_word(d) != word)
                    break;
                ++j;
            }
            out.push_back(Token{i, j});
            i = j;
        }
        return out;
    }

    std::size_t count(std::string_view text) const override {
        std::size_t n_tokens = 0;
        std::size_t i = 0;
        const std::size_t n = text.size();
        while (i < n) {
            unsigned char c = static_cast<unsigned char>(text[i]);
            if (is_space(c)) {
                ++i;
                continue;
            }
            const bool word = is_word(c);
            std::size_t j = i + 1;
            while (j < n && !is_space(static_cast<unsigned char>(text[j])) &&
                   is_word(static_cast<unsigned char>(text[j])) == word)
                ++j;
            ++n_tokens;
            i = j;
        }
        return n_tokens;
    }
};

inline const Tokenizer& default_tokenizer() {
    static const WordTokenizer tok;
    return tok;
}

// Byte span of one sentence, trimmed of surrounding whitespace.
struct Sentence {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::string_view view(std::string_view source) const {
        return source.substr(begin, end - begin);
    }
};

// A sentence ends after '.', '!' or '?' followed by whitespace, or at a hard
// newline. Empty segments are dropped.
inline std::vector<Sentence> split_sentences(std::string_view text) {
    std::vector<Sentence> out;
    const std::size_t n = text.size();
    std::size_t start = 0;

    auto emit = [&](std::size_t from, std::size_t to) {
        while (from < to && WordTokenizer::is_space(static_cast<unsigned char>(text[from])))
            ++from;
        while (to > from && WordTokenizer::is_space(static_cast<unsigned char>(text[to - 1])))
            --to;
        if (from < to)
            out.push_back(Sentence{from, to});
    };

    for (std::size_t i = 0; i < n; ++i) {
        const char c = text[i];
        if (c == '\n') {
            emit(start, i);
            start = i + 1;
        } else if ((c == '.' || c == '!' || c == '?') &&
                   (i + 1 == n || WordTokenizer::is_space(static_cast<unsigned char>(text[i + 1])))) {
            emit(start, i + 1);
            start = i + 1;
        }
    }
    emit(start, n);
    return out;
}

}  // namespace ragforge
