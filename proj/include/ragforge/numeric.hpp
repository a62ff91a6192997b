#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "ragforge/error.hpp"

namespace ragforge {

// Dot products and norms accumulate in double regardless of storage type.
template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
    double acc = 0.0;
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i)
        acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return acc;
}

template <typename T>
double l2_norm(std::span<const T> v) {
    return std::sqrt(dot(v, v));
}

template <typename T>
void l2_normalize(std::vector<T>& v) {
    const double norm = l2_norm(std::span<const T>(v));
    if (norm == 0.0)
        throw Error("cannot normalize a zero vector");
    for (auto& x : v)
        x = static_cast<T>(static_cast<double>(x) / norm);
}

template <typename T>
double cosine(std::span<const T> a, std::span<const T> b) {
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return dot(a, b) / (na * nb);
}

// Linear-interpolation percentile (the numpy default): for sorted values v of
// size n, p in [0,100] maps to index h = p/100*(n-1) with interpolation
// between the neighbors. Input need not be sorted; a copy is sorted here.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty())
        throw Error("percentile of empty set");
    std::sort(values.begin(), values.end());
    if (values.size() == 1)
        return values[0];
    p = std::clamp(p, 0.0, 100.0);
    const double h = p / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

// splitmix64: deterministic 64-bit mixer used to derive mock vectors and
// projection rows from seeds. Stable across platforms.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a over bytes; used for content stamps and token hashing.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Uniform double in [-1, 1) from a 64-bit hash.
inline double hash_to_unit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

}  // namespace ragforge
