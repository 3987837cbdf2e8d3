#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "catalog.hpp"

namespace cmlrec {

struct TokenSequence {
    std::vector<std::string> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    bool operator==(const TokenSequence&) const = default;
};

namespace detail {

inline bool is_token_byte(unsigned char c) {
    // Bytes >= 0x80 belong to multi-byte UTF-8 sequences and are kept intact.
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

inline char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}

/// Lowercases (ASCII) and splits on every non-alphanumeric ASCII character,
/// dropping empty fragments.
inline TokenSequence tokenize(std::string_view text) {
    TokenSequence out;
    std::string current;
    for (char c : text) {
        if (detail::is_token_byte(static_cast<unsigned char>(c))) {
            current.push_back(detail::ascii_lower(c));
        } else if (!current.empty()) {
            out.tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        out.tokens.push_back(std::move(current));
    }
    return out;
}

/// Turns a metadata item such as "Jennifer Lawrence" into a single token
/// ("jennifer_lawrence"): tokenized, then joined with underscores.
inline std::string normalize_metadata_item(std::string_view item) {
    auto parts = tokenize(item);
    std::string joined;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) {
            joined.push_back('_');
        }
        joined += parts.tokens[i];
    }
    return joined;
}

inline std::vector<std::string> normalize_metadata(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& item : items) {
        auto norm = normalize_metadata_item(item);
        if (!norm.empty()) {
            out.push_back(std::move(norm));
        }
    }
    return out;
}

/// Interleaves metadata with the plot: position 2i holds metadata[i mod M]
/// and position 2i+1 holds plot[i]. With no metadata the plot is returned.
inline TokenSequence compactify(const TokenSequence& plot, const std::vector<std::string>& metadata) {
    if (metadata.empty()) {
        return plot;
    }
    TokenSequence out;
    out.tokens.reserve(2 * plot.size());
    for (std::size_t i = 0; i < plot.size(); ++i) {
        out.tokens.push_back(metadata[i % metadata.size()]);
        out.tokens.push_back(plot.tokens[i]);
    }
    return out;
}

/// Keeps the first `max_tokens` tokens; 0 means no truncation.
inline TokenSequence truncate(TokenSequence seq, std::size_t max_tokens) {
    if (max_tokens != 0 && seq.size() > max_tokens) {
        seq.tokens.resize(max_tokens);
    }
    return seq;
}

/// The embedding-stage sequence of a movie: its tokenized plot followed by
/// the compactified plot. `plot_truncate` limits the plot to its first N
/// tokens before either part is built (0 keeps the full plot).
inline TokenSequence training_sequence(const RawMovie& movie, std::size_t plot_truncate = 0) {
    auto plot = truncate(tokenize(movie.plot), plot_truncate);
    auto compact = compactify(plot, normalize_metadata(movie.metadata));
    TokenSequence out = plot;
    out.tokens.insert(out.tokens.end(), compact.tokens.begin(), compact.tokens.end());
    return out;
}

}
