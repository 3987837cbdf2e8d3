#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "error.hpp"
#include "random.hpp"
#include "text.hpp"

namespace cmlrec {

struct EmbeddingConfig {
    int dim = 64;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    int min_count = 2;
    std::uint64_t seed = 1;
};

struct VocabEntry {
    std::string token;
    std::uint64_t count = 0;
};

/// Token vectors, one column per vocabulary entry.
class EmbeddingTable {
public:
    EmbeddingTable() = default;

    EmbeddingTable(std::vector<VocabEntry> vocab, Eigen::MatrixXd vectors)
        : vocab_(std::move(vocab)), vectors_(std::move(vectors)) {
        if (static_cast<std::size_t>(vectors_.cols()) != vocab_.size()) {
            throw Error(ErrorKind::DimensionMismatch, "vector count does not match vocabulary size");
        }
        for (std::size_t i = 0; i < vocab_.size(); ++i) {
            if (!index_.emplace(vocab_[i].token, i).second) {
                throw Error(ErrorKind::ParseError, "duplicate vocabulary token " + vocab_[i].token);
            }
        }
    }

    int dim() const noexcept { return static_cast<int>(vectors_.rows()); }
    std::size_t size() const noexcept { return vocab_.size(); }
    const std::vector<VocabEntry>& vocab() const noexcept { return vocab_; }
    const Eigen::MatrixXd& vectors() const noexcept { return vectors_; }

    std::optional<std::size_t> find(const std::string& token) const {
        auto it = index_.find(token);
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    Eigen::VectorXd vector(const std::string& token) const {
        auto i = find(token);
        if (!i) {
            throw Error(ErrorKind::NoKnownTokens, "token '" + token + "' not in vocabulary");
        }
        return vectors_.col(static_cast<Eigen::Index>(*i));
    }

private:
    std::vector<VocabEntry> vocab_;
    Eigen::MatrixXd vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct MovieEmbedding {
    std::string movie_id;
    Eigen::VectorXd e;
};

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Vocabulary of tokens seen at least min_count times, ordered by count
/// descending then token ascending.
inline std::vector<VocabEntry> build_vocab(const std::vector<TokenSequence>& sequences, int min_count) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& seq : sequences) {
        for (const auto& t : seq.tokens) {
            ++counts[t];
        }
    }
    std::vector<VocabEntry> vocab;
    for (auto& [token, count] : counts) {
        if (count >= static_cast<std::uint64_t>(std::max(min_count, 1))) {
            vocab.push_back({token, count});
        }
    }
    std::stable_sort(vocab.begin(), vocab.end(), [](const VocabEntry& a, const VocabEntry& b) { return a.count > b.count; });
    return vocab;
}

}

/// Skip-gram with negative sampling over the given sequences. Negatives are
/// drawn from the unigram distribution raised to 0.75; the learning rate
/// decays linearly over all epochs. Single-threaded and reproducible for a
/// fixed seed.
inline EmbeddingTable train_embedding(const std::vector<TokenSequence>& sequences, const EmbeddingConfig& config) {
    if (config.dim < 2 || config.window < 1 || config.negatives < 0 || config.epochs < 0 || !(config.learning_rate > 0)) {
        throw Error(ErrorKind::InvalidConfig, "embedding config out of range");
    }
    auto vocab = detail::build_vocab(sequences, config.min_count);
    if (vocab.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "no tokens survive min_count filtering");
    }
    std::unordered_map<std::string, int> ids;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        ids.emplace(vocab[i].token, static_cast<int>(i));
    }

    std::vector<std::vector<int>> corpus;
    std::uint64_t total = 0;
    for (const auto& seq : sequences) {
        std::vector<int> encoded;
        for (const auto& t : seq.tokens) {
            if (auto it = ids.find(t); it != ids.end()) {
                encoded.push_back(it->second);
            }
        }
        total += encoded.size();
        if (!encoded.empty()) {
            corpus.push_back(std::move(encoded));
        }
    }

    std::vector<double> cumulative(vocab.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        acc += std::pow(static_cast<double>(vocab[i].count), 0.75);
        cumulative[i] = acc;
    }
    Rng rng(config.seed);
    auto sample_negative = [&]() {
        double u = uniform01(rng) * acc;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        return static_cast<int>(std::min<std::size_t>(it - cumulative.begin(), vocab.size() - 1));
    };

    const int dim = config.dim;
    const auto n_vocab = static_cast<Eigen::Index>(vocab.size());
    Eigen::MatrixXd input(dim, n_vocab);
    for (Eigen::Index c = 0; c < n_vocab; ++c) {
        for (int r = 0; r < dim; ++r) {
            input(r, c) = (uniform01(rng) - 0.5) / dim;
        }
    }
    Eigen::MatrixXd output = Eigen::MatrixXd::Zero(dim, n_vocab);
    Eigen::VectorXd grad_in(dim);

    const double total_steps = static_cast<double>(total) * config.epochs + 1.0;
    std::uint64_t processed = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const auto& sentence : corpus) {
            const auto len = static_cast<std::ptrdiff_t>(sentence.size());
            for (std::ptrdiff_t i = 0; i < len; ++i, ++processed) {
                const double lr = config.learning_rate * std::max(1e-4, 1.0 - static_cast<double>(processed) / total_steps);
                const auto reach = static_cast<std::ptrdiff_t>(1 + uniform_below(rng, config.window));
                const int center = sentence[i];
                for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - reach); j <= std::min(len - 1, i + reach); ++j) {
                    if (j == i) {
                        continue;
                    }
                    const int context = sentence[j];
                    grad_in.setZero();
                    for (int k = 0; k <= config.negatives; ++k) {
                        int target = context;
                        double label = 1.0;
                        if (k > 0) {
                            target = sample_negative();
                            if (target == context) {
                                continue;
                            }
                            label = 0.0;
                        }
                        const double f = input.col(center).dot(output.col(target));
                        const double g = (label - detail::logistic(f)) * lr;
                        grad_in.noalias() += g * output.col(target);
                        output.col(target).noalias() += g * input.col(center);
                    }
                    input.col(center) += grad_in;
                }
            }
        }
    }
    return EmbeddingTable(std::move(vocab), std::move(input));
}

/// Unweighted mean of the vectors of in-vocabulary tokens; unknown tokens
/// are skipped.
inline MovieEmbedding embed_movie(const TokenSequence& sequence, const EmbeddingTable& table, std::string movie_id = {}) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(table.dim());
    std::size_t known = 0;
    for (const auto& t : sequence.tokens) {
        if (auto i = table.find(t)) {
            sum += table.vectors().col(static_cast<Eigen::Index>(*i));
            ++known;
        }
    }
    if (known == 0) {
        throw Error(ErrorKind::NoKnownTokens, movie_id.empty() ? std::string("sequence has no known tokens")
                                                               : "movie " + movie_id + " has no known tokens");
    }
    return {std::move(movie_id), sum / static_cast<double>(known)};
}

// ---------------------------------------------------------------------------
// Serialization. Binary layout (little-endian):
//   magic "CMLEMBED", u32 version, u32 dim, u64 vocab size,
//   then per token: u32 length, bytes, u64 count, dim x f64.

inline constexpr std::array<char, 8> kEmbeddingMagic{'C', 'M', 'L', 'E', 'M', 'B', 'E', 'D'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void save_embedding(std::ostream& out, const EmbeddingTable& table) {
    binary::write_magic(out, kEmbeddingMagic);
    binary::write_le<std::uint32_t>(out, kEmbeddingVersion);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(table.dim()));
    binary::write_le<std::uint64_t>(out, table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        binary::write_string(out, table.vocab()[i].token);
        binary::write_le<std::uint64_t>(out, table.vocab()[i].count);
        for (int r = 0; r < table.dim(); ++r) {
            binary::write_f64(out, table.vectors()(r, static_cast<Eigen::Index>(i)));
        }
    }
}

inline EmbeddingTable load_embedding(std::istream& in) {
    binary::expect_magic(in, kEmbeddingMagic, "embedding");
    auto version = binary::read_le<std::uint32_t>(in);
    if (version != kEmbeddingVersion) {
        throw Error(ErrorKind::ParseError, "unsupported embedding version " + std::to_string(version));
    }
    auto dim = binary::read_le<std::uint32_t>(in);
    auto n = binary::read_le<std::uint64_t>(in);
    std::vector<VocabEntry> vocab(n);
    Eigen::MatrixXd vectors(dim, static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
        vocab[i].token = binary::read_string(in);
        vocab[i].count = binary::read_le<std::uint64_t>(in);
        for (std::uint32_t r = 0; r < dim; ++r) {
            vectors(r, static_cast<Eigen::Index>(i)) = binary::read_f64(in);
        }
    }
    return EmbeddingTable(std::move(vocab), std::move(vectors));
}

inline void save_embedding(const std::string& path, const EmbeddingTable& table) {
    std::ofstream out(path, std::ios::binary);
    save_embedding(out, table);
}

inline EmbeddingTable load_embedding(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    return load_embedding(in);
}

/// Text export: one line per token, the token followed by its components.
inline void export_embedding_text(std::ostream& out, const EmbeddingTable& table) {
    out << std::setprecision(17);
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << table.vocab()[i].token;
        for (int r = 0; r < table.dim(); ++r) {
            out << ' ' << table.vectors()(r, static_cast<Eigen::Index>(i));
        }
        out << '\n';
    }
}

}
