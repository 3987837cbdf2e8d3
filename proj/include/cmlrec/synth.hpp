#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "catalog.hpp"
#include "error.hpp"
#include "random.hpp"

namespace cmlrec {

/// Synthetic catalog and purchase generator with planted genre structure.
struct SynthConfig {
    int n_movies = 200;
    int n_customers = 2000;
    int n_genres = 5;
    int vocab_per_genre = 60;
    int shared_vocab = 60;
    double shared_fraction = 0.2;  // chance a plot word comes from the shared vocabulary
    int plot_length = 120;
    int cast_per_movie = 3;
    int cast_pool_per_genre = 12;
    double cast_crossover = 0.25;  // chance a cast slot is filled from another genre's pool
    double affinity_concentration = 0.3;
    double base_rate = 0.3;
    double activity_sigma = 0.5;
    double appeal_sigma = 0.6;
    double mean_purchase_delay_days = 10.0;
    std::string start_date = "2015-01-01";
    std::string end_date = "2018-12-31";
    std::uint64_t seed = 7;
};

struct SynthData {
    std::vector<RawMovie> movies;
    std::vector<Transaction> transactions;
    std::map<std::string, int> movie_genre;
    std::map<std::string, std::vector<double>> customer_affinity;
};

inline void validate(const SynthConfig& c) {
    if (c.n_movies < 1 || c.n_customers < 1 || c.n_genres < 1 || c.vocab_per_genre < 1 || c.shared_vocab < 0 ||
        c.plot_length < 1 || c.cast_per_movie < 0 || c.cast_pool_per_genre < 1) {
        throw Error(ErrorKind::InvalidConfig, "synth counts must be positive");
    }
    if (c.base_rate < 0 || c.base_rate >= 1) {
        throw Error(ErrorKind::InvalidConfig, "base_rate must lie in [0, 1)");
    }
    if (!(c.affinity_concentration > 0) || c.shared_fraction < 0 || c.shared_fraction > 1 || c.cast_crossover < 0 ||
        c.cast_crossover > 1 || c.activity_sigma < 0 || c.appeal_sigma < 0 || c.mean_purchase_delay_days < 0) {
        throw Error(ErrorKind::InvalidConfig, "synth rates out of range");
    }
    if (c.shared_vocab == 0 && c.shared_fraction > 0) {
        throw Error(ErrorKind::InvalidConfig, "shared_fraction > 0 needs a shared vocabulary");
    }
    if (!(parse_date(c.start_date) <= parse_date(c.end_date))) {
        throw Error(ErrorKind::InvalidConfig, "timeline start after end");
    }
}

namespace detail {

class WordMaker {
public:
    explicit WordMaker(Rng& rng) : rng_(rng) {}

    std::string next(int min_syllables, int max_syllables) {
        static constexpr std::string_view consonants = "bdfgklmnprstvz";
        static constexpr std::string_view vowels = "aeiou";
        for (;;) {
            std::string w;
            const auto n = min_syllables + static_cast<int>(uniform_below(rng_, static_cast<std::uint64_t>(max_syllables - min_syllables + 1)));
            for (int i = 0; i < n; ++i) {
                w.push_back(consonants[uniform_below(rng_, consonants.size())]);
                w.push_back(vowels[uniform_below(rng_, vowels.size())]);
            }
            if (used_.insert(w).second) {
                return w;
            }
        }
    }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

inline std::string capitalized(std::string w) {
    if (!w.empty()) {
        w[0] = static_cast<char>(w[0] - 'a' + 'A');
    }
    return w;
}

inline char* format_id(char* buf, std::size_t size, char prefix, int width, int value) {
    std::snprintf(buf, size, "%c%0*d", prefix, width, value);
    return buf;
}

}

/// Movies get one genre each, a plot drawn from that genre's vocabulary plus
/// a shared one, and cast names drawn mostly from a per-genre pool. Each
/// customer has a Dirichlet genre affinity and a log-normal activity level;
/// each movie a log-normal appeal. Customer c buys movie m with probability
/// base_rate * affinity_c[genre(m)] * activity_c * appeal_m (capped at 1),
/// some days after release.
inline SynthData generate(const SynthConfig& config) {
    validate(config);
    Rng rng(config.seed);
    detail::WordMaker words(rng);
    const int g_count = config.n_genres;

    std::vector<std::vector<std::string>> genre_vocab(g_count), cast_pool(g_count);
    for (auto& v : genre_vocab) {
        for (int i = 0; i < config.vocab_per_genre; ++i) {
            v.push_back(words.next(2, 3));
        }
    }
    std::vector<std::string> shared;
    for (int i = 0; i < config.shared_vocab; ++i) {
        shared.push_back(words.next(1, 2));
    }
    for (auto& pool : cast_pool) {
        for (int i = 0; i < config.cast_pool_per_genre; ++i) {
            pool.push_back(detail::capitalized(words.next(2, 2)) + " " + detail::capitalized(words.next(2, 3)));
        }
    }

    const Date start = parse_date(config.start_date);
    const auto span = static_cast<std::uint64_t>((parse_date(config.end_date) - start).count() + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto lognormal = [&](double sigma) { return std::exp(sigma * normal(rng) - 0.5 * sigma * sigma); };

    SynthData data;
    std::vector<int> genres(static_cast<std::size_t>(config.n_movies));
    std::vector<double> appeal(genres.size());
    char buf[32];
    for (int m = 0; m < config.n_movies; ++m) {
        const int g = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(g_count)));
        genres[static_cast<std::size_t>(m)] = g;
        appeal[static_cast<std::size_t>(m)] = lognormal(config.appeal_sigma);

        RawMovie movie;
        movie.id = detail::format_id(buf, sizeof buf, 'm', 4, m + 1);
        movie.title = "The " + detail::capitalized(words.next(2, 3)) + " " + detail::capitalized(words.next(1, 2));
        movie.release_date = start + std::chrono::days{static_cast<int>(uniform_below(rng, span))};
        std::string plot;
        int in_sentence = 0;
        for (int t = 0; t < config.plot_length; ++t) {
            const bool from_shared = !shared.empty() && uniform01(rng) < config.shared_fraction;
            const auto& source = from_shared ? shared : genre_vocab[static_cast<std::size_t>(g)];
            std::string w = source[uniform_below(rng, source.size())];
            if (in_sentence == 0) {
                w = detail::capitalized(std::move(w));
            }
            plot += w;
            if (++in_sentence >= 8 + static_cast<int>(uniform_below(rng, 7)) || t + 1 == config.plot_length) {
                plot += t + 1 == config.plot_length ? "." : ". ";
                in_sentence = 0;
            } else {
                plot += ' ';
            }
        }
        movie.plot = std::move(plot);
        for (int c = 0; c < config.cast_per_movie; ++c) {
            int pool = g;
            if (g_count > 1 && uniform01(rng) < config.cast_crossover) {
                pool = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(g_count)));
            }
            const auto& names = cast_pool[static_cast<std::size_t>(pool)];
            std::string name = names[uniform_below(rng, names.size())];
            if (std::find(movie.metadata.begin(), movie.metadata.end(), name) == movie.metadata.end()) {
                movie.metadata.push_back(std::move(name));
            }
        }
        data.movie_genre[movie.id] = g;
        data.movies.push_back(std::move(movie));
    }

    for (int c = 0; c < config.n_customers; ++c) {
        const std::string id = detail::format_id(buf, sizeof buf, 'c', 5, c + 1);
        std::gamma_distribution<double> gamma(config.affinity_concentration, 1.0);
        std::vector<double> affinity(static_cast<std::size_t>(g_count));
        double total = 0.0;
        for (auto& a : affinity) {
            a = gamma(rng);
            total += a;
        }
        if (!(total > 0) || !std::isfinite(total)) {
            std::fill(affinity.begin(), affinity.end(), 0.0);
            affinity[uniform_below(rng, static_cast<std::uint64_t>(g_count))] = 1.0;
        } else {
            for (auto& a : affinity) {
                a /= total;
            }
        }
        const double activity = lognormal(config.activity_sigma);
        for (std::size_t m = 0; m < data.movies.size(); ++m) {
            const double p = std::min(1.0, config.base_rate * affinity[static_cast<std::size_t>(genres[m])] * activity * appeal[m]);
            if (uniform01(rng) < p) {
                const double delay = config.mean_purchase_delay_days > 0
                                         ? -config.mean_purchase_delay_days * std::log(1.0 - uniform01(rng))
                                         : 0.0;
                const auto seconds = static_cast<long long>(std::floor(delay * 86400.0));
                data.transactions.push_back({id, data.movies[m].id, start_of(data.movies[m].release_date) + std::chrono::seconds{seconds}});
            }
        }
        data.customer_affinity[id] = std::move(affinity);
    }
    std::sort(data.transactions.begin(), data.transactions.end(), [](const Transaction& a, const Transaction& b) {
        if (a.timestamp != b.timestamp) {
            return a.timestamp < b.timestamp;
        }
        return a.customer_id != b.customer_id ? a.customer_id < b.customer_id : a.movie_id < b.movie_id;
    });
    return data;
}

inline nlohmann::json ground_truth_json(const SynthData& data) {
    return nlohmann::json{{"movie_genre", data.movie_genre}, {"customer_affinity", data.customer_affinity}};
}

struct CoPurchaseStats {
    double within_mean = 0.0;      // mean co-purchase count over same-genre movie pairs
    double cross_mean = 0.0;       // ... over cross-genre movie pairs
    double cross_fraction = 0.0;   // share of customer-level co-purchased pairs that cross genres
    double ratio() const { return cross_mean > 0 ? within_mean / cross_mean : std::numeric_limits<double>::infinity(); }
};

inline CoPurchaseStats copurchase_stats(const std::vector<Transaction>& transactions, const std::map<std::string, int>& movie_genre) {
    std::map<std::string, std::set<std::string>> baskets;
    for (const auto& t : transactions) {
        baskets[t.customer_id].insert(t.movie_id);
    }
    std::map<int, std::size_t> genre_size;
    for (const auto& [movie, g] : movie_genre) {
        ++genre_size[g];
    }
    double within_pairs = 0, cross_pairs = 0;
    for (auto& [g, n] : genre_size) {
        within_pairs += 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    }
    const double all = static_cast<double>(movie_genre.size());
    cross_pairs = 0.5 * all * (all - 1) - within_pairs;

    double within = 0, cross = 0;
    for (const auto& [customer, basket] : baskets) {
        std::vector<int> gs;
        for (const auto& m : basket) {
            gs.push_back(movie_genre.at(m));
        }
        for (std::size_t i = 0; i < gs.size(); ++i) {
            for (std::size_t j = i + 1; j < gs.size(); ++j) {
                (gs[i] == gs[j] ? within : cross) += 1.0;
            }
        }
    }
    CoPurchaseStats s;
    s.within_mean = within_pairs > 0 ? within / within_pairs : 0.0;
    s.cross_mean = cross_pairs > 0 ? cross / cross_pairs : 0.0;
    s.cross_fraction = within + cross > 0 ? cross / (within + cross) : 0.0;
    return s;
}

}
