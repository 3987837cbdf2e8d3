#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dates.hpp"
#include "error.hpp"

namespace cmlrec {

struct RawMovie {
    std::string id;
    std::string title;
    Date release_date;
    std::string plot;
    std::vector<std::string> metadata;
};

struct Transaction {
    std::string customer_id;
    std::string movie_id;
    Timestamp timestamp;
};

/// An ordered movie collection with id lookup. Movie order is the insertion
/// order; ids are unique.
class Catalog {
public:
    Catalog() = default;

    explicit Catalog(std::vector<RawMovie> movies) {
        for (auto& m : movies) {
            add(std::move(m));
        }
    }

    void add(RawMovie movie) {
        if (movie.id.empty()) {
            throw Error(ErrorKind::ParseError, "movie with empty id");
        }
        for (const auto& item : movie.metadata) {
            if (item.empty()) {
                throw Error(ErrorKind::ParseError, "movie " + movie.id + " has an empty metadata item");
            }
        }
        auto [it, inserted] = index_.emplace(movie.id, movies_.size());
        if (!inserted) {
            throw Error(ErrorKind::ParseError, "duplicate movie id " + movie.id);
        }
        movies_.push_back(std::move(movie));
    }

    std::size_t size() const noexcept { return movies_.size(); }
    bool empty() const noexcept { return movies_.empty(); }
    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const RawMovie& at(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) {
            throw Error(ErrorKind::UnknownMovie, id);
        }
        return movies_[it->second];
    }

    const RawMovie& operator[](std::size_t i) const { return movies_[i]; }
    std::size_t index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) {
            throw Error(ErrorKind::UnknownMovie, id);
        }
        return it->second;
    }

    auto begin() const { return movies_.begin(); }
    auto end() const { return movies_.end(); }
    const std::vector<RawMovie>& movies() const noexcept { return movies_; }

private:
    std::vector<RawMovie> movies_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// JSONL catalog

inline nlohmann::json to_json(const RawMovie& m) {
    return nlohmann::json{{"id", m.id},
                          {"title", m.title},
                          {"release_date", format_date(m.release_date)},
                          {"plot", m.plot},
                          {"metadata", m.metadata}};
}

inline RawMovie movie_from_json(const nlohmann::json& j) {
    try {
        RawMovie m;
        m.id = j.at("id").get<std::string>();
        m.title = j.value("title", std::string{});
        m.release_date = parse_date(j.at("release_date").get<std::string>());
        m.plot = j.value("plot", std::string{});
        if (j.contains("metadata")) {
            m.metadata = j.at("metadata").get<std::vector<std::string>>();
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("movie record: ") + e.what());
    }
}

inline std::vector<RawMovie> read_movies_jsonl(std::istream& in) {
    std::vector<RawMovie> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::ParseError, "catalog line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(movie_from_json(j));
    }
    return out;
}

inline Catalog read_catalog_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    return Catalog(read_movies_jsonl(in));
}

inline void write_movies_jsonl(std::ostream& out, const std::vector<RawMovie>& movies) {
    for (const auto& m : movies) {
        out << to_json(m).dump() << '\n';
    }
}

inline void write_catalog_jsonl(const std::string& path, const Catalog& catalog) {
    std::ofstream out(path, std::ios::binary);
    write_movies_jsonl(out, catalog.movies());
}

// ---------------------------------------------------------------------------
// CSV transactions

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        if (!field.empty() && field.back() == '\r') {
            field.pop_back();
        }
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

}

inline std::vector<Transaction> read_transactions_csv(std::istream& in) {
    std::vector<Transaction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        auto f = detail::split_csv_line(line);
        if (lineno == 1 && !f.empty() && f[0] == "customer_id") {
            continue;
        }
        if (f.size() != 3 || f[0].empty() || f[1].empty()) {
            throw Error(ErrorKind::ParseError, "transactions line " + std::to_string(lineno) + ": expected 3 fields");
        }
        out.push_back({f[0], f[1], parse_timestamp(f[2])});
    }
    return out;
}

inline std::vector<Transaction> read_transactions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    return read_transactions_csv(in);
}

inline void write_transactions_csv(std::ostream& out, const std::vector<Transaction>& txs) {
    out << "customer_id,movie_id,timestamp\n";
    for (const auto& t : txs) {
        out << t.customer_id << ',' << t.movie_id << ',' << format_timestamp(t.timestamp) << '\n';
    }
}

inline void write_transactions_csv(const std::string& path, const std::vector<Transaction>& txs) {
    std::ofstream out(path, std::ios::binary);
    write_transactions_csv(out, txs);
}

/// Checks that every transaction names a catalog movie and is not dated
/// before that movie's release.
inline void validate_transactions(const std::vector<Transaction>& txs, const Catalog& catalog) {
    for (const auto& t : txs) {
        const auto& movie = catalog.at(t.movie_id);
        if (t.timestamp < start_of(movie.release_date)) {
            throw Error(ErrorKind::ParseError, "transaction of " + t.customer_id + " for " + t.movie_id +
                                                   " predates the release date");
        }
    }
}

}
