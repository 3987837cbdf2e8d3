#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "catalog.hpp"
#include "error.hpp"
#include "random.hpp"

namespace cmlrec {

/// One Siamese training row. Movies are catalog indices, the customer an
/// index into PairDataset::customers.
struct PairInstance {
    std::uint32_t customer = 0;
    std::uint32_t movie_a = 0;
    std::uint32_t movie_b = 0;
    std::uint8_t label = 0;

    bool operator==(const PairInstance&) const = default;
};

struct PairDataset {
    std::vector<std::string> customers;
    std::vector<PairInstance> rows;

    std::size_t positives() const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const PairInstance& p) { return p.label == 1; }));
    }
};

/// Per-customer set of purchased movie ids; repeat purchases collapse to
/// one entry. Customers come out in ascending id order.
inline std::map<std::string, std::set<std::string>> purchase_sets(const std::vector<Transaction>& transactions) {
    std::map<std::string, std::set<std::string>> out;
    for (const auto& t : transactions) {
        out[t.customer_id].insert(t.movie_id);
    }
    return out;
}

/// Crosses every customer's purchases with the whole catalog. A row
/// (customer, a, b) is kept when a was purchased, a != b and a was released
/// strictly before b; its label is 1 when the customer also bought b.
/// Rows are ordered by customer id, then movie ids, so the result does not
/// depend on transaction order.
inline PairDataset build_pair_dataset(const std::vector<Transaction>& transactions, const Catalog& catalog) {
    for (const auto& t : transactions) {
        if (!catalog.contains(t.movie_id)) {
            throw Error(ErrorKind::UnknownMovie, t.movie_id);
        }
    }
    std::vector<std::uint32_t> universe(catalog.size());
    for (std::uint32_t i = 0; i < universe.size(); ++i) {
        universe[i] = i;
    }
    std::sort(universe.begin(), universe.end(), [&](auto x, auto y) { return catalog[x].id < catalog[y].id; });

    PairDataset out;
    for (const auto& [customer, bought] : purchase_sets(transactions)) {
        const auto cidx = static_cast<std::uint32_t>(out.customers.size());
        out.customers.push_back(customer);
        for (const auto& a_id : bought) {
            const auto a = static_cast<std::uint32_t>(catalog.index_of(a_id));
            for (auto b : universe) {
                if (b == a || !(catalog[a].release_date < catalog[b].release_date)) {
                    continue;
                }
                out.rows.push_back({cidx, a, b, static_cast<std::uint8_t>(bought.count(catalog[b].id) ? 1 : 0)});
            }
        }
    }
    return out;
}

/// Keeps every positive and a uniform sample of round(ratio * positives)
/// negatives (all negatives if fewer exist). Surviving rows keep their
/// original relative order.
inline std::vector<PairInstance> balance_sample(const std::vector<PairInstance>& rows, double negative_ratio, std::uint64_t seed) {
    if (!(negative_ratio > 0)) {
        throw Error(ErrorKind::InvalidConfig, "negative_ratio must be positive");
    }
    std::vector<std::size_t> negatives;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].label == 1) {
            ++positives;
        } else {
            negatives.push_back(i);
        }
    }
    if (positives == 0) {
        throw Error(ErrorKind::NoPositives, "pair set has no positive rows");
    }
    const auto wanted = static_cast<std::size_t>(std::llround(negative_ratio * static_cast<double>(positives)));
    std::vector<bool> keep(rows.size(), false);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        keep[i] = rows[i].label == 1;
    }
    if (wanted >= negatives.size()) {
        for (auto i : negatives) {
            keep[i] = true;
        }
    } else {
        Rng rng(seed);
        // Partial Fisher-Yates: the first `wanted` slots become the sample.
        for (std::size_t i = 0; i < wanted; ++i) {
            std::size_t j = i + uniform_below(rng, negatives.size() - i);
            std::swap(negatives[i], negatives[j]);
            keep[negatives[i]] = true;
        }
    }
    std::vector<PairInstance> out;
    out.reserve(positives + std::min(wanted, negatives.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (keep[i]) {
            out.push_back(rows[i]);
        }
    }
    return out;
}

inline void write_pairs_csv(std::ostream& out, const PairDataset& data, const Catalog& catalog) {
    out << "customer_id,movie_a,movie_b,label\n";
    for (const auto& r : data.rows) {
        out << data.customers[r.customer] << ',' << catalog[r.movie_a].id << ',' << catalog[r.movie_b].id << ','
            << static_cast<int>(r.label) << '\n';
    }
}

inline void write_pairs_csv(const std::string& path, const PairDataset& data, const Catalog& catalog) {
    std::ofstream out(path, std::ios::binary);
    write_pairs_csv(out, data, catalog);
}

inline PairDataset read_pairs_csv(const std::string& path, const Catalog& catalog) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    PairDataset out;
    std::unordered_map<std::string, std::uint32_t> customer_index;
    std::string line;
    std::getline(in, line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto f = detail::split_csv_line(line);
        if (f.size() != 4 || (f[3] != "0" && f[3] != "1")) {
            throw Error(ErrorKind::ParseError, "pairs line " + std::to_string(lineno));
        }
        auto [it, inserted] = customer_index.emplace(f[0], static_cast<std::uint32_t>(out.customers.size()));
        if (inserted) {
            out.customers.push_back(f[0]);
        }
        out.rows.push_back({it->second, static_cast<std::uint32_t>(catalog.index_of(f[1])),
                            static_cast<std::uint32_t>(catalog.index_of(f[2])), static_cast<std::uint8_t>(f[3] == "1")});
    }
    return out;
}

}
