#include <gtest/gtest.h>

#include <filesystem>
#include <tuple>

#include "cmlrec/pairs.hpp"
#include "../support.hpp"

using namespace cmlrec;

namespace {

Catalog abc() {
    std::vector<RawMovie> movies;
    for (auto [id, day] : {std::pair{"A", "2017-01-01"}, {"B", "2017-02-01"}, {"C", "2017-03-01"}}) {
        RawMovie m;
        m.id = id;
        m.release_date = parse_date(day);
        movies.push_back(m);
    }
    return Catalog(movies);
}

Transaction buy(std::string c, std::string m, const char* when) { return {std::move(c), std::move(m), parse_timestamp(when)}; }

using Row = std::tuple<std::string, std::string, std::string, int>;

std::vector<Row> named(const PairDataset& d, const Catalog& catalog) {
    std::vector<Row> out;
    for (const auto& r : d.rows) {
        out.emplace_back(d.customers[r.customer], catalog[r.movie_a].id, catalog[r.movie_b].id, r.label);
    }
    return out;
}

std::vector<PairInstance> synthetic_rows(int pos, int neg) {
    std::vector<PairInstance> rows;
    for (int i = 0; i < pos + neg; ++i) {
        rows.push_back({0, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + 1), static_cast<std::uint8_t>(i < pos)});
    }
    return rows;
}

}

TEST(BuildPairs, CartesianWithTemporalFilter) {
    const auto catalog = abc();
    const auto d = build_pair_dataset({buy("c1", "A", "2017-01-05"), buy("c1", "B", "2017-02-05")}, catalog);
    EXPECT_EQ(named(d, catalog), (std::vector<Row>{{"c1", "A", "B", 1}, {"c1", "A", "C", 0}, {"c1", "B", "C", 0}}));
}

TEST(BuildPairs, EmptyHistoryGivesNoRows) {
    EXPECT_TRUE(build_pair_dataset({}, abc()).rows.empty());
}

TEST(BuildPairs, RowsArePerCustomer) {
    const auto all = abc();
    const Catalog catalog(std::vector<RawMovie>(all.movies().begin(), all.movies().begin() + 2));
    const auto d = build_pair_dataset({buy("c1", "A", "2017-01-02"), buy("c2", "A", "2017-01-03")}, catalog);
    EXPECT_EQ(named(d, catalog), (std::vector<Row>{{"c1", "A", "B", 0}, {"c2", "A", "B", 0}}));
}

TEST(BuildPairs, UnknownMovieThrows) {
    try {
        build_pair_dataset({buy("c1", "Z", "2017-01-01")}, abc());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnknownMovie);
    }
}

TEST(BuildPairs, PropertiesOnRandomWorlds) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        auto w = oracle::random_world(rng);
        const auto d = build_pair_dataset(w.transactions, w.catalog);
        EXPECT_EQ(oracle::pair_violations(d, w.catalog), 0u);

        // Positives: bought (a, b) combinations with a released strictly before b.
        std::size_t expected_pos = 0;
        for (const auto& [c, bought] : purchase_sets(w.transactions)) {
            for (const auto& a : bought) {
                for (const auto& b : bought) {
                    expected_pos += w.catalog.at(a).release_date < w.catalog.at(b).release_date;
                }
            }
        }
        EXPECT_EQ(d.positives(), expected_pos);

        auto shuffled = w.transactions;
        shuffle(shuffled, rng);
        EXPECT_EQ(named(build_pair_dataset(shuffled, w.catalog), w.catalog), named(d, w.catalog));
    }
}

TEST(Balance, KeepsRatio) {
    const auto rows = synthetic_rows(10, 1000);
    const auto out = balance_sample(rows, 3.0, 1);
    std::size_t pos = 0;
    for (const auto& r : out) pos += r.label;
    EXPECT_EQ(pos, 10u);
    EXPECT_EQ(out.size() - pos, 30u);
}

TEST(Balance, ClampsToAvailableNegatives) {
    const auto rows = synthetic_rows(10, 5);
    EXPECT_EQ(balance_sample(rows, 100.0, 1).size(), 15u);
}

TEST(Balance, DeterministicAndOrderPreserving) {
    const auto rows = synthetic_rows(20, 500);
    const auto a = balance_sample(rows, 2.0, 9);
    const auto b = balance_sample(rows, 2.0, 9);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].movie_a, b[i].movie_a);
    for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(a[i - 1].movie_a, a[i].movie_a);
}

TEST(Balance, Errors) {
    try {
        balance_sample(synthetic_rows(0, 10), 2.0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoPositives);
    }
    try {
        balance_sample(synthetic_rows(2, 10), 0.0, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    }
}

TEST(PairsIo, CsvRoundTrip) {
    const auto catalog = abc();
    const auto d = build_pair_dataset({buy("c1", "A", "2017-01-05"), buy("c2", "B", "2017-02-05")}, catalog);
    const auto path = (std::filesystem::temp_directory_path() / "cmlrec_pairs_test.csv").string();
    write_pairs_csv(path, d, catalog);
    EXPECT_EQ(named(read_pairs_csv(path, catalog), catalog), named(d, catalog));
    std::filesystem::remove(path);
}
