#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "cmlrec/predictor.hpp"
#include "../support.hpp"

using namespace cmlrec;

namespace {

// Rows drawn from the logistic model itself. F in 0..10 and R in 0..100 so
// the fitted min-max scaling maps them to F/10 and R/100 exactly.
std::vector<FeatureRow> rows_from_model(double alpha, double beta, double gf, double gr, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FeatureRow> rows;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureRow r;
        r.phi = uniform(rng, 0.0, 3.0);
        r.frequency = static_cast<int>(uniform_below(rng, 11));
        r.recency = static_cast<double>(uniform_below(rng, 101));
        const double logit = alpha + beta * r.phi + gf * r.frequency / 10.0 + gr * r.recency / 100.0;
        r.label = uniform01(rng) < 1.0 / (1.0 + std::exp(-logit));
        rows.push_back(r);
    }
    rows[0].frequency = 0;
    rows[1].frequency = 10;
    rows[0].recency = 0;
    rows[1].recency = 100;
    return rows;
}

LogisticModel model_with(double alpha, double beta, double gf, double gr) {
    LogisticModel m;
    m.alpha = alpha;
    m.beta = beta;
    m.gamma_f = gf;
    m.gamma_r = gr;
    m.scaling = {0, 10, 0, 100};
    return m;
}

}

TEST(TrainLogistic, RecoversCoefficients) {
    const double alpha = 0.5, beta = -1.2, gf = 1.5, gr = -1.0;
    const auto rows = rows_from_model(alpha, beta, gf, gr, 50000, 77);
    LogisticConfig c;
    c.pos_weight = 1.0;
    c.l2 = 0.0;
    c.epochs = 3000;
    const auto m = train_logistic(rows, c);
    EXPECT_NEAR(m.alpha, alpha, 0.1 * std::abs(alpha));
    EXPECT_NEAR(m.beta, beta, 0.1 * std::abs(beta));
    EXPECT_NEAR(m.gamma_f, gf, 0.1 * std::abs(gf));
    EXPECT_NEAR(m.gamma_r, gr, 0.1 * std::abs(gr));
}

TEST(TrainLogistic, SeparableStaysFinite) {
    std::vector<FeatureRow> rows;
    for (int i = 0; i < 40; ++i) rows.push_back({"c", "m", i < 20 ? 0.1 : 2.0, i % 5, 10.0 * (i % 3), i < 20 ? 1 : 0});
    LogisticConfig c;
    c.l2 = 1e-2;
    const auto m = train_logistic(rows, c);
    EXPECT_TRUE(m.coefficients().allFinite());
    EXPECT_LT(m.coefficients().norm(), 100.0);
    EXPECT_LT(m.beta, 0.0);
}

TEST(TrainLogistic, BaselineFreezesBeta) {
    const auto rows = rows_from_model(0.1, -1, 1, -1, 2000, 3);
    LogisticConfig c;
    c.use_distance = false;
    const auto m = train_logistic(rows, c);
    EXPECT_EQ(m.beta, 0.0);
    EXPECT_EQ(predict(m, 0.1, 3, 40), predict(m, 2.9, 3, 40));
}

TEST(TrainLogistic, DefaultsAndErrors) {
    auto rows = rows_from_model(-1, 0, 0, 0, 500, 4);
    std::size_t pos = 0;
    double phi = 0;
    for (const auto& r : rows) {
        pos += r.label;
        phi += r.phi;
    }
    const auto m = train_logistic(rows, LogisticConfig{});
    EXPECT_DOUBLE_EQ(m.pos_weight, static_cast<double>(rows.size() - pos) / static_cast<double>(pos));
    EXPECT_NEAR(m.phi_mean, phi / static_cast<double>(rows.size()), 1e-12);

    for (auto& r : rows) r.label = 0;
    try {
        train_logistic(rows, LogisticConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingleClass);
    }
}

TEST(LogisticObjective, GradientMatchesFiniteDifferences) {
    const auto [x, y] = oracle::logistic_fixture();
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::Vector4d theta;
        for (int k = 0; k < 4; ++k) theta(k) = uniform(rng, -2, 2);
        EXPECT_LT(oracle::logistic_gradient_check(theta, x, y, uniform(rng, 0.5, 5), 1e-3), 1e-6);
    }
}

TEST(LogisticObjective, UnitWeightIsPlainCrossEntropy) {
    const auto [x, y] = oracle::logistic_fixture();
    const Eigen::Vector4d theta(0.2, -0.7, 1.1, 0.4);
    double ce = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double p = 1 / (1 + std::exp(-x.row(i).dot(theta)));
        ce -= y(i) * std::log(p) + (1 - y(i)) * std::log(1 - p);
    }
    EXPECT_NEAR(logistic_objective(theta, x, y, 1.0, 0.0).loss, ce / static_cast<double>(x.rows()), 1e-14);
    EXPECT_NEAR(logistic_objective(theta, x, y, 2.5, 0.1).loss, oracle::reference_logistic_loss(theta, x, y, 2.5, 0.1), 1e-14);
}

TEST(Predict, Examples) {
    EXPECT_EQ(predict(model_with(0, 0, 0, 0), 1.3, 4, 20), 0.5);
    EXPECT_NEAR(predict(model_with(0, -1, 0, 0), std::log(3.0), 0, 0), 0.25, 1e-15);
    const auto m = model_with(0.3, -2, 0.5, -0.5);
    double prev = 1.0;
    for (double phi = 0; phi < 5; phi += 0.25) {
        const double p = predict(m, phi, 2, 30);
        EXPECT_LT(p, prev);
        prev = p;
    }
}

TEST(Predict, OpenInterval) {
    for (double logit : {-1e6, -800.0, -40.0, 0.0, 40.0, 800.0, 1e6}) {
        const double p = predict(model_with(logit, 0, 0, 0), 0, 0, 0);
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
    }
}

TEST(FeatureRows, Examples) {
    const VectorMap zs{{"old", Eigen::Vector2d(0, 0)}, {"a", Eigen::Vector2d(3, 4)}, {"b", Eigen::Vector2d(1, 0)}};
    std::vector<RawMovie> movies(2);
    movies[0].id = "a";
    movies[0].release_date = parse_date("2018-01-01");
    movies[1].id = "b";
    movies[1].release_date = parse_date("2018-02-01");

    const CustomerProfile late{"late", {{"old", parse_timestamp("2018-03-01")}}};
    auto set = build_feature_rows({late}, movies, zs, 0.01, 365);
    EXPECT_TRUE(set.rows.empty());
    EXPECT_EQ(set.skipped, 2u);

    const CustomerProfile early{"early", {{"old", parse_timestamp("2017-12-22")}, {"b", parse_timestamp("2018-02-03")}}};
    set = build_feature_rows({early}, movies, zs, 0.01, 365);
    ASSERT_EQ(set.rows.size(), 2u);
    EXPECT_DOUBLE_EQ(set.rows[0].phi, 5.0);
    EXPECT_EQ(set.rows[0].label, 0);
    EXPECT_EQ(set.rows[0].frequency, 1);
    EXPECT_DOUBLE_EQ(set.rows[0].recency, 10.0);
    EXPECT_DOUBLE_EQ(set.rows[1].phi, 1.0);
    EXPECT_EQ(set.rows[1].label, 1);
    EXPECT_DOUBLE_EQ(set.rows[1].recency, 41.0);
}

TEST(FeatureRows, MissingTargetVectorThrows) {
    std::vector<RawMovie> movies(1);
    movies[0].id = "nozs";
    const CustomerProfile p{"c", {{"x", parse_timestamp("2000-01-01")}}};
    try {
        build_feature_rows({p}, movies, {{"x", Eigen::Vector2d(0, 0)}}, 0.01, 365);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingEmbedding);
    }
}

TEST(FeatureRows, LabelsMatchPurchaseSets) {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        auto w = oracle::random_world(rng);
        const auto zs = oracle::random_target_vectors(w.catalog, rng);
        const auto profiles = build_profiles(w.transactions);
        const auto set = build_feature_rows(profiles, w.catalog.movies(), zs, 0.02, 30);
        std::set<std::pair<std::string, std::string>> bought;
        for (const auto& t : w.transactions) bought.emplace(t.customer_id, t.movie_id);
        for (const auto& r : set.rows) EXPECT_EQ(r.label, bought.count({r.customer_id, r.movie_id}) ? 1 : 0);
        EXPECT_EQ(set.rows.size() + set.skipped, profiles.size() * w.catalog.size());
        EXPECT_EQ(oracle::feature_violations(set, profiles, w.catalog, zs, 0.02, 30), 0u);
    }
}

TEST(LogisticIo, JsonRoundTrip) {
    const auto rows = rows_from_model(0.1, -1, 1, -1, 500, 5);
    const auto m = train_logistic(rows, LogisticConfig{});
    const auto path = (std::filesystem::temp_directory_path() / "cmlrec_logistic_test.json").string();
    save_logistic(path, m);
    const auto back = load_logistic(path);
    EXPECT_EQ(back.coefficients(), m.coefficients());
    EXPECT_EQ(back.pos_weight, m.pos_weight);
    EXPECT_EQ(back.phi_mean, m.phi_mean);
    for (const auto& r : rows) EXPECT_EQ(predict(back, r), predict(m, r));
    std::filesystem::remove(path);
}

TEST(FeaturesIo, CsvRoundTrip) {
    const std::vector<FeatureRow> rows{{"c1", "m1", 0.1234567890123, 3, 17.25, 1}, {"c2", "m2", 2.0, 0, 365, 0}};
    const auto path = (std::filesystem::temp_directory_path() / "cmlrec_features_test.csv").string();
    write_features_csv(path, rows);
    const auto back = read_features_csv(path);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].phi, rows[0].phi);
    EXPECT_EQ(back[1].recency, 365.0);
    EXPECT_EQ(back[0].label, 1);
    std::filesystem::remove(path);
}
