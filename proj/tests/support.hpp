// Test-only oracles and generators shared by the unit suites and the
// acceptance binary. Nothing here calls into the code paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmlrec/catalog.hpp"
#include "cmlrec/eval.hpp"
#include "cmlrec/metric.hpp"
#include "cmlrec/predictor.hpp"
#include "cmlrec/profiles.hpp"
#include "cmlrec/random.hpp"

namespace cmlrec::oracle {

/// AUC by enumerating every positive/negative pair: (2 wins + ties) / (2 P N).
inline double brute_force_auc(const ScoredSet& set) {
    std::int64_t wins2 = 0, pos = 0, neg = 0;
    for (const auto& a : set) {
        if (a.label != 1) {
            ++neg;
            continue;
        }
        ++pos;
        for (const auto& b : set) {
            if (b.label == 1) continue;
            if (a.score > b.score) wins2 += 2;
            else if (a.score == b.score) wins2 += 1;
        }
    }
    return static_cast<double>(wins2) / static_cast<double>(2 * pos * neg);
}

/// Random scored set with 2..max_points points, both classes present, and
/// scores drawn from a small grid so ties are common.
inline ScoredSet random_scored_set(Rng& rng, std::size_t max_points) {
    for (;;) {
        const auto n = 2 + uniform_below(rng, max_points - 1);
        const auto levels = 1 + uniform_below(rng, 20);
        ScoredSet set;
        for (std::uint64_t i = 0; i < n; ++i) {
            set.push_back({static_cast<double>(uniform_below(rng, levels)) / 7.0, static_cast<int>(uniform_below(rng, 2))});
        }
        const bool pos = std::any_of(set.begin(), set.end(), [](const Scored& s) { return s.label == 1; });
        const bool neg = std::any_of(set.begin(), set.end(), [](const Scored& s) { return s.label == 0; });
        if (pos && neg) return set;
    }
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Worst relative error between the analytic batch gradient and central
/// differences over every parameter of the net.
inline double siamese_gradient_check(const MetricNet& net, const Eigen::MatrixXd& e1, const Eigen::MatrixXd& e2,
                                     const std::vector<std::uint8_t>& labels, double margin, double h = 1e-5) {
    const auto analytic = batch_loss_and_gradient(net, e1, e2, labels, margin).gradient;
    auto loss_at = [&](const MetricNet& n) {
        double total = 0.0;
        for (Eigen::Index c = 0; c < e1.cols(); ++c) {
            total += contrastive_loss(forward(n, e1.col(c)), forward(n, e2.col(c)), labels[static_cast<std::size_t>(c)], margin);
        }
        return total / static_cast<double>(e1.cols());
    };
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers(); ++l) {
        for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) {
            MetricNet plus = net, minus = net;
            plus.weights[l].data()[i] += h;
            minus.weights[l].data()[i] -= h;
            const double numeric = (loss_at(plus) - loss_at(minus)) / (2 * h);
            worst = std::max(worst, relative_error(analytic.weights[l].data()[i], numeric));
        }
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) {
            MetricNet plus = net, minus = net;
            plus.biases[l](i) += h;
            minus.biases[l](i) -= h;
            const double numeric = (loss_at(plus) - loss_at(minus)) / (2 * h);
            worst = std::max(worst, relative_error(analytic.biases[l](i), numeric));
        }
    }
    return worst;
}

/// Weighted cross-entropy written out term by term, independent of the
/// trainer's vectorized objective.
inline double reference_logistic_loss(const Eigen::Vector4d& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      double pos_weight, double l2) {
    double total = 0.0, weight = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-x.row(i).dot(theta)));
        const double w = y(i) > 0.5 ? pos_weight : 1.0;
        total += w * (y(i) > 0.5 ? -std::log(p) : -std::log(1.0 - p));
        weight += w;
    }
    return total / weight + 0.5 * l2 * (theta(1) * theta(1) + theta(2) * theta(2) + theta(3) * theta(3));
}

inline double logistic_gradient_check(const Eigen::Vector4d& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      double pos_weight, double l2, double h = 1e-5) {
    const auto analytic = logistic_objective(theta, x, y, pos_weight, l2).gradient;
    double worst = 0.0;
    for (int k = 0; k < 4; ++k) {
        Eigen::Vector4d plus = theta, minus = theta;
        plus(k) += h;
        minus(k) -= h;
        const double numeric =
            (reference_logistic_loss(plus, x, y, pos_weight, l2) - reference_logistic_loss(minus, x, y, pos_weight, l2)) / (2 * h);
        worst = std::max(worst, relative_error(analytic(k), numeric, 1e-9));
    }
    return worst;
}

/// The fixed 3-pair batch used by the Siamese gradient oracle: one positive,
/// one negative inside the margin, one negative outside it.
struct SiameseFixture {
    MetricNet net;
    Eigen::MatrixXd e1, e2;
    std::vector<std::uint8_t> labels{1, 0, 0};
    double margin = 1.0;
};

inline SiameseFixture siamese_fixture(double max_norm = 0.0) {
    SiameseFixture f;
    f.net = make_metric_net({4, 6, 5, 3}, 2024, std::nullopt, max_norm);
    f.e1.resize(4, 3);
    f.e2.resize(4, 3);
    f.e1 << 0.3, -0.2, 0.9,
            0.5, 0.4, -0.6,
            -0.1, 0.8, 0.2,
            0.7, -0.3, 0.4;
    f.e2 << 0.2, 0.1, -0.9,
            0.6, 0.3, 0.8,
            -0.3, 0.7, -0.4,
            0.5, -0.2, 0.1;
    // Margin chosen between the two negatives' distances so one hinge is active.
    const double d1 = (forward(f.net, f.e1.col(1)) - forward(f.net, f.e2.col(1))).norm();
    const double d2 = (forward(f.net, f.e1.col(2)) - forward(f.net, f.e2.col(2))).norm();
    f.margin = 0.5 * (d1 + d2);
    if (d1 > d2) {
        f.e1.col(1).swap(f.e1.col(2));
        f.e2.col(1).swap(f.e2.col(2));
    }
    return f;
}

/// Ten rows of the logistic gradient fixture.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> logistic_fixture() {
    Eigen::MatrixXd x(10, 4);
    Eigen::VectorXd y(10);
    Rng rng(99);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = uniform(rng, 0.0, 2.0);
        x(i, 2) = uniform01(rng);
        x(i, 3) = uniform01(rng);
        y(i) = i % 3 == 0 ? 1.0 : 0.0;
    }
    return {x, y};
}

// ---------------------------------------------------------------------------
// Random catalogs and purchase histories for temporal-hygiene properties.

struct RandomWorld {
    Catalog catalog;
    std::vector<Transaction> transactions;
};

inline RandomWorld random_world(Rng& rng) {
    RandomWorld w;
    const Date origin = parse_date("2016-01-01");
    const auto n_movies = 2 + uniform_below(rng, 12);
    std::vector<RawMovie> movies;
    for (std::uint64_t m = 0; m < n_movies; ++m) {
        RawMovie movie;
        movie.id = "m" + std::to_string(m);
        // Few distinct days so same-day releases occur.
        movie.release_date = origin + std::chrono::days{static_cast<int>(uniform_below(rng, 60))};
        movies.push_back(movie);
    }
    w.catalog = Catalog(movies);
    const auto n_customers = 1 + uniform_below(rng, 6);
    for (std::uint64_t c = 0; c < n_customers; ++c) {
        for (const auto& m : w.catalog) {
            if (uniform01(rng) < 0.4) {
                const auto delay = std::chrono::seconds{static_cast<long long>(uniform_below(rng, 40 * 86400))};
                w.transactions.push_back({"c" + std::to_string(c), m.id, start_of(m.release_date) + delay});
            }
        }
    }
    return w;
}

inline VectorMap random_target_vectors(const Catalog& catalog, Rng& rng, int dim = 3) {
    VectorMap out;
    for (const auto& m : catalog) {
        Eigen::VectorXd z(dim);
        for (int i = 0; i < dim; ++i) z(i) = uniform(rng, -1.0, 1.0);
        out.emplace(m.id, z);
    }
    return out;
}

/// Counts pairs that break the release-order filter.
inline std::size_t pair_violations(const PairDataset& data, const Catalog& catalog) {
    std::size_t bad = 0;
    for (const auto& r : data.rows) {
        if (!(catalog[r.movie_a].release_date < catalog[r.movie_b].release_date) || r.movie_a == r.movie_b) ++bad;
    }
    return bad;
}

/// Counts feature rows that change when the customer's purchases on or after
/// the movie's release are dropped, or that have no purchase before release.
inline std::size_t feature_violations(const FeatureSet& features, const std::vector<CustomerProfile>& profiles,
                                      const Catalog& catalog, const VectorMap& zs, double delta, double lookback) {
    std::map<std::string, const CustomerProfile*> by_id;
    for (const auto& p : profiles) by_id[p.customer_id] = &p;
    std::size_t bad = 0;
    for (const auto& row : features.rows) {
        const auto& release = catalog.at(row.movie_id).release_date;
        CustomerProfile past{row.customer_id, {}};
        for (const auto& p : by_id.at(row.customer_id)->history) {
            if (p.when < start_of(release)) past.history.push_back(p);
        }
        if (past.history.empty()) {
            ++bad;
            continue;
        }
        const auto cv = customer_vector(past, zs, delta, release);
        const auto fr = freq_recency(past, release, lookback);
        const double phi = (zs.at(row.movie_id) - cv.z).norm();
        if (phi != row.phi || fr.frequency != row.frequency || fr.recency != row.recency) ++bad;
    }
    return bad;
}

// ---------------------------------------------------------------------------
// Published comparable-movie lists, top ten each, predicted then actual.

inline CompsList comps_list(const std::vector<std::string>& titles) {
    CompsList out;
    int count = static_cast<int>(titles.size());
    for (const auto& t : titles) out.push_back({t, count--});
    return out;
}

inline std::pair<CompsList, CompsList> greatest_showman_comps() {
    return {comps_list({"Beauty & the Beast", "La La Land", "Cinderella", "Wonder Woman", "Guardians of the Galaxy 2",
                        "Pitch Perfect 2", "Passengers", "Fantastic Beasts and ...", "Annie", "A Dog's Purpose"}),
            comps_list({"Beauty & the Beast", "La La Land", "Cinderella", "Pitch Perfect 2", "Hidden Figures", "Annie",
                        "Passengers", "Wonder Woman", "Fantastic Beasts and ...", "Wonder"})};
}

inline std::pair<CompsList, CompsList> ferdinand_comps() {
    return {comps_list({"The Boss Baby", "The Secret Life of Pets", "Sing", "Finding Dory", "Moana", "Zootopia",
                        "Hotel Transylvania 2", "Inside Out", "Despicable Me 3", "Beauty & the Beast"}),
            comps_list({"The Boss Baby", "Sing", "The Secret Life of Pets", "Moana", "Coco", "Cars 3", "Trolls",
                        "Despicable Me 3", "Captain Underpants", "Finding Dory"})};
}

}
