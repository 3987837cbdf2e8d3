#include <gtest/gtest.h>

#include <sstream>

#include "cmlrec/metric.hpp"
#include "../support.hpp"

using namespace cmlrec;

namespace {

MetricNet hand_net() {
    MetricNet net;
    net.layer_dims = {2, 2, 2};
    Eigen::MatrixXd w1(2, 2), w2(2, 2);
    w1 << 1, -1,
          2, 0.5;
    w2 << 1, 2,
          -1, 0;
    net.weights = {w1, w2};
    net.biases = {Eigen::Vector2d(0.5, -1), Eigen::Vector2d(0, 0.25)};
    return net;
}

// Two clusters of movies around (+1, ..) and (-1, ..) in a 4-D input space.
struct TwoClusters {
    MovieVectors embeddings;
    std::vector<PairInstance> pairs;
    std::vector<int> cluster;
};

TwoClusters two_clusters() {
    TwoClusters t;
    Rng rng(3);
    for (int m = 0; m < 20; ++m) {
        const int c = m % 2;
        Eigen::VectorXd e(4);
        for (int i = 0; i < 4; ++i) e(i) = uniform(rng, -0.6, 0.6);
        e(0) += c ? 1.0 : -1.0;
        t.embeddings.push_back(e);
        t.cluster.push_back(c);
    }
    for (std::uint32_t a = 0; a < 20; ++a) {
        for (std::uint32_t b = 0; b < 20; ++b) {
            if (a != b) t.pairs.push_back({0, a, b, static_cast<std::uint8_t>(t.cluster[a] == t.cluster[b])});
        }
    }
    return t;
}

std::pair<double, double> within_cross(const MetricNet& net, const TwoClusters& t) {
    double within = 0, cross = 0;
    int nw = 0, nc = 0;
    for (std::size_t a = 0; a < 20; ++a) {
        for (std::size_t b = a + 1; b < 20; ++b) {
            const double d = distance(net, *t.embeddings[a], *t.embeddings[b]);
            (t.cluster[a] == t.cluster[b] ? within : cross) += d;
            ++(t.cluster[a] == t.cluster[b] ? nw : nc);
        }
    }
    return {within / nw, cross / nc};
}

TrainConfig small_config() {
    TrainConfig c;
    c.hidden = {8};
    c.output_dim = 3;
    c.epochs = 30;
    c.batch_size = 16;
    c.seed = 4;
    return c;
}

}

TEST(Forward, IdentityAndZero) {
    MetricNet id;
    id.layer_dims = {3, 3};
    id.weights = {Eigen::MatrixXd::Identity(3, 3)};
    id.biases = {Eigen::VectorXd::Zero(3)};
    const Eigen::Vector3d e(0.3, -2, 7);
    EXPECT_EQ(forward(id, e), Eigen::VectorXd(e));

    auto zero = make_metric_net({3, 5, 2}, 1, 0.0);
    EXPECT_EQ(forward(zero, e), Eigen::VectorXd::Zero(2));
}

TEST(Forward, HandComputedTwoLayer) {
    // hidden pre-activation (-0.5, 2) -> ReLU (0, 2); output (0 + 4, 0.25)
    EXPECT_EQ(forward(hand_net(), Eigen::Vector2d(1, 2)), Eigen::Vector2d(4, 0.25));
}

TEST(Forward, MaxNormClipsOutput) {
    auto net = hand_net();
    net.max_norm = 2.0;
    const auto z = forward(net, Eigen::Vector2d(1, 2));
    EXPECT_NEAR(z.norm(), 2.0, 1e-15);
    EXPECT_NEAR(z(0) / z(1), 16.0, 1e-12);
}

TEST(Forward, RejectsWrongInputSize) {
    EXPECT_THROW(forward(hand_net(), Eigen::Vector3d(1, 2, 3)), Error);
}

TEST(ContrastiveLoss, Examples) {
    const Eigen::Vector2d a(0, 0), b(3, 4);
    EXPECT_EQ(contrastive_loss(b, b, 1, 1.0), 0.0);
    EXPECT_EQ(contrastive_loss(a, b, 0, 5.0), 0.0);
    EXPECT_EQ(contrastive_loss(a, b, 0, 6.0), 1.0);
    EXPECT_EQ(contrastive_loss(a, b, 1, 6.0), 25.0);
}

TEST(ContrastiveLoss, Monotone) {
    const Eigen::Vector2d o(0, 0);
    double prev_pos = -1, prev_neg = 1e9;
    for (double d = 0; d < 3; d += 0.1) {
        const Eigen::Vector2d z(d, 0);
        const double pos = contrastive_loss(o, z, 1, 2.0), neg = contrastive_loss(o, z, 0, 2.0);
        EXPECT_GT(pos, prev_pos);
        EXPECT_LE(neg, prev_neg);
        prev_pos = pos;
        prev_neg = neg;
    }
}

TEST(Gradient, MatchesFiniteDifferences) {
    const auto f = oracle::siamese_fixture();
    EXPECT_LT(oracle::siamese_gradient_check(f.net, f.e1, f.e2, f.labels, f.margin), 1e-4);
}

TEST(Gradient, MatchesFiniteDifferencesWithClipping) {
    auto f = oracle::siamese_fixture();
    double smallest = 1e9;
    for (Eigen::Index c = 0; c < 3; ++c) {
        smallest = std::min({smallest, forward(f.net, f.e1.col(c)).norm(), forward(f.net, f.e2.col(c)).norm()});
    }
    f.net.max_norm = 0.5 * smallest;
    EXPECT_LT(oracle::siamese_gradient_check(f.net, f.e1, f.e2, f.labels, 2.5 * f.net.max_norm), 1e-4);
}

TEST(Gradient, BatchLossIsMean) {
    const auto f = oracle::siamese_fixture();
    double total = 0;
    for (Eigen::Index c = 0; c < 3; ++c) {
        total += contrastive_loss(forward(f.net, f.e1.col(c)), forward(f.net, f.e2.col(c)), f.labels[static_cast<std::size_t>(c)], f.margin);
    }
    EXPECT_NEAR(batch_loss_and_gradient(f.net, f.e1, f.e2, f.labels, f.margin).loss, total / 3, 1e-15);
}

TEST(Distance, MetricAxioms) {
    const auto net = make_metric_net({4, 6, 3}, 8);
    Rng rng(1);
    auto draw = [&] {
        Eigen::VectorXd v(4);
        for (int i = 0; i < 4; ++i) v(i) = uniform(rng, -2, 2);
        return v;
    };
    for (int i = 0; i < 500; ++i) {
        const auto a = draw(), b = draw(), c = draw();
        EXPECT_EQ(distance(net, a, a), 0.0);
        EXPECT_EQ(distance(net, a, b), distance(net, b, a));
        EXPECT_LE(distance(net, a, c), distance(net, a, b) + distance(net, b, c) + 1e-12);
    }
}

TEST(TrainMetric, ZeroEpochsReturnsInitialNet) {
    const auto t = two_clusters();
    auto c = small_config();
    c.epochs = 0;
    EXPECT_EQ(train_metric(t.pairs, t.embeddings, c).net, initial_metric_net(4, c));
}

TEST(TrainMetric, SeparatesClusters) {
    const auto t = two_clusters();
    const auto c = small_config();
    const auto [w0, x0] = within_cross(initial_metric_net(4, c), t);
    const auto result = train_metric(t.pairs, t.embeddings, c);
    const auto [w1, x1] = within_cross(result.net, t);
    EXPECT_LT(w1, x1);
    EXPECT_GT(x1 / w1, x0 / w0);
    EXPECT_LT(result.epoch_loss.back(), result.epoch_loss.front());
}

TEST(TrainMetric, Reproducible) {
    const auto t = two_clusters();
    auto c = small_config();
    c.epochs = 3;
    EXPECT_EQ(train_metric(t.pairs, t.embeddings, c).net, train_metric(t.pairs, t.embeddings, c).net);
}

TEST(TrainMetric, Errors) {
    auto t = two_clusters();
    auto c = small_config();
    auto kind_of = [&](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::ParseError;
    };
    std::vector<PairInstance> all_pos{{0, 0, 2, 1}};
    EXPECT_EQ(kind_of([&] { train_metric(all_pos, t.embeddings, c); }), ErrorKind::DegenerateDataset);
    c.margin = 0;
    EXPECT_EQ(kind_of([&] { train_metric(t.pairs, t.embeddings, c); }), ErrorKind::InvalidConfig);
    c.margin = 1;
    t.embeddings[3].reset();
    EXPECT_EQ(kind_of([&] { train_metric(t.pairs, t.embeddings, c); }), ErrorKind::MissingEmbedding);
    t.embeddings[3] = Eigen::VectorXd::Zero(5);
    EXPECT_EQ(kind_of([&] { train_metric(t.pairs, t.embeddings, c); }), ErrorKind::DimensionMismatch);
}

TEST(MetricIo, BinaryRoundTrip) {
    auto net = make_metric_net({5, 7, 3}, 12, std::nullopt, 1.5);
    std::stringstream buf;
    save_metric_net(buf, net);
    EXPECT_EQ(load_metric_net(buf), net);
}
