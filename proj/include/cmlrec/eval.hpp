#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "predictor.hpp"
#include "profiles.hpp"
#include "random.hpp"

namespace cmlrec {

struct Scored {
    double score = 0.0;
    int label = 0;
};

using ScoredSet = std::vector<Scored>;

/// Mann-Whitney AUC with ties credited one half. The statistic is
/// accumulated in integers (ranks doubled so midranks stay integral), so the
/// value equals the pairwise count (2 wins + ties) / (2 P N) exactly.
inline double auc(const ScoredSet& set) {
    std::vector<std::size_t> order(set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return set[a].score < set[b].score; });
    std::int64_t positives = 0;
    std::int64_t rank_sum2 = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && set[order[j]].score == set[order[i]].score) {
            ++j;
        }
        // 1-based ranks i+1..j share the midrank (i+1+j)/2.
        const auto midrank2 = static_cast<std::int64_t>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            if (set[order[t]].label == 1) {
                ++positives;
                rank_sum2 += midrank2;
            }
        }
        i = j;
    }
    const std::int64_t negatives = static_cast<std::int64_t>(set.size()) - positives;
    if (positives == 0 || negatives == 0) {
        throw Error(ErrorKind::SingleClass, "AUC needs both classes");
    }
    const std::int64_t u2 = rank_sum2 - positives * (positives + 1);
    return static_cast<double>(u2) / static_cast<double>(2 * positives * negatives);
}

struct PrecisionRecall {
    double precision = 1.0;
    double recall = 0.0;
    bool no_predicted_positives = false;  // precision reported as 1.0
    bool no_actual_positives = false;     // recall reported as 0.0
};

/// Scores at or above the threshold count as predicted positives.
inline PrecisionRecall precision_recall_at_threshold(const ScoredSet& set, double threshold) {
    std::size_t tp = 0, predicted = 0, actual = 0;
    for (const auto& s : set) {
        const bool hit = s.score >= threshold;
        predicted += hit;
        actual += s.label == 1;
        tp += hit && s.label == 1;
    }
    PrecisionRecall out;
    out.no_predicted_positives = predicted == 0;
    out.no_actual_positives = actual == 0;
    out.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 1.0;
    out.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    return out;
}

/// Mean over customers with both classes of the fraction of mis-ordered
/// positive/negative pairs (1 - AUC).
inline double ranking_loss(const std::map<std::string, ScoredSet>& per_customer) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& [customer, set] : per_customer) {
        const bool has_pos = std::any_of(set.begin(), set.end(), [](const Scored& s) { return s.label == 1; });
        const bool has_neg = std::any_of(set.begin(), set.end(), [](const Scored& s) { return s.label != 1; });
        if (has_pos && has_neg) {
            total += 1.0 - auc(set);
            ++counted;
        }
    }
    if (counted == 0) {
        throw Error(ErrorKind::SingleClass, "no customer has both classes");
    }
    return total / static_cast<double>(counted);
}

// ---------------------------------------------------------------------------
// Comparable movies

struct CompEntry {
    std::string movie_id;
    int count = 0;

    bool operator==(const CompEntry&) const = default;
};

/// Ranked by count descending, then movie id ascending.
using CompsList = std::vector<CompEntry>;

struct CustomerScore {
    std::string customer_id;
    double probability = 0.0;
};

/// Counts, over the given customers, the movies bought strictly before
/// `reference` (each customer counts a movie once) and returns the top k,
/// leaving out `target_movie`.
inline CompsList bubble_up(const std::vector<std::string>& segment, const std::vector<CustomerProfile>& profiles,
                           const std::string& target_movie, Date reference, std::size_t k) {
    std::unordered_map<std::string, const CustomerProfile*> by_id;
    for (const auto& p : profiles) {
        by_id.emplace(p.customer_id, &p);
    }
    std::map<std::string, int> counts;
    const Timestamp cutoff = start_of(reference);
    for (const auto& id : segment) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            continue;
        }
        std::unordered_set<std::string> seen;
        for (const auto& p : it->second->history) {
            if (p.when >= cutoff) {
                break;
            }
            if (p.movie_id != target_movie && seen.insert(p.movie_id).second) {
                ++counts[p.movie_id];
            }
        }
    }
    CompsList out;
    for (const auto& [movie, count] : counts) {
        out.push_back({movie, count});
    }
    std::stable_sort(out.begin(), out.end(), [](const CompEntry& a, const CompEntry& b) { return a.count > b.count; });
    if (out.size() > k) {
        out.resize(k);
    }
    return out;
}

/// The ceil(fraction * N) customers with the highest predicted probability,
/// ties broken by customer id.
inline std::vector<std::string> top_segment(std::vector<CustomerScore> predictions, double segment_fraction) {
    if (!(segment_fraction > 0) || segment_fraction > 1) {
        throw Error(ErrorKind::InvalidConfig, "segment_fraction must lie in (0, 1]");
    }
    if (predictions.empty()) {
        throw Error(ErrorKind::EmptySegment, "no predictions to segment");
    }
    std::sort(predictions.begin(), predictions.end(), [](const CustomerScore& a, const CustomerScore& b) {
        return a.probability != b.probability ? a.probability > b.probability : a.customer_id < b.customer_id;
    });
    const auto n = static_cast<std::size_t>(std::ceil(segment_fraction * static_cast<double>(predictions.size()) - 1e-9));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::max<std::size_t>(n, 1); ++i) {
        out.push_back(predictions[i].customer_id);
    }
    return out;
}

/// Movies that bubble up in the pre-release histories of the customers most
/// likely to buy the target.
inline CompsList comparable_movies(const std::vector<CustomerScore>& predictions, const std::vector<CustomerProfile>& profiles,
                                   const std::string& target_movie, Date target_release, double segment_fraction,
                                   std::size_t k) {
    return bubble_up(top_segment(predictions, segment_fraction), profiles, target_movie, target_release, k);
}

/// Size of the intersection of the two lists' top-k movie ids.
inline std::size_t comps_overlap(const CompsList& predicted, const CompsList& actual, std::size_t k) {
    std::unordered_set<std::string> top;
    for (std::size_t i = 0; i < std::min(k, predicted.size()); ++i) {
        top.insert(predicted[i].movie_id);
    }
    std::size_t shared = 0;
    for (std::size_t i = 0; i < std::min(k, actual.size()); ++i) {
        shared += top.count(actual[i].movie_id);
    }
    return shared;
}

// ---------------------------------------------------------------------------
// 2-D projection and clustering

struct ProjectedPoint {
    std::string id;
    double x = 0.0;
    double y = 0.0;
};

/// Centers the vectors and projects them on the two leading principal
/// directions. Each direction's sign is fixed so that its largest-magnitude
/// loading is positive.
inline std::vector<ProjectedPoint> project_2d(const std::vector<std::pair<std::string, Eigen::VectorXd>>& points) {
    std::vector<ProjectedPoint> out;
    if (points.empty()) {
        return out;
    }
    const auto dim = points.front().second.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), dim);
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].second.size() != dim) {
            throw Error(ErrorKind::DimensionMismatch, "projection inputs differ in size");
        }
        x.row(static_cast<Eigen::Index>(i)) = points[i].second.transpose();
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    const Eigen::MatrixXd& vecs = solver.eigenvectors();  // ascending eigenvalues

    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(dim, 2);
    for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, dim); ++c) {
        Eigen::VectorXd v = vecs.col(dim - 1 - c);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) {
            v = -v;
        }
        basis.col(c) = v;
    }
    const Eigen::MatrixXd proj = x * basis;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out.push_back({points[i].first, proj(r, 0) + 0.0, proj(r, 1) + 0.0});
    }
    return out;
}

struct KMeansResult {
    std::vector<int> labels;
    double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by
/// inertia is returned. Rows of `x` are points.
inline KMeansResult kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts = 10, int max_iter = 200) {
    const auto n = x.rows();
    if (k < 1 || n < k) {
        throw Error(ErrorKind::InvalidConfig, "k-means needs 1 <= k <= number of points");
    }
    Rng rng(seed);
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < restarts; ++run) {
        Eigen::MatrixXd centers(k, x.cols());
        centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(n))));
        Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
        for (int c = 1; c < k; ++c) {
            const double total = d2.sum();
            Eigen::Index pick = 0;
            if (total > 0) {
                double u = uniform01(rng) * total;
                for (pick = 0; pick + 1 < n && u >= d2(pick); ++pick) {
                    u -= d2(pick);
                }
            } else {
                pick = static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(n)));
            }
            centers.row(c) = x.row(pick);
            d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
        }
        std::vector<int> labels(static_cast<std::size_t>(n), -1);
        double inertia = 0.0;
        for (int iter = 0; iter < max_iter; ++iter) {
            bool changed = false;
            inertia = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::Index arg = 0;
                inertia += (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&arg);
                if (labels[static_cast<std::size_t>(i)] != static_cast<int>(arg)) {
                    labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
                    changed = true;
                }
            }
            if (!changed) {
                break;
            }
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
            std::vector<int> sizes(static_cast<std::size_t>(k), 0);
            for (Eigen::Index i = 0; i < n; ++i) {
                sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
                ++sizes[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
            }
            for (int c = 0; c < k; ++c) {
                if (sizes[static_cast<std::size_t>(c)] > 0) {
                    centers.row(c) = sums.row(c) / sizes[static_cast<std::size_t>(c)];
                }
            }
        }
        if (inertia < best.inertia) {
            best.inertia = inertia;
            best.labels = labels;
        }
    }
    return best;
}

/// Fraction of points whose cluster's majority class matches their own.
inline double cluster_purity(const std::vector<int>& clusters, const std::vector<int>& truth) {
    if (clusters.size() != truth.size() || clusters.empty()) {
        throw Error(ErrorKind::DimensionMismatch, "purity inputs differ in size");
    }
    std::map<int, std::map<int, int>> table;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        ++table[clusters[i]][truth[i]];
    }
    int hits = 0;
    for (const auto& [cluster, counts] : table) {
        int best = 0;
        for (const auto& [cls, count] : counts) {
            best = std::max(best, count);
        }
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(clusters.size());
}

/// k-means (k = number of distinct classes) on the projected points, scored
/// by purity against the given classes.
inline double projection_purity(const std::vector<ProjectedPoint>& points, const std::vector<int>& truth, std::uint64_t seed) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(points.size()), 2);
    for (std::size_t i = 0; i < points.size(); ++i) {
        x(static_cast<Eigen::Index>(i), 0) = points[i].x;
        x(static_cast<Eigen::Index>(i), 1) = points[i].y;
    }
    const int k = static_cast<int>(std::unordered_set<int>(truth.begin(), truth.end()).size());
    return cluster_purity(kmeans(x, k, seed).labels, truth);
}

inline void write_projection_csv(const std::string& path, const std::vector<ProjectedPoint>& points) {
    std::ofstream out(path, std::ios::binary);
    out << "movie_id,x,y\n";
    char buf[96];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", p.x, p.y);
        out << p.id << buf;
    }
}

/// Scatter plot; `groups` (optional, same length as points) picks colors.
inline void write_projection_svg(const std::string& path, const std::vector<ProjectedPoint>& points,
                                 const std::vector<int>& groups = {}) {
    static constexpr const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                              "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    constexpr double size = 600.0, pad = 30.0;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (!points.empty()) {
        x0 = x1 = points.front().x;
        y0 = y1 = points.front().y;
        for (const auto& p : points) {
            x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
        }
    }
    const double sx = x1 > x0 ? (size - 2 * pad) / (x1 - x0) : 1.0;
    const double sy = y1 > y0 ? (size - 2 * pad) / (y1 - y0) : 1.0;
    std::ofstream out(path, std::ios::binary);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n"
        << "<rect width=\"600\" height=\"600\" fill=\"white\"/>\n";
    char buf[256];
    for (std::size_t i = 0; i < points.size(); ++i) {
        const int g = i < groups.size() ? groups[i] : 0;
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"%s\"><title>%s</title></circle>\n",
                      pad + (points[i].x - x0) * sx, size - pad - (points[i].y - y0) * sy, palette[std::abs(g) % 10],
                      points[i].id.c_str());
        out << buf;
    }
    out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Class-weight sweep

struct SweepPoint {
    double pos_weight = 1.0;
    double auc = 0.0;
    PrecisionRecall at_threshold;
};

/// Trains one model per candidate class weight and scores each on the
/// evaluation rows.
inline std::vector<SweepPoint> sweep_pos_weight(const std::vector<FeatureRow>& train, const std::vector<FeatureRow>& evaluation,
                                                const std::vector<double>& candidates, LogisticConfig config, double threshold) {
    std::vector<SweepPoint> out;
    for (double w : candidates) {
        config.pos_weight = w;
        auto model = train_logistic(train, config);
        ScoredSet scored;
        for (const auto& r : evaluation) {
            scored.push_back({predict(model, r), r.label});
        }
        out.push_back({w, auc(scored), precision_recall_at_threshold(scored, threshold)});
    }
    return out;
}

}
