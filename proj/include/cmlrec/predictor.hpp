#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "catalog.hpp"
#include "error.hpp"
#include "profiles.hpp"

namespace cmlrec {

/// One (customer, movie) training or scoring row. F and R are kept in raw
/// units; the model scales them.
struct FeatureRow {
    std::string customer_id;
    std::string movie_id;
    double phi = 0.0;
    int frequency = 0;
    double recency = 0.0;
    int label = 0;
};

struct FeatureSet {
    std::vector<FeatureRow> rows;
    std::size_t skipped = 0;  // cold (customer, movie) combinations
};

/// Min-max bounds taken from the training rows; scaled values are clamped
/// to [0, 1].
struct FeatureScaling {
    double f_min = 0, f_max = 0, r_min = 0, r_max = 0;

    static double scale(double v, double lo, double hi) { return hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0; }
    double frequency(double f) const { return scale(f, f_min, f_max); }
    double recency(double r) const { return scale(r, r_min, r_max); }
};

struct LogisticConfig {
    std::optional<double> pos_weight;  // unset: #negatives / #positives
    int epochs = 1000;
    double learning_rate = 1.0;
    double momentum = 0.9;
    double l2 = 1e-4;
    std::uint64_t seed = 1;
    bool use_distance = true;  // false trains the frequency-recency baseline
};

struct LogisticModel {
    double alpha = 0, beta = 0, gamma_f = 0, gamma_r = 0;
    double pos_weight = 1.0;
    FeatureScaling scaling;
    double phi_mean = 0.0;  // fallback distance for cold customers
    LogisticConfig config;

    Eigen::Vector4d coefficients() const { return {alpha, beta, gamma_f, gamma_r}; }
};

/// Rows for every (customer, movie) where the customer bought something
/// before the movie's release. phi is the distance between the movie's
/// target vector and the customer vector referenced to that release date;
/// the label says whether the customer ever bought the movie.
inline FeatureSet build_feature_rows(const std::vector<CustomerProfile>& profiles, const std::vector<RawMovie>& movies,
                                     const VectorMap& movie_zs, double delta, double lookback_days) {
    FeatureSet out;
    for (const auto& profile : profiles) {
        std::unordered_set<std::string> bought;
        for (const auto& p : profile.history) {
            bought.insert(p.movie_id);
        }
        for (const auto& movie : movies) {
            auto z_movie = movie_zs.find(movie.id);
            if (z_movie == movie_zs.end()) {
                throw Error(ErrorKind::MissingEmbedding, "movie " + movie.id + " has no target vector");
            }
            const Timestamp cutoff = start_of(movie.release_date);
            const bool eligible = std::any_of(profile.history.begin(), profile.history.end(), [&](const Purchase& p) {
                return p.when < cutoff && movie_zs.count(p.movie_id);
            });
            if (!eligible) {
                ++out.skipped;
                continue;
            }
            auto cv = customer_vector(profile, movie_zs, delta, movie.release_date);
            auto fr = freq_recency(profile, movie.release_date, lookback_days);
            out.rows.push_back({profile.customer_id, movie.id, (z_movie->second - cv.z).norm(), fr.frequency, fr.recency,
                                bought.count(movie.id) ? 1 : 0});
        }
    }
    return out;
}

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}

/// Design matrix with columns [1, phi, F_scaled, R_scaled].
inline Eigen::MatrixXd design_matrix(const std::vector<FeatureRow>& rows, const FeatureScaling& scaling) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 4);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x(r, 0) = 1.0;
        x(r, 1) = rows[i].phi;
        x(r, 2) = scaling.frequency(rows[i].frequency);
        x(r, 3) = scaling.recency(rows[i].recency);
    }
    return x;
}

struct LogisticObjective {
    double loss = 0.0;
    Eigen::Vector4d gradient = Eigen::Vector4d::Zero();
};

/// Class-weighted cross-entropy, normalized by the total row weight, plus
/// (l2/2) times the squared norm of the non-intercept coefficients.
/// Positives carry weight pos_weight, negatives weight 1; with
/// pos_weight = 1 this is the plain mean cross-entropy.
inline LogisticObjective logistic_objective(const Eigen::Vector4d& theta, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                            double pos_weight, double l2) {
    LogisticObjective out;
    const Eigen::VectorXd logits = x * theta;
    Eigen::VectorXd residual(logits.size());
    double total_weight = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const double w = y(i) > 0.5 ? pos_weight : 1.0;
        const double s = logits(i);
        // -y log p - (1-y) log(1-p) = softplus(s) - y s
        out.loss += w * (detail::softplus(s) - y(i) * s);
        residual(i) = w * (detail::sigmoid(s) - y(i));
        total_weight += w;
    }
    out.loss /= total_weight;
    out.gradient = x.transpose() * residual / total_weight;
    Eigen::Vector4d penalized = theta;
    penalized(0) = 0.0;
    out.loss += 0.5 * l2 * penalized.squaredNorm();
    out.gradient += l2 * penalized;
    return out;
}

inline FeatureScaling fit_scaling(const std::vector<FeatureRow>& rows) {
    FeatureScaling s;
    if (rows.empty()) {
        return s;
    }
    s.f_min = s.f_max = rows.front().frequency;
    s.r_min = s.r_max = rows.front().recency;
    for (const auto& r : rows) {
        s.f_min = std::min<double>(s.f_min, r.frequency);
        s.f_max = std::max<double>(s.f_max, r.frequency);
        s.r_min = std::min(s.r_min, r.recency);
        s.r_max = std::max(s.r_max, r.recency);
    }
    return s;
}

/// Full-batch gradient descent with Nesterov momentum on the weighted
/// objective. The baseline (use_distance = false) keeps beta at 0.
inline LogisticModel train_logistic(const std::vector<FeatureRow>& rows, const LogisticConfig& config) {
    if (config.epochs < 0 || !(config.learning_rate > 0) || config.momentum < 0 || config.momentum >= 1 || config.l2 < 0) {
        throw Error(ErrorKind::InvalidConfig, "logistic config out of range");
    }
    std::size_t positives = 0;
    double phi_sum = 0.0;
    for (const auto& r : rows) {
        positives += r.label == 1;
        phi_sum += r.phi;
    }
    if (positives == 0 || positives == rows.size()) {
        throw Error(ErrorKind::SingleClass, "logistic rows need both labels");
    }
    LogisticModel model;
    model.config = config;
    model.pos_weight = config.pos_weight.value_or(static_cast<double>(rows.size() - positives) / static_cast<double>(positives));
    if (!(model.pos_weight > 0)) {
        throw Error(ErrorKind::InvalidConfig, "pos_weight must be positive");
    }
    model.scaling = fit_scaling(rows);
    model.phi_mean = phi_sum / static_cast<double>(rows.size());

    const Eigen::MatrixXd x = design_matrix(rows, model.scaling);
    Eigen::VectorXd y(x.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y(static_cast<Eigen::Index>(i)) = rows[i].label;
    }
    Eigen::Vector4d mask(1.0, config.use_distance ? 1.0 : 0.0, 1.0, 1.0);
    Eigen::Vector4d theta = Eigen::Vector4d::Zero();
    Eigen::Vector4d velocity = Eigen::Vector4d::Zero();
    for (int it = 0; it < config.epochs; ++it) {
        const Eigen::Vector4d lookahead = theta + config.momentum * velocity;
        auto obj = logistic_objective(lookahead, x, y, model.pos_weight, config.l2);
        velocity = config.momentum * velocity - config.learning_rate * obj.gradient.cwiseProduct(mask);
        theta += velocity;
    }
    model.alpha = theta(0);
    model.beta = theta(1);
    model.gamma_f = theta(2);
    model.gamma_r = theta(3);
    return model;
}

/// Purchase probability; F and R in raw units. The result is kept inside the
/// open interval (0, 1).
inline double predict(const LogisticModel& model, double phi, double frequency, double recency) {
    const double logit = model.alpha + model.beta * phi + model.gamma_f * model.scaling.frequency(frequency) +
                         model.gamma_r * model.scaling.recency(recency);
    constexpr double eps = std::numeric_limits<double>::epsilon();
    return std::clamp(detail::sigmoid(logit), std::numeric_limits<double>::min(), 1.0 - eps);
}

inline double predict(const LogisticModel& model, const FeatureRow& row) {
    return predict(model, row.phi, row.frequency, row.recency);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const LogisticConfig& c) {
    nlohmann::json j{{"epochs", c.epochs},           {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
                     {"l2", c.l2},                   {"seed", c.seed},                   {"use_distance", c.use_distance},
                     {"pos_weight", nullptr}};
    if (c.pos_weight) {
        j["pos_weight"] = *c.pos_weight;
    }
    return j;
}

inline nlohmann::json to_json(const LogisticModel& m) {
    return nlohmann::json{{"format", "cmlrec-logistic"},
                          {"version", 1},
                          {"alpha", m.alpha},
                          {"beta", m.beta},
                          {"gamma_f", m.gamma_f},
                          {"gamma_r", m.gamma_r},
                          {"pos_weight", m.pos_weight},
                          {"phi_mean", m.phi_mean},
                          {"scaling", {{"f_min", m.scaling.f_min}, {"f_max", m.scaling.f_max}, {"r_min", m.scaling.r_min}, {"r_max", m.scaling.r_max}}},
                          {"config", to_json(m.config)}};
}

inline LogisticModel logistic_from_json(const nlohmann::json& j) {
    try {
        LogisticModel m;
        m.alpha = j.at("alpha").get<double>();
        m.beta = j.at("beta").get<double>();
        m.gamma_f = j.at("gamma_f").get<double>();
        m.gamma_r = j.at("gamma_r").get<double>();
        m.pos_weight = j.at("pos_weight").get<double>();
        m.phi_mean = j.at("phi_mean").get<double>();
        const auto& s = j.at("scaling");
        m.scaling = {s.at("f_min").get<double>(), s.at("f_max").get<double>(), s.at("r_min").get<double>(), s.at("r_max").get<double>()};
        const auto& c = j.at("config");
        m.config.epochs = c.at("epochs").get<int>();
        m.config.learning_rate = c.at("learning_rate").get<double>();
        m.config.momentum = c.at("momentum").get<double>();
        m.config.l2 = c.at("l2").get<double>();
        m.config.seed = c.at("seed").get<std::uint64_t>();
        m.config.use_distance = c.at("use_distance").get<bool>();
        if (!c.at("pos_weight").is_null()) {
            m.config.pos_weight = c.at("pos_weight").get<double>();
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("logistic model: ") + e.what());
    }
}

inline void save_logistic(const std::string& path, const LogisticModel& m) {
    std::ofstream out(path, std::ios::binary);
    out << to_json(m).dump(2) << '\n';
}

inline LogisticModel load_logistic(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
    return logistic_from_json(j);
}

// ---------------------------------------------------------------------------
// Feature CSV: customer_id,movie_id,phi,F,R,label

inline void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    out << "customer_id,movie_id,phi,F,R,label\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.customer_id << ',' << r.movie_id << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.phi);
        out << buf << ',' << r.frequency << ',';
        std::snprintf(buf, sizeof buf, "%.17g", r.recency);
        out << buf << ',' << r.label << '\n';
    }
}

inline std::vector<FeatureRow> read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    std::vector<FeatureRow> rows;
    std::string line;
    std::getline(in, line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto f = detail::split_csv_line(line);
        if (f.size() != 6) {
            throw Error(ErrorKind::ParseError, "features line " + std::to_string(lineno));
        }
        try {
            rows.push_back({f[0], f[1], std::stod(f[2]), std::stoi(f[3]), std::stod(f[4]), std::stoi(f[5])});
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, "features line " + std::to_string(lineno));
        }
    }
    return rows;
}

}
