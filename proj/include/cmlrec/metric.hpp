#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "error.hpp"
#include "pairs.hpp"
#include "random.hpp"

namespace cmlrec {

/// Feed-forward map from embedding space to target space. Hidden layers use
/// ReLU, the output layer is linear. When max_norm > 0 outputs are projected
/// onto the ball of that radius.
struct MetricNet {
    std::vector<int> layer_dims;
    std::vector<Eigen::MatrixXd> weights;  // layer l: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;
    double max_norm = 0.0;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    std::size_t layers() const { return weights.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
        }
        return n;
    }

    bool operator==(const MetricNet& other) const {
        if (layer_dims != other.layer_dims || max_norm != other.max_norm) {
            return false;
        }
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (weights[l] != other.weights[l] || biases[l] != other.biases[l]) {
                return false;
            }
        }
        return true;
    }
};

struct TrainConfig {
    double margin = 1.0;
    int batch_size = 64;
    int epochs = 5;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
    /// Half-width of the uniform weight init; unset means sqrt(6/(fan_in+fan_out)) per layer.
    std::optional<double> init_scale;
    std::vector<int> hidden = {64};
    int output_dim = 32;
    double max_norm = 0.0;
};

/// Zero-bias net with weights uniform in [-s, s].
inline MetricNet make_metric_net(std::vector<int> layer_dims, std::uint64_t seed, std::optional<double> init_scale = std::nullopt,
                                 double max_norm = 0.0) {
    if (layer_dims.size() < 2 || std::any_of(layer_dims.begin(), layer_dims.end(), [](int d) { return d <= 0; })) {
        throw Error(ErrorKind::InvalidConfig, "layer dims must list at least two positive sizes");
    }
    MetricNet net;
    net.layer_dims = std::move(layer_dims);
    net.max_norm = max_norm;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        const int in = net.layer_dims[l];
        const int out = net.layer_dims[l + 1];
        const double s = init_scale.value_or(std::sqrt(6.0 / (in + out)));
        Eigen::MatrixXd w(out, in);
        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) {
                w(r, c) = uniform(rng, -s, s);
            }
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    return net;
}

namespace detail {

/// Activations of every layer for a batch (one column per example).
/// acts[0] is the input, acts[l] the output of layer l, and `raw_out` the
/// linear output before the optional norm clip.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> acts;
    Eigen::MatrixXd raw_out;
};

inline ForwardCache forward_cached(const MetricNet& net, const Eigen::MatrixXd& x) {
    ForwardCache cache;
    cache.acts.reserve(net.layers() + 1);
    cache.acts.push_back(x);
    for (std::size_t l = 0; l < net.layers(); ++l) {
        Eigen::MatrixXd a = net.weights[l] * cache.acts.back();
        a.colwise() += net.biases[l];
        if (l + 1 < net.layers()) {
            a = a.cwiseMax(0.0);
        }
        cache.acts.push_back(std::move(a));
    }
    cache.raw_out = cache.acts.back();
    if (net.max_norm > 0) {
        auto& z = cache.acts.back();
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            const double n = z.col(c).norm();
            if (n > net.max_norm) {
                z.col(c) *= net.max_norm / n;
            }
        }
    }
    return cache;
}

}

inline Eigen::MatrixXd forward_batch(const MetricNet& net, const Eigen::MatrixXd& x) {
    if (x.rows() != net.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "input has " + std::to_string(x.rows()) + " rows, net expects " + std::to_string(net.input_dim()));
    }
    return std::move(detail::forward_cached(net, x).acts.back());
}

/// Target-space vector z = f(e).
inline Eigen::VectorXd forward(const MetricNet& net, const Eigen::VectorXd& e) {
    return forward_batch(net, e);
}

inline double distance(const MetricNet& net, const Eigen::VectorXd& e_a, const Eigen::VectorXd& e_b) {
    if (e_a.size() != e_b.size()) {
        throw Error(ErrorKind::DimensionMismatch, "embedding sizes differ");
    }
    return (forward(net, e_a) - forward(net, e_b)).norm();
}

/// y * d^2 + (1 - y) * max(0, margin - d)^2 with d = |z1 - z2|.
inline double contrastive_loss(const Eigen::VectorXd& z1, const Eigen::VectorXd& z2, int label, double margin) {
    const double d = (z1 - z2).norm();
    if (label == 1) {
        return d * d;
    }
    const double hinge = std::max(0.0, margin - d);
    return hinge * hinge;
}

/// Parameter-shaped gradient container.
struct NetGradient {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    explicit NetGradient(const MetricNet& net) {
        for (std::size_t l = 0; l < net.layers(); ++l) {
            weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
            biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
        }
    }
};

namespace detail {

inline void backward(const MetricNet& net, const ForwardCache& cache, Eigen::MatrixXd grad_out, NetGradient& grad) {
    if (net.max_norm > 0) {
        for (Eigen::Index c = 0; c < grad_out.cols(); ++c) {
            const auto raw = cache.raw_out.col(c);
            const double n = raw.norm();
            if (n > net.max_norm) {
                // d(r u/|u|)/du = (r/|u|)(I - u u^T/|u|^2)
                const Eigen::VectorXd g = grad_out.col(c);
                grad_out.col(c) = (net.max_norm / n) * (g - raw * (raw.dot(g) / (n * n)));
            }
        }
    }
    Eigen::MatrixXd delta = std::move(grad_out);
    for (std::size_t l = net.layers(); l-- > 0;) {
        grad.weights[l].noalias() += delta * cache.acts[l].transpose();
        grad.biases[l].noalias() += delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd prev = net.weights[l].transpose() * delta;
            delta = prev.cwiseProduct((cache.acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
}

}

struct BatchResult {
    double loss = 0.0;
    NetGradient gradient;
};

/// Mean contrastive loss over a batch of pairs (columns of e1, e2) and its
/// gradient. Both branches share the parameters, so their gradients add.
inline BatchResult batch_loss_and_gradient(const MetricNet& net, const Eigen::MatrixXd& e1, const Eigen::MatrixXd& e2,
                                           const std::vector<std::uint8_t>& labels, double margin) {
    const auto batch = e1.cols();
    if (e2.cols() != batch || static_cast<Eigen::Index>(labels.size()) != batch || batch == 0) {
        throw Error(ErrorKind::DimensionMismatch, "batch sizes disagree");
    }
    if (e1.rows() != net.input_dim() || e2.rows() != net.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "embedding size does not match net input");
    }
    auto c1 = detail::forward_cached(net, e1);
    auto c2 = detail::forward_cached(net, e2);
    const Eigen::MatrixXd diff = c1.acts.back() - c2.acts.back();
    Eigen::MatrixXd g1(diff.rows(), batch);
    double loss = 0.0;
    const double scale = 1.0 / static_cast<double>(batch);
    for (Eigen::Index c = 0; c < batch; ++c) {
        const double d = diff.col(c).norm();
        if (labels[c] == 1) {
            loss += d * d;
            g1.col(c) = 2.0 * scale * diff.col(c);
        } else if (d < margin) {
            loss += (margin - d) * (margin - d);
            // Subgradient 0 at d == 0 where the direction is undefined.
            g1.col(c) = d > 0 ? Eigen::VectorXd(-2.0 * scale * (margin - d) / d * diff.col(c))
                              : Eigen::VectorXd::Zero(diff.rows());
        } else {
            g1.col(c).setZero();
        }
    }
    BatchResult result{loss * scale, NetGradient(net)};
    detail::backward(net, c1, g1, result.gradient);
    detail::backward(net, c2, -g1, result.gradient);
    return result;
}

inline void sgd_step(MetricNet& net, const NetGradient& grad, double lr) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
        net.weights[l].noalias() -= lr * grad.weights[l];
        net.biases[l].noalias() -= lr * grad.biases[l];
    }
}

/// Movie vectors indexed by catalog position; empty entries are movies that
/// could not be embedded.
using MovieVectors = std::vector<std::optional<Eigen::VectorXd>>;

/// The untrained net train_metric starts from for inputs of size `input_dim`.
inline MetricNet initial_metric_net(int input_dim, const TrainConfig& config) {
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(config.output_dim);
    Rng rng(derive_seed(config.seed, "init"));
    return make_metric_net(std::move(dims), rng(), config.init_scale, config.max_norm);
}

struct MetricTrainResult {
    MetricNet net;
    std::vector<double> epoch_loss;
};

/// Mini-batch SGD on the mean contrastive loss, reshuffling every epoch.
inline MetricTrainResult train_metric(const std::vector<PairInstance>& pairs, const MovieVectors& embeddings,
                                      const TrainConfig& config) {
    if (!(config.margin > 0) || config.batch_size < 1 || config.epochs < 0 || !(config.learning_rate > 0)) {
        throw Error(ErrorKind::InvalidConfig, "metric train config out of range");
    }
    bool has_pos = false, has_neg = false;
    int dim = -1;
    for (const auto& p : pairs) {
        (p.label ? has_pos : has_neg) = true;
        for (auto m : {p.movie_a, p.movie_b}) {
            if (m >= embeddings.size() || !embeddings[m]) {
                throw Error(ErrorKind::MissingEmbedding, "movie index " + std::to_string(m));
            }
            if (dim < 0) {
                dim = static_cast<int>(embeddings[m]->size());
            } else if (embeddings[m]->size() != dim) {
                throw Error(ErrorKind::DimensionMismatch, "embeddings have inconsistent sizes");
            }
        }
    }
    if (!has_pos || !has_neg) {
        throw Error(ErrorKind::DegenerateDataset, "pairs must contain both labels");
    }

    MetricTrainResult result{initial_metric_net(dim, config), {}};
    Rng rng(config.seed);

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    const auto bs = static_cast<std::size_t>(config.batch_size);
    Eigen::MatrixXd e1, e2;
    std::vector<std::uint8_t> labels;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle(order, rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t n = std::min(bs, order.size() - start);
            e1.resize(dim, static_cast<Eigen::Index>(n));
            e2.resize(dim, static_cast<Eigen::Index>(n));
            labels.resize(n);
            for (std::size_t k = 0; k < n; ++k) {
                const auto& p = pairs[order[start + k]];
                e1.col(static_cast<Eigen::Index>(k)) = *embeddings[p.movie_a];
                e2.col(static_cast<Eigen::Index>(k)) = *embeddings[p.movie_b];
                labels[k] = p.label;
            }
            auto step = batch_loss_and_gradient(result.net, e1, e2, labels, config.margin);
            total += step.loss * static_cast<double>(n);
            sgd_step(result.net, step.gradient, config.learning_rate);
        }
        result.epoch_loss.push_back(total / static_cast<double>(pairs.size()));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Serialization. Little-endian layout:
//   magic "CMLMETRC", u32 version, u32 number of layer dims, u64 dims...,
//   f64 max_norm, then per layer the row-major weight matrix followed by the
//   bias vector, all f64.

inline constexpr std::array<char, 8> kMetricMagic{'C', 'M', 'L', 'M', 'E', 'T', 'R', 'C'};
inline constexpr std::uint32_t kMetricVersion = 1;

inline void save_metric_net(std::ostream& out, const MetricNet& net) {
    binary::write_magic(out, kMetricMagic);
    binary::write_le<std::uint32_t>(out, kMetricVersion);
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_dims.size()));
    for (int d : net.layer_dims) {
        binary::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    }
    binary::write_f64(out, net.max_norm);
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const auto& w = net.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                binary::write_f64(out, w(r, c));
            }
        }
        for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) {
            binary::write_f64(out, net.biases[l](r));
        }
    }
}

inline MetricNet load_metric_net(std::istream& in) {
    binary::expect_magic(in, kMetricMagic, "metric net");
    auto version = binary::read_le<std::uint32_t>(in);
    if (version != kMetricVersion) {
        throw Error(ErrorKind::ParseError, "unsupported metric net version " + std::to_string(version));
    }
    auto n_dims = binary::read_le<std::uint32_t>(in);
    if (n_dims < 2) {
        throw Error(ErrorKind::ParseError, "metric net needs at least two layer dims");
    }
    MetricNet net;
    for (std::uint32_t i = 0; i < n_dims; ++i) {
        net.layer_dims.push_back(static_cast<int>(binary::read_le<std::uint64_t>(in)));
    }
    net.max_norm = binary::read_f64(in);
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
        Eigen::MatrixXd w(net.layer_dims[l + 1], net.layer_dims[l]);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = binary::read_f64(in);
            }
        }
        Eigen::VectorXd b(net.layer_dims[l + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) {
            b(r) = binary::read_f64(in);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

inline void save_metric_net(const std::string& path, const MetricNet& net) {
    std::ofstream out(path, std::ios::binary);
    save_metric_net(out, net);
}

inline MetricNet load_metric_net(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    return load_metric_net(in);
}

}
