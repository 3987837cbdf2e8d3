#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "catalog.hpp"
#include "embedding.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "hashing.hpp"
#include "metric.hpp"
#include "pairs.hpp"
#include "predictor.hpp"
#include "profiles.hpp"
#include "random.hpp"
#include "synth.hpp"
#include "text.hpp"

namespace cmlrec {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration

/// Every pipeline setting. Stage seeds are not configured directly: they are
/// derived from `seed` per stage.
struct PipelineConfig {
    std::uint64_t seed = 42;
    std::string artifacts = "artifacts";
    std::string catalog;       // empty: the synth stage's catalog in the artifact dir
    std::string transactions;  // empty: the synth stage's transactions
    std::string target;        // infer input; empty: holdout.jsonl
    SynthConfig synth;
    std::size_t plot_truncate = 0;
    EmbeddingConfig embedding;
    bool balance = true;
    double negative_ratio = 4.0;
    TrainConfig metric;
    double delta = 0.005;
    double lookback_days = 365.0;
    LogisticConfig logistic;
    double holdout_fraction = 0.15;
    double threshold = 0.5;
    double segment_fraction = 0.05;
    std::size_t comps_k = 10;
    std::string comps_target;  // empty: the held-out movie with the most buyers
    std::vector<double> pos_weight_grid;
};

inline nlohmann::json config_to_json(const PipelineConfig& c) {
    using nlohmann::json;
    json j;
    j["seed"] = c.seed;
    j["artifacts"] = c.artifacts;
    j["inputs"] = {{"catalog", c.catalog}, {"transactions", c.transactions}, {"target", c.target}};
    const auto& s = c.synth;
    j["synth"] = {{"n_movies", s.n_movies},
                  {"n_customers", s.n_customers},
                  {"n_genres", s.n_genres},
                  {"vocab_per_genre", s.vocab_per_genre},
                  {"shared_vocab", s.shared_vocab},
                  {"shared_fraction", s.shared_fraction},
                  {"plot_length", s.plot_length},
                  {"cast_per_movie", s.cast_per_movie},
                  {"cast_pool_per_genre", s.cast_pool_per_genre},
                  {"cast_crossover", s.cast_crossover},
                  {"affinity_concentration", s.affinity_concentration},
                  {"base_rate", s.base_rate},
                  {"activity_sigma", s.activity_sigma},
                  {"appeal_sigma", s.appeal_sigma},
                  {"mean_purchase_delay_days", s.mean_purchase_delay_days},
                  {"start_date", s.start_date},
                  {"end_date", s.end_date}};
    j["text"] = {{"plot_truncate", c.plot_truncate}};
    const auto& e = c.embedding;
    j["embedding"] = {{"dim", e.dim},           {"window", e.window},       {"negatives", e.negatives},
                      {"epochs", e.epochs},     {"learning_rate", e.learning_rate}, {"min_count", e.min_count}};
    j["pairs"] = {{"balance", c.balance}, {"negative_ratio", c.negative_ratio}};
    const auto& m = c.metric;
    j["metric"] = {{"margin", m.margin},
                   {"batch_size", m.batch_size},
                   {"epochs", m.epochs},
                   {"learning_rate", m.learning_rate},
                   {"init_scale", m.init_scale ? json(*m.init_scale) : json(nullptr)},
                   {"hidden", m.hidden},
                   {"output_dim", m.output_dim},
                   {"max_norm", m.max_norm}};
    j["profiles"] = {{"delta", c.delta}, {"lookback_days", c.lookback_days}};
    const auto& l = c.logistic;
    j["logistic"] = {{"pos_weight", l.pos_weight ? json(*l.pos_weight) : json(nullptr)},
                     {"epochs", l.epochs},
                     {"learning_rate", l.learning_rate},
                     {"momentum", l.momentum},
                     {"l2", l.l2},
                     {"pos_weight_grid", c.pos_weight_grid}};
    j["eval"] = {{"holdout_fraction", c.holdout_fraction},
                 {"threshold", c.threshold},
                 {"segment_fraction", c.segment_fraction},
                 {"comps_k", c.comps_k},
                 {"comps_target", c.comps_target}};
    return j;
}

namespace detail {

/// Overlays `patch` on `base`, refusing keys `base` does not have. Keys whose
/// default is null accept any value.
inline void merge_checked(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
    if (!patch.is_object()) {
        throw Error(ErrorKind::ConfigError, "config section '" + path + "' must be an object");
    }
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) {
            throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
        }
        auto& slot = base[it.key()];
        if (slot.is_object()) {
            merge_checked(slot, it.value(), key);
        } else {
            slot = it.value();
        }
    }
}

template <typename T>
T get(const nlohmann::json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::ConfigError, std::string("bad value for '") + section + "." + key + "'");
    }
}

template <typename T>
std::optional<T> get_optional(const nlohmann::json& j, const char* section, const char* key) {
    const auto& v = j.at(section).at(key);
    if (v.is_null()) {
        return std::nullopt;
    }
    return get<T>(j, section, key);
}

}

/// Reads a full or partial config document over the defaults.
inline PipelineConfig config_from_json(const nlohmann::json& patch) {
    nlohmann::json j = config_to_json(PipelineConfig{});
    detail::merge_checked(j, patch, "");
    using detail::get;
    PipelineConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.artifacts = j.at("artifacts").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::ConfigError, "bad value for 'seed' or 'artifacts'");
    }
    c.catalog = get<std::string>(j, "inputs", "catalog");
    c.transactions = get<std::string>(j, "inputs", "transactions");
    c.target = get<std::string>(j, "inputs", "target");
    auto& s = c.synth;
    s.n_movies = get<int>(j, "synth", "n_movies");
    s.n_customers = get<int>(j, "synth", "n_customers");
    s.n_genres = get<int>(j, "synth", "n_genres");
    s.vocab_per_genre = get<int>(j, "synth", "vocab_per_genre");
    s.shared_vocab = get<int>(j, "synth", "shared_vocab");
    s.shared_fraction = get<double>(j, "synth", "shared_fraction");
    s.plot_length = get<int>(j, "synth", "plot_length");
    s.cast_per_movie = get<int>(j, "synth", "cast_per_movie");
    s.cast_pool_per_genre = get<int>(j, "synth", "cast_pool_per_genre");
    s.cast_crossover = get<double>(j, "synth", "cast_crossover");
    s.affinity_concentration = get<double>(j, "synth", "affinity_concentration");
    s.base_rate = get<double>(j, "synth", "base_rate");
    s.activity_sigma = get<double>(j, "synth", "activity_sigma");
    s.appeal_sigma = get<double>(j, "synth", "appeal_sigma");
    s.mean_purchase_delay_days = get<double>(j, "synth", "mean_purchase_delay_days");
    s.start_date = get<std::string>(j, "synth", "start_date");
    s.end_date = get<std::string>(j, "synth", "end_date");
    c.plot_truncate = get<std::size_t>(j, "text", "plot_truncate");
    auto& e = c.embedding;
    e.dim = get<int>(j, "embedding", "dim");
    e.window = get<int>(j, "embedding", "window");
    e.negatives = get<int>(j, "embedding", "negatives");
    e.epochs = get<int>(j, "embedding", "epochs");
    e.learning_rate = get<double>(j, "embedding", "learning_rate");
    e.min_count = get<int>(j, "embedding", "min_count");
    c.balance = get<bool>(j, "pairs", "balance");
    c.negative_ratio = get<double>(j, "pairs", "negative_ratio");
    auto& m = c.metric;
    m.margin = get<double>(j, "metric", "margin");
    m.batch_size = get<int>(j, "metric", "batch_size");
    m.epochs = get<int>(j, "metric", "epochs");
    m.learning_rate = get<double>(j, "metric", "learning_rate");
    m.init_scale = detail::get_optional<double>(j, "metric", "init_scale");
    m.hidden = get<std::vector<int>>(j, "metric", "hidden");
    m.output_dim = get<int>(j, "metric", "output_dim");
    m.max_norm = get<double>(j, "metric", "max_norm");
    c.delta = get<double>(j, "profiles", "delta");
    c.lookback_days = get<double>(j, "profiles", "lookback_days");
    auto& l = c.logistic;
    l.pos_weight = detail::get_optional<double>(j, "logistic", "pos_weight");
    l.epochs = get<int>(j, "logistic", "epochs");
    l.learning_rate = get<double>(j, "logistic", "learning_rate");
    l.momentum = get<double>(j, "logistic", "momentum");
    l.l2 = get<double>(j, "logistic", "l2");
    c.pos_weight_grid = get<std::vector<double>>(j, "logistic", "pos_weight_grid");
    c.holdout_fraction = get<double>(j, "eval", "holdout_fraction");
    c.threshold = get<double>(j, "eval", "threshold");
    c.segment_fraction = get<double>(j, "eval", "segment_fraction");
    c.comps_k = get<std::size_t>(j, "eval", "comps_k");
    c.comps_target = get<std::string>(j, "eval", "comps_target");

    if (c.holdout_fraction <= 0 || c.holdout_fraction >= 1) {
        throw Error(ErrorKind::ConfigError, "eval.holdout_fraction must lie in (0, 1)");
    }
    if (!(c.segment_fraction > 0) || c.segment_fraction > 1) {
        throw Error(ErrorKind::ConfigError, "eval.segment_fraction must lie in (0, 1]");
    }
    if (!(c.delta >= 0) || !(c.lookback_days > 0)) {
        throw Error(ErrorKind::ConfigError, "profiles.delta must be >= 0 and lookback_days > 0");
    }
    return c;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ConfigError, "cannot open config " + path);
    }
    try {
        return config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ConfigError, path + ": " + e.what());
    }
}

/// Applies a `section.key=value` override to a config document. The value is
/// read as JSON when it parses, otherwise as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorKind::ConfigError, "override '" + assignment + "' is not key=value");
    }
    std::string pointer = "/" + assignment.substr(0, eq);
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) {
        value = raw;
    }
    doc[nlohmann::json::json_pointer(pointer)] = value;
}

// ---------------------------------------------------------------------------
// Artifact store with content-hash drift guard

/// Artifacts live in one directory next to `manifest.json`, which records for
/// each artifact its SHA-256, the producing stage, and the hashes of the
/// inputs it was built from. Reading an artifact whose bytes no longer match,
/// or whose recorded inputs have since changed, fails with StaleArtifact.
class ArtifactStore {
public:
    explicit ArtifactStore(fs::path dir) : dir_(std::move(dir)) {
        fs::create_directories(dir_);
        if (fs::exists(manifest_path())) {
            std::ifstream in(manifest_path());
            try {
                in >> manifest_;
            } catch (const nlohmann::json::parse_error&) {
                throw Error(ErrorKind::StaleArtifact, "manifest.json is corrupt");
            }
        } else {
            manifest_ = nlohmann::json::object();
        }
    }

    const fs::path& dir() const noexcept { return dir_; }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    bool exists(const std::string& name) const { return fs::exists(dir_ / name); }

    /// Verifies that each named artifact exists, is unmodified and is not
    /// older than its own recorded inputs.
    void require(const std::string& stage, const std::vector<std::string>& names) const {
        for (const auto& name : names) {
            if (!exists(name)) {
                throw Error(ErrorKind::MissingArtifact, stage + " needs " + name);
            }
            if (!manifest_.contains(name)) {
                throw Error(ErrorKind::StaleArtifact, name + " is not recorded in the manifest");
            }
            const auto& entry = manifest_.at(name);
            if (sha256_file(path(name)) != entry.at("sha256").get<std::string>()) {
                throw Error(ErrorKind::StaleArtifact, name + " changed since stage " + entry.at("stage").get<std::string>() +
                                                          " wrote it");
            }
            for (const auto& [input, hash] : entry.at("inputs").items()) {
                if (input.rfind("external:", 0) == 0) {
                    continue;
                }
                if (!exists(input)) {
                    throw Error(ErrorKind::MissingArtifact, name + " was built from missing " + input);
                }
                if (sha256_file(path(input)) != hash.get<std::string>()) {
                    throw Error(ErrorKind::StaleArtifact, name + " is older than " + input + "; re-run stage " +
                                                              entry.at("stage").get<std::string>());
                }
            }
        }
    }

    /// Records freshly written outputs together with the current hashes of
    /// the inputs they were built from.
    void record(const std::string& stage, const std::vector<std::string>& outputs, const std::vector<std::string>& inputs,
                const std::vector<std::string>& external_inputs = {}) {
        nlohmann::json in = nlohmann::json::object();
        for (const auto& name : inputs) {
            in[name] = sha256_file(path(name));
        }
        for (const auto& p : external_inputs) {
            in["external:" + fs::absolute(p).lexically_normal().string()] = sha256_file(p);
        }
        for (const auto& name : outputs) {
            manifest_[name] = {{"stage", stage}, {"sha256", sha256_file(path(name))}, {"inputs", in}};
        }
        std::ofstream out(manifest_path(), std::ios::binary);
        out << manifest_.dump(2) << '\n';
    }

    std::string hash_of(const std::string& name) const { return manifest_.at(name).at("sha256").get<std::string>(); }

private:
    fs::path manifest_path() const { return dir_ / "manifest.json"; }

    fs::path dir_;
    nlohmann::json manifest_;
};

// ---------------------------------------------------------------------------
// Shared stage helpers

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"synth", "ingest", "embed", "pairs", "train-metric", "features",
                                                "train-predictor", "infer", "eval", "comps", "project"};
    return names;
}

struct Split {
    Date cutoff;
    std::vector<std::string> train;
    std::vector<std::string> holdout;
};

/// Movies released on or after min + (1 - fraction) * (max - min) are held out.
inline Split split_by_release(const Catalog& catalog, double holdout_fraction) {
    if (catalog.empty()) {
        throw Error(ErrorKind::ParseError, "catalog is empty");
    }
    Date lo = catalog[0].release_date, hi = lo;
    for (const auto& m : catalog) {
        lo = std::min(lo, m.release_date);
        hi = std::max(hi, m.release_date);
    }
    const double span = static_cast<double>((hi - lo).count());
    Split s;
    s.cutoff = lo + std::chrono::days{static_cast<int>(std::llround((1.0 - holdout_fraction) * span))};
    for (const auto& m : catalog) {
        (m.release_date >= s.cutoff && span > 0 ? s.holdout : s.train).push_back(m.id);
    }
    return s;
}

inline nlohmann::json to_json(const Split& s) {
    return {{"cutoff", format_date(s.cutoff)}, {"train", s.train}, {"holdout", s.holdout}};
}

inline Split split_from_json(const nlohmann::json& j) {
    return {parse_date(j.at("cutoff").get<std::string>()), j.at("train").get<std::vector<std::string>>(),
            j.at("holdout").get<std::vector<std::string>>()};
}

inline nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path + ": " + e.what());
    }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

/// Embedding-space vectors of every catalog movie (by catalog index); movies
/// with no in-vocabulary token are left empty.
inline MovieVectors embed_catalog(const Catalog& catalog, const EmbeddingTable& table, std::size_t plot_truncate) {
    MovieVectors out(catalog.size());
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        try {
            out[i] = embed_movie(training_sequence(catalog[i], plot_truncate), table, catalog[i].id).e;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NoKnownTokens) {
                throw;
            }
        }
    }
    return out;
}

/// Target-space vectors keyed by movie id.
inline VectorMap target_vectors(const Catalog& catalog, const MovieVectors& embeddings, const MetricNet& net) {
    VectorMap out;
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        if (embeddings[i]) {
            out.emplace(catalog[i].id, forward(net, *embeddings[i]));
        }
    }
    return out;
}

inline std::vector<RawMovie> select_movies(const Catalog& catalog, const std::vector<std::string>& ids) {
    std::vector<RawMovie> out;
    for (const auto& id : ids) {
        out.push_back(catalog.at(id));
    }
    return out;
}

/// Score of the deep and baseline models on a feature set.
inline ScoredSet score_rows(const LogisticModel& model, const std::vector<FeatureRow>& rows) {
    ScoredSet out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.push_back({predict(model, r), r.label});
    }
    return out;
}

inline nlohmann::json nullable_auc(const ScoredSet& set) {
    try {
        return auc(set);
    } catch (const Error&) {
        return nullptr;
    }
}

struct Prediction {
    std::string customer_id;
    std::string movie_id;
    double probability = 0.0;
    bool cold = false;
};

/// Purchase probability of `target` for every customer. Customers with no
/// purchase before the release are scored with the training mean distance
/// and flagged cold.
inline std::vector<Prediction> score_customers(const std::vector<CustomerProfile>& profiles, const RawMovie& target,
                                               const Eigen::VectorXd& target_z, const VectorMap& movie_zs,
                                               const LogisticModel& model, double delta, double lookback_days) {
    std::vector<Prediction> out;
    out.reserve(profiles.size());
    for (const auto& profile : profiles) {
        double phi = model.phi_mean;
        bool cold = false;
        try {
            phi = (target_z - customer_vector(profile, movie_zs, delta, target.release_date).z).norm();
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyEligibleHistory) {
                throw;
            }
            cold = true;
        }
        const auto fr = freq_recency(profile, target.release_date, lookback_days);
        out.push_back({profile.customer_id, target.id, predict(model, phi, fr.frequency, fr.recency), cold});
    }
    return out;
}

inline void write_predictions_csv(const std::string& path, const std::vector<Prediction>& preds) {
    std::ofstream out(path, std::ios::binary);
    out << "customer_id,movie_id,probability,cold_flag\n";
    char buf[48];
    for (const auto& p : preds) {
        std::snprintf(buf, sizeof buf, "%.17g", p.probability);
        out << p.customer_id << ',' << p.movie_id << ',' << buf << ',' << (p.cold ? 1 : 0) << '\n';
    }
}

inline std::vector<Prediction> read_predictions_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::MissingArtifact, path);
    }
    std::vector<Prediction> out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        auto f = detail::split_csv_line(line);
        if (f.size() != 4) {
            throw Error(ErrorKind::ParseError, "predictions line: " + line);
        }
        out.push_back({f[0], f[1], std::stod(f[2]), f[3] == "1"});
    }
    return out;
}

inline nlohmann::json to_json(const CompsList& list) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : list) {
        j.push_back({{"movie_id", e.movie_id}, {"count", e.count}});
    }
    return j;
}

// ---------------------------------------------------------------------------
// Stages

/// Runs one named stage. Each stage reads only the artifacts it declares and
/// writes its outputs plus manifest entries; progress goes to `log`.
class Pipeline {
public:
    Pipeline(PipelineConfig config, std::ostream& log) : config_(std::move(config)), store_(config_.artifacts), log_(log) {}

    const PipelineConfig& config() const noexcept { return config_; }
    const ArtifactStore& store() const noexcept { return store_; }

    void run(const std::string& stage) {
        if (stage == "synth") return synth();
        if (stage == "ingest") return ingest();
        if (stage == "embed") return embed();
        if (stage == "pairs") return pairs();
        if (stage == "train-metric") return train_metric_stage();
        if (stage == "features") return features();
        if (stage == "train-predictor") return train_predictor();
        if (stage == "infer") return infer();
        if (stage == "eval") return evaluate();
        if (stage == "comps") return comps();
        if (stage == "project") return project();
        throw Error(ErrorKind::ConfigError, "unknown stage '" + stage + "'");
    }

    /// synth (when no inputs are configured) followed by every other stage.
    void run_all() {
        for (const auto& stage : stage_names()) {
            if (stage == "synth" && !config_.catalog.empty()) {
                continue;
            }
            run(stage);
        }
    }

    std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(config_.seed, stage); }

private:
    std::string input_catalog() const { return config_.catalog.empty() ? store_.path("synth_catalog.jsonl") : config_.catalog; }
    std::string input_transactions() const {
        return config_.transactions.empty() ? store_.path("synth_transactions.csv") : config_.transactions;
    }

    void synth() {
        auto sc = config_.synth;
        sc.seed = stage_seed("synth");
        auto data = generate(sc);
        {
            std::ofstream out(store_.path("synth_catalog.jsonl"), std::ios::binary);
            write_movies_jsonl(out, data.movies);
        }
        write_transactions_csv(store_.path("synth_transactions.csv"), data.transactions);
        write_json(store_.path("ground_truth.json"), ground_truth_json(data));
        store_.record("synth", {"synth_catalog.jsonl", "synth_transactions.csv", "ground_truth.json"}, {});
        log_ << "synth: " << data.movies.size() << " movies, " << data.transactions.size() << " transactions\n";
    }

    void ingest() {
        const auto catalog_path = input_catalog();
        const auto tx_path = input_transactions();
        for (const auto& p : {catalog_path, tx_path}) {
            if (!fs::exists(p)) {
                throw Error(ErrorKind::MissingArtifact, "ingest needs " + p);
            }
        }
        if (config_.catalog.empty()) {
            store_.require("ingest", {"synth_catalog.jsonl", "synth_transactions.csv"});
        }
        Catalog catalog = read_catalog_jsonl(catalog_path);
        auto txs = read_transactions_csv(tx_path);
        validate_transactions(txs, catalog);
        std::sort(txs.begin(), txs.end(), [](const Transaction& a, const Transaction& b) {
            if (a.timestamp != b.timestamp) {
                return a.timestamp < b.timestamp;
            }
            return a.customer_id != b.customer_id ? a.customer_id < b.customer_id : a.movie_id < b.movie_id;
        });
        auto split = split_by_release(catalog, config_.holdout_fraction);
        if (split.train.empty() || split.holdout.empty()) {
            throw Error(ErrorKind::ParseError, "release-date split leaves an empty train or holdout set");
        }
        write_catalog_jsonl(store_.path("catalog.jsonl"), catalog);
        write_transactions_csv(store_.path("transactions.csv"), txs);
        write_json(store_.path("split.json"), to_json(split));
        {
            std::ofstream out(store_.path("holdout.jsonl"), std::ios::binary);
            write_movies_jsonl(out, select_movies(catalog, split.holdout));
        }
        store_.record("ingest", {"catalog.jsonl", "transactions.csv", "split.json", "holdout.jsonl"}, {},
                      {catalog_path, tx_path});
        log_ << "ingest: " << catalog.size() << " movies (" << split.train.size() << " train, " << split.holdout.size()
             << " held out from " << format_date(split.cutoff) << "), " << txs.size() << " transactions\n";
    }

    void embed() {
        store_.require("embed", {"catalog.jsonl", "split.json"});
        Catalog catalog = read_catalog_jsonl(store_.path("catalog.jsonl"));
        auto split = split_from_json(read_json(store_.path("split.json")));
        std::vector<TokenSequence> corpus;
        for (const auto& id : split.train) {
            corpus.push_back(training_sequence(catalog.at(id), config_.plot_truncate));
        }
        auto ec = config_.embedding;
        ec.seed = stage_seed("embed");
        auto table = train_embedding(corpus, ec);
        save_embedding(store_.path("embedding.bin"), table);
        store_.record("embed", {"embedding.bin"}, {"catalog.jsonl", "split.json"});
        log_ << "embed: vocabulary " << table.size() << ", dim " << table.dim() << '\n';
    }

    void pairs() {
        store_.require("pairs", {"catalog.jsonl", "transactions.csv", "split.json"});
        Catalog catalog = read_catalog_jsonl(store_.path("catalog.jsonl"));
        auto split = split_from_json(read_json(store_.path("split.json")));
        Catalog train(select_movies(catalog, split.train));
        std::vector<Transaction> txs;
        for (auto& t : read_transactions_csv(store_.path("transactions.csv"))) {
            if (train.contains(t.movie_id)) {
                txs.push_back(std::move(t));
            }
        }
        auto data = build_pair_dataset(txs, train);
        const auto raw = data.rows.size();
        if (config_.balance) {
            data.rows = balance_sample(data.rows, config_.negative_ratio, stage_seed("pairs"));
        }
        write_pairs_csv(store_.path("pairs.csv"), data, train);
        store_.record("pairs", {"pairs.csv"}, {"catalog.jsonl", "transactions.csv", "split.json"});
        log_ << "pairs: " << raw << " raw rows, " << data.rows.size() << " kept, " << data.positives() << " positive\n";
    }

    void train_metric_stage() {
        store_.require("train-metric", {"catalog.jsonl", "embedding.bin", "pairs.csv"});
        Catalog catalog = read_catalog_jsonl(store_.path("catalog.jsonl"));
        auto table = load_embedding(store_.path("embedding.bin"));
        auto embeddings = embed_catalog(catalog, table, config_.plot_truncate);
        auto data = read_pairs_csv(store_.path("pairs.csv"), catalog);
        auto tc = config_.metric;
        tc.seed = stage_seed("train-metric");
        auto result = train_metric(data.rows, embeddings, tc);
        save_metric_net(store_.path("metric.bin"), result.net);
        write_json(store_.path("metric_training.json"),
                   {{"pairs", data.rows.size()}, {"positives", data.positives()}, {"epoch_loss", result.epoch_loss}});
        store_.record("train-metric", {"metric.bin", "metric_training.json"}, {"catalog.jsonl", "embedding.bin", "pairs.csv"});
        log_ << "train-metric: " << data.rows.size() << " pairs, final epoch loss "
             << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << '\n';
    }

    /// Catalog, profiles and target-space vectors shared by the later stages.
    struct Scoring {
        Catalog catalog;
        Split split;
        std::vector<CustomerProfile> profiles;
        EmbeddingTable table;
        MetricNet net;
        VectorMap movie_zs;
    };

    Scoring load_scoring(const std::string& stage) {
        store_.require(stage, {"catalog.jsonl", "transactions.csv", "split.json", "embedding.bin", "metric.bin"});
        Scoring s;
        s.catalog = read_catalog_jsonl(store_.path("catalog.jsonl"));
        s.split = split_from_json(read_json(store_.path("split.json")));
        s.profiles = build_profiles(read_transactions_csv(store_.path("transactions.csv")));
        s.table = load_embedding(store_.path("embedding.bin"));
        s.net = load_metric_net(store_.path("metric.bin"));
        s.movie_zs = target_vectors(s.catalog, embed_catalog(s.catalog, s.table, config_.plot_truncate), s.net);
        return s;
    }

    void features() {
        auto s = load_scoring("features");
        auto train = build_feature_rows(s.profiles, select_movies(s.catalog, s.split.train), s.movie_zs, config_.delta,
                                        config_.lookback_days);
        auto test = build_feature_rows(s.profiles, select_movies(s.catalog, s.split.holdout), s.movie_zs, config_.delta,
                                       config_.lookback_days);
        write_features_csv(store_.path("features_train.csv"), train.rows);
        write_features_csv(store_.path("features_test.csv"), test.rows);
        store_.record("features", {"features_train.csv", "features_test.csv"},
                      {"catalog.jsonl", "transactions.csv", "split.json", "embedding.bin", "metric.bin"});
        log_ << "features: " << train.rows.size() << " train rows (" << train.skipped << " cold skipped), " << test.rows.size()
             << " test rows (" << test.skipped << " cold skipped)\n";
    }

    LogisticConfig logistic_config(bool use_distance) const {
        auto lc = config_.logistic;
        lc.seed = stage_seed("train-predictor");
        lc.use_distance = use_distance;
        return lc;
    }

    void train_predictor() {
        store_.require("train-predictor", {"features_train.csv"});
        auto rows = read_features_csv(store_.path("features_train.csv"));
        auto deep = train_logistic(rows, logistic_config(true));
        auto baseline = train_logistic(rows, logistic_config(false));
        save_logistic(store_.path("predictor.json"), deep);
        save_logistic(store_.path("baseline.json"), baseline);
        store_.record("train-predictor", {"predictor.json", "baseline.json"}, {"features_train.csv"});
        log_ << "train-predictor: alpha " << deep.alpha << " beta " << deep.beta << " gamma_f " << deep.gamma_f << " gamma_r "
             << deep.gamma_r << " (pos_weight " << deep.pos_weight << ")\n";
    }

    void infer() {
        auto s = load_scoring("infer");
        store_.require("infer", {"predictor.json"});
        const auto model = load_logistic(store_.path("predictor.json"));
        std::vector<std::string> inputs{"catalog.jsonl", "transactions.csv", "split.json", "embedding.bin", "metric.bin",
                                        "predictor.json"};
        std::vector<std::string> external;
        std::vector<RawMovie> targets;
        if (config_.target.empty()) {
            store_.require("infer", {"holdout.jsonl"});
            inputs.push_back("holdout.jsonl");
            std::ifstream in(store_.path("holdout.jsonl"));
            targets = read_movies_jsonl(in);
        } else {
            std::ifstream in(config_.target);
            if (!in) {
                throw Error(ErrorKind::MissingArtifact, "infer target " + config_.target);
            }
            targets = read_movies_jsonl(in);
            external.push_back(config_.target);
        }
        std::vector<Prediction> all;
        for (const auto& target : targets) {
            const auto e = embed_movie(training_sequence(target, config_.plot_truncate), s.table, target.id);
            const auto z = forward(s.net, e.e);
            auto preds = score_customers(s.profiles, target, z, s.movie_zs, model, config_.delta, config_.lookback_days);
            all.insert(all.end(), preds.begin(), preds.end());
        }
        write_predictions_csv(store_.path("predictions.csv"), all);
        store_.record("infer", {"predictions.csv"}, inputs, external);
        log_ << "infer: " << targets.size() << " target movies, " << all.size() << " predictions\n";
    }

    void evaluate() {
        store_.require("eval", {"features_train.csv", "features_test.csv", "predictor.json", "baseline.json"});
        const auto train = read_features_csv(store_.path("features_train.csv"));
        const auto test = read_features_csv(store_.path("features_test.csv"));
        const auto deep = load_logistic(store_.path("predictor.json"));
        const auto baseline = load_logistic(store_.path("baseline.json"));

        auto summarize = [&](const LogisticModel& model) {
            const auto train_scores = score_rows(model, train);
            const auto test_scores = score_rows(model, test);
            const auto pr = precision_recall_at_threshold(test_scores, config_.threshold);
            std::map<std::string, ScoredSet> per_customer;
            for (std::size_t i = 0; i < test.size(); ++i) {
                per_customer[test[i].customer_id].push_back(test_scores[i]);
            }
            nlohmann::json rl = nullptr;
            try {
                rl = ranking_loss(per_customer);
            } catch (const Error&) {
            }
            return nlohmann::json{{"train_auc", nullable_auc(train_scores)},
                                  {"test_auc", nullable_auc(test_scores)},
                                  {"test_precision", pr.precision},
                                  {"test_recall", pr.recall},
                                  {"test_no_predicted_positives", pr.no_predicted_positives},
                                  {"test_ranking_loss", rl}};
        };
        nlohmann::json report;
        report["deep"] = summarize(deep);
        report["baseline"] = summarize(baseline);
        auto diff = [](const nlohmann::json& a, const nlohmann::json& b) -> nlohmann::json {
            if (a.is_null() || b.is_null()) {
                return nullptr;
            }
            return a.get<double>() - b.get<double>();
        };
        report["gain"] = {{"train_auc", diff(report["deep"]["train_auc"], report["baseline"]["train_auc"])},
                          {"test_auc", diff(report["deep"]["test_auc"], report["baseline"]["test_auc"])}};
        std::size_t train_pos = 0, test_pos = 0;
        for (const auto& r : train) train_pos += r.label;
        for (const auto& r : test) test_pos += r.label;
        report["rows"] = {{"train", train.size()}, {"train_positives", train_pos}, {"test", test.size()}, {"test_positives", test_pos}};
        report["threshold"] = config_.threshold;
        report["segments"] = frequency_segments(test, deep, baseline);
        if (!config_.pos_weight_grid.empty()) {
            nlohmann::json sweep = nlohmann::json::array();
            for (const auto& p : sweep_pos_weight(train, test, config_.pos_weight_grid, logistic_config(true), config_.threshold)) {
                sweep.push_back({{"pos_weight", p.pos_weight},
                                 {"test_auc", p.auc},
                                 {"test_precision", p.at_threshold.precision},
                                 {"test_recall", p.at_threshold.recall}});
            }
            report["pos_weight_sweep"] = sweep;
        }
        write_json(store_.path("metrics.json"), report);
        store_.record("eval", {"metrics.json"}, {"features_train.csv", "features_test.csv", "predictor.json", "baseline.json"});
        log_ << "eval: deep test AUC " << report["deep"]["test_auc"] << ", baseline test AUC " << report["baseline"]["test_auc"]
             << ", deep train AUC " << report["deep"]["train_auc"] << '\n';
    }

    /// Test rows grouped by quartile of F (bounds from the test rows).
    static nlohmann::json frequency_segments(const std::vector<FeatureRow>& rows, const LogisticModel& deep,
                                             const LogisticModel& baseline) {
        nlohmann::json out = nlohmann::json::array();
        if (rows.empty()) {
            return out;
        }
        std::vector<int> fs;
        for (const auto& r : rows) fs.push_back(r.frequency);
        std::sort(fs.begin(), fs.end());
        const int q1 = fs[fs.size() / 4], q2 = fs[fs.size() / 2], q3 = fs[3 * fs.size() / 4];
        std::vector<std::vector<FeatureRow>> groups(4);
        for (const auto& r : rows) {
            groups[static_cast<std::size_t>((r.frequency > q1) + (r.frequency > q2) + (r.frequency > q3))].push_back(r);
        }
        for (std::size_t g = 0; g < 4; ++g) {
            out.push_back({{"f_quartile", g + 1},
                           {"rows", groups[g].size()},
                           {"deep_auc", nullable_auc(score_rows(deep, groups[g]))},
                           {"baseline_auc", nullable_auc(score_rows(baseline, groups[g]))}});
        }
        return out;
    }

    void comps() {
        store_.require("comps", {"catalog.jsonl", "transactions.csv", "split.json", "predictions.csv"});
        Catalog catalog = read_catalog_jsonl(store_.path("catalog.jsonl"));
        auto split = split_from_json(read_json(store_.path("split.json")));
        const auto txs = read_transactions_csv(store_.path("transactions.csv"));
        const auto profiles = build_profiles(txs);
        const auto preds = read_predictions_csv(store_.path("predictions.csv"));

        std::string target = config_.comps_target;
        if (target.empty()) {
            std::map<std::string, std::set<std::string>> buyers;
            for (const auto& t : txs) buyers[t.movie_id].insert(t.customer_id);
            std::size_t best = 0;
            for (const auto& id : split.holdout) {
                if (buyers[id].size() > best) {
                    best = buyers[id].size();
                    target = id;
                }
            }
            if (target.empty()) {
                throw Error(ErrorKind::EmptySegment, "no held-out movie has buyers");
            }
        }
        std::vector<CustomerScore> scores;
        for (const auto& p : preds) {
            if (p.movie_id == target) {
                scores.push_back({p.customer_id, p.probability});
            }
        }
        if (scores.empty()) {
            throw Error(ErrorKind::EmptySegment, "no predictions for comps target " + target);
        }
        const Date release = catalog.contains(target) ? catalog.at(target).release_date : split.cutoff;
        const auto predicted = comparable_movies(scores, profiles, target, release, config_.segment_fraction, config_.comps_k);
        std::set<std::string> buyer_set;
        for (const auto& t : txs) {
            if (t.movie_id == target) buyer_set.insert(t.customer_id);
        }
        const auto actual = bubble_up({buyer_set.begin(), buyer_set.end()}, profiles, target, release, config_.comps_k);
        const auto overlap = comps_overlap(predicted, actual, config_.comps_k);
        write_json(store_.path("comps.json"), {{"target", target},
                                               {"segment_fraction", config_.segment_fraction},
                                               {"k", config_.comps_k},
                                               {"buyers", buyer_set.size()},
                                               {"predicted", to_json(predicted)},
                                               {"actual", to_json(actual)},
                                               {"overlap", overlap}});
        store_.record("comps", {"comps.json"}, {"catalog.jsonl", "transactions.csv", "split.json", "predictions.csv"});
        log_ << "comps: target " << target << ", overlap " << overlap << "/" << config_.comps_k << '\n';
    }

    void project() {
        store_.require("project", {"catalog.jsonl", "embedding.bin", "metric.bin"});
        std::vector<std::string> inputs{"catalog.jsonl", "embedding.bin", "metric.bin"};
        Catalog catalog = read_catalog_jsonl(store_.path("catalog.jsonl"));
        auto table = load_embedding(store_.path("embedding.bin"));
        auto net = load_metric_net(store_.path("metric.bin"));
        auto embeddings = embed_catalog(catalog, table, config_.plot_truncate);
        std::vector<std::pair<std::string, Eigen::VectorXd>> zs;
        for (std::size_t i = 0; i < catalog.size(); ++i) {
            if (embeddings[i]) {
                zs.emplace_back(catalog[i].id, forward(net, *embeddings[i]));
            }
        }
        const auto points = project_2d(zs);
        nlohmann::json summary{{"movies", points.size()}, {"plot_truncate", config_.plot_truncate}, {"purity", nullptr}};
        std::vector<int> groups;
        if (store_.exists("ground_truth.json")) {
            store_.require("project", {"ground_truth.json"});
            inputs.push_back("ground_truth.json");
            const auto truth = read_json(store_.path("ground_truth.json")).at("movie_genre");
            for (const auto& p : points) {
                groups.push_back(truth.contains(p.id) ? truth.at(p.id).get<int>() : -1);
            }
            if (std::none_of(groups.begin(), groups.end(), [](int g) { return g < 0; })) {
                summary["purity"] = projection_purity(points, groups, stage_seed("project"));
            }
        }
        write_projection_csv(store_.path("projection.csv"), points);
        write_projection_svg(store_.path("projection.svg"), points, groups);
        write_json(store_.path("projection.json"), summary);
        store_.record("project", {"projection.csv", "projection.svg", "projection.json"}, inputs);
        log_ << "project: " << points.size() << " movies, purity " << summary["purity"] << '\n';
    }

    PipelineConfig config_;
    ArtifactStore store_;
    std::ostream& log_;
};

}
