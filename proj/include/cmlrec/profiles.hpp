#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "catalog.hpp"
#include "error.hpp"

namespace cmlrec {

struct Purchase {
    std::string movie_id;
    Timestamp when;
};

/// A customer's purchases in ascending time order.
struct CustomerProfile {
    std::string customer_id;
    std::vector<Purchase> history;
};

struct CustomerVector {
    std::string customer_id;
    Eigen::VectorXd z;
    Date reference_date;
};

struct FreqRecency {
    int frequency = 0;
    double recency = 0.0;
};

using VectorMap = std::unordered_map<std::string, Eigen::VectorXd>;

/// Groups transactions into profiles, ordered by customer id; each history is
/// sorted by time, then movie id.
inline std::vector<CustomerProfile> build_profiles(const std::vector<Transaction>& transactions) {
    std::map<std::string, std::vector<Purchase>> grouped;
    for (const auto& t : transactions) {
        grouped[t.customer_id].push_back({t.movie_id, t.timestamp});
    }
    std::vector<CustomerProfile> out;
    out.reserve(grouped.size());
    for (auto& [id, history] : grouped) {
        std::sort(history.begin(), history.end(), [](const Purchase& a, const Purchase& b) {
            return a.when != b.when ? a.when < b.when : a.movie_id < b.movie_id;
        });
        out.push_back({id, std::move(history)});
    }
    return out;
}

/// Time-discounted mean of the target vectors of the movies bought strictly
/// before `reference`:
///
///   z = sum_n z_n exp(-delta t_n) / sum_n exp(-delta t_n)
///
/// with t_n the days from purchase n to the reference date. A movie bought
/// more than once counts once, at its latest eligible purchase. Movies
/// without a vector in `movie_zs` are ignored.
inline CustomerVector customer_vector(const CustomerProfile& profile, const VectorMap& movie_zs, double delta, Date reference) {
    if (!(delta >= 0)) {
        throw Error(ErrorKind::InvalidConfig, "delta must be non-negative");
    }
    const Timestamp cutoff = start_of(reference);
    std::unordered_map<std::string, double> age;  // movie -> days before reference
    for (const auto& p : profile.history) {
        if (p.when >= cutoff) {
            break;
        }
        if (movie_zs.count(p.movie_id)) {
            age[p.movie_id] = days_between(p.when, cutoff);
        }
    }
    if (age.empty()) {
        throw Error(ErrorKind::EmptyEligibleHistory, "customer " + profile.customer_id + " has no purchase before " +
                                                         format_date(reference));
    }
    // Weights are shifted by the youngest purchase so large delta*t cannot
    // underflow every weight to zero; the shift cancels in the ratio.
    double youngest = age.begin()->second;
    for (const auto& [movie, t] : age) {
        youngest = std::min(youngest, t);
    }
    std::vector<std::pair<std::string, double>> ordered(age.begin(), age.end());
    std::sort(ordered.begin(), ordered.end());
    Eigen::VectorXd sum;
    double total = 0.0;
    for (const auto& [movie, t] : ordered) {
        const double w = std::exp(-delta * (t - youngest));
        const auto& z = movie_zs.at(movie);
        if (sum.size() == 0) {
            sum = Eigen::VectorXd::Zero(z.size());
        }
        sum += w * z;
        total += w;
    }
    return {profile.customer_id, sum / total, reference};
}

/// F counts purchases in [reference - lookback, reference); R is the days
/// from the latest of them to the reference, or `lookback_days` when F = 0.
inline FreqRecency freq_recency(const CustomerProfile& profile, Date reference, double lookback_days) {
    if (!(lookback_days > 0)) {
        throw Error(ErrorKind::InvalidConfig, "lookback_days must be positive");
    }
    const Timestamp cutoff = start_of(reference);
    FreqRecency out{0, lookback_days};
    for (const auto& p : profile.history) {
        if (p.when >= cutoff) {
            break;
        }
        const double days = days_between(p.when, cutoff);
        if (days <= lookback_days) {
            ++out.frequency;
            out.recency = std::min(out.recency, days);
        }
    }
    return out;
}

}
