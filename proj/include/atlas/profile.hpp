#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "atlas/cluster.hpp"
#include "atlas/core.hpp"
#include "atlas/embed.hpp"
#include "atlas/error.hpp"

/**
 * @file profile.hpp
 *
 * @brief Per-(cluster, pair) success and token statistics, the accuracy/cost
 * utility, and single-shot routing of a query to its best pair.
 */

namespace atlas {

struct PairStats {
    std::uint64_t solved = 0;
    std::uint64_t total = 0;
    std::uint64_t sum_in_tokens = 0;
    std::uint64_t sum_out_tokens = 0;

    PairStats& operator+=(const PairStats& o) {
        solved += o.solved;
        total += o.total;
        sum_in_tokens += o.sum_in_tokens;
        sum_out_tokens += o.sum_out_tokens;
        return *this;
    }
    bool operator==(const PairStats&) const = default;
};

struct UtilityConfig {
    double alpha = 0.5;
    /// Divisor applied to currency cost. Unset means "largest empirical cost
    /// in the profile", which keeps cost in [0, 1] like accuracy. Set to 1 to
    /// use raw currency units.
    std::optional<double> cost_scale;
    std::uint64_t min_support = 1;
    /// Pair used when neither the cluster nor the pooled statistics have data.
    std::size_t default_pair = 0;
};

struct RoutingDecision {
    ModelToolPair pair;
    std::size_t cluster = 0;
    double utility = 0.0;
    bool fallback_used = false;
};

inline double empirical_accuracy(const PairStats& s) {
    if (s.total == 0) {
        throw Error(ErrorCode::no_observations, "accuracy undefined without observations");
    }
    return static_cast<double>(s.solved) / static_cast<double>(s.total);
}

/// Mean tokens times unit prices. The numerator is summed exactly in
/// integer currency units before the single division.
inline double empirical_cost(const PairStats& s, const ModelPrice& price) {
    if (s.total == 0) {
        throw Error(ErrorCode::no_observations, "cost undefined without observations");
    }
    const auto in = static_cast<__int128>(s.sum_in_tokens) * price.input.pico;
    const auto out = static_cast<__int128>(s.sum_out_tokens) * price.output.pico;
    const long double total_pico = static_cast<long double>(in + out);
    return static_cast<double>(total_pico / static_cast<long double>(s.total) /
                               static_cast<long double>(Money::scale));
}

inline double utility(const PairStats& s, const ModelPrice& price, double alpha, double cost_scale) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "alpha must lie in [0, 1]");
    }
    if (!(cost_scale > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "cost_scale must be positive");
    }
    return (1.0 - alpha) * empirical_accuracy(s) - alpha * (empirical_cost(s, price) / cost_scale);
}

/**
 * @brief Fitted clustering plus observation statistics for every
 * (cluster, pair) cell.
 */
class ClusterProfile {
public:
    ClusterProfile() = default;
    ClusterProfile(std::shared_ptr<const RoutingPool> pool, ClusterModel model, EncoderConfig encoder)
        : pool_(std::move(pool)), model_(std::move(model)), encoder_(std::move(encoder)),
          stats_(model_.k() * pool_->pair_count()) {}

    const RoutingPool& pool() const { return *pool_; }
    std::shared_ptr<const RoutingPool> pool_ptr() const { return pool_; }
    const ClusterModel& cluster_model() const { return model_; }
    const EncoderConfig& encoder() const { return encoder_; }
    std::size_t clusters() const { return model_.k(); }

    const PairStats& stats(std::size_t cluster, std::size_t pair_index) const {
        check(cluster, pair_index);
        return stats_[cluster * pool_->pair_count() + pair_index];
    }
    PairStats& stats(std::size_t cluster, std::size_t pair_index) {
        check(cluster, pair_index);
        return stats_[cluster * pool_->pair_count() + pair_index];
    }

    /// All clusters merged, per pair.
    PairStats pooled(std::size_t pair_index) const {
        PairStats s;
        for (std::size_t k = 0; k < clusters(); ++k) {
            s += stats(k, pair_index);
        }
        return s;
    }

    bool cluster_has_data(std::size_t cluster) const {
        for (std::size_t p = 0; p < pool_->pair_count(); ++p) {
            if (stats(cluster, p).total > 0) {
                return true;
            }
        }
        return false;
    }

    /// Largest empirical cost over observed cells, or 1 when all costs are zero.
    double max_cost() const {
        double m = 0.0;
        for (std::size_t k = 0; k < clusters(); ++k) {
            for (std::size_t p = 0; p < pool_->pair_count(); ++p) {
                const auto& s = stats(k, p);
                if (s.total > 0) {
                    m = std::max(m, empirical_cost(s, pool_->price(pool_->pair_at(p))));
                }
            }
        }
        return m > 0.0 ? m : 1.0;
    }

    /// Adds another profile's counters cell by cell (used to combine per-worker partials).
    void merge(const ClusterProfile& other) {
        if (other.stats_.size() != stats_.size()) {
            throw Error(ErrorCode::invalid_argument, "cannot merge profiles of different shape");
        }
        for (std::size_t i = 0; i < stats_.size(); ++i) {
            stats_[i] += other.stats_[i];
        }
    }

private:
    void check(std::size_t cluster, std::size_t pair_index) const {
        if (cluster >= clusters()) {
            throw Error(ErrorCode::out_of_range, "cluster " + std::to_string(cluster) + " out of range");
        }
        if (pair_index >= pool_->pair_count()) {
            throw Error(ErrorCode::unknown_pair, "pair index " + std::to_string(pair_index) + " out of range");
        }
    }

    std::shared_ptr<const RoutingPool> pool_;
    ClusterModel model_;
    EncoderConfig encoder_ = HashedEncoderConfig{};
    std::vector<PairStats> stats_;
};

inline void record_observation(ClusterProfile& profile, std::size_t cluster, const ModelToolPair& pair, bool solved,
                               std::uint64_t in_tokens, std::uint64_t out_tokens) {
    if (pair.model >= profile.pool().model_count() || pair.tool >= profile.pool().tool_count()) {
        throw Error(ErrorCode::unknown_pair, "pair does not belong to the profile's pool");
    }
    auto& s = profile.stats(cluster, profile.pool().pair_index(pair));
    ++s.total;
    if (solved) {
        ++s.solved;
    }
    s.sum_in_tokens += in_tokens;
    s.sum_out_tokens += out_tokens;
}

inline double resolved_cost_scale(const ClusterProfile& profile, const UtilityConfig& cfg) {
    return cfg.cost_scale ? *cfg.cost_scale : profile.max_cost();
}

namespace detail {

template <typename StatsFn>
std::optional<std::pair<std::size_t, double>> argmax_utility(const RoutingPool& pool, StatsFn&& stats_of,
                                                             const UtilityConfig& cfg, double scale) {
    std::optional<std::pair<std::size_t, double>> best;
    for (std::size_t p = 0; p < pool.pair_count(); ++p) {
        const PairStats& s = stats_of(p);
        if (s.total == 0 || s.total < cfg.min_support) {
            continue;
        }
        const double u = utility(s, pool.price(pool.pair_at(p)), cfg.alpha, scale);
        if (!best || u > best->second) {
            best = {p, u};
        }
    }
    return best;
}

} // namespace detail

/**
 * Highest-utility pair among those observed in `cluster` (ties go to the
 * lower pair index). A cluster with no eligible pair falls back to the
 * statistics of all clusters merged, then to `cfg.default_pair`.
 */
inline RoutingDecision select_pair(const ClusterProfile& profile, std::size_t cluster, const UtilityConfig& cfg) {
    const auto& pool = profile.pool();
    if (pool.pair_count() == 0) {
        throw Error(ErrorCode::empty_pool, "routing pool has no pairs");
    }
    if (cluster >= profile.clusters()) {
        throw Error(ErrorCode::out_of_range, "cluster " + std::to_string(cluster) + " out of range");
    }
    const double scale = resolved_cost_scale(profile, cfg);
    if (auto best = detail::argmax_utility(
            pool, [&](std::size_t p) -> const PairStats& { return profile.stats(cluster, p); }, cfg, scale)) {
        return {pool.pair_at(best->first), cluster, best->second, false};
    }
    std::vector<PairStats> pooled(pool.pair_count());
    for (std::size_t p = 0; p < pool.pair_count(); ++p) {
        pooled[p] = profile.pooled(p);
    }
    if (auto best = detail::argmax_utility(
            pool, [&](std::size_t p) -> const PairStats& { return pooled[p]; }, cfg, scale)) {
        return {pool.pair_at(best->first), cluster, best->second, true};
    }
    return {pool.pair_at(cfg.default_pair), cluster, 0.0, true};
}

inline RoutingDecision route_query(const ClusterProfile& profile, const EncoderConfig& encoder, std::string_view query,
                                   const UtilityConfig& cfg) {
    const auto v = encode(encoder, query);
    return select_pair(profile, assign(profile.cluster_model(), v).cluster, cfg);
}

inline RoutingDecision route_query(const ClusterProfile& profile, std::string_view query, const UtilityConfig& cfg) {
    return route_query(profile, profile.encoder(), query, cfg);
}

// ---- profile file (JSON, version 1) ----

inline json profile_to_json(const ClusterProfile& profile, const UtilityConfig& defaults = {}) {
    const auto& pool = profile.pool();
    json stats = json::array();
    for (std::size_t k = 0; k < profile.clusters(); ++k) {
        for (std::size_t p = 0; p < pool.pair_count(); ++p) {
            const auto& s = profile.stats(k, p);
            if (s.total == 0) {
                continue;
            }
            const auto pair = pool.pair_at(p);
            stats.push_back({{"cluster", k},
                             {"model", pool.model(pair).name},
                             {"tool", pool.tool(pair).name},
                             {"solved", s.solved},
                             {"total", s.total},
                             {"in_tokens", s.sum_in_tokens},
                             {"out_tokens", s.sum_out_tokens}});
        }
    }
    json utility_block{{"alpha", defaults.alpha}, {"min_support", defaults.min_support}};
    if (defaults.cost_scale) {
        utility_block["cost_scale"] = *defaults.cost_scale;
    }
    return {{"version", 1},
            {"pool", pool_to_json(pool)},
            {"encoder", encoder_to_json(profile.encoder())},
            {"cluster_model", cluster_model_to_json(profile.cluster_model())},
            {"utility", utility_block},
            {"stats", stats}};
}

struct LoadedProfile {
    ClusterProfile profile;
    UtilityConfig utility;
};

inline LoadedProfile profile_from_json(const json& doc) {
    detail::require_version(doc, 1, "profile");
    try {
        auto pool = std::make_shared<const RoutingPool>(pool_from_json(doc.at("pool")));
        ClusterProfile profile(pool, cluster_model_from_json(doc.at("cluster_model")),
                               encoder_from_json(doc.at("encoder")));
        for (const auto& row : doc.at("stats")) {
            const auto pair = pool->resolve(row.at("model").get<std::string>(), row.at("tool").get<std::string>());
            auto& s = profile.stats(row.at("cluster").get<std::size_t>(), pool->pair_index(pair));
            s.solved = row.at("solved").get<std::uint64_t>();
            s.total = row.at("total").get<std::uint64_t>();
            s.sum_in_tokens = row.at("in_tokens").get<std::uint64_t>();
            s.sum_out_tokens = row.at("out_tokens").get<std::uint64_t>();
            if (s.solved > s.total) {
                throw Error(ErrorCode::schema_error, "profile: solved exceeds total");
            }
        }
        UtilityConfig u;
        if (doc.contains("utility")) {
            const auto& ub = doc.at("utility");
            u.alpha = ub.value("alpha", u.alpha);
            u.min_support = ub.value("min_support", u.min_support);
            if (ub.contains("cost_scale")) {
                u.cost_scale = ub.at("cost_scale").get<double>();
            }
        }
        return {std::move(profile), u};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_error, std::string("profile: ") + e.what());
    }
}

} // namespace atlas
