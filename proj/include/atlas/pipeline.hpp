#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "atlas/cluster.hpp"
#include "atlas/dataset.hpp"
#include "atlas/embed.hpp"
#include "atlas/env.hpp"
#include "atlas/policy.hpp"
#include "atlas/profile.hpp"

/**
 * @file pipeline.hpp
 *
 * @brief Profile fitting over a training set: encode, cluster, execute pairs,
 * accumulate per-cluster statistics.
 */

namespace atlas {

struct PairSampling {
    /// 0 runs every pair on every query; otherwise this many distinct pairs per query.
    std::size_t per_query = 0;

    static PairSampling parse(std::string_view spec) {
        if (spec == "all") {
            return {};
        }
        if (spec.substr(0, 7) == "sample:") {
            const auto n = std::stoull(std::string(spec.substr(7)));
            if (n == 0) {
                throw Error(ErrorCode::invalid_argument, "sample:n needs n >= 1");
            }
            return {static_cast<std::size_t>(n)};
        }
        throw Error(ErrorCode::invalid_argument, "pair sampling must be 'all' or 'sample:n', got '" + std::string(spec) + "'");
    }
};

struct ProfileFitOptions {
    KMeansOptions kmeans;
    PairSampling pairs;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

/// Pair indices executed for training query `i`.
inline std::vector<std::size_t> profiled_pairs(std::size_t pair_count, const PairSampling& s, std::uint64_t seed,
                                               std::size_t i) {
    std::vector<std::size_t> all(pair_count);
    for (std::size_t p = 0; p < pair_count; ++p) {
        all[p] = p;
    }
    if (s.per_query == 0 || s.per_query >= pair_count) {
        return all;
    }
    // Partial Fisher-Yates, then sorted so execution order is canonical.
    Rng rng = Rng::stream(seed, i, 0x5a);
    for (std::size_t j = 0; j < s.per_query; ++j) {
        std::swap(all[j], all[j + rng.uniform_index(pair_count - j)]);
    }
    all.resize(s.per_query);
    std::sort(all.begin(), all.end());
    return all;
}

/**
 * Fits a cluster profile. Each (query, pair) execution draws from its own
 * stream derived from (seed, query, pair), and results are folded in query
 * order, so the profile does not depend on `jobs`.
 */
inline ClusterProfile fit_profile(const EvalDataset& train, const std::vector<Vector>& vectors,
                                  const Executor& executor, const EncoderConfig& encoder,
                                  const ProfileFitOptions& opts) {
    if (train.empty()) {
        throw Error(ErrorCode::too_few_points, "training set is empty");
    }
    if (vectors.size() != train.size()) {
        throw Error(ErrorCode::dimension_mismatch, "one embedding per training query is required");
    }
    auto kopts = opts.kmeans;
    kopts.seed = opts.seed;
    auto model = fit_kmeans(vectors, kopts);
    const auto& pool = executor.pool();
    auto pool_ptr = std::make_shared<const RoutingPool>(pool);

    struct Row {
        std::size_t cluster = 0;
        std::vector<std::pair<std::size_t, Observation>> obs;
        std::vector<bool> solved;
    };
    std::vector<Row> rows(train.size());
    parallel_for(train.size(), opts.jobs, [&](std::size_t i) {
        auto& row = rows[i];
        row.cluster = assign(model, vectors[i]).cluster;
        const auto matcher = matcher_from_string(train[i].matcher);
        for (std::size_t p : profiled_pairs(pool.pair_count(), opts.pairs, opts.seed, i)) {
            Rng rng = Rng::stream(opts.seed, i, p + 1);
            ExecutionContext ctx{&train[i], &rng};
            auto o = executor.execute_pair(pool.pair_at(p), train[i].query, ctx);
            const bool ok = !train[i].gold.empty() &&
                            outcome_reward(detail::strip_outcome_prefix(o.text), train[i].gold, matcher) > 0.5;
            row.obs.emplace_back(p, std::move(o));
            row.solved.push_back(ok);
        }
    });
    ClusterProfile profile(pool_ptr, std::move(model), encoder);
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.obs.size(); ++j) {
            const auto& [p, o] = row.obs[j];
            record_observation(profile, row.cluster, pool.pair_at(p), row.solved[j], o.in_tokens, o.out_tokens);
        }
    }
    return profile;
}

inline ClusterProfile fit_profile(const EvalDataset& train, const Executor& executor, const EncoderConfig& encoder,
                                  const ProfileFitOptions& opts) {
    std::vector<std::string> texts;
    texts.reserve(train.size());
    for (const auto& q : train) {
        texts.push_back(q.query);
    }
    return fit_profile(train, texts.empty() ? std::vector<Vector>{} : batch_encode(encoder, texts), executor, encoder,
                       opts);
}

} // namespace atlas
