#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "atlas/cluster.hpp"
#include "atlas/embed.hpp"
#include "atlas/env.hpp"
#include "atlas/profile.hpp"

/**
 * @file policy.hpp
 *
 * @brief Routing policies over the action space {route(pair_i)} ∪ {answer}:
 * random, cluster-greedy, epsilon-greedy, and a tabular softmax policy
 * trained by REINFORCE with a batch-mean baseline and a KL penalty to a
 * frozen reference.
 */

namespace atlas {

// ---------------------------------------------------------------------------
// Query -> context cluster
// ---------------------------------------------------------------------------

/// Maps a query to a context cluster: nearest centroid of an embedded query,
/// or a hash bucket when no clustering is available.
class QueryLocator {
public:
    QueryLocator() = default;

    static QueryLocator clustered(ClusterModel model, EncoderConfig encoder) {
        QueryLocator l;
        l.model_ = std::move(model);
        l.encoder_ = std::move(encoder);
        l.buckets_ = l.model_->k();
        return l;
    }

    static QueryLocator hashed(std::size_t buckets) {
        QueryLocator l;
        l.buckets_ = buckets == 0 ? 1 : buckets;
        return l;
    }

    std::size_t clusters() const { return buckets_; }

    std::size_t locate(std::string_view query) const {
        if (model_) {
            return assign(*model_, encode(encoder_, query)).cluster;
        }
        return static_cast<std::size_t>(fnv1a64(query) % buckets_);
    }

    json to_json() const {
        if (model_) {
            return {{"kind", "cluster"}, {"encoder", encoder_to_json(encoder_)}, {"cluster_model", cluster_model_to_json(*model_)}};
        }
        return {{"kind", "hash"}, {"buckets", buckets_}};
    }

    static QueryLocator from_json(const json& j) {
        if (j.value("kind", "") == "cluster") {
            return clustered(cluster_model_from_json(j.at("cluster_model")), encoder_from_json(j.at("encoder")));
        }
        return hashed(j.value("buckets", std::size_t{1}));
    }

private:
    std::optional<ClusterModel> model_;
    EncoderConfig encoder_ = HashedEncoderConfig{};
    std::size_t buckets_ = 1;
};

// ---------------------------------------------------------------------------
// Baseline policies
// ---------------------------------------------------------------------------

/// Uniform over pairs at turn 0, then answers.
class RandomRouter final : public RoutingPolicy {
public:
    explicit RandomRouter(std::size_t pairs) : pairs_(pairs) {
        if (pairs_ == 0) {
            throw Error(ErrorCode::empty_pool, "random router over an empty pool");
        }
    }
    std::string name() const override { return "random"; }
    std::size_t locate(const QueryRecord&) const override { return 0; }
    ActionIndex act(const PolicyContext& ctx, Rng& rng) const override {
        return ctx.turn == 0 ? rng.uniform_index(pairs_) : pairs_;
    }

private:
    std::size_t pairs_;
};

/// Routes once to the profile's utility-argmax pair for the query's cluster,
/// then answers. With epsilon > 0 the first route is uniform with that probability.
class ClusterGreedy final : public RoutingPolicy {
public:
    ClusterGreedy(std::shared_ptr<const ClusterProfile> profile, UtilityConfig utility, double epsilon = 0.0)
        : profile_(std::move(profile)), epsilon_(epsilon) {
        if (!profile_) {
            throw Error(ErrorCode::missing_dependency, "cluster-greedy policy requires a profile");
        }
        for (std::size_t k = 0; k < profile_->clusters(); ++k) {
            choice_.push_back(profile_->pool().pair_index(select_pair(*profile_, k, utility).pair));
        }
    }
    std::string name() const override { return epsilon_ > 0 ? "epsilon-greedy" : "cluster-greedy"; }
    std::size_t locate(const QueryRecord& q) const override {
        return assign(profile_->cluster_model(), encode(profile_->encoder(), q.query)).cluster;
    }
    ActionIndex act(const PolicyContext& ctx, Rng& rng) const override {
        const std::size_t pairs = profile_->pool().pair_count();
        if (ctx.turn > 0) {
            return pairs;
        }
        if (epsilon_ > 0 && rng.bernoulli(epsilon_)) {
            return rng.uniform_index(pairs);
        }
        return choice_.at(ctx.cluster);
    }
    ActionIndex greedy_choice(std::size_t cluster) const { return choice_.at(cluster); }

private:
    std::shared_ptr<const ClusterProfile> profile_;
    std::vector<std::size_t> choice_;
    double epsilon_;
};

// ---------------------------------------------------------------------------
// Tabular softmax policy
// ---------------------------------------------------------------------------

/**
 * @brief Logit table over `actions = |S| + 1` per context.
 *
 * Context index is `cluster * (max_turns + 1) * 2 + turn * 2 + failed`.
 */
struct SoftmaxPolicyParams {
    std::size_t clusters = 1;
    std::size_t max_turns = 4;
    std::size_t actions = 1;
    double temperature = 1.0;
    std::vector<double> logits;

    static SoftmaxPolicyParams zeros(std::size_t clusters, std::size_t max_turns, std::size_t actions,
                                     double temperature = 1.0) {
        SoftmaxPolicyParams p{clusters, max_turns, actions, temperature, {}};
        p.logits.assign(p.contexts() * actions, 0.0);
        return p;
    }

    std::size_t contexts() const { return clusters * (max_turns + 1) * 2; }

    std::size_t context_index(const PolicyContext& ctx) const {
        if (ctx.cluster >= clusters || ctx.turn > max_turns) {
            throw Error(ErrorCode::out_of_range, "policy context (cluster " + std::to_string(ctx.cluster) +
                                                     ", turn " + std::to_string(ctx.turn) + ") out of range");
        }
        return ctx.cluster * (max_turns + 1) * 2 + ctx.turn * 2 + (ctx.last_step_failed ? 1 : 0);
    }

    std::span<const double> row(std::size_t context) const {
        return std::span<const double>(logits).subspan(context * actions, actions);
    }
    std::span<double> row(std::size_t context) { return std::span<double>(logits).subspan(context * actions, actions); }
};

/// softmax(logits / temperature), computed with max subtraction.
inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
    if (!(temperature > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "temperature must be positive");
    }
    std::vector<double> p(logits.size());
    double m = -std::numeric_limits<double>::infinity();
    for (double z : logits) {
        m = std::max(m, z / temperature);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] / temperature - m);
        total += p[i];
    }
    for (double& x : p) {
        x /= total;
    }
    return p;
}

inline std::vector<double> action_distribution(const SoftmaxPolicyParams& params, const PolicyContext& ctx) {
    return softmax(params.row(params.context_index(ctx)), params.temperature);
}

inline ActionIndex sample_action(const SoftmaxPolicyParams& params, const PolicyContext& ctx, Rng& rng) {
    return rng.categorical(action_distribution(params, ctx));
}

/// Shannon entropy in nats with 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p) {
        if (x > 0.0) {
            h -= x * std::log(x);
        }
    }
    return h;
}

/// KL(p || q) in nats.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            d += p[i] * (std::log(p[i]) - std::log(q[i]));
        }
    }
    return d;
}

class SoftmaxPolicy final : public RoutingPolicy {
public:
    SoftmaxPolicy(SoftmaxPolicyParams params, QueryLocator locator, std::string label = "softmax")
        : params_(std::move(params)), locator_(std::move(locator)), label_(std::move(label)) {
        if (locator_.clusters() != params_.clusters) {
            throw Error(ErrorCode::invalid_argument, "locator and policy table disagree on the cluster count");
        }
    }
    std::string name() const override { return label_; }
    std::size_t locate(const QueryRecord& q) const override { return locator_.locate(q.query); }
    ActionIndex act(const PolicyContext& ctx, Rng& rng) const override { return sample_action(params_, ctx, rng); }

    const SoftmaxPolicyParams& params() const { return params_; }
    SoftmaxPolicyParams& params() { return params_; }
    const QueryLocator& locator() const { return locator_; }

private:
    SoftmaxPolicyParams params_;
    QueryLocator locator_;
    std::string label_;
};

// ---------------------------------------------------------------------------
// Policy-gradient update
// ---------------------------------------------------------------------------

struct TrainerConfig {
    /// Tabular logits; 1.0 leaves the retry contexts under-trained after 250 steps, 5.0 locks in early.
    double learning_rate = 2.0;
    double kl_beta = 0.001;
    std::size_t batch_size = 32;
    std::size_t total_steps = 250;
    double temperature = 1.0;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct UpdateDiagnostics {
    double mean_reward = 0.0;
    double mean_entropy = 0.0;
    double mean_kl = 0.0;
};

/**
 * One ascent step on
 *
 *     sum_steps (R - b) * grad log pi(a | ctx)  -  beta * grad KL(pi(.|ctx) || ref(.|ctx))
 *
 * averaged over the batch, with b the batch-mean total reward and the KL
 * term taken in closed form at every visited context. Diagnostics are
 * measured before the update, at the parameters that generated the batch.
 */
inline UpdateDiagnostics policy_gradient_update(SoftmaxPolicyParams& params, const std::vector<EpisodeRecord>& batch,
                                                const SoftmaxPolicyParams& ref, const TrainerConfig& config) {
    if (batch.empty()) {
        throw Error(ErrorCode::empty_batch, "policy update needs at least one episode");
    }
    if (ref.logits.size() != params.logits.size()) {
        throw Error(ErrorCode::invalid_argument, "reference policy shape differs");
    }
    const double t = params.temperature;
    double baseline = 0.0;
    for (const auto& r : batch) {
        baseline += r.reward.total;
    }
    baseline /= static_cast<double>(batch.size());

    std::vector<double> grad(params.logits.size(), 0.0);
    double ent_sum = 0.0;
    double kl_sum = 0.0;
    std::size_t visits = 0;
    for (const auto& rec : batch) {
        const double adv = rec.reward.total - baseline;
        for (const auto& s : rec.steps) {
            const std::size_t c = params.context_index(s.ctx);
            const auto p = softmax(params.row(c), t);
            const auto q = softmax(ref.row(c), ref.temperature);
            const double kl = kl_divergence(p, q);
            ent_sum += entropy(p);
            kl_sum += kl;
            ++visits;
            auto g = std::span<double>(grad).subspan(c * params.actions, params.actions);
            for (std::size_t j = 0; j < params.actions; ++j) {
                const double onehot = j == s.action ? 1.0 : 0.0;
                g[j] += adv * (onehot - p[j]) / t;
                if (p[j] > 0.0) {
                    g[j] -= config.kl_beta * p[j] * (std::log(p[j]) - std::log(q[j]) - kl) / t;
                }
            }
        }
    }
    const double step = config.learning_rate / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        params.logits[i] += step * grad[i];
    }
    UpdateDiagnostics d;
    d.mean_reward = baseline;
    d.mean_entropy = visits ? ent_sum / static_cast<double>(visits) : 0.0;
    d.mean_kl = visits ? kl_sum / static_cast<double>(visits) : 0.0;
    return d;
}

// ---------------------------------------------------------------------------
// Rollouts and training loop
// ---------------------------------------------------------------------------

/// Runs `fn(i)` for i in [0, n) across up to `jobs` threads. Each index is
/// handled by exactly one thread, so results indexed by i are deterministic.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += jobs) {
                    fn(i);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

struct CurvePoint {
    std::size_t step = 0;
    double mean_reward = 0.0;
    /// Mean of fmt + gamma * out, the reward without the selection term.
    double mean_task_reward = 0.0;
    double entropy = 0.0;
    double kl = 0.0;
};

struct TrainResult {
    SoftmaxPolicyParams params;
    std::vector<CurvePoint> curve;
};

/**
 * Synchronous batch training: each step samples `batch_size` training
 * queries, rolls out episodes against a read-only snapshot of the current
 * parameters, and applies one policy_gradient_update. The reference policy
 * is the initial parameter table. Every RNG stream is derived from
 * (seed, step, slot), so `jobs` never changes the result.
 */
inline TrainResult train_policy(const SoftmaxPolicy& initial, const Executor& executor, const EvalDataset& train,
                                const EpisodeOptions& options, const TrainerConfig& config) {
    if (train.empty()) {
        throw Error(ErrorCode::empty_batch, "training set is empty");
    }
    if (!(config.learning_rate > 0) || config.batch_size == 0 || !(config.temperature > 0) || config.kl_beta < 0) {
        throw Error(ErrorCode::invalid_argument, "trainer settings must be positive");
    }
    SoftmaxPolicy policy = initial;
    policy.params().temperature = config.temperature;
    const SoftmaxPolicyParams ref = policy.params();

    // Context clusters are fixed per query; locate once.
    std::vector<std::size_t> clusters(train.size());
    parallel_for(train.size(), config.jobs, [&](std::size_t i) { clusters[i] = policy.locate(train[i]); });

    struct Located final : RoutingPolicy {
        const SoftmaxPolicy* inner;
        std::size_t cluster;
        std::string name() const override { return inner->name(); }
        std::size_t locate(const QueryRecord&) const override { return cluster; }
        ActionIndex act(const PolicyContext& ctx, Rng& rng) const override { return inner->act(ctx, rng); }
    };

    TrainResult result;
    std::vector<EpisodeRecord> batch(config.batch_size);
    for (std::size_t s = 0; s < config.total_steps; ++s) {
        Rng pick = Rng::stream(config.seed, s, 0);
        std::vector<std::size_t> idx(config.batch_size);
        for (auto& i : idx) {
            i = pick.uniform_index(train.size());
        }
        const SoftmaxPolicy snapshot = policy;
        parallel_for(config.batch_size, config.jobs, [&](std::size_t b) {
            Located lp;
            lp.inner = &snapshot;
            lp.cluster = clusters[idx[b]];
            batch[b] = run_episode(lp, train[idx[b]], executor, options, derive_seed(config.seed, s, b + 1));
        });
        double task = 0.0;
        for (const auto& r : batch) {
            task += r.reward.fmt + options.weights.gamma * r.reward.out;
        }
        const auto diag = policy_gradient_update(policy.params(), batch, ref, config);
        result.curve.push_back({s + 1, diag.mean_reward, task / static_cast<double>(batch.size()), diag.mean_entropy,
                                diag.mean_kl});
    }
    result.params = policy.params();
    return result;
}

// ---- checkpoint (JSON, version 1) ----

inline json policy_to_json(const SoftmaxPolicy& policy, const RoutingPool& pool) {
    const auto& p = policy.params();
    json rows = json::array();
    for (std::size_t c = 0; c < p.contexts(); ++c) {
        auto r = p.row(c);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"version", 1},
            {"pool_fingerprint", pool.fingerprint()},
            {"max_turns", p.max_turns},
            {"clusters", p.clusters},
            {"actions", p.actions},
            {"temperature", p.temperature},
            {"locator", policy.locator().to_json()},
            {"logits", rows}};
}

inline SoftmaxPolicy policy_from_json(const json& doc, const RoutingPool& pool, std::string label = "softmax") {
    detail::require_version(doc, 1, "policy checkpoint");
    try {
        if (doc.at("pool_fingerprint").get<std::string>() != pool.fingerprint()) {
            throw Error(ErrorCode::schema_error, "policy checkpoint was trained on a different pool");
        }
        auto params = SoftmaxPolicyParams::zeros(doc.at("clusters").get<std::size_t>(),
                                                 doc.at("max_turns").get<std::size_t>(),
                                                 doc.at("actions").get<std::size_t>(), doc.at("temperature").get<double>());
        if (params.actions != pool.pair_count() + 1) {
            throw Error(ErrorCode::schema_error, "policy checkpoint action count does not match the pool");
        }
        const auto& rows = doc.at("logits");
        if (rows.size() != params.contexts()) {
            throw Error(ErrorCode::schema_error, "policy checkpoint has the wrong number of contexts");
        }
        for (std::size_t c = 0; c < rows.size(); ++c) {
            const auto row = rows[c].get<std::vector<double>>();
            if (row.size() != params.actions) {
                throw Error(ErrorCode::schema_error, "policy checkpoint row has the wrong width");
            }
            std::copy(row.begin(), row.end(), params.row(c).begin());
        }
        return SoftmaxPolicy(std::move(params), QueryLocator::from_json(doc.at("locator")), std::move(label));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_error, std::string("policy checkpoint: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Factory
// ---------------------------------------------------------------------------

struct PolicyDeps {
    std::shared_ptr<const RoutingPool> pool;
    std::shared_ptr<const ClusterProfile> profile;
    UtilityConfig utility;
    std::optional<SoftmaxPolicy> trained;
};

/**
 * Kinds: "random", "cluster" (alias "cluster-greedy"), "epsilon:<e>",
 * "softmax" (requires `deps.trained`).
 */
inline std::unique_ptr<RoutingPolicy> make_policy(std::string_view kind, const PolicyDeps& deps) {
    if (kind == "random") {
        if (!deps.pool) {
            throw Error(ErrorCode::missing_dependency, "random policy requires a pool");
        }
        return std::make_unique<RandomRouter>(deps.pool->pair_count());
    }
    if (kind == "cluster" || kind == "cluster-greedy") {
        if (!deps.profile) {
            throw Error(ErrorCode::missing_dependency, "cluster-greedy policy requires a profile");
        }
        return std::make_unique<ClusterGreedy>(deps.profile, deps.utility);
    }
    if (kind.substr(0, 8) == "epsilon:") {
        if (!deps.profile) {
            throw Error(ErrorCode::missing_dependency, "epsilon-greedy policy requires a profile");
        }
        const double eps = std::stod(std::string(kind.substr(8)));
        if (!(eps >= 0.0 && eps <= 1.0)) {
            throw Error(ErrorCode::invalid_argument, "epsilon must lie in [0, 1]");
        }
        return std::make_unique<ClusterGreedy>(deps.profile, deps.utility, eps);
    }
    if (kind == "softmax") {
        if (!deps.trained) {
            throw Error(ErrorCode::missing_dependency, "softmax policy requires a trained checkpoint");
        }
        return std::make_unique<SoftmaxPolicy>(*deps.trained);
    }
    throw Error(ErrorCode::invalid_argument, "unknown policy kind '" + std::string(kind) + "'");
}

} // namespace atlas
