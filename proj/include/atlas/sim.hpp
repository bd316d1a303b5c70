#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "atlas/core.hpp"
#include "atlas/dataset.hpp"
#include "atlas/random.hpp"
#include "atlas/reward.hpp"

/**
 * @file sim.hpp
 *
 * @brief Planted simulation of a model-tool pool: each domain has per-pair
 * success probabilities and token-count models, and generates queries from
 * its own vocabulary.
 */

namespace atlas {

struct SimDomain {
    std::string id;
    std::vector<std::string> vocabulary;
    std::size_t query_length = 8;
    /// Model named by the optimal-model table for this domain's queries.
    std::string optimal_model;
};

struct TokenModel {
    std::uint64_t mean_in = 200;
    std::uint64_t mean_out = 100;
    /// Counts are drawn uniformly from mean ± jitter (floored at 0).
    std::uint64_t jitter = 0;
};

struct SimPoolConfig {
    std::shared_ptr<const RoutingPool> pool;
    std::vector<SimDomain> domains;
    /// domain id -> success probability per pair index.
    std::map<std::string, std::vector<double>> success_prob;
    std::vector<TokenModel> tokens; // per pair index
    std::uint64_t seed = 0;

    const SimDomain* find_domain(const std::string& id) const {
        for (const auto& d : domains) {
            if (d.id == id) {
                return &d;
            }
        }
        return nullptr;
    }

    double p(const std::string& domain, std::size_t pair_index) const {
        auto it = success_prob.find(domain);
        if (it == success_prob.end()) {
            throw Error(ErrorCode::invalid_argument, "domain '" + domain + "' is not simulated");
        }
        return it->second.at(pair_index);
    }

    const TokenModel& token_model(std::size_t pair_index) const { return tokens.at(pair_index); }

    /// Pair with the highest success probability in `domain` (lowest index on ties).
    std::size_t best_pair(const std::string& domain) const {
        const auto& ps = success_prob.at(domain);
        std::size_t best = 0;
        for (std::size_t i = 1; i < ps.size(); ++i) {
            if (ps[i] > ps[best]) {
                best = i;
            }
        }
        return best;
    }

    /// Domains whose maximum probability is attained by more than one pair.
    std::vector<std::string> ambiguous_domains() const {
        std::vector<std::string> out;
        for (const auto& [d, ps] : success_prob) {
            const double m = ps.at(best_pair(d));
            std::size_t n = 0;
            for (double p : ps) {
                n += p == m ? 1 : 0;
            }
            if (n > 1) {
                out.push_back(d);
            }
        }
        return out;
    }
};

inline void validate(const SimPoolConfig& sim) {
    if (!sim.pool) {
        throw Error(ErrorCode::schema_error, "sim config has no pool");
    }
    const auto n = sim.pool->pair_count();
    if (sim.tokens.size() != n) {
        throw Error(ErrorCode::schema_error, "sim config token model does not cover every pair");
    }
    for (const auto& d : sim.domains) {
        auto it = sim.success_prob.find(d.id);
        if (it == sim.success_prob.end() || it->second.size() != n) {
            throw Error(ErrorCode::schema_error, "success probabilities missing for domain '" + d.id + "'");
        }
        for (double p : it->second) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw Error(ErrorCode::schema_error, "success probability outside [0, 1] in domain '" + d.id + "'");
            }
        }
        if (d.vocabulary.empty()) {
            throw Error(ErrorCode::schema_error, "domain '" + d.id + "' has an empty vocabulary");
        }
        if (!d.optimal_model.empty() && !sim.pool->find_model(d.optimal_model)) {
            throw Error(ErrorCode::unknown_model, "optimal model '" + d.optimal_model + "' is not in the pool");
        }
    }
}

inline json sim_to_json(const SimPoolConfig& sim) {
    const auto& pool = *sim.pool;
    json domains = json::array();
    for (const auto& d : sim.domains) {
        domains.push_back({{"id", d.id},
                           {"vocabulary", d.vocabulary},
                           {"query_length", d.query_length},
                           {"optimal_model", d.optimal_model}});
    }
    json probs = json::array();
    for (const auto& d : sim.domains) {
        const auto& ps = sim.success_prob.at(d.id);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const auto pair = pool.pair_at(i);
            probs.push_back({{"domain", d.id}, {"model", pool.model(pair).name}, {"tool", pool.tool(pair).name}, {"p", ps[i]}});
        }
    }
    json tokens = json::array();
    for (std::size_t i = 0; i < sim.tokens.size(); ++i) {
        const auto pair = pool.pair_at(i);
        tokens.push_back({{"model", pool.model(pair).name},
                          {"tool", pool.tool(pair).name},
                          {"mean_in", sim.tokens[i].mean_in},
                          {"mean_out", sim.tokens[i].mean_out},
                          {"jitter", sim.tokens[i].jitter}});
    }
    return {{"version", 1},
            {"seed", sim.seed},
            {"pool", pool_to_json(pool)},
            {"domains", domains},
            {"success_prob", probs},
            {"token_model", tokens}};
}

/// Pairs absent from `success_prob` default to `default_success_prob` (0 if
/// unset); pairs absent from `token_model` use `default_tokens`.
inline SimPoolConfig sim_from_json(const json& doc) {
    detail::require_version(doc, 1, "sim config");
    SimPoolConfig sim;
    try {
        sim.pool = std::make_shared<const RoutingPool>(pool_from_json(doc.at("pool")));
        sim.seed = doc.value("seed", std::uint64_t{0});
        const auto n = sim.pool->pair_count();
        const double default_p = doc.value("default_success_prob", 0.0);
        for (const auto& d : doc.at("domains")) {
            SimDomain dom;
            dom.id = d.at("id").get<std::string>();
            dom.vocabulary = d.at("vocabulary").get<std::vector<std::string>>();
            dom.query_length = d.value("query_length", dom.query_length);
            dom.optimal_model = d.value("optimal_model", "");
            sim.success_prob[dom.id].assign(n, default_p);
            sim.domains.push_back(std::move(dom));
        }
        for (const auto& row : doc.value("success_prob", json::array())) {
            const auto domain = row.at("domain").get<std::string>();
            auto it = sim.success_prob.find(domain);
            if (it == sim.success_prob.end()) {
                throw Error(ErrorCode::schema_error, "success_prob names unknown domain '" + domain + "'");
            }
            const auto pair = sim.pool->resolve(row.at("model").get<std::string>(), row.at("tool").get<std::string>());
            it->second[sim.pool->pair_index(pair)] = row.at("p").get<double>();
        }
        TokenModel fallback;
        if (doc.contains("default_tokens")) {
            const auto& t = doc.at("default_tokens");
            fallback.mean_in = t.value("mean_in", fallback.mean_in);
            fallback.mean_out = t.value("mean_out", fallback.mean_out);
            fallback.jitter = t.value("jitter", fallback.jitter);
        }
        sim.tokens.assign(n, fallback);
        for (const auto& row : doc.value("token_model", json::array())) {
            const auto pair = sim.pool->resolve(row.at("model").get<std::string>(), row.at("tool").get<std::string>());
            auto& t = sim.tokens[sim.pool->pair_index(pair)];
            t.mean_in = row.value("mean_in", fallback.mean_in);
            t.mean_out = row.value("mean_out", fallback.mean_out);
            t.jitter = row.value("jitter", fallback.jitter);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_error, std::string("sim config: ") + e.what());
    }
    validate(sim);
    return sim;
}

/// Parameters of a generated planted simulation.
struct PlantedSpec {
    std::size_t domains = 3;
    std::size_t models = 3;
    std::size_t tools = 2;
    double p_best = 0.9;
    double p_other = 0.3;
    std::size_t vocabulary_size = 40;
    std::size_t query_length = 8;
    std::uint64_t seed = 0;
};

/**
 * Builds a planted pool: `models x tools` simulated pairs, one distinct best
 * pair per domain (pair index `d * stride` spread over the pair space),
 * disjoint per-domain vocabularies, and model prices increasing with the model
 * index.
 */
inline SimPoolConfig make_planted_sim(const PlantedSpec& spec) {
    std::vector<ModelSpec> models;
    PriceSheet prices;
    for (std::size_t m = 0; m < spec.models; ++m) {
        const auto name = "model-" + std::to_string(m);
        models.push_back({name, std::nullopt, "simulated model"});
        // 1e-6 * (m + 1) input, twice that for output.
        prices[name] = {Money{static_cast<std::int64_t>(1'000'000 * (m + 1))},
                        Money{static_cast<std::int64_t>(2'000'000 * (m + 1))}};
    }
    std::vector<ToolSpec> tools;
    for (std::size_t t = 0; t < spec.tools; ++t) {
        tools.push_back({"tool-" + std::to_string(t), ToolKind::simulated, json::object()});
    }
    SimPoolConfig sim;
    sim.pool = std::make_shared<const RoutingPool>(build_pool(std::move(models), std::move(tools), std::move(prices)));
    sim.seed = spec.seed;
    const auto n = sim.pool->pair_count();
    if (spec.domains > n) {
        throw Error(ErrorCode::invalid_argument, "need at least as many pairs as domains for distinct planted pairs");
    }
    const std::size_t stride = std::max<std::size_t>(1, n / std::max<std::size_t>(1, spec.domains));
    for (std::size_t d = 0; d < spec.domains; ++d) {
        SimDomain dom;
        dom.id = "domain-" + std::to_string(d);
        for (std::size_t w = 0; w < spec.vocabulary_size; ++w) {
            dom.vocabulary.push_back("d" + std::to_string(d) + "w" + std::to_string(w));
        }
        dom.query_length = spec.query_length;
        const std::size_t best = (d * stride) % n;
        std::vector<double> ps(n, spec.p_other);
        ps[best] = spec.p_best;
        dom.optimal_model = sim.pool->model(sim.pool->pair_at(best)).name;
        sim.success_prob[dom.id] = std::move(ps);
        sim.domains.push_back(std::move(dom));
    }
    sim.tokens.assign(n, TokenModel{200, 100, 20});
    validate(sim);
    return sim;
}

/// Query `i` of a split belongs to domain `i % |domains|`; text, gold and id
/// are deterministic in (seed, split, i).
inline EvalDataset generate_queries(const SimPoolConfig& sim, std::size_t count, const std::string& split,
                                    std::uint64_t seed) {
    EvalDataset out;
    out.reserve(count);
    const auto split_salt = fnv1a64(split);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& dom = sim.domains[i % sim.domains.size()];
        Rng rng = Rng::stream(seed, split_salt, i);
        std::string text;
        for (std::size_t w = 0; w < dom.query_length; ++w) {
            if (w > 0) {
                text += ' ';
            }
            text += dom.vocabulary[rng.uniform_index(dom.vocabulary.size())];
        }
        QueryRecord r;
        r.id = split + "-" + std::to_string(i);
        r.query = std::move(text);
        r.gold = "ans-" + hex64(rng.next_u64()).substr(0, 10);
        r.domain = dom.id;
        r.matcher = "exact";
        out.push_back(std::move(r));
    }
    return out;
}

/// Optimal-model table from each query's domain.
inline OptimalModelTable optimal_table(const SimPoolConfig& sim, const EvalDataset& data) {
    OptimalModelTable t;
    for (const auto& r : data) {
        if (const auto* d = sim.find_domain(r.domain); d != nullptr && !d->optimal_model.empty()) {
            t.set(r.id, d->optimal_model);
        }
    }
    return t;
}

} // namespace atlas
