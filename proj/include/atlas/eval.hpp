#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "atlas/dataset.hpp"
#include "atlas/env.hpp"
#include "atlas/io.hpp"
#include "atlas/policy.hpp"
#include "atlas/reward.hpp"

/**
 * @file eval.hpp
 *
 * @brief pass@k, self-consistency, usage accounting and router comparison.
 */

namespace atlas {

/// Row q holds the binary outcomes of the sampled runs for query q.
using OutcomeMatrix = std::vector<std::vector<int>>;

/// Fraction of rows whose first k outcomes contain a success.
inline double pass_at_k(const OutcomeMatrix& m, std::size_t k) {
    if (k == 0) {
        throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    }
    if (m.empty()) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (const auto& row : m) {
        if (row.size() < k) {
            throw Error(ErrorCode::out_of_range,
                        "k=" + std::to_string(k) + " exceeds a row of length " + std::to_string(row.size()));
        }
        hits += std::any_of(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), [](int x) { return x != 0; }) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(m.size());
}

/// Most frequent normalized answer among the first k; ties go to the answer seen first.
inline std::string majority_vote(const std::vector<std::string>& answers, std::size_t k) {
    if (answers.size() < k || k == 0) {
        throw Error(ErrorCode::out_of_range, "k=" + std::to_string(k) + " exceeds the " +
                                                 std::to_string(answers.size()) + " available answers");
    }
    std::vector<std::pair<std::string, std::size_t>> tally; // first-seen order
    for (std::size_t i = 0; i < k; ++i) {
        auto norm = normalize_answer(answers[i]);
        auto it = std::find_if(tally.begin(), tally.end(), [&](const auto& e) { return e.first == norm; });
        if (it == tally.end()) {
            tally.emplace_back(std::move(norm), 1);
        } else {
            ++it->second;
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < tally.size(); ++i) {
        if (tally[i].second > tally[best].second) {
            best = i;
        }
    }
    return tally[best].first;
}

/// Mean over queries of matcher(majority_vote(first k answers), gold).
inline double self_consistency(const std::vector<std::vector<std::string>>& answers, std::size_t k,
                               const std::vector<Matcher>& matchers, const std::vector<std::string>& gold) {
    if (answers.size() != gold.size() || matchers.size() != gold.size()) {
        throw Error(ErrorCode::invalid_argument, "answers, matchers and gold differ in length");
    }
    if (answers.empty()) {
        return 0.0;
    }
    double correct = 0.0;
    for (std::size_t q = 0; q < answers.size(); ++q) {
        correct += outcome_reward(majority_vote(answers[q], k), gold[q], matchers[q]);
    }
    return correct / static_cast<double>(answers.size());
}

inline double self_consistency(const std::vector<std::vector<std::string>>& answers, std::size_t k, Matcher matcher,
                               const std::vector<std::string>& gold) {
    return self_consistency(answers, k, std::vector<Matcher>(gold.size(), matcher), gold);
}

struct DomainUsage {
    std::size_t episodes = 0;
    std::size_t api_calls = 0;
    double mean_api_calls = 0.0;
    double median_api_calls = 0.0;
    Money cost;
    double mean_cost = 0.0;
};

struct UsageReport {
    std::size_t episodes = 0;
    std::size_t api_calls = 0;
    Money cost;
    double mean_api_calls = 0.0;
    double mean_cost = 0.0;
    std::map<std::string, DomainUsage> by_domain;
    /// api_calls value -> episode count
    std::map<std::size_t, std::size_t> api_call_histogram;
};

inline UsageReport usage_report(const std::vector<EpisodeRecord>& records) {
    UsageReport r;
    std::map<std::string, std::vector<std::size_t>> calls;
    for (const auto& e : records) {
        ++r.episodes;
        r.api_calls += e.api_calls;
        r.cost += e.cost;
        ++r.api_call_histogram[e.api_calls];
        auto& d = r.by_domain[e.domain];
        ++d.episodes;
        d.api_calls += e.api_calls;
        d.cost += e.cost;
        calls[e.domain].push_back(e.api_calls);
    }
    if (r.episodes == 0) {
        return r;
    }
    r.mean_api_calls = static_cast<double>(r.api_calls) / static_cast<double>(r.episodes);
    r.mean_cost = r.cost.to_double() / static_cast<double>(r.episodes);
    for (auto& [name, d] : r.by_domain) {
        auto& v = calls[name];
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        d.median_api_calls = n % 2 == 1 ? static_cast<double>(v[n / 2])
                                        : (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
        d.mean_api_calls = static_cast<double>(d.api_calls) / static_cast<double>(d.episodes);
        d.mean_cost = d.cost.to_double() / static_cast<double>(d.episodes);
    }
    return r;
}

struct MetricReport {
    std::string policy;
    double accuracy = 0.0;
    std::map<std::size_t, double> pass_at;
    std::map<std::size_t, double> sc_at;
    std::map<std::string, double> accuracy_by_domain;
    UsageReport usage;
    double mean_reward = 0.0;
    std::optional<std::string> error;
};

/// 1, 2, 4, ... up to and including k.
inline std::vector<std::size_t> k_ladder(std::size_t k) {
    std::vector<std::size_t> ks;
    for (std::size_t x = 1; x < k; x *= 2) {
        ks.push_back(x);
    }
    ks.push_back(k);
    return ks;
}

struct CompareOptions {
    std::size_t samples = 1;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    EpisodeOptions episode;
};

/// Runs `samples` episodes per query and summarizes them. Episode seeds
/// depend only on (seed, query index, sample), not on the policy.
inline MetricReport evaluate_policy(const RoutingPolicy& policy, const EvalDataset& data, const Executor& executor,
                                    const CompareOptions& opts, std::vector<EpisodeRecord>* episodes_out = nullptr) {
    MetricReport rep;
    rep.policy = policy.name();
    const std::size_t k = std::max<std::size_t>(1, opts.samples);
    std::vector<EpisodeRecord> episodes(data.size() * k);
    parallel_for(episodes.size(), opts.jobs, [&](std::size_t i) {
        const std::size_t q = i / k;
        episodes[i] = run_episode(policy, data[q], executor, opts.episode, derive_seed(opts.seed, q, i % k));
    });
    OutcomeMatrix outcomes(data.size(), std::vector<int>(k));
    std::vector<std::vector<std::string>> answers(data.size(), std::vector<std::string>(k));
    std::vector<Matcher> matchers;
    std::vector<std::string> gold;
    std::map<std::string, std::pair<double, std::size_t>> domain_acc;
    double reward = 0.0;
    for (std::size_t q = 0; q < data.size(); ++q) {
        for (std::size_t s = 0; s < k; ++s) {
            const auto& e = episodes[q * k + s];
            outcomes[q][s] = e.reward.out > 0.5 ? 1 : 0;
            answers[q][s] = e.answer;
            reward += e.reward.total;
        }
        matchers.push_back(matcher_from_string(data[q].matcher));
        gold.push_back(data[q].gold);
        auto& d = domain_acc[data[q].domain];
        d.first += outcomes[q][0];
        ++d.second;
    }
    for (std::size_t kk : k_ladder(k)) {
        rep.pass_at[kk] = pass_at_k(outcomes, kk);
        rep.sc_at[kk] = self_consistency(answers, kk, matchers, gold);
    }
    rep.accuracy = rep.pass_at.at(1);
    for (const auto& [name, v] : domain_acc) {
        rep.accuracy_by_domain[name] = v.first / static_cast<double>(v.second);
    }
    rep.usage = usage_report(episodes);
    rep.mean_reward = episodes.empty() ? 0.0 : reward / static_cast<double>(episodes.size());
    if (episodes_out) {
        *episodes_out = std::move(episodes);
    }
    return rep;
}

/// One report per policy, in input order. A policy that throws yields a
/// report with `error` set; the others still run.
inline std::vector<MetricReport> compare_routers(const std::vector<const RoutingPolicy*>& policies,
                                                 const EvalDataset& data, const Executor& executor,
                                                 const CompareOptions& opts) {
    std::vector<MetricReport> out;
    for (const auto* p : policies) {
        try {
            out.push_back(evaluate_policy(*p, data, executor, opts));
        } catch (const std::exception& e) {
            MetricReport r;
            r.policy = p->name();
            r.error = e.what();
            out.push_back(std::move(r));
        }
    }
    return out;
}

inline std::string reports_csv(const std::vector<MetricReport>& reports, std::size_t samples) {
    const auto ks = k_ladder(std::max<std::size_t>(1, samples));
    std::string out = "policy,accuracy";
    for (auto k : ks) {
        out += ",pass@" + std::to_string(k);
    }
    for (auto k : ks) {
        out += ",sc@" + std::to_string(k);
    }
    out += ",mean_api_calls,mean_cost,mean_reward,error\n";
    for (const auto& r : reports) {
        out += r.policy + "," + io::fixed(r.accuracy);
        for (auto k : ks) {
            out += "," + (r.error ? std::string() : io::fixed(r.pass_at.at(k)));
        }
        for (auto k : ks) {
            out += "," + (r.error ? std::string() : io::fixed(r.sc_at.at(k)));
        }
        out += "," + io::fixed(r.usage.mean_api_calls) + "," + io::fixed(r.usage.mean_cost, 9) + "," +
               io::fixed(r.mean_reward);
        std::string err = r.error.value_or("");
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out += "," + err + "\n";
    }
    return out;
}

inline std::string reports_table(const std::vector<MetricReport>& reports, std::size_t samples) {
    const auto ks = k_ladder(std::max<std::size_t>(1, samples));
    std::size_t w = 8;
    for (const auto& r : reports) {
        w = std::max(w, r.policy.size() + 2);
    }
    auto pad = [&](std::string s, std::size_t width) {
        if (s.size() < width) {
            s.append(width - s.size(), ' ');
        }
        return s;
    };
    std::string out = pad("policy", w) + pad("acc", 9);
    for (auto k : ks) {
        out += pad("pass@" + std::to_string(k), 9);
    }
    out += pad("sc@" + std::to_string(ks.back()), 9) + pad("calls", 8) + "cost\n";
    for (const auto& r : reports) {
        out += pad(r.policy, w);
        if (r.error) {
            out += "ERROR: " + *r.error + "\n";
            continue;
        }
        out += pad(io::fixed(r.accuracy, 4), 9);
        for (auto k : ks) {
            out += pad(io::fixed(r.pass_at.at(k), 4), 9);
        }
        out += pad(io::fixed(r.sc_at.at(ks.back()), 4), 9) + pad(io::fixed(r.usage.mean_api_calls, 2), 8) +
               io::fixed(r.usage.mean_cost, 9) + "\n";
    }
    return out;
}

inline json report_to_json(const MetricReport& r) {
    json j{{"policy", r.policy}};
    if (r.error) {
        j["error"] = *r.error;
        return j;
    }
    json pass = json::object();
    for (const auto& [k, v] : r.pass_at) {
        pass[std::to_string(k)] = v;
    }
    json sc = json::object();
    for (const auto& [k, v] : r.sc_at) {
        sc[std::to_string(k)] = v;
    }
    json domains = json::object();
    for (const auto& [name, u] : r.usage.by_domain) {
        domains[name] = {{"accuracy", r.accuracy_by_domain.count(name) ? r.accuracy_by_domain.at(name) : 0.0},
                         {"episodes", u.episodes},
                         {"mean_api_calls", u.mean_api_calls},
                         {"median_api_calls", u.median_api_calls},
                         {"mean_cost", u.mean_cost}};
    }
    json hist = json::object();
    for (const auto& [calls, n] : r.usage.api_call_histogram) {
        hist[std::to_string(calls)] = n;
    }
    j["accuracy"] = r.accuracy;
    j["pass_at"] = pass;
    j["sc_at"] = sc;
    j["mean_reward"] = r.mean_reward;
    j["usage"] = {{"episodes", r.usage.episodes},
                  {"api_calls", r.usage.api_calls},
                  {"mean_api_calls", r.usage.mean_api_calls},
                  {"total_cost", detail::money_to_json(r.usage.cost)},
                  {"mean_cost", r.usage.mean_cost},
                  {"api_call_histogram", hist}};
    j["domains"] = domains;
    return j;
}

} // namespace atlas
