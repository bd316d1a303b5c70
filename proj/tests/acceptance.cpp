// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Every tolerance used below is fixed here, not read from configuration.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "atlas/cli.hpp"

using namespace atlas;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 7;
constexpr std::size_t kQueries = 300;
constexpr std::size_t kTrainSeeds = 20;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double binomial_sigma(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

std::string num(double v, int precision = 4) { return io::fixed(v, precision); }

// ---- shared planted setup ----

struct Planted {
    std::shared_ptr<const SimPoolConfig> sim;
    std::unique_ptr<Executor> executor;
    EvalDataset train;
    EvalDataset test;
    OptimalModelTable table;
    EncoderConfig encoder = HashedEncoderConfig{256, kSeed, true};
};

const Planted& planted() {
    static const Planted p = [] {
        Planted s;
        PlantedSpec spec;
        spec.domains = 3;
        spec.models = 3;
        spec.tools = 2;
        spec.p_best = 0.9;
        spec.p_other = 0.3;
        spec.seed = kSeed;
        s.sim = std::make_shared<const SimPoolConfig>(make_planted_sim(spec));
        ExecutorConfig cfg;
        cfg.sim = s.sim;
        s.executor = std::make_unique<Executor>(s.sim->pool, cfg);
        s.train = generate_queries(*s.sim, kQueries, "train", kSeed);
        s.test = generate_queries(*s.sim, kQueries, "test", kSeed);
        EvalDataset both = s.train;
        both.insert(both.end(), s.test.begin(), s.test.end());
        s.table = optimal_table(*s.sim, both);
        return s;
    }();
    return p;
}

std::shared_ptr<const ClusterProfile> fitted_profile(std::size_t k) {
    const auto& p = planted();
    ProfileFitOptions opts;
    opts.kmeans.k = k;
    opts.seed = kSeed;
    return std::make_shared<const ClusterProfile>(fit_profile(p.train, *p.executor, p.encoder, opts));
}

MetricReport evaluate(const RoutingPolicy& policy, std::size_t samples = 1, const OptimalModelTable* table = nullptr,
                      std::vector<EpisodeRecord>* episodes = nullptr) {
    const auto& p = planted();
    CompareOptions co;
    co.samples = samples;
    co.seed = kSeed;
    co.episode.table = table;
    return evaluate_policy(policy, p.test, *p.executor, co, episodes);
}

double greedy_accuracy(std::size_t k) {
    UtilityConfig u;
    u.alpha = 0.0;
    return evaluate(ClusterGreedy(fitted_profile(k), u)).accuracy;
}

// ---- training runs shared by criteria 5, 6 and 8 ----

struct TrainRun {
    SoftmaxPolicy policy;
    std::vector<CurvePoint> curve;
};

SoftmaxPolicy initial_policy(std::uint64_t seed) {
    const auto& p = planted();
    std::vector<std::string> texts;
    for (const auto& q : p.train) {
        texts.push_back(q.query);
    }
    const EncoderConfig enc = HashedEncoderConfig{256, seed, true};
    KMeansOptions ko;
    ko.k = 3;
    ko.seed = seed;
    auto model = fit_kmeans(batch_encode(enc, texts), ko);
    return SoftmaxPolicy(SoftmaxPolicyParams::zeros(3, 4, p.sim->pool->pair_count() + 1),
                         QueryLocator::clustered(std::move(model), enc));
}

TrainRun train_run(std::uint64_t seed, bool selection) {
    const auto& p = planted();
    const auto init = initial_policy(seed);
    EpisodeOptions eo;
    eo.max_turns = 4;
    eo.table = selection ? &p.table : nullptr;
    TrainerConfig cfg;
    cfg.kl_beta = 0.001;
    cfg.temperature = 1.0;
    cfg.total_steps = 250;
    cfg.batch_size = 32;
    cfg.seed = seed;
    auto result = train_policy(init, *p.executor, p.train, eo, cfg);
    return {SoftmaxPolicy(result.params, init.locator(), "trained"), std::move(result.curve)};
}

const std::vector<TrainRun>& runs(bool selection) {
    static std::map<bool, std::vector<TrainRun>> cache;
    auto it = cache.find(selection);
    if (it == cache.end()) {
        std::vector<TrainRun> v;
        for (std::uint64_t s = 0; s < kTrainSeeds; ++s) {
            v.push_back(train_run(s, selection));
        }
        it = cache.emplace(selection, std::move(v)).first;
    }
    return it->second;
}

/// Knows each domain's planted pair: routes there, retries after a failure, answers after a success.
class PlantedOracle final : public RoutingPolicy {
public:
    std::string name() const override { return "oracle"; }
    std::size_t locate(const QueryRecord& q) const override {
        const auto& sim = *planted().sim;
        for (std::size_t d = 0; d < sim.domains.size(); ++d) {
            if (sim.domains[d].id == q.domain) {
                return d;
            }
        }
        throw Error(ErrorCode::invalid_argument, "unknown domain " + q.domain);
    }
    ActionIndex act(const PolicyContext& ctx, Rng&) const override {
        const auto& sim = *planted().sim;
        const std::size_t answer = sim.pool->pair_count();
        if (ctx.turn < 4 && (ctx.turn == 0 || ctx.last_step_failed)) {
            return sim.best_pair(sim.domains[ctx.cluster].id);
        }
        return answer;
    }
};

/// Routes until the budget refuses.
class AlwaysRoute final : public RoutingPolicy {
public:
    std::string name() const override { return "always-route"; }
    std::size_t locate(const QueryRecord&) const override { return 0; }
    ActionIndex act(const PolicyContext& ctx, Rng&) const override { return ctx.turn % 6; }
};

// ---- criteria ----

Verdict reward_corpus() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = cli::check_fixtures(fs::path(ATLAS_FIXTURE_DIR) / "traj", "");
    const double elapsed = seconds_since(t0);
    std::size_t agree = 0;
    std::set<std::string> alone;
    std::size_t combos = 0;
    std::set<std::string> all_rules;
    for (const auto& r : results) {
        agree += r.pass;
        if (r.expected.size() == 1) {
            alone.insert(r.expected.front());
        }
        combos += r.expected.size() >= 2;
        all_rules.insert(r.expected.begin(), r.expected.end());
    }
    const bool ok = results.size() >= 40 && agree == results.size() && alone.size() == 6 && all_rules.size() == 6 &&
                    combos > 0 && elapsed < 1.0;
    return {ok, std::to_string(agree) + "/" + std::to_string(results.size()) + " agree, " +
                    std::to_string(alone.size()) + " rules alone, " + std::to_string(combos) + " combinations, " +
                    num(elapsed, 3) + " s"};
}

Verdict composite_enumeration() {
    std::set<double> got;
    RewardWeights w;
    w.gamma = 1.0;
    w.xi = 1.0;
    for (double fmt : {0.0, -1.0}) {
        for (double out : {0.0, 1.0}) {
            for (double sel : {0.0, w.selection_penalty}) {
                got.insert(composite_reward(fmt, out, sel, w).total);
            }
        }
    }
    const std::set<double> want{-1.15, -1.0, -0.15, 0.0, 0.85, 1.0};
    std::string listed;
    for (double v : got) {
        listed += (listed.empty() ? "" : " ") + num(v, 2);
    }
    return {got == want, "{" + listed + "}"};
}

Verdict kmeans_properties() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(kSeed);
    auto points = [&](std::size_t n, std::size_t dim) {
        std::vector<Vector> v(n, Vector(dim));
        for (auto& p : v) {
            for (auto& x : p) {
                x = rng.uniform() * 20.0 - 10.0;
            }
        }
        return v;
    };
    std::size_t monotone = 0;
    std::size_t iterations = 0;
    bool reproducible = true;
    for (int trial = 0; trial < 100; ++trial) {
        const auto pts = points(50 + rng.uniform_index(151), 2 + rng.uniform_index(7));
        KMeansOptions o;
        o.k = 2 + rng.uniform_index(9);
        o.seed = static_cast<std::uint64_t>(trial);
        o.n_init = 3;
        std::vector<KMeansTrace> traces;
        const auto a = fit_kmeans(pts, o, &traces);
        bool ok = true;
        for (const auto& t : traces) {
            for (std::size_t i = 1; i < t.inertia.size(); ++i) {
                ++iterations;
                ok = ok && t.inertia[i] <= t.inertia[i - 1];
            }
        }
        monotone += ok;
        const auto b = fit_kmeans(pts, o);
        reproducible = reproducible && cluster_model_to_json(a).dump() == cluster_model_to_json(b).dump() &&
                       a.centroids == b.centroids;
    }
    std::size_t assign_ok = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t dim = 1 + rng.uniform_index(8);
        ClusterModel m;
        m.centroids = points(1 + rng.uniform_index(12), dim);
        const auto v = points(1, dim)[0];
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m.centroids.size(); ++k) {
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                s += (v[d] - m.centroids[k][d]) * (v[d] - m.centroids[k][d]);
            }
            if (s < best_d) {
                best_d = s;
                best = k;
            }
        }
        assign_ok += assign(m, v).cluster == best;
    }
    const double elapsed = seconds_since(t0);
    return {monotone == 100 && assign_ok == 10000 && reproducible && elapsed < 30.0,
            std::to_string(monotone) + "/100 monotone over " + std::to_string(iterations) + " iterations, " +
                std::to_string(assign_ok) + "/10000 assignments, reproducible=" + (reproducible ? "yes" : "no") +
                ", " + num(elapsed, 1) + " s"};
}

Verdict planted_gap() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& p = planted();
    const RandomRouter random(p.sim->pool->pair_count());
    const double r = evaluate(random).accuracy;
    bool ok = r >= 0.25 - 3 * binomial_sigma(0.25, kQueries) && r <= 0.45 + 3 * binomial_sigma(0.45, kQueries);
    std::string detail = "random " + num(r);
    for (std::size_t k : {3u, 8u}) {
        const double g = greedy_accuracy(k);
        ok = ok && g >= 0.85 - 3 * binomial_sigma(0.85, kQueries) && g - r >= 0.35;
        detail += ", cluster-greedy K=" + std::to_string(k) + " " + num(g) + " (gap " + num(g - r) + ")";
    }
    // Default trade-off, reported only.
    const double balanced = evaluate(ClusterGreedy(fitted_profile(3), UtilityConfig{})).accuracy;
    const double elapsed = seconds_since(t0);
    return {ok && elapsed < 60.0, detail + "; alpha=0.5 K=3 " + num(balanced) + " [info]; " + num(elapsed, 1) + " s"};
}

Verdict trained_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& p = planted();
    const double oracle = evaluate(PlantedOracle{}, 1, &p.table).mean_reward;
    std::size_t good = 0;
    double worst_reward = 1e9;
    double worst_prob = 1e9;
    for (const auto& run : runs(true)) {
        const double reward = evaluate(run.policy, 1, &p.table).mean_reward;
        double min_prob = 1.0;
        for (const auto& dom : p.sim->domains) {
            const std::size_t best = p.sim->best_pair(dom.id);
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& q : p.test) {
                if (q.domain == dom.id) {
                    const auto c = run.policy.locate(q);
                    sum += action_distribution(run.policy.params(), {c, 0, false})[best];
                    ++n;
                }
            }
            min_prob = std::min(min_prob, sum / static_cast<double>(n));
        }
        good += reward >= 0.9 * oracle && min_prob > 0.8;
        worst_reward = std::min(worst_reward, reward);
        worst_prob = std::min(worst_prob, min_prob);
    }
    const double elapsed = seconds_since(t0);
    return {good >= 17 && elapsed < 300.0,
            std::to_string(good) + "/20 seeds; oracle reward " + num(oracle) + ", worst seed reward " +
                num(worst_reward) + ", worst P(best) " + num(worst_prob) + ", " + num(elapsed, 1) + " s"};
}

Verdict selection_ablation() {
    auto steps_to = [](const std::vector<CurvePoint>& curve) {
        for (const auto& c : curve) {
            if (c.mean_task_reward >= 0.7) {
                return static_cast<double>(c.step);
            }
        }
        return static_cast<double>(curve.size() + 1);
    };
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
    };
    std::vector<double> with, without;
    double ent_with = 0.0, ent_without = 0.0;
    for (std::size_t s = 0; s < kTrainSeeds; ++s) {
        with.push_back(steps_to(runs(true)[s].curve));
        without.push_back(steps_to(runs(false)[s].curve));
        ent_with += runs(true)[s].curve.back().entropy / kTrainSeeds;
        ent_without += runs(false)[s].curve.back().entropy / kTrainSeeds;
    }
    const double mw = median(with), mo = median(without);
    return {mw <= mo && ent_with <= ent_without,
            "median steps " + num(mw, 1) + " vs " + num(mo, 1) + ", final entropy " + num(ent_with) + " vs " +
                num(ent_without)};
}

Verdict passk_properties() {
    Rng rng(kSeed);
    std::size_t monotone = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double p = rng.uniform();
        OutcomeMatrix m(50, std::vector<int>(16));
        for (auto& row : m) {
            for (auto& x : row) {
                x = rng.bernoulli(p);
            }
        }
        bool ok = true;
        for (std::size_t k = 2; k <= 16; ++k) {
            ok = ok && pass_at_k(m, k) >= pass_at_k(m, k - 1);
        }
        monotone += ok;
    }

    // i.i.d. task: every pair solves with p = 0.6, wrong answers are distinct strings.
    auto sim = std::make_shared<SimPoolConfig>();
    sim->pool = std::make_shared<const RoutingPool>(build_pool(
        {{"m", std::nullopt, ""}}, {{"t", ToolKind::simulated, json::object()}}, {{"m", {Money{1}, Money{1}}}}));
    SimDomain dom;
    dom.id = "iid";
    for (int w = 0; w < 10; ++w) {
        dom.vocabulary.push_back("w" + std::to_string(w));
    }
    dom.query_length = 4;
    sim->domains.push_back(dom);
    sim->success_prob["iid"] = {0.6};
    sim->tokens = {TokenModel{}};
    validate(*sim);
    ExecutorConfig cfg;
    cfg.sim = sim;
    const Executor ex(sim->pool, cfg);
    const std::size_t n = 400;
    const auto data = generate_queries(*sim, n, "iid", kSeed);
    const RandomRouter once(1);
    CompareOptions co;
    co.samples = 8;
    co.seed = kSeed;
    std::vector<EpisodeRecord> episodes;
    const auto rep = evaluate_policy(once, data, ex, co, &episodes);
    std::size_t first_correct = 0;
    for (std::size_t q = 0; q < n; ++q) {
        first_correct += episodes[q * 8].reward.out > 0.5;
    }
    const double margin = 3 * binomial_sigma(0.6, n);
    const bool sc_ok = rep.sc_at.at(8) >= rep.pass_at.at(1) + margin;
    const bool exact = rep.accuracy == rep.pass_at.at(1) &&
                       rep.accuracy == static_cast<double>(first_correct) / static_cast<double>(n);
    return {monotone == 100 && sc_ok && exact,
            std::to_string(monotone) + "/100 monotone; pass@1 " + num(rep.pass_at.at(1)) + ", SC@8 " +
                num(rep.sc_at.at(8)) + " (margin " + num(margin) + "); pass@1 == accuracy: " + (exact ? "yes" : "no")};
}

Verdict budget_and_cost() {
    const auto& p = planted();
    const auto profile = fitted_profile(3);
    UtilityConfig greedy_u;
    greedy_u.alpha = 0.0;
    const RandomRouter random(p.sim->pool->pair_count());
    const ClusterGreedy greedy(profile, greedy_u);
    const AlwaysRoute stubborn;
    auto noisy = initial_policy(kSeed);
    Rng lrng(kSeed);
    for (auto& x : noisy.params().logits) {
        x = lrng.uniform() * 6.0 - 3.0;
    }
    std::size_t episodes_seen = 0, over = 0, at_cap = 0;
    const std::vector<const RoutingPolicy*> policies{&random, &greedy, &stubborn, &noisy, &runs(true)[0].policy};
    for (const auto* pol : policies) {
        std::vector<EpisodeRecord> eps;
        evaluate(*pol, 2, &p.table, &eps);
        for (const auto& e : eps) {
            ++episodes_seen;
            over += e.api_calls > 4;
            at_cap += e.api_calls == 4;
        }
    }

    // Cost-aware choice, checked against the utility formula computed here from raw statistics.
    const auto& pool = *p.sim->pool;
    auto cost_of = [&](const PairStats& s, std::size_t pair) {
        const auto price = pool.price(pool.pair_at(pair));
        const Money total = price.input * static_cast<std::int64_t>(s.sum_in_tokens) +
                            price.output * static_cast<std::int64_t>(s.sum_out_tokens);
        return total.to_double() / static_cast<double>(s.total);
    };
    double scale = 0.0;
    for (std::size_t k = 0; k < profile->clusters(); ++k) {
        for (std::size_t j = 0; j < pool.pair_count(); ++j) {
            if (profile->stats(k, j).total > 0) {
                scale = std::max(scale, cost_of(profile->stats(k, j), j));
            }
        }
    }
    auto oracle_pick = [&](std::size_t k, double alpha) {
        std::size_t best = 0;
        double best_u = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pool.pair_count(); ++j) {
            const auto& s = profile->stats(k, j);
            const double acc = static_cast<double>(s.solved) / static_cast<double>(s.total);
            const double u = (1 - alpha) * acc - alpha * cost_of(s, j) / scale;
            if (u > best_u) {
                best_u = u;
                best = j;
            }
        }
        return best;
    };
    bool decisions_match = true;
    std::size_t cheaper_clusters = 0;
    std::string example;
    for (std::size_t k = 0; k < profile->clusters(); ++k) {
        UtilityConfig u0, u9;
        u0.alpha = 0.0;
        u9.alpha = 0.9;
        const auto d0 = pool.pair_index(select_pair(*profile, k, u0).pair);
        const auto d9 = pool.pair_index(select_pair(*profile, k, u9).pair);
        decisions_match = decisions_match && d0 == oracle_pick(k, 0.0) && d9 == oracle_pick(k, 0.9);
        const auto& s0 = profile->stats(k, d0);
        const auto& s9 = profile->stats(k, d9);
        const double gap = static_cast<double>(s0.solved) / s0.total - static_cast<double>(s9.solved) / s9.total;
        const double threshold = 0.9 / 0.1 * (cost_of(s0, d0) - cost_of(s9, d9)) / scale;
        if (cost_of(s9, d9) < cost_of(s0, d0) && gap < threshold) {
            ++cheaper_clusters;
            example = "cluster " + std::to_string(k) + ": " + pool.pair_label(pool.pair_at(d0)) + " -> " +
                      pool.pair_label(pool.pair_at(d9)) + ", accuracy gap " + num(gap) + " < " + num(threshold);
        }
    }
    return {over == 0 && at_cap > 0 && decisions_match && cheaper_clusters >= 1,
            std::to_string(episodes_seen) + " episodes, " + std::to_string(over) + " over budget, " +
                std::to_string(at_cap) + " at the cap; " + std::to_string(cheaper_clusters) +
                " cheaper clusters (" + example + "); formula match: " + (decisions_match ? "yes" : "no")};
}

Verdict cluster_count() {
    const double a1 = greedy_accuracy(1);
    const double a3 = greedy_accuracy(3);
    const double a8 = greedy_accuracy(8);
    const double tol = 3 * std::sqrt(a3 * (1 - a3) / kQueries + a8 * (1 - a8) / kQueries);
    return {a1 < a3 && std::fabs(a3 - a8) <= tol,
            "K=1 " + num(a1) + ", K=3 " + num(a3) + ", K=8 " + num(a8) + " (|K3-K8| tolerance " + num(tol) + ")"};
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / ("atlas-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string bin = ATLAS_CLI_PATH;
    const std::vector<std::string> steps{
        "--seed 7 sim gen --out sim.json --train 300 --test 300 --train-out train.jsonl --test-out test.jsonl "
        "--table-out table.jsonl",
        "--seed 7 profile fit --data train.jsonl --sim sim.json --k 3 --out profile.json",
        "--seed 7 train --sim sim.json --data train.jsonl --table table.jsonl --out policy.json",
        "--seed 7 eval --sim sim.json --dataset test.jsonl --table table.jsonl --profile profile.json "
        "--policies random,cluster,policy.json --k 4 --out eval",
    };
    const std::vector<std::string> outputs{"profile.json", "policy.json", "policy.curve.csv", "eval.csv", "eval.json"};
    std::vector<std::map<std::string, std::string>> digests(2);
    for (int run = 0; run < 2; ++run) {
        const auto dir = root / ("run" + std::to_string(run));
        fs::create_directories(dir);
        for (const auto& s : steps) {
            const std::string cmd = "cd '" + dir.string() + "' && '" + bin + "' " + s + " >/dev/null 2>&1";
            const int rc = std::system(cmd.c_str());
            if (rc != 0) {
                fs::remove_all(root);
                return {false, "command failed: atlas " + s};
            }
        }
        for (const auto& o : outputs) {
            digests[run][o] = io::sha256_file(dir / o);
        }
    }
    fs::remove_all(root);
    std::size_t same = 0;
    for (const auto& o : outputs) {
        same += digests[0][o] == digests[1][o];
    }
    return {same == outputs.size(), std::to_string(same) + "/" + std::to_string(outputs.size()) +
                                        " primary outputs byte-identical (profile fit, train, eval)"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"reward-rule fixture corpus", reward_corpus},
        {"composite reward enumeration", composite_enumeration},
        {"k-means properties", kmeans_properties},
        {"planted routing gap", planted_gap},
        {"trained policy convergence", trained_convergence},
        {"selection reward ablation direction", selection_ablation},
        {"pass@k and self-consistency", passk_properties},
        {"budget enforcement and cost-aware choice", budget_and_cost},
        {"cluster-count sensitivity", cluster_count},
        {"determinism of CLI reruns", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += !v.pass;
        std::cout << "criterion " << (i + 1) << " " << (v.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
                  << v.detail << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
