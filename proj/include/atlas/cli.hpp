#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "atlas/atlas.hpp"
#include "atlas/pipeline.hpp"

/**
 * @file cli.hpp
 *
 * @brief The `atlas` command line: profile fit, route, train, eval, sim gen,
 * reward check. Every run ends by writing a RunManifest next to its primary
 * output.
 */

namespace atlas::cli {

inline constexpr const char* version = "0.1.0";

namespace fs = std::filesystem;

/// JSON config files for CLI11: nested objects address subcommands, e.g.
/// `{"seed": 3, "train": {"steps": 100}, "profile": {"fit": {"k": 3}}}`.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        return snapshot(app, default_also).dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json doc;
        try {
            doc = json::parse(input);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        flatten(doc, {}, items);
        return items;
    }

    static json snapshot(const CLI::App* app, bool default_also = true) {
        json j = json::object();
        for (const CLI::Option* opt : app->get_options()) {
            const auto name = opt->get_single_name();
            if (name == "help" || name == "config" || opt->get_configurable() == false) {
                continue;
            }
            if (opt->count() > 0) {
                const auto& r = opt->results();
                if (opt->get_type_size() == 0) {
                    j[name] = true;
                } else if (r.size() == 1) {
                    j[name] = r.front();
                } else {
                    j[name] = r;
                }
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        for (const CLI::App* sub : app->get_subcommands()) {
            j[sub->get_name()] = snapshot(sub, default_also);
        }
        return j;
    }

private:
    static void flatten(const json& node, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
        if (!node.is_object()) {
            throw CLI::ConversionError("config file must hold a JSON object");
        }
        for (const auto& [key, value] : node.items()) {
            if (value.is_object()) {
                auto p = parents;
                p.push_back(key);
                flatten(value, std::move(p), out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (value.is_array()) {
                for (const auto& v : value) {
                    item.inputs.push_back(scalar(v));
                }
            } else {
                item.inputs.push_back(scalar(value));
            }
            out.push_back(std::move(item));
        }
    }
};

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string manifest;
};

/// Reproducibility record written at the end of each run. Only paths and
/// digests of files; secrets never enter it since they come from the
/// environment.
class RunManifest {
public:
    explicit RunManifest(std::string command) : command_(std::move(command)) {}

    void set_config(json config) { config_ = std::move(config); }
    void add_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }
    void add_input(const fs::path& p) { inputs_.push_back(p); }
    void add_output(const fs::path& p) { outputs_.push_back(p); }

    json to_json() const {
        json in = json::object();
        for (const auto& p : inputs_) {
            in[p.generic_string()] = io::sha256_file(p);
        }
        json out = json::object();
        for (const auto& p : outputs_) {
            out[p.generic_string()] = io::sha256_file(p);
        }
        return {{"version", 1},
                {"command", command_},
                {"config", config_},
                {"components",
                 {{"atlas", version},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                  {"cpp_httplib", CPPHTTPLIB_VERSION},
                  {"cli11", CLI11_VERSION}}},
                {"seeds", seeds_},
                {"inputs", in},
                {"outputs", out}};
    }

    void write(const fs::path& path) const { io::write_json(path, to_json()); }

private:
    std::string command_;
    json config_ = json::object();
    std::map<std::string, std::uint64_t> seeds_;
    std::vector<fs::path> inputs_;
    std::vector<fs::path> outputs_;
};

/// True when every output digest recorded in the manifest matches the file on disk.
inline bool verify_manifest(const fs::path& manifest) {
    const auto doc = io::read_json(manifest);
    for (const auto& [path, digest] : doc.at("outputs").items()) {
        if (!fs::exists(path) || io::sha256_file(path) != digest.get<std::string>()) {
            return false;
        }
    }
    return true;
}

namespace detail {

inline fs::path manifest_path(const GlobalOptions& g, const fs::path& primary) {
    if (!g.manifest.empty()) {
        return g.manifest;
    }
    return fs::path(primary.string() + ".manifest.json");
}

inline void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) {
        throw Error(ErrorCode::io_error, std::string(what) + " '" + path + "' does not exist");
    }
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

struct ExecutorSource {
    std::string sim;
    std::string pool;
    std::size_t max_in_flight = 8;
    double timeout_s = 60.0;
    bool allow_code = false;
};

inline void add_executor_options(CLI::App* cmd, ExecutorSource& src) {
    auto* g = cmd->add_option_group("executor", "exactly one of --sim or --pool");
    g->add_option("--sim", src.sim, "simulated pool config (JSON)");
    g->add_option("--pool", src.pool, "routing pool for live execution (JSON)");
    g->require_option(1);
    cmd->add_option("--max-in-flight", src.max_in_flight, "live requests in flight")->capture_default_str();
    cmd->add_option("--timeout", src.timeout_s, "live request timeout in seconds")->capture_default_str();
    cmd->add_flag("--allow-code", src.allow_code, "enable the local code interpreter tool");
}

struct BuiltExecutor {
    std::shared_ptr<const SimPoolConfig> sim;
    std::shared_ptr<const RoutingPool> pool;
    std::unique_ptr<Executor> executor;
};

inline BuiltExecutor build_executor(const ExecutorSource& src, RunManifest& manifest) {
    BuiltExecutor b;
    ExecutorConfig cfg;
    cfg.code.enabled = src.allow_code;
    if (!src.sim.empty()) {
        require_file(src.sim, "sim config");
        manifest.add_input(src.sim);
        b.sim = std::make_shared<const SimPoolConfig>(sim_from_json(io::read_json(src.sim)));
        b.pool = b.sim->pool;
        cfg.mode = ExecutorMode::simulated;
        cfg.sim = b.sim;
    } else {
        require_file(src.pool, "pool");
        manifest.add_input(src.pool);
        b.pool = std::make_shared<const RoutingPool>(pool_from_json(io::read_json(src.pool)));
        cfg.mode = ExecutorMode::live;
        cfg.live.max_in_flight = src.max_in_flight;
        cfg.live.request.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(src.timeout_s * 1000));
    }
    b.executor = std::make_unique<Executor>(b.pool, std::move(cfg));
    return b;
}

inline EvalDataset load_data(const std::string& path, RunManifest& manifest) {
    require_file(path, "dataset");
    manifest.add_input(path);
    return load_dataset(path);
}

/// Optimal-model table: explicit file, else derived from the sim's domains.
inline std::optional<OptimalModelTable> load_table(const std::string& path, const SimPoolConfig* sim,
                                                   const EvalDataset& data, const RoutingPool& pool,
                                                   RunManifest& manifest) {
    if (!path.empty()) {
        require_file(path, "optimal-model table");
        manifest.add_input(path);
        auto t = OptimalModelTable::load(path);
        t.validate(pool);
        return t;
    }
    if (sim != nullptr) {
        auto t = optimal_table(*sim, data);
        if (t.size() > 0) {
            return t;
        }
    }
    return std::nullopt;
}

} // namespace detail

// ---------------------------------------------------------------------------
// sim gen
// ---------------------------------------------------------------------------

struct SimGenArgs {
    PlantedSpec spec;
    std::string out = "sim.json";
    std::size_t train = 300;
    std::size_t test = 300;
    std::string train_out;
    std::string test_out;
    std::string table_out;
};

inline int cmd_sim_gen(const SimGenArgs& a, const GlobalOptions& g, const json& config, std::ostream& os) {
    RunManifest manifest("sim gen");
    manifest.set_config(config);
    manifest.add_seed("seed", g.seed);
    auto spec = a.spec;
    spec.seed = g.seed;
    const auto sim = make_planted_sim(spec);
    io::write_json(a.out, sim_to_json(sim));
    manifest.add_output(a.out);
    EvalDataset all;
    if (!a.train_out.empty()) {
        auto d = generate_queries(sim, a.train, "train", g.seed);
        save_dataset(a.train_out, d);
        manifest.add_output(a.train_out);
        all.insert(all.end(), d.begin(), d.end());
    }
    if (!a.test_out.empty()) {
        auto d = generate_queries(sim, a.test, "test", g.seed);
        save_dataset(a.test_out, d);
        manifest.add_output(a.test_out);
        all.insert(all.end(), d.begin(), d.end());
    }
    if (!a.table_out.empty()) {
        const auto t = optimal_table(sim, all);
        std::vector<json> rows;
        for (const auto& q : all) {
            if (const auto m = t.find(q.id)) {
                rows.push_back({{"id", q.id}, {"optimal_model", *m}});
            }
        }
        io::write_file_atomic(a.table_out, io::to_jsonl(rows));
        manifest.add_output(a.table_out);
    }
    manifest.write(detail::manifest_path(g, a.out));
    os << "wrote " << a.out << " (" << sim.domains.size() << " domains, " << sim.pool->pair_count() << " pairs)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// profile fit
// ---------------------------------------------------------------------------

struct ProfileFitArgs {
    std::string data;
    detail::ExecutorSource exec;
    std::size_t k = 8;
    double alpha = 0.5;
    std::size_t min_support = 1;
    std::string out = "profile.json";
    std::string pairs = "all";
    std::string encoder = "hashed";
    std::size_t dim = 256;
    std::string encoder_endpoint;
    std::string encoder_model;
    std::string cache;
    std::size_t n_init = 10;
    bool raw_cost = false;
};

inline EncoderConfig make_encoder(const ProfileFitArgs& a, std::uint64_t seed) {
    if (a.encoder == "hashed") {
        return HashedEncoderConfig{a.dim, seed, true};
    }
    if (a.encoder == "remote") {
        if (a.encoder_endpoint.empty()) {
            throw Error(ErrorCode::invalid_argument, "--encoder remote needs --encoder-endpoint");
        }
        RemoteEncoderConfig r;
        r.endpoint = a.encoder_endpoint;
        r.model = a.encoder_model;
        return r;
    }
    throw Error(ErrorCode::invalid_argument, "--encoder must be hashed or remote");
}

inline int cmd_profile_fit(const ProfileFitArgs& a, const GlobalOptions& g, const json& config, std::ostream& os) {
    RunManifest manifest("profile fit");
    manifest.set_config(config);
    manifest.add_seed("seed", g.seed);
    const auto data = detail::load_data(a.data, manifest);
    auto built = detail::build_executor(a.exec, manifest);
    const auto encoder = make_encoder(a, g.seed);

    ProfileFitOptions opts;
    opts.kmeans.k = a.k;
    opts.kmeans.n_init = a.n_init;
    opts.pairs = PairSampling::parse(a.pairs);
    opts.seed = g.seed;
    opts.jobs = g.jobs;

    std::vector<std::string> texts;
    for (const auto& q : data) {
        texts.push_back(q.query);
    }
    std::vector<Vector> vectors;
    if (!a.cache.empty()) {
        auto cache = EmbeddingCache::load(a.cache);
        vectors = cache.encode_all(encoder, texts);
        cache.save(a.cache);
    } else {
        vectors = batch_encode(encoder, texts);
    }
    const auto profile = fit_profile(data, vectors, *built.executor, encoder, opts);
    UtilityConfig u;
    u.alpha = a.alpha;
    u.min_support = a.min_support;
    if (a.raw_cost) {
        u.cost_scale = 1.0;
    }
    io::write_json(a.out, profile_to_json(profile, u));
    manifest.add_output(a.out);
    manifest.write(detail::manifest_path(g, a.out));
    os << "wrote " << a.out << " (" << profile.clusters() << " clusters, " << data.size() << " queries, "
       << profile.pool().pair_count() << " pairs)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// route
// ---------------------------------------------------------------------------

struct RouteArgs {
    std::string profile;
    std::string query;
    std::optional<double> alpha;
    bool raw_cost = false;
};

inline int cmd_route(const RouteArgs& a, const GlobalOptions& g, const json& config, std::ostream& os) {
    RunManifest manifest("route");
    manifest.set_config(config);
    detail::require_file(a.profile, "profile");
    manifest.add_input(a.profile);
    auto loaded = profile_from_json(io::read_json(a.profile));
    if (a.alpha) {
        loaded.utility.alpha = *a.alpha;
    }
    if (a.raw_cost) {
        loaded.utility.cost_scale = 1.0;
    }
    const auto d = route_query(loaded.profile, a.query, loaded.utility);
    const auto& pool = loaded.profile.pool();
    os << "pair: " << pool.pair_label(d.pair) << "\n"
       << "cluster: " << d.cluster << "\n"
       << "utility: " << io::fixed(d.utility) << "\n";
    if (d.fallback_used) {
        os << "fallback: cluster has no eligible statistics\n";
    }
    manifest.write(g.manifest.empty() ? fs::path("atlas-route.manifest.json") : fs::path(g.manifest));
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    detail::ExecutorSource exec;
    std::string data;
    std::size_t train_size = 300;
    std::string profile;
    std::size_t k = 3;
    std::size_t steps = 250;
    double beta = 0.001;
    double lr = TrainerConfig{}.learning_rate;
    std::size_t batch = 32;
    double temperature = 1.0;
    std::size_t max_turns = 4;
    bool no_selection = false;
    std::string table;
    std::string out = "policy.json";
    std::string curve;
};

/// Locator for training: a fitted profile's clusters, else k-means on the training queries.
inline QueryLocator training_locator(const TrainArgs& a, const EvalDataset& data, std::uint64_t seed,
                                     RunManifest& manifest) {
    if (!a.profile.empty()) {
        detail::require_file(a.profile, "profile");
        manifest.add_input(a.profile);
        const auto loaded = profile_from_json(io::read_json(a.profile));
        return QueryLocator::clustered(loaded.profile.cluster_model(), loaded.profile.encoder());
    }
    const EncoderConfig enc = HashedEncoderConfig{256, seed, true};
    std::vector<std::string> texts;
    for (const auto& q : data) {
        texts.push_back(q.query);
    }
    KMeansOptions ko;
    ko.k = a.k;
    ko.seed = seed;
    return QueryLocator::clustered(fit_kmeans(batch_encode(enc, texts), ko), enc);
}

inline int cmd_train(const TrainArgs& a, const GlobalOptions& g, const json& config, std::ostream& os) {
    RunManifest manifest("train");
    manifest.set_config(config);
    manifest.add_seed("seed", g.seed);
    auto built = detail::build_executor(a.exec, manifest);
    EvalDataset data;
    if (!a.data.empty()) {
        data = detail::load_data(a.data, manifest);
    } else if (built.sim) {
        data = generate_queries(*built.sim, a.train_size, "train", g.seed);
    } else {
        throw Error(ErrorCode::invalid_argument, "live training needs --data");
    }
    auto locator = training_locator(a, data, g.seed, manifest);
    const auto table = a.no_selection ? std::nullopt
                                      : detail::load_table(a.table, built.sim.get(), data, *built.pool, manifest);

    const auto clusters = locator.clusters();
    SoftmaxPolicy initial(SoftmaxPolicyParams::zeros(clusters, a.max_turns, built.pool->pair_count() + 1, a.temperature),
                          std::move(locator));
    TrainerConfig tc;
    tc.learning_rate = a.lr;
    tc.kl_beta = a.beta;
    tc.batch_size = a.batch;
    tc.total_steps = a.steps;
    tc.temperature = a.temperature;
    tc.seed = g.seed;
    tc.jobs = g.jobs;
    EpisodeOptions eo;
    eo.max_turns = a.max_turns;
    eo.table = table ? &*table : nullptr;
    const auto result = train_policy(initial, *built.executor, data, eo, tc);
    SoftmaxPolicy trained(result.params, initial.locator());
    io::write_json(a.out, policy_to_json(trained, *built.pool));
    manifest.add_output(a.out);

    const std::string curve_path = a.curve.empty() ? fs::path(a.out).replace_extension(".curve.csv").string() : a.curve;
    std::string csv = "step,mean_reward,mean_task_reward,entropy,kl\n";
    for (const auto& c : result.curve) {
        csv += std::to_string(c.step) + "," + io::fixed(c.mean_reward) + "," + io::fixed(c.mean_task_reward) + "," +
               io::fixed(c.entropy) + "," + io::fixed(c.kl, 9) + "\n";
    }
    io::write_file_atomic(curve_path, csv);
    manifest.add_output(curve_path);
    manifest.write(detail::manifest_path(g, a.out));
    if (!result.curve.empty()) {
        const auto& last = result.curve.back();
        os << "trained " << a.steps << " steps; final mean reward " << io::fixed(last.mean_reward, 4) << ", entropy "
           << io::fixed(last.entropy, 4) << "\n";
    }
    os << "wrote " << a.out << " and " << curve_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    detail::ExecutorSource exec;
    std::string dataset;
    std::string policies = "random";
    std::string profile;
    std::optional<double> alpha;
    bool raw_cost = false;
    std::size_t k = 1;
    std::size_t max_turns = 4;
    std::string table;
    std::string out = "eval";
};

inline int cmd_eval(const EvalArgs& a, const GlobalOptions& g, const json& config, std::ostream& os) {
    RunManifest manifest("eval");
    manifest.set_config(config);
    manifest.add_seed("seed", g.seed);
    auto built = detail::build_executor(a.exec, manifest);
    const auto data = detail::load_data(a.dataset, manifest);
    const auto table = detail::load_table(a.table, built.sim.get(), data, *built.pool, manifest);

    PolicyDeps deps;
    deps.pool = built.pool;
    if (!a.profile.empty()) {
        detail::require_file(a.profile, "profile");
        manifest.add_input(a.profile);
        auto loaded = profile_from_json(io::read_json(a.profile));
        if (loaded.profile.pool().fingerprint() != built.pool->fingerprint()) {
            throw Error(ErrorCode::schema_error, "profile was fitted on a different pool");
        }
        deps.profile = std::make_shared<const ClusterProfile>(std::move(loaded.profile));
        deps.utility = loaded.utility;
        if (a.alpha) {
            deps.utility.alpha = *a.alpha;
        }
        if (a.raw_cost) {
            deps.utility.cost_scale = 1.0;
        }
    }

    // Entries ending in .json are trained checkpoints; everything else is a policy kind.
    std::vector<std::unique_ptr<RoutingPolicy>> owned;
    std::vector<MetricReport> failed;
    for (const auto& entry : detail::split_list(a.policies)) {
        try {
            if (fs::path(entry).extension() == ".json") {
                detail::require_file(entry, "policy checkpoint");
                manifest.add_input(entry);
                PolicyDeps d = deps;
                d.trained = policy_from_json(io::read_json(entry), *built.pool, fs::path(entry).stem().string());
                owned.push_back(make_policy("softmax", d));
            } else {
                owned.push_back(make_policy(entry, deps));
            }
        } catch (const Error& e) {
            MetricReport r;
            r.policy = entry;
            r.error = e.what();
            failed.push_back(std::move(r));
        }
    }
    std::vector<const RoutingPolicy*> ptrs;
    for (const auto& p : owned) {
        ptrs.push_back(p.get());
    }
    CompareOptions co;
    co.samples = a.k;
    co.seed = g.seed;
    co.jobs = g.jobs;
    co.episode.max_turns = a.max_turns;
    co.episode.table = table ? &*table : nullptr;
    auto reports = compare_routers(ptrs, data, *built.executor, co);
    reports.insert(reports.end(), failed.begin(), failed.end());

    const std::string csv_path = a.out + ".csv";
    const std::string json_path = a.out + ".json";
    io::write_file_atomic(csv_path, reports_csv(reports, a.k));
    json j = json::array();
    for (const auto& r : reports) {
        j.push_back(report_to_json(r));
    }
    io::write_json(json_path, {{"version", 1}, {"samples", a.k}, {"reports", j}});
    manifest.add_output(csv_path);
    manifest.add_output(json_path);
    manifest.write(detail::manifest_path(g, csv_path));
    os << reports_table(reports, a.k);
    for (const auto& r : reports) {
        if (r.error) {
            return 1;
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// reward check
// ---------------------------------------------------------------------------

struct RewardCheckArgs {
    std::string fixtures;
    std::string pool;
};

struct FixtureResult {
    std::string name;
    std::vector<std::string> expected;
    std::vector<std::string> actual;
    bool pass = false;
};

inline std::vector<std::string> rule_names(const std::vector<traj::FormatViolation>& v) {
    std::vector<std::string> out;
    for (const auto& x : v) {
        out.emplace_back(traj::to_string(x.rule));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

/// Nearest pool.json at or above the fixture's directory, stopping at `root`.
inline fs::path fixture_pool(const fs::path& fixture, const fs::path& root) {
    for (auto dir = fixture.parent_path();; dir = dir.parent_path()) {
        if (fs::exists(dir / "pool.json")) {
            return dir / "pool.json";
        }
        if (dir == root || dir == dir.parent_path()) {
            break;
        }
    }
    throw Error(ErrorCode::io_error, "no pool.json found for fixture " + fixture.string());
}

/// Each `<name>.txt` is paired with `<name>.expected.json`, an array of rule
/// names (empty for a well-formed trajectory).
inline std::vector<FixtureResult> check_fixtures(const fs::path& root, const std::string& pool_override) {
    if (!fs::is_directory(root)) {
        throw Error(ErrorCode::io_error, "fixture directory '" + root.string() + "' does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file() && e.path().extension() == ".txt") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::map<fs::path, RoutingPool> pools;
    std::vector<FixtureResult> out;
    for (const auto& f : files) {
        const fs::path pool_path = pool_override.empty() ? fixture_pool(f, root) : fs::path(pool_override);
        auto it = pools.find(pool_path);
        if (it == pools.end()) {
            it = pools.emplace(pool_path, pool_from_json(io::read_json(pool_path))).first;
        }
        FixtureResult r;
        r.name = fs::relative(f, root).generic_string();
        fs::path expected = f;
        expected.replace_extension(".expected.json");
        r.expected = io::read_json(expected).get<std::vector<std::string>>();
        std::sort(r.expected.begin(), r.expected.end());
        r.expected.erase(std::unique(r.expected.begin(), r.expected.end()), r.expected.end());
        const auto text = io::read_file(f);
        r.actual = rule_names(traj::check_text(text, it->second));
        const double fmt = format_reward(text, it->second);
        r.pass = r.actual == r.expected && (fmt == 0.0) == r.expected.empty();
        out.push_back(std::move(r));
    }
    return out;
}

inline int cmd_reward_check(const RewardCheckArgs& a, const GlobalOptions& g, const json& config, std::ostream& os) {
    RunManifest manifest("reward check");
    manifest.set_config(config);
    const auto results = check_fixtures(a.fixtures, a.pool);
    auto join = [](const std::vector<std::string>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            s += (i ? "," : "") + v[i];
        }
        return s + "]";
    };
    std::size_t failures = 0;
    for (const auto& r : results) {
        if (!r.pass) {
            ++failures;
            os << "FAIL " << r.name << ": expected " << join(r.expected) << " got " << join(r.actual) << "\n";
        }
    }
    os << results.size() - failures << "/" << results.size() << " fixtures agree\n";
    manifest.write(g.manifest.empty() ? fs::path("atlas-reward-check.manifest.json") : fs::path(g.manifest));
    return failures == 0 && !results.empty() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// entry point
// ---------------------------------------------------------------------------

/// Parses argv and dispatches. Returns the process exit code: 0 on success,
/// 1 on validation or runtime failure, 2 for an unknown or missing subcommand.
inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
    CLI::App app{"atlas: model-tool routing toolkit", "atlas"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config file supplying option defaults");
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--seed", g.seed, "seed for every stochastic component")->capture_default_str();
    app.add_option("--jobs", g.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--manifest", g.manifest, "run manifest path (default: next to the primary output)");

    // sim gen
    SimGenArgs sim_gen;
    auto* sim = app.add_subcommand("sim", "planted simulation fixtures");
    sim->require_subcommand(1);
    auto* gen = sim->add_subcommand("gen", "write a planted sim config and query splits");
    gen->add_option("--out", sim_gen.out)->capture_default_str();
    gen->add_option("--domains", sim_gen.spec.domains)->capture_default_str();
    gen->add_option("--models", sim_gen.spec.models)->capture_default_str();
    gen->add_option("--tools", sim_gen.spec.tools)->capture_default_str();
    gen->add_option("--p-best", sim_gen.spec.p_best)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    gen->add_option("--p-other", sim_gen.spec.p_other)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    gen->add_option("--vocabulary", sim_gen.spec.vocabulary_size)->capture_default_str();
    gen->add_option("--query-length", sim_gen.spec.query_length)->capture_default_str();
    gen->add_option("--train", sim_gen.train, "training queries")->capture_default_str();
    gen->add_option("--test", sim_gen.test, "test queries")->capture_default_str();
    gen->add_option("--train-out", sim_gen.train_out, "training split JSONL");
    gen->add_option("--test-out", sim_gen.test_out, "test split JSONL");
    gen->add_option("--table-out", sim_gen.table_out, "optimal-model table JSONL");

    // profile fit
    ProfileFitArgs pf;
    auto* profile = app.add_subcommand("profile", "cluster profiles");
    profile->require_subcommand(1);
    auto* fit = profile->add_subcommand("fit", "fit a cluster profile from training queries");
    fit->add_option("--data", pf.data, "training JSONL")->required();
    detail::add_executor_options(fit, pf.exec);
    fit->add_option("--k", pf.k)->capture_default_str()->check(CLI::PositiveNumber);
    fit->add_option("--alpha", pf.alpha)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    fit->add_option("--min-support", pf.min_support)->capture_default_str();
    fit->add_option("--out", pf.out)->capture_default_str();
    fit->add_option("--pairs", pf.pairs, "all | sample:n")->capture_default_str();
    fit->add_option("--encoder", pf.encoder)->capture_default_str()->check(CLI::IsMember({"hashed", "remote"}));
    fit->add_option("--dim", pf.dim, "hashed encoder dimension")->capture_default_str();
    fit->add_option("--encoder-endpoint", pf.encoder_endpoint);
    fit->add_option("--encoder-model", pf.encoder_model);
    fit->add_option("--cache", pf.cache, "embedding cache JSONL");
    fit->add_option("--n-init", pf.n_init)->capture_default_str()->check(CLI::PositiveNumber);
    fit->add_flag("--raw-cost", pf.raw_cost, "use currency cost unscaled in the utility");

    // route
    RouteArgs ra;
    auto* route = app.add_subcommand("route", "route one query with a fitted profile");
    route->add_option("--profile", ra.profile)->required();
    route->add_option("--query", ra.query)->required();
    route->add_option("--alpha", ra.alpha)->check(CLI::Range(0.0, 1.0));
    route->add_flag("--raw-cost", ra.raw_cost, "use currency cost unscaled in the utility");

    // train
    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a tabular routing policy");
    detail::add_executor_options(train, ta.exec);
    train->add_option("--data", ta.data, "training JSONL (default: generated from the sim)");
    train->add_option("--train-size", ta.train_size)->capture_default_str();
    train->add_option("--profile", ta.profile, "take clusters from this profile");
    train->add_option("--k", ta.k, "clusters when no profile is given")->capture_default_str();
    train->add_option("--steps", ta.steps)->capture_default_str();
    train->add_option("--beta", ta.beta)->capture_default_str()->check(CLI::NonNegativeNumber);
    train->add_option("--lr", ta.lr)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--batch", ta.batch)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--temperature", ta.temperature)->capture_default_str()->check(CLI::PositiveNumber);
    train->add_option("--max-turns", ta.max_turns)->capture_default_str();
    train->add_flag("--no-selection", ta.no_selection, "drop the selection reward");
    train->add_option("--table", ta.table, "optimal-model table JSONL");
    train->add_option("--out", ta.out)->capture_default_str();
    train->add_option("--curve", ta.curve, "learning curve CSV (default: <out>.curve.csv)");

    // eval
    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "compare routing policies");
    detail::add_executor_options(eval, ea.exec);
    eval->add_option("--dataset", ea.dataset)->required();
    eval->add_option("--policies", ea.policies, "comma list of kinds or checkpoint .json files")->capture_default_str();
    eval->add_option("--profile", ea.profile, "profile for cluster policies");
    eval->add_option("--alpha", ea.alpha)->check(CLI::Range(0.0, 1.0));
    eval->add_flag("--raw-cost", ea.raw_cost, "use currency cost unscaled in the utility");
    eval->add_option("--k", ea.k, "samples per query")->capture_default_str()->check(CLI::PositiveNumber);
    eval->add_option("--max-turns", ea.max_turns)->capture_default_str();
    eval->add_option("--table", ea.table, "optimal-model table JSONL");
    eval->add_option("--out", ea.out, "report prefix (<out>.csv, <out>.json)")->capture_default_str();

    // reward check
    RewardCheckArgs rc;
    auto* reward = app.add_subcommand("reward", "reward utilities");
    reward->require_subcommand(1);
    auto* check = reward->add_subcommand("check", "check trajectory fixtures against expected rule labels");
    check->add_option("--fixtures", rc.fixtures)->required();
    check->add_option("--pool", rc.pool, "pool for every fixture (default: nearest pool.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, os, es);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, os, es);
    } catch (const CLI::ParseError& e) {
        // Unknown or missing subcommands surface as extras or a missing
        // required subcommand at some level of the tree.
        const CLI::App* leaf = &app;
        while (!leaf->get_subcommands().empty()) {
            leaf = leaf->get_subcommands().front();
        }
        const bool subcommand_error = dynamic_cast<const CLI::ExtrasError*>(&e) != nullptr ||
                                      (leaf->get_require_subcommand_min() > 0 && leaf->get_subcommands().empty());
        // CLI11 may stop before recording the stray word, so fall back to argv.
        std::string stray = leaf->remaining().empty() ? std::string() : leaf->remaining().front();
        if (stray.empty() && leaf != &app) {
            for (int i = 1; i + 1 < argc; ++i) {
                if (argv[i] == leaf->get_name() && argv[i + 1][0] != '-') {
                    stray = argv[i + 1];
                    break;
                }
            }
        }
        if (!stray.empty()) {
            es << "unknown subcommand '" << stray << "'\n";
        } else {
            es << e.what() << "\n";
        }
        if (subcommand_error) {
            es << leaf->help();
            return 2;
        }
        return 1;
    }

    const json config = JsonConfig::snapshot(&app);
    try {
        if (gen->parsed()) {
            return cmd_sim_gen(sim_gen, g, config, os);
        }
        if (fit->parsed()) {
            return cmd_profile_fit(pf, g, config, os);
        }
        if (route->parsed()) {
            return cmd_route(ra, g, config, os);
        }
        if (train->parsed()) {
            return cmd_train(ta, g, config, os);
        }
        if (eval->parsed()) {
            return cmd_eval(ea, g, config, os);
        }
        if (check->parsed()) {
            return cmd_reward_check(rc, g, config, os);
        }
    } catch (const Error& e) {
        es << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        es << "error: " << e.what() << "\n";
        return 1;
    }
    es << app.help();
    return 2;
}

} // namespace atlas::cli
