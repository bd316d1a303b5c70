#pragma once

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "atlas/calculator.hpp"
#include "atlas/core.hpp"
#include "atlas/dataset.hpp"
#include "atlas/http.hpp"
#include "atlas/random.hpp"
#include "atlas/reward.hpp"
#include "atlas/sim.hpp"
#include "atlas/traj.hpp"

/**
 * @file env.hpp
 *
 * @brief Multi-step routing environment: executes model-tool pairs against a
 * simulated or live backend, evolves episode state, and records complete
 * episodes with rewards and cost ledgers.
 */

namespace atlas {

struct Observation {
    std::string text;
    std::optional<ModelToolPair> source;
    std::uint64_t in_tokens = 0;
    std::uint64_t out_tokens = 0;
    bool truncated = false;
    /// Executor error or simulated failure; feeds the policy's failed flag.
    bool failed = false;
    Money cost;
};

/// Whitespace-delimited word count.
inline std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) {
            ++n;
        }
        in_word = !space;
    }
    return n;
}

/// Keeps the first `max_words` words (text up to the end of the last kept word).
inline std::pair<std::string, bool> truncate_words(std::string_view text, std::size_t max_words) {
    std::size_t n = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const bool space = std::isspace(static_cast<unsigned char>(text[i])) != 0;
        if (!space && !in_word) {
            if (n == max_words) {
                auto kept = std::string(text.substr(0, i));
                while (!kept.empty() && std::isspace(static_cast<unsigned char>(kept.back()))) {
                    kept.pop_back();
                }
                return {std::move(kept), true};
            }
            ++n;
        }
        in_word = !space;
    }
    return {std::string(text), false};
}

// ---------------------------------------------------------------------------
// Executor
// ---------------------------------------------------------------------------

struct LiveConfig {
    /// Model name -> chat endpoint; overrides ModelSpec::endpoint.
    std::map<std::string, std::string> endpoints;
    http::RequestOptions request;
    std::size_t max_in_flight = 8;
};

struct CodeExecConfig {
    bool enabled = false;
    std::vector<std::string> command{"python3"};
    std::chrono::seconds timeout{10};
};

/// Scores one reasoning step of a PRM candidate; higher is better.
using PrmScorer = std::function<double(std::string_view step, const QueryRecord* query)>;

enum class ExecutorMode { simulated, live };

struct ExecutorConfig {
    ExecutorMode mode = ExecutorMode::simulated;
    std::shared_ptr<const SimPoolConfig> sim;
    LiveConfig live;
    std::size_t max_obs_tokens = 2048;
    CodeExecConfig code;
    PrmScorer prm_scorer;
    std::size_t prm_candidates = 5;
};

/// Per-call context: the query being solved (gold is used only by the
/// simulator) and the episode's executor RNG stream.
struct ExecutionContext {
    const QueryRecord* query = nullptr;
    Rng* rng = nullptr;
};

namespace detail {

inline std::string strip_outcome_prefix(std::string_view text) {
    for (std::string_view prefix : {"SOLVED:", "FAILED:"}) {
        if (text.substr(0, prefix.size()) == prefix) {
            return std::string(text.substr(prefix.size()));
        }
    }
    auto b = text.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(b, e - b + 1));
}

/// Token-set Jaccard similarity; the simulated PRM step scorer.
inline double jaccard(std::string_view a, std::string_view b) {
    auto set_of = [](std::string_view s) {
        std::vector<std::string> toks;
        std::string cur;
        for (unsigned char c : s) {
            if (std::isalnum(c) || c == '-' || c == '.') {
                cur += static_cast<char>(std::tolower(c));
            } else if (!cur.empty()) {
                toks.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) {
            toks.push_back(std::move(cur));
        }
        std::sort(toks.begin(), toks.end());
        toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
        return toks;
    };
    const auto x = set_of(a);
    const auto y = set_of(b);
    if (x.empty() && y.empty()) {
        return 1.0;
    }
    std::vector<std::string> inter;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(inter));
    return static_cast<double>(inter.size()) / static_cast<double>(x.size() + y.size() - inter.size());
}

inline std::vector<std::string> split_steps(std::string_view text) {
    std::vector<std::string> steps;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        auto line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
            steps.emplace_back(line);
        }
        if (nl == std::string_view::npos) {
            break;
        }
        start = nl + 1;
    }
    if (steps.empty()) {
        steps.emplace_back(text);
    }
    return steps;
}

struct ModelReply {
    std::string text;
    std::uint64_t in_tokens = 0;
    std::uint64_t out_tokens = 0;
    bool failed = false;
};

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

} // namespace detail

/**
 * @brief Executes a model-tool pair on an input.
 *
 * Dispatch by tool kind:
 *  - simulated / none / web_search in simulated mode: one Bernoulli draw with
 *    the planted success probability; success yields `SOLVED:<gold>`.
 *  - none (live): chat-completion POST to the model endpoint.
 *  - calculator: local arithmetic evaluation of the input.
 *  - web_search (live): GET with key/cx/q/num=3, top three snippets joined.
 *  - prm: five candidate generations, each split into line steps and scored;
 *    the best mean step score wins.
 *  - code_interpreter: runs the snippet in an external command (opt-in).
 *
 * Thread-safe: all per-call state arrives through ExecutionContext.
 */
class Executor {
public:
    Executor(std::shared_ptr<const RoutingPool> pool, ExecutorConfig config)
        : pool_(std::move(pool)), config_(std::move(config)),
          limit_(std::make_shared<http::ConcurrencyLimit>(config_.live.max_in_flight)) {
        if (config_.mode == ExecutorMode::simulated) {
            if (!config_.sim) {
                throw Error(ErrorCode::invalid_argument, "simulated executor requires a sim config");
            }
            if (config_.sim->pool->fingerprint() != pool_->fingerprint()) {
                throw Error(ErrorCode::invalid_argument, "sim config pool differs from the executor pool");
            }
        } else {
            for (const auto& m : pool_->models()) {
                if (!m.endpoint && !config_.live.endpoints.count(m.name)) {
                    throw Error(ErrorCode::invalid_argument, "live mode requires an endpoint for model '" + m.name + "'");
                }
            }
        }
    }

    const RoutingPool& pool() const { return *pool_; }
    const ExecutorConfig& config() const { return config_; }

    Observation execute_pair(const ModelToolPair& pair, std::string_view input, const ExecutionContext& ctx) const {
        const auto& tool = pool_->tool(pair);
        Observation obs;
        obs.source = pair;
        switch (tool.kind) {
        case ToolKind::calculator: {
            std::optional<int> precision;
            if (tool.config.contains("precision")) {
                precision = tool.config.at("precision").get<int>();
            }
            obs.text = calc::run(input, precision);
            obs.in_tokens = word_count(input);
            obs.out_tokens = word_count(obs.text);
            break;
        }
        case ToolKind::code_interpreter: {
            auto [text, ok] = run_code(input);
            obs.text = std::move(text);
            obs.failed = !ok;
            obs.in_tokens = word_count(input);
            obs.out_tokens = word_count(obs.text);
            break;
        }
        case ToolKind::prm: {
            auto reply = best_of_candidates(pair, input, ctx);
            obs.text = std::move(reply.text);
            obs.failed = reply.failed;
            obs.in_tokens = reply.in_tokens;
            obs.out_tokens = reply.out_tokens;
            break;
        }
        case ToolKind::web_search:
            if (config_.mode == ExecutorMode::live) {
                obs.text = web_search(tool, input);
                obs.in_tokens = word_count(input);
                obs.out_tokens = word_count(obs.text);
                break;
            }
            [[fallthrough]];
        case ToolKind::none:
        case ToolKind::simulated: {
            auto reply = call_model(pair, input, ctx);
            obs.text = std::move(reply.text);
            obs.failed = reply.failed;
            obs.in_tokens = reply.in_tokens;
            obs.out_tokens = reply.out_tokens;
            break;
        }
        }
        const auto& price = pool_->price(pair);
        obs.cost = price.input * static_cast<std::int64_t>(obs.in_tokens) +
                   price.output * static_cast<std::int64_t>(obs.out_tokens);
        auto [text, truncated] = truncate_words(obs.text, config_.max_obs_tokens);
        obs.text = std::move(text);
        obs.truncated = truncated;
        return obs;
    }

private:
    detail::ModelReply call_model(const ModelToolPair& pair, std::string_view input, const ExecutionContext& ctx) const {
        if (config_.mode == ExecutorMode::simulated) {
            return simulate(pair, ctx);
        }
        return chat(pair, input);
    }

    detail::ModelReply simulate(const ModelToolPair& pair, const ExecutionContext& ctx) const {
        if (ctx.query == nullptr || ctx.rng == nullptr) {
            throw Error(ErrorCode::invalid_argument, "simulated execution needs a query and an RNG stream");
        }
        const auto index = pool_->pair_index(pair);
        const double p = config_.sim->p(ctx.query->domain, index);
        const auto& tm = config_.sim->token_model(index);
        auto draw = [&](std::uint64_t mean) {
            const auto lo = static_cast<std::int64_t>(mean) - static_cast<std::int64_t>(tm.jitter);
            const auto hi = static_cast<std::int64_t>(mean + tm.jitter);
            return static_cast<std::uint64_t>(std::max<std::int64_t>(0, ctx.rng->uniform_int(lo, hi)));
        };
        detail::ModelReply r;
        const bool success = ctx.rng->bernoulli(p);
        r.in_tokens = draw(tm.mean_in);
        r.out_tokens = draw(tm.mean_out);
        if (success) {
            r.text = "SOLVED:" + ctx.query->gold;
        } else {
            r.text = "FAILED:wrong-" + hex64(ctx.rng->next_u64()).substr(0, 8);
            r.failed = true;
        }
        return r;
    }

    std::string endpoint_for(const ModelSpec& m) const {
        auto it = config_.live.endpoints.find(m.name);
        if (it != config_.live.endpoints.end()) {
            return it->second;
        }
        if (m.endpoint) {
            return *m.endpoint;
        }
        throw Error(ErrorCode::invalid_argument, "no endpoint for model '" + m.name + "'");
    }

    detail::ModelReply chat(const ModelToolPair& pair, std::string_view input) const {
        const auto& model = pool_->model(pair);
        const json body{{"model", model.name},
                        {"messages", json::array({{{"role", "user"}, {"content", std::string(input)}}})}};
        auto opts = config_.live.request;
        if (!opts.bearer_token) {
            opts.bearer_token = http::env("ATLAS_API_KEY");
        }
        http::Response res;
        {
            auto permit = limit_->acquire_permit();
            res = http::send("POST", endpoint_for(model), body.dump(), opts);
        }
        if (res.status != 200) {
            throw Error(ErrorCode::http_error, "model endpoint returned HTTP " + std::to_string(res.status));
        }
        detail::ModelReply r;
        try {
            const auto doc = json::parse(res.body);
            r.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
            if (doc.contains("usage")) {
                r.in_tokens = doc["usage"].value("prompt_tokens", std::uint64_t{0});
                r.out_tokens = doc["usage"].value("completion_tokens", std::uint64_t{0});
            } else {
                r.in_tokens = word_count(input);
                r.out_tokens = word_count(r.text);
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::http_error, std::string("malformed chat response: ") + e.what());
        }
        return r;
    }

    std::string web_search(const ToolSpec& tool, std::string_view query) const {
        const auto key = http::env("ATLAS_SEARCH_KEY");
        const auto cx = http::env("ATLAS_SEARCH_CX");
        if (!key || !cx) {
            throw Error(ErrorCode::invalid_argument, "web search needs ATLAS_SEARCH_KEY and ATLAS_SEARCH_CX");
        }
        const std::string endpoint = tool.config.value("endpoint", "https://www.googleapis.com/customsearch/v1");
        httplib::Params params{{"key", *key}, {"cx", *cx}, {"q", std::string(query)}, {"num", "3"}};
        http::Response res;
        {
            auto permit = limit_->acquire_permit();
            res = http::send("GET", endpoint, "", config_.live.request, params);
        }
        if (res.status != 200) {
            throw Error(ErrorCode::http_error, "search endpoint returned HTTP " + std::to_string(res.status));
        }
        std::string out;
        try {
            const auto doc = json::parse(res.body);
            std::size_t n = 0;
            for (const auto& item : doc.value("items", json::array())) {
                if (n == 3) {
                    break;
                }
                if (!out.empty()) {
                    out += '\n';
                }
                out += item.value("snippet", "");
                ++n;
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::http_error, std::string("malformed search response: ") + e.what());
        }
        return out;
    }

    detail::ModelReply best_of_candidates(const ModelToolPair& pair, std::string_view input,
                                          const ExecutionContext& ctx) const {
        const std::size_t n = config_.prm_candidates == 0 ? 1 : config_.prm_candidates;
        std::vector<detail::ModelReply> candidates(n);
        if (config_.mode == ExecutorMode::simulated) {
            for (auto& c : candidates) {
                c = simulate(pair, ctx);
            }
        } else {
            std::vector<std::exception_ptr> errors(n);
            std::vector<std::thread> workers;
            for (std::size_t i = 0; i < n; ++i) {
                workers.emplace_back([&, i] {
                    try {
                        candidates[i] = chat(pair, input);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                });
            }
            for (auto& w : workers) {
                w.join();
            }
            for (auto& e : errors) {
                if (e) {
                    std::rethrow_exception(e);
                }
            }
        }
        PrmScorer scorer = config_.prm_scorer;
        if (!scorer) {
            // Similarity to gold; without a gold every candidate ties and the first wins.
            scorer = [](std::string_view step, const QueryRecord* q) {
                return q == nullptr ? 0.0 : detail::jaccard(detail::strip_outcome_prefix(step), q->gold);
            };
        }
        detail::ModelReply best;
        double best_score = -std::numeric_limits<double>::infinity();
        std::uint64_t in = 0;
        std::uint64_t out = 0;
        for (auto& c : candidates) {
            in += c.in_tokens;
            out += c.out_tokens;
            const auto steps = detail::split_steps(c.text);
            double s = 0.0;
            for (const auto& st : steps) {
                s += scorer(st, ctx.query);
            }
            s /= static_cast<double>(steps.size());
            if (s > best_score) {
                best_score = s;
                best = c;
            }
        }
        best.in_tokens = in;
        best.out_tokens = out;
        return best;
    }

    std::pair<std::string, bool> run_code(std::string_view code) const {
        if (!config_.code.enabled) {
            throw Error(ErrorCode::sandbox_disabled, "code interpreter is disabled");
        }
        static std::atomic<std::uint64_t> counter{0};
        const auto path = std::filesystem::temp_directory_path() /
                          ("atlas-code-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".py");
        {
            std::ofstream f(path);
            f << code;
        }
        std::string cmd = "timeout " + std::to_string(config_.code.timeout.count()) + "s";
        for (const auto& part : config_.code.command) {
            cmd += " " + detail::shell_quote(part);
        }
        cmd += " " + detail::shell_quote(path.string()) + " 2>&1";
        std::string output;
        int status = -1;
        if (FILE* pipe = ::popen(cmd.c_str(), "r")) {
            std::array<char, 4096> buf{};
            std::size_t got;
            while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
                output.append(buf.data(), got);
            }
            status = ::pclose(pipe);
        }
        std::filesystem::remove(path);
        const int exit_code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
        if (exit_code == 0) {
            return {"status: success\noutput:\n" + output, true};
        }
        std::string report = "status: error\nexit_code: " + std::to_string(exit_code) + "\n";
        if (exit_code == 124) {
            report += "cause: timed out after " + std::to_string(config_.code.timeout.count()) + "s\n";
        } else {
            // Python tracebacks: innermost 'line N' and the final exception line.
            const auto at = output.rfind("line ");
            if (at != std::string::npos) {
                auto end = output.find_first_not_of("0123456789", at + 5);
                report += "location: " + output.substr(at, end - at) + "\n";
            }
            auto trimmed = output;
            while (!trimmed.empty() && (trimmed.back() == '\n' || trimmed.back() == '\r')) {
                trimmed.pop_back();
            }
            const auto nl = trimmed.rfind('\n');
            report += "cause: " + (nl == std::string::npos ? trimmed : trimmed.substr(nl + 1)) + "\n";
        }
        report += "output:\n" + output;
        return {report, false};
    }

    std::shared_ptr<const RoutingPool> pool_;
    ExecutorConfig config_;
    std::shared_ptr<http::ConcurrencyLimit> limit_;
};

inline Observation execute_pair(const Executor& executor, const ModelToolPair& pair, std::string_view input,
                                const ExecutionContext& ctx) {
    return executor.execute_pair(pair, input, ctx);
}

// ---------------------------------------------------------------------------
// Policy interface seen by the environment
// ---------------------------------------------------------------------------

/// Compressed decision state: query cluster, route-turns taken, and whether
/// the most recent route failed.
struct PolicyContext {
    std::size_t cluster = 0;
    std::size_t turn = 0;
    bool last_step_failed = false;
};

/// 0..|S|-1 route to pair i; |S| answers now.
using ActionIndex = std::size_t;

class RoutingPolicy {
public:
    virtual ~RoutingPolicy() = default;
    virtual std::string name() const = 0;
    /// Context cluster for a query (policies without clustering use 0).
    virtual std::size_t locate(const QueryRecord& query) const = 0;
    virtual ActionIndex act(const PolicyContext& ctx, Rng& rng) const = 0;
};

// ---------------------------------------------------------------------------
// Episode state machine
// ---------------------------------------------------------------------------

struct RouteAction {
    ModelToolPair pair;
    std::string input;
};

using Action = std::variant<traj::Think, RouteAction, traj::Answer>;

struct ContextEntry {
    Action action;
    std::optional<Observation> observation;
};

struct EpisodeState {
    std::string query;
    std::vector<ContextEntry> context;
    /// Number of route actions taken.
    std::size_t turn = 0;
    bool terminal = false;
};

inline Observation error_observation(const ModelToolPair& pair, const Error& e) {
    Observation o;
    o.source = pair;
    o.text = "ERROR[" + std::string(to_string(e.code())) + "]: " + e.what();
    o.failed = true;
    return o;
}

/**
 * Applies one action. Think appends to the context; Route executes the pair
 * (executor failures become an error observation, the episode continues) and
 * advances the turn; Answer makes the state terminal. Routing at
 * `turn == max_turns` throws budget_exhausted.
 */
inline std::optional<Observation> step(EpisodeState& state, const Action& action, const Executor& executor,
                                       const ExecutionContext& ctx, std::size_t max_turns) {
    if (state.terminal) {
        throw Error(ErrorCode::invalid_argument, "episode already answered");
    }
    if (const auto* route = std::get_if<RouteAction>(&action)) {
        if (state.turn >= max_turns) {
            throw Error(ErrorCode::budget_exhausted,
                        "route refused: " + std::to_string(max_turns) + " interaction turns used");
        }
        Observation obs;
        try {
            obs = executor.execute_pair(route->pair, route->input, ctx);
        } catch (const Error& e) {
            obs = error_observation(route->pair, e);
        }
        state.context.push_back({action, obs});
        ++state.turn;
        return obs;
    }
    state.context.push_back({action, std::nullopt});
    if (std::holds_alternative<traj::Answer>(action)) {
        state.terminal = true;
    }
    return std::nullopt;
}

struct StepLog {
    PolicyContext ctx;
    ActionIndex action = 0;
};

struct EpisodeRecord {
    std::string query_id;
    std::string domain;
    std::size_t cluster = 0;
    traj::Trajectory trajectory;
    RewardBreakdown reward;
    std::vector<Observation> observations;
    std::vector<StepLog> steps;
    std::size_t api_calls = 0;
    Money cost;
    std::string answer;
    bool answered = false;
};

struct EpisodeOptions {
    std::size_t max_turns = 4;
    RewardWeights weights;
    /// Optional optimal-model table for the selection reward.
    const OptimalModelTable* table = nullptr;
};

/// Answer text derived from the most recent observation (outcome prefixes
/// stripped); empty if nothing was observed.
inline std::string extract_answer(const std::vector<Observation>& observations) {
    if (observations.empty()) {
        return {};
    }
    return detail::strip_outcome_prefix(observations.back().text);
}

/**
 * Runs one episode. The policy is queried at each turn; before every action
 * a canonical think block is written so the trajectory carries the mandatory
 * reasoning segment. After `max_turns` routes the policy is asked once more;
 * if it still routes, the episode ends without an answer.
 *
 * `episode_seed` fixes both the policy's and the executor's RNG streams.
 */
inline EpisodeRecord run_episode(const RoutingPolicy& policy, const QueryRecord& query, const Executor& executor,
                                 const EpisodeOptions& options, std::uint64_t episode_seed) {
    const auto& pool = executor.pool();
    const ActionIndex answer_index = pool.pair_count();
    Rng policy_rng = Rng::stream(episode_seed, 1);
    Rng exec_rng = Rng::stream(episode_seed, 2);
    const ExecutionContext ctx{&query, &exec_rng};

    EpisodeRecord rec;
    rec.query_id = query.id;
    rec.domain = query.domain;
    rec.cluster = policy.locate(query);

    EpisodeState state;
    state.query = query.query;
    auto& segments = rec.trajectory.segments;
    bool failed = false;
    for (;;) {
        const PolicyContext pctx{rec.cluster, state.turn, failed};
        const ActionIndex a = policy.act(pctx, policy_rng);
        if (a > answer_index) {
            throw Error(ErrorCode::out_of_range, "policy returned action " + std::to_string(a));
        }
        rec.steps.push_back({pctx, a});
        if (a == answer_index) {
            rec.answer = extract_answer(rec.observations);
            const traj::Think think{"answer"};
            step(state, think, executor, ctx, options.max_turns);
            segments.emplace_back(think);
            const traj::Answer answer{rec.answer};
            step(state, answer, executor, ctx, options.max_turns);
            segments.emplace_back(answer);
            rec.answered = true;
            break;
        }
        if (state.turn >= options.max_turns) {
            rec.answer.clear();
            break;
        }
        const auto pair = pool.pair_at(a);
        const traj::Think think{"route to " + pool.pair_label(pair)};
        step(state, think, executor, ctx, options.max_turns);
        segments.emplace_back(think);
        const RouteAction route{pair, query.query};
        auto obs = step(state, route, executor, ctx, options.max_turns);
        segments.emplace_back(traj::Route{pool.model(pair).name, pool.tool(pair).name, query.query});
        segments.emplace_back(traj::Information{obs->text});
        failed = obs->failed;
        rec.cost += obs->cost;
        rec.observations.push_back(std::move(*obs));
        ++rec.api_calls;
    }

    const double fmt = format_reward(rec.trajectory, pool);
    const double out = query.gold.empty() ? 0.0 : outcome_reward(rec.answer, query.gold, query.matcher);
    SelectionResult sel{0.0, true};
    if (options.table != nullptr) {
        sel = selection_reward(rec.trajectory, *options.table, query.id, options.weights.selection_penalty);
    }
    rec.reward = composite_reward(fmt, out, sel.value, options.weights);
    rec.reward.no_table = sel.no_table;
    return rec;
}

// ---- episode log (JSONL) ----

inline json segment_to_json(const traj::Segment& s) {
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, traj::Think>) {
                return {{"type", "think"}, {"text", v.text}};
            } else if constexpr (std::is_same_v<T, traj::Route>) {
                return {{"type", "route"}, {"model", v.model}, {"tool", v.tool}, {"input", v.input}};
            } else if constexpr (std::is_same_v<T, traj::Information>) {
                return {{"type", "information"}, {"text", v.text}};
            } else {
                return {{"type", "answer"}, {"text", v.text}};
            }
        },
        s);
}

inline json episode_to_json(const EpisodeRecord& r, const RoutingPool& pool) {
    json segs = json::array();
    for (const auto& s : r.trajectory.segments) {
        segs.push_back(segment_to_json(s));
    }
    json obs = json::array();
    for (const auto& o : r.observations) {
        obs.push_back({{"pair", o.source ? pool.pair_label(*o.source) : ""},
                       {"text", o.text},
                       {"in_tokens", o.in_tokens},
                       {"out_tokens", o.out_tokens},
                       {"truncated", o.truncated},
                       {"failed", o.failed},
                       {"cost", detail::money_to_json(o.cost)}});
    }
    json steps = json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"cluster", s.ctx.cluster}, {"turn", s.ctx.turn}, {"failed", s.ctx.last_step_failed},
                         {"action", s.action}});
    }
    return {{"id", r.query_id},
            {"domain", r.domain},
            {"cluster", r.cluster},
            {"trajectory", segs},
            {"reward", {{"fmt", r.reward.fmt}, {"out", r.reward.out}, {"sel", r.reward.sel},
                        {"total", r.reward.total}, {"no_table", r.reward.no_table}}},
            {"observations", obs},
            {"steps", steps},
            {"api_calls", r.api_calls},
            {"cost", detail::money_to_json(r.cost)},
            {"answer", r.answer},
            {"answered", r.answered}};
}

} // namespace atlas
