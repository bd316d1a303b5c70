#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "atlas/core.hpp"
#include "atlas/io.hpp"
#include "atlas/traj.hpp"

/**
 * @file reward.hpp
 *
 * @brief Rule-based episode rewards: format (0 / -1), outcome (0 / 1),
 * model selection (0 / penalty) and their weighted sum.
 */

namespace atlas {

struct RewardWeights {
    double gamma = 1.0;
    double xi = 1.0;
    double selection_penalty = -0.15;
};

struct RewardBreakdown {
    double fmt = 0.0;
    double out = 0.0;
    double sel = 0.0;
    double total = 0.0;
    /// Set when the query had no optimal-model entry (sel is then 0).
    bool no_table = false;
};

enum class Matcher { exact, numeric, contains };

inline std::string_view to_string(Matcher m) {
    switch (m) {
    case Matcher::exact: return "exact";
    case Matcher::numeric: return "numeric";
    case Matcher::contains: return "contains";
    }
    return "exact";
}

inline Matcher matcher_from_string(std::string_view id) {
    if (id == "exact") {
        return Matcher::exact;
    }
    if (id == "numeric") {
        return Matcher::numeric;
    }
    if (id == "contains" || id == "containment") {
        return Matcher::contains;
    }
    throw Error(ErrorCode::unknown_matcher, "unknown matcher '" + std::string(id) + "'");
}

/// Trim, ASCII casefold, strip trailing periods. Shared by outcome matching
/// and self-consistency voting.
inline std::string normalize_answer(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(b, e - b + 1));
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!out.empty() && out.back() == '.') {
        out.pop_back();
    }
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) {
        out.pop_back();
    }
    return out;
}

namespace detail {

inline std::optional<double> parse_number(std::string_view s) {
    std::string clean;
    for (char c : s) {
        if (c != ',') {
            clean += c;
        }
    }
    double v = 0.0;
    auto [p, ec] = std::from_chars(clean.data(), clean.data() + clean.size(), v);
    if (ec != std::errc{} || p != clean.data() + clean.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

} // namespace detail

inline double outcome_reward(std::string_view answer, std::string_view gold, Matcher matcher) {
    const auto a = normalize_answer(answer);
    const auto g = normalize_answer(gold);
    if (g.empty()) {
        throw Error(ErrorCode::invalid_argument, "gold answer is empty");
    }
    switch (matcher) {
    case Matcher::exact: return a == g ? 1.0 : 0.0;
    case Matcher::contains: return a.find(g) != std::string::npos ? 1.0 : 0.0;
    case Matcher::numeric: {
        auto x = detail::parse_number(a);
        auto y = detail::parse_number(g);
        if (!x || !y) {
            return 0.0;
        }
        return std::fabs(*x - *y) <= 1e-6 ? 1.0 : 0.0;
    }
    }
    return 0.0;
}

inline double outcome_reward(std::string_view answer, std::string_view gold, std::string_view matcher_id) {
    return outcome_reward(answer, gold, matcher_from_string(matcher_id));
}

inline double format_reward(const traj::Trajectory& t, const RoutingPool& pool) {
    return traj::validate_structure(t, pool).empty() ? 0.0 : -1.0;
}

inline double format_reward(std::string_view text, const RoutingPool& pool) {
    return traj::check_text(text, pool).empty() ? 0.0 : -1.0;
}

/**
 * @brief Query id to optimal model name. Loaded from JSONL
 * (`{"id": ..., "optimal_model": ...}` per line).
 */
class OptimalModelTable {
public:
    void set(std::string id, std::string model) { entries_[std::move(id)] = std::move(model); }

    const std::string* find(std::string_view id) const {
        auto it = entries_.find(std::string(id));
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::size_t size() const { return entries_.size(); }

    /// Throws unknown_model if an entry names a model outside the pool.
    void validate(const RoutingPool& pool) const {
        for (const auto& [id, model] : entries_) {
            if (!pool.find_model(model)) {
                throw Error(ErrorCode::unknown_model, "optimal model '" + model + "' for '" + id + "' is not in the pool");
            }
        }
    }

    static OptimalModelTable load(const std::filesystem::path& path) {
        OptimalModelTable t;
        io::for_each_jsonl(path, [&](const json& row, std::size_t) {
            t.set(row.at("id").get<std::string>(), row.at("optimal_model").get<std::string>());
        });
        return t;
    }

private:
    std::unordered_map<std::string, std::string> entries_;
};

struct SelectionResult {
    double value = 0.0;
    bool no_table = false;
};

/// 0 when any route names the optimal model; the penalty otherwise. Queries
/// without a table entry score 0 and set `no_table`.
inline SelectionResult selection_reward(const traj::Trajectory& t, const OptimalModelTable& table,
                                        std::string_view query_id, double penalty = -0.15) {
    const std::string* optimal = table.find(query_id);
    if (optimal == nullptr) {
        return {0.0, true};
    }
    for (const auto& seg : t.segments) {
        if (const auto* r = std::get_if<traj::Route>(&seg); r != nullptr && r->model == *optimal) {
            return {0.0, false};
        }
    }
    return {penalty, false};
}

inline RewardBreakdown composite_reward(double fmt, double out, double sel, const RewardWeights& w = {}) {
    return {fmt, out, sel, fmt + w.gamma * out + w.xi * sel, false};
}

} // namespace atlas
