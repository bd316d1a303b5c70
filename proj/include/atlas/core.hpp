#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atlas/error.hpp"
#include "atlas/hash.hpp"
#include "json.hpp"

/**
 * @file core.hpp
 *
 * @brief Model/tool registry and the Cartesian pair space routed over.
 */

namespace atlas {

using json = nlohmann::json;

/**
 * @brief Exact currency amount in units of 1e-12.
 *
 * Per-token prices are tiny decimals; holding them as integers keeps cost
 * ledgers exactly reproducible regardless of summation order.
 */
struct Money {
    static constexpr std::int64_t scale = 1'000'000'000'000LL;

    std::int64_t pico = 0;

    static Money from_double(double v) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::non_finite, "price is not finite");
        }
        return Money{static_cast<std::int64_t>(std::llround(v * static_cast<double>(scale)))};
    }

    /// Parses a plain decimal like "0.0015" without going through binary floating point.
    static Money from_decimal(std::string_view text) {
        auto fail = [&] { return Error(ErrorCode::parse_error, "bad decimal '" + std::string(text) + "'"); };
        if (text.empty()) {
            throw fail();
        }
        bool negative = false;
        if (text.front() == '-' || text.front() == '+') {
            negative = text.front() == '-';
            text.remove_prefix(1);
        }
        auto dot = text.find('.');
        std::string_view whole = text.substr(0, dot);
        std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
        if ((whole.empty() && frac.empty()) || frac.size() > 12) {
            throw fail();
        }
        std::int64_t w = 0;
        if (!whole.empty()) {
            auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), w);
            if (ec != std::errc{} || p != whole.data() + whole.size()) {
                throw fail();
            }
        }
        std::int64_t f = 0;
        for (char c : frac) {
            if (c < '0' || c > '9') {
                throw fail();
            }
            f = f * 10 + (c - '0');
        }
        for (std::size_t i = frac.size(); i < 12; ++i) {
            f *= 10;
        }
        std::int64_t v = w * scale + f;
        return Money{negative ? -v : v};
    }

    double to_double() const { return static_cast<double>(pico) / static_cast<double>(scale); }

    Money operator+(Money o) const { return Money{pico + o.pico}; }
    Money& operator+=(Money o) {
        pico += o.pico;
        return *this;
    }
    Money operator*(std::int64_t n) const { return Money{pico * n}; }
    auto operator<=>(const Money&) const = default;
};

struct ModelSpec {
    std::string name;
    std::optional<std::string> endpoint;
    std::string description;
};

enum class ToolKind { calculator, web_search, prm, code_interpreter, none, simulated };

inline std::string_view to_string(ToolKind k) {
    switch (k) {
    case ToolKind::calculator: return "calculator";
    case ToolKind::web_search: return "web_search";
    case ToolKind::prm: return "prm";
    case ToolKind::code_interpreter: return "code_interpreter";
    case ToolKind::none: return "none";
    case ToolKind::simulated: return "simulated";
    }
    return "none";
}

inline ToolKind tool_kind_from_string(std::string_view s) {
    for (auto k : {ToolKind::calculator, ToolKind::web_search, ToolKind::prm, ToolKind::code_interpreter,
                   ToolKind::none, ToolKind::simulated}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw Error(ErrorCode::schema_error, "unknown tool kind '" + std::string(s) + "'");
}

struct ToolSpec {
    std::string name;
    ToolKind kind = ToolKind::none;
    json config = json::object();
};

struct ModelPrice {
    Money input;
    Money output;
};

/// Per-model unit prices, currency per token.
using PriceSheet = std::map<std::string, ModelPrice>;

/// Indices into the owning pool's model and tool lists.
struct ModelToolPair {
    std::size_t model = 0;
    std::size_t tool = 0;

    auto operator<=>(const ModelToolPair&) const = default;
};

/**
 * @brief Immutable registry of models, tools and prices.
 *
 * Pair enumeration order is `model_index * tool_count() + tool_index`; that
 * order defines action indices for every policy built over the pool.
 */
class RoutingPool {
public:
    RoutingPool() = default;

    static RoutingPool build(std::vector<ModelSpec> models, std::vector<ToolSpec> tools, PriceSheet prices) {
        RoutingPool pool;
        for (std::size_t i = 0; i < models.size(); ++i) {
            check_name(models[i].name, "model");
            if (!pool.model_index_.emplace(models[i].name, i).second) {
                throw Error(ErrorCode::duplicate_name, "duplicate model '" + models[i].name + "'");
            }
            auto it = prices.find(models[i].name);
            if (it == prices.end()) {
                throw Error(ErrorCode::missing_price, "no price entry for model '" + models[i].name + "'");
            }
            if (it->second.input.pico < 0 || it->second.output.pico < 0) {
                throw Error(ErrorCode::invalid_argument, "negative price for model '" + models[i].name + "'");
            }
        }
        for (std::size_t i = 0; i < tools.size(); ++i) {
            check_name(tools[i].name, "tool");
            if (!pool.tool_index_.emplace(tools[i].name, i).second) {
                throw Error(ErrorCode::duplicate_name, "duplicate tool '" + tools[i].name + "'");
            }
        }
        pool.models_ = std::move(models);
        pool.tools_ = std::move(tools);
        pool.prices_ = std::move(prices);
        return pool;
    }

    const std::vector<ModelSpec>& models() const { return models_; }
    const std::vector<ToolSpec>& tools() const { return tools_; }
    const PriceSheet& prices() const { return prices_; }

    std::size_t model_count() const { return models_.size(); }
    std::size_t tool_count() const { return tools_.size(); }
    std::size_t pair_count() const { return models_.size() * tools_.size(); }

    std::size_t pair_index(const ModelToolPair& p) const { return p.model * tools_.size() + p.tool; }

    ModelToolPair pair_at(std::size_t index) const {
        if (index >= pair_count()) {
            throw Error(ErrorCode::out_of_range, "pair index " + std::to_string(index) + " out of range");
        }
        return {index / tools_.size(), index % tools_.size()};
    }

    const ModelSpec& model(const ModelToolPair& p) const { return models_.at(p.model); }
    const ToolSpec& tool(const ModelToolPair& p) const { return tools_.at(p.tool); }
    const ModelPrice& price(const ModelToolPair& p) const { return prices_.at(models_.at(p.model).name); }

    std::optional<std::size_t> find_model(std::string_view name) const {
        auto it = model_index_.find(std::string(name));
        return it == model_index_.end() ? std::nullopt : std::optional(it->second);
    }
    std::optional<std::size_t> find_tool(std::string_view name) const {
        auto it = tool_index_.find(std::string(name));
        return it == tool_index_.end() ? std::nullopt : std::optional(it->second);
    }

    ModelToolPair resolve(std::string_view model_name, std::string_view tool_name) const {
        auto m = find_model(model_name);
        if (!m) {
            throw Error(ErrorCode::unknown_model, "unknown model '" + std::string(model_name) + "'");
        }
        auto t = find_tool(tool_name);
        if (!t) {
            throw Error(ErrorCode::unknown_tool, "unknown tool '" + std::string(tool_name) + "'");
        }
        return {*m, *t};
    }

    bool contains(std::string_view model_name, std::string_view tool_name) const {
        return find_model(model_name) && find_tool(tool_name);
    }

    /// "Model@@Tool", the label used in reports and route syntax.
    std::string pair_label(const ModelToolPair& p) const { return model(p).name + "@@" + tool(p).name; }

    /// Stable digest of the action space (names and order only).
    std::string fingerprint() const {
        std::uint64_t h = fnv1a64("atlas-pool");
        for (const auto& m : models_) {
            h = fnv1a64(m.name, fnv1a64("|m|", h));
        }
        for (const auto& t : tools_) {
            h = fnv1a64(t.name, fnv1a64("|t|", h));
        }
        return hex64(h);
    }

private:
    static void check_name(const std::string& name, const char* what) {
        if (name.empty()) {
            throw Error(ErrorCode::invalid_argument, std::string(what) + " name is empty");
        }
        if (name.find("@@") != std::string::npos || name.find(':') != std::string::npos) {
            throw Error(ErrorCode::reserved_character,
                        std::string(what) + " name '" + name + "' contains reserved '@@' or ':'");
        }
    }

    std::vector<ModelSpec> models_;
    std::vector<ToolSpec> tools_;
    PriceSheet prices_;
    std::unordered_map<std::string, std::size_t> model_index_;
    std::unordered_map<std::string, std::size_t> tool_index_;
};

inline RoutingPool build_pool(std::vector<ModelSpec> models, std::vector<ToolSpec> tools, PriceSheet prices) {
    return RoutingPool::build(std::move(models), std::move(tools), std::move(prices));
}

inline ModelToolPair resolve_pair(const RoutingPool& pool, std::string_view model_name, std::string_view tool_name) {
    return pool.resolve(model_name, tool_name);
}

// ---- pool file (JSON, version 1) ----

namespace detail {

inline Money money_from_json(const json& v) {
    if (v.is_string()) {
        return Money::from_decimal(v.get<std::string>());
    }
    if (v.is_number()) {
        return Money::from_double(v.get<double>());
    }
    throw Error(ErrorCode::schema_error, "price must be a number or decimal string");
}

inline json money_to_json(Money m) {
    // Rendered as an exact decimal string.
    const bool neg = m.pico < 0;
    std::int64_t v = neg ? -m.pico : m.pico;
    std::string frac = std::to_string(v % Money::scale);
    frac.insert(0, 12 - frac.size(), '0');
    while (frac.size() > 1 && frac.back() == '0') {
        frac.pop_back();
    }
    return (neg ? "-" : "") + std::to_string(v / Money::scale) + "." + frac;
}

inline void require_version(const json& doc, int expected, const char* what) {
    if (!doc.is_object() || !doc.contains("version") || doc.at("version") != expected) {
        throw Error(ErrorCode::schema_error,
                    std::string(what) + ": expected \"version\": " + std::to_string(expected));
    }
}

} // namespace detail

inline json pool_to_json(const RoutingPool& pool) {
    json models = json::array();
    for (const auto& m : pool.models()) {
        json j{{"name", m.name}};
        if (m.endpoint) {
            j["endpoint"] = *m.endpoint;
        }
        if (!m.description.empty()) {
            j["description"] = m.description;
        }
        models.push_back(std::move(j));
    }
    json tools = json::array();
    for (const auto& t : pool.tools()) {
        json j{{"name", t.name}, {"kind", std::string(to_string(t.kind))}};
        if (!t.config.empty()) {
            j["config"] = t.config;
        }
        tools.push_back(std::move(j));
    }
    json prices = json::object();
    for (const auto& [name, p] : pool.prices()) {
        prices[name] = {{"input", detail::money_to_json(p.input)}, {"output", detail::money_to_json(p.output)}};
    }
    return {{"version", 1}, {"models", models}, {"tools", tools}, {"prices", prices}};
}

inline RoutingPool pool_from_json(const json& doc) {
    detail::require_version(doc, 1, "pool");
    try {
        std::vector<ModelSpec> models;
        for (const auto& m : doc.at("models")) {
            ModelSpec spec;
            spec.name = m.at("name").get<std::string>();
            if (m.contains("endpoint")) {
                spec.endpoint = m.at("endpoint").get<std::string>();
            }
            spec.description = m.value("description", "");
            models.push_back(std::move(spec));
        }
        std::vector<ToolSpec> tools;
        for (const auto& t : doc.at("tools")) {
            ToolSpec spec;
            spec.name = t.at("name").get<std::string>();
            spec.kind = tool_kind_from_string(t.value("kind", "none"));
            spec.config = t.value("config", json::object());
            tools.push_back(std::move(spec));
        }
        PriceSheet prices;
        for (const auto& [name, p] : doc.at("prices").items()) {
            prices[name] = {detail::money_from_json(p.at("input")), detail::money_from_json(p.at("output"))};
        }
        return build_pool(std::move(models), std::move(tools), std::move(prices));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_error, std::string("pool: ") + e.what());
    }
}

} // namespace atlas
