#pragma once

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "atlas/error.hpp"
#include "atlas/hash.hpp"
#include "atlas/http.hpp"
#include "atlas/io.hpp"
#include "json.hpp"

/**
 * @file embed.hpp
 *
 * @brief Query encoders: an offline hashed bag-of-words encoder and a client
 * for a remote embedding service.
 */

namespace atlas {

using Vector = std::vector<double>;

/**
 * Bag-of-words feature hashing. Each lowercased whitespace token is hashed
 * with the seed into one of `dim` buckets; bucket counts form the vector.
 */
struct HashedEncoderConfig {
    std::size_t dim = 256;
    std::uint64_t seed = 0;
    bool normalize = true;
};

/// POST {"model": m, "input": [texts]} -> {"data": [{"embedding": [...]}, ...]}
struct RemoteEncoderConfig {
    std::string endpoint;
    std::string model;
    std::chrono::milliseconds timeout{30000};
    std::size_t max_in_flight = 4;
    std::size_t batch_size = 64;
};

using EncoderConfig = std::variant<HashedEncoderConfig, RemoteEncoderConfig>;

namespace detail {

inline std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n\f\v");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n\f\v");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> lower_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!cur.empty()) {
                out.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur += static_cast<char>(std::tolower(c));
        }
    }
    if (!cur.empty()) {
        out.push_back(std::move(cur));
    }
    return out;
}

inline http::ConcurrencyLimit& endpoint_limit(const std::string& endpoint, std::size_t limit) {
    static std::mutex mutex;
    static std::map<std::string, std::unique_ptr<http::ConcurrencyLimit>> limits;
    std::lock_guard lock(mutex);
    auto& slot = limits[endpoint];
    if (!slot) {
        slot = std::make_unique<http::ConcurrencyLimit>(limit);
    }
    return *slot;
}

inline void require_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::non_finite, "embedding has a non-finite component");
        }
    }
}

inline Vector hashed_encode(const HashedEncoderConfig& cfg, std::string_view text) {
    if (cfg.dim < 8) {
        throw Error(ErrorCode::invalid_argument, "hashed encoder requires dim >= 8");
    }
    Vector v(cfg.dim, 0.0);
    const std::uint64_t basis = mix64(cfg.seed ^ 0xa0761d6478bd642fULL);
    for (const auto& tok : lower_tokens(text)) {
        v[mix64(fnv1a64(tok, basis)) % cfg.dim] += 1.0;
    }
    if (cfg.normalize) {
        double n2 = 0.0;
        for (double x : v) {
            n2 += x * x;
        }
        const double n = std::sqrt(n2);
        for (double& x : v) {
            x /= n;
        }
    }
    return v;
}

inline std::vector<Vector> remote_encode(const RemoteEncoderConfig& cfg, const std::vector<std::string>& texts) {
    if (cfg.endpoint.empty()) {
        throw Error(ErrorCode::invalid_argument, "remote encoder requires an endpoint");
    }
    auto permit = endpoint_limit(cfg.endpoint, cfg.max_in_flight).acquire_permit();
    http::RequestOptions opts;
    opts.timeout = cfg.timeout;
    opts.bearer_token = http::env("ATLAS_API_KEY");
    const json body{{"model", cfg.model}, {"input", texts}};
    http::Response res;
    try {
        res = http::send("POST", cfg.endpoint, body.dump(), opts);
    } catch (const Error& e) {
        throw Error(ErrorCode::encoder_failure, e.what());
    }
    if (res.status != 200) {
        throw Error(ErrorCode::encoder_failure, "embedding service returned HTTP " + std::to_string(res.status));
    }
    std::vector<Vector> out;
    try {
        auto doc = json::parse(res.body);
        for (const auto& item : doc.at("data")) {
            out.push_back(item.at("embedding").get<Vector>());
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::encoder_failure,
                    "malformed embedding response (HTTP " + std::to_string(res.status) + "): " + e.what());
    }
    if (out.size() != texts.size()) {
        throw Error(ErrorCode::encoder_failure, "embedding response has " + std::to_string(out.size()) +
                                                    " vectors for " + std::to_string(texts.size()) + " inputs");
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].size() != out[0].size()) {
            throw Error(ErrorCode::encoder_failure, "embedding response has mixed dimensions");
        }
    }
    for (const auto& v : out) {
        require_finite(v);
    }
    return out;
}

} // namespace detail

inline Vector encode(const EncoderConfig& config, std::string_view query) {
    if (detail::trim(query).empty()) {
        throw Error(ErrorCode::empty_query, "query is empty");
    }
    if (const auto* h = std::get_if<HashedEncoderConfig>(&config)) {
        return detail::hashed_encode(*h, query);
    }
    const auto& r = std::get<RemoteEncoderConfig>(config);
    return std::move(detail::remote_encode(r, {std::string(query)}).front());
}

/// Element i equals encode(queries[i]). The first failure is rethrown with its index.
inline std::vector<Vector> batch_encode(const EncoderConfig& config, const std::vector<std::string>& queries) {
    std::vector<Vector> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (detail::trim(queries[i]).empty()) {
            throw Error(ErrorCode::empty_query, "query " + std::to_string(i) + " is empty");
        }
    }
    if (const auto* h = std::get_if<HashedEncoderConfig>(&config)) {
        for (const auto& q : queries) {
            out.push_back(detail::hashed_encode(*h, q));
        }
        return out;
    }
    const auto& r = std::get<RemoteEncoderConfig>(config);
    const std::size_t chunk = r.batch_size == 0 ? 1 : r.batch_size;
    for (std::size_t start = 0; start < queries.size(); start += chunk) {
        const std::size_t end = std::min(queries.size(), start + chunk);
        std::vector<std::string> slice(queries.begin() + static_cast<std::ptrdiff_t>(start),
                                       queries.begin() + static_cast<std::ptrdiff_t>(end));
        try {
            for (auto& v : detail::remote_encode(r, slice)) {
                out.push_back(std::move(v));
            }
        } catch (const Error& e) {
            throw Error(e.code(), "query " + std::to_string(start) + ": " + e.what());
        }
    }
    return out;
}

inline json encoder_to_json(const EncoderConfig& config) {
    if (const auto* h = std::get_if<HashedEncoderConfig>(&config)) {
        return {{"kind", "hashed"}, {"dim", h->dim}, {"seed", h->seed}, {"normalize", h->normalize}};
    }
    const auto& r = std::get<RemoteEncoderConfig>(config);
    return {{"kind", "remote"},
            {"endpoint", r.endpoint},
            {"model", r.model},
            {"timeout_ms", r.timeout.count()},
            {"max_in_flight", r.max_in_flight}};
}

inline EncoderConfig encoder_from_json(const json& j) {
    const auto kind = j.value("kind", "hashed");
    if (kind == "hashed") {
        HashedEncoderConfig h;
        h.dim = j.value("dim", h.dim);
        h.seed = j.value("seed", h.seed);
        h.normalize = j.value("normalize", h.normalize);
        if (h.dim < 8) {
            throw Error(ErrorCode::schema_error, "hashed encoder requires dim >= 8");
        }
        return h;
    }
    if (kind == "remote") {
        RemoteEncoderConfig r;
        r.endpoint = j.value("endpoint", "");
        r.model = j.value("model", "");
        r.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
        r.max_in_flight = j.value("max_in_flight", std::size_t{4});
        if (r.endpoint.empty()) {
            throw Error(ErrorCode::schema_error, "remote encoder requires an endpoint");
        }
        return r;
    }
    throw Error(ErrorCode::schema_error, "unknown encoder kind '" + kind + "'");
}

/**
 * @brief Content-addressed embedding cache persisted as JSONL
 * (`{"text_hash": ..., "vector": [...]}` per line).
 *
 * One cache file belongs to one encoder configuration.
 */
class EmbeddingCache {
public:
    static std::string text_hash(std::string_view text) { return hex64(fnv1a64(text)); }

    static EmbeddingCache load(const std::filesystem::path& path) {
        EmbeddingCache cache;
        if (!std::filesystem::exists(path)) {
            return cache;
        }
        io::for_each_jsonl(path, [&](const json& row, std::size_t) {
            cache.entries_[row.at("text_hash").get<std::string>()] = row.at("vector").get<Vector>();
        });
        return cache;
    }

    void save(const std::filesystem::path& path) const {
        std::map<std::string, const Vector*> ordered;
        for (const auto& [k, v] : entries_) {
            ordered.emplace(k, &v);
        }
        std::string out;
        for (const auto& [k, v] : ordered) {
            out += json{{"text_hash", k}, {"vector", *v}}.dump();
            out += '\n';
        }
        io::write_file_atomic(path, out);
    }

    std::optional<Vector> find(std::string_view text) const {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(text_hash(text));
        return it == entries_.end() ? std::nullopt : std::optional(it->second);
    }

    void put(std::string_view text, Vector v) {
        std::lock_guard lock(mutex_);
        entries_[text_hash(text)] = std::move(v);
    }

    std::size_t size() const { return entries_.size(); }

    std::vector<Vector> encode_all(const EncoderConfig& config, const std::vector<std::string>& queries) {
        std::vector<std::string> missing;
        for (const auto& q : queries) {
            if (!find(q)) {
                missing.push_back(q);
            }
        }
        if (!missing.empty()) {
            auto fresh = batch_encode(config, missing);
            for (std::size_t i = 0; i < missing.size(); ++i) {
                put(missing[i], std::move(fresh[i]));
            }
        }
        std::vector<Vector> out;
        out.reserve(queries.size());
        for (const auto& q : queries) {
            out.push_back(*find(q));
        }
        return out;
    }

    EmbeddingCache() = default;
    EmbeddingCache(EmbeddingCache&& o) noexcept : entries_(std::move(o.entries_)) {}

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Vector> entries_;
};

} // namespace atlas
