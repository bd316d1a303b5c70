#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>

#include "atlas/error.hpp"
#include "httplib.h"

namespace atlas::http {

struct Url {
    std::string origin; // scheme://host[:port]
    std::string path;   // starts with '/'
};

inline Url split_url(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) {
        throw Error(ErrorCode::invalid_argument, "URL without scheme: " + std::string(url));
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string_view::npos) {
        return {std::string(url), "/"};
    }
    return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

/// Counting semaphore with a runtime limit.
class ConcurrencyLimit {
public:
    explicit ConcurrencyLimit(std::size_t limit) : available_(limit == 0 ? 1 : limit) {}

    class Permit {
    public:
        explicit Permit(ConcurrencyLimit& owner) : owner_(&owner) { owner_->acquire(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;
        ~Permit() { owner_->release(); }

    private:
        ConcurrencyLimit* owner_;
    };

    Permit acquire_permit() { return Permit(*this); }

private:
    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return available_ > 0; });
        --available_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            ++available_;
        }
        cv_.notify_one();
    }

    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t available_;
};

struct RetryPolicy {
    int max_retries = 2;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
};

struct RequestOptions {
    std::chrono::milliseconds timeout{30000};
    RetryPolicy retry;
    std::optional<std::string> bearer_token;
};

struct Response {
    int status = 0;
    std::string body;
    int attempts = 0;
};

inline std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') {
        return std::nullopt;
    }
    return std::string(v);
}

/**
 * Sends one request, retrying transport failures and 5xx responses with
 * exponential backoff. A 4xx response is returned immediately. Throws
 * `timeout` / `http_error` once retries are exhausted.
 */
inline Response send(std::string_view method, std::string_view url, const std::string& body,
                     const RequestOptions& opts, const httplib::Params& params = {}) {
    const auto parts = split_url(url);
    auto backoff = opts.retry.initial_backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= opts.retry.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * opts.retry.multiplier));
        }
        httplib::Client client(parts.origin);
        client.set_connection_timeout(opts.timeout);
        client.set_read_timeout(opts.timeout);
        client.set_write_timeout(opts.timeout);
        httplib::Headers headers;
        if (opts.bearer_token) {
            headers.emplace("Authorization", "Bearer " + *opts.bearer_token);
        }
        httplib::Result res = method == "GET"
                                  ? client.Get(parts.path, params, headers)
                                  : client.Post(parts.path, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        return {res->status, res->body, attempt + 1};
    }
    const bool timed_out = last_error.find("Timeout") != std::string::npos ||
                           last_error.find("Read") != std::string::npos;
    throw Error(timed_out ? ErrorCode::timeout : ErrorCode::http_error,
                std::string(url) + ": " + last_error + " after " +
                    std::to_string(opts.retry.max_retries + 1) + " attempts");
}

} // namespace atlas::http
