#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "atlas/cli.hpp"

namespace fs = std::filesystem;

namespace atlas::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = info ? std::string(info->test_suite_name()) + "." + info->name() : "atlas";
        path_ = fs::temp_directory_path() / ("atlas-test-" + std::to_string(::getpid()) + "-" + name + "-" +
                                             std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

/// httplib server on an ephemeral localhost port, run on a background thread.
class LocalServer {
public:
    explicit LocalServer(const std::function<void(httplib::Server&)>& routes) {
        routes(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    LocalServer(const LocalServer&) = delete;
    LocalServer& operator=(const LocalServer&) = delete;

    std::string url(const std::string& path = "") const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

inline RoutingPool small_pool(std::size_t models = 2, std::size_t tools = 2) {
    std::vector<ModelSpec> ms;
    PriceSheet prices;
    for (std::size_t m = 0; m < models; ++m) {
        ms.push_back({"m" + std::to_string(m), std::nullopt, ""});
        prices["m" + std::to_string(m)] = {Money{static_cast<std::int64_t>(1000 * (m + 1))},
                                           Money{static_cast<std::int64_t>(3000 * (m + 1))}};
    }
    std::vector<ToolSpec> ts;
    for (std::size_t t = 0; t < tools; ++t) {
        ts.push_back({"t" + std::to_string(t), ToolKind::simulated, json::object()});
    }
    return build_pool(ms, ts, prices);
}

inline fs::path fixture_dir() { return ATLAS_FIXTURE_DIR; }

} // namespace atlas::test
