#include <algorithm>
#include <atomic>
#include <cstdlib>

#include "support.hpp"

using namespace atlas;
using atlas::test::LocalServer;
using atlas::test::TempDir;

namespace {

double norm(const Vector& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

RemoteEncoderConfig remote_at(const std::string& url) {
    RemoteEncoderConfig r;
    r.endpoint = url;
    r.model = "embed-small";
    r.timeout = std::chrono::milliseconds(2000);
    return r;
}

/// Embedding service stub: vector i of a request is {len(text), i, 1}.
void echo_embeddings(httplib::Server& s, std::atomic<int>* calls = nullptr) {
    s.Post("/v1/embeddings", [calls](const httplib::Request& req, httplib::Response& res) {
        if (calls) {
            ++*calls;
        }
        const auto body = json::parse(req.body);
        json data = json::array();
        std::size_t i = 0;
        for (const auto& t : body.at("input")) {
            data.push_back({{"embedding", {static_cast<double>(t.get<std::string>().size()), static_cast<double>(i++), 1.0}}});
        }
        res.set_content(json{{"data", data}}.dump(), "application/json");
    });
}

} // namespace

TEST(HashedEncoder, DeterministicAndUnitNorm) {
    const EncoderConfig cfg = HashedEncoderConfig{64, 7, true};
    const auto a = encode(cfg, "the quick brown fox");
    EXPECT_EQ(a, encode(cfg, "the quick brown fox"));
    EXPECT_NEAR(norm(a), 1.0, 1e-9);
    EXPECT_EQ(a.size(), 64u);
}

TEST(HashedEncoder, SeedChangesBuckets) {
    const auto a = encode(HashedEncoderConfig{256, 1, false}, "alpha beta gamma delta");
    const auto b = encode(HashedEncoderConfig{256, 2, false}, "alpha beta gamma delta");
    EXPECT_NE(a, b);
}

TEST(HashedEncoder, UnnormalizedCountsTokens) {
    const auto v = encode(HashedEncoderConfig{32, 0, false}, "a a b");
    double total = 0.0;
    for (double x : v) {
        total += x;
    }
    EXPECT_DOUBLE_EQ(total, 3.0);
    EXPECT_DOUBLE_EQ(*std::max_element(v.begin(), v.end()), 2.0);
}

TEST(HashedEncoder, InvariantToTokenOrderWhitespaceAndCase) {
    Rng rng(99);
    const HashedEncoderConfig cfg{128, 3, true};
    const char* spaces[] = {" ", "  ", "\t", "\n", " \t "};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> words;
        const auto n = 1 + rng.uniform_index(12);
        for (std::size_t i = 0; i < n; ++i) {
            words.push_back("w" + std::to_string(rng.uniform_index(30)));
        }
        std::string a;
        for (const auto& w : words) {
            a += w + " ";
        }
        for (std::size_t i = words.size(); i > 1; --i) {
            std::swap(words[i - 1], words[rng.uniform_index(i)]);
        }
        std::string b = spaces[rng.uniform_index(5)];
        for (auto w : words) {
            if (rng.bernoulli(0.5)) {
                w[0] = 'W';
            }
            b += w + spaces[rng.uniform_index(5)];
        }
        ASSERT_EQ(encode(cfg, a), encode(cfg, b)) << a << " vs " << b;
    }
}

TEST(HashedEncoder, RejectsEmptyQueryAndTinyDim) {
    EXPECT_THROW(encode(HashedEncoderConfig{}, "   \n"), Error);
    EXPECT_THROW(encode(HashedEncoderConfig{4, 0, true}, "x"), Error);
    try {
        batch_encode(HashedEncoderConfig{}, {"ok", ""});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::empty_query);
        EXPECT_NE(std::string(e.what()).find("query 1"), std::string::npos);
    }
}

TEST(EncoderConfig, JsonRoundTrip) {
    const EncoderConfig h = HashedEncoderConfig{32, 5, false};
    EXPECT_EQ(encoder_to_json(encoder_from_json(encoder_to_json(h))), encoder_to_json(h));
    const EncoderConfig r = remote_at("http://localhost:1/v1/embeddings");
    EXPECT_EQ(encoder_to_json(encoder_from_json(encoder_to_json(r))), encoder_to_json(r));
    EXPECT_THROW(encoder_from_json({{"kind", "magic"}}), Error);
}

TEST(RemoteEncoder, ReturnsServiceVectorsVerbatim) {
    LocalServer srv([](httplib::Server& s) { echo_embeddings(s); });
    const EncoderConfig cfg = remote_at(srv.url("/v1/embeddings"));
    EXPECT_EQ(encode(cfg, "hello"), (Vector{5, 0, 1}));
    const auto vs = batch_encode(cfg, {"a", "bbb", "cc"});
    ASSERT_EQ(vs.size(), 3u);
    EXPECT_EQ(vs[1], (Vector{3, 1, 1}));
}

TEST(RemoteEncoder, BatchesRequests) {
    std::atomic<int> calls{0};
    LocalServer srv([&](httplib::Server& s) { echo_embeddings(s, &calls); });
    auto r = remote_at(srv.url("/v1/embeddings"));
    r.batch_size = 2;
    const auto vs = batch_encode(r, {"a", "b", "c", "d", "e"});
    EXPECT_EQ(vs.size(), 5u);
    EXPECT_EQ(calls.load(), 3);
    EXPECT_EQ(vs[4], (Vector{1, 0, 1}));
}

TEST(RemoteEncoder, SendsBearerTokenFromEnvironment) {
    std::string seen;
    LocalServer srv([&](httplib::Server& s) {
        s.Post("/e", [&](const httplib::Request& req, httplib::Response& res) {
            seen = req.get_header_value("Authorization");
            res.set_content(R"({"data":[{"embedding":[1,2]}]})", "application/json");
        });
    });
    ::setenv("ATLAS_API_KEY", "sk-test", 1);
    encode(remote_at(srv.url("/e")), "q");
    ::unsetenv("ATLAS_API_KEY");
    EXPECT_EQ(seen, "Bearer sk-test");
}

TEST(RemoteEncoder, MalformedResponsesAreEncoderFailures) {
    LocalServer srv([](httplib::Server& s) {
        s.Post("/count", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"data":[]})", "application/json");
        });
        s.Post("/mixed", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"data":[{"embedding":[1,2]},{"embedding":[1]}]})", "application/json");
        });
        s.Post("/garbage", [](const httplib::Request&, httplib::Response& res) { res.set_content("<html>", "text/html"); });
        s.Post("/client", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    });
    auto expect_failure = [&](const std::string& path, std::vector<std::string> texts) {
        try {
            batch_encode(remote_at(srv.url(path)), texts);
            ADD_FAILURE() << path << " should fail";
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::encoder_failure) << path;
        }
    };
    expect_failure("/count", {"a"});
    expect_failure("/mixed", {"a", "b"});
    expect_failure("/garbage", {"a"});
    expect_failure("/client", {"a"});
}

TEST(RemoteEncoder, RetriesServerErrors) {
    std::atomic<int> calls{0};
    LocalServer srv([&](httplib::Server& s) {
        s.Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
            if (++calls < 2) {
                res.status = 503;
                return;
            }
            res.set_content(R"({"data":[{"embedding":[0.5]}]})", "application/json");
        });
    });
    EXPECT_EQ(encode(remote_at(srv.url("/flaky")), "x"), (Vector{0.5}));
    EXPECT_EQ(calls.load(), 2);
}

TEST(RemoteEncoder, UnreachableEndpointFails) {
    auto r = remote_at("http://127.0.0.1:1/v1/embeddings");
    r.timeout = std::chrono::milliseconds(200);
    EXPECT_THROW(encode(r, "x"), Error);
}

TEST(EmbeddingCache, PersistsAndAvoidsRecompute) {
    std::atomic<int> calls{0};
    LocalServer srv([&](httplib::Server& s) { echo_embeddings(s, &calls); });
    TempDir dir;
    const EncoderConfig cfg = remote_at(srv.url("/v1/embeddings"));
    {
        auto cache = EmbeddingCache::load(dir / "cache.jsonl");
        EXPECT_EQ(cache.size(), 0u);
        cache.encode_all(cfg, {"one", "two"});
        cache.save(dir / "cache.jsonl");
    }
    EXPECT_EQ(calls.load(), 1);
    auto cache = EmbeddingCache::load(dir / "cache.jsonl");
    EXPECT_EQ(cache.size(), 2u);
    const auto vs = cache.encode_all(cfg, {"two", "one", "three"});
    EXPECT_EQ(calls.load(), 2);
    EXPECT_EQ(vs[0], (Vector{3, 1, 1}));
    EXPECT_EQ(vs[2], (Vector{5, 0, 1}));
    ASSERT_TRUE(cache.find("one"));
    const auto line = io::read_file(dir / "cache.jsonl");
    EXPECT_NE(line.find("\"text_hash\""), std::string::npos);
}
