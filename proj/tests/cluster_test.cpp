#include <limits>

#include "support.hpp"

using namespace atlas;

namespace {

std::vector<Vector> random_points(Rng& rng, std::size_t n, std::size_t dim) {
    std::vector<Vector> pts(n, Vector(dim));
    for (auto& p : pts) {
        for (auto& x : p) {
            x = rng.uniform() * 10.0 - 5.0;
        }
    }
    return pts;
}

/// Minimum inertia over every assignment of points to at most k labels.
double brute_force_optimum(const std::vector<Vector>& pts, std::size_t k) {
    const std::size_t n = pts.size();
    const std::size_t dim = pts[0].size();
    std::vector<std::size_t> label(n, 0);
    double best = std::numeric_limits<double>::infinity();
    for (;;) {
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            Vector mean(dim, 0.0);
            std::size_t cnt = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (label[i] == c) {
                    for (std::size_t d = 0; d < dim; ++d) {
                        mean[d] += pts[i][d];
                    }
                    ++cnt;
                }
            }
            for (std::size_t i = 0; i < n && cnt > 0; ++i) {
                if (label[i] == c) {
                    for (std::size_t d = 0; d < dim; ++d) {
                        const double diff = pts[i][d] - mean[d] / static_cast<double>(cnt);
                        total += diff * diff;
                    }
                }
            }
        }
        best = std::min(best, total);
        std::size_t i = 0;
        while (i < n && ++label[i] == k) {
            label[i++] = 0;
        }
        if (i == n) {
            return best;
        }
    }
}

} // namespace

TEST(KMeans, ReachesBruteForceOptimumOnSmallSets) {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pts = random_points(rng, 8, 2);
        KMeansOptions opts;
        opts.k = 3;
        opts.seed = static_cast<std::uint64_t>(trial);
        opts.n_init = 20;
        const auto model = fit_kmeans(pts, opts);
        const double optimum = brute_force_optimum(pts, 3);
        EXPECT_NEAR(model.final_inertia, optimum, 1e-9 * (1.0 + optimum)) << "trial " << trial;
    }
}

TEST(KMeans, SeparatedBlobsRecoverGroups) {
    Rng rng(5);
    std::vector<Vector> pts;
    const double centers[3][2] = {{0, 0}, {20, 0}, {0, 20}};
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 30; ++i) {
            pts.push_back({centers[c][0] + rng.uniform(), centers[c][1] + rng.uniform()});
        }
    }
    KMeansOptions opts;
    opts.k = 3;
    const auto model = fit_kmeans(pts, opts);
    for (int c = 0; c < 3; ++c) {
        const auto label = assign(model, pts[c * 30]).cluster;
        for (int i = 1; i < 30; ++i) {
            EXPECT_EQ(assign(model, pts[c * 30 + i]).cluster, label);
        }
    }
}

TEST(KMeans, InertiaTraceNeverIncreases) {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        const auto pts = random_points(rng, 60, 3);
        KMeansOptions opts;
        opts.k = 4;
        opts.seed = static_cast<std::uint64_t>(trial);
        opts.n_init = 3;
        std::vector<KMeansTrace> traces;
        fit_kmeans(pts, opts, &traces);
        ASSERT_EQ(traces.size(), 3u);
        for (const auto& t : traces) {
            ASSERT_GE(t.inertia.size(), 2u);
            for (std::size_t i = 1; i < t.inertia.size(); ++i) {
                ASSERT_LE(t.inertia[i], t.inertia[i - 1]) << "trial " << trial << " iteration " << i;
            }
        }
    }
}

TEST(KMeans, FinalInertiaMatchesDirectComputation) {
    Rng rng(8);
    const auto pts = random_points(rng, 50, 4);
    KMeansOptions opts;
    opts.k = 5;
    const auto model = fit_kmeans(pts, opts);
    double direct = 0.0;
    for (const auto& p : pts) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& c : model.centroids) {
            double s = 0.0;
            for (std::size_t d = 0; d < p.size(); ++d) {
                s += (p[d] - c[d]) * (p[d] - c[d]);
            }
            best = std::min(best, s);
        }
        direct += best;
    }
    EXPECT_NEAR(inertia(model, pts), direct, 1e-9);
    EXPECT_NEAR(model.final_inertia, direct, 1e-9);
}

TEST(KMeans, FixedSeedIsBitReproducible) {
    Rng rng(1);
    const auto pts = random_points(rng, 100, 5);
    KMeansOptions opts;
    opts.k = 6;
    opts.seed = 123;
    const auto a = fit_kmeans(pts, opts);
    const auto b = fit_kmeans(pts, opts);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(cluster_model_to_json(a).dump(), cluster_model_to_json(b).dump());
    EXPECT_EQ(a.seed, 123u);
}

TEST(KMeans, KEqualToNGivesZeroInertia) {
    const std::vector<Vector> pts{{0, 0}, {1, 0}, {0, 1}};
    KMeansOptions opts;
    opts.k = 3;
    EXPECT_DOUBLE_EQ(fit_kmeans(pts, opts).final_inertia, 0.0);
}

TEST(KMeans, DuplicatePointsDoNotBreakSeeding) {
    const std::vector<Vector> pts(10, Vector{1.0, 2.0});
    KMeansOptions opts;
    opts.k = 3;
    const auto model = fit_kmeans(pts, opts);
    EXPECT_EQ(model.k(), 3u);
    EXPECT_DOUBLE_EQ(model.final_inertia, 0.0);
}

TEST(KMeans, RejectsBadInput) {
    KMeansOptions opts;
    opts.k = 4;
    try {
        fit_kmeans({{1.0}, {2.0}}, opts);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::too_few_points);
    }
    opts.k = 1;
    EXPECT_THROW(fit_kmeans({{1.0}, {2.0, 3.0}}, opts), Error);
    EXPECT_THROW(fit_kmeans({{1.0}, {std::nan("")}}, opts), Error);
    opts.k = 0;
    EXPECT_THROW(fit_kmeans({{1.0}}, opts), Error);
}

TEST(Assign, MatchesExhaustiveScan) {
    Rng rng(31);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t dim = 1 + rng.uniform_index(6);
        ClusterModel m;
        m.centroids = random_points(rng, 1 + rng.uniform_index(9), dim);
        const auto v = random_points(rng, 1, dim)[0];
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < m.k(); ++k) {
            double s = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                s += (v[d] - m.centroids[k][d]) * (v[d] - m.centroids[k][d]);
            }
            if (s < best_d) {
                best_d = s;
                best = k;
            }
        }
        const auto a = assign(m, v);
        ASSERT_EQ(a.cluster, best);
        ASSERT_NEAR(a.distance, std::sqrt(best_d), 1e-12);
    }
}

TEST(Assign, TiesGoToLowestIndex) {
    ClusterModel m;
    m.centroids = {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}};
    EXPECT_EQ(assign(m, std::vector<double>{0.0, 0.0}).cluster, 0u);
    m.centroids = {{5.0}, {1.0}, {1.0}};
    EXPECT_EQ(assign(m, std::vector<double>{1.0}).cluster, 1u);
}

TEST(Assign, DimensionMismatchThrows) {
    ClusterModel m;
    m.centroids = {{0.0, 0.0}};
    try {
        assign(m, std::vector<double>{1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::dimension_mismatch);
    }
}

TEST(ClusterModelJson, RoundTripAndValidation) {
    ClusterModel m;
    m.centroids = {{0.25, -1.5}, {3.0, 4.0}};
    m.seed = 9;
    m.final_inertia = 2.5;
    const auto back = cluster_model_from_json(cluster_model_to_json(m));
    EXPECT_EQ(back.centroids, m.centroids);
    EXPECT_EQ(back.seed, 9u);
    auto bad = cluster_model_to_json(m);
    bad["k"] = 3;
    EXPECT_THROW(cluster_model_from_json(bad), Error);
}
