#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "atlas/embed.hpp"
#include "atlas/error.hpp"
#include "atlas/random.hpp"
#include "json.hpp"

/**
 * @file cluster.hpp
 *
 * @brief Lloyd k-means with k-means++ seeding, and nearest-centroid assignment.
 */

namespace atlas {

struct ClusterModel {
    std::vector<Vector> centroids;
    std::uint64_t seed = 0;
    double final_inertia = 0.0;

    std::size_t k() const { return centroids.size(); }
    std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
};

struct ClusterAssignment {
    std::size_t cluster = 0;
    double distance = 0.0;
};

struct KMeansOptions {
    std::size_t k = 8;
    std::uint64_t seed = 0;
    std::size_t max_iters = 1000;
    /// Stop once no centroid moves farther than this (euclidean).
    double tol = 1e-6;
    /// Independent k-means++ restarts; the lowest-inertia run is kept.
    std::size_t n_init = 10;
};

/// Per-iteration record of one Lloyd run; `inertia[i]` is the objective
/// after the i-th update step (index 0 is the seeding).
struct KMeansTrace {
    std::vector<double> inertia;
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Nearest centroid by squared distance; ties go to the lowest index.
inline std::pair<std::size_t, double> nearest(const std::vector<Vector>& centroids, std::span<const double> v) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        const double d = squared_distance(centroids[k], v);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return {best, best_d};
}

inline void check_points(const std::vector<Vector>& points) {
    const std::size_t dim = points.empty() ? 0 : points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) {
            throw Error(ErrorCode::dimension_mismatch, "mixed vector dimensions");
        }
        for (double x : p) {
            if (!std::isfinite(x)) {
                throw Error(ErrorCode::non_finite, "non-finite input vector");
            }
        }
    }
}

inline std::vector<Vector> kmeanspp_seed(const std::vector<Vector>& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<Vector> centers;
    centers.reserve(k);
    centers.push_back(points[rng.uniform_index(n)]);
    std::vector<double> mindist(n);
    for (std::size_t i = 0; i < n; ++i) {
        mindist[i] = squared_distance(points[i], centers.back());
    }
    while (centers.size() < k) {
        // All-zero weights (only duplicates left) fall back to a uniform pick.
        const std::size_t chosen = rng.categorical(mindist);
        centers.push_back(points[chosen]);
        for (std::size_t i = 0; i < n; ++i) {
            mindist[i] = std::min(mindist[i], squared_distance(points[i], centers.back()));
        }
    }
    return centers;
}

inline double assignment_inertia(const std::vector<Vector>& centroids, const std::vector<Vector>& points,
                                 std::vector<std::size_t>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        auto [k, d] = nearest(centroids, points[i]);
        labels[i] = k;
        total += d;
    }
    return total;
}

inline ClusterModel lloyd(const std::vector<Vector>& points, const KMeansOptions& opts, std::uint64_t run_seed,
                          KMeansTrace* trace) {
    Rng rng(run_seed);
    auto centroids = kmeanspp_seed(points, opts.k, rng);
    const std::size_t dim = points.front().size();
    std::vector<std::size_t> labels(points.size());
    double current = assignment_inertia(centroids, points, labels);
    if (trace) {
        trace->inertia.push_back(current);
    }

    std::vector<Vector> sums(opts.k, Vector(dim));
    std::vector<std::size_t> counts(opts.k);
    std::size_t iter = 0;
    bool converged = false;
    while (iter < opts.max_iters) {
        ++iter;
        for (auto& s : sums) {
            std::fill(s.begin(), s.end(), 0.0);
        }
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto& s = sums[labels[i]];
            for (std::size_t d = 0; d < dim; ++d) {
                s[d] += points[i][d];
            }
            ++counts[labels[i]];
        }
        double max_shift2 = 0.0;
        for (std::size_t k = 0; k < opts.k; ++k) {
            if (counts[k] == 0) {
                continue; // empty cluster keeps its centroid
            }
            Vector next(dim);
            for (std::size_t d = 0; d < dim; ++d) {
                next[d] = sums[k][d] / static_cast<double>(counts[k]);
            }
            max_shift2 = std::max(max_shift2, squared_distance(next, centroids[k]));
            centroids[k] = std::move(next);
        }
        auto prev_labels = labels;
        current = assignment_inertia(centroids, points, labels);
        if (trace) {
            trace->inertia.push_back(current);
        }
        if (std::sqrt(max_shift2) < opts.tol || labels == prev_labels) {
            converged = true;
            break;
        }
    }
    if (trace) {
        trace->iterations = iter;
        trace->converged = converged;
    }
    return ClusterModel{std::move(centroids), run_seed, current};
}

} // namespace detail

/**
 * Fits K centroids minimizing total within-cluster squared distance.
 *
 * Each of `n_init` runs seeds with k-means++ from an RNG stream derived from
 * `(seed, run)` and then alternates assignment and mean updates. The returned
 * model reports the seed it was asked for; `traces`, when non-null, receives
 * one entry per run.
 */
inline ClusterModel fit_kmeans(const std::vector<Vector>& points, const KMeansOptions& opts,
                               std::vector<KMeansTrace>* traces = nullptr) {
    if (opts.k == 0) {
        throw Error(ErrorCode::invalid_argument, "K must be at least 1");
    }
    if (points.size() < opts.k) {
        throw Error(ErrorCode::too_few_points, "K=" + std::to_string(opts.k) + " exceeds the " +
                                                   std::to_string(points.size()) + " training points");
    }
    detail::check_points(points);
    if (points.front().empty()) {
        throw Error(ErrorCode::dimension_mismatch, "zero-dimensional vectors");
    }
    const std::size_t runs = opts.n_init == 0 ? 1 : opts.n_init;
    ClusterModel best;
    bool have = false;
    for (std::size_t run = 0; run < runs; ++run) {
        KMeansTrace trace;
        auto model = detail::lloyd(points, opts, derive_seed(opts.seed, run), traces ? &trace : nullptr);
        if (traces) {
            traces->push_back(std::move(trace));
        }
        if (!have || model.final_inertia < best.final_inertia) {
            best = std::move(model);
            have = true;
        }
    }
    best.seed = opts.seed;
    return best;
}

inline ClusterAssignment assign(const ClusterModel& model, std::span<const double> v) {
    if (model.k() == 0) {
        throw Error(ErrorCode::invalid_argument, "cluster model has no centroids");
    }
    if (v.size() != model.dim()) {
        throw Error(ErrorCode::dimension_mismatch, "vector has dimension " + std::to_string(v.size()) +
                                                       ", model expects " + std::to_string(model.dim()));
    }
    auto [k, d2] = detail::nearest(model.centroids, v);
    return {k, std::sqrt(d2)};
}

inline double inertia(const ClusterModel& model, const std::vector<Vector>& points) {
    double total = 0.0;
    for (const auto& p : points) {
        if (p.size() != model.dim()) {
            throw Error(ErrorCode::dimension_mismatch, "vector dimension does not match the model");
        }
        total += detail::nearest(model.centroids, p).second;
    }
    return total;
}

inline json cluster_model_to_json(const ClusterModel& m) {
    return {{"k", m.k()}, {"d", m.dim()}, {"seed", m.seed}, {"centroids", m.centroids}, {"inertia", m.final_inertia}};
}

inline ClusterModel cluster_model_from_json(const json& j) {
    ClusterModel m;
    try {
        m.centroids = j.at("centroids").get<std::vector<Vector>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.final_inertia = j.at("inertia").get<double>();
        if (m.k() != j.at("k").get<std::size_t>() || m.k() == 0) {
            throw Error(ErrorCode::schema_error, "cluster model: k does not match centroid count");
        }
        const auto d = j.at("d").get<std::size_t>();
        for (const auto& c : m.centroids) {
            if (c.size() != d) {
                throw Error(ErrorCode::schema_error, "cluster model: centroid dimension mismatch");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_error, std::string("cluster model: ") + e.what());
    }
    return m;
}

} // namespace atlas
