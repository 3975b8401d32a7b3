#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cloudclass/core/error.hpp"
#include "cloudclass/core/types.hpp"

// Deterministic geometric primitives behind set abstraction, feature
// propagation, and edge convolution. All are pure functions; ties break on
// the smallest index everywhere so results are exactly reproducible and can
// be checked against brute-force oracles index by index.
namespace cloudclass::geom {

/// Ordered indices into a source cloud.
using IndexSet = std::vector<std::uint32_t>;

/// Rectangular M x K neighbor table. Distances, when kept, are sorted
/// ascending per row; ball-query rows may repeat indices (padding).
struct NeighborTable {
    std::size_t m = 0;
    std::size_t k = 0;
    std::vector<std::uint32_t> indices;  // m*k, row-major
    std::vector<double> distances;       // empty, or m*k

    std::uint32_t at(std::size_t row, std::size_t col) const { return indices[row * k + col]; }
};

/// Greedy farthest point sampling: each pick maximizes the minimum distance
/// to the already-selected set. start_index defaults to 0 so evaluation is
/// deterministic; training-time variety comes from augmentation instead.
template <typename T>
IndexSet fps(std::span<const Vec3<T>> points, std::size_t m, std::size_t start_index = 0) {
    const std::size_t n = points.size();
    if (m < 1 || m > n)
        throw ValidationError("fps: m must be in [1, count], got m=" + std::to_string(m) +
                              " count=" + std::to_string(n));
    if (start_index >= n) throw ValidationError("fps: start_index out of range");

    IndexSet selected;
    selected.reserve(m);
    selected.push_back(static_cast<std::uint32_t>(start_index));

    std::vector<T> min_d2(n);
    for (std::size_t i = 0; i < n; ++i) min_d2[i] = (points[i] - points[start_index]).norm2();

    while (selected.size() < m) {
        std::size_t best = 0;
        T best_d2 = -1;
        for (std::size_t i = 0; i < n; ++i) {
            if (min_d2[i] > best_d2) {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        selected.push_back(static_cast<std::uint32_t>(best));
        for (std::size_t i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i], (points[i] - points[best]).norm2());
    }
    return selected;
}

namespace detail {

template <typename T>
T row_dist2(const T* a, const T* b, std::size_t dim) {
    T acc = 0;
    for (std::size_t d = 0; d < dim; ++d) {
        const T diff = a[d] - b[d];
        acc += diff * diff;
    }
    return acc;
}

} // namespace detail

/// Exact k-nearest-neighbors over generic row-major dim-vectors (dim = 3 for
/// spatial queries, dim = F for feature-space graphs). Ascending distance,
/// ties by index. exclude_self skips source row j for query row j.
template <typename T>
NeighborTable knn(std::span<const T> sources, std::size_t n, std::size_t dim,
                  std::span<const T> queries, std::size_t q, std::size_t k,
                  bool exclude_self = false) {
    if (n == 0) throw ValidationError("knn: empty sources");
    const std::size_t usable = exclude_self ? n - 1 : n;
    if (k < 1 || k > usable) throw ValidationError("knn: k out of range");

    NeighborTable table;
    table.m = q;
    table.k = k;
    table.indices.resize(q * k);
    table.distances.resize(q * k);

    std::vector<std::pair<T, std::uint32_t>> cand(n);
    for (std::size_t i = 0; i < q; ++i) {
        cand.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (exclude_self && j == i) continue;
            cand.emplace_back(detail::row_dist2<T>(&queries[i * dim], &sources[j * dim], dim),
                              static_cast<std::uint32_t>(j));
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
        for (std::size_t c = 0; c < k; ++c) {
            table.indices[i * k + c] = cand[c].second;
            table.distances[i * k + c] = std::sqrt(static_cast<double>(cand[c].first));
        }
    }
    return table;
}

template <typename T>
NeighborTable knn(std::span<const Vec3<T>> sources, std::span<const Vec3<T>> queries,
                  std::size_t k) {
    static_assert(sizeof(Vec3<T>) == 3 * sizeof(T));
    if (sources.empty()) throw ValidationError("knn: empty sources");
    const T* src = &sources[0].x;
    const T* qry = queries.empty() ? src : &queries[0].x;
    return knn<T>(std::span<const T>(src, sources.size() * 3), sources.size(), 3,
                  std::span<const T>(qry, queries.size() * 3), queries.size(), k);
}

/// Up to K sources within radius of each center, nearest first, ties by
/// index. Rows short of K repeat the first hit; rows with no hit fall back
/// to the center's nearest source. Distances are not kept: padding would
/// break their ascending order.
template <typename T>
NeighborTable ball_query(std::span<const Vec3<T>> sources, std::span<const Vec3<T>> centers,
                         T radius, std::size_t k) {
    if (sources.empty()) throw ValidationError("ball_query: empty sources");
    if (!(radius > 0)) throw ValidationError("ball_query: radius must be positive");
    if (k < 1) throw ValidationError("ball_query: K must be >= 1");

    const T r2 = radius * radius;
    NeighborTable table;
    table.m = centers.size();
    table.k = k;
    table.indices.resize(centers.size() * k);

    std::vector<std::pair<T, std::uint32_t>> hits;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        hits.clear();
        T nearest_d2 = std::numeric_limits<T>::max();
        std::uint32_t nearest = 0;
        for (std::size_t j = 0; j < sources.size(); ++j) {
            const T d2 = (sources[j] - centers[i]).norm2();
            if (d2 <= r2) hits.emplace_back(d2, static_cast<std::uint32_t>(j));
            if (d2 < nearest_d2) {
                nearest_d2 = d2;
                nearest = static_cast<std::uint32_t>(j);
            }
        }
        std::sort(hits.begin(), hits.end());
        if (hits.size() > k) hits.resize(k);
        const std::uint32_t pad = hits.empty() ? nearest : hits.front().second;
        for (std::size_t c = 0; c < k; ++c)
            table.indices[i * k + c] = c < hits.size() ? hits[c].second : pad;
    }
    return table;
}

/// Inverse-distance-squared weights over the three nearest sparse points,
/// normalized to sum 1. With fewer than 3 sparse points the table pads by
/// repeating the last real neighbor at weight 0.
template <typename T>
std::pair<NeighborTable, std::vector<double>> three_nn_weights(std::span<const Vec3<T>> sparse,
                                                               std::span<const Vec3<T>> queries) {
    if (sparse.empty()) throw ValidationError("three_nn_weights: empty sparse set");
    constexpr double kEps = 1e-8;
    const std::size_t avail = std::min<std::size_t>(3, sparse.size());
    NeighborTable nn = knn(sparse, queries, avail);

    NeighborTable table;
    table.m = queries.size();
    table.k = 3;
    table.indices.resize(table.m * 3);
    table.distances.resize(table.m * 3);
    std::vector<double> weights(table.m * 3, 0.0);

    for (std::size_t i = 0; i < table.m; ++i) {
        double inv[3] = {0, 0, 0};
        double total = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            const std::size_t src = std::min(c, avail - 1);
            table.indices[i * 3 + c] = nn.indices[i * avail + src];
            table.distances[i * 3 + c] = nn.distances[i * avail + src];
            if (c < avail) {
                const double d = nn.distances[i * avail + c];
                inv[c] = 1.0 / (d * d + kEps);
                total += inv[c];
            }
        }
        for (std::size_t c = 0; c < avail; ++c) weights[i * 3 + c] = inv[c] / total;
    }
    return {std::move(table), std::move(weights)};
}

/// Gathers an M x K x F feature block through a neighbor table. With
/// relative=true the first 3 channels (coordinates) are rewritten as
/// neighbor minus center.
template <typename T>
std::vector<T> gather_group(std::span<const T> features, std::size_t n, std::size_t f,
                            const NeighborTable& table, std::span<const Vec3<T>> centers,
                            bool relative = true) {
    if (relative && f < 3)
        throw ValidationError("gather_group: relative mode needs at least 3 channels");
    if (relative && centers.size() != table.m)
        throw ValidationError("gather_group: centers size must match table rows");

    std::vector<T> out(table.m * table.k * f);
    for (std::size_t i = 0; i < table.m; ++i) {
        for (std::size_t c = 0; c < table.k; ++c) {
            const std::uint32_t j = table.at(i, c);
            if (j >= n) throw ValidationError("gather_group: index out of range");
            T* dst = &out[(i * table.k + c) * f];
            const T* src = &features[j * f];
            std::copy(src, src + f, dst);
            if (relative) {
                dst[0] -= centers[i].x;
                dst[1] -= centers[i].y;
                dst[2] -= centers[i].z;
            }
        }
    }
    return out;
}

} // namespace cloudclass::geom
