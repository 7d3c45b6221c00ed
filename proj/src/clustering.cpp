#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "chw/estimation.hpp"
#include "chw/seed.hpp"

namespace chw {

namespace {

double squared_distance(const FeatureVector & a, const FeatureVector & b)
{
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
  return d;
}

std::size_t nearest(const FeatureVector & x, const std::vector<FeatureVector> & centroids,
                    double & dist)
{
  std::size_t best = 0;
  dist = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(x, centroids[c]);
    if (d < dist) {
      dist = d;
      best = c;
    }
  }
  return best;
}

std::vector<FeatureVector> seed_plus_plus(const std::vector<FeatureVector> & rows, std::size_t k,
                                          std::mt19937_64 & rng)
{
  std::vector<FeatureVector> centroids;
  std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
  centroids.push_back(rows[pick(rng)]);
  std::vector<double> d2(rows.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double d = 0.0;
      nearest(rows[i], centroids, d);
      d2[i] = d;
      total += d;
    }
    if (total <= 0.0) {
      // Fewer distinct points than clusters.
      centroids.push_back(rows[pick(rng)]);
      continue;
    }
    std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
    centroids.push_back(rows[weighted(rng)]);
  }
  return centroids;
}

ClusterResult lloyd(const std::vector<FeatureVector> & rows, std::vector<FeatureVector> centroids,
                    const KMeansOptions & options)
{
  const std::size_t k = centroids.size();
  ClusterResult out;
  out.assignments.assign(rows.size(), 0);
  std::vector<double> dist(rows.size(), 0.0);
  double previous = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.assignments[i] = nearest(rows[i], centroids, dist[i]);
      inertia += dist[i];
    }
    out.inertia_trace.push_back(inertia);

    std::vector<FeatureVector> sums(k, FeatureVector{});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t c = out.assignments[i];
      ++counts[c];
      for (std::size_t j = 0; j < sums[c].size(); ++j) sums[c][j] += rows[i][j];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      FeatureVector next = centroids[c];
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its centroid.
        const auto far = static_cast<std::size_t>(
          std::max_element(dist.begin(), dist.end()) - dist.begin());
        next = rows[far];
        dist[far] = 0.0;
      } else {
        for (std::size_t j = 0; j < next.size(); ++j) {
          next[j] = sums[c][j] / static_cast<double>(counts[c]);
        }
      }
      shift = std::max(shift, squared_distance(next, centroids[c]));
      centroids[c] = next;
    }
    const bool stalled = previous - inertia <= options.tolerance * std::max(previous, 1e-300);
    previous = inertia;
    if (std::sqrt(shift) <= options.tolerance || stalled) break;
  }

  out.inertia = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double d = 0.0;
    out.assignments[i] = nearest(rows[i], centroids, d);
    out.inertia += d;
  }
  out.centroids = std::move(centroids);
  return out;
}

// Centroids of a smaller solution plus the points farthest from them.
std::vector<FeatureVector> extend_centroids(const std::vector<FeatureVector> & rows,
                                            std::vector<FeatureVector> centroids, std::size_t k)
{
  while (centroids.size() < k) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double d = 0.0;
      nearest(rows[i], centroids, d);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    centroids.push_back(rows[far]);
  }
  return centroids;
}

void check_k(const std::vector<FeatureVector> & rows, std::size_t k, const KMeansOptions & options)
{
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (k > rows.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(rows.size()) + " rows to cluster");
  }
  if (options.restarts == 0 || options.max_iterations == 0) {
    throw std::invalid_argument("k-means needs at least one restart and one iteration");
  }
}

}  // namespace

ClusterResult cluster_params(const std::vector<FeatureVector> & rows, std::size_t k,
                             std::uint64_t seed, const KMeansOptions & options)
{
  check_k(rows, k, options);
  ClusterResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < options.restarts; ++r) {
    std::mt19937_64 rng(derive_seed(seed, {k, r}));
    auto result = lloyd(rows, seed_plus_plus(rows, k, rng), options);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

std::vector<ElbowPoint> elbow_curve(const std::vector<FeatureVector> & rows,
                                    const std::vector<std::size_t> & k_range, std::uint64_t seed,
                                    const KMeansOptions & options)
{
  std::vector<std::size_t> ks = k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  std::vector<ElbowPoint> curve;
  std::vector<FeatureVector> previous;
  for (std::size_t k : ks) {
    check_k(rows, k, options);
    ClusterResult best = cluster_params(rows, k, seed, options);
    if (!previous.empty()) {
      // Growing the smaller solution keeps the curve nonincreasing.
      auto grown = lloyd(rows, extend_centroids(rows, previous, k), options);
      if (grown.inertia < best.inertia) best = std::move(grown);
    }
    curve.push_back({k, best.inertia});
    previous = best.centroids;
  }
  return curve;
}

std::size_t elbow_k(const std::vector<ElbowPoint> & curve)
{
  if (curve.size() < 2) throw std::invalid_argument("elbow needs at least two values of k");
  std::size_t best_k = curve[1].k;
  double best_drop = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double prev = curve[i - 1].inertia;
    const double drop = prev > 0.0 ? (prev - curve[i].inertia) / prev : 0.0;
    if (drop > best_drop) {
      best_drop = drop;
      best_k = curve[i].k;
    }
  }
  return best_k;
}

}  // namespace chw
