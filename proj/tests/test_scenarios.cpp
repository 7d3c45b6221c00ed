#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <numeric>

#include "chw/scenarios.hpp"

using namespace chw;

namespace {

std::map<std::string, std::size_t> label_counts(const Cohort & cohort)
{
  std::map<std::string, std::size_t> counts;
  for (const auto & l : cohort.labels) ++counts[l];
  return counts;
}

// E[ln X | X >= 1] for X ~ normal(mean, sd), by composite Simpson's rule.
double truncated_log_mean(double mean, double sd)
{
  const auto pdf = [&](double x) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z);
  };
  const double lo = 1.0;
  const double hi = mean + 12.0 * sd;
  constexpr int n = 200000;
  const double h = (hi - lo) / n;
  double mass = 0.0;
  double moment = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double x = lo + k * h;
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    mass += w * pdf(x);
    moment += w * pdf(x) * std::log(x);
  }
  return moment / mass;
}

}  // namespace

TEST_CASE("builtin scenarios")
{
  const auto all = builtin_scenarios();
  REQUIRE(all.size() == 4);
  for (const auto & s : all) {
    double total = 0.0;
    for (const auto & g : s.groups) total += g.weight;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_NOTHROW(s.validate());
  }

  const ScenarioSpec s2 = builtin_scenario("scenario2");
  REQUIRE(s2.groups.size() == 2);
  CHECK(s2.groups[0].group.name == "B");
  CHECK(s2.groups[0].weight == 0.5);
  CHECK(s2.groups[1].group.name == "D");
  CHECK(s2.groups[1].weight == 0.5);

  const ScenarioSpec s3 = builtin_scenario("scenario3");
  CHECK(s3.groups[0].group.name == "B");
  CHECK(s3.groups[1].group.name == "E");

  CHECK(builtin_groups()[3].centroid[0] == 7.5);
  CHECK(builtin_scenario("nanohealth_like").population == 378);
  CHECK_THROWS_AS((void)builtin_scenario("scenario9"), std::invalid_argument);
}

TEST_CASE("default spread is a tenth of the across-group mean, floored")
{
  const std::vector<FeatureVector> centroids{{1, 0, 2, 0, 0, 0, 0.04}, {3, 0, 4, 0, 0, 0, 0.06}};
  const FeatureVector sd = default_spread(centroids);
  CHECK(sd[0] == doctest::Approx(0.2));
  CHECK(sd[1] == 0.01);
  CHECK(sd[2] == doctest::Approx(0.3));
  CHECK(sd[6] == 0.01);
}

TEST_CASE("only Group D fails the effectiveness condition")
{
  CHECK(effectiveness_warnings(builtin_scenario("scenario1")).size() == 1);
  const auto w = effectiveness_warnings(builtin_scenario("scenario2"));
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("'D'") != std::string::npos);
  CHECK(effectiveness_warnings(builtin_scenario("scenario3")).empty());
}

TEST_CASE("largest-remainder apportionment")
{
  CHECK(apportion({0.2, 0.2, 0.2, 0.2, 0.2}, 100) == std::vector<std::size_t>{20, 20, 20, 20, 20});
  CHECK(apportion({0.5, 0.5}, 7) == std::vector<std::size_t>{4, 3});
  CHECK(apportion({0.6, 0.3, 0.1}, 4) == std::vector<std::size_t>{3, 1, 0});
  CHECK(apportion({181.0 / 378, 90.0 / 378, 100.0 / 378, 7.0 / 378}, 378) ==
        std::vector<std::size_t>{181, 90, 100, 7});
  for (std::size_t n : {1u, 3u, 17u, 101u}) {
    const auto c = apportion({0.25, 0.35, 0.4}, n);
    CHECK(std::accumulate(c.begin(), c.end(), std::size_t{0}) == n);
  }
}

TEST_CASE("cohort composition is exact")
{
  const Cohort c = sample_cohort(builtin_scenario("scenario1"), 1);
  REQUIRE(c.size() == 100);
  const auto counts = label_counts(c);
  for (const char * g : {"A", "B", "C", "D", "E"}) CHECK(counts.at(g) == 20);

  ScenarioSpec s2 = builtin_scenario("scenario2");
  s2.population = 31;
  const auto counts2 = label_counts(sample_cohort(s2, 1));
  CHECK(counts2.at("B") == 16);
  CHECK(counts2.at("D") == 15);
}

TEST_CASE("zero spread reproduces the centroids")
{
  ScenarioSpec spec = builtin_scenario("scenario1");
  for (auto & g : spec.groups) g.group.sd = FeatureVector{};
  const Cohort c = sample_cohort(spec, 4);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto & g = *std::find_if(spec.groups.begin(), spec.groups.end(),
                                   [&](const WeightedGroup & w) { return w.group.name == c.labels[i]; });
    CHECK(to_features(c.params[i]) == g.group.centroid);
    CHECK(c.params[i].gamma == 0.2);
    CHECK(c.params[i].rho == 0.2);
  }
}

TEST_CASE("sampled cohorts are valid, unenrolled and seed-determined")
{
  const ScenarioSpec spec = builtin_scenario("nanohealth_like");
  const Cohort a = sample_cohort(spec, 5);
  const Cohort b = sample_cohort(spec, 5);
  const Cohort c = sample_cohort(spec, 6);
  CHECK(a.params == b.params);
  CHECK(a.initial == b.initial);
  CHECK(a.params != c.params);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.params[i].validate().empty());
    CHECK(a.initial[i].b > 0.0);
    CHECK_FALSE(a.initial[i].z_prev);
    CHECK(a.initial[i].s == 0.0);
    CHECK(a.initial[i].theta == a.params[i].theta_base);
  }
}

TEST_CASE("initial log-FBG mean matches the truncated-normal quadrature")
{
  ScenarioSpec spec = builtin_scenario("scenario1");
  spec.population = 10000;
  const Cohort c = sample_cohort(spec, 12);
  double sum = 0.0;
  for (const auto & s : c.initial) sum += s.b;
  const double sample_mean = sum / double(c.size());
  const double oracle = truncated_log_mean(175.1, 71.9);
  CHECK(oracle == doctest::Approx(5.067421438).epsilon(1e-8));
  CHECK(std::abs(sample_mean / oracle - 1.0) <= 0.02);
}

TEST_CASE("scenario validation")
{
  ScenarioSpec s = builtin_scenario("scenario3");
  s.groups[0].weight = 0.7;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = builtin_scenario("scenario3");
  s.population = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = builtin_scenario("scenario3");
  s.groups[1].group.centroid[2] = -1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}
