#include "chw/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace chw {

namespace {

constexpr std::size_t kMaxRejections = 1'000'000;

// (p, mu, alpha, theta_base, lambda, s_base, beta)
constexpr FeatureVector kGroupA{0.05, 0.025, 0.1, 0.7, 0.5, 1.0, 0.3};
constexpr FeatureVector kGroupB{5.0, 4.0, 2.0, 0.7, 0.5, 0.2, 1.5};
constexpr FeatureVector kGroupC{5.0, 2.0, 4.0, 0.7, 0.5, 0.2, 1.5};
constexpr FeatureVector kGroupD{7.5, 4.0, 2.0, 0.7, 0.5, 0.2, 1.5};
constexpr FeatureVector kGroupE{0.05, 0.025, 0.35, 2.0, 1.5, 0.2, 1.5};

// Four-cluster estimate of a real cohort.
constexpr FeatureVector kCluster0{0.091, 0.006, 0.109, 0.001, 0.0, 0.072, 0.0};
constexpr FeatureVector kCluster1{6.994, 6.899, 0.125, 0.0, 0.0, 0.0, 0.011};
constexpr FeatureVector kCluster2{0.039, 0.009, 0.050, 0.002, 0.001, 0.060, 1.040};
constexpr FeatureVector kCluster3{6.990, 0.011, 6.997, 0.0, 0.0, 0.0, 0.0};

double truncated_normal(std::mt19937_64 & rng, double mean, double sd, double lower)
{
  if (sd == 0.0) {
    if (mean < lower) throw SamplingError("degenerate distribution below truncation bound");
    return mean;
  }
  std::normal_distribution<double> dist(mean, sd);
  for (std::size_t k = 0; k < kMaxRejections; ++k) {
    const double v = dist(rng);
    if (v >= lower) return v;
  }
  std::ostringstream msg;
  msg << "truncated normal(" << mean << ", " << sd << ") >= " << lower << " rejected "
      << kMaxRejections << " draws";
  throw SamplingError(msg.str());
}

std::vector<GroupSpec> with_default_spread(
  const std::vector<std::pair<std::string, FeatureVector>> & centroids)
{
  std::vector<FeatureVector> means;
  for (const auto & c : centroids) means.push_back(c.second);
  const FeatureVector sd = default_spread(means);
  std::vector<GroupSpec> out;
  for (const auto & [name, mean] : centroids) out.push_back({name, mean, sd});
  return out;
}

}  // namespace

void ScenarioSpec::validate() const
{
  if (groups.empty()) throw std::invalid_argument("scenario '" + name + "' has no groups");
  if (population < 1) throw std::invalid_argument("population must be >= 1");
  double total = 0.0;
  for (const auto & g : groups) {
    if (!(g.weight >= 0.0)) throw std::invalid_argument("group weights must be >= 0");
    for (std::size_t k = 0; k < g.group.centroid.size(); ++k) {
      if (!(g.group.centroid[k] >= 0.0) || !(g.group.sd[k] >= 0.0)) {
        throw std::invalid_argument("group '" + g.group.name + "': " + kFeatureNames[k] +
                                    " mean and sd must be >= 0");
      }
    }
    total += g.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("group weights must sum to 1");
  if (!(gamma > 0.0 && gamma < 1.0) || !(rho > 0.0 && rho < 1.0)) {
    throw std::invalid_argument("gamma and rho must lie in (0,1)");
  }
  if (!(initial_fbg_sd_mgdl >= 0.0)) throw std::invalid_argument("initial FBG sd must be >= 0");
}

FeatureVector default_spread(const std::vector<FeatureVector> & centroids)
{
  FeatureVector sd{};
  for (std::size_t k = 0; k < sd.size(); ++k) {
    double sum = 0.0;
    for (const auto & c : centroids) sum += c[k];
    const double mean = centroids.empty() ? 0.0 : sum / static_cast<double>(centroids.size());
    sd[k] = std::max(0.1 * mean, 0.01);
  }
  return sd;
}

std::vector<GroupSpec> builtin_groups()
{
  return with_default_spread(
    {{"A", kGroupA}, {"B", kGroupB}, {"C", kGroupC}, {"D", kGroupD}, {"E", kGroupE}});
}

std::vector<ScenarioSpec> builtin_scenarios()
{
  const auto g = builtin_groups();
  const auto clusters = with_default_spread(
    {{"cluster0", kCluster0}, {"cluster1", kCluster1}, {"cluster2", kCluster2}, {"cluster3", kCluster3}});

  std::vector<ScenarioSpec> out;
  ScenarioSpec s1;
  s1.name = "scenario1";
  for (const auto & grp : g) s1.groups.push_back({grp, 0.2});
  out.push_back(s1);

  ScenarioSpec s2;
  s2.name = "scenario2";
  s2.groups = {{g[1], 0.5}, {g[3], 0.5}};
  out.push_back(s2);

  ScenarioSpec s3;
  s3.name = "scenario3";
  s3.groups = {{g[1], 0.5}, {g[4], 0.5}};
  out.push_back(s3);

  ScenarioSpec nh;
  nh.name = "nanohealth_like";
  nh.population = 378;
  // Cluster sizes 181/90/100/7 of 378; the rounded percentages sum to 100.1%.
  nh.groups = {{clusters[0], 181.0 / 378.0},
               {clusters[1], 90.0 / 378.0},
               {clusters[2], 100.0 / 378.0},
               {clusters[3], 7.0 / 378.0}};
  nh.gamma = 0.2;
  nh.rho = 0.2;
  out.push_back(nh);
  return out;
}

ScenarioSpec builtin_scenario(const std::string & name)
{
  for (auto & s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::vector<std::size_t> apportion(const std::vector<double> & weights, std::size_t population)
{
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<double> remainder(weights.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    const double quota = weights[k] / total * static_cast<double>(population);
    // Guard against quotas like 19.999999999 from inexact weights.
    const double whole = std::floor(quota + 1e-9);
    counts[k] = static_cast<std::size_t>(whole);
    remainder[k] = quota - whole;
    assigned += counts[k];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < population; ++k, ++assigned) ++counts[order[k % order.size()]];
  return counts;
}

std::vector<std::string> effectiveness_warnings(const ScenarioSpec & spec)
{
  std::vector<std::string> out;
  for (const auto & g : spec.groups) {
    const auto & c = g.group.centroid;
    if (!(c[0] < c[1] + c[2])) {
      std::ostringstream msg;
      msg << "scenario '" << spec.name << "', group '" << g.group.name << "': p = " << c[0]
          << " is not below mu + alpha = " << c[1] + c[2] << "; the intervention cannot reverse drift";
      out.push_back(msg.str());
    }
  }
  return out;
}

Cohort sample_cohort(const ScenarioSpec & spec, std::uint64_t seed)
{
  spec.validate();
  std::vector<double> weights;
  for (const auto & g : spec.groups) weights.push_back(g.weight);
  const auto counts = apportion(weights, spec.population);

  std::mt19937_64 rng(seed);
  Cohort cohort;
  cohort.params.reserve(spec.population);
  for (std::size_t k = 0; k < spec.groups.size(); ++k) {
    const GroupSpec & group = spec.groups[k].group;
    for (std::size_t n = 0; n < counts[k]; ++n) {
      FeatureVector f{};
      for (std::size_t j = 0; j < f.size(); ++j) {
        f[j] = truncated_normal(rng, group.centroid[j], group.sd[j], 0.0);
      }
      const PatientParams params = from_features(f, spec.gamma, spec.rho);
      const double fbg =
        truncated_normal(rng, spec.initial_fbg_mean_mgdl, spec.initial_fbg_sd_mgdl, 1.0);
      cohort.params.push_back(params);
      cohort.initial.push_back(PatientState::initial(params, std::log(fbg)));
      cohort.labels.push_back(group.name);
    }
  }
  return cohort;
}

}  // namespace chw
