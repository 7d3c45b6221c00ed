#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "chw/model.hpp"

namespace chw {

/// A patient type: per-feature means and spreads of a truncated normal.
struct GroupSpec
{
  std::string name;
  FeatureVector centroid{};
  FeatureVector sd{};
};

struct WeightedGroup
{
  GroupSpec group;
  double weight = 0.0;
};

struct ScenarioSpec
{
  std::string name;
  std::vector<WeightedGroup> groups;
  std::size_t population = 100;
  double gamma = 0.2;
  double rho = 0.2;
  double initial_fbg_mean_mgdl = 175.1;
  double initial_fbg_sd_mgdl = 71.9;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

class SamplingError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Spread rule for a family of groups: 10% of the across-group mean of each
/// feature, floored at 0.01.
[[nodiscard]] FeatureVector default_spread(const std::vector<FeatureVector> & centroids);

/// Patient groups A-E, with spreads from `default_spread` over all five.
[[nodiscard]] std::vector<GroupSpec> builtin_groups();

/// scenario1 (20% each of A-E), scenario2 (B+D), scenario3 (B+E) and
/// nanohealth_like (four-cluster mixture, 378 patients).
[[nodiscard]] std::vector<ScenarioSpec> builtin_scenarios();

/// Throws std::invalid_argument for an unknown name.
[[nodiscard]] ScenarioSpec builtin_scenario(const std::string & name);

/// Largest-remainder apportionment of `population` over `weights`; remainder
/// ties go to the lower index.
[[nodiscard]] std::vector<std::size_t> apportion(const std::vector<double> & weights,
                                                 std::size_t population);

/// One message per group whose centroid has p >= mu + alpha.
[[nodiscard]] std::vector<std::string> effectiveness_warnings(const ScenarioSpec & spec);

/// Draws a cohort: exact group counts, truncated-normal features, fixed
/// discounts, log of a truncated-normal initial FBG, unenrolled initial states.
[[nodiscard]] Cohort sample_cohort(const ScenarioSpec & spec, std::uint64_t seed);

}  // namespace chw
