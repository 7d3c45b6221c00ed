#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "chw/model.hpp"
#include "chw/policy.hpp"

namespace chw {

inline constexpr double kDefaultDelta = 4.8283137373023015;  // ln(125 mg/dL)

/// Capacity grid 5%, 10%, ..., 100%.
[[nodiscard]] std::vector<double> default_capacity_fractions();

struct SimulationConfig
{
  std::size_t horizon = 60;
  std::vector<double> capacity_fractions = default_capacity_fractions();
  std::size_t replications = 10;
  std::uint64_t base_seed = 0;
  NoiseModel noise{};
  double delta = kDefaultDelta;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

struct RunResult
{
  PolicyKind policy = PolicyKind::visit_no_one;
  double capacity_fraction = 0.0;
  std::size_t capacity = 0;
  std::size_t replication = 0;
  std::uint64_t seed = 0;  ///< seed of the process-noise stream

  // Indexed by period t = 1..N (element t-1), post-transition.
  std::vector<std::size_t> in_control;
  std::vector<std::size_t> enrolled;
  std::vector<std::size_t> visits;
  std::vector<std::size_t> screening_visits;

  std::vector<double> final_fbg;  ///< log-FBG per patient after period N
  double ppc_fraction = 0.0;

  friend bool operator==(const RunResult &, const RunResult &) = default;
};

/// Percent of cohort size to a per-period visit budget, rounding half up.
[[nodiscard]] std::size_t capacity_from_fraction(double fraction, std::size_t population);

/// Capacity fraction in basis points, the integer key used for seeding and output.
[[nodiscard]] std::int64_t fraction_basis_points(double fraction);

/// Seed of the process-noise stream for one (fraction, replication) cell; the
/// policy is deliberately absent so all policies see the same draws.
[[nodiscard]] std::uint64_t noise_seed(std::uint64_t base_seed, double fraction,
                                       std::size_t replication);

/// Seed for the cohort draw of one replication.
[[nodiscard]] std::uint64_t cohort_seed(std::uint64_t base_seed, std::size_t replication);

/// xi[t][i] for t < horizon, drawn i.i.d. from the noise model.
[[nodiscard]] std::vector<std::vector<double>> draw_process_noise(const NoiseModel & noise,
                                                                  std::size_t horizon,
                                                                  std::size_t population,
                                                                  std::uint64_t seed);

/// Runs one cohort under one policy with an explicit noise matrix.
[[nodiscard]] RunResult simulate_with_noise(const Cohort & cohort, const PolicySpec & spec,
                                            std::size_t capacity, double delta,
                                            const std::vector<std::vector<double>> & xi);

/// Runs one (policy, fraction, replication) cell of the protocol.
[[nodiscard]] RunResult simulate(const Cohort & cohort, const PolicySpec & spec,
                                 const SimulationConfig & config, double fraction,
                                 std::size_t replication);

using CohortGenerator = std::function<Cohort(std::size_t replication)>;

/// Every (spec, fraction, replication) cell, sorted by (policy name, fraction,
/// replication). The generator is called once per replication and its cohort
/// is shared by all cells with that replication index.
[[nodiscard]] std::vector<RunResult> capacity_sweep(const CohortGenerator & generator,
                                                    const std::vector<PolicySpec> & specs,
                                                    const SimulationConfig & config);

class InstanceTooLarge : public std::runtime_error
{
public:
  InstanceTooLarge(double count, double limit);
  [[nodiscard]] double count() const { return count_; }

private:
  double count_;
};

struct BrutePlan
{
  std::size_t best_in_control = 0;
  /// schedule[t] = patients visited in period t+1, ascending.
  std::vector<std::vector<std::size_t>> schedule;
};

struct BruteForceOptions
{
  double max_leaves = 1e7;
  /// Only consider visit subsets of the interest set of the current state.
  bool restrict_to_interest = false;
};

/// Exact maximizer of total post-transition in-control periods with xi = 0,
/// enumerating every per-period visit subset of size <= capacity. Ties return
/// the lexicographically smallest schedule (subsets ordered by bitmask).
/// Throws InstanceTooLarge when the enumeration exceeds `max_leaves`.
[[nodiscard]] BrutePlan brute_force_plan(const Cohort & cohort, std::size_t capacity,
                                         std::size_t horizon, double delta,
                                         const BruteForceOptions & options = {});

struct SummaryRow
{
  PolicyKind policy = PolicyKind::visit_no_one;
  double capacity_fraction = 0.0;
  std::size_t replications = 0;
  double ppc_mean = 0.0;
  double ppc_sd = 0.0;
  double ppc_ci_halfwidth = 0.0;
  std::vector<double> screening_share;   ///< per period, pooled over replications
  std::vector<double> enrollment_share;  ///< per period, mean over replications
  double final_fbg_p25 = 0.0;
  double final_fbg_p50 = 0.0;
  double final_fbg_p75 = 0.0;
  double final_fbg_p90 = 0.0;
};

/// Mean and 95% normal-approximation half-width (0 for fewer than 2 values).
struct MeanCI
{
  double mean = 0.0;
  double sd = 0.0;
  double halfwidth = 0.0;
};
[[nodiscard]] MeanCI mean_ci(const std::vector<double> & values);

/// Linear-interpolation percentile, q in [0,1]. Input need not be sorted.
[[nodiscard]] double percentile(std::vector<double> values, double q);

/// One row per (policy, fraction), in the order of first appearance.
/// Throws std::invalid_argument on empty input.
[[nodiscard]] std::vector<SummaryRow> summarize(const std::vector<RunResult> & results);

}  // namespace chw
