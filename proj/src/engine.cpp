#include "chw/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <tuple>

#include "chw/parallel.hpp"
#include "chw/seed.hpp"

namespace chw {

std::vector<double> default_capacity_fractions()
{
  std::vector<double> out;
  for (int pct = 5; pct <= 100; pct += 5) out.push_back(pct / 100.0);
  return out;
}

void SimulationConfig::validate() const
{
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (capacity_fractions.empty()) throw std::invalid_argument("no capacity fractions given");
  for (std::size_t k = 0; k < capacity_fractions.size(); ++k) {
    const double f = capacity_fractions[k];
    if (!(f > 0.0 && f <= 1.0)) {
      throw std::invalid_argument("capacity fraction " + std::to_string(f) + " outside (0,1]");
    }
    if (k > 0 && f < capacity_fractions[k - 1]) {
      throw std::invalid_argument("capacity fractions must be sorted");
    }
  }
  if (!(noise.sigma_xi >= 0.0) || !(noise.sigma_eps >= 0.0)) {
    throw std::invalid_argument("noise standard deviations must be >= 0");
  }
}

std::int64_t fraction_basis_points(double fraction)
{
  return std::llround(fraction * 10000.0);
}

std::size_t capacity_from_fraction(double fraction, std::size_t population)
{
  const auto bp = static_cast<std::uint64_t>(std::max<std::int64_t>(0, fraction_basis_points(fraction)));
  return static_cast<std::size_t>((bp * population + 5000) / 10000);
}

std::uint64_t noise_seed(std::uint64_t base_seed, double fraction, std::size_t replication)
{
  return derive_seed(base_seed, {kNoiseStream,
                                 static_cast<std::uint64_t>(fraction_basis_points(fraction)),
                                 static_cast<std::uint64_t>(replication)});
}

std::uint64_t cohort_seed(std::uint64_t base_seed, std::size_t replication)
{
  return derive_seed(base_seed, {kCohortStream, static_cast<std::uint64_t>(replication)});
}

std::vector<std::vector<double>> draw_process_noise(const NoiseModel & noise, std::size_t horizon,
                                                    std::size_t population, std::uint64_t seed)
{
  std::vector<std::vector<double>> xi(horizon, std::vector<double>(population, 0.0));
  if (noise.sigma_xi == 0.0) return xi;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, noise.sigma_xi);
  for (auto & row : xi) {
    for (double & v : row) v = dist(rng);
  }
  return xi;
}

RunResult simulate_with_noise(const Cohort & cohort, const PolicySpec & spec,
                              std::size_t capacity, double delta,
                              const std::vector<std::vector<double>> & xi)
{
  const std::size_t n = cohort.size();
  if (n == 0) throw std::invalid_argument("cohort is empty");
  if (cohort.initial.size() != n) throw std::invalid_argument("cohort states misaligned");
  const std::size_t horizon = xi.size();

  RunResult r;
  r.policy = spec.kind;
  r.capacity = capacity;
  r.in_control.assign(horizon, 0);
  r.enrolled.assign(horizon, 0);
  r.visits.assign(horizon, 0);
  r.screening_visits.assign(horizon, 0);

  std::vector<PatientState> states = cohort.initial;
  std::vector<char> visit(n);
  std::size_t total_in_control = 0;

  for (std::size_t t = 0; t < horizon; ++t) {
    if (xi[t].size() != n) throw std::invalid_argument("noise matrix misaligned");
    const auto chosen = select_visits(states, cohort.params, capacity, spec, horizon - t);
    std::fill(visit.begin(), visit.end(), 0);
    for (std::size_t i : chosen) {
      visit[i] = 1;
      ++r.visits[t];
      if (!states[i].z_prev) ++r.screening_visits[t];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const StepOutcome out = step_patient(states[i], cohort.params[i], visit[i] != 0, xi[t][i]);
      states[i] = out.next;
      if (out.enrolled) ++r.enrolled[t];
      if (states[i].b <= delta) ++r.in_control[t];
    }
    total_in_control += r.in_control[t];
  }

  r.final_fbg.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.final_fbg[i] = states[i].b;
  r.ppc_fraction = static_cast<double>(total_in_control) / static_cast<double>(n * horizon);
  return r;
}

RunResult simulate(const Cohort & cohort, const PolicySpec & spec, const SimulationConfig & config,
                   double fraction, std::size_t replication)
{
  config.validate();
  const std::uint64_t seed = noise_seed(config.base_seed, fraction, replication);
  const auto xi = draw_process_noise(config.noise, config.horizon, cohort.size(), seed);
  PolicySpec effective = spec;
  effective.delta = config.delta;
  RunResult r = simulate_with_noise(cohort, effective, capacity_from_fraction(fraction, cohort.size()),
                                    config.delta, xi);
  r.capacity_fraction = fraction;
  r.replication = replication;
  r.seed = seed;
  return r;
}

std::vector<RunResult> capacity_sweep(const CohortGenerator & generator,
                                      const std::vector<PolicySpec> & specs,
                                      const SimulationConfig & config)
{
  config.validate();
  std::vector<Cohort> cohorts(config.replications);
  parallel_for(config.replications, [&](std::size_t r) { cohorts[r] = generator(r); });

  const std::size_t n_frac = config.capacity_fractions.size();
  const std::size_t cells = specs.size() * n_frac * config.replications;
  std::vector<RunResult> results(cells);
  parallel_for(cells, [&](std::size_t c) {
    const std::size_t rep = c % config.replications;
    const std::size_t f = (c / config.replications) % n_frac;
    const std::size_t s = c / (config.replications * n_frac);
    results[c] = simulate(cohorts[rep], specs[s], config, config.capacity_fractions[f], rep);
  });

  std::stable_sort(results.begin(), results.end(), [](const RunResult & a, const RunResult & b) {
    return std::tuple(to_string(a.policy), fraction_basis_points(a.capacity_fraction), a.replication) <
           std::tuple(to_string(b.policy), fraction_basis_points(b.capacity_fraction), b.replication);
  });
  return results;
}

InstanceTooLarge::InstanceTooLarge(double count, double limit)
  : std::runtime_error("brute-force enumeration needs " + std::to_string(count) +
                       " leaves, limit is " + std::to_string(limit)),
    count_(count)
{}

namespace {

struct BruteSearch
{
  const Cohort & cohort;
  std::size_t horizon;
  double delta;
  bool restrict_to_interest;
  std::vector<std::uint64_t> masks;  // all subsets of size <= C, ascending

  // Returns the best value over periods t..horizon-1 and writes the suffix schedule.
  std::size_t search(const std::vector<PatientState> & states, std::size_t t,
                     std::vector<std::uint64_t> & best_suffix) const
  {
    best_suffix.clear();
    if (t == horizon) return 0;

    std::uint64_t allowed = ~std::uint64_t{0};
    if (restrict_to_interest) {
      allowed = 0;
      for (std::size_t i : interest_set(states, cohort.params)) allowed |= std::uint64_t{1} << i;
    }

    std::size_t best = 0;
    bool have_best = false;
    std::vector<std::uint64_t> suffix;
    std::vector<PatientState> next(states.size());
    for (std::uint64_t mask : masks) {
      if ((mask & ~allowed) != 0) continue;
      std::size_t gained = 0;
      for (std::size_t i = 0; i < states.size(); ++i) {
        next[i] = step_patient(states[i], cohort.params[i], ((mask >> i) & 1U) != 0, 0.0).next;
        gained += next[i].b <= delta ? 1 : 0;
      }
      const std::size_t value = gained + search(next, t + 1, suffix);
      if (!have_best || value > best) {
        have_best = true;
        best = value;
        best_suffix.assign(1, mask);
        best_suffix.insert(best_suffix.end(), suffix.begin(), suffix.end());
      }
    }
    return best;
  }
};

}  // namespace

BrutePlan brute_force_plan(const Cohort & cohort, std::size_t capacity, std::size_t horizon,
                           double delta, const BruteForceOptions & options)
{
  const std::size_t n = cohort.size();
  if (n == 0) throw std::invalid_argument("cohort is empty");
  if (n > 20) throw InstanceTooLarge(std::pow(2.0, static_cast<double>(n)), options.max_leaves);

  std::vector<std::uint64_t> masks;
  for (std::uint64_t m = 0; m < (std::uint64_t{1} << n); ++m) {
    if (static_cast<std::size_t>(std::popcount(m)) <= capacity) masks.push_back(m);
  }
  const double leaves = std::pow(static_cast<double>(masks.size()), static_cast<double>(horizon));
  if (leaves > options.max_leaves) throw InstanceTooLarge(leaves, options.max_leaves);

  BruteSearch search{cohort, horizon, delta, options.restrict_to_interest, std::move(masks)};
  std::vector<std::uint64_t> best_masks;
  BrutePlan plan;
  plan.best_in_control = search.search(cohort.initial, 0, best_masks);
  for (std::uint64_t mask : best_masks) {
    std::vector<std::size_t> period;
    for (std::size_t i = 0; i < n; ++i) {
      if ((mask >> i) & 1U) period.push_back(i);
    }
    plan.schedule.push_back(std::move(period));
  }
  return plan;
}

MeanCI mean_ci(const std::vector<double> & values)
{
  MeanCI out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.sd = std::sqrt(ss / (n - 1.0));
  out.halfwidth = 1.959963984540054 * out.sd / std::sqrt(n);
  return out;
}

double percentile(std::vector<double> values, double q)
{
  if (values.empty()) throw std::invalid_argument("percentile of empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return values[lo] + w * (values[hi] - values[lo]);
}

std::vector<SummaryRow> summarize(const std::vector<RunResult> & results)
{
  if (results.empty()) throw std::invalid_argument("no results to summarize");

  using Key = std::pair<PolicyKind, std::int64_t>;
  std::vector<Key> order;
  std::map<Key, std::vector<const RunResult *>> groups;
  for (const RunResult & r : results) {
    const Key key{r.policy, fraction_basis_points(r.capacity_fraction)};
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }

  std::vector<SummaryRow> rows;
  for (const Key & key : order) {
    const auto & group = groups.at(key);
    SummaryRow row;
    row.policy = key.first;
    row.capacity_fraction = group.front()->capacity_fraction;
    row.replications = group.size();

    std::vector<double> ppc;
    std::vector<double> pooled_fbg;
    const std::size_t horizon = group.front()->in_control.size();
    std::vector<double> screening(horizon, 0.0), visits(horizon, 0.0), enroll(horizon, 0.0);
    for (const RunResult * r : group) {
      ppc.push_back(r->ppc_fraction);
      pooled_fbg.insert(pooled_fbg.end(), r->final_fbg.begin(), r->final_fbg.end());
      const double n = static_cast<double>(r->final_fbg.size());
      for (std::size_t t = 0; t < horizon && t < r->visits.size(); ++t) {
        screening[t] += static_cast<double>(r->screening_visits[t]);
        visits[t] += static_cast<double>(r->visits[t]);
        enroll[t] += static_cast<double>(r->enrolled[t]) / n;
      }
    }
    const MeanCI ci = mean_ci(ppc);
    row.ppc_mean = ci.mean;
    row.ppc_sd = ci.sd;
    row.ppc_ci_halfwidth = ci.halfwidth;
    row.screening_share.resize(horizon);
    row.enrollment_share.resize(horizon);
    for (std::size_t t = 0; t < horizon; ++t) {
      row.screening_share[t] = visits[t] > 0.0 ? screening[t] / visits[t] : 0.0;
      row.enrollment_share[t] = enroll[t] / static_cast<double>(group.size());
    }
    row.final_fbg_p25 = percentile(pooled_fbg, 0.25);
    row.final_fbg_p50 = percentile(pooled_fbg, 0.50);
    row.final_fbg_p75 = percentile(pooled_fbg, 0.75);
    row.final_fbg_p90 = percentile(pooled_fbg, 0.90);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace chw
