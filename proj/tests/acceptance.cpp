// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "chw/engine.hpp"
#include "chw/estimation.hpp"
#include "chw/io.hpp"
#include "chw/model.hpp"
#include "chw/policy.hpp"
#include "chw/scenarios.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using namespace chw;
using chw::testing::random_group_params;
using chw::testing::reachable_state;
using chw::testing::single;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4)
{
  std::ostringstream out;
  out.precision(digits);
  out << v;
  return out.str();
}

// 1. The single-patient rule attains the brute-force optimum.
Outcome single_patient_optimality()
{
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  std::size_t mismatches = 0;
  std::string first;
  for (int k = 0; k < 200; ++k) {
    const PatientParams params = random_group_params(rng);
    const PatientState state = reachable_state(rng, params);
    const std::size_t horizon = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
    const std::size_t policy = rollout_single(state, params, horizon, kDefaultDelta).v_tilde;
    const std::size_t best =
      brute_force_plan(single(params, state), 1, horizon, kDefaultDelta).best_in_control;
    if (policy != best) {
      if (mismatches++ == 0) {
        first = "instance " + std::to_string(k) + ": policy " + std::to_string(policy) +
                " vs optimum " + std::to_string(best);
      }
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs <= 30.0,
          std::to_string(mismatches) + "/200 mismatches" + (first.empty() ? "" : " (" + first + ")") +
            ", " + fmt(secs, 3) + " s (limit 30 s)"};
}

// 2. Starting enrolled is never worse.
Outcome enrollment_monotonicity()
{
  std::mt19937_64 rng(1002);
  std::size_t violations = 0;
  for (int k = 0; k < 200; ++k) {
    const PatientParams params = random_group_params(rng);
    PatientState enrolled = reachable_state(rng, params);
    enrolled.z_prev = true;
    PatientState fresh = enrolled;
    fresh.z_prev = false;
    const std::size_t horizon = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
    const auto v1 = brute_force_plan(single(params, enrolled), 1, horizon, kDefaultDelta).best_in_control;
    const auto v0 = brute_force_plan(single(params, fresh), 1, horizon, kDefaultDelta).best_in_control;
    if (v1 < v0) ++violations;
  }
  return {violations == 0, std::to_string(violations) + "/200 violations"};
}

// 3. Restricting visits to the interest set loses nothing.
Outcome interest_set_restriction()
{
  const auto start = Clock::now();
  std::mt19937_64 rng(1003);
  std::size_t violations = 0;
  std::string first;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const std::size_t horizon = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    Cohort cohort;
    for (std::size_t i = 0; i < n; ++i) {
      const PatientParams params = random_group_params(rng);
      cohort.params.push_back(params);
      cohort.initial.push_back(reachable_state(rng, params));
    }
    const auto full = brute_force_plan(cohort, 1, horizon, kDefaultDelta).best_in_control;
    const auto restricted =
      brute_force_plan(cohort, 1, horizon, kDefaultDelta, {.restrict_to_interest = true}).best_in_control;
    if (full != restricted) {
      if (violations++ == 0) {
        first = "instance " + std::to_string(k) + ": " + std::to_string(full) + " vs " +
                std::to_string(restricted);
      }
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs <= 60.0,
          std::to_string(violations) + "/100 violations" + (first.empty() ? "" : " (" + first + ")") +
            ", " + fmt(secs, 3) + " s (limit 60 s)"};
}

// 4. Enrollment monotone in z_prev; the visit rule respects the must-visit and
// must-not-visit cases for every sign pattern of B(0), B(1) and B(1) - B(0).
Outcome trichotomy()
{
  const auto start = Clock::now();
  std::size_t violations = 0;
  for (bool y : {false, true}) {
    for (double B : {-1.0, 0.0, 1.0}) {
      if (enroll_decision(false, y, B) && !enroll_decision(true, y, B)) ++violations;
    }
  }
  // Group B-like parameters; mu and alpha set the signs of B(0) and B(1) - B(0).
  const std::array<double, 5> levels{-2.0, -0.5, 0.0, 0.5, 2.0};
  std::size_t cases = 0;
  for (double b0 : levels) {
    for (double gap : levels) {
      for (bool z_prev : {false, true}) {
        PatientParams q;
        q.beta = 1.0;
        q.s_base = 1.0;
        q.theta_base = 1.0;
        q.gamma = 0.5;
        q.rho = 0.5;
        const PatientState state = PatientState::make(5.0, z_prev ? 1.0 : 0.0, 1.0, z_prev);
        // B(0) = mu - theta * w; B(1) - B(0) = alpha - theta * beta.
        const double w = q.gamma * (state.s - q.s_base) + q.s_base;
        q.mu = b0 + state.theta * w;
        q.alpha = gap + state.theta * q.beta;
        if (q.mu < 0.0 || q.alpha < 0.0) continue;
        ++cases;
        const double B0 = benefit(state, q, false);
        const double B1 = benefit(state, q, true);
        const bool action = single_patient_action(state, q);
        const bool must_visit = B1 >= 0.0 && (B0 < 0.0 || !z_prev || B1 - B0 > 0.0);
        const bool must_not = B1 < 0.0 || (z_prev && B0 >= 0.0 && B1 - B0 < 0.0);
        const bool indifferent = !must_visit && !must_not;
        if (int(must_visit) + int(must_not) + int(indifferent) != 1) ++violations;
        if (must_visit && !action) ++violations;
        if (!must_visit && action) ++violations;
      }
    }
  }
  const double secs = seconds_since(start);
  return {violations == 0 && secs < 1.0, std::to_string(violations) + " violations over " +
                                           std::to_string(cases) + " sign cases, " +
                                           fmt(secs * 1e3, 3) + " ms (limit 1 s)"};
}


// 5. Adverse-factor and perception trajectories after a single visit, against
// their closed forms.
Outcome dynamics_fixtures()
{
  PatientParams q;
  q.s_base = 0.5;
  q.beta = 0.5;
  q.gamma = 0.2;
  q.theta_base = 0.5;
  q.lambda = 0.5;
  q.rho = 0.2;
  constexpr std::size_t periods = 12;
  // One visit at the first period, enrolled throughout.
  const auto visit = [](std::size_t t) { return t == 0; };

  // s_0 = s_base, s_t = s_base + gamma^(t-1) beta for t >= 1.
  // theta_0 = theta_base, theta_t = theta_base - rho^(t-1) lambda for t >= 1.
  const auto s_closed = [&](std::size_t t) {
    return t == 0 ? q.s_base : q.s_base + std::pow(q.gamma, double(t - 1)) * q.beta;
  };
  const auto theta_closed = [&](std::size_t t) {
    return t == 0 ? q.theta_base : q.theta_base - std::pow(q.rho, double(t - 1)) * q.lambda;
  };

  double worst = 0.0;
  double s = q.s_base;
  double theta = q.theta_base;
  for (std::size_t t = 0; t < periods; ++t) {
    worst = std::max({worst, std::abs(s - s_closed(t)), std::abs(theta - theta_closed(t))});
    s = step_adverse(s, q, visit(t), true);
    theta = step_perception(theta, q, visit(t), true);
  }

  VisitHistory h;
  h.initially_enrolled = true;
  for (std::size_t t = 0; t < periods; ++t) {
    h.y.push_back(visit(t));
    h.z.push_back(true);
  }
  const auto reconstructed = reconstruct_states(h, q.s_base, q.beta, q.gamma);
  for (std::size_t t = 0; t < periods; ++t) worst = std::max(worst, std::abs(reconstructed[t] - s_closed(t)));

  const std::array<double, 4> s_head{0.5, 1.0, 0.6, 0.52};
  const std::array<double, 4> theta_head{0.5, 0.0, 0.4, 0.48};
  for (std::size_t t = 0; t < 4; ++t) {
    worst = std::max({worst, std::abs(s_closed(t) - s_head[t]), std::abs(theta_closed(t) - theta_head[t])});
  }
  return {worst <= 1e-12, "max deviation " + fmt(worst, 3) + " over " + std::to_string(periods) +
                            " periods (tolerance 1e-12)"};
}

// 6. Grid search recovers the generating cell and (p, mu, alpha).
Outcome estimation_recovery()
{
  const auto start = Clock::now();
  const auto fx = chw::testing::recovery_fixture();
  const PatientParams & truth = fx.truth;
  constexpr double noise = 0.01;

  EstimationConfig cfg;
  cfg.sigma_xi = noise;
  cfg.sigma_eps = noise;
  std::size_t wrong_cell = 0;
  double worst = 0.0;
  std::string detail;
  for (std::uint64_t seed : {501, 502, 503}) {
    const VisitHistory h = chw::testing::synthesize_history(truth, fx.b0, fx.visits, noise, noise, seed);
    const EstimationResult r = estimate_patient(h, cfg);
    const GridCell & c = r.grid_cell;
    if (c.s_base != truth.s_base || c.beta != truth.beta || c.gamma != truth.gamma || c.rho != truth.rho) {
      ++wrong_cell;
    }
    worst = std::max({worst, std::abs(r.params.p / truth.p - 1.0), std::abs(r.params.mu / truth.mu - 1.0),
                      std::abs(r.params.alpha / truth.alpha - 1.0)});
  }
  const double secs = seconds_since(start);
  const double per_patient = secs / 3.0;
  return {wrong_cell == 0 && worst <= 0.05 && per_patient <= 120.0,
          std::to_string(wrong_cell) + "/3 wrong cells, max relative error " + fmt(100.0 * worst, 3) +
            "% (limit 5%), " + fmt(per_patient, 3) + " s per 400-cell search (limit 120 s)"};
}

// 7. k-means finds four tight blobs placed at the cluster centroids.
Outcome clustering_recovery()
{
  const ScenarioSpec spec = builtin_scenario("nanohealth_like");
  std::vector<FeatureVector> centers;
  for (const auto & g : spec.groups) centers.push_back(g.group.centroid);

  std::mt19937_64 rng(1007);
  std::normal_distribution<double> jitter(0.0, 0.01);
  std::vector<FeatureVector> rows;
  for (const auto & c : centers) {
    for (int i = 0; i < 50; ++i) {
      FeatureVector f = c;
      for (double & v : f) v += jitter(rng);
      rows.push_back(f);
    }
  }

  const ClusterResult fit = cluster_params(rows, 4, 7);
  double worst = 0.0;
  for (const auto & c : centers) {
    double nearest_gap = std::numeric_limits<double>::infinity();
    for (const auto & found : fit.centroids) {
      double gap = 0.0;
      for (std::size_t j = 0; j < c.size(); ++j) gap = std::max(gap, std::abs(found[j] - c[j]));
      nearest_gap = std::min(nearest_gap, gap);
    }
    worst = std::max(worst, nearest_gap);
  }
  const auto curve = elbow_curve(rows, {1, 2, 3, 4, 5, 6, 7, 8}, 7);
  const std::size_t elbow = elbow_k(curve);
  return {worst <= 0.1 && elbow == 4, "max centroid error " + fmt(worst, 3) +
                                         " (limit 0.1), elbow at k=" + std::to_string(elbow)};
}

// Simulates one builtin scenario at the desk-scale defaults.
std::vector<SummaryRow> desk_run(const std::string & scenario_name, double fraction,
                                 const std::vector<PolicyKind> & policies)
{
  ScenarioSpec scenario = builtin_scenario(scenario_name);
  scenario.population = 100;
  SimulationConfig sim;
  sim.capacity_fractions = {fraction};
  std::vector<PolicySpec> specs;
  for (PolicyKind kind : policies) specs.push_back({kind, sim.delta});
  const auto results = capacity_sweep(
    [&](std::size_t rep) { return sample_cohort(scenario, cohort_seed(sim.base_seed, rep)); }, specs, sim);
  return summarize(results);
}

const SummaryRow & row_for(const std::vector<SummaryRow> & rows, PolicyKind kind)
{
  for (const auto & r : rows) {
    if (r.policy == kind) return r;
  }
  throw std::runtime_error("no summary row for " + std::string(to_string(kind)));
}

// Mean of a per-period series over periods first..last (1-based, inclusive).
double period_mean(const std::vector<double> & series, std::size_t first, std::size_t last)
{
  double total = 0.0;
  for (std::size_t t = first; t <= last; ++t) total += series.at(t - 1);
  return total / double(last - first + 1);
}

// 8. At 5% capacity on scenario 3 the per-visit policy beats ascending FBG.
Outcome scenario_three_gain()
{
  const auto start = Clock::now();
  const auto rows = desk_run("scenario3", 0.05, {PolicyKind::asc_fbg, PolicyKind::ea_desc_vtg_per_visit});
  const double base = row_for(rows, PolicyKind::asc_fbg).ppc_mean;
  const double ours = row_for(rows, PolicyKind::ea_desc_vtg_per_visit).ppc_mean;
  const double ratio = base > 0.0 ? ours / base : std::numeric_limits<double>::infinity();
  const double secs = seconds_since(start);
  return {ratio >= 1.5 && secs <= 300.0, "PPC " + fmt(ours) + " vs " + fmt(base) + ", ratio " + fmt(ratio, 3) +
                                           " (limit 1.5), " + fmt(secs, 3) + " s (limit 300 s)"};
}

// 9. Screening visits fade after the first periods at 20% capacity.
Outcome screening_share()
{
  std::size_t failures = 0;
  std::string detail;
  for (const std::string name : {"scenario1", "scenario2", "scenario3"}) {
    const auto rows = desk_run(name, 0.20, {PolicyKind::asc_fbg, PolicyKind::ea_desc_vtg_per_visit});
    const double ours = period_mean(row_for(rows, PolicyKind::ea_desc_vtg_per_visit).screening_share, 10, 60);
    const double base = period_mean(row_for(rows, PolicyKind::asc_fbg).screening_share, 10, 60);
    if (!(ours < 0.10 && ours < base)) ++failures;
    detail += (detail.empty() ? "" : "; ") + name + " " + fmt(ours, 3) + " vs " + fmt(base, 3);
  }
  return {failures == 0, detail + " (limit 0.10 and below asc_fbg)"};
}

// 10. Enrollment settles inside a band at 20% capacity.
Outcome enrollment_band()
{
  std::size_t failures = 0;
  std::string detail;
  for (const std::string name : {"scenario1", "scenario2", "scenario3"}) {
    const auto rows = desk_run(name, 0.20, {PolicyKind::ea_desc_vtg_per_visit});
    const double share = period_mean(row_for(rows, PolicyKind::ea_desc_vtg_per_visit).enrollment_share, 20, 60);
    if (!(share >= 0.15 && share <= 0.50)) ++failures;
    detail += (detail.empty() ? "" : "; ") + name + " " + fmt(share, 3);
  }
  return {failures == 0, detail + " (band [0.15, 0.50])"};
}

std::string quote(const fs::path & p) { return "'" + p.string() + "'"; }

int run_cli(const std::string & args, const fs::path & log)
{
  const std::string cmd = std::string("'") + CHWPLAN_BIN + "' " + args + " > " + quote(log) + " 2>&1";
  return std::system(cmd.c_str());
}

bool same_bytes(const fs::path & a, const fs::path & b)
{
  return fs::exists(a) && fs::exists(b) && read_file(a) == read_file(b);
}

// 11. Replaying a manifest reproduces every output byte; a new seed changes results.
Outcome cli_determinism()
{
  const fs::path root = fs::temp_directory_path() / ("chwplan-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path log = root / "log.txt";
  std::vector<std::string> problems;
  const auto require = [&](bool ok, const std::string & what) {
    if (!ok) problems.push_back(what);
  };

  const std::string sim_args =
    "simulate --scenario scenario1 --policies asc_fbg,ea_desc_vtg_per_visit --capacities 10,20 --reps 2 "
    "--population 40 --horizon 20";
  require(run_cli(sim_args + " --seed 5 --out " + quote(root / "a"), log) == 0, "simulate failed");
  require(run_cli("replay --manifest " + quote(root / "a" / "manifest.json") + " --out " + quote(root / "b"), log) == 0,
          "simulate replay failed");
  require(run_cli(sim_args + " --seed 6 --out " + quote(root / "c"), log) == 0, "reseeded simulate failed");
  for (const char * name : {"results.csv", "summary.csv"}) {
    require(same_bytes(root / "a" / name, root / "b" / name), std::string("replayed ") + name + " differs");
  }
  require(fs::exists(root / "c" / "results.csv") &&
            read_file(root / "a" / "results.csv") != read_file(root / "c" / "results.csv"),
          "changing the seed left results.csv unchanged");

  require(run_cli("scenario-gen --scenario scenario2 --population 30 --seed 9 --out " + quote(root / "g" / "cohort.csv"),
                  log) == 0,
          "scenario-gen failed");
  require(run_cli("replay --manifest " + quote(root / "g" / "manifest.json") + " --out " + quote(root / "h"),
                  log) == 0,
          "scenario-gen replay failed");
  require(same_bytes(root / "g" / "cohort.csv", root / "h" / "cohort.csv"), "replayed cohort differs");

  require(run_cli("cluster --params " + quote(root / "g" / "cohort.csv") + " --k 2 --elbow 1:4 --seed 3 --out " +
                    quote(root / "k"),
                  log) == 0,
          "cluster failed");
  require(run_cli("replay --manifest " + quote(root / "k" / "manifest.json") + " --out " + quote(root / "l"), log) == 0,
          "cluster replay failed");
  for (const char * name : {"centroids.csv", "assignments.csv", "elbow.csv"}) {
    require(same_bytes(root / "k" / name, root / "l" / name), std::string("replayed ") + name + " differs");
  }

  std::string detail = problems.empty() ? "simulate, scenario-gen and cluster replays byte-identical; reseed "
                                          "changes results"
                                        : problems.front();
  if (problems.size() > 1) detail += " (+" + std::to_string(problems.size() - 1) + " more)";
  if (problems.empty()) fs::remove_all(root);
  return {problems.empty(), detail};
}

}  // namespace

// Usage: acceptance [--known-failures N,M,...]
// Without the flag the exit status is 1 when any criterion fails. With it, the
// status is 0 only when the failing criteria are exactly the listed ones, so a
// regression or an unexpected pass still breaks the build.
int main(int argc, char ** argv)
{
  std::set<std::size_t> known;
  for (int a = 1; a + 1 < argc; ++a) {
    if (std::string(argv[a]) != "--known-failures") continue;
    std::stringstream list(argv[a + 1]);
    std::string item;
    while (std::getline(list, item, ',')) {
      if (!item.empty()) known.insert(std::stoul(item));
    }
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
    {"single-patient rule matches brute-force optimum", single_patient_optimality},
    {"starting enrolled never lowers the optimum", enrollment_monotonicity},
    {"interest-set restriction keeps the optimum", interest_set_restriction},
    {"enrollment monotonicity and visit-rule trichotomy", trichotomy},
    {"adverse-factor and perception trajectories", dynamics_fixtures},
    {"estimation recovers the generating cell", estimation_recovery},
    {"k-means recovers four blobs and the elbow", clustering_recovery},
    {"scenario 3 per-visit policy gain at 5% capacity", scenario_three_gain},
    {"screening share fades at 20% capacity", screening_share},
    {"enrollment share band at 20% capacity", enrollment_band},
    {"CLI replay determinism", cli_determinism},
  };
  std::set<std::size_t> failed;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome out;
    try {
      out = criteria[k].second();
    } catch (const std::exception & e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    if (!out.pass) failed.insert(k + 1);
    std::cout << "criterion " << k + 1 << ": " << (out.pass ? "PASS" : "FAIL") << "  "
              << criteria[k].first << "  [" << out.detail << "]" << std::endl;
  }
  std::cout << (failed.empty() ? "all criteria passed" : std::to_string(failed.size()) + " criteria failed")
            << std::endl;
  if (known.empty()) return failed.empty() ? 0 : 1;
  if (failed == known) {
    std::cout << "failures match the documented known failures" << std::endl;
    return 0;
  }
  std::cout << "failures differ from the documented known failures" << std::endl;
  return 1;
}
