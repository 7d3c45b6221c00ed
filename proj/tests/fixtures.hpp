#pragma once

// Random instances and synthetic histories shared by unit and acceptance tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "chw/engine.hpp"
#include "chw/estimation.hpp"
#include "chw/model.hpp"
#include "chw/scenarios.hpp"

namespace chw::testing {

/// Parameters drawn uniformly from a builtin group's box: each feature within
/// two spreads of the centroid, floored at 0.
inline PatientParams random_group_params(std::mt19937_64 & rng)
{
  static const auto groups = builtin_groups();
  std::uniform_int_distribution<std::size_t> pick(0, groups.size() - 1);
  const GroupSpec & g = groups[pick(rng)];
  FeatureVector f{};
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double lo = std::max(0.0, g.centroid[k] - 2.0 * g.sd[k]);
    const double hi = g.centroid[k] + 2.0 * g.sd[k];
    f[k] = std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return from_features(f, 0.2, 0.2);
}

/// Log of an initial FBG drawn like the scenario generator (truncated at 1 mg/dL).
inline double random_initial_fbg(std::mt19937_64 & rng)
{
  std::normal_distribution<double> fbg(175.1, 71.9);
  double v = 0.0;
  do {
    v = fbg(rng);
  } while (v < 1.0);
  return std::log(v);
}

/// A reachable state: the unenrolled initial state advanced by up to
/// `max_warmup` noise-free periods of random visits.
inline PatientState reachable_state(std::mt19937_64 & rng, const PatientParams & params,
                                    int max_warmup = 6)
{
  PatientState state = PatientState::initial(params, random_initial_fbg(rng));
  const int warmup = std::uniform_int_distribution<int>(0, max_warmup)(rng);
  for (int t = 0; t < warmup; ++t) {
    state = step_patient(state, params, std::bernoulli_distribution(0.5)(rng), 0.0).next;
  }
  return state;
}

inline Cohort single(const PatientParams & params, const PatientState & state)
{
  return Cohort{{params}, {state}, {}};
}

/// Simulates one patient under a fixed visit schedule and records its history.
/// Measurement noise is added to every period in `observed`.
inline VisitHistory synthesize_history(const PatientParams & params, double b0,
                                       const std::vector<bool> & visits, double sigma_xi,
                                       double sigma_eps, std::uint64_t seed,
                                       const std::vector<bool> & observed = {})
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> xi_dist(0.0, 1.0);
  VisitHistory h;
  h.patient_id = "synthetic";
  PatientState state = PatientState::initial(params, b0);
  for (std::size_t t = 0; t < visits.size(); ++t) {
    const double eps = sigma_eps * xi_dist(rng);
    if (observed.empty() || observed[t]) h.b_obs[t] = state.b + eps;
    const double xi = sigma_xi * xi_dist(rng);
    const StepOutcome out = step_patient(state, params, visits[t], xi);
    h.y.push_back(visits[t]);
    h.z.push_back(out.enrolled);
    state = out.next;
  }
  return h;
}

/// Recovery fixture: a patient whose grid cell (s_base = 0, beta = 1,
/// gamma = rho = 0.2) is the first feasible one, under a repeating schedule of
/// single visits (patient stays enrolled), double visits (patient drops out
/// after) and unenrolled stretches. p balances the enrolled drift so FBG stays
/// well above zero.
struct RecoveryFixture
{
  PatientParams truth;
  double b0 = 8.0;
  std::vector<bool> visits;
};

inline RecoveryFixture recovery_fixture(std::size_t horizon = 60)
{
  RecoveryFixture fx;
  fx.truth.mu = 0.32;
  fx.truth.alpha = 2.5;
  fx.truth.theta_base = 1.5;
  fx.truth.lambda = 0.05;
  fx.truth.s_base = 0.0;
  fx.truth.beta = 1.0;
  fx.truth.gamma = 0.2;
  fx.truth.rho = 0.2;
  const std::array<bool, 10> cycle{true, false, false, true, true, false, false, false, true, false};
  fx.visits.resize(horizon);
  for (std::size_t t = 0; t < horizon; ++t) fx.visits[t] = cycle[t % cycle.size()];

  const VisitHistory noiseless = synthesize_history(fx.truth, fx.b0, fx.visits, 0.0, 0.0, 0);
  double drift = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    if (noiseless.z[t]) drift += fx.truth.mu + (fx.visits[t] ? fx.truth.alpha : 0.0);
  }
  fx.truth.p = drift / double(horizon);
  return fx;
}

}  // namespace chw::testing
