#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace chw {

/// Behavioral constants of one patient. All quantities are per period; FBG
/// effects are in log mg/dL.
struct PatientParams
{
  double p = 0.0;           ///< log-FBG drift per period
  double mu = 0.0;          ///< enrollment effect on log-FBG
  double alpha = 0.0;       ///< management-visit effect on log-FBG
  double beta = 0.0;        ///< adverse-factor increase per visit
  double lambda = 0.0;      ///< perception decrease per visit
  double gamma = 0.2;       ///< adverse-factor discount, in (0,1)
  double rho = 0.2;         ///< perception discount, in (0,1)
  double s_base = 0.0;      ///< baseline adversity
  double theta_base = 0.0;  ///< steady-state perceived importance

  /// Empty when the parameters are admissible, otherwise a description of the
  /// first violated constraint. The effectiveness condition p < mu + alpha is
  /// not checked here (see `is_effective`).
  [[nodiscard]] std::string validate() const;

  /// p < mu + alpha: enrolling and visiting can reverse the drift.
  [[nodiscard]] bool is_effective() const { return p < mu + alpha; }

  friend bool operator==(const PatientParams &, const PatientParams &) = default;
};

/// The seven per-patient behavioral features in the order
/// (p, mu, alpha, theta_base, lambda, s_base, beta), as used for group
/// centroids and clustering.
using FeatureVector = std::array<double, 7>;
inline constexpr std::array<const char *, 7> kFeatureNames = {
  "p", "mu", "alpha", "theta_base", "lambda", "s_base", "beta"};

[[nodiscard]] FeatureVector to_features(const PatientParams & params);
[[nodiscard]] PatientParams from_features(const FeatureVector & f, double gamma, double rho);

/// Evolving state x_t = (b, s, theta, z_{t-1}).
struct PatientState
{
  double b = 0.0;
  double s = 0.0;
  double theta = 0.0;
  bool z_prev = false;

  /// Builds a state with b clamped at 0.
  static PatientState make(double b, double s, double theta, bool z_prev);

  /// Unenrolled state at the start of a horizon: s = 0, theta = theta_base.
  static PatientState initial(const PatientParams & params, double b0);

  friend bool operator==(const PatientState &, const PatientState &) = default;
};

enum class NoiseFamily { Gaussian };

struct NoiseModel
{
  double sigma_xi = 0.05;
  double sigma_eps = 0.0;
  NoiseFamily family = NoiseFamily::Gaussian;
};

/// A population of patients with their states at the start of a horizon.
/// The three vectors are aligned by patient index; `labels` may be empty.
struct Cohort
{
  std::vector<PatientParams> params;
  std::vector<PatientState> initial;
  std::vector<std::string> labels;

  [[nodiscard]] std::size_t size() const { return params.size(); }
};

/// Next log-FBG. Not clamped.
[[nodiscard]] double step_fbg(const PatientState & state, const PatientParams & params, bool y,
                              bool z, double xi);

/// Next adverse factors; zero whenever z = 0.
[[nodiscard]] double step_adverse(double s, const PatientParams & params, bool y, bool z);

/// Next perceived importance, floored at 0.
[[nodiscard]] double step_perception(double theta, const PatientParams & params, bool y, bool z);

/// Net benefit of enrolling this period given visit decision y:
///   B = mu - theta * (gamma * (s - s_base) + s_base) + (alpha - theta * beta) * y
[[nodiscard]] double benefit(const PatientState & state, const PatientParams & params, bool y);

/// z = (z_prev OR y) AND B >= 0. Ties enroll.
[[nodiscard]] constexpr bool enroll_decision(bool z_prev, bool y, double B)
{
  return (z_prev || y) && B >= 0.0;
}

struct StepOutcome
{
  PatientState next;
  bool enrolled = false;
};

/// One period: the visit decision y is fixed first, the patient then decides
/// z from the current state, and all states advance with (y, z, xi).
[[nodiscard]] StepOutcome step_patient(const PatientState & state, const PatientParams & params,
                                       bool y, double xi);

}  // namespace chw
