#include "chw/model.hpp"

#include <algorithm>
#include <cmath>

namespace chw {

std::string PatientParams::validate() const
{
  const auto nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!nonneg(p)) return "p must be finite and >= 0";
  if (!nonneg(mu)) return "mu must be finite and >= 0";
  if (!nonneg(alpha)) return "alpha must be finite and >= 0";
  if (!nonneg(beta)) return "beta must be finite and >= 0";
  if (!nonneg(lambda)) return "lambda must be finite and >= 0";
  if (!nonneg(s_base)) return "s_base must be finite and >= 0";
  if (!nonneg(theta_base)) return "theta_base must be finite and >= 0";
  if (!(gamma > 0.0 && gamma < 1.0)) return "gamma must lie in (0,1)";
  if (!(rho > 0.0 && rho < 1.0)) return "rho must lie in (0,1)";
  return {};
}

FeatureVector to_features(const PatientParams & params)
{
  return {params.p,      params.mu,     params.alpha, params.theta_base,
          params.lambda, params.s_base, params.beta};
}

PatientParams from_features(const FeatureVector & f, double gamma, double rho)
{
  PatientParams out;
  out.p = f[0];
  out.mu = f[1];
  out.alpha = f[2];
  out.theta_base = f[3];
  out.lambda = f[4];
  out.s_base = f[5];
  out.beta = f[6];
  out.gamma = gamma;
  out.rho = rho;
  return out;
}

PatientState PatientState::make(double b, double s, double theta, bool z_prev)
{
  return PatientState{std::max(b, 0.0), s, theta, z_prev};
}

PatientState PatientState::initial(const PatientParams & params, double b0)
{
  return make(b0, 0.0, params.theta_base, false);
}

double step_fbg(const PatientState & state, const PatientParams & params, bool y, bool z,
                double xi)
{
  const double zf = z ? 1.0 : 0.0;
  const double yz = (y && z) ? 1.0 : 0.0;
  return state.b + params.p - params.mu * zf - params.alpha * yz + xi;
}

double step_adverse(double s, const PatientParams & params, bool y, bool z)
{
  if (!z) return 0.0;
  const double visit = y ? params.beta : 0.0;
  return params.gamma * (s - params.s_base) + params.s_base + visit;
}

double step_perception(double theta, const PatientParams & params, bool y, bool z)
{
  const double drop = (y && z) ? params.lambda : 0.0;
  return std::max(0.0, params.rho * (theta - params.theta_base) + params.theta_base - drop);
}

double benefit(const PatientState & state, const PatientParams & params, bool y)
{
  const double fixed =
    params.mu - state.theta * (params.gamma * (state.s - params.s_base) + params.s_base);
  const double visit = params.alpha - state.theta * params.beta;
  return y ? fixed + visit : fixed;
}

StepOutcome step_patient(const PatientState & state, const PatientParams & params, bool y,
                         double xi)
{
  const bool z = enroll_decision(state.z_prev, y, benefit(state, params, y));
  const PatientState next = PatientState::make(step_fbg(state, params, y, z, xi),
                                               step_adverse(state.s, params, y, z),
                                               step_perception(state.theta, params, y, z), z);
  return {next, z};
}

}  // namespace chw
