#include "chw/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "chw/qp.hpp"

namespace chw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Column layout of the inner problem's decision vector:
// [b_0, xi_0 .. xi_{T-2}, p, mu, alpha, theta_base, lambda].
struct Layout
{
  std::size_t periods;
  [[nodiscard]] Eigen::Index b0() const { return 0; }
  [[nodiscard]] Eigen::Index xi(std::size_t t) const { return static_cast<Eigen::Index>(1 + t); }
  [[nodiscard]] Eigen::Index p() const { return static_cast<Eigen::Index>(periods); }
  [[nodiscard]] Eigen::Index mu() const { return p() + 1; }
  [[nodiscard]] Eigen::Index alpha() const { return p() + 2; }
  [[nodiscard]] Eigen::Index theta_base() const { return p() + 3; }
  [[nodiscard]] Eigen::Index lambda() const { return p() + 4; }
  [[nodiscard]] Eigen::Index size() const { return p() + 5; }
};

// theta_t = theta_base + c_t * lambda with c_0 = 0.
std::vector<double> perception_coefficients(const VisitHistory & h, double rho)
{
  std::vector<double> c(h.length(), 0.0);
  for (std::size_t t = 0; t + 1 < h.length(); ++t) {
    c[t + 1] = rho * c[t] - ((h.y[t] && h.z[t]) ? 1.0 : 0.0);
  }
  return c;
}

// Rows G with b_t = G.row(t) * x.
Eigen::MatrixXd fbg_rows(const VisitHistory & h, const Layout & lay)
{
  const auto T = static_cast<Eigen::Index>(h.length());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(T, lay.size());
  G(0, lay.b0()) = 1.0;
  for (std::size_t t = 0; t + 1 < h.length(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    G.row(r + 1) = G.row(r);
    G(r + 1, lay.p()) += 1.0;
    if (h.z[t]) G(r + 1, lay.mu()) -= 1.0;
    if (h.z[t] && h.y[t]) G(r + 1, lay.alpha()) -= 1.0;
    G(r + 1, lay.xi(t)) += 1.0;
  }
  return G;
}

bool previously_enrolled(const VisitHistory & h, std::size_t t)
{
  return t > 0 ? h.z[t - 1] : h.initially_enrolled;
}

bool refusal_eligible(const VisitHistory & h, std::size_t t)
{
  const bool z_prev = previously_enrolled(h, t);
  return !h.z[t] && (z_prev || h.y[t]);
}

double big_m_for(const GridCell & cell, const std::vector<double> & s, const EstimationConfig & cfg)
{
  if (cfg.big_m > 0.0) return cfg.big_m;
  const double s_max = s.empty() ? 0.0 : *std::max_element(s.begin(), s.end());
  const double u = cfg.param_upper;
  return 2.0 * (u + u + u * (std::max(s_max, cell.s_base) + cell.beta));
}

std::string describe(const GridCell & c)
{
  std::ostringstream out;
  out << "(s_base=" << c.s_base << ", beta=" << c.beta << ", gamma=" << c.gamma
      << ", rho=" << c.rho << ")";
  return out.str();
}

}  // namespace

std::string VisitHistory::validate() const
{
  std::ostringstream msg;
  if (y.empty()) return "patient '" + patient_id + "' has no periods";
  if (y.size() != z.size()) return "patient '" + patient_id + "': visit and enrollment lengths differ";
  for (std::size_t t = 0; t < z.size(); ++t) {
    const bool z_prev = t > 0 ? z[t - 1] : initially_enrolled;
    if (z[t] && !(z_prev || y[t])) {
      msg << "patient '" << patient_id << "', period " << t
          << ": enrolled without a visit or prior enrollment";
      return msg.str();
    }
  }
  for (const auto & [t, b] : b_obs) {
    if (t >= y.size()) {
      msg << "patient '" << patient_id << "': observation at period " << t
          << " is outside the history";
      return msg.str();
    }
    if (!std::isfinite(b)) {
      msg << "patient '" << patient_id << "', period " << t << ": non-finite observation";
      return msg.str();
    }
  }
  return {};
}

void EstimationConfig::validate() const
{
  if (grid_s0.empty() || grid_beta.empty() || grid_gamma.empty() || grid_rho.empty()) {
    throw std::invalid_argument("estimation grids must be nonempty");
  }
  for (double v : grid_s0) {
    if (!(v >= 0.0)) throw std::invalid_argument("s_base grid values must be >= 0");
  }
  for (double v : grid_beta) {
    if (!(v >= 0.0)) throw std::invalid_argument("beta grid values must be >= 0");
  }
  for (double v : grid_gamma) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("gamma grid values must lie in (0,1)");
  }
  for (double v : grid_rho) {
    if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("rho grid values must lie in (0,1)");
  }
  if (!(sigma_xi > 0.0) || !(sigma_eps > 0.0)) {
    throw std::invalid_argument("noise standard deviations must be > 0");
  }
  if (!(param_upper > 0.0)) throw std::invalid_argument("parameter upper bound must be > 0");
  if (!(strict_gap >= 0.0)) throw std::invalid_argument("strict gap must be >= 0");
  if (!(qp_tolerance > 0.0)) throw std::invalid_argument("QP tolerance must be > 0");
  if (qp_max_iterations == 0) throw std::invalid_argument("QP iteration limit must be > 0");
  if (!(nll_tie_tolerance >= 0.0)) throw std::invalid_argument("tie tolerance must be >= 0");
}

std::vector<double> reconstruct_states(const VisitHistory & history, double s_base, double beta,
                                       double gamma)
{
  const std::size_t T = history.length();
  std::vector<double> s(T, 0.0);
  if (T == 0) return s;
  s[0] = history.initially_enrolled ? s_base : 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    if (!history.z[t]) continue;
    s[t + 1] = gamma * (s[t] - s_base) + s_base + (history.y[t] ? beta : 0.0);
  }
  return s;
}

InnerSolution solve_inner(const VisitHistory & h, const GridCell & cell,
                          const EstimationConfig & cfg)
{
  const std::size_t T = h.length();
  const Layout lay{T};
  const Eigen::Index n = lay.size();

  const auto s = reconstruct_states(h, cell.s_base, cell.beta, cell.gamma);
  const auto c = perception_coefficients(h, cell.rho);
  const Eigen::MatrixXd G = fbg_rows(h, lay);

  // Objective: sum_K (bbar_t - b_t)^2 / (2 se^2) + sum_t xi_t^2 / (2 sx^2).
  const double w_obs = 1.0 / (cfg.sigma_eps * cfg.sigma_eps);
  const double w_xi = 1.0 / (cfg.sigma_xi * cfg.sigma_xi);
  qp::Problem prob;
  prob.P = Eigen::MatrixXd::Zero(n, n);
  prob.q = Eigen::VectorXd::Zero(n);
  double constant = 0.0;
  for (const auto & [t, bbar] : h.b_obs) {
    const auto g = G.row(static_cast<Eigen::Index>(t));
    prob.P.noalias() += w_obs * g.transpose() * g;
    prob.q.noalias() -= w_obs * bbar * g.transpose();
    constant += 0.5 * w_obs * bbar * bbar;
  }
  for (std::size_t t = 0; t + 1 < T; ++t) prob.P(lay.xi(t), lay.xi(t)) += w_xi;

  const double M = big_m_for(cell, s, cfg);
  const auto rows = static_cast<Eigen::Index>(3 * T + 5);
  prob.A = Eigen::MatrixXd::Zero(rows, n);
  prob.l = Eigen::VectorXd::Zero(rows);
  prob.u = Eigen::VectorXd::Constant(rows, qp::kInf);
  Eigen::Index r = 0;
  for (std::size_t t = 0; t < T; ++t, ++r) prob.A.row(r) = G.row(static_cast<Eigen::Index>(t));
  for (std::size_t t = 0; t < T; ++t, ++r) {
    prob.A(r, lay.theta_base()) = 1.0;
    prob.A(r, lay.lambda()) = c[t];
  }
  for (const Eigen::Index col : {lay.p(), lay.mu(), lay.alpha(), lay.theta_base(), lay.lambda()}) {
    prob.A(r, col) = 1.0;
    prob.u(r) = cfg.param_upper;
    ++r;
  }
  for (std::size_t t = 0; t < T; ++t, ++r) {
    // B_t = mu + alpha y_t - theta_t (gamma (s_t - s_base) + s_base + beta y_t)
    const double k = cell.gamma * (s[t] - cell.s_base) + cell.s_base + (h.y[t] ? cell.beta : 0.0);
    prob.A(r, lay.mu()) = 1.0;
    prob.A(r, lay.alpha()) = h.y[t] ? 1.0 : 0.0;
    prob.A(r, lay.theta_base()) = -k;
    prob.A(r, lay.lambda()) = -k * c[t];
    if (h.z[t]) {
      prob.l(r) = 0.0;
      prob.u(r) = M;
    } else if (refusal_eligible(h, t)) {
      prob.l(r) = -M;
      prob.u(r) = -cfg.strict_gap;
    } else {
      prob.l(r) = -M;
      prob.u(r) = M;
    }
  }

  qp::Settings settings;
  settings.eps_abs = cfg.qp_tolerance;
  settings.eps_rel = cfg.qp_tolerance;
  settings.max_iter = cfg.qp_max_iterations;
  const qp::Result res = qp::solve(prob, settings);

  InnerSolution out;
  out.iterations = res.iterations;
  if (res.status == qp::Status::primal_infeasible) {
    out.nll = kInf;
    return out;
  }
  if (res.status != qp::Status::solved) {
    throw ConvergenceError("inner problem for cell " + describe(cell) + " of patient '" +
                             h.patient_id + "' ended with status " +
                             std::string(qp::to_string(res.status)) + " after " +
                             std::to_string(res.iterations) + " iterations",
                           res.iterations);
  }

  const Eigen::VectorXd & x = res.x;
  out.feasible = true;
  out.nll = std::max(0.0, 0.5 * x.dot(prob.P * x) + prob.q.dot(x) + constant);
  out.p = x(lay.p());
  out.mu = x(lay.mu());
  out.alpha = x(lay.alpha());
  out.theta_base = x(lay.theta_base());
  out.lambda = x(lay.lambda());
  const Eigen::VectorXd b = G * x;
  out.latent.b.assign(b.data(), b.data() + b.size());
  out.latent.s = s;
  out.latent.theta.resize(T);
  for (std::size_t t = 0; t < T; ++t) out.latent.theta[t] = out.theta_base + c[t] * out.lambda;
  for (std::size_t t = 0; t + 1 < T; ++t) out.latent.xi.push_back(x(lay.xi(t)));
  return out;
}

EstimationResult estimate_patient(const VisitHistory & history, const EstimationConfig & config)
{
  config.validate();
  if (const auto err = history.validate(); !err.empty()) throw EstimationError(err);

  EstimationResult best;
  best.patient_id = history.patient_id;
  best.nll = kInf;
  bool found = false;
  std::string last_failure;
  for (double s0 : config.grid_s0) {
    for (double beta : config.grid_beta) {
      for (double gamma : config.grid_gamma) {
        for (double rho : config.grid_rho) {
          const GridCell cell{s0, beta, gamma, rho};
          InnerSolution sol;
          try {
            sol = solve_inner(history, cell, config);
          } catch (const ConvergenceError & e) {
            ++best.cells_failed;
            last_failure = e.what();
            continue;
          }
          if (!sol.feasible) {
            ++best.cells_infeasible;
            continue;
          }
          ++best.cells_solved;
          const double margin = config.nll_tie_tolerance * std::max(1.0, std::abs(best.nll));
          if (found && !(sol.nll < best.nll - margin)) continue;
          found = true;
          best.nll = sol.nll;
          best.grid_cell = cell;
          best.params.p = sol.p;
          best.params.mu = sol.mu;
          best.params.alpha = sol.alpha;
          best.params.theta_base = sol.theta_base;
          best.params.lambda = sol.lambda;
          best.params.s_base = s0;
          best.params.beta = beta;
          best.params.gamma = gamma;
          best.params.rho = rho;
          best.latent = std::move(sol.latent);
        }
      }
    }
  }
  if (!found) {
    std::string msg = "no feasible grid cell for patient '" + history.patient_id + "' (" +
                      std::to_string(best.cells_infeasible) + " infeasible, " +
                      std::to_string(best.cells_failed) + " not converged)";
    if (!last_failure.empty()) msg += "; last failure: " + last_failure;
    throw EstimationError(msg);
  }
  return best;
}

double constraint_violation(const VisitHistory & h, const EstimationResult & r,
                            const EstimationConfig & cfg)
{
  const std::size_t T = h.length();
  const PatientParams & q = r.params;
  const auto & L = r.latent;
  if (L.b.size() != T || L.s.size() != T || L.theta.size() != T || L.xi.size() + 1 != T) {
    throw std::invalid_argument("latent trajectories do not match the history length");
  }
  double worst = 0.0;
  auto note = [&](double v) { worst = std::max(worst, v); };

  for (double v : {q.p, q.mu, q.alpha, q.theta_base, q.lambda}) {
    note(-v);
    note(v - cfg.param_upper);
  }
  const auto s = reconstruct_states(h, q.s_base, q.beta, q.gamma);
  const auto c = perception_coefficients(h, q.rho);
  for (std::size_t t = 0; t < T; ++t) {
    note(-L.b[t]);
    note(-L.theta[t]);
    note(std::abs(L.s[t] - s[t]));
    note(std::abs(L.theta[t] - (q.theta_base + c[t] * q.lambda)));
    if (t + 1 < T) {
      const double z = h.z[t] ? 1.0 : 0.0;
      const double yz = (h.y[t] && h.z[t]) ? 1.0 : 0.0;
      note(std::abs(L.b[t + 1] - (L.b[t] + q.p - q.mu * z - q.alpha * yz + L.xi[t])));
    }
    const double B = q.mu + (h.y[t] ? q.alpha : 0.0) -
                     L.theta[t] * (q.gamma * (s[t] - q.s_base) + q.s_base + (h.y[t] ? q.beta : 0.0));
    if (h.z[t]) {
      note(-B);
    } else if (refusal_eligible(h, t)) {
      note(B + cfg.strict_gap);
    }
  }
  return worst;
}

}  // namespace chw
