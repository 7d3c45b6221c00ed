#pragma once

#include <cstddef>
#include <limits>
#include <string_view>

#include <Eigen/Dense>

namespace chw::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// minimize 0.5 x'Px + q'x  subject to  l <= Ax <= u.
/// P must be symmetric positive semidefinite. Equality rows have l == u.
struct Problem
{
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
};

enum class Method { admm, interior_point };

struct Settings
{
  Method method = Method::interior_point;

  /// relaxation parameter
  double alpha = 1.6;
  /// initial penalty; equality rows use 1e3 * rho
  double rho = 0.1;
  /// primal regularization
  double sigma = 1e-6;

  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_primal_inf = 1e-5;
  double eps_dual_inf = 1e-5;

  std::size_t max_iter = 10000;
  /// iterations between termination checks
  std::size_t check_every = 25;

  /// Ruiz equilibration passes (0 disables scaling)
  int scaling_iter = 10;
  bool adaptive_rho = true;

  /// solve the KKT system on the guessed active set after convergence
  bool polish = true;
  double polish_delta = 1e-9;
  int polish_refine_iter = 5;

  /// interior point: Newton iteration cap and relative duality-gap target
  std::size_t ipm_max_iter = 100;
  double eps_gap = 1e-10;
};

enum class Status { solved, primal_infeasible, dual_infeasible, max_iterations };

[[nodiscard]] std::string_view to_string(Status status);

struct Result
{
  Status status = Status::max_iterations;
  Eigen::VectorXd x;
  Eigen::VectorXd y;  ///< constraint multipliers; negative on active lower bounds
  double objective = kInf;
  std::size_t iterations = 0;
  double primal_residual = kInf;  ///< ||Ax - proj(Ax)||_inf, unscaled
  double dual_residual = kInf;    ///< ||Px + q + A'y||_inf, unscaled
  bool polished = false;
};

/// Solves with `settings.method`. Throws std::invalid_argument on
/// inconsistent dimensions or l > u.
[[nodiscard]] Result solve(const Problem & problem, const Settings & settings = {});

/// Operator-splitting (ADMM) solve.
[[nodiscard]] Result solve_admm(const Problem & problem, const Settings & settings = {});

/// Dense primal-dual interior point (Mehrotra predictor-corrector). A
/// problem the Newton iteration cannot solve is passed to a phase-1 program
/// minimizing the largest constraint violation; a violation above eps_abs
/// is reported as primal infeasibility.
[[nodiscard]] Result solve_interior(const Problem & problem, const Settings & settings = {});

namespace detail {
void check_dimensions(const Problem & problem);
}

}  // namespace chw::qp
