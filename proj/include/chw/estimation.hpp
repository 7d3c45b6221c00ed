#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "chw/model.hpp"

namespace chw {

/// Observed longitudinal record of one patient over periods 0..T-1.
struct VisitHistory
{
  std::string patient_id;
  std::vector<bool> y;              ///< visited
  std::vector<bool> z;              ///< enrolled
  std::map<std::size_t, double> b_obs;  ///< period -> noisy log-FBG (the set K)
  bool initially_enrolled = false;      ///< z_{-1}

  [[nodiscard]] std::size_t length() const { return y.size(); }

  /// Empty when consistent, otherwise a description naming the first bad period.
  /// z_t = 1 requires z_{t-1} = 1 or y_t = 1.
  [[nodiscard]] std::string validate() const;
};

struct EstimationConfig
{
  std::vector<double> grid_s0{0, 1, 2, 3};
  std::vector<double> grid_beta{0, 1, 2, 3};
  std::vector<double> grid_gamma{0.2, 0.5, 0.8, 0.9, 0.99};
  std::vector<double> grid_rho{0.2, 0.5, 0.8, 0.9, 0.99};
  double sigma_xi = 0.1;
  double sigma_eps = 0.1;
  /// Upper bound on p, mu, alpha, theta_base and lambda.
  double param_upper = 20.0;
  /// Big-M; <= 0 selects 2 * (mu_max + alpha_max + theta_max * (s_max + beta)) per cell.
  double big_m = 0.0;
  /// Margin that stands in for the strict inequality B_t < 0.
  double strict_gap = 1e-4;
  double qp_tolerance = 1e-6;
  std::size_t qp_max_iterations = 10000;
  /// A later cell replaces the incumbent only if its nll is lower by more than
  /// this amount times max(1, |incumbent|).
  double nll_tie_tolerance = 1e-6;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
  [[nodiscard]] std::size_t grid_size() const
  {
    return grid_s0.size() * grid_beta.size() * grid_gamma.size() * grid_rho.size();
  }
};

struct GridCell
{
  double s_base = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  friend bool operator==(const GridCell &, const GridCell &) = default;
};

struct LatentTrajectories
{
  std::vector<double> b;
  std::vector<double> s;
  std::vector<double> theta;
  std::vector<double> xi;  ///< length T-1
};

struct InnerSolution
{
  bool feasible = false;
  double nll = 0.0;  ///< +inf when infeasible
  double p = 0.0;
  double mu = 0.0;
  double alpha = 0.0;
  double theta_base = 0.0;
  double lambda = 0.0;
  LatentTrajectories latent;
  std::size_t iterations = 0;
};

struct EstimationResult
{
  std::string patient_id;
  PatientParams params;
  LatentTrajectories latent;
  double nll = 0.0;
  GridCell grid_cell;
  std::size_t cells_solved = 0;
  std::size_t cells_infeasible = 0;
  std::size_t cells_failed = 0;  ///< inner solver did not converge
};

class EstimationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public EstimationError
{
public:
  ConvergenceError(const std::string & what, std::size_t iterations)
    : EstimationError(what), iterations_(iterations)
  {}
  [[nodiscard]] std::size_t iterations() const { return iterations_; }

private:
  std::size_t iterations_;
};

/// Adverse-factor trajectory implied by (y, z) for one grid cell:
/// s_0 = s_base * z_{-1}, s_{t+1} = z_t (gamma (s_t - s_base) + s_base) + beta y_t z_t.
[[nodiscard]] std::vector<double> reconstruct_states(const VisitHistory & history, double s_base,
                                                     double beta, double gamma);

/// Convex inner problem for a fixed grid cell. Returns feasible = false with
/// nll = +inf for an infeasible cell; throws ConvergenceError when the solver
/// runs out of iterations.
[[nodiscard]] InnerSolution solve_inner(const VisitHistory & history, const GridCell & cell,
                                        const EstimationConfig & config);

/// Coarse grid search over s_base x beta x gamma x rho (s_base outermost).
/// Throws EstimationError naming the patient when no cell is feasible.
[[nodiscard]] EstimationResult estimate_patient(const VisitHistory & history,
                                                const EstimationConfig & config);

/// Largest violation of the dynamics, nonnegativity and enrollment constraints
/// by an estimate, for auditing.
[[nodiscard]] double constraint_violation(const VisitHistory & history,
                                          const EstimationResult & result,
                                          const EstimationConfig & config);

// ---------------------------------------------------------------------------
// Clustering of estimated parameters

struct ClusterResult
{
  std::vector<FeatureVector> centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  /// Inertia after each Lloyd iteration of the winning restart.
  std::vector<double> inertia_trace;
};

struct KMeansOptions
{
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  double tolerance = 1e-6;
};

/// k-means with k-means++ seeding on unscaled features; best of `restarts`.
/// Throws std::invalid_argument when k == 0 or k > rows.
[[nodiscard]] ClusterResult cluster_params(const std::vector<FeatureVector> & rows, std::size_t k,
                                           std::uint64_t seed, const KMeansOptions & options = {});

struct ElbowPoint
{
  std::size_t k = 0;
  double inertia = 0.0;
};

/// Inertia for each k in ascending order: the better of `cluster_params` (same
/// seed for every k) and Lloyd's iterations started from the previous k's
/// centroids plus the farthest points, so the curve is nonincreasing.
[[nodiscard]] std::vector<ElbowPoint> elbow_curve(const std::vector<FeatureVector> & rows,
                                                  const std::vector<std::size_t> & k_range,
                                                  std::uint64_t seed,
                                                  const KMeansOptions & options = {});

/// k with the largest relative inertia drop (I(k-1) - I(k)) / I(k-1) over
/// consecutive entries of the curve.
[[nodiscard]] std::size_t elbow_k(const std::vector<ElbowPoint> & curve);

}  // namespace chw
