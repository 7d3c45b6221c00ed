#include "chw/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace chw::qp {

namespace {

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;
constexpr double kNormMin = 1e-4;
constexpr double kNormMax = 1e4;

double inf_norm(const Eigen::VectorXd & v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

double clip_norm(double v)
{
  if (v < kNormMin) return 1.0;
  return std::min(v, kNormMax);
}

// Scaled problem: Pbar = c D P D, qbar = c D q, Abar = E A D, lbar = E l, ubar = E u.
struct Scaled
{
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;
  Eigen::VectorXd D;
  Eigen::VectorXd E;
  double c = 1.0;
};

Scaled equilibrate(const Problem & pb, int passes)
{
  const Eigen::Index n = pb.P.rows();
  const Eigen::Index m = pb.A.rows();
  Scaled s{pb.P, pb.q, pb.A, pb.l, pb.u, Eigen::VectorXd::Ones(n), Eigen::VectorXd::Ones(m), 1.0};

  for (int pass = 0; pass < passes; ++pass) {
    Eigen::VectorXd dd(n), de(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double nrm = s.P.col(j).lpNorm<Eigen::Infinity>();
      if (m > 0) nrm = std::max(nrm, s.A.col(j).lpNorm<Eigen::Infinity>());
      dd(j) = 1.0 / std::sqrt(clip_norm(nrm));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      de(i) = 1.0 / std::sqrt(clip_norm(s.A.row(i).lpNorm<Eigen::Infinity>()));
    }
    s.P = dd.asDiagonal() * s.P * dd.asDiagonal();
    s.q = dd.cwiseProduct(s.q);
    s.A = de.asDiagonal() * s.A * dd.asDiagonal();
    s.D = s.D.cwiseProduct(dd);
    s.E = s.E.cwiseProduct(de);

    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean_col += s.P.col(j).lpNorm<Eigen::Infinity>();
    mean_col /= static_cast<double>(std::max<Eigen::Index>(n, 1));
    const double gamma = 1.0 / clip_norm(std::max(mean_col, inf_norm(s.q)));
    s.P *= gamma;
    s.q *= gamma;
    s.c *= gamma;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isfinite(s.l(i))) s.l(i) *= s.E(i);
    if (std::isfinite(s.u(i))) s.u(i) *= s.E(i);
  }
  return s;
}

Eigen::VectorXd rho_vector(const Scaled & s, double rho)
{
  Eigen::VectorXd r(s.A.rows());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (!std::isfinite(s.l(i)) && !std::isfinite(s.u(i))) {
      r(i) = kRhoMin;
    } else if (s.l(i) == s.u(i)) {
      r(i) = kRhoEqScale * rho;
    } else {
      r(i) = rho;
    }
  }
  return r;
}

Eigen::VectorXd project(const Eigen::VectorXd & v, const Eigen::VectorXd & l, const Eigen::VectorXd & u)
{
  return v.cwiseMax(l).cwiseMin(u);
}

struct Residuals
{
  double primal = 0.0;
  double dual = 0.0;
  double eps_primal = 0.0;
  double eps_dual = 0.0;
};

Residuals residuals(const Scaled & s, const Settings & st, const Eigen::VectorXd & x,
                    const Eigen::VectorXd & z, const Eigen::VectorXd & y)
{
  const Eigen::VectorXd Einv = s.E.cwiseInverse();
  const Eigen::VectorXd Dinv = s.D.cwiseInverse();
  const Eigen::VectorXd Ax = s.A * x;
  const Eigen::VectorXd Px = s.P * x;
  const Eigen::VectorXd Aty = s.A.transpose() * y;

  Residuals r;
  r.primal = inf_norm(Einv.cwiseProduct(Ax - z));
  r.dual = inf_norm(Dinv.cwiseProduct(Px + s.q + Aty)) / s.c;
  r.eps_primal = st.eps_abs + st.eps_rel * std::max(inf_norm(Einv.cwiseProduct(Ax)),
                                                    inf_norm(Einv.cwiseProduct(z)));
  r.eps_dual = st.eps_abs + st.eps_rel / s.c *
                              std::max({inf_norm(Dinv.cwiseProduct(Px)), inf_norm(Dinv.cwiseProduct(Aty)),
                                        inf_norm(Dinv.cwiseProduct(s.q))});
  return r;
}

bool primal_infeasible(const Problem & pb, const Scaled & s, const Settings & st,
                       const Eigen::VectorXd & dy_scaled)
{
  const Eigen::VectorXd dy = s.E.cwiseProduct(dy_scaled);
  const double nrm = inf_norm(dy);
  if (nrm <= st.eps_primal_inf) return false;
  const double tol = st.eps_primal_inf * nrm;
  const Eigen::VectorXd Atdy = s.D.cwiseInverse().cwiseProduct(s.A.transpose() * dy_scaled);
  if (inf_norm(Atdy) > tol) return false;

  double support = 0.0;
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    if (dy(i) > tol) {
      if (!std::isfinite(pb.u(i))) return false;
      support += pb.u(i) * dy(i);
    } else if (dy(i) < -tol) {
      if (!std::isfinite(pb.l(i))) return false;
      support += pb.l(i) * dy(i);
    }
  }
  return support < -tol;
}

bool dual_infeasible(const Problem & pb, const Scaled & s, const Settings & st,
                     const Eigen::VectorXd & dx_scaled)
{
  const Eigen::VectorXd dx = s.D.cwiseProduct(dx_scaled);
  const double nrm = inf_norm(dx);
  if (nrm <= st.eps_dual_inf) return false;
  const double tol = st.eps_dual_inf * nrm;
  if (inf_norm(pb.P * dx) > tol) return false;
  if (pb.q.dot(dx) >= -tol) return false;
  const Eigen::VectorXd Adx = pb.A * dx;
  for (Eigen::Index i = 0; i < Adx.size(); ++i) {
    if (std::isfinite(pb.u(i)) && Adx(i) > tol) return false;
    if (std::isfinite(pb.l(i)) && Adx(i) < -tol) return false;
  }
  return true;
}

struct Iterate
{
  Eigen::VectorXd x, z, y;
};

// Equality-constrained QP on the guessed active set, solved with a
// regularized KKT factorization plus iterative refinement.
bool polish(const Scaled & s, const Settings & st, Iterate & it)
{
  const Eigen::Index n = s.P.rows();
  const Eigen::Index m = s.A.rows();
  std::vector<Eigen::Index> rows;
  std::vector<double> target;
  std::vector<int> side;  // -1 lower, +1 upper, 0 equality
  for (Eigen::Index i = 0; i < m; ++i) {
    if (s.l(i) == s.u(i)) {
      rows.push_back(i);
      target.push_back(s.l(i));
      side.push_back(0);
    } else if (std::isfinite(s.l(i)) && it.z(i) - s.l(i) < -it.y(i)) {
      rows.push_back(i);
      target.push_back(s.l(i));
      side.push_back(-1);
    } else if (std::isfinite(s.u(i)) && s.u(i) - it.z(i) < it.y(i)) {
      rows.push_back(i);
      target.push_back(s.u(i));
      side.push_back(1);
    }
  }
  const auto k = static_cast<Eigen::Index>(rows.size());

  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + k, n + k);
  kkt.topLeftCorner(n, n) = s.P;
  Eigen::VectorXd rhs(n + k);
  rhs.head(n) = -s.q;
  for (Eigen::Index r = 0; r < k; ++r) {
    kkt.block(n + r, 0, 1, n) = s.A.row(rows[r]);
    kkt.block(0, n + r, n, 1) = s.A.row(rows[r]).transpose();
    rhs(n + r) = target[r];
  }
  Eigen::MatrixXd reg = kkt;
  reg.topLeftCorner(n, n).diagonal().array() += st.polish_delta;
  reg.bottomRightCorner(k, k).diagonal().array() -= st.polish_delta;

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
  if (ldlt.info() != Eigen::Success) return false;
  Eigen::VectorXd sol = ldlt.solve(rhs);
  for (int r = 0; r < st.polish_refine_iter; ++r) sol += ldlt.solve(rhs - kkt * sol);
  if (!sol.allFinite()) return false;

  Iterate out;
  out.x = sol.head(n);
  out.y = Eigen::VectorXd::Zero(m);
  for (Eigen::Index r = 0; r < k; ++r) {
    const double yr = sol(n + r);
    if ((side[r] == -1 && yr > st.eps_abs) || (side[r] == 1 && yr < -st.eps_abs)) return false;
    out.y(rows[r]) = yr;
  }
  out.z = project(s.A * out.x, s.l, s.u);

  const Residuals before = residuals(s, st, it.x, it.z, it.y);
  const Residuals after = residuals(s, st, out.x, out.z, out.y);
  const bool primal_ok = after.primal <= std::max(before.primal, 1e-10);
  const bool dual_ok = after.dual <= std::max(before.dual, 1e-10);
  if (!primal_ok || !dual_ok) return false;
  it = std::move(out);
  return true;
}

}  // namespace

namespace detail {

void check_dimensions(const Problem & pb)
{
  const Eigen::Index n = pb.P.rows();
  if (pb.P.cols() != n || pb.q.size() != n) throw std::invalid_argument("qp: P/q dimension mismatch");
  if (pb.A.cols() != n && pb.A.rows() > 0) throw std::invalid_argument("qp: A column count mismatch");
  if (pb.l.size() != pb.A.rows() || pb.u.size() != pb.A.rows()) {
    throw std::invalid_argument("qp: bound dimension mismatch");
  }
  for (Eigen::Index i = 0; i < pb.l.size(); ++i) {
    if (pb.l(i) > pb.u(i)) throw std::invalid_argument("qp: lower bound exceeds upper bound");
  }
}

}  // namespace detail

std::string_view to_string(Status status)
{
  switch (status) {
    case Status::solved: return "solved";
    case Status::primal_infeasible: return "primal_infeasible";
    case Status::dual_infeasible: return "dual_infeasible";
    case Status::max_iterations: return "max_iterations";
  }
  return "unknown";
}

Result solve(const Problem & pb, const Settings & st)
{
  return st.method == Method::admm ? solve_admm(pb, st) : solve_interior(pb, st);
}

Result solve_admm(const Problem & pb, const Settings & st)
{
  detail::check_dimensions(pb);
  const Eigen::Index n = pb.P.rows();
  const Eigen::Index m = pb.A.rows();
  Problem problem = pb;
  if (m == 0) problem.A.resize(0, n);

  const Scaled s = equilibrate(problem, st.scaling_iter);
  double rho = st.rho;
  Eigen::VectorXd rho_vec = rho_vector(s, rho);

  const auto factor = [&] {
    Eigen::MatrixXd K = s.P + s.A.transpose() * rho_vec.asDiagonal() * s.A;
    K.diagonal().array() += st.sigma;
    return Eigen::LLT<Eigen::MatrixXd>(K);
  };
  Eigen::LLT<Eigen::MatrixXd> llt = factor();

  Iterate it{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  Result res;

  for (std::size_t k = 1; k <= st.max_iter; ++k) {
    const Eigen::VectorXd rhs =
      st.sigma * it.x - s.q + s.A.transpose() * (rho_vec.cwiseProduct(it.z) - it.y);
    const Eigen::VectorXd x_tilde = llt.solve(rhs);
    const Eigen::VectorXd z_tilde = s.A * x_tilde;

    const Eigen::VectorXd x_new = st.alpha * x_tilde + (1.0 - st.alpha) * it.x;
    const Eigen::VectorXd z_relax = st.alpha * z_tilde + (1.0 - st.alpha) * it.z;
    const Eigen::VectorXd z_new = project(z_relax + it.y.cwiseQuotient(rho_vec), s.l, s.u);
    const Eigen::VectorXd y_new = it.y + rho_vec.cwiseProduct(z_relax - z_new);

    const Eigen::VectorXd dx = x_new - it.x;
    const Eigen::VectorXd dy = y_new - it.y;
    it.x = x_new;
    it.z = z_new;
    it.y = y_new;
    res.iterations = k;

    if (k % st.check_every != 0 && k != st.max_iter) continue;

    const Residuals r = residuals(s, st, it.x, it.z, it.y);
    if (r.primal <= r.eps_primal && r.dual <= r.eps_dual) {
      res.status = Status::solved;
      break;
    }
    if (primal_infeasible(problem, s, st, dy)) {
      res.status = Status::primal_infeasible;
      break;
    }
    if (dual_infeasible(problem, s, st, dx)) {
      res.status = Status::dual_infeasible;
      break;
    }

    if (st.adaptive_rho) {
      const Eigen::VectorXd Ax = s.A * it.x;
      const double prim_scale = std::max(inf_norm(Ax), inf_norm(it.z));
      const double dual_scale = std::max(
        {inf_norm(s.P * it.x), inf_norm(s.A.transpose() * it.y), inf_norm(s.q)});
      const double prim = inf_norm(Ax - it.z) / std::max(prim_scale, 1e-30);
      const double dual = inf_norm(s.P * it.x + s.q + s.A.transpose() * it.y) /
                          std::max(dual_scale, 1e-30);
      double estimate = rho * std::sqrt(prim / std::max(dual, 1e-30));
      estimate = std::clamp(estimate, kRhoMin, kRhoMax);
      if (estimate > 5.0 * rho || estimate < 0.2 * rho) {
        rho = estimate;
        rho_vec = rho_vector(s, rho);
        llt = factor();
      }
    }
  }

  if (res.status == Status::solved && st.polish) res.polished = polish(s, st, it);

  const Residuals r = residuals(s, st, it.x, it.z, it.y);
  res.primal_residual = r.primal;
  res.dual_residual = r.dual;
  res.x = s.D.cwiseProduct(it.x);
  res.y = s.E.cwiseProduct(it.y) / s.c;
  res.objective = 0.5 * res.x.dot(pb.P * res.x) + pb.q.dot(res.x);
  return res;
}

}  // namespace chw::qp
