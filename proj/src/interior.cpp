#include <algorithm>
#include <cmath>
#include <vector>

#include "chw/qp.hpp"

namespace chw::qp {

namespace {

double inf_norm(const Eigen::VectorXd & v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

// minimize 0.5 x'Px + q'x  subject to  Gx <= h, Cx = d.
struct Standard
{
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
};

// Where each standard-form row came from, for mapping multipliers back.
struct RowOrigin
{
  Eigen::Index row;
  double sign;  // +1 upper bound or equality, -1 lower bound
  double scale;
};

struct Conversion
{
  Standard std_form;
  std::vector<RowOrigin> ineq;
  std::vector<RowOrigin> eq;
  bool trivially_infeasible = false;
};

// Splits l <= Ax <= u into one-sided rows, each normalized to unit inf-norm.
Conversion to_standard(const Problem & pb)
{
  const Eigen::Index n = pb.P.rows();
  std::vector<Eigen::Index> g_rows, c_rows;
  Conversion out;
  for (Eigen::Index i = 0; i < pb.A.rows(); ++i) {
    const double scale = pb.A.row(i).lpNorm<Eigen::Infinity>();
    if (scale == 0.0) {
      if (pb.l(i) > 0.0 || pb.u(i) < 0.0) out.trivially_infeasible = true;
      continue;
    }
    if (pb.l(i) == pb.u(i)) {
      out.eq.push_back({i, 1.0, scale});
      continue;
    }
    if (std::isfinite(pb.u(i))) out.ineq.push_back({i, 1.0, scale});
    if (std::isfinite(pb.l(i))) out.ineq.push_back({i, -1.0, scale});
  }
  Standard & s = out.std_form;
  s.P = pb.P;
  s.q = pb.q;
  s.G.resize(static_cast<Eigen::Index>(out.ineq.size()), n);
  s.h.resize(s.G.rows());
  for (Eigen::Index k = 0; k < s.G.rows(); ++k) {
    const RowOrigin & o = out.ineq[static_cast<std::size_t>(k)];
    s.G.row(k) = o.sign / o.scale * pb.A.row(o.row);
    s.h(k) = (o.sign > 0.0 ? pb.u(o.row) : -pb.l(o.row)) / o.scale;
  }
  s.C.resize(static_cast<Eigen::Index>(out.eq.size()), n);
  s.d.resize(s.C.rows());
  for (Eigen::Index k = 0; k < s.C.rows(); ++k) {
    const RowOrigin & o = out.eq[static_cast<std::size_t>(k)];
    s.C.row(k) = pb.A.row(o.row) / o.scale;
    s.d(k) = pb.l(o.row) / o.scale;
  }
  return out;
}

struct Point
{
  Eigen::VectorXd x, s, lambda, nu;
};

struct CoreResult
{
  bool converged = false;
  Point pt;
  std::size_t iterations = 0;
};

// Newton system for the reduced KKT matrix [H C'; C -delta I].
class Kkt
{
public:
  Kkt(const Standard & f, const Eigen::VectorXd & w, double delta) : f_(f), n_(f.P.rows())
  {
    Eigen::MatrixXd H = f.P;
    H.noalias() += f.G.transpose() * w.asDiagonal() * f.G;
    H.diagonal().array() += delta;
    const Eigen::Index p = f.C.rows();
    K_ = Eigen::MatrixXd::Zero(n_ + p, n_ + p);
    K_.topLeftCorner(n_, n_) = H;
    K_.bottomLeftCorner(p, n_) = f.C;
    K_.topRightCorner(n_, p) = f.C.transpose();
    K_.bottomRightCorner(p, p).diagonal().array() = -delta;
    ldlt_.compute(K_);
  }

  bool ok() const { return ldlt_.info() == Eigen::Success; }

  Eigen::VectorXd solve(const Eigen::VectorXd & rhs) const
  {
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    sol += ldlt_.solve(rhs - K_ * sol);
    return sol;
  }

private:
  const Standard & f_;
  Eigen::Index n_;
  Eigen::MatrixXd K_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
};

double max_step(const Eigen::VectorXd & v, const Eigen::VectorXd & dv)
{
  double step = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  }
  return step;
}

Point initial_point(const Standard & f)
{
  const Eigen::Index n = f.P.rows();
  Eigen::MatrixXd H = f.P;
  H.noalias() += f.G.transpose() * f.G;
  H.noalias() += f.C.transpose() * f.C;
  H.diagonal().array() += 1e-8;
  const Eigen::VectorXd rhs = -f.q + f.G.transpose() * f.h + f.C.transpose() * f.d;
  Point pt;
  pt.x = Eigen::LDLT<Eigen::MatrixXd>(H).solve(rhs);
  if (!pt.x.allFinite()) pt.x = Eigen::VectorXd::Zero(n);
  pt.s = f.h - f.G * pt.x;
  const double shift = pt.s.size() == 0 ? 0.0 : -pt.s.minCoeff();
  if (shift > -1.0) pt.s.array() += 1.0 + shift;
  pt.lambda = Eigen::VectorXd::Ones(f.G.rows());
  pt.nu = Eigen::VectorXd::Zero(f.C.rows());
  return pt;
}

CoreResult mehrotra(const Standard & f, const Settings & st)
{
  const Eigen::Index n = f.P.rows();
  const Eigen::Index m = f.G.rows();
  const double delta = 1e-10;
  CoreResult out;
  Point pt = initial_point(f);

  for (std::size_t k = 0; k <= st.ipm_max_iter; ++k) {
    const Eigen::VectorXd Px = f.P * pt.x;
    const Eigen::VectorXd Gx = f.G * pt.x;
    const Eigen::VectorXd Gtl = f.G.transpose() * pt.lambda;
    const Eigen::VectorXd Ctn = f.C.transpose() * pt.nu;
    const Eigen::VectorXd r_d = Px + f.q + Gtl + Ctn;
    const Eigen::VectorXd r_p = Gx + pt.s - f.h;
    const Eigen::VectorXd r_e = f.C * pt.x - f.d;
    const double gap = pt.s.dot(pt.lambda);
    const double objective = 0.5 * pt.x.dot(Px) + f.q.dot(pt.x);

    const double eps_p =
      st.eps_abs + st.eps_rel * std::max({inf_norm(Gx), inf_norm(f.h), inf_norm(f.d)});
    const double eps_d =
      st.eps_abs + st.eps_rel * std::max({inf_norm(Px), inf_norm(f.q), inf_norm(Gtl), inf_norm(Ctn)});
    out.iterations = k;
    if (std::max(inf_norm(r_p), inf_norm(r_e)) <= eps_p && inf_norm(r_d) <= eps_d &&
        gap <= st.eps_gap * std::max(1.0, std::abs(objective))) {
      out.converged = true;
      break;
    }
    if (k == st.ipm_max_iter) break;

    const Eigen::VectorXd w = pt.lambda.cwiseQuotient(pt.s);
    const Kkt kkt(f, w, delta);
    if (!kkt.ok()) break;

    // Newton direction for residuals (r_d, r_p, r_e, r_c), refined against
    // the unreduced system since the reduced one loses accuracy near the end.
    const auto reduced = [&](const Eigen::VectorXd & rd, const Eigen::VectorXd & rp,
                             const Eigen::VectorXd & re, const Eigen::VectorXd & rc, Point & dir) {
      const Eigen::VectorXd rc_s = rc.cwiseQuotient(pt.s);
      Eigen::VectorXd rhs(n + f.C.rows());
      rhs.head(n) = -rd - f.G.transpose() * (w.cwiseProduct(rp) - rc_s);
      rhs.tail(f.C.rows()) = -re;
      const Eigen::VectorXd sol = kkt.solve(rhs);
      dir.x = sol.head(n);
      dir.nu = sol.tail(f.C.rows());
      dir.lambda = w.cwiseProduct(f.G * dir.x + rp) - rc_s;
      dir.s = -(rc + pt.s.cwiseProduct(dir.lambda)).cwiseQuotient(pt.lambda);
    };
    const auto direction = [&](const Eigen::VectorXd & r_c, Point & dir) {
      reduced(r_d, r_p, r_e, r_c, dir);
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXd e_d =
          r_d + f.P * dir.x + f.G.transpose() * dir.lambda + f.C.transpose() * dir.nu;
        const Eigen::VectorXd e_p = r_p + f.G * dir.x + dir.s;
        const Eigen::VectorXd e_e = r_e + f.C * dir.x;
        const Eigen::VectorXd e_c = r_c + pt.lambda.cwiseProduct(dir.s) + pt.s.cwiseProduct(dir.lambda);
        Point fix;
        reduced(e_d, e_p, e_e, e_c, fix);
        dir.x += fix.x;
        dir.s += fix.s;
        dir.lambda += fix.lambda;
        dir.nu += fix.nu;
      }
    };

    Point aff;
    direction(pt.s.cwiseProduct(pt.lambda), aff);
    double sigma = 0.0;
    Eigen::VectorXd r_c = pt.s.cwiseProduct(pt.lambda);
    if (m > 0) {
      const double a_aff = std::min(max_step(pt.s, aff.s), max_step(pt.lambda, aff.lambda));
      const double mu = gap / static_cast<double>(m);
      const double mu_aff =
        (pt.s + a_aff * aff.s).dot(pt.lambda + a_aff * aff.lambda) / static_cast<double>(m);
      sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      r_c += aff.s.cwiseProduct(aff.lambda);
      r_c.array() -= sigma * mu;
    }
    Point dir;
    direction(r_c, dir);
    const double step =
      std::min(1.0, 0.99 * std::min(max_step(pt.s, dir.s), max_step(pt.lambda, dir.lambda)));
    pt.x += step * dir.x;
    pt.s += step * dir.s;
    pt.lambda += step * dir.lambda;
    pt.nu += step * dir.nu;
    if (!pt.x.allFinite() || !pt.s.allFinite() || !pt.lambda.allFinite() || !pt.nu.allFinite()) break;
  }
  out.pt = std::move(pt);
  return out;
}

// Smallest uniform relaxation t >= 0 of every row that admits a solution.
double phase_one_violation(const Standard & f, const Settings & st, bool & converged)
{
  const Eigen::Index n = f.P.rows();
  const Eigen::Index m = f.G.rows();
  const Eigen::Index p = f.C.rows();
  Standard g;
  g.P = Eigen::MatrixXd::Zero(n + 1, n + 1);
  g.P.topLeftCorner(n, n).diagonal().array() = 1e-10;
  g.q = Eigen::VectorXd::Zero(n + 1);
  g.q(n) = 1.0;
  g.G = Eigen::MatrixXd::Zero(m + 2 * p + 1, n + 1);
  g.h = Eigen::VectorXd::Zero(m + 2 * p + 1);
  g.G.topLeftCorner(m, n) = f.G;
  g.G.block(0, n, m, 1).setConstant(-1.0);
  g.h.head(m) = f.h;
  g.G.block(m, 0, p, n) = f.C;
  g.G.block(m, n, p, 1).setConstant(-1.0);
  g.h.segment(m, p) = f.d;
  g.G.block(m + p, 0, p, n) = -f.C;
  g.G.block(m + p, n, p, 1).setConstant(-1.0);
  g.h.segment(m + p, p) = -f.d;
  g.G(m + 2 * p, n) = -1.0;
  g.C.resize(0, n + 1);
  g.d.resize(0);
  Settings inner = st;
  inner.eps_abs = std::min(st.eps_abs, 1e-9);
  inner.eps_rel = std::min(st.eps_rel, 1e-9);
  const CoreResult r = mehrotra(g, inner);
  converged = r.converged;
  return r.pt.x(n);
}

}  // namespace

Result solve_interior(const Problem & pb, const Settings & st)
{
  detail::check_dimensions(pb);
  const Eigen::Index n = pb.P.rows();
  const Eigen::Index m = pb.A.rows();
  Problem problem = pb;
  if (m == 0) problem.A.resize(0, n);
  const Conversion conv = to_standard(problem);
  const Standard & f = conv.std_form;

  Result res;
  res.x = Eigen::VectorXd::Zero(n);
  res.y = Eigen::VectorXd::Zero(m);
  if (conv.trivially_infeasible) {
    res.status = Status::primal_infeasible;
    return res;
  }

  bool phase_one_converged = false;
  const double violation = phase_one_violation(f, st, phase_one_converged);
  if (phase_one_converged && violation > st.eps_abs) {
    res.status = Status::primal_infeasible;
    return res;
  }
  const CoreResult core = mehrotra(f, st);
  res.iterations = core.iterations;
  if (core.converged) res.status = Status::solved;

  res.x = core.pt.x.allFinite() ? core.pt.x : Eigen::VectorXd::Zero(n);
  if (core.pt.lambda.allFinite() && core.pt.nu.allFinite()) {
    for (std::size_t k = 0; k < conv.ineq.size(); ++k) {
      const RowOrigin & o = conv.ineq[k];
      res.y(o.row) += o.sign * core.pt.lambda(static_cast<Eigen::Index>(k)) / o.scale;
    }
    for (std::size_t k = 0; k < conv.eq.size(); ++k) {
      const RowOrigin & o = conv.eq[k];
      res.y(o.row) += core.pt.nu(static_cast<Eigen::Index>(k)) / o.scale;
    }
  }
  const Eigen::VectorXd Ax = problem.A * res.x;
  res.primal_residual = inf_norm(Ax - Ax.cwiseMax(problem.l).cwiseMin(problem.u));
  res.dual_residual = inf_norm(problem.P * res.x + problem.q + problem.A.transpose() * res.y);
  res.objective = 0.5 * res.x.dot(problem.P * res.x) + problem.q.dot(res.x);
  return res;
}

}  // namespace chw::qp
