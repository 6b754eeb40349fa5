#include "linetension/cell.hpp"

#include "linetension/parallel.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <functional>

namespace linetension {

void validate(const CellSpec& spec) {
  if (!(spec.r > 0 && spec.r < spec.R && spec.R <= spec.h))
    throw ValidationError("cell geometry needs 0 < r < R <= h");
  if (spec.mesh.n_rho < 8 || spec.mesh.n_theta < 8)
    throw ValidationError("cell mesh resolutions must be at least 8");
  if (std::abs(spec.t.norm() - 1) > 1e-10) throw ValidationError("cell direction must be a unit vector");
  if (!spec.b.allFinite()) throw ValidationError("Burgers vector must be finite");
  if (spec.profile_n_theta < 16 || spec.profile_n_theta % 2)
    throw ValidationError("profile resolution must be even and >= 16");
}

namespace {

// 4-point Gauss-Legendre on [0, 1]
constexpr double kGx[4] = {0.0694318442029737, 0.3300094782075719, 0.6699905217924281,
                           0.9305681557970263};
constexpr double kGw[4] = {0.1739274225687269, 0.3260725774312731, 0.3260725774312731,
                           0.1739274225687269};

struct Mesh {
  int ns = 0, nt = 0;
  double log_ratio = 0, ds = 0, dth = 0;
  int nodes() const { return (ns + 1) * nt; }
  int node(int i, int j) const { return i * nt + (j % nt); }
  int dofs() const { return 3 * nodes() + 3; }
};

Mesh make_mesh(const CellSpec& spec) {
  Mesh m;
  m.ns = spec.mesh.n_rho;
  m.nt = spec.mesh.n_theta;
  m.log_ratio = std::log(spec.R / spec.r);
  m.ds = m.log_ratio / m.ns;
  m.dth = 2 * kPi / m.nt;
  return m;
}

// Per angular quadrature line: directions and the circulating profile.
struct AngularData {
  std::vector<Vector3d> er, et, f;  // nt * 4
};

AngularData angular_data(const Mesh& m, const AngularProfile& p) {
  AngularData a;
  const Matrix3d q = p.frame().matrix();
  for (int j = 0; j < m.nt; ++j)
    for (int k = 0; k < 4; ++k) {
      const double th = (j + kGx[k]) * m.dth;
      a.er.push_back(q * Vector3d(std::cos(th), std::sin(th), 0));
      a.et.push_back(q * Vector3d(-std::sin(th), std::cos(th), 0));
      a.f.push_back(p.f_at(th));
    }
  return a;
}

// Energy density in terms of Y, with its first and second derivatives.
struct Density {
  // returns value; fills grad (9) and hess (9x9) when requested
  std::function<double(double s, const Matrix3d& y, Vector9d* grad, Matrix9d* hess)> eval;
};

struct Problem {
  Mesh mesh;
  AngularData ang;
  Vector3d g = Vector3d::Zero();
  Vector3d t = Vector3d::UnitZ();
  Density density;
  int threads = 1;
};

struct Evaluation {
  double energy = 0;
  Eigen::VectorXd grad;
  Eigen::SparseMatrix<double> hess;
};

constexpr int kLocal = 15;

Evaluation evaluate(const Problem& pb, const Eigen::VectorXd& x, bool with_hessian) {
  const Mesh& m = pb.mesh;
  const int ne = m.ns * m.nt;
  std::vector<double> energy(ne);
  std::vector<Eigen::Matrix<double, kLocal, 1>> lgrad(ne);
  std::vector<Eigen::Matrix<double, kLocal, kLocal>> lhess(with_hessian ? ne : 0);
  const Vector3d a = x.tail<3>();

  parallel_for(m.ns, pb.threads, [&](std::size_t row) {
    const int i = static_cast<int>(row);
    std::vector<double> qe(16);
    for (int j = 0; j < m.nt; ++j) {
      const int e = i * m.nt + j;
      const int nodes[4] = {m.node(i, j), m.node(i + 1, j), m.node(i, j + 1), m.node(i + 1, j + 1)};
      Vector3d un[4];
      for (int n = 0; n < 4; ++n) un[n] = x.segment<3>(3 * nodes[n]);
      Eigen::Matrix<double, kLocal, 1> gl = Eigen::Matrix<double, kLocal, 1>::Zero();
      Eigen::Matrix<double, kLocal, kLocal> hl = Eigen::Matrix<double, kLocal, kLocal>::Zero();
      for (int p = 0; p < 4; ++p) {
        const double xi = kGx[p];
        const double s = (i + xi) * m.ds;
        const double rhohat = std::exp(s - m.log_ratio);
        for (int q = 0; q < 4; ++q) {
          const double et = kGx[q];
          const int aq = 4 * j + q;
          const double w = kGw[p] * kGw[q] * m.ds * m.dth;
          // bilinear shape derivatives
          const double dxi[4] = {-(1 - et), (1 - et), -et, et};
          const double deta[4] = {-(1 - xi), -xi, (1 - xi), xi};
          Vector3d us = Vector3d::Zero(), ut = Vector3d::Zero();
          Vector3d mvec[4];
          for (int n = 0; n < 4; ++n) {
            const double ps = dxi[n] / m.ds, pt = deta[n] / m.dth;
            us += ps * un[n];
            ut += pt * un[n];
            mvec[n] = pt * pb.ang.et[aq] + ps * pb.ang.er[aq];
          }
          const Matrix3d y = (pb.ang.f[aq] + ut) * pb.ang.et[aq].transpose() +
                             (pb.g + us) * pb.ang.er[aq].transpose() + rhohat * a * pb.t.transpose();
          Vector9d dg;
          Matrix9d dh;
          qe[4 * p + q] = w * pb.density.eval(s, y, &dg, with_hessian ? &dh : nullptr);
          Eigen::Matrix<double, 9, kLocal> B = Eigen::Matrix<double, 9, kLocal>::Zero();
          for (int n = 0; n < 4; ++n)
            for (int c = 0; c < 3; ++c) B.block<3, 1>(3 * c, 3 * n + c) = mvec[n];
          for (int c = 0; c < 3; ++c) B.block<3, 1>(3 * c, 12 + c) = rhohat * pb.t;
          gl.noalias() += w * B.transpose() * dg;
          if (with_hessian) hl.noalias() += w * B.transpose() * (dh * B);
        }
      }
      energy[e] = pairwise_sum(qe);
      lgrad[e] = gl;
      if (with_hessian) lhess[e] = hl;
    }
  });

  Evaluation ev;
  ev.energy = pairwise_sum(energy);
  ev.grad = Eigen::VectorXd::Zero(m.dofs());
  std::vector<Eigen::Triplet<double>> trip;
  if (with_hessian) trip.reserve(static_cast<std::size_t>(ne) * kLocal * kLocal);
  for (int i = 0; i < m.ns; ++i)
    for (int j = 0; j < m.nt; ++j) {
      const int e = i * m.nt + j;
      const int nodes[4] = {m.node(i, j), m.node(i + 1, j), m.node(i, j + 1), m.node(i + 1, j + 1)};
      int dof[kLocal];
      for (int n = 0; n < 4; ++n)
        for (int c = 0; c < 3; ++c) dof[3 * n + c] = 3 * nodes[n] + c;
      for (int c = 0; c < 3; ++c) dof[12 + c] = 3 * m.nodes() + c;
      for (int k = 0; k < kLocal; ++k) ev.grad(dof[k]) += lgrad[e](k);
      if (with_hessian)
        for (int k = 0; k < kLocal; ++k)
          for (int l = 0; l < kLocal; ++l) trip.emplace_back(dof[k], dof[l], lhess[e](k, l));
    }
  if (with_hessian) {
    ev.hess.resize(m.dofs(), m.dofs());
    ev.hess.setFromTriplets(trip.begin(), trip.end());
  }
  return ev;
}

// Node 0 is pinned (rigid translations carry no energy).
Eigen::VectorXd reduce(const Eigen::VectorXd& v) { return v.tail(v.size() - 3); }
Eigen::VectorXd expand(const Eigen::VectorXd& v) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size() + 3);
  out.tail(v.size()) = v;
  return out;
}
Eigen::SparseMatrix<double> reduce(const Eigen::SparseMatrix<double>& m) {
  const int n = static_cast<int>(m.rows()) - 3;
  return m.bottomRightCorner(n, n);
}

struct NewtonOutcome {
  Eigen::VectorXd x;
  double energy = 0;
  double grad_norm = 0;
  int iterations = 0;
};

// Damped Newton with Armijo backtracking and a Levenberg shift whenever the
// Hessian factorization is not positive definite.
NewtonOutcome minimize(const Problem& pb, Eigen::VectorXd x, int max_iter, double grad_tol,
                       bool quadratic) {
  NewtonOutcome out;
  Evaluation ev = evaluate(pb, x, true);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  for (int it = 0; it <= max_iter; ++it) {
    const Eigen::VectorXd g = reduce(ev.grad);
    out.grad_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    out.iterations = it;
    if (out.grad_norm <= grad_tol * std::max(1.0, std::abs(ev.energy)) || (quadratic && it == 1)) break;
    if (it == max_iter)
      throw SolverError("cell Newton iteration did not converge (gradient " +
                        std::to_string(out.grad_norm) + ")");
    Eigen::SparseMatrix<double> h = reduce(ev.hess);
    const double dmax = h.diagonal().cwiseAbs().maxCoeff();
    double shift = 0;
    Eigen::VectorXd p;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::SparseMatrix<double> hs = h;
      if (shift > 0)
        for (int k = 0; k < hs.rows(); ++k) hs.coeffRef(k, k) += shift;
      if (attempt == 0) ldlt.analyzePattern(hs);
      ldlt.factorize(hs);
      if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0) {
        p = -ldlt.solve(g);
        break;
      }
      shift = shift == 0 ? 1e-8 * dmax : shift * 10;
    }
    if (p.size() == 0) throw SolverError("cell Hessian could not be regularized");
    const double slope = g.dot(p);
    if (!(slope < 0)) throw SolverError("cell Newton direction is not a descent direction");
    // Newton decrement at round-off level: the energy cannot decrease further
    if (!quadratic && -slope <= 1e-14 * std::max(1.0, std::abs(ev.energy))) break;
    double alpha = 1;
    Eigen::VectorXd trial;
    Evaluation next;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      trial = x + expand(alpha * p);
      next = evaluate(pb, trial, false);
      if (std::isfinite(next.energy) && next.energy <= ev.energy + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha /= 2;
    }
    if (!accepted) {
      // round-off floor: the model decrease is below representable energy changes
      if (-slope <= 1e-13 * std::max(1.0, std::abs(ev.energy))) break;
      throw SolverError("cell line search failed");
    }
    x = trial;
    ev = evaluate(pb, x, true);
  }
  out.x = x;
  out.energy = ev.energy;
  return out;
}

double ring_circulation_residual(const Mesh& m, const AngularData& ang, const Eigen::VectorXd& x,
                                 const Vector3d& b) {
  Vector3d integral = Vector3d::Zero();
  for (int j = 0; j < m.nt; ++j)
    for (int q = 0; q < 4; ++q) integral += kGw[q] * m.dth * ang.f[4 * j + q];
  double worst = 0;
  for (int i = 0; i <= m.ns; ++i) {
    Vector3d jump = Vector3d::Zero();
    for (int j = 0; j < m.nt; ++j)
      jump += x.segment<3>(3 * m.node(i, j + 1)) - x.segment<3>(3 * m.node(i, j));
    worst = std::max(worst, (integral + jump - b).norm());
  }
  return worst;
}

Problem base_problem(const CellSpec& spec, const AngularProfile& profile) {
  Problem pb;
  pb.mesh = make_mesh(spec);
  pb.ang = angular_data(pb.mesh, profile);
  pb.g = profile.g();
  pb.t = spec.t;
  return pb;
}

std::vector<Vector3d> nodal(const Eigen::VectorXd& x, const Mesh& m) {
  std::vector<Vector3d> u(m.nodes());
  for (int n = 0; n < m.nodes(); ++n) u[n] = x.segment<3>(3 * n);
  return u;
}

struct LinearSolve {
  Eigen::VectorXd x;
  double energy = 0;
  SelfEnergyResult se;
  Problem pb;
};

LinearSolve linear_solve(const CellSpec& spec, const ElasticTensord& C, const Vector3d& b) {
  LinearSolve ls;
  ls.se = solve_self_energy(C, b, spec.t, spec.profile_n_theta);
  ls.pb = base_problem(spec, ls.se.profile);
  const Matrix9d cm = C.matrix();
  ls.pb.density.eval = [cm](double, const Matrix3d& y, Vector9d* grad, Matrix9d* hess) {
    const Vector9d v = flatten(y);
    const Vector9d cv = cm * v;
    if (grad) *grad = cv;
    if (hess) *hess = cm;
    return 0.5 * v.dot(cv);
  };
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(ls.pb.mesh.dofs());
  if (b.squaredNorm() == 0) {
    ls.x = x0;
    return ls;
  }
  const NewtonOutcome out = minimize(ls.pb, x0, 1, 0.0, true);
  ls.x = out.x;
  ls.energy = out.energy;
  return ls;
}

Matrix9d left_multiplication(const Matrix3d& q) {
  Matrix9d l = Matrix9d::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) l(3 * i + j, 3 * k + j) = q(i, k);
  return l;
}

}  // namespace

// ---------------------------------------------------------------- CellField

CellField::CellField(const CellSpec& spec, AngularProfile profile, std::vector<Vector3d> u, Vector3d a,
                     std::optional<Rotation> Q)
    : spec_(spec),
      lambda_(std::log(spec.R / spec.r)),
      profile_(std::move(profile)),
      u_(std::move(u)),
      a_(a),
      Q_(std::move(Q)) {}

Matrix3d CellField::Y(double s, double theta) const {
  const int ns = spec_.mesh.n_rho, nt = spec_.mesh.n_theta;
  const double ds = lambda_ / ns, dth = 2 * kPi / nt;
  s = std::clamp(s, 0.0, lambda_);
  theta = std::fmod(theta, 2 * kPi);
  if (theta < 0) theta += 2 * kPi;
  const int i = std::min(static_cast<int>(s / ds), ns - 1);
  const int j = std::min(static_cast<int>(theta / dth), nt - 1);
  const double xi = s / ds - i, et = theta / dth - j;
  auto node = [&](int ii, int jj) { return u_[ii * nt + (jj % nt)]; };
  const Vector3d u00 = node(i, j), u10 = node(i + 1, j), u01 = node(i, j + 1), u11 = node(i + 1, j + 1);
  const Vector3d us = ((1 - et) * (u10 - u00) + et * (u11 - u01)) / ds;
  const Vector3d ut = ((1 - xi) * (u01 - u00) + xi * (u11 - u10)) / dth;
  const Matrix3d q = profile_.frame().matrix();
  const Vector3d er = q * Vector3d(std::cos(theta), std::sin(theta), 0);
  const Vector3d eth = q * Vector3d(-std::sin(theta), std::cos(theta), 0);
  const double rhohat = std::exp(s - lambda_);
  return (profile_.f_at(theta) + ut) * eth.transpose() + (profile_.g() + us) * er.transpose() +
         rhohat * a_ * spec_.t.transpose();
}

Matrix3d CellField::strain(const Vector3d& x) const {
  const Vector3d local = profile_.frame().transpose() * x;
  const double rho = std::hypot(local(0), local(1));
  if (!(rho > 0)) throw ValidationError("strain evaluated on the cylinder axis");
  const Matrix3d y = Y(std::log(rho / spec_.r), std::atan2(local(1), local(0)));
  if (!Q_) return y / rho;
  return Q_->matrix() * (Matrix3d::Identity() + (spec_.r / rho) * y);
}

// ---------------------------------------------------------------- solvers

CellResult solve_linear_cell(const CellSpec& spec, const ElasticTensord& C) {
  validate(spec);
  if (!(C.min_symmetric_eigenvalue() > 0))
    throw ValidationError("elastic tensor must be positive definite on symmetric matrices");
  const LinearSolve ls = linear_solve(spec, C, spec.b);
  CellResult res;
  const double lr = ls.pb.mesh.log_ratio;
  res.value = ls.energy / lr;
  res.psi0 = ls.se.value;
  res.gap = std::abs(res.value - res.psi0);
  res.constraint_residual = ring_circulation_residual(ls.pb.mesh, ls.pb.ang, ls.x, spec.b);
  res.iterations = spec.b.squaredNorm() == 0 ? 0 : 1;
  if (spec.b.squaredNorm() > 0) res.gradient_norm = reduce(evaluate(ls.pb, ls.x, false).grad).cwiseAbs().maxCoeff();
  res.field = CellField(spec, ls.se.profile, nodal(ls.x, ls.pb.mesh), ls.x.tail<3>(), std::nullopt);
  return res;
}

CellResult solve_nonlinear_cell(const NonlinearCellSpec& spec, const EnergyModel& model) {
  validate(spec.base);
  if (!(spec.lambda >= 0)) throw ValidationError("penalty weight must be nonnegative");
  if (spec.max_newton < 1) throw ValidationError("Newton budget must be positive");
  const Matrix3d Q = spec.Q.matrix();
  const Vector3d bq = Q.transpose() * spec.base.b;  // circulation of Q^T beta
  const ElasticTensord C = hessian_at_identity(model);
  LinearSolve ls = linear_solve(spec.base, C, bq);

  Problem pb = ls.pb;
  const Matrix9d lq = left_multiplication(Q);
  const double lam = spec.lambda;
  pb.density.eval = [&model, Q, lq, lam](double s, const Matrix3d& y, Vector9d* grad, Matrix9d* hess) {
    const double es = std::exp(s), e2s = es * es;
    const Matrix3d beta = Q * (Matrix3d::Identity() + y / es);
    const double val = e2s * model.value(beta) + lam * y.squaredNorm();
    if (grad) *grad = es * flatten(Q.transpose() * model.gradient(beta)) + 2 * lam * flatten(y);
    if (hess) *hess = lq.transpose() * model.hessian(beta) * lq + 2 * lam * Matrix9d::Identity();
    return val;
  };
  pb.threads = 1;

  CellResult res;
  const double lr = pb.mesh.log_ratio;
  res.psi0 = ls.se.value;
  if (bq.squaredNorm() == 0) {  // beta = Q is admissible with zero energy
    res.field = CellField(spec.base, ls.se.profile, nodal(ls.x, pb.mesh), ls.x.tail<3>(), spec.Q);
    return res;
  }
  const NewtonOutcome out = minimize(pb, ls.x, spec.max_newton, spec.grad_tol, false);
  res.value = out.energy / lr;
  res.gap = std::abs(res.value - res.psi0);
  res.iterations = out.iterations;
  res.gradient_norm = out.grad_norm;
  res.constraint_residual = ring_circulation_residual(pb.mesh, pb.ang, out.x, bq);
  res.field = CellField(spec.base, ls.se.profile, nodal(out.x, pb.mesh), out.x.tail<3>(), spec.Q);
  return res;
}

double cell_rigidity_ratio(const CellResult& result, const CellSpec& spec, int n_rho, int n_theta) {
  const CylinderGrid grid = hollow_cylinder_grid(spec.r, spec.R, spec.h, n_rho, n_theta, 1);
  const Matrix3d frame = result.field.profile().frame().matrix();
  const SampledField field =
      sample_field(grid, [&](const Vector3d& p) { return result.field.strain(frame * p); });
  return best_fit_rotation_ratio(field).second;
}

// ---------------------------------------------------------------- scans

ScanReport cell_convergence_scan(const Vector3d& b, const Vector3d& t, const Rotation& Q,
                                 const EnergyModel& model, const ScanSchedule& sc, int threads) {
  const std::size_t n = sc.r_over_R.size();
  if (n == 0 || sc.h_over_R.size() != n || (sc.nonlinear && sc.lambda.size() != n))
    throw ValidationError("scan lists must be nonempty and of equal length");
  for (std::size_t k = 1; k < n; ++k) {
    if (!(sc.r_over_R[k] < sc.r_over_R[k - 1])) throw ValidationError("r/R list must decrease");
    if (sc.h_over_R[k] < sc.h_over_R[k - 1]) throw ValidationError("h/R list must not decrease");
    if (sc.nonlinear && sc.lambda[k] > sc.lambda[k - 1]) throw ValidationError("lambda list must not increase");
  }
  ScanReport rep;
  rep.points.resize(n);
  const ElasticTensord C = hessian_at_identity(model);
  parallel_for(n, threads, [&](std::size_t k) {
    ScanPoint& p = rep.points[k];
    p.r_over_R = sc.r_over_R[k];
    p.h_over_R = sc.h_over_R[k];
    p.lambda = sc.nonlinear ? sc.lambda[k] : 0;
    CellSpec spec;
    spec.b = b;
    spec.t = t;
    spec.R = 1;
    spec.r = p.r_over_R;
    spec.h = p.h_over_R;
    spec.mesh.n_theta = sc.n_theta;
    spec.mesh.n_rho = std::max(8, static_cast<int>(std::lround(sc.rho_per_decade * std::log10(1 / p.r_over_R))));
    p.mesh = spec.mesh;
    const CellResult lin = solve_linear_cell(spec, C);
    p.linear_value = lin.value;
    p.linear_gap = lin.gap;
    p.constraint_residual = lin.constraint_residual;
    if (sc.nonlinear) {
      NonlinearCellSpec ns;
      ns.base = spec;
      ns.Q = Q;
      ns.lambda = p.lambda;
      const CellResult nl = solve_nonlinear_cell(ns, model);
      p.nonlinear_value = nl.value;
      p.nonlinear_gap = nl.gap;
      p.iterations = nl.iterations;
      p.constraint_residual = std::max(p.constraint_residual, nl.constraint_residual);
    }
  });
  rep.psi0_linear = solve_self_energy(C, b, t).value;
  rep.psi0_nonlinear = solve_self_energy(C, Q.matrix().transpose() * b, t).value;
  rep.linear_gap_decreasing = rep.nonlinear_gap_decreasing = true;
  for (std::size_t k = 1; k < n; ++k) {
    if (!(rep.points[k].linear_gap <= rep.points[k - 1].linear_gap)) rep.linear_gap_decreasing = false;
    if (sc.nonlinear && !(rep.points[k].nonlinear_gap <= rep.points[k - 1].nonlinear_gap))
      rep.nonlinear_gap_decreasing = false;
  }
  if (!sc.nonlinear) rep.nonlinear_gap_decreasing = false;
  const double b2 = b.squaredNorm();
  rep.c_star = std::numeric_limits<double>::infinity();
  for (const auto& p : rep.points) rep.c_star = std::min(rep.c_star, b2 > 0 ? p.linear_value / b2 : 0.0);
  return rep;
}

BoundReport lower_bound_certificates(double value, double psi0, const CellSpec& spec, double c_star,
                                     double C, double K, double M, double omega) {
  validate(spec);
  if (spec.b.norm() > K * (1 + 1e-12)) throw ValidationError("|b| exceeds K");
  if (M < 1 || M * spec.R > spec.h * (1 + 1e-12)) throw ValidationError("need 1 <= M <= h / R");
  BoundReport r;
  r.unif2_bound = (1 - spec.R / spec.h) * c_star * spec.b.squaredNorm();
  r.unif2_margin = value - r.unif2_bound;
  r.unif1_bound = psi0 - C * K * K / M - omega;
  r.unif1_margin = value - r.unif1_bound;
  r.ok = r.unif2_margin >= 0 && r.unif1_margin >= 0;
  return r;
}

}  // namespace linetension
