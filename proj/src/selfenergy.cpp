#include "linetension/selfenergy.hpp"

#include "linetension/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>

namespace linetension {

Rotation frame_for_direction(const Vector3d& t_in) {
  if (!t_in.allFinite() || std::abs(t_in.norm() - 1) > 1e-10)
    throw ValidationError("direction must be a unit vector");
  const Vector3d t = t_in.normalized();
  const Vector3d k(-t(1), t(0), 0);  // e3 x t
  const double s2 = k.squaredNorm();
  if (s2 == 0) {
    if (t(2) > 0) return Rotation::identity();
    return Rotation(Vector3d(1, -1, -1).asDiagonal().toDenseMatrix());
  }
  Matrix3d kx;
  kx << 0, -k(2), k(1), k(2), 0, -k(0), -k(1), k(0), 0;
  // 1 / (1 + cos) = (1 - t3) / sin^2, stable near the antipode
  const Matrix3d r = Matrix3d::Identity() + kx + kx * kx * ((1 - t(2)) / s2);
  return project_to_rotations(r);
}

// ---------------------------------------------------------------- profile

namespace {

// Periodic cubic spline second derivatives: M_{k-1} + 4 M_k + M_{k+1} = rhs_k,
// cyclic, solved by Sherman-Morrison on a tridiagonal system.
std::vector<Vector3d> periodic_spline(const std::vector<Vector3d>& y, double h) {
  const int n = static_cast<int>(y.size());
  std::vector<Vector3d> rhs(n);
  for (int k = 0; k < n; ++k)
    rhs[k] = 6 * (y[(k + n - 1) % n] - 2 * y[k] + y[(k + 1) % n]) / (h * h);
  if (n < 3) return std::vector<Vector3d>(n, Vector3d::Zero());

  // A = T + u v^T with T tridiagonal (1, 4, 1) modified corners
  const double gamma = -4;
  std::vector<double> diag(n, 4.0);
  diag[0] -= gamma;
  diag[n - 1] -= 1.0 / gamma;
  auto solve_tri = [&](std::vector<Vector3d> d) {
    std::vector<double> c(n), b = diag;
    c[0] = 1 / b[0];
    d[0] /= b[0];
    for (int i = 1; i < n; ++i) {
      const double m = b[i] - c[i - 1];
      c[i] = 1 / m;
      d[i] = (d[i] - d[i - 1]) / m;
    }
    for (int i = n - 2; i >= 0; --i) d[i] -= c[i] * d[i + 1];
    return d;
  };
  std::vector<Vector3d> u(n, Vector3d::Zero());
  u[0] = Vector3d::Constant(gamma);
  u[n - 1] = Vector3d::Constant(1.0);
  const auto x = solve_tri(rhs);
  const auto z = solve_tri(u);
  // v = (1, 0, ..., 0, 1/gamma)
  std::vector<Vector3d> out(n);
  for (int c = 0; c < 3; ++c) {
    const double vx = x[0](c) + x[n - 1](c) / gamma;
    const double vz = z[0](c) + z[n - 1](c) / gamma;
    const double f = vx / (1 + vz);
    for (int i = 0; i < n; ++i) out[i](c) = x[i](c) - f * z[i](c);
  }
  return out;
}

}  // namespace

AngularProfile::AngularProfile(std::vector<Vector3d> f, Vector3d g, Rotation frame)
    : f_(std::move(f)), g_(std::move(g)), frame_(frame) {
  if (f_.size() < 16 || f_.size() % 2 != 0)
    throw ValidationError("angular profile needs an even number of nodes >= 16");
  m_ = periodic_spline(f_, 2 * kPi / n_theta());
}

Vector3d AngularProfile::f_at(double theta) const {
  const int n = n_theta();
  const double h = 2 * kPi / n;
  double u = theta / h - 0.5;
  u -= n * std::floor(u / n);
  int k = static_cast<int>(std::floor(u));
  double t = u - k;
  k %= n;
  const int k1 = (k + 1) % n;
  return (1 - t) * f_[k] + t * f_[k1] +
         h * h / 6 * (((1 - t) * (1 - t) * (1 - t) - (1 - t)) * m_[k] + (t * t * t - t) * m_[k1]);
}

Vector3d AngularProfile::circulation() const {
  Vector3d s = Vector3d::Zero();
  for (int c = 0; c < 3; ++c) {
    std::vector<double> v(f_.size());
    for (std::size_t k = 0; k < f_.size(); ++k) v[k] = f_[k](c);
    s(c) = pairwise_sum(v) * 2 * kPi / n_theta();
  }
  return s;
}

Matrix3d AngularProfile::G(double theta) const {
  const Vector3d er = frame_ * Vector3d(std::cos(theta), std::sin(theta), 0);
  const Vector3d et = frame_ * Vector3d(-std::sin(theta), std::cos(theta), 0);
  return f_at(theta) * et.transpose() + g_ * er.transpose();
}

Matrix3d AngularProfile::G_node(int k) const {
  const double th = node(k);
  const Vector3d er = frame_ * Vector3d(std::cos(th), std::sin(th), 0);
  const Vector3d et = frame_ * Vector3d(-std::sin(th), std::cos(th), 0);
  return f_[k] * et.transpose() + g_ * er.transpose();
}

// ---------------------------------------------------------------- solver

namespace {

// K(n, m)_{ik} = C_{ijkl} n_j m_l
Matrix3d acoustic(const ElasticTensord& C, const Vector3d& n, const Vector3d& m) {
  Matrix3d k = Matrix3d::Zero();
  for (int i = 0; i < 3; ++i)
    for (int kk = 0; kk < 3; ++kk) {
      double s = 0;
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l) s += C(i, j, kk, l) * n(j) * m(l);
      k(i, kk) = s;
    }
  return k;
}

struct NodeBlocks {
  std::vector<Matrix3d> A, B, D, Ainv;
  std::vector<Vector3d> er, et;
};

NodeBlocks node_blocks(const ElasticTensord& C, const Rotation& q, int n) {
  NodeBlocks nb;
  nb.A.resize(n);
  nb.B.resize(n);
  nb.D.resize(n);
  nb.Ainv.resize(n);
  nb.er.resize(n);
  nb.et.resize(n);
  for (int k = 0; k < n; ++k) {
    const double th = 2 * kPi * (k + 0.5) / n;
    nb.er[k] = q * Vector3d(std::cos(th), std::sin(th), 0);
    nb.et[k] = q * Vector3d(-std::sin(th), std::cos(th), 0);
    nb.A[k] = acoustic(C, nb.et[k], nb.et[k]);
    nb.B[k] = acoustic(C, nb.et[k], nb.er[k]);
    nb.D[k] = acoustic(C, nb.er[k], nb.er[k]);
    Eigen::LLT<Matrix3d> llt(nb.A[k]);
    if (llt.info() != Eigen::Success)
      throw SolverError("singular KKT system: acoustic tensor not positive definite");
    nb.Ainv[k] = llt.solve(Matrix3d::Identity());
  }
  return nb;
}

using Matrix6d = Eigen::Matrix<double, 6, 6>;

Matrix6d schur_matrix(const NodeBlocks& nb) {
  const int n = static_cast<int>(nb.A.size());
  const double w = 2 * kPi / n;
  Matrix3d P = Matrix3d::Zero(), R = Matrix3d::Zero(), S = Matrix3d::Zero();
  for (int k = 0; k < n; ++k) {
    const Matrix3d AiB = nb.Ainv[k] * nb.B[k];
    P += w * nb.Ainv[k];
    R += w * AiB;
    S += w * (nb.D[k] - nb.B[k].transpose() * AiB);
  }
  Matrix6d M;
  M << P, -R, -R.transpose(), -S;
  return M;
}

void check_inputs(const ElasticTensord& C, const Vector3d& b, int n_theta) {
  if (n_theta < 16 || n_theta % 2 != 0) throw ValidationError("n_theta must be even and >= 16");
  if (!b.allFinite()) throw ValidationError("Burgers vector must be finite");
  if (!C.matrix().allFinite()) throw ValidationError("elastic tensor must be finite");
}

double profile_energy(const ElasticTensord& C, const AngularProfile& p) {
  std::vector<double> e(p.n_theta());
  for (int k = 0; k < p.n_theta(); ++k) e[k] = C.energy(p.G_node(k));
  return pairwise_sum(e) * 2 * kPi / p.n_theta();
}

}  // namespace

SelfEnergyResult solve_self_energy(const ElasticTensord& C, const Vector3d& b, const Vector3d& t,
                                   int n_theta, KktMethod method) {
  check_inputs(C, b, n_theta);
  const Rotation q = frame_for_direction(t);
  const NodeBlocks nb = node_blocks(C, q, n_theta);
  const double w = 2 * kPi / n_theta;
  std::vector<Vector3d> f(n_theta);
  Vector3d g, lambda;

  if (method == KktMethod::Structured) {
    const Matrix6d M = schur_matrix(nb);
    Eigen::Matrix<double, 6, 1> rhs;
    rhs << b, Vector3d::Zero();
    Eigen::FullPivLU<Matrix6d> lu(M);
    if (!lu.isInvertible()) throw SolverError("singular KKT system");
    const Eigen::Matrix<double, 6, 1> sol = lu.solve(rhs);
    lambda = sol.head<3>();
    g = sol.tail<3>();
    for (int k = 0; k < n_theta; ++k) f[k] = nb.Ainv[k] * (lambda - nb.B[k] * g);
  } else {
    const int n = 3 * n_theta + 6;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    const int gi = 3 * n_theta, li = 3 * n_theta + 3;
    for (int k = 0; k < n_theta; ++k) {
      K.block<3, 3>(3 * k, 3 * k) = w * nb.A[k];
      K.block<3, 3>(3 * k, gi) = w * nb.B[k];
      K.block<3, 3>(gi, 3 * k) = w * nb.B[k].transpose();
      K.block<3, 3>(gi, gi) += w * nb.D[k];
      K.block<3, 3>(3 * k, li) = -w * Matrix3d::Identity();
      K.block<3, 3>(li, 3 * k) = -w * Matrix3d::Identity();
    }
    rhs.segment<3>(li) = -b;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (!sol.allFinite() || (K * sol - rhs).norm() > 1e-8 * (1 + rhs.norm()))
      throw SolverError("singular KKT system");
    for (int k = 0; k < n_theta; ++k) f[k] = sol.segment<3>(3 * k);
    g = sol.segment<3>(gi);
    lambda = sol.segment<3>(li);
  }

  SelfEnergyResult res;
  res.profile = AngularProfile(std::move(f), g, q);
  res.multiplier = lambda;
  res.value = profile_energy(C, res.profile);
  res.constraint_residual = (res.profile.circulation() - b).norm();
  return res;
}

Matrix3d self_energy_matrix(const ElasticTensord& C, const Vector3d& t, int n_theta) {
  check_inputs(C, Vector3d::Zero(), n_theta);
  const NodeBlocks nb = node_blocks(C, frame_for_direction(t), n_theta);
  Eigen::FullPivLU<Matrix6d> lu(schur_matrix(nb));
  if (!lu.isInvertible()) throw SolverError("singular KKT system");
  const Matrix3d lam = lu.inverse().topLeftCorner<3, 3>();
  return (lam + lam.transpose()) / 4;
}

SelfEnergyResult refine_self_energy(const ElasticTensord& C, const Vector3d& b, const Vector3d& t,
                                    int n0, double rtol, int n_max) {
  SelfEnergyResult prev = solve_self_energy(C, b, t, n0);
  for (int n = 2 * n0; n <= n_max; n *= 2) {
    SelfEnergyResult cur = solve_self_energy(C, b, t, n);
    if (std::abs(cur.value - prev.value) <= rtol * std::max(cur.value, 1e-300) || cur.value == 0)
      return cur;
    prev = std::move(cur);
  }
  throw SolverError("self-energy did not converge under refinement up to n_theta = " +
                    std::to_string(n_max));
}

// ---------------------------------------------------------------- fields

Matrix3d eval_eta(const AngularProfile& p, const Vector3d& x) {
  const Vector3d y = p.frame().matrix().transpose() * x;
  const double rho = std::hypot(y(0), y(1));
  if (!(rho > 1e-14 * std::max(1.0, std::abs(y(2)))))
    throw ValidationError("eta evaluated on the dislocation axis");
  const double th = std::atan2(y(1), y(0));
  return p.G(th) / rho;
}

double eta_bound_constant(const AngularProfile& p, const Vector3d& b) {
  if (b.norm() == 0) return 0;
  double worst = 0;
  const int m = 8 * p.n_theta();
  for (int k = 0; k < m; ++k) worst = std::max(worst, p.G(2 * kPi * k / m).norm());
  return worst / b.norm();
}

double check_equilibrium(const AngularProfile& p, const ElasticTensord& C) {
  const int m = 4 * p.n_theta();
  const auto& gl = boost::math::quadrature::gauss<double, 20>::abscissa();
  const auto& gw = boost::math::quadrature::gauss<double, 20>::weights();
  // radial nodes on (1, 2), symmetric Gauss rule expanded
  std::vector<double> rho, wr;
  for (std::size_t i = 0; i < gl.size(); ++i) {
    for (int s : {-1, 1}) {
      if (i == 0 && s == 1 && gl[0] == 0) continue;
      rho.push_back(1.5 + 0.5 * s * gl[i]);
      wr.push_back(0.5 * gw[i]);
    }
  }
  auto psi = [](double r) { return std::pow(std::sin(kPi * (r - 1)), 2); };
  auto dpsi = [](double r) { return kPi * std::sin(2 * kPi * (r - 1)); };

  // stress and its scale on the angular grid (rho = 1)
  std::vector<Matrix3d> S(m);
  std::vector<Vector3d> er(m), et(m);
  double scale = 0;
  for (int k = 0; k < m; ++k) {
    const double th = 2 * kPi * (k + 0.25) / m;
    S[k] = C.apply(p.G(th));
    er[k] = p.frame() * Vector3d(std::cos(th), std::sin(th), 0);
    et[k] = p.frame() * Vector3d(-std::sin(th), std::cos(th), 0);
    scale = std::max(scale, S[k].norm());
  }
  if (scale == 0) return 0;

  double worst = 0, ref = 0;
  const int modes = 4;
  for (int mode = 0; mode <= modes; ++mode)
    for (int trig = 0; trig < (mode == 0 ? 1 : 2); ++trig)
      for (int a = 0; a < 3; ++a) {
        // phi = psi(rho) c(theta) e_a; int C eta : grad phi over the annulus
        double sum = 0, mag = 0;
        for (int k = 0; k < m; ++k) {
          const double th = 2 * kPi * (k + 0.25) / m;
          const double c = trig == 0 ? std::cos(mode * th) : std::sin(mode * th);
          const double dc = trig == 0 ? -mode * std::sin(mode * th) : mode * std::cos(mode * th);
          for (std::size_t i = 0; i < rho.size(); ++i) {
            const double r = rho[i];
            const Vector3d gradient_dir = dpsi(r) * c * er[k] + psi(r) * dc / r * et[k];
            // (S / r) : (e_a (x) grad) times r dr dtheta
            const double integrand = (S[k].row(a).dot(gradient_dir));
            sum += wr[i] * integrand;
            mag += wr[i] * std::abs(integrand);
          }
        }
        worst = std::max(worst, std::abs(sum));
        ref = std::max(ref, mag);
      }
  return ref > 0 ? worst / ref : 0.0;
}

// ---------------------------------------------------------------- scans

SelfEnergyScan self_energy_scan(const ElasticTensord& C, const Vector3d& b,
                                const std::vector<Vector3d>& directions, int n_theta, int threads) {
  SelfEnergyScan scan;
  scan.directions = directions;
  scan.values.resize(directions.size());
  parallel_for(directions.size(), threads, [&](std::size_t i) {
    const Matrix3d K = self_energy_matrix(C, directions[i], n_theta);
    scan.values[i] = b.dot(K * b);
  });
  const double b2 = b.squaredNorm();
  if (b2 > 0 && !directions.empty()) {
    scan.c0 = *std::min_element(scan.values.begin(), scan.values.end()) / b2;
    scan.c1 = *std::max_element(scan.values.begin(), scan.values.end()) / b2;
    for (std::size_t i = 0; i < directions.size(); ++i)
      for (std::size_t j = 0; j < directions.size(); ++j) {
        const double d = (directions[i] - directions[j]).norm();
        if (d == 0) continue;
        scan.continuity_constant =
            std::max(scan.continuity_constant, (scan.values[i] / scan.values[j] - 1) / d);
      }
  }
  return scan;
}

GrowthConstants self_energy_growth(const ElasticTensord& C, const std::vector<Vector3d>& burgers,
                                   const std::vector<Vector3d>& directions, int n_theta,
                                   int threads) {
  std::vector<Matrix3d> K(directions.size());
  parallel_for(directions.size(), threads,
               [&](std::size_t i) { K[i] = self_energy_matrix(C, directions[i], n_theta); });
  GrowthConstants g{std::numeric_limits<double>::infinity(), 0};
  for (const auto& b : burgers) {
    const double b2 = b.squaredNorm();
    if (b2 == 0) continue;
    for (const auto& k : K) {
      const double r = b.dot(k * b) / b2;
      g.c0 = std::min(g.c0, r);
      g.c1 = std::max(g.c1, r);
    }
  }
  if (!std::isfinite(g.c0)) g.c0 = 0;
  return g;
}

}  // namespace linetension
