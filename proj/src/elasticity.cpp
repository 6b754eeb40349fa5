#include "linetension/elasticity.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace linetension {

double pairwise_sum(const double* data, std::size_t n) {
  if (n <= 16) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += data[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

// ---------------------------------------------------------------------------
// Rotation

Rotation::Rotation(const Matrix3d& m, double tol) : m_(m) {
  if (!m.allFinite() || !is_rotation(m, tol)) {
    std::ostringstream os;
    os << "matrix is not a rotation (tol " << tol << "):\n" << m;
    throw ValidationError(os.str());
  }
}

Rotation Rotation::from_axis_angle(const Vector3d& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0)) throw ValidationError("rotation axis must be nonzero");
  return Rotation(Eigen::AngleAxisd(angle, axis / n).toRotationMatrix(), 1e-10);
}

Rotation Rotation::from_rotation_vector(const Vector3d& w) {
  const double angle = w.norm();
  if (angle == 0) return identity();
  return from_axis_angle(w, angle);
}

Rotation Rotation::transpose() const { return Rotation(m_.transpose(), Unchecked{}); }

Rotation Rotation::operator*(const Rotation& other) const {
  return Rotation(m_ * other.m_, Unchecked{});
}

namespace {

// F = U diag(s) V^T with U, V in SO(3); s(2) carries the sign of det F.
struct ProperSvd {
  Matrix3d u, v;
  Vector3d s;
};

ProperSvd proper_svd(const Matrix3d& f) {
  Eigen::JacobiSVD<Matrix3d> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProperSvd out{svd.matrixU(), svd.matrixV(), svd.singularValues()};
  if (out.u.determinant() < 0) {
    out.u.col(2) *= -1;
    out.s(2) *= -1;
  }
  if (out.v.determinant() < 0) {
    out.v.col(2) *= -1;
    out.s(2) *= -1;
  }
  return out;
}

}  // namespace

Rotation project_to_rotations(const Matrix3d& f, double degeneracy_tol) {
  if (!f.allFinite()) throw ValidationError("project_to_rotations: non-finite input");
  const ProperSvd d = proper_svd(f);
  if (f.determinant() <= 0) {
    const double s1 = std::abs(d.s(1)), s2 = std::abs(d.s(2));
    if (std::abs(s1 - s2) <= degeneracy_tol * std::max(1.0, std::abs(d.s(0))))
      throw ValidationError(
          "degenerate projection onto SO(3): det F <= 0 with repeated smallest singular values");
  }
  Matrix3d r = d.u * d.v.transpose();
  return Rotation(r, 1e-9);
}

// ---------------------------------------------------------------------------
// EnergyModel

EnergyModel EnergyModel::prototype(double scale) {
  if (!(scale > 0)) throw ValidationError("prototype energy scale must be positive");
  EnergyModel m;
  m.kind_ = Kind::Prototype;
  m.scale_ = scale;
  m.name_ = scale == 1.0 ? "prototype" : "prototype*" + std::to_string(scale);
  return m;
}

EnergyModel EnergyModel::anharmonic(double gamma) {
  if (!(std::abs(gamma) < 2)) throw ValidationError("anharmonic model needs |gamma| < 2");
  EnergyModel m;
  m.kind_ = Kind::Anharmonic;
  m.gamma_ = gamma;
  m.name_ = "anharmonic(" + std::to_string(gamma) + ")";
  return m;
}

EnergyModel EnergyModel::custom(Function w, std::optional<Gradient> grad, std::string name) {
  if (!w) throw ValidationError("custom energy needs a callable");
  EnergyModel m;
  m.kind_ = Kind::Custom;
  m.custom_w_ = std::move(w);
  m.custom_grad_ = std::move(grad);
  m.name_ = std::move(name);
  return m;
}

namespace {

double anharmonic_phi(double x, double gamma) { return x * x + gamma * x * x * x / (1 + x * x); }

double anharmonic_dphi(double x, double gamma) {
  const double d = 1 + x * x;
  return 2 * x + gamma * (3 * x * x + x * x * x * x) / (d * d);
}

}  // namespace

double EnergyModel::value(const Matrix3d& f) const {
  switch (kind_) {
    case Kind::Prototype: {
      const Vector3d s = signed_singular_values(f);
      return scale_ * (s.array() - 1).square().sum();
    }
    case Kind::Anharmonic: {
      const Vector3d s = signed_singular_values(f);
      double w = 0;
      for (int i = 0; i < 3; ++i) w += anharmonic_phi(s(i) - 1, gamma_);
      return w;
    }
    case Kind::Custom:
      return custom_w_(f);
  }
  return 0;
}

Matrix3d EnergyModel::gradient(const Matrix3d& f) const {
  if (kind_ == Kind::Custom) {
    if (custom_grad_) return (*custom_grad_)(f);
    const double h = 1e-6;
    Matrix3d g;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const Matrix3d e = unit_matrix(i, j) * h;
        g(i, j) = (custom_w_(f + e) - custom_w_(f - e)) / (2 * h);
      }
    return g;
  }
  // Isotropic function of signed singular values: dW = U diag(phi'(s - 1)) V^T.
  const ProperSvd d = proper_svd(f);
  Vector3d dphi;
  for (int i = 0; i < 3; ++i) {
    const double x = d.s(i) - 1;
    dphi(i) = kind_ == Kind::Prototype ? 2 * scale_ * x : anharmonic_dphi(x, gamma_);
  }
  return d.u * dphi.asDiagonal() * d.v.transpose();
}

Matrix9d EnergyModel::hessian(const Matrix3d& f) const {
  Matrix9d h;
  if (kind_ == Kind::Prototype) {
    // W = scale(|F|^2 - 2 tr(S) + 3): d^2W[dF] = 2 scale (dF - dR) with the
    // polar-factor derivative dR = U Omega V^T, Omega_ij = (A_ij - A_ji)/(s_i + s_j).
    const ProperSvd d = proper_svd(f);
    bool regular = true;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        if (d.s(i) + d.s(j) <= 1e-10) regular = false;
    if (regular) {
      for (int c = 0; c < 9; ++c) {
        const Matrix3d df = unit_matrix(c / 3, c % 3);
        const Matrix3d a = d.u.transpose() * df * d.v;
        Matrix3d omega = Matrix3d::Zero();
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            if (i != j) omega(i, j) = (a(i, j) - a(j, i)) / (d.s(i) + d.s(j));
        const Matrix3d dr = d.u * omega * d.v.transpose();
        h.col(c) = flatten(2 * scale_ * (df - dr));
      }
      return h;
    }
  }
  const double step = 1e-6;
  for (int c = 0; c < 9; ++c) {
    const Matrix3d e = unit_matrix(c / 3, c % 3) * step;
    h.col(c) = flatten((gradient(f + e) - gradient(f - e)) / (2 * step));
  }
  return (h + h.transpose()) / 2;
}

ElasticTensord hessian_at_identity(const EnergyModel& model, double step) {
  if (!(step >= 1e-6 && step <= 1e-2))
    throw ValidationError("hessian_at_identity: step must lie in [1e-6, 1e-2]");
  const Matrix3d id = Matrix3d::Identity();
  Matrix9d c;
  for (int a = 0; a < 9; ++a)
    for (int b = 0; b < 9; ++b) {
      const Matrix3d ea = unit_matrix(a / 3, a % 3) * step;
      const Matrix3d eb = unit_matrix(b / 3, b % 3) * step;
      const double v = model.value(id + ea + eb) - model.value(id + ea - eb) -
                       model.value(id - ea + eb) + model.value(id - ea - eb);
      c(a, b) = v / (4 * step * step);
      if (!std::isfinite(c(a, b)))
        throw SolverError("hessian_at_identity: non-finite difference quotient");
    }
  return ElasticTensord(c);
}

EnergyValidationReport validate_energy_assumptions(const EnergyModel& model, int samples,
                                                   std::uint64_t seed) {
  if (samples < 100) throw ValidationError("validate_energy_assumptions: need >= 100 samples");
  EnergyValidationReport rep;
  rep.samples = samples;
  rep.value_at_identity = model.value(Matrix3d::Identity());
  if (std::abs(rep.value_at_identity) > 1e-12)
    throw ValidationError("energy assumption (ii) violated: W(I) = " +
                          std::to_string(rep.value_at_identity));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  rep.c1 = std::numeric_limits<double>::infinity();
  rep.c2 = 0;
  for (int n = 0; n < samples; ++n) {
    const Rotation r = random_rotation(rng);
    Vector9d p;
    for (int k = 0; k < 9; ++k) p(k) = normal(rng);
    const double radius = 3.0 * std::pow(uniform(rng), 1.0 / 9.0);
    const Matrix3d f = r.matrix() + unflatten(p.normalized() * radius);

    const double w = model.value(f);
    if (!(w >= 0)) throw ValidationError("energy assumption violated: W(F) < 0 at a sample");
    const double dist = distance_to_rotations(f);
    if (dist > 1e-6) {
      const double ratio = w / (dist * dist);
      rep.c1 = std::min(rep.c1, ratio);
      rep.c2 = std::max(rep.c2, ratio);
      rep.jacobian_constant = std::max(rep.jacobian_constant, model.gradient(f).norm() / dist);
    }
    const Rotation q = random_rotation(rng);
    const double violation = std::abs(model.value(q.matrix() * f) - w);
    rep.frame_violation = std::max(rep.frame_violation, violation);
    if (violation > 1e-8 * (1 + w))
      throw ValidationError("energy assumption (iii) violated: W(RF) != W(F)");
  }
  if (!(rep.c1 > 0))
    throw ValidationError("energy assumption (iv) violated: no positive lower growth constant");
  if (!std::isfinite(rep.c2) || !std::isfinite(rep.jacobian_constant))
    throw ValidationError("energy assumption (iv)/(v) violated: unbounded growth ratio");
  return rep;
}

// ---------------------------------------------------------------------------
// Rigidity

CylinderGrid hollow_cylinder_grid(double r, double R, double h, int n_rho, int n_theta,
                                  int n_z) {
  if (!(r > 0 && R > r && h > 0) || n_rho < 1 || n_theta < 1 || n_z < 1)
    throw ValidationError("hollow_cylinder_grid: need 0 < r < R, h > 0, positive counts");
  CylinderGrid g;
  const double dtheta = 2 * kPi / n_theta, dz = h / n_z;
  for (int k = 0; k < n_rho; ++k) {
    const double r0 = r * std::pow(R / r, double(k) / n_rho);
    const double r1 = r * std::pow(R / r, double(k + 1) / n_rho);
    const double rm = std::sqrt(r0 * r1);
    const double area = 0.5 * (r1 * r1 - r0 * r0) * dtheta;
    for (int j = 0; j < n_theta; ++j) {
      const double th = (j + 0.5) * dtheta;
      for (int l = 0; l < n_z; ++l) {
        g.points.emplace_back(rm * std::cos(th), rm * std::sin(th), (l + 0.5) * dz);
        g.weights.push_back(area * dz);
      }
    }
  }
  return g;
}

std::pair<Rotation, double> best_fit_rotation_ratio(const SampledField& field) {
  const std::size_t n = field.values.size();
  if (n == 0 || field.weights.size() != n)
    throw ValidationError("best_fit_rotation_ratio: empty grid or weight mismatch");
  std::vector<double> comp(n);
  Matrix3d avg;
  std::vector<double> w(field.weights);
  const double total = pairwise_sum(w);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < n; ++k) {
        if (!field.values[k].allFinite())
          throw ValidationError("best_fit_rotation_ratio: non-finite sample");
        comp[k] = field.weights[k] * field.values[k](i, j);
      }
      avg(i, j) = pairwise_sum(comp) / total;
    }
  const Rotation q = project_to_rotations(avg);
  std::vector<double> num(n), den(n);
  for (std::size_t k = 0; k < n; ++k) {
    num[k] = field.weights[k] * (field.values[k] - q.matrix()).squaredNorm();
    const double d = distance_to_rotations(field.values[k]);
    den[k] = field.weights[k] * d * d;
  }
  const double nsum = pairwise_sum(num), dsum = pairwise_sum(den);
  const double ratio = dsum > 0 ? std::sqrt(nsum / dsum) : 0.0;
  return {q, ratio};
}

}  // namespace linetension
