#pragma once

// Elastic tensors, the nonlinear stored-energy density W and its calculus,
// plus rotation fitting for rigidity diagnostics.

#include "linetension/common.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <array>
#include <algorithm>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>

namespace linetension {

// ---------------------------------------------------------------------------
// Rotations

template <typename Derived>
bool is_rotation(const Eigen::MatrixBase<Derived>& m, double tol = 1e-12) {
  using Scalar = typename Derived::Scalar;
  const Matrix3<Scalar> q = m;
  return (q.transpose() * q - Matrix3<Scalar>::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(q.determinant() - Scalar(1)) <= tol;
}

// An element of SO(3). Construction validates orthogonality and orientation.
class Rotation {
 public:
  Rotation() : m_(Matrix3d::Identity()) {}
  explicit Rotation(const Matrix3d& m, double tol = 1e-12);

  static Rotation identity() { return Rotation(); }
  // Right-handed rotation by `angle` about `axis` (need not be normalized).
  static Rotation from_axis_angle(const Vector3d& axis, double angle);
  // Axis-angle packed as axis * angle.
  static Rotation from_rotation_vector(const Vector3d& w);

  const Matrix3d& matrix() const { return m_; }
  Rotation transpose() const;
  template <typename Derived>
  auto operator*(const Eigen::MatrixBase<Derived>& a) const {
    return (m_ * a).eval();
  }
  Rotation operator*(const Rotation& other) const;

 private:
  struct Unchecked {};
  Rotation(const Matrix3d& m, Unchecked) : m_(m) {}
  Matrix3d m_;
};

// Signed singular values: the smallest one carries the sign of det F, so that
// F = U diag(sigma) V^T with U, V proper rotations.
template <typename Derived>
Vector3<typename Derived::Scalar> signed_singular_values(const Eigen::MatrixBase<Derived>& f) {
  using Scalar = typename Derived::Scalar;
  const Matrix3<Scalar> m = f;
  Eigen::JacobiSVD<Matrix3<Scalar>> svd(m);
  Vector3<Scalar> s = svd.singularValues();
  if (m.determinant() < Scalar(0)) s(2) = -s(2);
  return s;
}

// min over R in SO(3) of |F - R| (Frobenius).
template <typename Derived>
typename Derived::Scalar distance_to_rotations(const Eigen::MatrixBase<Derived>& f) {
  using std::sqrt;
  const auto s = signed_singular_values(f);
  return sqrt((s.array() - 1).square().sum());
}

// Nearest rotation. Throws ValidationError when det F <= 0 and the two
// smallest singular values coincide (the minimizer is then not unique).
Rotation project_to_rotations(const Matrix3d& f, double degeneracy_tol = 1e-12);

// Skew and symmetric parts.
template <typename Derived>
Matrix3<typename Derived::Scalar> sym(const Eigen::MatrixBase<Derived>& a) {
  return (a + a.transpose()) / 2;
}
template <typename Derived>
Matrix3<typename Derived::Scalar> skew(const Eigen::MatrixBase<Derived>& a) {
  return (a - a.transpose()) / 2;
}

// Haar-uniform random rotation from a 64-bit generator.
template <typename Rng>
Rotation random_rotation(Rng& rng);

// ---------------------------------------------------------------------------
// Fourth-order elastic tensors

// A linear map on 3x3 matrices, stored as a 9x9 matrix in row-major
// flattening: (C E)_{ij} = sum_{kl} C_{ijkl} E_{kl}.
template <typename Scalar>
class ElasticTensor {
 public:
  using Matrix = Eigen::Matrix<Scalar, 9, 9>;
  using Voigt = Eigen::Matrix<Scalar, 6, 6>;

  ElasticTensor() : m_(Matrix::Zero()) {}
  explicit ElasticTensor(const Matrix& m) : m_(m) {}

  // C_{ijkl} = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_jk).
  static ElasticTensor isotropic(Scalar mu, Scalar lambda);
  // Tensorial-shear Voigt matrix (no factor-2 scaling), pair order
  // 11, 22, 33, 23, 13, 12. Minor symmetries are imposed.
  static ElasticTensor from_voigt(const Voigt& v);

  const Matrix& matrix() const { return m_; }
  Scalar operator()(int i, int j, int k, int l) const { return m_(3 * i + j, 3 * k + l); }

  Voigt voigt() const;
  Matrix3<Scalar> apply(const Matrix3<Scalar>& e) const;
  // A : C B
  Scalar contract(const Matrix3<Scalar>& a, const Matrix3<Scalar>& b) const;
  // 1/2 C E : E
  Scalar energy(const Matrix3<Scalar>& e) const { return contract(e, e) / 2; }

  // C'_{ijkl} = R_ia R_jb R_kc R_ld C_abcd.
  ElasticTensor rotated(const Matrix3<Scalar>& r) const;
  ElasticTensor scaled(Scalar s) const { return ElasticTensor(m_ * s); }

  Scalar major_symmetry_error() const { return (m_ - m_.transpose()).cwiseAbs().maxCoeff(); }
  // Largest |C W| over the unit skew basis.
  Scalar skew_kernel_error() const;
  // Smallest eigenvalue of E -> C E : E restricted to symmetric E, computed in
  // an orthonormal basis of Sym(3).
  Scalar min_symmetric_eigenvalue() const;

 private:
  Matrix m_;
};

using ElasticTensord = ElasticTensor<double>;

// ---------------------------------------------------------------------------
// Stored-energy densities

class EnergyModel {
 public:
  enum class Kind { Prototype, Anharmonic, Custom };

  using Function = std::function<double(const Matrix3d&)>;
  using Gradient = std::function<Matrix3d(const Matrix3d&)>;

  // W = scale * dist^2(F, SO(3)).
  static EnergyModel prototype(double scale = 1.0);
  // W = sum_i [x_i^2 + gamma x_i^3 / (1 + x_i^2)], x_i = signed singular
  // value minus one. Same Hessian at I as the prototype, nonzero cubic term.
  // Requires |gamma| < 2 for the quadratic growth bounds.
  static EnergyModel anharmonic(double gamma);
  // Arbitrary density; gradient falls back to central differences.
  static EnergyModel custom(Function w, std::optional<Gradient> grad = std::nullopt,
                            std::string name = "custom");

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }

  double value(const Matrix3d& f) const;
  Matrix3d gradient(const Matrix3d& f) const;
  // d^2W/dF^2 as a 9x9 matrix in row-major flattening.
  Matrix9d hessian(const Matrix3d& f) const;

 private:
  EnergyModel() = default;
  Kind kind_ = Kind::Prototype;
  std::string name_;
  double scale_ = 1.0;
  double gamma_ = 0.0;
  Function custom_w_;
  std::optional<Gradient> custom_grad_;
};

// Central second differences of W at the identity along all 9x9 pairs of unit
// directions. step must lie in [1e-6, 1e-2].
ElasticTensord hessian_at_identity(const EnergyModel& model, double step = 1e-4);

struct EnergyValidationReport {
  double c1 = 0;                   // min W / dist^2
  double c2 = 0;                   // max W / dist^2
  double jacobian_constant = 0;    // max |dW/dF| / dist
  double frame_violation = 0;      // max |W(RF) - W(F)|
  double value_at_identity = 0;
  int samples = 0;
};

// Samples F in the radius-3 ball around SO(3); throws ValidationError naming
// the failed clause if W < 0 somewhere, W(I) != 0, the growth constants are
// not positive, or frame indifference fails.
EnergyValidationReport validate_energy_assumptions(const EnergyModel& model, int samples,
                                                   std::uint64_t seed);

// ---------------------------------------------------------------------------
// Rigidity diagnostics

struct SampledField {
  std::vector<Matrix3d> values;
  std::vector<double> weights;  // quadrature weights (volumes)
};

struct CylinderGrid {
  std::vector<Vector3d> points;
  std::vector<double> weights;
};

// Midpoint grid of the hollow cylinder (B'_R \ B'_r) x (0, h) about e3, with
// geometric radial spacing.
CylinderGrid hollow_cylinder_grid(double r, double R, double h, int n_rho, int n_theta,
                                  int n_z);

template <typename Fn>
SampledField sample_field(const CylinderGrid& grid, Fn&& fn) {
  SampledField out;
  out.weights = grid.weights;
  out.values.reserve(grid.points.size());
  for (const auto& p : grid.points) out.values.push_back(fn(p));
  return out;
}

// Average-then-project rotation Q and ratio |F - Q|_{L2} / |dist(F, SO3)|_{L2}
// (ratio is 0 when the denominator vanishes).
std::pair<Rotation, double> best_fit_rotation_ratio(const SampledField& field);

// ---------------------------------------------------------------------------
// template implementations

template <typename Rng>
Rotation random_rotation(Rng& rng) {
  // Shoemake's uniform quaternion from three uniforms in [0, 1).
  auto uniform = [&rng] { return (rng() >> 11) * (1.0 / 9007199254740992.0); };
  const double u1 = uniform(), u2 = uniform(), u3 = uniform();
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  Eigen::Quaterniond q(a * std::sin(2 * kPi * u2), a * std::cos(2 * kPi * u2),
                       b * std::sin(2 * kPi * u3), b * std::cos(2 * kPi * u3));
  q.normalize();
  return Rotation(q.toRotationMatrix(), 1e-10);
}

template <typename Scalar>
ElasticTensor<Scalar> ElasticTensor<Scalar>::isotropic(Scalar mu, Scalar lambda) {
  Matrix m = Matrix::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) {
          Scalar v = 0;
          if (i == j && k == l) v += lambda;
          if (i == k && j == l) v += mu;
          if (i == l && j == k) v += mu;
          m(3 * i + j, 3 * k + l) = v;
        }
  return ElasticTensor(m);
}

namespace detail {
inline constexpr int kVoigtPair[6][2] = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
inline int voigt_index(int i, int j) {
  if (i == j) return i;
  const int s = i + j;  // (1,2)->3, (0,2)->2, (0,1)->1
  return s == 3 ? 3 : (s == 2 ? 4 : 5);
}
}  // namespace detail

template <typename Scalar>
ElasticTensor<Scalar> ElasticTensor<Scalar>::from_voigt(const Voigt& v) {
  Matrix m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
          m(3 * i + j, 3 * k + l) = v(detail::voigt_index(i, j), detail::voigt_index(k, l));
  return ElasticTensor(m);
}

template <typename Scalar>
typename ElasticTensor<Scalar>::Voigt ElasticTensor<Scalar>::voigt() const {
  Voigt v;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b)
      v(a, b) = (*this)(detail::kVoigtPair[a][0], detail::kVoigtPair[a][1],
                        detail::kVoigtPair[b][0], detail::kVoigtPair[b][1]);
  return v;
}

template <typename Scalar>
Matrix3<Scalar> ElasticTensor<Scalar>::apply(const Matrix3<Scalar>& e) const {
  Eigen::Matrix<Scalar, 9, 1> v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v(3 * i + j) = e(i, j);
  const Eigen::Matrix<Scalar, 9, 1> w = m_ * v;
  Matrix3<Scalar> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = w(3 * i + j);
  return out;
}

template <typename Scalar>
Scalar ElasticTensor<Scalar>::contract(const Matrix3<Scalar>& a, const Matrix3<Scalar>& b) const {
  return (a.array() * apply(b).array()).sum();
}

template <typename Scalar>
ElasticTensor<Scalar> ElasticTensor<Scalar>::rotated(const Matrix3<Scalar>& r) const {
  Matrix k;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) k(3 * i + j, 3 * a + b) = r(i, a) * r(j, b);
  return ElasticTensor(k * m_ * k.transpose());
}

template <typename Scalar>
Scalar ElasticTensor<Scalar>::skew_kernel_error() const {
  Scalar worst = 0;
  const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (const auto& p : pairs) {
    Matrix3<Scalar> w = Matrix3<Scalar>::Zero();
    w(p[0], p[1]) = Scalar(1) / std::sqrt(Scalar(2));
    w(p[1], p[0]) = -w(p[0], p[1]);
    worst = std::max(worst, apply(w).cwiseAbs().maxCoeff());
  }
  return worst;
}

template <typename Scalar>
Scalar ElasticTensor<Scalar>::min_symmetric_eigenvalue() const {
  // Orthonormal basis of Sym(3) under the Frobenius product.
  std::array<Matrix3<Scalar>, 6> basis;
  for (int a = 0; a < 6; ++a) {
    const int i = detail::kVoigtPair[a][0], j = detail::kVoigtPair[a][1];
    Matrix3<Scalar> e = Matrix3<Scalar>::Zero();
    if (i == j) {
      e(i, i) = 1;
    } else {
      e(i, j) = e(j, i) = Scalar(1) / std::sqrt(Scalar(2));
    }
    basis[a] = e;
  }
  Eigen::Matrix<Scalar, 6, 6> g;
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) g(a, b) = contract(basis[a], basis[b]);
  const Eigen::Matrix<Scalar, 6, 6> gs = (g + g.transpose()) / 2;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 6, 6>> eig(gs, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

}  // namespace linetension
