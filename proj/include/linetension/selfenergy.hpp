#pragma once

#include "linetension/common.hpp"
#include "linetension/elasticity.hpp"

#include <vector>

namespace linetension {

// Minimal-angle rotation with Q e3 = t. For t = -e3: rotation by pi about e1.
Rotation frame_for_direction(const Vector3d& t);

// Nodes theta_k = 2 pi (k + 1/2) / N. f, g and b are in global coordinates.
class AngularProfile {
 public:
  AngularProfile() = default;
  AngularProfile(std::vector<Vector3d> f, Vector3d g, Rotation frame);

  int n_theta() const { return static_cast<int>(f_.size()); }
  double node(int k) const { return 2 * kPi * (k + 0.5) / n_theta(); }
  const std::vector<Vector3d>& f() const { return f_; }
  const Vector3d& g() const { return g_; }
  const Rotation& frame() const { return frame_; }
  Vector3d direction() const { return frame_.matrix().col(2); }

  // periodic cubic spline through the nodes
  Vector3d f_at(double theta) const;
  // trapezoidal integral of f over (0, 2 pi)
  Vector3d circulation() const;
  // G(theta) = f(theta) (x) Q e_theta + g (x) Q e_r
  Matrix3d G(double theta) const;
  Matrix3d G_node(int k) const;

 private:
  std::vector<Vector3d> f_;
  std::vector<Vector3d> m_;  // spline second derivatives
  Vector3d g_ = Vector3d::Zero();
  Rotation frame_;
};

enum class KktMethod { Structured, Dense };

struct SelfEnergyResult {
  double value = 0;
  AngularProfile profile;
  Vector3d multiplier = Vector3d::Zero();  // C G n_theta, constant at the optimum
  double constraint_residual = 0;
  double equilibrium_residual = -1;  // -1 when not evaluated
};

SelfEnergyResult solve_self_energy(const ElasticTensord& C, const Vector3d& b, const Vector3d& t,
                                   int n_theta = 256, KktMethod method = KktMethod::Structured);

// Psi0(b, t) = b^T K(t) b with K symmetric; same discretization as above.
Matrix3d self_energy_matrix(const ElasticTensord& C, const Vector3d& t, int n_theta = 256);

// Doubles N from n0 until successive values agree to rtol; SolverError past n_max.
SelfEnergyResult refine_self_energy(const ElasticTensord& C, const Vector3d& b, const Vector3d& t,
                                    int n0 = 64, double rtol = 1e-10, int n_max = 4096);

// (1/rho)(f(theta) (x) Q e_theta + g (x) Q e_r) at x, rho = distance to the axis R t
Matrix3d eval_eta(const AngularProfile& p, const Vector3d& x);

// Largest |eta(x)| dist(x, axis) / |b| over a fine angular grid.
double eta_bound_constant(const AngularProfile& p, const Vector3d& b);

// Weak residual of div(C eta) = 0 against smooth fields supported in the
// annulus 1 < rho < 2, relative to the stress scale. 0 for the zero profile.
double check_equilibrium(const AngularProfile& p, const ElasticTensord& C);

struct SelfEnergyScan {
  std::vector<Vector3d> directions;
  std::vector<double> values;
  double continuity_constant = 0;  // smallest c with Psi(t) <= (1 + c|t - t'|) Psi(t')
  double c0 = 0, c1 = 0;           // min / max of Psi / |b|^2
};

SelfEnergyScan self_energy_scan(const ElasticTensord& C, const Vector3d& b,
                                const std::vector<Vector3d>& directions, int n_theta = 256,
                                int threads = 1);

struct GrowthConstants {
  double c0 = 0, c1 = 0;
};

// c0 |b|^2 <= Psi0(b, t) <= c1 |b|^2 over the given Burgers vectors and directions.
GrowthConstants self_energy_growth(const ElasticTensord& C, const std::vector<Vector3d>& burgers,
                                   const std::vector<Vector3d>& directions, int n_theta = 256,
                                   int threads = 1);

}  // namespace linetension
