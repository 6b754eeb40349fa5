#pragma once

// Hollow-cylinder cell problems in the z-invariant reduction. Unknowns live on
// a log-polar mesh s = log(rho / r) in [0, log(R / r)], theta periodic:
//
//   Y(s, theta) = (f + u_theta) (x) e_theta + (g + u_s) (x) e_r + (rho / R) a (x) t
//
// with (f, g) the self-energy profile carrying the circulation, u a
// single-valued Q1 field and a a constant axial column. The linear strain is
// eta = Y / rho, the nonlinear one beta = Q (I + (r / rho) Y).

#include "linetension/common.hpp"
#include "linetension/elasticity.hpp"
#include "linetension/selfenergy.hpp"

#include <optional>
#include <vector>

namespace linetension {

struct CellMesh {
  int n_rho = 64;    // radial elements
  int n_theta = 128; // angular elements
};

struct CellSpec {
  Vector3d b = Vector3d::Zero();
  Vector3d t = Vector3d::UnitZ();
  double h = 8, r = 1e-2, R = 1;
  CellMesh mesh;
  int profile_n_theta = 256;
};

void validate(const CellSpec& spec);

struct NonlinearCellSpec {
  CellSpec base;
  Rotation Q;
  double lambda = 0;
  int max_newton = 60;
  double grad_tol = 1e-9;  // relative to max(1, energy)
};

// Discrete minimizer; evaluates the strain anywhere in the annulus.
class CellField {
 public:
  CellField() = default;
  CellField(const CellSpec& spec, AngularProfile profile, std::vector<Vector3d> u, Vector3d a,
            std::optional<Rotation> Q);

  double log_ratio() const { return lambda_; }
  const std::vector<Vector3d>& u() const { return u_; }
  const Vector3d& a() const { return a_; }
  const AngularProfile& profile() const { return profile_; }
  bool nonlinear() const { return Q_.has_value(); }

  // Y at log-polar coordinates (clamped to the mesh)
  Matrix3d Y(double s, double theta) const;
  // eta (linear) or beta (nonlinear) at a physical point off the axis
  Matrix3d strain(const Vector3d& x) const;

 private:
  CellSpec spec_;
  double lambda_ = 0;
  AngularProfile profile_;
  std::vector<Vector3d> u_;
  Vector3d a_ = Vector3d::Zero();
  std::optional<Rotation> Q_;
};

struct CellResult {
  double value = 0;               // normalized energy
  double psi0 = 0;                // Psi0 of the circulating Burgers vector
  double gap = 0;                 // |value - psi0|, the observed modulus at this geometry
  double constraint_residual = 0; // max over rings of |circulation - b|
  int iterations = 0;
  double gradient_norm = 0;
  CellField field;
};

CellResult solve_linear_cell(const CellSpec& spec, const ElasticTensord& C);

// Starts from the linear minimizer for C = hessian_at_identity(model).
CellResult solve_nonlinear_cell(const NonlinearCellSpec& spec, const EnergyModel& model);

// Procrustes ratio of the strain sampled on a midpoint grid of the cylinder.
double cell_rigidity_ratio(const CellResult& result, const CellSpec& spec, int n_rho = 32,
                           int n_theta = 64);

struct ScanPoint {
  double r_over_R = 0, h_over_R = 0, lambda = 0;
  CellMesh mesh;
  double linear_value = 0, linear_gap = 0;
  double nonlinear_value = 0, nonlinear_gap = 0;
  double constraint_residual = 0;
  int iterations = 0;
};

struct ScanReport {
  std::vector<ScanPoint> points;
  double psi0_linear = 0;    // Psi0(b, t)
  double psi0_nonlinear = 0; // Psi0(Q^T b, t)
  bool linear_gap_decreasing = false;
  bool nonlinear_gap_decreasing = false;
  double c_star = 0;         // min linear value / |b|^2 along the scan
};

struct ScanSchedule {
  std::vector<double> r_over_R;  // decreasing
  std::vector<double> h_over_R;  // nondecreasing
  std::vector<double> lambda;    // nonincreasing
  int rho_per_decade = 43;
  int n_theta = 256;
  bool nonlinear = true;
};

ScanReport cell_convergence_scan(const Vector3d& b, const Vector3d& t, const Rotation& Q,
                                 const EnergyModel& model, const ScanSchedule& schedule,
                                 int threads = 1);

struct BoundReport {
  double unif2_bound = 0, unif2_margin = 0;  // (1 - R/h) c_* |b|^2
  double unif1_bound = 0, unif1_margin = 0;  // Psi0 - C K^2 / M - omega
  bool ok = false;
};

// value: cell value; psi0: Psi0(Q^T b, t); K >= |b|, M <= h / R.
BoundReport lower_bound_certificates(double value, double psi0, const CellSpec& spec,
                                     double c_star, double C, double K, double M, double omega);

}  // namespace linetension
