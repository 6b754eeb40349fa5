#pragma once

// Incompatible strain fields of polyhedral dislocation measures, recovery
// strains at core scale eps, and the comparison of the rescaled energies
// F_eps with the line-tension limit F_0.
//
// Sign convention: eta = b (x) u with u the Biot-Savart field of the line,
//   u(x) = 1/(4 pi) int_gamma t x (x - y) / |x - y|^3 dy,
// so that the circulation of eta around a segment is +b.

#include "linetension/common.hpp"
#include "linetension/dislocations.hpp"
#include "linetension/elasticity.hpp"
#include "linetension/envelope.hpp"
#include "linetension/selfenergy.hpp"

#include <array>
#include <functional>
#include <vector>

namespace linetension {

// ---------------------------------------------------------------------------
// kernel fields

// Closed-form Biot-Savart field of the unit-strength segment a -> b.
// Throws ValidationError when x lies on the closed segment.
Vector3d segment_velocity(const Vector3d& a, const Vector3d& b, const Vector3d& x);

// b (x) segment_velocity
Matrix3d segment_kernel_field(const Segment& seg, const Vector3d& x);

// Kernel convolved with the radial mollifier at scale eps. By the shell
// theorem this is the kernel weighted by the enclosed mollifier mass
// M(|x - y| / eps); the part of the segment outside B_eps(x) is closed form,
// the rest is Gauss-Legendre. Defined everywhere.
Matrix3d segment_mollified_field(const Segment& seg, const Vector3d& x, double eps);

// Enclosed mass of the unit mollifier, tabulated (cubic Hermite, n = 2048).
double mollifier_mass(double s);

// Sum over the segments of a measure. Pure; no evaluation cache.
class KernelField {
 public:
  KernelField() = default;
  explicit KernelField(PolyhedralMeasure source) : source_(std::move(source)) {}

  const PolyhedralMeasure& source() const { return source_; }
  Matrix3d operator()(const Vector3d& x) const;
  Matrix3d mollified(const Vector3d& x, double eps) const;
  // distance to the support (+inf when empty)
  double distance(const Vector3d& x) const;

 private:
  PolyhedralMeasure source_;
};

// Closed probe curve, parametrized over [0, 1).
struct ProbeLoop {
  std::function<Vector3d(double)> point;
  std::function<Vector3d(double)> velocity;  // d point / ds
  int panels = 64;

  static ProbeLoop circle(const Vector3d& center, const Vector3d& axis, double radius);
  static ProbeLoop ellipse(const Vector3d& center, const Vector3d& axis, double a, double b,
                           double tilt);
  // closed polygon; panels are aligned with the edges
  static ProbeLoop polygon(std::vector<Vector3d> vertices);
};

// int_loop F(x) dx (column contraction with the tangent), 10-point Gauss per panel.
Vector3d loop_circulation(const std::function<Matrix3d(const Vector3d&)>& field,
                          const ProbeLoop& loop);

// Square loop around the segment's midpoint, or any loop in the normal plane.
ProbeLoop square_probe(const Vector3d& center, const Vector3d& axis, double half_side);

struct DecayConstants {
  double mass = 0;   // max |eta| dist(x, supp)^2 / |mu|(R^3)
  double lines = 0;  // max |eta| / sum_i |b_i| / dist(x, gamma_i)
  std::size_t probes = 0;
};

// Cell-centred n^3 probe grid in the box (probes on the support are skipped).
DecayConstants kernel_decay_constants(const PolyhedralMeasure& m, const Box& box, int n,
                                      int threads = 1);

// ---------------------------------------------------------------------------
// smooth part beta: gradient of a quadratic displacement,
//   beta(x) = E + sum_k x_k D_k,  curl-free iff D_k(i, j) = D_j(i, k)

struct AffineStrain {
  Matrix3d constant = Matrix3d::Zero();
  std::array<Matrix3d, 3> slope{Matrix3d::Zero(), Matrix3d::Zero(), Matrix3d::Zero()};

  static AffineStrain uniform(const Matrix3d& e);
  Matrix3d operator()(const Vector3d& x) const;
  bool is_zero() const;
  // max |circulation| / perimeter over a fixed family of probe loops in the box
  double curl_residual(const Box& box) const;
};

// ---------------------------------------------------------------------------
// recovery strain

struct RecoveryOptions {
  int n_theta = 256;          // self-energy profile resolution
  double ramp_factor = 0.5;   // axial ramp length / rho
  double max_bound = 100;     // largest accepted fitted C in |theta| <= C/(dist + eps)
  int threads = 1;
};

// Per-segment near-core correction grad(S v), S a tube cutoff of radius rho.
struct CoreTube {
  std::size_t segment = 0;
  Vector3d start, tangent;
  double length = 0;
  double s_start = 0, s_end = 0;  // cutoff support [s_start, length - s_end] before ramps
  double ramp = 0;
  Rotation frame;        // frame.col(2) = tangent
  Vector3d g = Vector3d::Zero();
  std::vector<Vector3d> w;   // periodic potential W(theta) on uniform knots
  std::vector<Vector3d> dw;  // W'(theta)
};

// beta_eps = Q (I + eps sqrt|log eps| beta + eps theta), theta = mollified
// kernel field of Q^T mu plus the near-core gradient corrections.
class RecoveryStrain {
 public:
  RecoveryStrain() = default;

  const Rotation& Q() const { return Q_; }
  const AffineStrain& beta() const { return beta_; }
  double eps() const { return eps_; }
  double rho() const { return rho_; }
  const KernelField& kernel() const { return kernel_; }  // source Q^T mu
  const std::vector<CoreTube>& tubes() const { return tubes_; }
  double bound_constant() const { return bound_; }

  Matrix3d theta(const Vector3d& x) const;
  Matrix3d operator()(const Vector3d& x) const;
  double distance(const Vector3d& x) const { return kernel_.distance(x); }

 private:
  friend RecoveryStrain assemble_recovery(const PolyhedralMeasure&, const Rotation&,
                                          const AffineStrain&, double, double,
                                          const ElasticTensord&, const RecoveryOptions&);
  Rotation Q_;
  AffineStrain beta_;
  double eps_ = 0, rho_ = 0, delta_ = 0;
  KernelField kernel_;
  std::vector<CoreTube> tubes_;
  double bound_ = 0;
};

// rho: tube radius, typically (alpha h)^2. C: Hessian of W at I. Throws
// ValidationError on an open measure, a non curl-free beta, or overlapping
// tubes; SolverError when the fitted bound constant exceeds max_bound.
RecoveryStrain assemble_recovery(const PolyhedralMeasure& measure, const Rotation& Q,
                                 const AffineStrain& beta, double eps, double rho,
                                 const ElasticTensord& C, const RecoveryOptions& opt = {});

// ---------------------------------------------------------------------------
// energies

struct QuadratureOptions {
  double kappa = 0.5;        // leaf size <= kappa * distance to the support
  double core_factor = 0.5;  // leaf size <= core_factor * eps near the support
  double tolerance = 0.02;   // accepted relative change under doubling
  bool inset = false;        // integrate over {dist(x, boundary) > eps}
  int min_depth = 2;
  int threads = 1;
};

struct EnergyReport {
  double value = 0;        // finer level
  double coarse = 0;
  double relative_change = 0;
  std::size_t leaves = 0;  // finer level
};

// F_eps = int W(beta_eps) / (eps^2 |log eps|) by octree Gauss quadrature
// (2 x 2 x 2 points per leaf), at the given resolution and at double
// resolution. SolverError when the two differ by more than the tolerance.
EnergyReport energy_of_strain(const RecoveryStrain& strain, const EnergyModel& model,
                              const Box& domain, const QuadratureOptions& opt = {});

// length of the part of [a, b] inside the box
double clipped_length(const Vector3d& a, const Vector3d& b, const Box& box);

struct LimitReport {
  double bulk = 0, line = 0;
  double total() const { return bulk + line; }
};

// F_0 = int 1/2 C beta : beta + sum_j Psi~0(Q^T b_j, t_j) H^1(gamma_j cap box).
// `envelope` must be built for C rotated by Q (see limit_envelope); it is
// then queried at (b_j, Q t_j).
LimitReport limit_functional(const PolyhedralMeasure& measure, const AffineStrain& beta,
                             const Rotation& Q, const ElasticTensord& C,
                             const EnvelopeTable& envelope, const Box& domain);

EnvelopeTable limit_envelope(const ElasticTensord& C, const Rotation& Q,
                             const BurgersLattice& lattice, double bmax, int level,
                             int n_theta = 256, int threads = 1);

// ---------------------------------------------------------------------------
// Gamma scan

struct GammaScanOptions {
  RecoveryOptions recovery;
  QuadratureOptions quadrature;
};

struct GammaScanReport {
  std::vector<double> eps, F_eps, gaps;
  std::vector<double> rho, relative_change, bound_constant;
  double F0 = 0;
  LimitReport limit;
  ScaleSchedule schedule;
  bool monotone_tail = false;  // gaps nonincreasing over the last three points
};

// eps_list decreasing. Zero-Burgers segments are dropped first.
GammaScanReport gamma_scan(const PolyhedralMeasure& measure, const AffineStrain& beta,
                           const Rotation& Q, const EnergyModel& model,
                           const std::vector<double>& eps_list, const ScaleSchedule& schedule,
                           const Box& domain, const EnvelopeTable& envelope,
                           const GammaScanOptions& opt = {});

}  // namespace linetension
