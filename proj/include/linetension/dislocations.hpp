#pragma once

#include "linetension/common.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace linetension {

// Burgers lattice spanned by the columns of `generators`. Normalized so the
// shortest nonzero member has unit length.
class BurgersLattice {
 public:
  explicit BurgersLattice(const Matrix3d& generators, double tol = 1e-9);
  static BurgersLattice cubic();

  const Matrix3d& generators() const { return g_; }
  Vector3d to_cartesian(const Vector3d& coords) const { return g_ * coords; }
  // Integer coordinates of b, if b is a member (within tol per component).
  std::optional<Eigen::Vector3i> coordinates(const Vector3d& b, double tol = 1e-9) const;
  bool contains(const Vector3d& b, double tol = 1e-9) const { return coordinates(b, tol).has_value(); }
  // Members with |b| <= bmax, zero included, sorted by (|b|, coordinates).
  std::vector<Vector3d> ball(double bmax) const;
  double shortest_norm() const;

 private:
  Matrix3d g_;
  Matrix3d inv_;
};

struct Segment {
  Vector3d start;
  Vector3d end;
  Vector3d burgers;  // Cartesian

  double length() const { return (end - start).norm(); }
  Vector3d tangent() const { return (end - start) / length(); }
  Vector3d point(double s) const { return start + s * (end - start); }
};

class PolyhedralMeasure {
 public:
  PolyhedralMeasure() : lattice_(BurgersLattice::cubic()) {}
  explicit PolyhedralMeasure(BurgersLattice lattice, std::vector<Segment> segments = {},
                             double node_tolerance = 0);

  const BurgersLattice& lattice() const { return lattice_; }
  const std::vector<Segment>& segments() const { return segs_; }
  std::size_t size() const { return segs_.size(); }
  bool empty() const { return segs_.empty(); }
  // explicit value, or 1e-9 * bounding-box diameter
  double node_tolerance() const;

  void add(const Segment& s);
  PolyhedralMeasure transformed(const Matrix3d& rotation, const Vector3d& shift) const;
  PolyhedralMeasure scaled_burgers(double factor) const;  // factor must keep b in the lattice
  double bounding_diameter() const;

 private:
  BurgersLattice lattice_;
  std::vector<Segment> segs_;
  double tol_ = 0;
};

// Endpoints clustered within the node tolerance.
struct NodeGraph {
  struct Incidence {
    std::size_t segment;
    bool outgoing;  // segment starts here
  };
  std::vector<Vector3d> positions;
  std::vector<std::vector<Incidence>> incident;
  std::vector<std::size_t> start_node, end_node;  // per segment

  // sum outgoing b - sum incoming b
  Vector3d imbalance(const PolyhedralMeasure& m, std::size_t node) const;
};

NodeGraph build_nodes(const PolyhedralMeasure& m);

double frank_rule_residual(const PolyhedralMeasure& m);

// Domains. The open set is {x : n.(x - p) < 0} for a half-space (n outward).
struct WholeSpace {};
struct HalfSpace {
  Vector3d point = Vector3d::Zero();
  Vector3d normal = Vector3d::UnitZ();
};
struct Ball {
  Vector3d center = Vector3d::Zero();
  double radius = 1;
};
struct Box {
  Vector3d lo = Vector3d::Constant(-1);
  Vector3d hi = Vector3d::Constant(1);
};
using Domain = std::variant<WholeSpace, HalfSpace, Ball, Box>;

// Signed distance to the boundary, positive inside. +inf for the whole space.
double inside_distance(const Domain& d, const Vector3d& x);
// Outward unit normal at (or nearest to) a boundary point.
Vector3d boundary_normal(const Domain& d, const Vector3d& x);
Domain transformed(const Domain& d, const Matrix3d& rotation, const Vector3d& shift);
double volume(const Box& box);

struct DiluteParams {
  double h;
  double alpha;
};

struct DiluteReport {
  bool ok = true;
  char clause = 0;  // 'a'..'d' of the first violation
  std::string first_violation;
  std::vector<std::size_t> segments;
  double min_length = 0, min_separation = 0, min_angle = 0, min_boundary_gap = 0;
};

DiluteReport check_dilute(const PolyhedralMeasure& m, const DiluteParams& p,
                          const Domain& domain = WholeSpace{});

// Distance between two closed segments.
double segment_distance(const Vector3d& p0, const Vector3d& p1, const Vector3d& q0,
                        const Vector3d& q1);
double point_segment_distance(const Vector3d& x, const Vector3d& a, const Vector3d& b);

double weighted_length(const PolyhedralMeasure& m, int power);

// h_eps = H |log eps|^-a, alpha_eps = A |log eps|^-c
struct ScaleSchedule {
  double H = 1, A = 1, a = 0.05, c = 0.05;
  double h(double eps) const;
  double alpha(double eps) const;
  // same, parametrized by L = |log eps| (thresholds can underflow as eps)
  double h_log(double L) const;
  double alpha_log(double L) const;
  DiluteParams at(double eps) const { return {h(eps), alpha(eps)}; }
};

struct ScheduleReport {
  bool admissible = false;
  double exponent_sum = 0;     // 4c + 6a
  double margin = 0;           // 1 - exponent_sum
  double strong_threshold = 0; // alpha^4 h^6 |log eps| > 1 for eps below this
  double decay_threshold = 0;  // log(1/(alpha h))/|log eps| decreasing below this
  double alpha_threshold = 0;  // alpha_eps < 1 below this
  double threshold = 0;        // min of the three
  double log_threshold = 0;    // |log threshold|
  std::string reason;
};

ScheduleReport schedule_admissible(const ScaleSchedule& s);

struct ExtensionResult {
  PolyhedralMeasure measure;
  double mass_ratio = 1;  // |mu~|(R^3) / |mu|(Omega)
  std::size_t reflected = 0;
  std::size_t connectors = 0;
};

// Clip to the closed half-space, add the reversed mirror image of every
// segment touching the plane and close the remaining exterior ends with
// connectors of length >= h ending at a common hub.
ExtensionResult extend_by_reflection(const PolyhedralMeasure& m, const HalfSpace& plane,
                                     double h, double min_angle = 1e-6);

// Normalized C-infinity bump c exp(-1/(1-|x|^2)) on the unit ball, scaled to eps.
class Mollifier {
 public:
  explicit Mollifier(double eps);
  double scale() const { return eps_; }
  double operator()(const Vector3d& x) const;
  // unit-scale radial profile and enclosed mass on |x| < s
  static double profile(double s);
  static double enclosed_mass(double s);
  static double normalization();
  // unit-scale integral of the bump along a line at distance d from the center
  static double line_density(double d);
  // integral of phi_eps(x - y) over y on the segment [a, b]
  double segment_integral(const Vector3d& x, const Vector3d& a, const Vector3d& b) const;

 private:
  double eps_;
};

// (mu * phi_eps)(x)
Matrix3d mollified_curl_density(const PolyhedralMeasure& m, const Mollifier& phi, const Vector3d& x);

// sum_j b_j (x) t_j H^1(gamma_j)
Matrix3d total_measure(const PolyhedralMeasure& m);

}  // namespace linetension
