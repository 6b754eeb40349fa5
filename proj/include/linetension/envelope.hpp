#pragma once

#include "linetension/common.hpp"
#include "linetension/dislocations.hpp"
#include "linetension/elasticity.hpp"

#include <array>
#include <functional>
#include <map>
#include <vector>

namespace linetension {

// Geodesic grid: icosahedron with `level` rounds of midpoint subdivision.
// Vertices of level L are the first vertices of level L + 1.
struct Icosphere {
  int level = 0;
  std::vector<Vector3d> vertices;
  std::vector<std::array<int, 3>> faces;
};

Icosphere icosphere(int level);

// t = l1 t1 + l2 t2 with t1, t2 grid directions, l1, l2 > 0, t1 != t2.
struct DirectionSplit {
  int t1, t2;
  double l1, l2;
};

// All coplanar pairs whose positive cone contains each direction, with both
// legs within 90 degrees of it.
std::vector<std::vector<DirectionSplit>> direction_splits(const std::vector<Vector3d>& dirs,
                                                          double tol = 1e-10);

// Psi0 sampled on lattice ball x directions, stored b-major.
struct Psi0Table {
  BurgersLattice lattice = BurgersLattice::cubic();
  double bmax = 0;
  Icosphere grid;
  std::vector<Vector3d> burgers;
  std::vector<double> values;

  std::size_t n_dirs() const { return grid.vertices.size(); }
  double at(std::size_t bi, std::size_t ti) const { return values[bi * n_dirs() + ti]; }
  // index in `burgers`, or -1
  int burgers_index(const Vector3d& b) const;
};

Psi0Table make_psi0_table(const BurgersLattice& lattice, double bmax, const Icosphere& grid,
                          const std::function<double(const Vector3d&, const Vector3d&)>& psi);
Psi0Table build_psi0_table(const ElasticTensord& C, const BurgersLattice& lattice, double bmax,
                           int level, int n_theta = 256, int threads = 1);

struct SplitMove {
  enum class Kind { None, Burgers, Direction };
  Kind kind = Kind::None;
  int a = -1, b = -1;  // Burgers indices (b1, b2) or direction indices (t1, t2)
  double l1 = 0, l2 = 0;
};

struct EntryChange {
  int iteration;
  double value;
  SplitMove move;
};

struct RelaxOptions {
  int max_iter = 200;
  double tol = 1e-10;
  int threads = 1;
};

class EnvelopeTable {
 public:
  Psi0Table psi0;
  std::vector<double> values;
  std::vector<std::vector<EntryChange>> history;  // per entry, increasing iteration
  int iterations = 0;
  bool converged = false;
  double last_change = 0;

  std::size_t n_dirs() const { return psi0.n_dirs(); }
  std::size_t index(std::size_t bi, std::size_t ti) const { return bi * n_dirs() + ti; }
  double at(std::size_t bi, std::size_t ti) const { return values[index(bi, ti)]; }
  // barycentric interpolation on the grid face containing t
  double interpolate(const Vector3d& b, const Vector3d& t) const;
  int certificate_depth(std::size_t bi, std::size_t ti) const;
};

EnvelopeTable relax_envelope(const Psi0Table& psi0, const RelaxOptions& opt = {});

struct GrowthFit {
  double c0 = 0, c1 = 0;
};

// c0 |b| <= value <= c1 |b| over nonzero entries; SolverError if c0 <= 0.
GrowthFit verify_growth(const EnvelopeTable& table);

struct Microstructure {
  PolyhedralMeasure network;
  std::vector<int> psi0_entry;  // table entry per segment
  double energy = 0;            // sum Psi0(b_i, t_i) H^1(gamma_i)
  double table_value = 0;
  int depth = 0;
  double max_radius = 0;        // largest node distance from the ball center
  // Frank imbalance at interior nodes; the two terminals must carry exactly +-b
  double frank_residual = 0;
};

// Network from -t/2 to t/2 realizing the recorded split tree; direction
// splits become zigzags repeated `repeats` times.
Microstructure expand_certificate(const EnvelopeTable& table, std::size_t bi, std::size_t ti,
                                  int repeats = 2, std::size_t max_segments = 2000000);

}  // namespace linetension
