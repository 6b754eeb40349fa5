#include "linetension/envelope.hpp"

#include "linetension/parallel.hpp"
#include "linetension/selfenergy.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <numeric>

namespace linetension {

// ---------------------------------------------------------------- grid

Icosphere icosphere(int level) {
  if (level < 0 || level > 6) throw ValidationError("icosphere level must lie in [0, 6]");
  const double p = (1 + std::sqrt(5.0)) / 2;
  Icosphere s;
  s.vertices = {{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                {0, -1, -p}, {0, 1, -p}, {p, 0, -1},  {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
  for (auto& v : s.vertices) v.normalize();
  s.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      const int id = static_cast<int>(s.vertices.size());
      s.vertices.push_back((s.vertices[a] + s.vertices[b]).normalized());
      mid.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(4 * s.faces.size());
    for (const auto& f : s.faces) {
      const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    s.faces = std::move(next);
  }
  s.level = level;
  return s;
}

std::vector<std::vector<DirectionSplit>> direction_splits(const std::vector<Vector3d>& dirs, double tol) {
  const int n = static_cast<int>(dirs.size());
  std::vector<std::vector<DirectionSplit>> out(n);
  for (int ti = 0; ti < n; ++ti) {
    const Vector3d& t = dirs[ti];
    Vector3d u = t.unitOrthogonal();
    Vector3d v = t.cross(u);
    struct Cand {
      double psi;  // plane angle in [0, pi)
      int side;
      int idx;
      double c, s;  // in-plane coordinates (along t, across)
    };
    std::vector<Cand> cand;
    for (int i = 0; i < n; ++i) {
      if (i == ti) continue;
      const Vector3d& d = dirs[i];
      const double c = d.dot(t);
      if (c <= 1e-12) continue;
      const Vector3d perp = d - c * t;
      const double s = perp.norm();
      if (s < 1e-12) continue;
      double psi = std::atan2(perp.dot(v), perp.dot(u));
      int side = 1;
      if (psi < 0) {
        psi += kPi;
        side = -1;
      }
      if (psi >= kPi) {
        psi -= kPi;
        side = -side;
      }
      cand.push_back({psi, side, i, c, s});
    }
    std::sort(cand.begin(), cand.end(), [](const Cand& a, const Cand& b) {
      return a.psi != b.psi ? a.psi < b.psi : a.idx < b.idx;
    });
    // group equal plane angles; merge the wrap-around group at 0 / pi
    std::vector<std::vector<Cand>> groups;
    for (const auto& c : cand) {
      if (groups.empty() || c.psi - groups.back().back().psi > 1e-9)
        groups.emplace_back();
      groups.back().push_back(c);
    }
    if (groups.size() > 1 && groups.front().front().psi + kPi - groups.back().back().psi <= 1e-9) {
      for (auto c : groups.back()) {
        c.side = -c.side;
        groups.front().push_back(c);
      }
      groups.pop_back();
    }
    for (const auto& g : groups)
      for (const auto& a : g) {
        if (a.side != 1) continue;
        for (const auto& b : g) {
          if (b.side != -1) continue;
          const double den = a.c * b.s + b.c * a.s;
          const double l1 = b.s / den, l2 = a.s / den;
          if ((l1 * dirs[a.idx] + l2 * dirs[b.idx] - t).norm() >= tol) continue;
          out[ti].push_back({a.idx, b.idx, l1, l2});
        }
      }
    std::sort(out[ti].begin(), out[ti].end(), [](const DirectionSplit& x, const DirectionSplit& y) {
      return x.t1 != y.t1 ? x.t1 < y.t1 : x.t2 < y.t2;
    });
  }
  return out;
}

// ---------------------------------------------------------------- psi0 table

int Psi0Table::burgers_index(const Vector3d& b) const {
  for (std::size_t i = 0; i < burgers.size(); ++i)
    if ((burgers[i] - b).norm() <= 1e-9 * (1 + b.norm())) return static_cast<int>(i);
  return -1;
}

Psi0Table make_psi0_table(const BurgersLattice& lattice, double bmax, const Icosphere& grid,
                          const std::function<double(const Vector3d&, const Vector3d&)>& psi) {
  if (!(bmax >= 1)) throw ValidationError("bmax must be at least 1");
  Psi0Table t;
  t.lattice = lattice;
  t.bmax = bmax;
  t.grid = grid;
  t.burgers = lattice.ball(bmax);
  t.values.resize(t.burgers.size() * grid.vertices.size());
  for (std::size_t bi = 0; bi < t.burgers.size(); ++bi)
    for (std::size_t ti = 0; ti < grid.vertices.size(); ++ti) {
      const double v = psi(t.burgers[bi], grid.vertices[ti]);
      if (!(v >= 0) || !std::isfinite(v)) throw ValidationError("psi0 must be finite and nonnegative");
      t.values[bi * grid.vertices.size() + ti] = v;
    }
  for (std::size_t ti = 0; ti < grid.vertices.size(); ++ti)
    if (t.values[ti] != 0) throw ValidationError("psi0(0, t) must vanish");
  return t;
}

Psi0Table build_psi0_table(const ElasticTensord& C, const BurgersLattice& lattice, double bmax,
                           int level, int n_theta, int threads) {
  const Icosphere grid = icosphere(level);
  std::vector<Matrix3d> K(grid.vertices.size());
  parallel_for(K.size(), threads,
               [&](std::size_t i) { K[i] = self_energy_matrix(C, grid.vertices[i], n_theta); });
  return make_psi0_table(lattice, bmax, grid, [&](const Vector3d& b, const Vector3d& t) {
    for (std::size_t i = 0; i < grid.vertices.size(); ++i)
      if (grid.vertices[i] == t) return b.squaredNorm() == 0 ? 0.0 : std::max(0.0, b.dot(K[i] * b));
    throw SolverError("direction not on grid");
  });
}

// ---------------------------------------------------------------- relaxation

EnvelopeTable relax_envelope(const Psi0Table& psi0, const RelaxOptions& opt) {
  const std::size_t nb = psi0.burgers.size(), nd = psi0.n_dirs();
  EnvelopeTable tab;
  tab.psi0 = psi0;
  tab.values = psi0.values;
  tab.history.resize(nb * nd);
  for (std::size_t e = 0; e < nb * nd; ++e) tab.history[e].push_back({0, psi0.values[e], {}});

  // diff[i * nb + j] = index of b_i - b_j in the ball
  std::vector<int> diff(nb * nb, -1);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      diff[i * nb + j] = psi0.burgers_index(psi0.burgers[i] - psi0.burgers[j]);
  const auto splits = direction_splits(psi0.grid.vertices);

  std::vector<double> next(tab.values.size());
  std::vector<SplitMove> moves(tab.values.size());
  for (int it = 1; it <= opt.max_iter; ++it) {
    const std::vector<double>& old = tab.values;
    parallel_for(nb, opt.threads, [&](std::size_t bi) {
      for (std::size_t ti = 0; ti < nd; ++ti) {
        const std::size_t e = bi * nd + ti;
        double best = old[e];
        SplitMove mv;
        auto offer = [&](double cand, const SplitMove& m) {
          if (cand < best * (1 - 1e-13)) {
            best = cand;
            mv = m;
          }
        };
        if (bi != 0) {
          for (std::size_t bj = 1; bj < nb; ++bj) {
            const int bk = diff[bi * nb + bj];
            if (bk <= 0 || bj == bi) continue;
            offer(old[bj * nd + ti] + old[bk * nd + ti],
                  {SplitMove::Kind::Burgers, static_cast<int>(bj), bk, 0, 0});
          }
          for (const auto& s : splits[ti])
            offer(s.l1 * old[bi * nd + s.t1] + s.l2 * old[bi * nd + s.t2],
                  {SplitMove::Kind::Direction, s.t1, s.t2, s.l1, s.l2});
        }
        next[e] = best;
        moves[e] = mv;
      }
    });
    double change = 0;
    for (std::size_t e = 0; e < next.size(); ++e) {
      if (next[e] > tab.values[e]) throw SolverError("non-monotone envelope update");
      if (moves[e].kind != SplitMove::Kind::None) {
        change = std::max(change, tab.values[e] - next[e]);
        tab.history[e].push_back({it, next[e], moves[e]});
      }
    }
    tab.values = next;
    tab.iterations = it;
    tab.last_change = change;
    if (change < opt.tol) {
      tab.converged = true;
      break;
    }
  }
  return tab;
}

double EnvelopeTable::interpolate(const Vector3d& b, const Vector3d& t_in) const {
  const int bi = psi0.burgers_index(b);
  if (bi < 0) throw ValidationError("Burgers vector outside the envelope table");
  const Vector3d t = t_in.normalized();
  const auto& v = psi0.grid.vertices;
  for (const auto& f : psi0.grid.faces) {
    Matrix3d m;
    m << v[f[0]], v[f[1]], v[f[2]];
    const Vector3d lam = m.partialPivLu().solve(t);
    if (lam.minCoeff() < -1e-12) continue;
    const Vector3d w = lam / lam.sum();
    return w(0) * at(bi, f[0]) + w(1) * at(bi, f[1]) + w(2) * at(bi, f[2]);
  }
  throw SolverError("direction outside the interpolation range");
}

namespace {

const EntryChange& change_before(const std::vector<EntryChange>& h, int bound) {
  for (auto it = h.rbegin(); it != h.rend(); ++it)
    if (it->iteration < bound) return *it;
  throw SolverError("cycle or corruption in certificate history");
}

int depth_of(const EnvelopeTable& t, std::size_t bi, std::size_t ti, int bound) {
  const auto& c = change_before(t.history[t.index(bi, ti)], bound);
  switch (c.move.kind) {
    case SplitMove::Kind::None:
      return 0;
    case SplitMove::Kind::Burgers:
      return 1 + std::max(depth_of(t, c.move.a, ti, c.iteration), depth_of(t, c.move.b, ti, c.iteration));
    case SplitMove::Kind::Direction:
      return 1 + std::max(depth_of(t, bi, c.move.a, c.iteration), depth_of(t, bi, c.move.b, c.iteration));
  }
  return 0;
}

}  // namespace

int EnvelopeTable::certificate_depth(std::size_t bi, std::size_t ti) const {
  return depth_of(*this, bi, ti, INT_MAX);
}

GrowthFit verify_growth(const EnvelopeTable& table) {
  GrowthFit g{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t bi = 0; bi < table.psi0.burgers.size(); ++bi) {
    const double n = table.psi0.burgers[bi].norm();
    if (n == 0) continue;
    for (std::size_t ti = 0; ti < table.n_dirs(); ++ti) {
      g.c0 = std::min(g.c0, table.at(bi, ti) / n);
      g.c1 = std::max(g.c1, table.at(bi, ti) / n);
    }
  }
  if (!(g.c0 > 0)) throw SolverError("envelope growth violated: c0 <= 0");
  return g;
}

// ---------------------------------------------------------------- certificates

Microstructure expand_certificate(const EnvelopeTable& table, std::size_t bi, std::size_t ti,
                                  int repeats, std::size_t max_segments) {
  if (repeats < 1) throw ValidationError("repeats must be positive");
  const auto& dirs = table.psi0.grid.vertices;
  Microstructure ms;
  ms.network = PolyhedralMeasure(table.psi0.lattice);
  ms.table_value = table.at(bi, ti);
  ms.depth = table.certificate_depth(bi, ti);
  std::vector<double> energies;

  std::function<void(std::size_t, std::size_t, int, const Vector3d&, const Vector3d&)> expand =
      [&](std::size_t b, std::size_t t, int bound, const Vector3d& p, const Vector3d& q) {
        const auto& c = change_before(table.history[table.index(b, t)], bound);
        switch (c.move.kind) {
          case SplitMove::Kind::None: {
            if (ms.network.size() >= max_segments) throw SolverError("certificate too large to expand");
            ms.network.add({p, q, table.psi0.burgers[b]});
            ms.psi0_entry.push_back(static_cast<int>(table.index(b, t)));
            energies.push_back(table.psi0.at(b, t) * (q - p).norm());
            break;
          }
          case SplitMove::Kind::Burgers:
            expand(c.move.a, t, c.iteration, p, q);
            expand(c.move.b, t, c.iteration, p, q);
            break;
          case SplitMove::Kind::Direction: {
            const double step = (q - p).norm() / repeats;
            Vector3d x = p;
            for (int r = 0; r < repeats; ++r) {
              const Vector3d y = x + c.move.l1 * step * dirs[c.move.a];
              const Vector3d z = r == repeats - 1 ? q : Vector3d(y + c.move.l2 * step * dirs[c.move.b]);
              expand(b, c.move.a, c.iteration, x, y);
              expand(b, c.move.b, c.iteration, y, z);
              x = z;
            }
            break;
          }
        }
      };
  if (table.psi0.burgers[bi].norm() > 0) expand(bi, ti, INT_MAX, -dirs[ti] / 2, dirs[ti] / 2);
  ms.energy = pairwise_sum(energies);
  for (const auto& s : ms.network.segments())
    ms.max_radius = std::max({ms.max_radius, s.start.norm(), s.end.norm()});
  if (!ms.network.empty()) {
    const NodeGraph g = build_nodes(ms.network);
    const Vector3d b = table.psi0.burgers[bi], p = -dirs[ti] / 2, q = dirs[ti] / 2;
    const double tol = ms.network.node_tolerance();
    for (std::size_t n = 0; n < g.positions.size(); ++n) {
      Vector3d r = g.imbalance(ms.network, n);
      if ((g.positions[n] - p).norm() <= tol) r -= b;
      else if ((g.positions[n] - q).norm() <= tol) r += b;
      ms.frank_residual = std::max(ms.frank_residual, r.norm());
    }
  }
  return ms;
}

}  // namespace linetension
