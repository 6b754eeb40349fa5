#include "linetension/dislocations.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace linetension {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <typename F>
double gk(F&& f, double a, double b, double tol = 1e-13) {
  if (!(b > a)) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, tol);
}

}  // namespace

// ---------------------------------------------------------------- lattice

BurgersLattice::BurgersLattice(const Matrix3d& generators, double tol) : g_(generators) {
  if (!g_.allFinite()) throw ValidationError("lattice generators must be finite");
  const double scale = g_.col(0).norm() * g_.col(1).norm() * g_.col(2).norm();
  if (!(std::abs(g_.determinant()) > 1e-10 * scale))
    throw ValidationError("lattice generators are linearly dependent");
  inv_ = g_.inverse();
  const double m = shortest_norm();
  if (std::abs(m - 1.0) > tol)
    throw ValidationError("lattice is not normalized: shortest nonzero vector has length " +
                          std::to_string(m));
}

BurgersLattice BurgersLattice::cubic() { return BurgersLattice(Matrix3d::Identity()); }

std::optional<Eigen::Vector3i> BurgersLattice::coordinates(const Vector3d& b, double tol) const {
  if (!b.allFinite()) return std::nullopt;
  const Vector3d c = inv_ * b;
  Eigen::Vector3i n;
  for (int i = 0; i < 3; ++i) {
    const double r = std::round(c(i));
    if (std::abs(c(i) - r) > tol * (1 + std::abs(c(i)))) return std::nullopt;
    n(i) = static_cast<int>(r);
  }
  return n;
}

std::vector<Vector3d> BurgersLattice::ball(double bmax) const {
  const double smin =
      std::sqrt(Eigen::SelfAdjointEigenSolver<Matrix3d>(g_.transpose() * g_).eigenvalues()(0));
  const int n = static_cast<int>(std::floor(bmax / smin + 1e-9));
  struct Entry {
    double norm;
    Eigen::Vector3i c;
    Vector3d b;
  };
  std::vector<Entry> out;
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      for (int k = -n; k <= n; ++k) {
        const Eigen::Vector3i c(i, j, k);
        const Vector3d b = g_ * c.cast<double>();
        if (b.norm() <= bmax * (1 + 1e-12)) out.push_back({b.norm(), c, b});
      }
  std::sort(out.begin(), out.end(), [](const Entry& x, const Entry& y) {
    if (std::abs(x.norm - y.norm) > 1e-12) return x.norm < y.norm;
    return std::lexicographical_compare(x.c.data(), x.c.data() + 3, y.c.data(), y.c.data() + 3);
  });
  std::vector<Vector3d> res;
  res.reserve(out.size());
  for (auto& e : out) res.push_back(e.b);
  return res;
}

double BurgersLattice::shortest_norm() const {
  const double guess = std::min({g_.col(0).norm(), g_.col(1).norm(), g_.col(2).norm()});
  double best = kInf;
  for (const auto& b : ball(guess))
    if (b.norm() > 0) best = std::min(best, b.norm());
  return best;
}

// ---------------------------------------------------------------- measure

PolyhedralMeasure::PolyhedralMeasure(BurgersLattice lattice, std::vector<Segment> segments,
                                     double node_tolerance)
    : lattice_(std::move(lattice)), tol_(node_tolerance) {
  if (node_tolerance < 0) throw ValidationError("node tolerance must be nonnegative");
  for (const auto& s : segments) add(s);
}

void PolyhedralMeasure::add(const Segment& s) {
  if (!s.start.allFinite() || !s.end.allFinite() || !s.burgers.allFinite())
    throw ValidationError("segment with non-finite data");
  if (!(s.length() > 0)) throw ValidationError("segment of zero length");
  if (!lattice_.contains(s.burgers)) throw ValidationError("Burgers vector is not a lattice member");
  segs_.push_back(s);
}

double PolyhedralMeasure::bounding_diameter() const {
  if (segs_.empty()) return 0;
  Vector3d lo = segs_[0].start, hi = lo;
  for (const auto& s : segs_) {
    lo = lo.cwiseMin(s.start).cwiseMin(s.end);
    hi = hi.cwiseMax(s.start).cwiseMax(s.end);
  }
  return (hi - lo).norm();
}

double PolyhedralMeasure::node_tolerance() const {
  if (tol_ > 0) return tol_;
  return std::max(1e-9 * bounding_diameter(), 1e-14);
}

PolyhedralMeasure PolyhedralMeasure::transformed(const Matrix3d& rotation, const Vector3d& shift) const {
  PolyhedralMeasure out(BurgersLattice(rotation * lattice_.generators()), {}, tol_);
  for (const auto& s : segs_)
    out.add({rotation * s.start + shift, rotation * s.end + shift, rotation * s.burgers});
  return out;
}

PolyhedralMeasure PolyhedralMeasure::scaled_burgers(double factor) const {
  PolyhedralMeasure out(lattice_, {}, tol_);
  for (const auto& s : segs_) out.add({s.start, s.end, factor * s.burgers});
  return out;
}

// ---------------------------------------------------------------- nodes

NodeGraph build_nodes(const PolyhedralMeasure& m) {
  const double tol = m.node_tolerance();
  const auto& segs = m.segments();
  const std::size_t n = 2 * segs.size();
  auto endpoint = [&](std::size_t k) -> const Vector3d& {
    return k % 2 == 0 ? segs[k / 2].start : segs[k / 2].end;
  };

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return endpoint(a)(0) < endpoint(b)(0); });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vector3d& p = endpoint(order[i]);
      const Vector3d& q = endpoint(order[j]);
      if (q(0) - p(0) > tol) break;
      if ((p - q).norm() <= tol) parent[find(order[i])] = find(order[j]);
    }

  NodeGraph g;
  g.start_node.resize(segs.size());
  g.end_node.resize(segs.size());
  std::vector<std::size_t> id(n, static_cast<std::size_t>(-1));
  std::vector<int> count;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t r = find(k);
    if (id[r] == static_cast<std::size_t>(-1)) {
      id[r] = g.positions.size();
      g.positions.push_back(Vector3d::Zero());
      g.incident.emplace_back();
      count.push_back(0);
    }
    const std::size_t node = id[r];
    g.positions[node] += endpoint(k);
    ++count[node];
    g.incident[node].push_back({k / 2, k % 2 == 0});
    (k % 2 == 0 ? g.start_node : g.end_node)[k / 2] = node;
  }
  for (std::size_t i = 0; i < g.positions.size(); ++i) g.positions[i] /= count[i];
  return g;
}

Vector3d NodeGraph::imbalance(const PolyhedralMeasure& m, std::size_t node) const {
  Vector3d d = Vector3d::Zero();
  for (const auto& inc : incident[node])
    d += inc.outgoing ? m.segments()[inc.segment].burgers : Vector3d(-m.segments()[inc.segment].burgers);
  return d;
}

double frank_rule_residual(const PolyhedralMeasure& m) {
  const NodeGraph g = build_nodes(m);
  double worst = 0;
  for (std::size_t i = 0; i < g.positions.size(); ++i) worst = std::max(worst, g.imbalance(m, i).norm());
  return worst;
}

// ---------------------------------------------------------------- domains

double inside_distance(const Domain& d, const Vector3d& x) {
  struct V {
    const Vector3d& x;
    double operator()(const WholeSpace&) const { return kInf; }
    double operator()(const HalfSpace& h) const { return -h.normal.normalized().dot(x - h.point); }
    double operator()(const Ball& b) const { return b.radius - (x - b.center).norm(); }
    double operator()(const Box& b) const { return std::min((x - b.lo).minCoeff(), (b.hi - x).minCoeff()); }
  };
  return std::visit(V{x}, d);
}

Vector3d boundary_normal(const Domain& d, const Vector3d& x) {
  struct V {
    const Vector3d& x;
    Vector3d operator()(const WholeSpace&) const { throw ValidationError("whole space has no boundary"); }
    Vector3d operator()(const HalfSpace& h) const { return h.normal.normalized(); }
    Vector3d operator()(const Ball& b) const {
      const Vector3d r = x - b.center;
      if (r.norm() == 0) throw ValidationError("normal requested at the ball center");
      return r.normalized();
    }
    Vector3d operator()(const Box& b) const {
      double best = kInf;
      Vector3d n = Vector3d::Zero();
      for (int i = 0; i < 3; ++i) {
        if (std::abs(x(i) - b.lo(i)) < best) {
          best = std::abs(x(i) - b.lo(i));
          n = -Vector3d::Unit(i);
        }
        if (std::abs(b.hi(i) - x(i)) < best) {
          best = std::abs(b.hi(i) - x(i));
          n = Vector3d::Unit(i);
        }
      }
      return n;
    }
  };
  return std::visit(V{x}, d);
}

Domain transformed(const Domain& d, const Matrix3d& rotation, const Vector3d& shift) {
  struct V {
    const Matrix3d& r;
    const Vector3d& s;
    Domain operator()(const WholeSpace& w) const { return w; }
    Domain operator()(const HalfSpace& h) const { return HalfSpace{r * h.point + s, r * h.normal}; }
    Domain operator()(const Ball& b) const { return Ball{r * b.center + s, b.radius}; }
    Domain operator()(const Box& b) const {
      if ((r - Matrix3d::Identity()).norm() > 1e-14)
        throw ValidationError("boxes stay axis-aligned; only translations are supported");
      return Box{b.lo + s, b.hi + s};
    }
  };
  return std::visit(V{rotation, shift}, d);
}

double volume(const Box& box) { return (box.hi - box.lo).prod(); }

// ---------------------------------------------------------------- geometry

double point_segment_distance(const Vector3d& x, const Vector3d& a, const Vector3d& b) {
  const Vector3d d = b - a;
  const double len2 = d.squaredNorm();
  double s = len2 > 0 ? (x - a).dot(d) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  return (x - a - s * d).norm();
}

double segment_distance(const Vector3d& p0, const Vector3d& p1, const Vector3d& q0,
                        const Vector3d& q1) {
  const Vector3d d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  const double c = d1.dot(r), b = d1.dot(d2);
  const double denom = a * e - b * b;
  double s = 0, t = 0;
  if (denom > 1e-14 * a * e) s = std::clamp((b * f - c * e) / denom, 0.0, 1.0);
  t = (b * s + f) / e;
  if (t < 0) {
    t = 0;
    s = std::clamp(-c / a, 0.0, 1.0);
  } else if (t > 1) {
    t = 1;
    s = std::clamp((b - c) / a, 0.0, 1.0);
  }
  double dist = (p0 + s * d1 - q0 - t * d2).norm();
  // parallel case: the clamped pair above may miss the closest endpoint pair
  dist = std::min({dist, point_segment_distance(p0, q0, q1), point_segment_distance(p1, q0, q1),
                   point_segment_distance(q0, p0, p1), point_segment_distance(q1, p0, p1)});
  return dist;
}

namespace {

double angle_between(const Vector3d& u, const Vector3d& v) {
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

}  // namespace

DiluteReport check_dilute(const PolyhedralMeasure& m, const DiluteParams& p, const Domain& domain) {
  if (!(p.h > 0) || !(p.alpha > 0) || !(p.alpha < 1))
    throw ValidationError("dilute parameters need h > 0 and 0 < alpha < 1");
  DiluteReport rep;
  rep.min_length = rep.min_separation = rep.min_angle = rep.min_boundary_gap = kInf;
  auto fail = [&](char clause, std::string what, std::vector<std::size_t> ids) {
    if (!rep.ok) return;
    rep.ok = false;
    rep.clause = clause;
    rep.first_violation = std::string("(") + clause + ") " + what;
    rep.segments = std::move(ids);
  };
  const auto& segs = m.segments();
  const double rel = 1e-12;

  for (std::size_t j = 0; j < segs.size(); ++j) {
    rep.min_length = std::min(rep.min_length, segs[j].length());
    if (segs[j].length() < p.h * (1 - rel)) fail('a', "segment shorter than h", {j});
  }

  const NodeGraph g = build_nodes(m);
  auto shares_node = [&](std::size_t i, std::size_t j) {
    return g.start_node[i] == g.start_node[j] || g.start_node[i] == g.end_node[j] ||
           g.end_node[i] == g.start_node[j] || g.end_node[i] == g.end_node[j];
  };
  const double tol = m.node_tolerance();
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      if (shares_node(i, j)) continue;
      const double d = segment_distance(segs[i].start, segs[i].end, segs[j].start, segs[j].end);
      rep.min_separation = std::min(rep.min_separation, d);
      if (d <= tol)
        fail('c', "segments intersect away from a shared endpoint", {i, j});
      else if (d < p.alpha * p.h * (1 - rel))
        fail('b', "disjoint segments closer than alpha h", {i, j});
    }
  for (std::size_t n = 0; n < g.positions.size(); ++n) {
    const auto& inc = g.incident[n];
    for (std::size_t a = 0; a < inc.size(); ++a)
      for (std::size_t b = a + 1; b < inc.size(); ++b) {
        const auto& sa = segs[inc[a].segment];
        const auto& sb = segs[inc[b].segment];
        const Vector3d ua = inc[a].outgoing ? sa.tangent() : Vector3d(-sa.tangent());
        const Vector3d ub = inc[b].outgoing ? sb.tangent() : Vector3d(-sb.tangent());
        const double ang = angle_between(ua, ub);
        rep.min_angle = std::min(rep.min_angle, ang);
        if (ang < p.alpha * (1 - rel))
          fail('c', "segments meet at an angle below alpha", {inc[a].segment, inc[b].segment});
      }
  }

  if (!std::holds_alternative<WholeSpace>(domain)) {
    for (std::size_t j = 0; j < segs.size(); ++j) {
      const double d0 = inside_distance(domain, segs[j].start);
      const double d1 = inside_distance(domain, segs[j].end);
      const bool on0 = std::abs(d0) <= tol, on1 = std::abs(d1) <= tol;
      if (d0 < -tol || d1 < -tol) {
        fail('d', "segment leaves the domain", {j});
      } else if (on0 && on1) {
        fail('d', "segment meets the boundary in more than one point", {j});
      } else if (on0 || on1) {
        const Vector3d x = on0 ? segs[j].start : segs[j].end;
        const double incidence = std::asin(std::min(1.0, std::abs(segs[j].tangent().dot(boundary_normal(domain, x)))));
        rep.min_angle = std::min(rep.min_angle, incidence);
        if (incidence < p.alpha * (1 - rel)) fail('d', "boundary incidence angle below alpha", {j});
      } else {
        const double gap = std::min(d0, d1);
        rep.min_boundary_gap = std::min(rep.min_boundary_gap, gap);
        if (gap < p.alpha * p.h * (1 - rel)) fail('d', "interior segment closer than alpha h to the boundary", {j});
      }
    }
  }
  return rep;
}

double weighted_length(const PolyhedralMeasure& m, int power) {
  if (power != 1 && power != 2) throw ValidationError("weighted_length power must be 1 or 2");
  std::vector<double> terms;
  for (const auto& s : m.segments()) terms.push_back(std::pow(s.burgers.norm(), power) * s.length());
  return pairwise_sum(terms);
}

Matrix3d total_measure(const PolyhedralMeasure& m) {
  Matrix3d t = Matrix3d::Zero();
  for (const auto& s : m.segments()) t += s.burgers * (s.end - s.start).transpose();
  return t;
}

// ---------------------------------------------------------------- schedules

namespace {
double log_eps(double eps) {
  if (!(eps > 0 && eps < 1)) throw ValidationError("eps must lie in (0, 1)");
  return -std::log(eps);
}
}  // namespace

double ScaleSchedule::h(double eps) const { return h_log(log_eps(eps)); }
double ScaleSchedule::alpha(double eps) const { return alpha_log(log_eps(eps)); }
double ScaleSchedule::h_log(double L) const { return H * std::pow(L, -a); }
double ScaleSchedule::alpha_log(double L) const { return A * std::pow(L, -c); }

ScheduleReport schedule_admissible(const ScaleSchedule& s) {
  ScheduleReport r;
  r.exponent_sum = 4 * s.c + 6 * s.a;
  r.margin = 1 - r.exponent_sum;
  if (!(s.H > 0) || !(s.A > 0)) {
    r.reason = "amplitudes H, A must be positive";
    return r;
  }
  if (!(s.a > 0) || !(s.c > 0)) {
    r.reason = "exponents a, c must be positive so that h_eps, alpha_eps -> 0";
    return r;
  }
  const double k = std::pow(s.A, 4) * std::pow(s.H, 6);
  const double eq_tol = 1e-12;
  double l_strong = 0;
  if (r.exponent_sum < 1 - eq_tol) {
    l_strong = std::pow(k, -1.0 / r.margin);
  } else if (std::abs(r.margin) <= eq_tol) {
    if (!(k > 1)) {
      r.reason = "4c + 6a = 1 requires A^4 H^6 > 1";
      return r;
    }
  } else {
    r.reason = "4c + 6a > 1: alpha^4 h^6 |log eps| -> 0";
    return r;
  }
  r.admissible = true;
  r.reason = "ok";
  const double l_decay = std::exp(1 + std::log(s.A * s.H) / (s.a + s.c));
  const double l_alpha = std::pow(s.A, 1 / s.c);
  auto to_eps = [](double l) { return std::exp(-l); };
  r.strong_threshold = to_eps(l_strong);
  r.decay_threshold = to_eps(l_decay);
  r.alpha_threshold = to_eps(l_alpha);
  r.log_threshold = std::max({l_strong, l_decay, l_alpha, 1e-12});
  r.threshold = to_eps(r.log_threshold);
  return r;
}

// ---------------------------------------------------------------- extension

ExtensionResult extend_by_reflection(const PolyhedralMeasure& m, const HalfSpace& plane_in,
                                     double h, double min_angle) {
  if (!(h > 0)) throw ValidationError("connector length h must be positive");
  const HalfSpace plane{plane_in.point, plane_in.normal.normalized()};
  const Domain dom = plane;
  const double tol = m.node_tolerance();

  // clip to the closed half-space
  PolyhedralMeasure clipped(m.lattice(), {}, m.node_tolerance());
  for (const auto& s : m.segments()) {
    const double d0 = inside_distance(dom, s.start), d1 = inside_distance(dom, s.end);
    if (d0 < -tol && d1 < -tol) continue;
    if (std::abs(d0) <= tol && std::abs(d1) <= tol)
      throw ValidationError("segment lies in the boundary plane (tangential crossing)");
    Segment c = s;
    if (d0 < -tol) c.start = s.start + (s.end - s.start) * (d0 / (d0 - d1));
    if (d1 < -tol) c.end = s.start + (s.end - s.start) * (d0 / (d0 - d1));
    if (c.length() <= tol) continue;
    clipped.add(c);
  }

  auto on_plane = [&](const Vector3d& x) { return std::abs(inside_distance(dom, x)) <= tol; };
  {
    const NodeGraph g = build_nodes(clipped);
    double bscale = 1;
    for (const auto& s : clipped.segments()) bscale = std::max(bscale, s.burgers.norm());
    for (std::size_t i = 0; i < g.positions.size(); ++i)
      if (!on_plane(g.positions[i]) && g.imbalance(clipped, i).norm() > 1e-9 * bscale)
        throw ValidationError("unbalanced node inside the domain");
  }

  ExtensionResult res{clipped, 1, 0, 0};
  auto mirror = [&](const Vector3d& x) -> Vector3d {
    return x - 2 * plane.normal * plane.normal.dot(x - plane.point);
  };
  std::vector<Segment> added;
  for (const auto& s : clipped.segments()) {
    const bool on0 = on_plane(s.start), on1 = on_plane(s.end);
    if (!on0 && !on1) continue;
    const double incidence = std::asin(std::min(1.0, std::abs(s.tangent().dot(plane.normal))));
    if (incidence < min_angle) throw ValidationError("tangential boundary crossing");
    Segment r{mirror(s.end), mirror(s.start), s.burgers};
    if (on0) r.end = s.start;
    if (on1) r.start = s.end;
    added.push_back(r);
  }
  res.reflected = added.size();
  for (const auto& s : added) res.measure.add(s);

  if (!added.empty()) {
    const NodeGraph g = build_nodes(res.measure);
    std::vector<std::pair<Vector3d, Vector3d>> open;  // position, imbalance
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
      const Vector3d d = g.imbalance(res.measure, i);
      if (d.norm() > 1e-9 && !on_plane(g.positions[i])) open.emplace_back(g.positions[i], d);
    }
    if (!open.empty()) {
      double top = -kInf;
      Vector3d mean = Vector3d::Zero();
      for (auto& [x, d] : open) {
        top = std::max(top, plane.normal.dot(x + h * plane.normal - plane.point));
        mean += x;
      }
      mean /= static_cast<double>(open.size());
      const Vector3d hub = mean + (top + h - plane.normal.dot(mean - plane.point)) * plane.normal;
      for (auto& [x, d] : open) {
        const Vector3d leg = x + h * plane.normal;
        res.measure.add({x, leg, -d});
        res.measure.add({leg, hub, -d});
        res.connectors += 2;
      }
    }
  }
  const double base = weighted_length(clipped, 1);
  res.mass_ratio = base > 0 ? weighted_length(res.measure, 1) / base : 1.0;
  return res;
}

// ---------------------------------------------------------------- mollifier

namespace {

double bump(double s) { return s < 1 ? std::exp(-1 / (1 - s * s)) : 0.0; }

struct MassTable {
  static constexpr int n = 512;
  double norm;
  std::vector<double> cum;  // unnormalized radial integrals of 4 pi r^2 bump
  MassTable() : cum(n + 1, 0.0) {
    auto f = [](double r) { return 4 * kPi * r * r * bump(r); };
    for (int k = 0; k < n; ++k) cum[k + 1] = cum[k] + gk(f, double(k) / n, double(k + 1) / n);
    norm = 1 / cum[n];
  }
};

const MassTable& mass_table() {
  static const MassTable t;
  return t;
}

}  // namespace

Mollifier::Mollifier(double eps) : eps_(eps) {
  if (!(eps > 0) || !std::isfinite(eps)) throw ValidationError("mollifier scale must be positive");
}

double Mollifier::normalization() { return mass_table().norm; }

double Mollifier::profile(double s) { return normalization() * bump(s); }

double Mollifier::enclosed_mass(double s) {
  if (s <= 0) return 0;
  if (s >= 1) return 1;
  const auto& t = mass_table();
  const int k = std::min(MassTable::n - 1, static_cast<int>(s * MassTable::n));
  auto f = [](double r) { return 4 * kPi * r * r * bump(r); };
  return t.norm * (t.cum[k] + gk(f, double(k) / MassTable::n, s));
}

double Mollifier::line_density(double d) {
  d = std::abs(d);
  if (d >= 1) return 0;
  const double w = std::sqrt(1 - d * d);
  return 2 * gk([&](double s) { return profile(std::sqrt(d * d + s * s)); }, 0, w);
}

double Mollifier::operator()(const Vector3d& x) const {
  return profile(x.norm() / eps_) / (eps_ * eps_ * eps_);
}

double Mollifier::segment_integral(const Vector3d& x, const Vector3d& a, const Vector3d& b) const {
  const double len = (b - a).norm();
  const Vector3d u = (b - a) / len;
  const double tau0 = (x - a).dot(u);
  const double d2 = std::max(0.0, (x - a).squaredNorm() - tau0 * tau0);
  const double e2 = eps_ * eps_;
  if (d2 >= e2) return 0;
  const double w = std::sqrt(e2 - d2);
  const double lo = std::max(0.0, tau0 - w), hi = std::min(len, tau0 + w);
  if (!(hi > lo)) return 0;
  const double dn = std::sqrt(d2) / eps_;
  if (lo == tau0 - w && hi == tau0 + w) return line_density(dn) / e2;
  auto f = [&](double s) { return profile(std::sqrt(dn * dn + s * s)); };
  const double s0 = (lo - tau0) / eps_, s1 = (hi - tau0) / eps_;
  double v;
  if (s0 < 0 && s1 > 0)
    v = gk(f, s0, 0) + gk(f, 0, s1);
  else
    v = gk(f, s0, s1);
  return v / e2;
}

Matrix3d mollified_curl_density(const PolyhedralMeasure& m, const Mollifier& phi, const Vector3d& x) {
  Matrix3d out = Matrix3d::Zero();
  for (const auto& s : m.segments()) {
    const double w = phi.segment_integral(x, s.start, s.end);
    if (w != 0) out += w * s.burgers * s.tangent().transpose();
  }
  return out;
}

}  // namespace linetension
