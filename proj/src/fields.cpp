#include "linetension/fields.hpp"

#include "linetension/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

namespace linetension {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <int N>
struct GaussRule {
  std::array<double, N> x, w;  // on [-1, 1]
};

template <int N>
const GaussRule<N>& gauss_rule() {
  static const GaussRule<N> rule = [] {
    using G = boost::math::quadrature::gauss<double, N>;
    const auto& a = G::abscissa();
    const auto& w = G::weights();
    GaussRule<N> r;
    int k = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] == 0) {
        r.x[k] = 0;
        r.w[k++] = w[i];
      } else {
        r.x[k] = -a[i];
        r.w[k++] = w[i];
        r.x[k] = a[i];
        r.w[k++] = w[i];
      }
    }
    return r;
  }();
  return rule;
}

// quintic smoothstep on [0, 1], clamped
double step(double s) {
  if (s <= 0) return 0;
  if (s >= 1) return 1;
  return s * s * s * (10 - 15 * s + 6 * s * s);
}
double step_prime(double s) {
  if (s <= 0 || s >= 1) return 0;
  return 30 * s * s * (1 - s) * (1 - s);
}

struct MassTable {
  static constexpr int n = 2048;
  std::vector<double> m, dm;
  MassTable() : m(n + 1), dm(n + 1) {
    for (int k = 0; k <= n; ++k) {
      const double s = double(k) / n;
      m[k] = Mollifier::enclosed_mass(s);
      dm[k] = 4 * kPi * s * s * Mollifier::profile(s);
    }
  }
};

const MassTable& mass_table() {
  static const MassTable t;
  return t;
}

// integral of M(sqrt(r^2 + tau^2)) / (r^2 + tau^2)^{3/2} over tau in [a, b]
double near_integral(double r, double a, double b) {
  const auto& g = gauss_rule<16>();
  auto part = [&](double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    const double c = (lo + hi) / 2, h = (hi - lo) / 2;
    double s = 0;
    for (int i = 0; i < 16; ++i) {
      const double tau = c + h * g.x[i];
      const double d2 = r * r + tau * tau;
      const double d = std::sqrt(d2);
      double q;
      if (d < 1e-3) {
        // M(s) / s^3 -> 4 pi phi(0) / 3
        q = 4 * kPi * Mollifier::profile(0) / 3;
      } else {
        q = mollifier_mass(d) / (d2 * d);
      }
      s += g.w[i] * q;
    }
    return s * h;
  };
  const double mid = std::clamp(0.0, a, b);
  return part(a, mid) + part(mid, b);
}

}  // namespace

// ---------------------------------------------------------------- kernels

double mollifier_mass(double s) {
  if (s <= 0) return 0;
  if (s >= 1) return 1;
  const auto& t = mass_table();
  const double x = s * MassTable::n;
  const int k = std::min(MassTable::n - 1, static_cast<int>(x));
  const double u = x - k, h = 1.0 / MassTable::n;
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * t.m[k] + (u3 - 2 * u2 + u) * h * t.dm[k] +
         (-2 * u3 + 3 * u2) * t.m[k + 1] + (u3 - u2) * h * t.dm[k + 1];
}

Vector3d segment_velocity(const Vector3d& a, const Vector3d& b, const Vector3d& x) {
  const double len = (b - a).norm();
  if (!(len > 0)) return Vector3d::Zero();
  if (point_segment_distance(x, a, b) <= 1e-13 * len)
    throw ValidationError("kernel field evaluated on the segment");
  const Vector3d r1 = x - a, r2 = x - b;
  const double n1 = r1.norm(), n2 = r2.norm();
  const double den = n1 * n2 * (n1 * n2 + r1.dot(r2));
  if (!(den > 0)) return Vector3d::Zero();  // on the extension of the line
  return r1.cross(r2) * ((n1 + n2) / (4 * kPi * den));
}

Matrix3d segment_kernel_field(const Segment& seg, const Vector3d& x) {
  return seg.burgers * segment_velocity(seg.start, seg.end, x).transpose();
}

Matrix3d segment_mollified_field(const Segment& seg, const Vector3d& x, double eps) {
  if (!(eps > 0)) throw ValidationError("mollification scale must be positive");
  if (seg.burgers.isZero(0)) return Matrix3d::Zero();
  const double len = seg.length();
  const Vector3d t = seg.tangent();
  const Vector3d y = x - seg.start;
  const double xi = y.dot(t);
  const Vector3d p = y - xi * t;
  const double rho = p.norm();
  if (rho >= eps) return segment_kernel_field(seg, x);
  const double w = std::sqrt(eps * eps - rho * rho);
  const double lo = std::max(0.0, xi - w), hi = std::min(len, xi + w);
  if (!(hi > lo)) return segment_kernel_field(seg, x);
  Vector3d u = Vector3d::Zero();
  if (lo > 0) u += segment_velocity(seg.start, seg.point(lo / len), x);
  if (hi < len) u += segment_velocity(seg.point(hi / len), seg.end, x);
  // t x (x - y) = t x p along the whole segment
  const double j = near_integral(rho / eps, (lo - xi) / eps, (hi - xi) / eps) / (eps * eps);
  u += t.cross(p) * (j / (4 * kPi));
  return seg.burgers * u.transpose();
}

Matrix3d KernelField::operator()(const Vector3d& x) const {
  Matrix3d out = Matrix3d::Zero();
  for (const auto& s : source_.segments()) out += segment_kernel_field(s, x);
  return out;
}

Matrix3d KernelField::mollified(const Vector3d& x, double eps) const {
  Matrix3d out = Matrix3d::Zero();
  for (const auto& s : source_.segments()) out += segment_mollified_field(s, x, eps);
  return out;
}

double KernelField::distance(const Vector3d& x) const {
  double d = kInf;
  for (const auto& s : source_.segments())
    d = std::min(d, point_segment_distance(x, s.start, s.end));
  return d;
}

// ---------------------------------------------------------------- loops

namespace {
std::pair<Vector3d, Vector3d> plane_basis(const Vector3d& axis) {
  if (!(axis.norm() > 0)) throw ValidationError("loop axis must be nonzero");
  const Vector3d n = axis.normalized();
  const Vector3d e1 = n.unitOrthogonal();
  return {e1, n.cross(e1)};
}
}  // namespace

ProbeLoop ProbeLoop::circle(const Vector3d& center, const Vector3d& axis, double radius) {
  return ellipse(center, axis, radius, radius, 0);
}

ProbeLoop ProbeLoop::ellipse(const Vector3d& center, const Vector3d& axis, double a, double b,
                             double tilt) {
  if (!(a > 0) || !(b > 0)) throw ValidationError("loop radii must be positive");
  auto [f1, f2] = plane_basis(axis);
  const Vector3d e1 = std::cos(tilt) * f1 + std::sin(tilt) * f2;
  const Vector3d e2 = axis.normalized().cross(e1);
  ProbeLoop l;
  l.point = [=](double s) {
    return Vector3d(center + a * std::cos(2 * kPi * s) * e1 + b * std::sin(2 * kPi * s) * e2);
  };
  l.velocity = [=](double s) {
    return Vector3d(2 * kPi * (-a * std::sin(2 * kPi * s) * e1 + b * std::cos(2 * kPi * s) * e2));
  };
  l.panels = 64;
  return l;
}

ProbeLoop ProbeLoop::polygon(std::vector<Vector3d> v) {
  if (v.size() < 3) throw ValidationError("polygon loop needs at least three vertices");
  const int n = static_cast<int>(v.size());
  ProbeLoop l;
  auto edge = [n](double s) {
    const double x = s * n;
    const int k = std::clamp(static_cast<int>(std::floor(x)), 0, n - 1);
    return std::pair<int, double>(k, x - k);
  };
  l.point = [=](double s) {
    auto [k, u] = edge(s);
    return Vector3d(v[k] + u * (v[(k + 1) % n] - v[k]));
  };
  l.velocity = [=](double s) {
    auto [k, u] = edge(s);
    (void)u;
    return Vector3d(n * (v[(k + 1) % n] - v[k]));
  };
  l.panels = 16 * n;
  return l;
}

ProbeLoop square_probe(const Vector3d& center, const Vector3d& axis, double half_side) {
  auto [e1, e2] = plane_basis(axis);
  const double h = half_side;
  return ProbeLoop::polygon({center + h * (e1 + e2), center + h * (-e1 + e2),
                             center + h * (-e1 - e2), center + h * (e1 - e2)});
}

Vector3d loop_circulation(const std::function<Matrix3d(const Vector3d&)>& field,
                          const ProbeLoop& loop) {
  const auto& g = gauss_rule<10>();
  Vector3d out = Vector3d::Zero();
  const int p = std::max(1, loop.panels);
  for (int k = 0; k < p; ++k) {
    const double c = (k + 0.5) / p, h = 0.5 / p;
    for (int i = 0; i < 10; ++i) {
      const double s = c + h * g.x[i];
      out += g.w[i] * h * (field(loop.point(s)) * loop.velocity(s));
    }
  }
  return out;
}

DecayConstants kernel_decay_constants(const PolyhedralMeasure& m, const Box& box, int n,
                                      int threads) {
  if (n < 1) throw ValidationError("probe grid needs n >= 1");
  DecayConstants out;
  if (m.empty()) return out;
  double mass = 0;
  for (const auto& s : m.segments()) mass += s.burgers.norm() * s.length();
  const KernelField k(m);
  const Vector3d ext = box.hi - box.lo;
  const double floor_dist = 1e-9 * std::max(ext.norm(), m.bounding_diameter());
  const std::size_t total = std::size_t(n) * n * n;
  std::vector<double> c1(total, 0), c2(total, 0);
  std::vector<char> used(total, 0);
  parallel_for(total, threads, [&](std::size_t idx) {
    const int i = idx % n, j = (idx / n) % n, l = idx / (std::size_t(n) * n);
    const Vector3d x = box.lo + Vector3d((i + 0.5) / n * ext(0), (j + 0.5) / n * ext(1),
                                         (l + 0.5) / n * ext(2));
    double d = kInf, lines = 0;
    for (const auto& s : m.segments()) {
      const double di = point_segment_distance(x, s.start, s.end);
      d = std::min(d, di);
      lines += s.burgers.norm() / di;
    }
    if (!(d > floor_dist)) return;
    const double eta = k(x).norm();
    c1[idx] = eta * d * d / mass;
    c2[idx] = lines > 0 ? eta / lines : 0;
    used[idx] = 1;
  });
  for (std::size_t i = 0; i < total; ++i) {
    if (!used[i]) continue;
    out.mass = std::max(out.mass, c1[i]);
    out.lines = std::max(out.lines, c2[i]);
    ++out.probes;
  }
  return out;
}

// ---------------------------------------------------------------- beta

AffineStrain AffineStrain::uniform(const Matrix3d& e) {
  AffineStrain a;
  a.constant = e;
  return a;
}

Matrix3d AffineStrain::operator()(const Vector3d& x) const {
  return constant + x(0) * slope[0] + x(1) * slope[1] + x(2) * slope[2];
}

bool AffineStrain::is_zero() const {
  return constant.isZero(0) && slope[0].isZero(0) && slope[1].isZero(0) && slope[2].isZero(0);
}

double AffineStrain::curl_residual(const Box& box) const {
  const Vector3d c = (box.lo + box.hi) / 2;
  const double r = 0.25 * (box.hi - box.lo).minCoeff();
  const std::array<Vector3d, 4> axes{Vector3d::UnitX(), Vector3d::UnitY(), Vector3d::UnitZ(),
                                     Vector3d(1, 2, 3).normalized()};
  double worst = 0;
  for (const auto& a : axes) {
    const auto loop = ProbeLoop::circle(c, a, r);
    const Vector3d circ = loop_circulation([this](const Vector3d& x) { return (*this)(x); }, loop);
    worst = std::max(worst, circ.norm() / (2 * kPi * r));
  }
  return worst;
}

// ---------------------------------------------------------------- recovery

namespace {

Matrix3d tube_correction(const CoreTube& tb, const Vector3d& x, double eps, double rho_g) {
  const Vector3d y = x - tb.start;
  const double xi = y.dot(tb.tangent);
  const double a0 = tb.s_start, a1 = tb.length - tb.s_end;
  if (xi <= a0 || xi >= a1) return Matrix3d::Zero();
  const Vector3d p = y - xi * tb.tangent;
  const double rho = p.norm();
  if (rho >= rho_g) return Matrix3d::Zero();

  const double sa = step((xi - a0) / tb.ramp), sb = step((a1 - xi) / tb.ramp);
  const double chi_a = sa * sb;
  const double dchi_a = (step_prime((xi - a0) / tb.ramp) * sb - sa * step_prime((a1 - xi) / tb.ramp)) /
                        tb.ramp;
  const double half = rho_g / 2;
  const double chi_r = 1 - step((rho - half) / half);
  const double dchi_r = -step_prime((rho - half) / half) / half;

  const double r2 = rho * rho + eps * eps;
  const double ell = 0.5 * std::log(r2 / (rho_g * rho_g));
  const double dell = rho / r2;

  Vector3d er, et, wv = Vector3d::Zero(), dwv = Vector3d::Zero();
  double z = 0, dz = 0;
  if (rho > 1e-300) {
    er = p / rho;
    et = tb.tangent.cross(er);
    const Vector3d loc = tb.frame.matrix().transpose() * p;
    double th = std::atan2(loc(1), loc(0));
    if (th < 0) th += 2 * kPi;
    const int n = static_cast<int>(tb.w.size());
    const double h = 2 * kPi / n;
    const double xk = th / h;
    const int k = std::min(n - 1, static_cast<int>(xk));
    const int k1 = (k + 1) % n;
    const double u = xk - k, u2 = u * u, u3 = u2 * u;
    wv = (2 * u3 - 3 * u2 + 1) * tb.w[k] + (u3 - 2 * u2 + u) * h * tb.dw[k] +
         (-2 * u3 + 3 * u2) * tb.w[k1] + (u3 - u2) * h * tb.dw[k1];
    dwv = ((6 * u2 - 6 * u) * tb.w[k] + (6 * u2 - 6 * u) * -1 * tb.w[k1]) / h +
          (3 * u2 - 4 * u + 1) * tb.dw[k] + (3 * u2 - 2 * u) * tb.dw[k1];
    z = rho * rho / r2;
    dz = 2 * rho * eps * eps / (r2 * r2);
  } else {
    er = tb.frame.matrix().col(0);
    et = tb.frame.matrix().col(1);
  }
  const Vector3d v = z * wv + ell * tb.g;
  // grad v; Z / rho = rho / r2 stays bounded
  const Matrix3d gv = (rho / r2) * dwv * et.transpose() + (dz * wv + dell * tb.g) * er.transpose();
  const double s = chi_a * chi_r;
  const Vector3d gs = chi_a * dchi_r * er + chi_r * dchi_a * tb.tangent;
  return s * gv + v * gs.transpose();
}

// away-direction of segment j at node
Vector3d away(const Segment& s, bool outgoing) { return outgoing ? s.tangent() : Vector3d(-s.tangent()); }

}  // namespace

Matrix3d RecoveryStrain::theta(const Vector3d& x) const {
  Matrix3d th = kernel_.mollified(x, eps_);
  for (const auto& tb : tubes_) th += tube_correction(tb, x, eps_, rho_);
  return th;
}

Matrix3d RecoveryStrain::operator()(const Vector3d& x) const {
  Matrix3d f = Matrix3d::Identity();
  if (delta_ != 0 && !beta_.is_zero()) f += delta_ * beta_(x);
  if (!tubes_.empty() || !kernel_.source().empty()) f += eps_ * theta(x);
  return Q_.matrix() * f;
}

RecoveryStrain assemble_recovery(const PolyhedralMeasure& measure, const Rotation& Q,
                                 const AffineStrain& beta, double eps, double rho,
                                 const ElasticTensord& C, const RecoveryOptions& opt) {
  if (!(eps > 0 && eps < 1)) throw ValidationError("eps must lie in (0, 1)");
  if (!(rho > 0)) throw ValidationError("tube radius must be positive");
  if (!(opt.ramp_factor > 0)) throw ValidationError("ramp factor must be positive");
  const double bscale =
      1 + beta.constant.norm() + beta.slope[0].norm() + beta.slope[1].norm() + beta.slope[2].norm();
  if (beta.curl_residual(Box{}) > 1e-10 * bscale)
    throw ValidationError("beta is not curl-free");

  double bmax = 0;
  for (const auto& s : measure.segments()) bmax = std::max(bmax, s.burgers.norm());
  if (!measure.empty() && frank_rule_residual(measure) > 1e-9 * std::max(1.0, bmax))
    throw ValidationError("measure is not closed (Frank residual > 0); extend it first");

  RecoveryStrain out;
  out.Q_ = Q;
  out.beta_ = beta;
  out.eps_ = eps;
  out.rho_ = rho;
  out.delta_ = eps * std::sqrt(std::abs(std::log(eps)));

  // rotated source Q^T mu, zero-Burgers segments dropped
  const Matrix3d qt = Q.matrix().transpose();
  std::vector<Segment> segs;
  for (const auto& s : measure.segments()) {
    if (s.burgers.isZero(0)) continue;
    segs.push_back({s.start, s.end, qt * s.burgers});
  }
  out.kernel_ = KernelField(PolyhedralMeasure(BurgersLattice(qt * measure.lattice().generators()),
                                              segs, measure.node_tolerance()));
  if (segs.empty()) return out;

  const PolyhedralMeasure& src = out.kernel_.source();
  const NodeGraph nodes = build_nodes(src);
  auto share_node = [&](std::size_t i, std::size_t j) {
    return nodes.start_node[i] == nodes.start_node[j] || nodes.start_node[i] == nodes.end_node[j] ||
           nodes.end_node[i] == nodes.start_node[j] || nodes.end_node[i] == nodes.end_node[j];
  };
  for (std::size_t i = 0; i < segs.size(); ++i)
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      if (share_node(i, j)) continue;
      const double d = segment_distance(segs[i].start, segs[i].end, segs[j].start, segs[j].end);
      if (d < 2 * rho) {
        std::ostringstream msg;
        msg << "core tubes of segments " << i << " and " << j << " overlap (distance " << d
            << " < 2 rho = " << 2 * rho << ")";
        throw ValidationError(msg.str());
      }
    }

  // axial offset at a node: tubes of radius rho around two rays at angle
  // phi separate beyond rho / tan(phi / 2)
  auto offset = [&](std::size_t i, std::size_t node, const Vector3d& dir) {
    double s = 0;
    for (const auto& inc : nodes.incident[node]) {
      if (inc.segment == i) continue;
      const double c = std::clamp(dir.dot(away(segs[inc.segment], inc.outgoing)), -1.0, 1.0);
      const double phi = std::acos(c);
      if (phi < 1e-6) {
        std::ostringstream msg;
        msg << "core tubes of segments " << i << " and " << inc.segment
            << " overlap (collinear at a node)";
        throw ValidationError(msg.str());
      }
      s = std::max(s, rho / std::tan(phi / 2));
    }
    return s;
  };

  out.tubes_.resize(segs.size());
  parallel_for(segs.size(), opt.threads, [&](std::size_t i) {
    const Segment& s = segs[i];
    CoreTube& tb = out.tubes_[i];
    tb.segment = i;
    tb.start = s.start;
    tb.tangent = s.tangent();
    tb.length = s.length();
    tb.s_start = offset(i, nodes.start_node[i], tb.tangent);
    tb.s_end = offset(i, nodes.end_node[i], -tb.tangent);
    tb.ramp = opt.ramp_factor * rho;
    if (tb.s_start + tb.s_end + 2 * tb.ramp >= tb.length) {
      std::ostringstream msg;
      msg << "segment " << i << " too short for core tubes of radius " << rho;
      throw ValidationError(msg.str());
    }
    const auto se = solve_self_energy(C, s.burgers, tb.tangent, opt.n_theta);
    const AngularProfile& prof = se.profile;
    tb.frame = prof.frame();
    tb.g = prof.g();
    const int n = 4 * opt.n_theta;
    const double h = 2 * kPi / n;
    const auto& gr = gauss_rule<8>();
    std::vector<Vector3d> inc(n);
    Vector3d total = Vector3d::Zero();
    for (int k = 0; k < n; ++k) {
      Vector3d acc = Vector3d::Zero();
      for (int q = 0; q < 8; ++q) acc += gr.w[q] * prof.f_at(h * (k + 0.5 + 0.5 * gr.x[q]));
      inc[k] = acc * (h / 2);
      total += inc[k];
    }
    tb.w.assign(n, Vector3d::Zero());
    tb.dw.assign(n, Vector3d::Zero());
    for (int k = 0; k < n; ++k) {
      if (k > 0) tb.w[k] = tb.w[k - 1] + inc[k - 1] - total / n;
      tb.dw[k] = prof.f_at(h * k) - total / (2 * kPi);
    }
  });

  // |theta| (dist + eps) / |b| on probes around each tube
  std::vector<Vector3d> probes;
  for (const auto& tb : out.tubes_) {
    const Vector3d e1 = tb.frame.matrix().col(0), e2 = tb.frame.matrix().col(1);
    for (double fr : {0.1, 0.3, 0.5, 0.7, 0.9})
      for (int a = 0; a < 8; ++a) {
        const double ang = 2 * kPi * a / 8 + 0.3;
        for (double d = 0.05 * eps; d <= 4 * rho; d *= 4)
          probes.push_back(tb.start + fr * tb.length * tb.tangent +
                           d * (std::cos(ang) * e1 + std::sin(ang) * e2));
      }
  }
  double bnorm = 0;
  for (const auto& s : segs) bnorm = std::max(bnorm, s.burgers.norm());
  std::vector<double> ratio(probes.size());
  parallel_for(probes.size(), opt.threads, [&](std::size_t i) {
    ratio[i] = out.theta(probes[i]).norm() * (out.distance(probes[i]) + eps) / bnorm;
  });
  out.bound_ = ratio.empty() ? 0 : *std::max_element(ratio.begin(), ratio.end());
  if (!std::isfinite(out.bound_) || out.bound_ > opt.max_bound) {
    std::ostringstream msg;
    msg << "recovery field bound |theta| <= C/(dist + eps) failed: fitted C = " << out.bound_;
    throw SolverError(msg.str());
  }
  return out;
}

// ---------------------------------------------------------------- energy

namespace {

struct Cell {
  Vector3d lo, hi;
};

double leaf_value(const RecoveryStrain& strain, const EnergyModel& model, const Cell& c) {
  const double a = 1 / std::sqrt(3.0);
  const Vector3d mid = (c.lo + c.hi) / 2, half = (c.hi - c.lo) / 2;
  double s = 0;
  for (int i = 0; i < 8; ++i) {
    const Vector3d x = mid + Vector3d(i & 1 ? a : -a, i & 2 ? a : -a, i & 4 ? a : -a).cwiseProduct(half);
    s += model.value(strain(x));
  }
  return s * half.prod();  // 8 points, weight vol / 8
}

struct OctreeResult {
  double value = 0;
  std::size_t leaves = 0;
};

OctreeResult octree_integral(const RecoveryStrain& strain, const EnergyModel& model,
                             const Box& box, double kappa, double core, int min_depth,
                             int threads) {
  const Vector3d ext = box.hi - box.lo;
  const double m = ext.minCoeff();
  Eigen::Vector3i roots;
  for (int i = 0; i < 3; ++i) roots(i) = std::max(1, static_cast<int>(std::lround(ext(i) / m)));
  const int task_depth = std::max(min_depth, 3);
  const int per = 1 << task_depth;
  std::vector<Cell> tasks;
  const Eigen::Vector3i n = roots * per;
  for (int k = 0; k < n(2); ++k)
    for (int j = 0; j < n(1); ++j)
      for (int i = 0; i < n(0); ++i) {
        const Vector3d lo = box.lo + Vector3d(double(i) / n(0) * ext(0), double(j) / n(1) * ext(1),
                                              double(k) / n(2) * ext(2));
        const Vector3d hi = box.lo + Vector3d(double(i + 1) / n(0) * ext(0),
                                              double(j + 1) / n(1) * ext(1),
                                              double(k + 1) / n(2) * ext(2));
        tasks.push_back({lo, hi});
      }
  const double eps = strain.eps();
  const bool has_support = !strain.kernel().source().empty();
  std::vector<double> sums(tasks.size());
  std::vector<std::size_t> counts(tasks.size());
  parallel_for_dynamic(tasks.size(), threads, [&](std::size_t t) {
    std::vector<double> vals;
    std::vector<Cell> stack{tasks[t]};
    while (!stack.empty()) {
      const Cell c = stack.back();
      stack.pop_back();
      const Vector3d e = c.hi - c.lo;
      const double size = e.maxCoeff();
      bool refine = false;
      if (has_support) {
        const double d = strain.distance((c.lo + c.hi) / 2) - e.norm() / 2;
        refine = size > std::max(core * eps, kappa * std::max(d, 0.0));
      }
      if (!refine) {
        vals.push_back(leaf_value(strain, model, c));
        continue;
      }
      // push children in reverse so they are visited in index order
      const Vector3d mid = (c.lo + c.hi) / 2;
      for (int i = 7; i >= 0; --i) {
        Cell ch;
        for (int a = 0; a < 3; ++a) {
          const bool upper = (i >> a) & 1;
          ch.lo(a) = upper ? mid(a) : c.lo(a);
          ch.hi(a) = upper ? c.hi(a) : mid(a);
        }
        stack.push_back(ch);
      }
    }
    sums[t] = pairwise_sum(vals);
    counts[t] = vals.size();
  });
  OctreeResult r;
  r.value = pairwise_sum(sums);
  for (auto c : counts) r.leaves += c;
  return r;
}

}  // namespace

EnergyReport energy_of_strain(const RecoveryStrain& strain, const EnergyModel& model,
                              const Box& domain, const QuadratureOptions& opt) {
  const double eps = strain.eps();
  if (!(eps > 0 && eps < 1)) throw ValidationError("strain has no valid scale eps");
  if (!(opt.kappa > 0) || !(opt.core_factor > 0)) throw ValidationError("quadrature factors must be positive");
  Box box = domain;
  if (opt.inset) {
    box.lo.array() += eps;
    box.hi.array() -= eps;
  }
  if (!((box.hi - box.lo).minCoeff() > 0)) throw ValidationError("empty integration domain");
  const double norm = eps * eps * std::abs(std::log(eps));
  const auto coarse = octree_integral(strain, model, box, opt.kappa, opt.core_factor, opt.min_depth,
                                      opt.threads);
  const auto fine = octree_integral(strain, model, box, opt.kappa / 2, opt.core_factor / 2,
                                    opt.min_depth + 1, opt.threads);
  EnergyReport r;
  r.coarse = coarse.value / norm;
  r.value = fine.value / norm;
  r.leaves = fine.leaves;
  r.relative_change = r.value != 0 ? std::abs(r.value - r.coarse) / std::abs(r.value)
                                   : std::abs(r.coarse);
  if (!(r.relative_change <= opt.tolerance)) {
    std::ostringstream msg;
    msg << "energy quadrature did not stabilize: coarse " << r.coarse << ", fine " << r.value
        << " (relative change " << r.relative_change << " > " << opt.tolerance << ")";
    throw SolverError(msg.str());
  }
  return r;
}

// ---------------------------------------------------------------- limit

double clipped_length(const Vector3d& a, const Vector3d& b, const Box& box) {
  double t0 = 0, t1 = 1;
  const Vector3d d = b - a;
  for (int i = 0; i < 3; ++i) {
    if (d(i) == 0) {
      if (a(i) < box.lo(i) || a(i) > box.hi(i)) return 0;
      continue;
    }
    double u0 = (box.lo(i) - a(i)) / d(i), u1 = (box.hi(i) - a(i)) / d(i);
    if (u0 > u1) std::swap(u0, u1);
    t0 = std::max(t0, u0);
    t1 = std::min(t1, u1);
    if (t0 >= t1) return 0;
  }
  return (t1 - t0) * d.norm();
}

LimitReport limit_functional(const PolyhedralMeasure& measure, const AffineStrain& beta,
                             const Rotation& Q, const ElasticTensord& C,
                             const EnvelopeTable& envelope, const Box& domain) {
  LimitReport r;
  if (!beta.is_zero()) {
    const auto& g = gauss_rule<3>();
    const Vector3d mid = (domain.lo + domain.hi) / 2, half = (domain.hi - domain.lo) / 2;
    double s = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) {
          const Vector3d x = mid + Vector3d(g.x[i], g.x[j], g.x[k]).cwiseProduct(half);
          s += g.w[i] * g.w[j] * g.w[k] * C.energy(beta(x));
        }
    r.bulk = s * half.prod();
  }
  std::vector<double> terms;
  for (const auto& seg : measure.segments()) {
    if (seg.burgers.isZero(0)) continue;
    const double len = clipped_length(seg.start, seg.end, domain);
    if (len == 0) continue;
    terms.push_back(envelope.interpolate(seg.burgers, Q.matrix() * seg.tangent()) * len);
  }
  r.line = pairwise_sum(terms);
  return r;
}

EnvelopeTable limit_envelope(const ElasticTensord& C, const Rotation& Q,
                             const BurgersLattice& lattice, double bmax, int level, int n_theta,
                             int threads) {
  const auto table = build_psi0_table(C.rotated(Q.matrix()), lattice, bmax, level, n_theta, threads);
  RelaxOptions ro;
  ro.threads = threads;
  return relax_envelope(table, ro);
}

// ---------------------------------------------------------------- scan

GammaScanReport gamma_scan(const PolyhedralMeasure& measure, const AffineStrain& beta,
                           const Rotation& Q, const EnergyModel& model,
                           const std::vector<double>& eps_list, const ScaleSchedule& schedule,
                           const Box& domain, const EnvelopeTable& envelope,
                           const GammaScanOptions& opt) {
  if (eps_list.empty()) throw ValidationError("empty eps list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0 && eps_list[i] < 1)) throw ValidationError("eps must lie in (0, 1)");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) throw ValidationError("eps list must be decreasing");
  }
  const auto adm = schedule_admissible(schedule);
  if (!adm.admissible) throw ValidationError("schedule not admissible: " + adm.reason);

  std::vector<Segment> kept;
  for (const auto& s : measure.segments())
    if (!s.burgers.isZero(0)) kept.push_back(s);
  const PolyhedralMeasure m(measure.lattice(), kept, measure.node_tolerance());

  GammaScanReport r;
  r.schedule = schedule;
  const ElasticTensord C = hessian_at_identity(model);
  r.limit = limit_functional(m, beta, Q, C, envelope, domain);
  r.F0 = r.limit.total();
  for (double eps : eps_list) {
    const DiluteParams p = schedule.at(eps);
    if (!m.empty()) {
      const auto dil = check_dilute(m, p, domain);
      if (!dil.ok) {
        std::ostringstream msg;
        msg << "diluteness violated at eps = " << eps << ": " << dil.first_violation;
        throw ValidationError(msg.str());
      }
    }
    const double rho = (p.alpha * p.h) * (p.alpha * p.h);
    const auto strain = assemble_recovery(m, Q, beta, eps, rho, C, opt.recovery);
    const auto e = energy_of_strain(strain, model, domain, opt.quadrature);
    r.eps.push_back(eps);
    r.F_eps.push_back(e.value);
    r.gaps.push_back(std::abs(e.value - r.F0));
    r.rho.push_back(rho);
    r.relative_change.push_back(e.relative_change);
    r.bound_constant.push_back(strain.bound_constant());
  }
  const std::size_t n = r.gaps.size(), from = n >= 3 ? n - 3 : 0;
  r.monotone_tail = true;
  for (std::size_t i = from + 1; i < n; ++i)
    if (r.gaps[i] > r.gaps[i - 1]) r.monotone_tail = false;
  return r;
}

}  // namespace linetension
