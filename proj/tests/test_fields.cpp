#include <doctest.h>

#include "linetension/fields.hpp"
#include "oracles.hpp"

#include <random>

using namespace linetension;

namespace {

PolyhedralMeasure square_loop(const Vector3d& b = Vector3d::UnitX(), double side = 1) {
  const Vector3d p0(0, 0, 0), p1(side, 0, 0), p2(side, side, 0), p3(0, side, 0);
  return PolyhedralMeasure(BurgersLattice::cubic(), {{p0, p1, b}, {p1, p2, b}, {p2, p3, b}, {p3, p0, b}});
}

const Box kLoopBox{Vector3d(-0.5, -0.5, -1), Vector3d(1.5, 1.5, 1)};

double rel(const Vector3d& a, const Vector3d& b) { return (a - b).norm() / b.norm(); }

Matrix3d sym_test_matrix() {
  Matrix3d e;
  e << 0.8, 0.3, -0.2, 0.3, -0.5, 0.1, -0.2, 0.1, 0.4;
  return e;
}

}  // namespace

TEST_CASE("segment kernel matches the perpendicular decomposition") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 50; ++k) {
    const Vector3d a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng)), x(u(rng), u(rng), u(rng));
    const Vector3d got = segment_velocity(a, b, x);
    CHECK(rel(got, oracle::segment_velocity(a, b, x)) < 1e-11);
    // opposite orientation flips the sign
    CHECK((segment_velocity(b, a, x) + got).norm() < 1e-12 * got.norm());
  }
  // on the line extension the field vanishes, on the segment it is an error
  CHECK(segment_velocity(Vector3d::Zero(), Vector3d::UnitZ(), Vector3d(0, 0, 2)).norm() == 0.0);
  CHECK_THROWS_AS(segment_velocity(Vector3d::Zero(), Vector3d::UnitZ(), Vector3d(0, 0, 0.5)),
                  ValidationError);
  const Segment s{Vector3d::Zero(), Vector3d::UnitZ(), Vector3d(0, 1, 0)};
  const Vector3d x(0.3, -0.2, 0.4);
  CHECK((segment_kernel_field(s, x) - s.burgers * oracle::segment_velocity(s.start, s.end, x).transpose())
            .norm() < 1e-12);
}

TEST_CASE("kernel superposition and linearity") {
  const Vector3d b(1, 0, 0), a(0.1, 0.2, -0.3), c(0.4, 0.9, 0.5), m = (a + c) / 2;
  const Vector3d x(0.7, -0.3, 0.2);
  const Matrix3d whole = segment_kernel_field({a, c, b}, x);
  const Matrix3d parts = segment_kernel_field({a, m, b}, x) + segment_kernel_field({m, c, b}, x);
  CHECK((whole - parts).norm() < 1e-12 * whole.norm());

  const auto m1 = square_loop(Vector3d::UnitX());
  const auto m2 = square_loop(Vector3d::UnitZ(), 0.5).transformed(Matrix3d::Identity(), Vector3d(0.2, 0.1, 0.3));
  PolyhedralMeasure both = m1;
  for (const auto& s : m2.segments()) both.add(s);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int k = 0; k < 20; ++k) {
    const Vector3d y(u(rng), u(rng), u(rng));
    const Matrix3d sum = KernelField(m1)(y) + KernelField(m2)(y);
    CHECK((KernelField(both)(y) - sum).norm() <= 1e-12 * std::max(1.0, sum.norm()));
  }
}

TEST_CASE("circulation around a long segment") {
  const Segment s{Vector3d(0, 0, -50), Vector3d(0, 0, 50), Vector3d(1, 2, 0)};
  const auto loop = ProbeLoop::circle(Vector3d::Zero(), Vector3d::UnitZ(), 0.01);
  const Vector3d circ = loop_circulation([&](const Vector3d& x) { return segment_kernel_field(s, x); }, loop);
  CHECK(rel(circ, s.burgers) < 1e-3);
  // reversed loop orientation
  const auto back = ProbeLoop::circle(Vector3d::Zero(), -Vector3d::UnitZ(), 0.01);
  CHECK(rel(-loop_circulation([&](const Vector3d& x) { return segment_kernel_field(s, x); }, back),
            s.burgers) < 1e-3);
}

TEST_CASE("circulation is quantized for a closed loop") {
  const Vector3d b(0, 1, 1);
  const PolyhedralMeasure sq(BurgersLattice::cubic(),
                             {{Vector3d(0, 0, 0), Vector3d(1, 0, 0), b},
                              {Vector3d(1, 0, 0), Vector3d(1, 1, 0), b},
                              {Vector3d(1, 1, 0), Vector3d(0, 1, 0), b},
                              {Vector3d(0, 1, 0), Vector3d(0, 0, 0), b}});
  const KernelField k(sq);
  auto f = [&](const Vector3d& x) { return k(x); };
  const Vector3d mid(0.5, 0, 0), t = Vector3d::UnitX();
  const std::vector<ProbeLoop> loops{ProbeLoop::circle(mid, t, 0.2),
                                     ProbeLoop::ellipse(mid, t, 0.3, 0.1, 0.7),
                                     square_probe(mid, t, 0.15)};
  for (const auto& l : loops) CHECK(rel(loop_circulation(f, l), b) < 1e-3);
  // a loop linking nothing
  CHECK(loop_circulation(f, ProbeLoop::circle(Vector3d(0.5, 0.5, 0.6), t, 0.2)).norm() < 1e-9);
  // the loop around the whole square links nothing either
  CHECK(loop_circulation(f, ProbeLoop::circle(Vector3d(0.5, 0.5, 0), Vector3d::UnitZ(), 2)).norm() < 1e-9);
}

TEST_CASE("kernel decay constants") {
  const auto sq = square_loop();
  std::vector<DecayConstants> c;
  for (int n : {16, 32, 64}) c.push_back(kernel_decay_constants(sq, kLoopBox, n));
  for (std::size_t i = 1; i < c.size(); ++i) {
    CHECK(std::abs(c[i].mass - c[i - 1].mass) < 0.2 * c[i - 1].mass);
    CHECK(std::abs(c[i].lines - c[i - 1].lines) < 0.2 * c[i - 1].lines);
  }
  for (const auto& d : c) {
    CHECK(std::isfinite(d.mass));
    CHECK(d.mass > 0);
    CHECK(d.lines > 0);
    // near a straight segment |eta| dist -> |b| / (2 pi)
    CHECK(d.lines < 1.0);
  }
  CHECK(c.back().probes == std::size_t(64 * 64 * 64));
  // single segment: |eta| dist <= C |b|
  const PolyhedralMeasure one(BurgersLattice::cubic(), {{Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d(0, 2, 0)}});
  const auto d1 = kernel_decay_constants(one, kLoopBox, 32);
  CHECK(d1.lines <= 1 / (2 * kPi) * (1 + 1e-9));
  CHECK(kernel_decay_constants(PolyhedralMeasure(), kLoopBox, 8).probes == 0u);
}

TEST_CASE("mollified kernel") {
  const Segment s{Vector3d(0, 0, 0), Vector3d(0, 0, 1), Vector3d(1, 0, 0)};
  const double eps = 0.05;
  for (double d : {1e-6, 0.01, 0.03, 0.0499, 0.05, 0.2}) {
    for (double z : {0.5, 0.02, 1.03}) {
      const Vector3d x(d * 0.6, d * 0.8, z);
      const Vector3d ref = oracle::mollified_segment_velocity(s.start, s.end, x, eps,
                                                              [](double r) { return Mollifier::enclosed_mass(r); }, 4000);
      const Matrix3d got = segment_mollified_field(s, x, eps);
      CHECK((got - s.burgers * ref.transpose()).norm() <= 1e-7 * std::max(1.0, ref.norm()));
    }
  }
  // bounded by C / eps near the line, zero on it
  CHECK(segment_mollified_field(s, Vector3d(1e-9, 0, 0.5), eps).norm() < 1 / eps);
  CHECK(segment_mollified_field(s, Vector3d(0, 0, 0.5), eps).norm() == 0.0);
  for (double r : {0.0, 0.1, 0.37, 0.5, 0.9, 1.0})
    CHECK(mollifier_mass(r) == doctest::Approx(Mollifier::enclosed_mass(r)).epsilon(1e-10));
}

TEST_CASE("mollified field has curl mu * phi") {
  // flux of the mollified density through a small disk equals the circulation
  const auto sq = square_loop(Vector3d(1, 1, 0));
  const double eps = 0.04, r = 0.5 * eps;
  const Vector3d c(0.5, 0, 0), n = Vector3d::UnitX();
  const Mollifier phi(eps);
  const Vector3d e1 = Vector3d::UnitY(), e2 = Vector3d::UnitZ();
  Vector3d flux = Vector3d::Zero();
  const int nr = 200, na = 64;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < na; ++j) {
      const double rr = (i + 0.5) * r / nr, a = 2 * kPi * (j + 0.5) / na;
      const Vector3d x = c + rr * (std::cos(a) * e1 + std::sin(a) * e2);
      flux += mollified_curl_density(sq, phi, x) * n * rr * (r / nr) * (2 * kPi / na);
    }
  const KernelField k(sq);
  const Vector3d circ = loop_circulation([&](const Vector3d& x) { return k.mollified(x, eps); },
                                         ProbeLoop::circle(c, n, r));
  CHECK(rel(circ, flux) < 1e-4);
  CHECK(flux.norm() < 0.99 * sq.segments()[0].burgers.norm());
}

TEST_CASE("affine strains") {
  AffineStrain a = AffineStrain::uniform(sym_test_matrix());
  CHECK(a.curl_residual(kLoopBox) < 1e-14);
  // gradient of u_i = 1/2 D_ijk x_j x_k with D symmetric in (j, k)
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) a.slope[k](i, j) = 0.1 * (i + 1) * (j + k + 1);
  CHECK(a.curl_residual(kLoopBox) < 1e-14);
  CHECK((a(Vector3d(1, 2, 3)) - (a.constant + a.slope[0] + 2 * a.slope[1] + 3 * a.slope[2])).norm() < 1e-14);
  a.slope[0](0, 1) += 1;
  CHECK(a.curl_residual(kLoopBox) > 0.1);
  CHECK(AffineStrain{}.is_zero());
}

TEST_CASE("recovery strain without dislocations") {
  std::mt19937_64 rng(4);
  const Rotation q = random_rotation(rng);
  const auto beta = AffineStrain::uniform(sym_test_matrix());
  const double eps = 1e-3;
  const auto s = assemble_recovery(PolyhedralMeasure(), q, beta, eps, 0.1, ElasticTensord::isotropic(1, 0));
  const double delta = eps * std::sqrt(std::abs(std::log(eps)));
  const Vector3d x(0.3, 0.2, -0.1);
  CHECK(s(x) == q.matrix() * (Matrix3d::Identity() + delta * beta.constant));
  CHECK(s.theta(x).norm() == 0.0);
}

TEST_CASE("recovery strain circulation and bounds") {
  const auto sq = square_loop(Vector3d(1, 0, 1));
  const auto C = ElasticTensord::isotropic(1, 0.5);
  std::mt19937_64 rng(9);
  const Rotation q = random_rotation(rng);
  std::vector<double> bounds;
  for (double eps : {1e-2, 1e-3}) {
    const double rho = 0.1;
    const auto s = assemble_recovery(sq, q, AffineStrain{}, eps, rho, C);
    CHECK(s.tubes().size() == 4u);
    CHECK(s.tubes()[0].s_start == doctest::Approx(rho));  // right angle: rho / tan(45 deg)
    bounds.push_back(s.bound_constant());
    auto beta = [&](const Vector3d& x) { return s(x); };
    for (const auto& seg : sq.segments()) {
      const Vector3d mid = seg.point(0.5);
      // radius 2 eps encloses the whole core; also inside the gluing annulus
      for (double r : {2 * eps, 0.7 * rho}) {
        const Vector3d circ = loop_circulation(beta, ProbeLoop::circle(mid, seg.tangent(), r));
        CHECK(rel(circ, eps * seg.burgers) < 1e-6);
      }
      // the near-core correction is a gradient: theta keeps the kernel's circulation
      const double r = 0.3 * eps;
      const Vector3d a = loop_circulation([&](const Vector3d& x) { return s.theta(x); },
                                          ProbeLoop::circle(mid, seg.tangent(), r));
      const Vector3d b = loop_circulation([&](const Vector3d& x) { return s.kernel().mollified(x, eps); },
                                          ProbeLoop::circle(mid, seg.tangent(), r));
      CHECK((a - b).norm() < 1e-8);
    }
    // |theta| <= C / (dist + eps) at random points
    std::uniform_real_distribution<double> u(-0.3, 1.3);
    for (int k = 0; k < 200; ++k) {
      const Vector3d x(u(rng), u(rng), 0.2 * u(rng));
      CHECK(s.theta(x).norm() * (s.distance(x) + eps) <= 1.5 * s.bound_constant() * std::sqrt(2.0));
    }
  }
  CHECK(std::abs(bounds[1] - bounds[0]) < 0.2 * bounds[0]);
}

TEST_CASE("recovery strain uses the straight-dislocation profile near the core") {
  // deep inside a tube, theta ~ G(theta)/rho of the self-energy solution
  const auto sq = square_loop(Vector3d(0, 1, 0));
  const auto C = ElasticTensord::isotropic(1, 0.7);
  const double eps = 1e-4, rho = 0.1;
  const auto s = assemble_recovery(sq, Rotation(), AffineStrain{}, eps, rho, C);
  const Segment& seg = sq.segments()[0];
  const auto prof = solve_self_energy(C, seg.burgers, seg.tangent()).profile;
  for (double a : {0.3, 1.9, 4.0}) {
    const Vector3d e = prof.frame().matrix() * Vector3d(std::cos(a), std::sin(a), 0);
    const Vector3d x = seg.point(0.5) + 2e-3 * e;
    const Matrix3d ref = eval_eta(prof, x - seg.start);
    CHECK((s.theta(x) - ref).norm() < 0.02 * ref.norm());
  }
}

TEST_CASE("recovery strain validation") {
  const auto C = ElasticTensord::isotropic(1, 0);
  PolyhedralMeasure open(BurgersLattice::cubic(), {{Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d::UnitX()}});
  CHECK_THROWS_AS(assemble_recovery(open, Rotation(), AffineStrain{}, 1e-2, 0.1, C), ValidationError);
  // opposite sides closer than 2 rho
  const auto thin = PolyhedralMeasure(BurgersLattice::cubic(),
                                      {{Vector3d(0, 0, 0), Vector3d(1, 0, 0), Vector3d::UnitX()},
                                       {Vector3d(1, 0, 0), Vector3d(1, 0.15, 0), Vector3d::UnitX()},
                                       {Vector3d(1, 0.15, 0), Vector3d(0, 0.15, 0), Vector3d::UnitX()},
                                       {Vector3d(0, 0.15, 0), Vector3d(0, 0, 0), Vector3d::UnitX()}});
  CHECK_THROWS_AS(assemble_recovery(thin, Rotation(), AffineStrain{}, 1e-2, 0.1, C), ValidationError);
  AffineStrain bad;
  bad.slope[0](0, 1) = 1;
  CHECK_THROWS_AS(assemble_recovery(square_loop(), Rotation(), bad, 1e-2, 0.1, C), ValidationError);
  CHECK_THROWS_AS(assemble_recovery(square_loop(), Rotation(), AffineStrain{}, 1.5, 0.1, C), ValidationError);
  RecoveryOptions tight;
  tight.max_bound = 1e-3;
  CHECK_THROWS_AS(assemble_recovery(square_loop(), Rotation(), AffineStrain{}, 1e-2, 0.1, C, tight), SolverError);
}

TEST_CASE("energy of trivial strains") {
  const Box box{Vector3d(0, 0, 0), Vector3d(2, 1, 1)};
  const auto model = EnergyModel::prototype();
  std::mt19937_64 rng(6);
  const Rotation q = random_rotation(rng);
  const auto zero = assemble_recovery(PolyhedralMeasure(), q, AffineStrain{}, 1e-2, 0.1, ElasticTensord::isotropic(1, 0));
  CHECK(energy_of_strain(zero, model, box).value < 1e-20);

  // dist^2(I + d E) = d^2 |E|^2 for small symmetric E: exact value |E|^2 |box|
  const Matrix3d e = sym_test_matrix();
  const auto s = assemble_recovery(PolyhedralMeasure(), q, AffineStrain::uniform(e), 1e-2, 0.1,
                                   ElasticTensord::isotropic(1, 0));
  const auto rep = energy_of_strain(s, model, box);
  CHECK(rep.value == doctest::Approx(e.squaredNorm() * volume(box)).epsilon(1e-10));
  QuadratureOptions inset;
  inset.inset = true;
  CHECK(energy_of_strain(s, model, box, inset).value ==
        doctest::Approx(e.squaredNorm() * (2 - 0.02) * (1 - 0.02) * (1 - 0.02)).epsilon(1e-10));

  // anharmonic: F_eps -> |sym E|^2 |box| with error O(eps sqrt|log eps|)
  const auto an = EnergyModel::anharmonic(0.8);
  std::vector<double> gaps, deltas;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const auto t = assemble_recovery(PolyhedralMeasure(), q, AffineStrain::uniform(e), eps, 0.1,
                                     ElasticTensord::isotropic(1, 0));
    gaps.push_back(std::abs(energy_of_strain(t, an, box).value - e.squaredNorm() * volume(box)));
    deltas.push_back(eps * std::sqrt(std::abs(std::log(eps))));
  }
  const double slope = std::log(gaps[2] / gaps[0]) / std::log(deltas[2] / deltas[0]);
  CHECK(slope == doctest::Approx(1).epsilon(0.05));
}

TEST_CASE("energy is frame indifferent") {
  const auto model = EnergyModel::prototype();
  const auto C = hessian_at_identity(model);
  std::mt19937_64 rng(8);
  const Rotation q = random_rotation(rng);
  const auto sq = square_loop(Vector3d(1, 0, 0), 0.5);
  const Box box{Vector3d(-0.25, -0.25, -0.25), Vector3d(0.75, 0.75, 0.25)};
  const double eps = 0.05;
  // mu with Q, versus Q^T b and Q = I
  const auto a = assemble_recovery(sq, q, AffineStrain{}, eps, 0.05, C);
  std::vector<Segment> rot;
  for (const auto& s : sq.segments()) rot.push_back({s.start, s.end, q.matrix().transpose() * s.burgers});
  const PolyhedralMeasure sqr(BurgersLattice(q.matrix().transpose()), rot);
  const auto b = assemble_recovery(sqr, Rotation(), AffineStrain{}, eps, 0.05, C);
  QuadratureOptions opt;
  opt.kappa = 1;
  const double ea = energy_of_strain(a, model, box, opt).value;
  const double eb = energy_of_strain(b, model, box, opt).value;
  CHECK(std::abs(ea - eb) <= 1e-10 * eb);
  CHECK(ea > 0);
}

TEST_CASE("clipped length") {
  const Box box{Vector3d(0, 0, 0), Vector3d(1, 1, 1)};
  CHECK(clipped_length(Vector3d(-1, 0.5, 0.5), Vector3d(2, 0.5, 0.5), box) == doctest::Approx(1));
  CHECK(clipped_length(Vector3d(0.2, 0.2, 0.2), Vector3d(0.4, 0.4, 0.2), box) == doctest::Approx(std::sqrt(0.08)));
  CHECK(clipped_length(Vector3d(2, 2, 2), Vector3d(3, 3, 3), box) == 0.0);
  CHECK(clipped_length(Vector3d(-1, -1, 0.5), Vector3d(2, 2, 0.5), box) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("limit functional") {
  const auto C = ElasticTensord::isotropic(1, 0);
  const auto env = limit_envelope(C, Rotation(), BurgersLattice::cubic(), 1.0, 1);
  CHECK(limit_functional(PolyhedralMeasure(), AffineStrain{}, Rotation(), C, env, kLoopBox).total() == 0.0);
  const Matrix3d e = sym_test_matrix();
  const auto bulk = limit_functional(PolyhedralMeasure(), AffineStrain::uniform(e), Rotation(), C, env, kLoopBox);
  CHECK(bulk.total() == doctest::Approx(e.squaredNorm() * volume(kLoopBox)).epsilon(1e-12));
  // skew part costs nothing
  Matrix3d w = Matrix3d::Zero();
  w(0, 1) = 1;
  w(1, 0) = -1;
  CHECK(limit_functional(PolyhedralMeasure(), AffineStrain::uniform(e + w), Rotation(), C, env, kLoopBox).bulk ==
        doctest::Approx(bulk.bulk).epsilon(1e-12));
  // square loop: four sides of length 1, Psi~0 = Psi0 = |b|^2/(4 pi) for mu = 1, nu = 0
  const auto line = limit_functional(square_loop(), AffineStrain{}, Rotation(), C, env, kLoopBox);
  CHECK(line.line == doctest::Approx(4 / (4 * kPi)).epsilon(1e-8));
  // half of the loop outside the box
  const Box half{Vector3d(-0.5, -0.5, -1), Vector3d(0.5, 1.5, 1)};
  CHECK(limit_functional(square_loop(), AffineStrain{}, Rotation(), C, env, half).line ==
        doctest::Approx(2 / (4 * kPi)).epsilon(1e-8));
}

TEST_CASE("limit functional with a rotation") {
  // anisotropic C: Psi~0(Q^T b, t) read from the table of C rotated by Q
  ElasticTensord::Voigt v = ElasticTensord::Voigt::Zero();
  v.topLeftCorner<3, 3>().setConstant(1.2);
  v.diagonal().head<3>().setConstant(2.5);
  v.diagonal().tail<3>().setConstant(0.8);
  const auto C = ElasticTensord::from_voigt(v);
  std::mt19937_64 rng(12);
  const Rotation q = random_rotation(rng);
  const auto env = limit_envelope(C, q, BurgersLattice::cubic(), 1.0, 3);
  const auto sq = square_loop(Vector3d(0, 1, 0));
  const auto rep = limit_functional(sq, AffineStrain{}, q, C, env, kLoopBox);
  double ref = 0;
  for (const auto& s : sq.segments())
    ref += solve_self_energy(C, q.matrix().transpose() * s.burgers, s.tangent()).value * s.length();
  // the envelope lies below Psi0 and direction interpolation adds O(h^2)
  CHECK(rep.line <= ref * (1 + 2e-2));
  CHECK(rep.line >= 0.8 * ref);
}

TEST_CASE("gamma scan without dislocations") {
  const auto model = EnergyModel::anharmonic(0.8);
  const auto C = hessian_at_identity(model);
  const auto env = limit_envelope(C, Rotation(), BurgersLattice::cubic(), 1.0, 1);
  const Box box{Vector3d(0, 0, 0), Vector3d(1, 1, 1)};
  ScaleSchedule sc{1, 0.5, 0.05, 0.05};
  const std::vector<double> eps{1e-2, 3e-3, 1e-3};
  const auto beta = AffineStrain::uniform(sym_test_matrix());
  const auto r = gamma_scan(PolyhedralMeasure(), beta, Rotation(), model, eps, sc, box, env);
  CHECK(r.F0 == doctest::Approx(C.energy(beta.constant)).epsilon(1e-12));
  CHECK(r.monotone_tail);
  for (double f : r.F_eps) CHECK(f >= 0);
  const double slope = std::log(r.gaps[2] / r.gaps[0]) /
                       std::log(eps[2] * std::sqrt(std::log(1 / eps[2])) / (eps[0] * std::sqrt(std::log(1 / eps[0]))));
  CHECK(slope > 0.8);
  CHECK(slope < 1.2);

  // a measure with zero Burgers vectors gives the same report
  const auto zero = square_loop().scaled_burgers(0);
  const auto z = gamma_scan(zero, beta, Rotation(), model, eps, sc, box, env);
  CHECK(z.F_eps == r.F_eps);
  CHECK(z.F0 == r.F0);

  CHECK_THROWS_AS(gamma_scan(PolyhedralMeasure(), beta, Rotation(), model, {1e-3, 1e-2}, sc, box, env),
                  ValidationError);
  ScaleSchedule bad{1, 0.5, 0.2, 0.1};
  CHECK_THROWS_AS(gamma_scan(PolyhedralMeasure(), beta, Rotation(), model, eps, bad, box, env), ValidationError);
}

TEST_CASE("gamma scan diluteness violation names eps") {
  const auto model = EnergyModel::prototype();
  const auto env = limit_envelope(hessian_at_identity(model), Rotation(), BurgersLattice::cubic(), 1.0, 1);
  // side 0.5 shorter than h_eps ~ 0.9
  const auto small = square_loop(Vector3d::UnitX(), 0.5);
  ScaleSchedule sc{1, 0.5, 0.05, 0.05};
  try {
    gamma_scan(small, AffineStrain{}, Rotation(), model, {1e-2}, sc, kLoopBox, env);
    FAIL("expected a diluteness violation");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("eps = 0.01") != std::string::npos);
  }
}
