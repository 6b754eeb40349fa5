#include <doctest.h>

#include "linetension/dislocations.hpp"
#include "linetension/selfenergy.hpp"
#include "oracles.hpp"

#include <chrono>
#include <random>

using namespace linetension;

namespace {

ElasticTensord cubic_tensor() {
  ElasticTensord::Voigt v = ElasticTensord::Voigt::Zero();
  v.topLeftCorner<3, 3>().setConstant(1.2);
  v.diagonal().head<3>().setConstant(2.5);
  v.diagonal().tail<3>().setConstant(0.8);
  return ElasticTensord::from_voigt(v);
}

Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  return Vector3d(n(rng), n(rng), n(rng)).normalized();
}

const double kMu = 1.0, kNu = 0.3, kLambda = 2 * kMu * kNu / (1 - 2 * kNu);

}  // namespace

TEST_CASE("frame for direction") {
  CHECK((frame_for_direction(Vector3d::UnitZ()).matrix() - Matrix3d::Identity()).norm() == 0.0);
  const Matrix3d flip = Vector3d(1, -1, -1).asDiagonal();
  CHECK((frame_for_direction(-Vector3d::UnitZ()).matrix() - flip).norm() == 0.0);

  // Rodrigues by hand: rotation by pi/2 about +e2
  Matrix3d expect;
  expect << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  const Rotation q = frame_for_direction(Vector3d::UnitX());
  CHECK((q.matrix() - expect).norm() < 1e-12);
  CHECK((q * Vector3d::UnitZ() - Vector3d::UnitX()).norm() < 1e-12);

  std::mt19937_64 rng(2);
  for (int k = 0; k < 200; ++k) {
    const Vector3d t = random_unit(rng);
    CHECK((frame_for_direction(t) * Vector3d::UnitZ() - t).norm() < 1e-12);
  }
  const Vector3d near = Vector3d(1e-9, -2e-9, -1).normalized();
  CHECK((frame_for_direction(near) * Vector3d::UnitZ() - near).norm() < 1e-12);
  CHECK_THROWS_AS(frame_for_direction(Vector3d(1, 1, 0)), ValidationError);
}

TEST_CASE("classical isotropic oracles") {
  const auto C = ElasticTensord::isotropic(kMu, kLambda);
  // the independent field-based oracle reproduces the textbook factors
  const double screw_oracle = oracle::volterra_prelog_energy(
      [](double x, double y) { return oracle::screw_displacement(1, x, y); }, kMu, kLambda);
  const double edge_oracle = oracle::volterra_prelog_energy(
      [](double x, double y) { return oracle::edge_displacement(1, kNu, x, y); }, kMu, kLambda);
  CHECK(screw_oracle == doctest::Approx(1 / (4 * kPi)).epsilon(1e-6));
  CHECK(edge_oracle == doctest::Approx(1 / (4 * kPi * (1 - kNu))).epsilon(1e-6));

  const auto t0 = std::chrono::steady_clock::now();
  const auto screw = solve_self_energy(C, Vector3d::UnitZ(), Vector3d::UnitZ(), 256);
  const auto edge = solve_self_energy(C, Vector3d::UnitX(), Vector3d::UnitZ(), 256);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(screw.value == doctest::Approx(screw_oracle).epsilon(1e-2));
  CHECK(edge.value == doctest::Approx(edge_oracle).epsilon(1e-2));
  CHECK(screw.value == doctest::Approx(0.079577).epsilon(1e-4));
  CHECK(edge.value == doctest::Approx(0.113682).epsilon(1e-4));
  CHECK(secs < 2.0);

  // prototype tensor (nu = 0): |b|^2 / (4 pi) in every orientation
  const auto P = ElasticTensord::isotropic(1, 0);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 10; ++k) {
    const Vector3d b = random_unit(rng) * 1.7, t = random_unit(rng);
    CHECK(solve_self_energy(P, b, t, 64).value == doctest::Approx(b.squaredNorm() / (4 * kPi)).epsilon(1e-10));
  }
}

TEST_CASE("zero Burgers vector") {
  const auto r = solve_self_energy(cubic_tensor(), Vector3d::Zero(), Vector3d::UnitX(), 32);
  CHECK(r.value == 0.0);
  CHECK(r.profile.g().norm() == 0.0);
  for (const auto& f : r.profile.f()) CHECK(f.norm() == 0.0);
  CHECK(check_equilibrium(r.profile, cubic_tensor()) == 0.0);
}

TEST_CASE("structured and dense KKT solves agree") {
  const auto C = cubic_tensor();
  std::mt19937_64 rng(5);
  for (int k = 0; k < 4; ++k) {
    const Vector3d b = random_unit(rng), t = random_unit(rng);
    const auto s = solve_self_energy(C, b, t, 64, KktMethod::Structured);
    const auto d = solve_self_energy(C, b, t, 64, KktMethod::Dense);
    CHECK(s.value == doctest::Approx(d.value).epsilon(1e-10));
    CHECK((s.profile.g() - d.profile.g()).norm() < 1e-9);
    CHECK((s.multiplier - d.multiplier).norm() < 1e-9);
    CHECK(s.constraint_residual <= 1e-10 * (1 + b.norm()));
    CHECK(d.constraint_residual <= 1e-10 * (1 + b.norm()));
    // value = lambda . b / 2 at the optimum
    CHECK(s.value == doctest::Approx(s.multiplier.dot(b) / 2).epsilon(1e-10));
    const Matrix3d K = self_energy_matrix(C, t, 64);
    CHECK(b.dot(K * b) == doctest::Approx(s.value).epsilon(1e-10));
  }
  CHECK_THROWS_AS(solve_self_energy(C, Vector3d::UnitX(), Vector3d::UnitZ(), 15), ValidationError);
  CHECK_THROWS_AS(solve_self_energy(C, Vector3d::UnitX(), Vector3d::UnitZ(), 8), ValidationError);
  CHECK_THROWS_AS(solve_self_energy(ElasticTensord(), Vector3d::UnitX(), Vector3d::UnitZ(), 16), SolverError);
}

TEST_CASE("refinement") {
  const auto C = cubic_tensor();
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector3d b = random_unit(rng), t = random_unit(rng);
    double prev_diff = -1, prev = solve_self_energy(C, b, t, 32).value;
    for (int n = 64; n <= 512; n *= 2) {
      const double v = solve_self_energy(C, b, t, n).value;
      const double diff = std::abs(v - prev);
      if (prev_diff >= 0 && n >= 128) CHECK(diff <= std::max(prev_diff / 3, 1e-13 * v));
      prev_diff = diff;
      prev = v;
    }
  }
  const auto r = refine_self_energy(C, Vector3d(1, 1, 0), random_unit(rng));
  CHECK(r.value > 0);
}

TEST_CASE("quadratic homogeneity and symmetry") {
  const auto C = cubic_tensor();
  std::mt19937_64 rng(7);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const Vector3d b = random_unit(rng) * 1.3, t = random_unit(rng);
    const double v = solve_self_energy(C, b, t, 128).value;
    for (double lam : {2.0, 3.0, 0.5}) {
      const double vl = solve_self_energy(C, lam * b, t, 128).value;
      worst = std::max(worst, std::abs(vl - lam * lam * v) / (lam * lam * v));
    }
    CHECK(solve_self_energy(C, -b, t, 128).value == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("rotation covariance") {
  const auto C = cubic_tensor();
  const auto iso = ElasticTensord::isotropic(kMu, kLambda);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 5; ++k) {
    const Rotation r = random_rotation(rng);
    const Vector3d b = random_unit(rng), t = random_unit(rng);
    const double v = solve_self_energy(C, b, t, 128).value;
    CHECK(solve_self_energy(C.rotated(r.matrix()), r * b, r * t, 128).value == doctest::Approx(v).epsilon(1e-10));
    CHECK(solve_self_energy(iso, r * b, r * t, 128).value ==
          doctest::Approx(solve_self_energy(iso, b, t, 128).value).epsilon(1e-10));
  }
}

TEST_CASE("singular strain eta") {
  const auto C = cubic_tensor();
  std::mt19937_64 rng(9);
  const Vector3d b(1, -1, 0), t = random_unit(rng);
  const auto r = solve_self_energy(C, b, t, 256);
  const auto& p = r.profile;

  for (int k = 0; k < 20; ++k) {
    const Vector3d x = random_unit(rng) * 0.7;
    const Matrix3d e = eval_eta(p, x);
    for (double s : {2.0, 10.0}) CHECK((eval_eta(p, s * x) - e / s).norm() <= 1e-8 * e.norm());
  }
  // spline reproduces the nodes
  for (int k = 0; k < p.n_theta(); k += 17) CHECK((p.f_at(p.node(k)) - p.f()[k]).norm() < 1e-13);

  // circulation on circles at off-node angles
  const Matrix3d q = p.frame().matrix();
  for (double rho : {0.1, 1.0, 10.0}) {
    const int m = 1000;
    Vector3d circ = Vector3d::Zero();
    for (int k = 0; k < m; ++k) {
      const double th = 2 * kPi * (k + 0.3) / m;
      const Vector3d x = q * Vector3d(rho * std::cos(th), rho * std::sin(th), 0.4);
      const Vector3d tau = q * Vector3d(-std::sin(th), std::cos(th), 0);
      circ += eval_eta(p, x) * tau * rho * (2 * kPi / m);
    }
    CHECK((circ - b).norm() < 1e-6);
  }
  CHECK_THROWS_AS(eval_eta(p, 2.5 * t), ValidationError);
  const double c = eta_bound_constant(p, b);
  CHECK(c > 0);
  CHECK(std::isfinite(c));
  for (int k = 0; k < 50; ++k) {
    const Vector3d x = random_unit(rng) * 3;
    const double rho = (x - x.dot(t) * t).norm();
    CHECK(eval_eta(p, x).norm() * rho <= c * b.norm() * (1 + 1e-6));
  }
}

TEST_CASE("equilibrium residual") {
  const auto iso = ElasticTensord::isotropic(kMu, kLambda);
  const auto screw = solve_self_energy(iso, Vector3d::UnitZ(), Vector3d::UnitZ(), 256);
  const double res = check_equilibrium(screw.profile, iso);
  CHECK(res < 1e-4);

  std::mt19937_64 rng(10);
  std::normal_distribution<double> n;
  std::vector<Vector3d> noisy = screw.profile.f();
  double fmax = 0;
  for (const auto& f : noisy) fmax = std::max(fmax, f.norm());
  for (auto& f : noisy) f += 0.1 * fmax * Vector3d(n(rng), n(rng), n(rng));
  const AngularProfile perturbed(noisy, screw.profile.g(), screw.profile.frame());
  CHECK(check_equilibrium(perturbed, iso) >= 10 * std::max(res, 1e-12));

  const auto C = cubic_tensor();
  const Vector3d b(1, 0, 1), t = Vector3d(1, 2, 3).normalized();
  const double coarse = check_equilibrium(solve_self_energy(C, b, t, 32).profile, C);
  const double fine = check_equilibrium(solve_self_energy(C, b, t, 256).profile, C);
  CHECK(fine < coarse);
  CHECK(fine < 1e-4);
}

TEST_CASE("scans and growth constants") {
  const auto C = cubic_tensor();
  std::mt19937_64 rng(11);
  std::vector<Vector3d> dirs;
  for (int k = 0; k < 24; ++k) dirs.push_back(random_unit(rng));
  const Vector3d b(1, 0, 0);
  const auto s1 = self_energy_scan(C, b, dirs, 64);
  const auto s2 = self_energy_scan(C, 2 * b, dirs, 64);
  const auto sm = self_energy_scan(C, -b, dirs, 64);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    CHECK(s2.values[i] / s1.values[i] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(sm.values[i] == doctest::Approx(s1.values[i]).epsilon(1e-12));
    CHECK(s1.values[i] == doctest::Approx(solve_self_energy(C, b, dirs[i], 64).value).epsilon(1e-10));
  }
  CHECK(s1.c0 > 0);
  CHECK(s1.c0 <= s1.c1);
  CHECK(s1.continuity_constant >= 0);
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (std::size_t j = 0; j < dirs.size(); ++j)
      CHECK(s1.values[i] <= (1 + s1.continuity_constant * (dirs[i] - dirs[j]).norm()) * s1.values[j] * (1 + 1e-12));

  const auto ball = BurgersLattice::cubic().ball(3);
  const auto g = self_energy_growth(C, ball, dirs, 64, 2);
  CHECK(g.c0 > 0);
  CHECK(g.c0 <= g.c1);
  for (const auto& bb : ball)
    for (const auto& t : dirs) {
      const double v = solve_self_energy(C, bb, t, 64).value;
      CHECK(v >= g.c0 * bb.squaredNorm() * (1 - 1e-9));
      CHECK(v <= g.c1 * bb.squaredNorm() * (1 + 1e-9));
      break;
    }
  // threads do not change the result
  const auto g1 = self_energy_growth(C, ball, dirs, 64, 1);
  CHECK(g1.c0 == g.c0);
  CHECK(g1.c1 == g.c1);
}
