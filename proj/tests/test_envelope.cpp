#include <doctest.h>

#include "linetension/envelope.hpp"
#include "linetension/selfenergy.hpp"

#include <chrono>
#include <set>

using namespace linetension;

namespace {

// cheap along the axes, expensive in between: direction splits pay off
double faceted(const Vector3d& b, const Vector3d& t) {
  const Vector3d a = t.cwiseAbs();
  return b.norm() * (1 + 3 * (a(0) * a(1) + a(1) * a(2) + a(0) * a(2)));
}

double quadratic_iso(const Vector3d& b, const Vector3d&) { return b.squaredNorm() / (4 * kPi); }

ElasticTensord cubic_tensor() {
  ElasticTensord::Voigt v = ElasticTensord::Voigt::Zero();
  v.topLeftCorner<3, 3>().setConstant(1.2);
  v.diagonal().head<3>().setConstant(2.5);
  v.diagonal().tail<3>().setConstant(0.8);
  return ElasticTensord::from_voigt(v);
}

const auto kCubic = BurgersLattice::cubic();

}  // namespace

TEST_CASE("icosphere levels nest") {
  const int expect[] = {12, 42, 162, 642};
  Icosphere prev;
  for (int l = 0; l <= 3; ++l) {
    const Icosphere s = icosphere(l);
    CHECK(static_cast<int>(s.vertices.size()) == expect[l]);
    CHECK(s.faces.size() == 20u * (1u << (2 * l)));
    for (const auto& v : s.vertices) CHECK(std::abs(v.norm() - 1) < 1e-15);
    for (std::size_t i = 0; i < prev.vertices.size(); ++i) CHECK(prev.vertices[i] == s.vertices[i]);
    // faces are oriented outward
    for (const auto& f : s.faces) {
      const Vector3d n = (s.vertices[f[1]] - s.vertices[f[0]]).cross(s.vertices[f[2]] - s.vertices[f[0]]);
      CHECK(n.dot(s.vertices[f[0]]) > 0);
    }
    prev = s;
  }
  CHECK_THROWS_AS(icosphere(-1), ValidationError);
}

TEST_CASE("direction splits are exact two-leg paths") {
  const Icosphere s = icosphere(2);
  const auto splits = direction_splits(s.vertices);
  std::size_t total = 0;
  for (std::size_t ti = 0; ti < s.vertices.size(); ++ti) {
    const Vector3d& t = s.vertices[ti];
    CHECK(!splits[ti].empty());
    std::set<std::pair<int, int>> seen;
    for (const auto& sp : splits[ti]) {
      CHECK(sp.t1 != sp.t2);
      CHECK(sp.l1 > 0);
      CHECK(sp.l2 > 0);
      CHECK(s.vertices[sp.t1].dot(t) > 0);
      CHECK(s.vertices[sp.t2].dot(t) > 0);
      CHECK((sp.l1 * s.vertices[sp.t1] + sp.l2 * s.vertices[sp.t2] - t).norm() < 1e-10);
      CHECK(seen.insert(std::minmax(sp.t1, sp.t2)).second);
    }
    total += splits[ti].size();
  }
  // brute force count on a few directions
  for (std::size_t ti : {0u, 17u, 100u}) {
    const Vector3d& t = s.vertices[ti];
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.vertices.size(); ++i)
      for (std::size_t j = i + 1; j < s.vertices.size(); ++j) {
        const Vector3d& a = s.vertices[i];
        const Vector3d& b = s.vertices[j];
        if (i == ti || j == ti || a.dot(t) <= 1e-12 || b.dot(t) <= 1e-12) continue;
        const Vector3d n = a.cross(b);
        if (n.norm() < 1e-12 || std::abs(n.normalized().dot(t)) > 1e-12) continue;
        // t strictly inside the cone spanned by a, b
        if (a.cross(t).dot(n) > 0 && t.cross(b).dot(n) > 0) ++count;
      }
    CHECK(count == splits[ti].size());
  }
  CHECK(total > 0);
}

TEST_CASE("quadratic input: Burgers splits halve 2b0") {
  const auto psi0 = make_psi0_table(kCubic, 3, icosphere(1), quadratic_iso);
  CHECK(psi0.burgers.size() == 123u);
  const auto env = relax_envelope(psi0);
  CHECK(env.converged);
  for (std::size_t ti = 0; ti < env.n_dirs(); ++ti) CHECK(env.at(0, ti) == 0.0);
  for (std::size_t e = 0; e < env.values.size(); ++e) CHECK(env.values[e] <= psi0.values[e]);

  const int b0 = psi0.burgers_index(Vector3d::UnitX());
  const int b2 = psi0.burgers_index(2 * Vector3d::UnitX());
  REQUIRE(b0 > 0);
  REQUIRE(b2 > 0);
  for (std::size_t ti = 0; ti < env.n_dirs(); ++ti) {
    CHECK(env.at(b0, ti) == doctest::Approx(psi0.at(b0, ti)).epsilon(1e-14));
    CHECK(env.at(b2, ti) <= 2 * psi0.at(b0, ti) * (1 + 1e-14));
    CHECK(psi0.at(b2, ti) - env.at(b2, ti) >= 0.4 * psi0.at(b2, ti));
  }
  // every nonzero entry relaxes to a sum of unit strands: |b|_1 / (4 pi)
  for (std::size_t bi = 1; bi < psi0.burgers.size(); ++bi)
    CHECK(env.at(bi, 5) == doctest::Approx(psi0.burgers[bi].lpNorm<1>() / (4 * kPi)).epsilon(1e-12));

  const auto g = verify_growth(env);
  CHECK(g.c0 > 0);
  CHECK(g.c0 <= g.c1);

  const auto ms = expand_certificate(env, b2, 3);
  CHECK(ms.network.size() == 2u);
  for (const auto& s : ms.network.segments()) CHECK((s.burgers - Vector3d::UnitX()).norm() == 0.0);
  CHECK(ms.energy == doctest::Approx(2 * psi0.at(b0, 3)).epsilon(1e-12));
  CHECK(ms.frank_residual == 0.0);

  const auto straight = expand_certificate(env, b0, 7);
  CHECK(straight.network.size() == 1u);
  CHECK(straight.depth == 0);
  CHECK((straight.network.segments()[0].end - straight.network.segments()[0].start -
         psi0.grid.vertices[7]).norm() < 1e-15);
}

TEST_CASE("norm input is a fixed point") {
  const auto psi0 = make_psi0_table(kCubic, 3, icosphere(2),
                                    [](const Vector3d& b, const Vector3d&) { return b.norm(); });
  const auto env = relax_envelope(psi0);
  CHECK(env.converged);
  CHECK(env.iterations == 1);
  CHECK(env.values == psi0.values);
  for (const auto& h : env.history) CHECK(h.size() == 1u);
  const auto g = verify_growth(env);
  CHECK(g.c0 == doctest::Approx(1).epsilon(1e-14));
  CHECK(g.c1 == doctest::Approx(1).epsilon(1e-14));
}

TEST_CASE("scaling the input scales the envelope exactly") {
  const auto grid = icosphere(1);
  const auto a = make_psi0_table(kCubic, 2, grid, faceted);
  const auto b = make_psi0_table(kCubic, 2, grid,
                                 [](const Vector3d& v, const Vector3d& t) { return 2 * faceted(v, t); });
  const auto ea = relax_envelope(a), eb = relax_envelope(b);
  CHECK(ea.iterations == eb.iterations);
  for (std::size_t e = 0; e < ea.values.size(); ++e) CHECK(eb.values[e] == 2 * ea.values[e]);
  const auto ga = verify_growth(ea), gb = verify_growth(eb);
  CHECK(gb.c0 == 2 * ga.c0);
  CHECK(gb.c1 == 2 * ga.c1);
}

TEST_CASE("fixed point is subadditive and satisfies the triangle inequality") {
  const auto psi0 = make_psi0_table(kCubic, 2, icosphere(2), faceted);
  const auto env = relax_envelope(psi0);
  REQUIRE(env.converged);
  CHECK(env.iterations > 1);
  const std::size_t nb = psi0.burgers.size(), nd = env.n_dirs();

  // monotone history per entry
  for (const auto& h : env.history)
    for (std::size_t k = 1; k < h.size(); ++k) {
      CHECK(h[k].value < h[k - 1].value);
      CHECK(h[k].iteration > h[k - 1].iteration);
    }

  for (std::size_t i = 1; i < nb; ++i)
    for (std::size_t j = 1; j < nb; ++j) {
      const int k = psi0.burgers_index(psi0.burgers[i] + psi0.burgers[j]);
      if (k < 0) continue;
      for (std::size_t ti = 0; ti < nd; ti += 7)
        CHECK(env.at(k, ti) <= (env.at(i, ti) + env.at(j, ti)) * (1 + 1e-12));
    }
  const auto splits = direction_splits(psi0.grid.vertices);
  bool improved = false;
  for (std::size_t ti = 0; ti < nd; ++ti) {
    for (const auto& s : splits[ti])
      CHECK(env.at(1, ti) <= (s.l1 * env.at(1, s.t1) + s.l2 * env.at(1, s.t2)) * (1 + 1e-12));
    improved = improved || env.at(1, ti) < psi0.at(1, ti) * (1 - 1e-6);
  }
  CHECK(improved);
}

TEST_CASE("refining the grid never raises shared entries") {
  const auto coarse = relax_envelope(make_psi0_table(kCubic, 2, icosphere(1), faceted));
  const auto fine = relax_envelope(make_psi0_table(kCubic, 2, icosphere(2), faceted));
  REQUIRE(coarse.psi0.burgers.size() == fine.psi0.burgers.size());
  for (std::size_t bi = 0; bi < coarse.psi0.burgers.size(); ++bi)
    for (std::size_t ti = 0; ti < coarse.n_dirs(); ++ti)
      CHECK(fine.at(bi, ti) <= coarse.at(bi, ti) + 1e-10);
}

TEST_CASE("certificates reproduce table values") {
  const auto env = relax_envelope(make_psi0_table(kCubic, 2, icosphere(2), faceted));
  int deep = 0;
  for (std::size_t bi = 1; bi < env.psi0.burgers.size(); bi += 3)
    for (std::size_t ti = 0; ti < env.n_dirs(); ti += 11) {
      const auto ms = expand_certificate(env, bi, ti);
      CHECK(std::abs(ms.energy - ms.table_value) <= 1e-8 * ms.table_value);
      CHECK(ms.frank_residual <= 1e-12);
      for (const auto& s : ms.network.segments()) CHECK(env.psi0.lattice.contains(s.burgers));
      if (env.at(bi, ti) == env.psi0.at(bi, ti)) CHECK(ms.network.size() == 1u);
      deep = std::max(deep, ms.depth);
    }
  CHECK(deep >= 2);
  // more zigzag repeats keep the energy and shrink the excursion
  const auto a = expand_certificate(env, 1, 3, 1), b = expand_certificate(env, 1, 3, 4);
  CHECK(a.energy == doctest::Approx(b.energy).epsilon(1e-12));
  CHECK(b.max_radius <= a.max_radius + 1e-15);
}

TEST_CASE("interpolation is exact at vertices and linear on faces") {
  const auto env = relax_envelope(make_psi0_table(kCubic, 2, icosphere(1), faceted));
  const auto& v = env.psi0.grid.vertices;
  const Vector3d b = Vector3d::UnitY();
  const int bi = env.psi0.burgers_index(b);
  for (std::size_t ti = 0; ti < v.size(); ++ti)
    CHECK(env.interpolate(b, v[ti]) == doctest::Approx(env.at(bi, ti)).epsilon(1e-13));
  const auto& f = env.psi0.grid.faces[4];
  const Vector3d c = v[f[0]] + v[f[1]] + v[f[2]];
  CHECK(env.interpolate(b, c) ==
        doctest::Approx((env.at(bi, f[0]) + env.at(bi, f[1]) + env.at(bi, f[2])) / 3).epsilon(1e-12));
  CHECK_THROWS_AS(env.interpolate(Vector3d(5, 0, 0), v[0]), ValidationError);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(make_psi0_table(kCubic, 2, icosphere(0),
                                  [](const Vector3d&, const Vector3d&) { return -1.0; }),
                  ValidationError);
  CHECK_THROWS_AS(make_psi0_table(kCubic, 2, icosphere(0),
                                  [](const Vector3d&, const Vector3d&) { return 1.0; }),
                  ValidationError);
  const auto zero = relax_envelope(
      make_psi0_table(kCubic, 2, icosphere(0), [](const Vector3d&, const Vector3d&) { return 0.0; }));
  CHECK_THROWS_AS(verify_growth(zero), SolverError);
}

TEST_CASE("anisotropic tensor, full grid") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto psi0 = build_psi0_table(cubic_tensor(), kCubic, 3, 3);
  const auto env = relax_envelope(psi0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("level 3, bmax 3: " << secs << " s, " << env.iterations << " sweeps");
  CHECK(psi0.n_dirs() == 642u);
  CHECK(env.converged);
  for (std::size_t e = 0; e < env.values.size(); ++e) CHECK(env.values[e] <= psi0.values[e]);
  // table entries agree with direct solves
  for (std::size_t ti : {0u, 100u, 641u}) {
    const Vector3d b = psi0.burgers[9];
    CHECK(psi0.at(9, ti) ==
          doctest::Approx(solve_self_energy(cubic_tensor(), b, psi0.grid.vertices[ti]).value).epsilon(1e-10));
  }
  const auto g = verify_growth(env);
  CHECK(g.c0 > 0);
  CHECK(g.c0 <= g.c1);
  CHECK(secs < 300);
}
