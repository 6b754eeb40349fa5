#include "linetension/acceptance.hpp"

#include "linetension/cell.hpp"
#include "linetension/envelope.hpp"
#include "linetension/fields.hpp"
#include "linetension/selfenergy.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <random>
#include <sstream>

namespace linetension {

namespace fixtures {

ElasticTensord cubic_tensor() {
  ElasticTensord::Voigt v = ElasticTensord::Voigt::Zero();
  v.topLeftCorner<3, 3>().setConstant(1.2);
  v.diagonal().head<3>().setConstant(2.5);
  v.diagonal().tail<3>().setConstant(0.8);
  return ElasticTensord::from_voigt(v);
}

ElasticTensord isotropic_tensor() {
  const double mu = 1, nu = 0.3;
  return ElasticTensord::isotropic(mu, 2 * mu * nu / (1 - 2 * nu));
}

PolyhedralMeasure square_loop(const Vector3d& b, double side) {
  const Vector3d p0(0, 0, 0), p1(side, 0, 0), p2(side, side, 0), p3(0, side, 0);
  return PolyhedralMeasure(BurgersLattice::cubic(),
                           {{p0, p1, b}, {p1, p2, b}, {p2, p3, b}, {p3, p0, b}});
}

Box square_loop_box() { return Box{Vector3d(-0.5, -0.5, -1), Vector3d(1.5, 1.5, 1)}; }

ScaleSchedule gamma_schedule() { return ScaleSchedule{1, 0.5, 0.05, 0.05}; }

}  // namespace fixtures

namespace {

struct Checks {
  bool ok = true;
  std::string first;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      first = what;
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vector3d v;
  do v = Vector3d(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-3);
  return v.normalized();
}

struct Context {
  const AcceptanceOptions& opt;
  Checks& checks;
  Json& m;
};

// ---------------------------------------------------------------- 1
void isotropic_oracle(Context& c) {
  const auto C = fixtures::isotropic_tensor();
  const double nu = 0.3;
  struct Case {
    const char* name;
    Vector3d b, t;
    double expected;
  };
  const Vector3d t = Vector3d(1, 2, 2) / 3;
  const std::vector<Case> cases{
      {"screw", Vector3d::UnitZ(), Vector3d::UnitZ(), 1 / (4 * kPi)},
      {"edge", Vector3d::UnitX(), Vector3d::UnitZ(), 1 / (4 * kPi * (1 - nu))},
      {"screw_oblique", t, t, 1 / (4 * kPi)},
      {"edge_oblique", t.unitOrthogonal(), t, 1 / (4 * kPi * (1 - nu))},
  };
  for (const auto& k : cases) {
    const auto t0 = std::chrono::steady_clock::now();
    const double v = solve_self_energy(C, k.b, k.t, 256).value;
    const double dt = seconds_since(t0);
    const double err = rel(v, k.expected);
    c.m[k.name] = {{"psi0", v}, {"expected", k.expected}, {"rel_error", err}};
    c.checks.require(err <= 1e-2, std::string(k.name) + " off by more than 1%");
    c.checks.require(dt < 1.0, std::string(k.name) + " took longer than 1 s");
  }
}

// ---------------------------------------------------------------- 2
ElasticTensord fixture_tensor(const AcceptanceOptions& opt) {
  const auto C = fixtures::cubic_tensor();
  if (!opt.break_minor_symmetry) return C;
  ElasticTensord::Matrix m = C.matrix();
  m(1, 1) += 0.25;  // C_0101 only; C_0110 and C_1010 untouched
  return ElasticTensord(m);
}

void homogeneity(Context& c) {
  const auto C = fixture_tensor(c.opt);
  std::mt19937_64 rng(c.opt.seed + 2);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0;
  for (int k = 0; k < 20; ++k) {
    const Vector3d b(u(rng), u(rng), u(rng));
    const Vector3d t = random_unit(rng);
    const double base = solve_self_energy(C, b, t, 256).value;
    for (double lam : {2.0, 3.0, 0.5}) {
      const double v = solve_self_energy(C, lam * b, t, 256).value;
      worst = std::max(worst, rel(v, lam * lam * base));
    }
  }
  c.m["max_rel_error"] = worst;
  c.checks.require(worst <= 1e-8, "Psi0(lambda b, t) != lambda^2 Psi0(b, t) within 1e-8");

  // frame indifference of the quadratic energy: skew parts cost nothing
  const double scale = C.matrix().cwiseAbs().maxCoeff();
  const double skew_err = C.skew_kernel_error() / scale;
  double energy_shift = 0;
  for (int k = 0; k < 20; ++k) {
    Matrix3d e, w;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        e(i, j) = u(rng);
        w(i, j) = u(rng);
      }
    e = sym(e);
    w = skew(w);
    energy_shift = std::max(energy_shift, std::abs(C.energy(e + w) - C.energy(e)) / (scale * e.squaredNorm()));
  }
  c.m["skew_kernel_error"] = skew_err;
  c.m["skew_energy_shift"] = energy_shift;
  c.checks.require(skew_err <= 1e-12 && energy_shift <= 1e-12,
                   "frame indifference: C does not annihilate skew matrices");
}

// ---------------------------------------------------------------- 3
void growth(Context& c) {
  const auto C = fixtures::cubic_tensor();
  const auto lattice = BurgersLattice::cubic();
  const auto grid = icosphere(3);
  std::vector<Vector3d> ball;
  for (const auto& b : lattice.ball(3))
    if (b.norm() > 0) ball.push_back(b);
  const auto g = self_energy_growth(C, ball, grid.vertices, 256, c.opt.threads);
  c.m["burgers"] = ball.size();
  c.m["directions"] = grid.vertices.size();
  c.m["c0"] = g.c0;
  c.m["c1"] = g.c1;
  c.checks.require(grid.vertices.size() == 642, "direction grid is not 642 points");
  c.checks.require(g.c0 > 0 && g.c0 <= g.c1 && std::isfinite(g.c1), "Psi0 growth constants not 0 < c0 <= c1");

  const auto psi0 = build_psi0_table(C, lattice, 3, 3, 256, c.opt.threads);
  RelaxOptions ro;
  ro.threads = c.opt.threads;
  const auto env = relax_envelope(psi0, ro);
  c.checks.require(env.converged, "envelope relaxation did not converge");
  // Psi0 bounds checked on the table itself
  bool psi0_in_bounds = true, below = true;
  for (std::size_t bi = 0; bi < psi0.burgers.size(); ++bi) {
    const double n2 = psi0.burgers[bi].squaredNorm();
    for (std::size_t ti = 0; ti < psi0.n_dirs(); ++ti) {
      const double p = psi0.at(bi, ti);
      if (n2 > 0 && (p < g.c0 * n2 * (1 - 1e-9) || p > g.c1 * n2 * (1 + 1e-9))) psi0_in_bounds = false;
      if (env.at(bi, ti) > p * (1 + 1e-12) + 1e-15) below = false;
    }
  }
  c.checks.require(psi0_in_bounds, "a table entry violates c0 |b|^2 <= Psi0 <= c1 |b|^2");
  c.checks.require(below, "envelope exceeds Psi0");
  const auto fit = verify_growth(env);
  c.m["c0_tilde"] = fit.c0;
  c.m["c1_tilde"] = fit.c1;
  c.checks.require(fit.c0 > 0 && fit.c0 <= fit.c1, "envelope growth constants not 0 < c0 <= c1");

  const Vector3d b0 = lattice.generators().col(0);
  const int i2 = psi0.burgers_index(2 * b0);
  double best = 0;
  if (i2 >= 0)
    for (std::size_t ti = 0; ti < psi0.n_dirs(); ++ti) {
      const double p = psi0.at(i2, ti);
      best = std::max(best, (p - env.at(i2, ti)) / p);
    }
  c.m["max_gap_fraction_2b0"] = best;
  c.checks.require(best >= 0.4, "gap at 2 b0 below 40% of Psi0");
}

// ---------------------------------------------------------------- 4
CellSpec cell_fixture(const Vector3d& b, double r_over_R, int per_decade, int n_theta) {
  CellSpec s;
  s.b = b;
  s.t = Vector3d(1, 2, 2) / 3;
  s.R = 1;
  s.r = r_over_R;
  s.h = 8;
  s.mesh = {std::max(4, static_cast<int>(std::lround(per_decade * std::log10(1 / r_over_R)))), n_theta};
  return s;
}

void linear_cell(Context& c) {
  const auto C = fixtures::cubic_tensor();
  const Vector3d b(1, -1, 0);
  Json pts = Json::array();
  double prev_gap = 1e300, worst_ratio = 0, worst_time = 0;
  bool decreasing = true;
  for (double rr : {1e-1, 1e-2, 1e-3}) {
    const auto spec = cell_fixture(b, rr, 43, 256);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = solve_linear_cell(spec, C);
    worst_time = std::max(worst_time, seconds_since(t0));
    const double gap = r.psi0 - r.value;
    pts.push_back({{"r_over_R", rr}, {"value", r.value}, {"psi0", r.psi0}, {"gap", gap},
                   {"constraint_residual", r.constraint_residual}});
    worst_ratio = std::max(worst_ratio, r.value / r.psi0);
    if (!(gap < prev_gap)) decreasing = false;
    prev_gap = gap;
  }
  c.m["points"] = pts;
  c.checks.require(worst_ratio <= 1.02, "Psi > 1.02 Psi0");
  c.checks.require(decreasing, "gap Psi0 - Psi not decreasing in r/R");
  c.checks.require(worst_time < 120, "a cell point took longer than 2 min");

  auto spec = cell_fixture(b, 1e-2, 43, 256);
  const double v = solve_linear_cell(spec, C).value;
  spec.h *= 5;
  spec.r *= 5;
  spec.R *= 5;
  const double scaled_err = rel(solve_linear_cell(spec, C).value, v);
  c.m["scaling_rel_error"] = scaled_err;
  c.checks.require(scaled_err <= 1e-9, "scaling k = 5 changes the value by more than 1e-9");
}

// ---------------------------------------------------------------- 5
void nonlinear_cell(Context& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto model = EnergyModel::prototype();
  const Vector3d b(1, 0, 0);
  NonlinearCellSpec base;
  base.base = cell_fixture(b, 0.1, 43, 64);
  base.lambda = 0.1;
  const double ref = solve_nonlinear_cell(base, model).value;

  std::mt19937_64 rng(c.opt.seed + 5);
  double frame = 0;
  for (int k = 0; k < 5; ++k) {
    const Rotation q = random_rotation(rng);
    NonlinearCellSpec a = base, id = base;
    a.Q = q;
    id.base.b = q.matrix().transpose() * b;
    frame = std::max(frame, rel(solve_nonlinear_cell(a, model).value, solve_nonlinear_cell(id, model).value));
  }
  c.m["frame_rel_error"] = frame;
  c.checks.require(frame <= 1e-8, "frame indifference violated beyond 1e-8");

  NonlinearCellSpec scaled = base;
  scaled.base.h *= 3;
  scaled.base.r *= 3;
  scaled.base.R *= 3;
  const double scale_err = rel(solve_nonlinear_cell(scaled, model).value, ref);
  c.m["scaling_rel_error"] = scale_err;
  c.checks.require(scale_err <= 1e-8, "scaling k = 3 violated beyond 1e-8");

  Json lam_values = Json::array();
  double prev = -1;
  bool monotone = true;
  for (double lam : {0.0, 0.01, 0.1, 1.0}) {
    NonlinearCellSpec l = base;
    l.lambda = lam;
    const double v = solve_nonlinear_cell(l, model).value;
    lam_values.push_back({{"lambda", lam}, {"value", v}});
    if (v < prev) monotone = false;
    prev = v;
  }
  c.m["lambda_values"] = lam_values;
  c.checks.require(monotone, "nonlinear value not monotone in lambda");

  ScanSchedule sc;
  sc.r_over_R = {1e-1, 1e-2, 1e-3};
  sc.h_over_R = {8, 8, 8};
  sc.lambda = {1, 1e-1, 1e-2};
  sc.rho_per_decade = 43;
  sc.n_theta = 256;
  const Rotation q = random_rotation(rng);
  const auto rep = cell_convergence_scan(b, Vector3d::UnitZ(), q, model, sc, c.opt.threads);
  Json pts = Json::array();
  for (const auto& p : rep.points)
    pts.push_back({{"r_over_R", p.r_over_R}, {"lambda", p.lambda}, {"value", p.nonlinear_value},
                   {"gap", p.nonlinear_gap}});
  c.m["nested_scan"] = pts;
  c.m["psi0_rotated"] = rep.psi0_nonlinear;
  c.checks.require(rep.nonlinear_gap_decreasing, "nested-limit gap not decreasing");
  c.checks.require(seconds_since(t0) < 600, "criterion took longer than 10 min");
}

// ---------------------------------------------------------------- 6
void kernel_estimates(Context& c) {
  const auto sq = fixtures::square_loop();
  std::vector<DecayConstants> d;
  Json grid = Json::array();
  for (int n : {16, 32, 64}) {
    d.push_back(kernel_decay_constants(sq, fixtures::square_loop_box(), n, c.opt.threads));
    grid.push_back({{"n", n}, {"mass", d.back().mass}, {"lines", d.back().lines}});
  }
  c.m["decay"] = grid;
  double var = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    c.checks.require(std::isfinite(d[i].mass) && std::isfinite(d[i].lines), "decay constant not finite");
    var = std::max({var, rel(d[i].mass, d[i - 1].mass), rel(d[i].lines, d[i - 1].lines)});
  }
  c.m["max_variation"] = var;
  c.checks.require(var < 0.2, "decay constants vary by 20% or more under refinement");

  const Vector3d b(0, 1, 1);
  const KernelField k(fixtures::square_loop(b));
  auto f = [&](const Vector3d& x) { return k(x); };
  const Vector3d mid(0.5, 0, 0), t = Vector3d::UnitX();
  const std::vector<std::pair<std::string, ProbeLoop>> loops{
      {"circle", ProbeLoop::circle(mid, t, 0.2)},
      {"ellipse", ProbeLoop::ellipse(mid, t, 0.3, 0.1, 0.7)},
      {"square", square_probe(mid, t, 0.15)}};
  for (const auto& [name, loop] : loops) {
    const double err = (loop_circulation(f, loop) - b).norm() / b.norm();
    c.m["circulation_" + name] = err;
    c.checks.require(err <= 1e-3, name + " loop circulation off by more than 1e-3");
  }
}

// ---------------------------------------------------------------- 7
void rigidity(Context& c) {
  const auto model = EnergyModel::anharmonic(0.8);
  Json pts = Json::array();
  std::vector<double> ratios;
  for (double rr : {0.1, 0.05, 0.025}) {
    NonlinearCellSpec s;
    s.base = cell_fixture(Vector3d(0, 1, 0), rr, 43, 64);
    const auto res = solve_nonlinear_cell(s, model);
    const double ratio = cell_rigidity_ratio(res, s.base, 32, 64);
    ratios.push_back(ratio);
    pts.push_back({{"r_over_R", rr}, {"ratio", ratio}, {"gradient_norm", res.gradient_norm}});
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  c.m["points"] = pts;
  c.m["max_over_min"] = *hi / *lo;
  c.checks.require(std::isfinite(*hi) && *lo > 0, "rigidity ratio not finite");
  c.checks.require(*hi / *lo < 3, "rigidity ratio max/min >= 3");
}

// ---------------------------------------------------------------- 8
void gamma_trend(Context& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> eps{1e-2, 3e-3, 1e-3};
  GammaScanOptions go;
  go.quadrature.threads = c.opt.threads;
  go.recovery.threads = c.opt.threads;
  {
    const auto model = EnergyModel::prototype();
    const auto env = limit_envelope(hessian_at_identity(model), Rotation(), BurgersLattice::cubic(), 1.0, 2,
                                    256, c.opt.threads);
    const auto r = gamma_scan(fixtures::square_loop(), AffineStrain{}, Rotation(), model, eps,
                              fixtures::gamma_schedule(), fixtures::square_loop_box(), env, go);
    c.m["loop"] = {{"eps", r.eps}, {"F_eps", r.F_eps}, {"F0", r.F0}, {"gaps", r.gaps},
                   {"relative_change", r.relative_change}, {"monotone_tail", r.monotone_tail}};
    const double ratio = r.F_eps.back() / r.F0;
    c.m["loop"]["finest_ratio"] = ratio;
    c.checks.require(r.monotone_tail, "square-loop gaps not nonincreasing");
    c.checks.require(ratio >= 0.5 && ratio <= 1.5, "F_eps / F0 outside [0.5, 1.5] at the finest eps");
  }
  {
    const auto model = EnergyModel::anharmonic(0.8);
    const auto C = hessian_at_identity(model);
    const auto env = limit_envelope(C, Rotation(), BurgersLattice::cubic(), 1.0, 1, 256, c.opt.threads);
    const Box box{Vector3d(0, 0, 0), Vector3d(1, 1, 1)};
    Matrix3d e;
    e << 0.8, 0.3, -0.2, 0.3, -0.5, 0.1, -0.2, 0.1, 0.4;
    const auto r = gamma_scan(PolyhedralMeasure(), AffineStrain::uniform(e), Rotation(), model, eps,
                              fixtures::gamma_schedule(), box, env, go);
    auto delta = [](double x) { return x * std::sqrt(std::log(1 / x)); };
    const double slope = std::log(r.gaps.back() / r.gaps.front()) / std::log(delta(eps.back()) / delta(eps.front()));
    const double expected = e.squaredNorm() * volume(box);
    c.m["bulk"] = {{"F_eps", r.F_eps}, {"F0", r.F0}, {"expected_F0", expected}, {"gaps", r.gaps},
                   {"slope", slope}};
    c.checks.require(rel(r.F0, expected) <= 1e-6, "F0 != |sym E|^2 |box|");
    c.checks.require(slope >= 0.8 && slope <= 1.2, "mu = 0 log-log slope outside [0.8, 1.2]");
  }
  c.checks.require(seconds_since(t0) < 900, "criterion took longer than 15 min");
}

// ---------------------------------------------------------------- 9
AcceptanceReport run_ids(const AcceptanceOptions& opt, const std::vector<int>& ids);

void determinism(Context& c) {
  AcceptanceOptions o = c.opt;
  const std::vector<int> ids{1, 2, 6};
  const std::string a = run_ids(o, ids).payload().dump();
  const std::string b = run_ids(o, ids).payload().dump();
  c.m["repeat_payload_bytes"] = a.size();
  c.m["repeat_identical"] = a == b;
  c.checks.require(a == b, "repeated runs produced different payloads");

  o.threads = c.opt.threads == 1 ? 3 : 1;
  const std::string t = run_ids(o, ids).payload().dump();
  c.m["thread_identical"] = a == t;
  c.checks.require(a == t, "payload depends on the thread count");

  // energy quadrature reduction under different thread counts
  const auto model = EnergyModel::anharmonic(0.8);
  Matrix3d e;
  e << 0.8, 0.3, -0.2, 0.3, -0.5, 0.1, -0.2, 0.1, 0.4;
  const auto strain = assemble_recovery(PolyhedralMeasure(), Rotation(), AffineStrain::uniform(e), 1e-2, 0.1,
                                        hessian_at_identity(model));
  QuadratureOptions q1, q3;
  q1.threads = 1;
  q3.threads = 3;
  const Box box{Vector3d(0, 0, 0), Vector3d(1, 1, 1)};
  const double e1 = energy_of_strain(strain, model, box, q1).value;
  const double e3 = energy_of_strain(strain, model, box, q3).value;
  c.m["energy_thread_difference"] = std::abs(e1 - e3);
  c.checks.require(std::abs(e1 - e3) <= 1e-12 * std::abs(e1), "energy depends on the thread count");
}

struct Criterion {
  int id;
  const char* name;
  std::function<void(Context&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "isotropic self-energy oracle", isotropic_oracle},
      {2, "quadratic homogeneity and frame indifference", homogeneity},
      {3, "growth bounds and envelope", growth},
      {4, "linear cell asymptotics", linear_cell},
      {5, "nonlinear cell identities", nonlinear_cell},
      {6, "kernel-field estimates", kernel_estimates},
      {7, "rigidity diagnostic", rigidity},
      {8, "Gamma-scan trend", gamma_trend},
      {9, "determinism", determinism},
  };
  return all;
}

AcceptanceReport run_ids(const AcceptanceOptions& opt, const std::vector<int>& ids) {
  AcceptanceReport rep;
  for (int id : ids) {
    const auto& crit = criteria()[id - 1];
    CriterionResult r;
    r.id = id;
    r.name = crit.name;
    r.metrics = Json::object();
    Checks checks;
    Context ctx{opt, checks, r.metrics};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      crit.run(ctx);
    } catch (const std::exception& e) {
      checks.require(false, std::string("error: ") + e.what());
    }
    r.seconds = seconds_since(t0);
    r.pass = checks.ok;
    r.detail = checks.first;
    rep.results.push_back(std::move(r));
  }
  return rep;
}

}  // namespace

bool AcceptanceReport::all_pass() const {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

Json AcceptanceReport::payload() const {
  Json list = Json::array();
  for (const auto& r : results)
    list.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"metrics", r.metrics}});
  return Json{{"criteria", list}, {"all_pass", all_pass()}};
}

std::string AcceptanceReport::lines() const {
  std::ostringstream out;
  for (const auto& r : results) {
    char t[32];
    std::snprintf(t, sizeof t, "%.2f", r.seconds);
    out << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << " " << r.name << " (" << t << " s)";
    if (!r.pass) out << ": " << r.detail;
    out << '\n';
  }
  return out.str();
}

std::vector<int> suite_criteria(const std::string& suite) {
  if (suite == "identities") return {1, 2, 6, 9};
  if (suite == "convergence") return {3, 4, 5, 7, 8};
  if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9};
  if (suite.size() == 1 && suite[0] >= '1' && suite[0] <= '9') return {suite[0] - '0'};
  throw ValidationError("unknown acceptance suite '" + suite +
                        "' (expected identities, convergence, all or 1-9)");
}

AcceptanceReport run_acceptance(const AcceptanceOptions& opt) {
  if (opt.threads < 1) throw ValidationError("threads must be >= 1");
  return run_ids(opt, suite_criteria(opt.suite));
}

}  // namespace linetension
