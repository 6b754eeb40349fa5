#include "linetension/acceptance.hpp"
#include "linetension/cell.hpp"
#include "linetension/envelope.hpp"
#include "linetension/fields.hpp"
#include "linetension/io.hpp"
#include "linetension/parallel.hpp"
#include "linetension/selfenergy.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <iostream>
#include <map>

using namespace linetension;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Global {
  int threads = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::string format;
  std::string envelope;
};

struct Output {
  std::string payload;
  std::string format;  // csv | json
  Json config;
  int status = 0;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// path, or inline JSON when the argument starts with '{' or '['
Json json_arg(const std::string& arg, const std::string& what) {
  if (!arg.empty() && (arg[0] == '{' || arg[0] == '[')) return parse_json(arg, what);
  return load_json(arg);
}

Vector3d vec3(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 3) throw ValidationError(what + " needs 3 comma-separated numbers");
  return Vector3d(v[0], v[1], v[2]);
}

Vector3d unit_direction(const std::vector<double>& v) {
  const Vector3d t = vec3(v, "--direction");
  if (!(t.norm() > 0)) throw ValidationError("--direction must be nonzero");
  return t.normalized();
}

EnergyModel model_arg(const std::string& name) {
  if (name == "prototype") return EnergyModel::prototype();
  if (name == "anharmonic") return EnergyModel::anharmonic(0.8);
  if (name.rfind("anharmonic:", 0) == 0) {
    try {
      return EnergyModel::anharmonic(std::stod(name.substr(11)));
    } catch (const std::logic_error&) {
      throw ValidationError("bad anharmonic parameter in --model " + name);
    }
  }
  throw ValidationError("unknown --model '" + name + "' (prototype, anharmonic, anharmonic:GAMMA)");
}

Rotation rotation_arg(const std::vector<double>& v) {
  if (v.empty()) return Rotation();
  if (v.size() != 4) throw ValidationError("--rotation needs ax,ay,az,angle");
  const Vector3d axis(v[0], v[1], v[2]);
  if (!(axis.norm() > 0)) {
    if (v[3] == 0) return Rotation();
    throw ValidationError("--rotation axis must be nonzero");
  }
  return Rotation::from_axis_angle(axis.normalized(), v[3]);
}

Json vec_json(const Vector3d& v) { return Json::array({v(0), v(1), v(2)}); }

// tabular payload in the requested format
void emit_table(Output& o, const CsvTable& t, const std::string& format) {
  o.format = format.empty() ? "csv" : format;
  o.payload = o.format == "csv" ? write_csv(t) : csv_to_json(t).dump(2) + "\n";
}

void emit_json(Output& o, const Json& j, const std::string& format) {
  if (format == "csv") throw ValidationError("this subcommand writes JSON only (--format json)");
  o.format = "json";
  o.payload = j.dump(2) + "\n";
}

// ---------------------------------------------------------------- selfenergy

struct SelfEnergyArgs {
  std::string tensor, model = "prototype";
  std::vector<double> burgers, direction;
  int ntheta = 256;
  double bmax = 0;
  int level = -1;
};

ElasticTensord tensor_or_model(const std::string& tensor, const std::string& model) {
  if (!tensor.empty()) return tensor_from_json(json_arg(tensor, "--tensor"));
  return hessian_at_identity(model_arg(model));
}

Output run_selfenergy(const SelfEnergyArgs& a, const Global& g) {
  Output o;
  const auto C = tensor_or_model(a.tensor, a.model);
  if (a.ntheta < 8) throw ValidationError("--ntheta must be >= 8");
  o.config = {{"tensor", tensor_to_json(C)}, {"ntheta", a.ntheta}};
  CsvTable t{schema::selfenergy, {}};
  if (a.level >= 0) {
    if (!(a.bmax > 0)) throw ValidationError("scan mode needs --bmax > 0");
    o.config["bmax"] = a.bmax;
    o.config["level"] = a.level;
    const auto table = build_psi0_table(C, BurgersLattice::cubic(), a.bmax, a.level, a.ntheta, g.threads);
    for (std::size_t bi = 0; bi < table.burgers.size(); ++bi)
      for (std::size_t ti = 0; ti < table.n_dirs(); ++ti) {
        const Vector3d& b = table.burgers[bi];
        const Vector3d& d = table.grid.vertices[ti];
        // residuals are not evaluated in scan mode
        t.rows.push_back({b(0), b(1), b(2), d(0), d(1), d(2), double(a.ntheta), table.at(bi, ti), -1, -1});
      }
  } else {
    const Vector3d b = vec3(a.burgers, "--burgers");
    const Vector3d d = unit_direction(a.direction);
    o.config["burgers"] = vec_json(b);
    o.config["direction"] = vec_json(d);
    const auto r = solve_self_energy(C, b, d, a.ntheta);
    const double eq = check_equilibrium(r.profile, C);
    t.rows.push_back({b(0), b(1), b(2), d(0), d(1), d(2), double(a.ntheta), r.value, r.constraint_residual, eq});
  }
  emit_table(o, t, g.format);
  return o;
}

// ---------------------------------------------------------------- envelope

struct EnvelopeArgs {
  std::string psi0, tensor, model;
  double bmax = 0;
  int level = 2;
  int ntheta = 256;
};

Psi0Table psi0_from_csv(const std::string& path, double bmax, int level) {
  const CsvTable in = parse_csv(read_file(path), schema::selfenergy);
  const auto grid = icosphere(level);
  std::map<std::array<long long, 6>, double> lookup;
  auto key = [](const Vector3d& b, const Vector3d& t) {
    std::array<long long, 6> k{};
    for (int i = 0; i < 3; ++i) {
      k[i] = std::llround(b(i) * 1e6);
      k[3 + i] = std::llround(t(i) * 1e6);
    }
    return k;
  };
  for (const auto& r : in.rows) lookup[key({r[0], r[1], r[2]}, {r[3], r[4], r[5]})] = r[7];
  return make_psi0_table(BurgersLattice::cubic(), bmax, grid, [&](const Vector3d& b, const Vector3d& t) {
    if (b.norm() == 0) return 0.0;
    const auto it = lookup.find(key(b, t));
    if (it == lookup.end())
      throw ValidationError("--psi0 table has no row for b = (" + format_number(b(0)) + "," +
                            format_number(b(1)) + "," + format_number(b(2)) + ") at a level-" +
                            std::to_string(grid.level) + " direction");
    return it->second;
  });
}

Output run_envelope(const EnvelopeArgs& a, const Global& g) {
  Output o;
  if (!(a.bmax > 0)) throw ValidationError("--bmax must be > 0");
  if (a.level < 0 || a.level > 5) throw ValidationError("--level must be in 0..5");
  o.config = {{"bmax", a.bmax}, {"level", a.level}};
  Psi0Table psi0;
  if (!a.psi0.empty()) {
    o.config["psi0"] = a.psi0;
    psi0 = psi0_from_csv(a.psi0, a.bmax, a.level);
  } else if (!a.tensor.empty() || !a.model.empty()) {
    const auto C = tensor_or_model(a.tensor, a.model.empty() ? "prototype" : a.model);
    o.config["tensor"] = tensor_to_json(C);
    o.config["ntheta"] = a.ntheta;
    psi0 = build_psi0_table(C, BurgersLattice::cubic(), a.bmax, a.level, a.ntheta, g.threads);
  } else {
    throw ValidationError("envelope needs --psi0, --tensor or --model");
  }
  RelaxOptions ro;
  ro.threads = g.threads;
  const auto env = relax_envelope(psi0, ro);
  if (!env.converged) throw SolverError("envelope relaxation did not converge");
  CsvTable t{schema::envelope, {}};
  for (std::size_t bi = 0; bi < psi0.burgers.size(); ++bi)
    for (std::size_t ti = 0; ti < psi0.n_dirs(); ++ti) {
      const Vector3d& b = psi0.burgers[bi];
      const Vector3d& d = psi0.grid.vertices[ti];
      t.rows.push_back({b(0), b(1), b(2), d(0), d(1), d(2), psi0.at(bi, ti), env.at(bi, ti),
                        double(env.certificate_depth(bi, ti))});
    }
  emit_table(o, t, g.format);
  return o;
}

// ---------------------------------------------------------------- cell

struct CellArgs {
  bool nonlinear = false;
  std::vector<double> burgers, direction{0, 0, 1};
  std::vector<double> h{8}, r{1e-2}, R{1}, lambda{0};
  std::vector<double> rotation;
  std::vector<int> mesh{64, 128};
  std::string tensor, model = "prototype";
  int profile_ntheta = 256;
};

Output run_cell(const CellArgs& a, const Global& g) {
  Output o;
  if (a.mesh.size() != 2) throw ValidationError("--mesh needs nr,nt");
  if (a.R.size() != 1) throw ValidationError("--R takes a single value");
  const Vector3d b = vec3(a.burgers, "--burgers");
  const Vector3d t = unit_direction(a.direction);
  const Rotation Q = rotation_arg(a.rotation);
  o.config = {{"mode", a.nonlinear ? "nonlinear" : "linear"},
              {"burgers", vec_json(b)},
              {"direction", vec_json(t)},
              {"h", a.h},
              {"r", a.r},
              {"R", a.R[0]},
              {"mesh", a.mesh}};
  std::optional<EnergyModel> model;
  ElasticTensord C;
  if (a.nonlinear) {
    if (!a.tensor.empty()) throw ValidationError("cell nonlinear takes --model, not --tensor");
    model = model_arg(a.model);
    o.config["model"] = a.model;
    o.config["lambda"] = a.lambda;
    o.config["rotation"] = a.rotation;
  } else {
    C = tensor_or_model(a.tensor, a.model);
    o.config["tensor"] = tensor_to_json(C);
  }

  struct Job {
    double h, r, lambda;
  };
  std::vector<Job> jobs;
  const std::vector<double> lambdas = a.nonlinear ? a.lambda : std::vector<double>{0};
  for (double h : a.h)
    for (double r : a.r)
      for (double lam : lambdas) jobs.push_back({h, r, lam});
  std::vector<std::vector<double>> rows(jobs.size());
  parallel_for(jobs.size(), g.threads, [&](std::size_t k) {
    CellSpec s;
    s.b = b;
    s.t = t;
    s.R = a.R[0];
    s.h = jobs[k].h;
    s.r = jobs[k].r;
    s.mesh = {a.mesh[0], a.mesh[1]};
    s.profile_n_theta = a.profile_ntheta;
    CellResult res;
    if (a.nonlinear) {
      NonlinearCellSpec ns;
      ns.base = s;
      ns.Q = Q;
      ns.lambda = jobs[k].lambda;
      res = solve_nonlinear_cell(ns, *model);
    } else {
      res = solve_linear_cell(s, C);
    }
    rows[k] = {s.r / s.R, s.h / s.R, jobs[k].lambda, res.value, res.gap, res.constraint_residual,
               double(res.iterations)};
  });
  emit_table(o, CsvTable{schema::cell_scan, rows}, g.format);
  return o;
}

// ---------------------------------------------------------------- gamma-scan

struct GammaArgs {
  std::string measure, beta, model = "prototype";
  std::vector<double> rotation, eps{1e-2, 3e-3, 1e-3}, schedule{1, 0.5, 0.05, 0.05}, box;
  int level = 2;
  double kappa = 0.5;
};

Box default_box(const PolyhedralMeasure& m) {
  Box b{Vector3d::Constant(-1), Vector3d::Constant(1)};
  if (m.empty()) return b;
  b.lo = b.hi = m.segments().front().start;
  for (const auto& s : m.segments())
    for (const Vector3d& p : {s.start, s.end}) {
      b.lo = b.lo.cwiseMin(p);
      b.hi = b.hi.cwiseMax(p);
    }
  b.lo.array() -= 0.5;
  b.hi.array() += 0.5;
  return b;
}

Output run_gamma(const GammaArgs& a, const Global& g) {
  Output o;
  const auto measure = measure_from_json(json_arg(a.measure, "--measure"));
  const AffineStrain beta = a.beta.empty() ? AffineStrain{} : beta_from_json(json_arg(a.beta, "--beta"));
  const Rotation Q = rotation_arg(a.rotation);
  const auto model = model_arg(a.model);
  if (a.schedule.size() != 4) throw ValidationError("--schedule needs H,A,a,c");
  const ScaleSchedule sc{a.schedule[0], a.schedule[1], a.schedule[2], a.schedule[3]};
  Box box = default_box(measure);
  if (!a.box.empty()) {
    if (a.box.size() != 6) throw ValidationError("--box needs lox,loy,loz,hix,hiy,hiz");
    box = Box{Vector3d(a.box[0], a.box[1], a.box[2]), Vector3d(a.box[3], a.box[4], a.box[5])};
  }
  if (!(box.hi.array() > box.lo.array()).all()) throw ValidationError("--box must have positive extent");
  double bmax = 1;
  for (const auto& s : measure.segments()) bmax = std::max(bmax, s.burgers.norm());
  const auto C = hessian_at_identity(model);
  const auto env = limit_envelope(C, Q, measure.lattice(), bmax, a.level, 256, g.threads);
  GammaScanOptions go;
  go.quadrature.threads = g.threads;
  go.quadrature.kappa = a.kappa;
  go.recovery.threads = g.threads;
  const auto r = gamma_scan(measure, beta, Q, model, a.eps, sc, box, env, go);
  o.config = {{"measure", measure_to_json(measure)},
              {"beta", beta_to_json(beta)},
              {"rotation", a.rotation},
              {"model", a.model},
              {"eps", a.eps},
              {"schedule", a.schedule},
              {"box", {box.lo(0), box.lo(1), box.lo(2), box.hi(0), box.hi(1), box.hi(2)}},
              {"level", a.level},
              {"kappa", a.kappa}};
  Json p{{"eps", r.eps},
         {"F_eps", r.F_eps},
         {"F0", r.F0},
         {"gaps", r.gaps},
         {"monotone_tail", r.monotone_tail},
         {"limit", {{"bulk", r.limit.bulk}, {"line", r.limit.line}}},
         {"rho", r.rho},
         {"relative_change", r.relative_change},
         {"bound_constant", r.bound_constant}};
  emit_json(o, p, g.format);
  return o;
}

// ---------------------------------------------------------------- check-measure

Output run_check_measure(const std::string& path, const Global& g) {
  Output o;
  const auto m = measure_from_json(json_arg(path, "--measure"));
  const double res = frank_rule_residual(m);
  const auto nodes = build_nodes(m);
  double bmax = 0;
  for (const auto& s : m.segments()) bmax = std::max(bmax, s.burgers.norm());
  const bool closed = res <= 1e-9 * std::max(1.0, bmax);
  o.config = {{"measure", path}};
  emit_json(o,
            Json{{"segments", m.size()},
                 {"nodes", nodes.positions.size()},
                 {"frank_residual", res},
                 {"closed", closed},
                 {"mass", weighted_length(m, 1)}},
            g.format);
  return o;
}

// ---------------------------------------------------------------- accept

Output run_accept(const std::string& suite, bool inject, const Global& g) {
  Output o;
  AcceptanceOptions opt;
  opt.suite = suite;
  opt.threads = g.threads;
  opt.seed = g.seed;
  opt.break_minor_symmetry = inject;
  o.config = {{"suite", suite}, {"seed", g.seed}, {"inject_fault", inject}};
  const auto rep = run_acceptance(opt);
  std::cerr << rep.lines();
  emit_json(o, rep.payload(), g.format);
  o.status = rep.all_pass() ? 0 : 1;
  return o;
}

void diagnostic(const char* kind, const std::string& msg, int code) {
  std::cerr << Json{{"error", kind}, {"message", msg}, {"exit_code", code}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dislocation line-tension energies: self-energies, envelopes, cell problems, Gamma scans"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::Range(1, 1024));
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out, "payload output path (default stdout)");
  app.add_option("--format", g.format, "payload format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--envelope", g.envelope, "write the result envelope JSON here");

  SelfEnergyArgs se;
  auto* sse = app.add_subcommand("selfenergy", "Psi0(b, t) at one point, or a lattice-ball scan");
  sse->add_option("--tensor", se.tensor, "elastic tensor JSON (path or inline)");
  sse->add_option("--model", se.model, "energy model whose Hessian at I is used without --tensor");
  sse->add_option("--burgers", se.burgers, "b as x,y,z")->delimiter(',');
  sse->add_option("--direction", se.direction, "t as x,y,z")->delimiter(',');
  sse->add_option("--ntheta", se.ntheta, "angular nodes");
  sse->add_option("--bmax", se.bmax, "scan mode: lattice ball radius");
  sse->add_option("--level", se.level, "scan mode: icosphere level");

  EnvelopeArgs ev;
  auto* sev = app.add_subcommand("envelope", "relaxed envelope of a Psi0 table");
  sev->add_option("--psi0", ev.psi0, "CSV from a selfenergy scan");
  sev->add_option("--tensor", ev.tensor, "build Psi0 from this tensor instead");
  sev->add_option("--model", ev.model, "build Psi0 from this energy model instead");
  sev->add_option("--bmax", ev.bmax, "lattice ball radius")->required();
  sev->add_option("--level", ev.level, "icosphere level");
  sev->add_option("--ntheta", ev.ntheta, "angular nodes when building Psi0");

  CellArgs ca;
  auto* scell = app.add_subcommand("cell", "hollow-cylinder cell problems");
  scell->require_subcommand(1);
  scell->fallthrough();
  auto add_cell = [&](CLI::App* c) {
    c->set_help_flag("--help", "print this help message and exit");
    c->add_option("--burgers", ca.burgers, "b as x,y,z")->delimiter(',')->required();
    c->add_option("--direction", ca.direction, "t as x,y,z")->delimiter(',');
    c->add_option("--h", ca.h, "cylinder height(s)")->delimiter(',');
    c->add_option("--r", ca.r, "inner radius (list = scan)")->delimiter(',');
    c->add_option("--R", ca.R, "outer radius");
    c->add_option("--mesh", ca.mesh, "nr,nt")->delimiter(',');
    c->add_option("--profile-ntheta", ca.profile_ntheta, "self-energy profile nodes");
  };
  auto* slin = scell->add_subcommand("linear", "linear cell problem");
  add_cell(slin);
  slin->add_option("--tensor", ca.tensor, "elastic tensor JSON (path or inline)");
  slin->add_option("--model", ca.model, "energy model whose Hessian at I is used without --tensor");
  auto* snl = scell->add_subcommand("nonlinear", "geometrically nonlinear cell problem");
  add_cell(snl);
  snl->add_option("--lambda", ca.lambda, "lambda value(s)")->delimiter(',');
  snl->add_option("--rotation", ca.rotation, "Q as ax,ay,az,angle")->delimiter(',');
  snl->add_option("--model", ca.model, "prototype | anharmonic[:gamma]");

  GammaArgs ga;
  auto* sg = app.add_subcommand("gamma-scan", "F_eps along eps against the limit F_0");
  sg->add_option("--measure", ga.measure, "measure JSON")->required();
  sg->add_option("--beta", ga.beta, "smooth strain JSON");
  sg->add_option("--rotation", ga.rotation, "Q as ax,ay,az,angle")->delimiter(',');
  sg->add_option("--eps", ga.eps, "decreasing eps list")->delimiter(',');
  sg->add_option("--schedule", ga.schedule, "H,A,a,c")->delimiter(',');
  sg->add_option("--box", ga.box, "lox,loy,loz,hix,hiy,hiz")->delimiter(',');
  sg->add_option("--model", ga.model, "prototype | anharmonic[:gamma]");
  sg->add_option("--level", ga.level, "envelope icosphere level");
  sg->add_option("--kappa", ga.kappa, "quadrature grading");

  std::string measure_path;
  auto* scm = app.add_subcommand("check-measure", "Frank's rule and node report for a measure");
  scm->add_option("--measure", measure_path, "measure JSON")->required();

  std::string suite;
  bool inject = false;
  auto* sacc = app.add_subcommand("accept", "run the acceptance suite");
  sacc->add_option("suite", suite, "identities | convergence | all | 1-9")->required();
  sacc->add_flag("--inject-fault", inject, "break the minor symmetry of the fixture tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const bool no_sub = app.get_subcommands().empty();
    const int code = no_sub ? 2 : 3;
    diagnostic(no_sub ? "usage" : "validation", e.what(), code);
    return code;
  }

  Output out;
  std::string name;
  try {
    if (sse->parsed()) {
      name = "selfenergy";
      out = run_selfenergy(se, g);
    } else if (sev->parsed()) {
      name = "envelope";
      out = run_envelope(ev, g);
    } else if (slin->parsed() || snl->parsed()) {
      ca.nonlinear = snl->parsed();
      name = ca.nonlinear ? "cell nonlinear" : "cell linear";
      out = run_cell(ca, g);
    } else if (sg->parsed()) {
      name = "gamma-scan";
      out = run_gamma(ga, g);
    } else if (scm->parsed()) {
      name = "check-measure";
      out = run_check_measure(measure_path, g);
    } else if (sacc->parsed()) {
      name = "accept";
      out = run_accept(suite, inject, g);
    } else {
      diagnostic("usage", "unknown subcommand", 2);
      return 2;
    }
    if (g.out.empty()) {
      std::cout << out.payload;
    } else {
      write_file(g.out, out.payload);
    }
    if (!g.envelope.empty()) {
      ResultEnvelope env;
      env.version = kVersion;
      env.subcommand = name;
      env.config = out.config;
      env.config["threads"] = g.threads;
      env.config["seed"] = g.seed;
      env.timestamp = utc_now();
      env.payload_format = out.format;
      env.payload = out.payload;
      write_file(g.envelope, env.to_json().dump(2) + "\n");
    }
    return out.status;
  } catch (const ValidationError& e) {
    diagnostic("validation", e.what(), 3);
    return 3;
  } catch (const SolverError& e) {
    diagnostic("solver", e.what(), 4);
    return 4;
  }
}
