#pragma once

// Bundled acceptance suite: criteria 1-9 as pass/fail entries with metrics.

#include "linetension/dislocations.hpp"
#include "linetension/elasticity.hpp"
#include "linetension/io.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace linetension {

namespace fixtures {
// cubic Voigt tensor: C11 = 2.5, C12 = 1.2, C44 = 0.8 (tensorial shear)
ElasticTensord cubic_tensor();
// mu = 1, nu = 0.3
ElasticTensord isotropic_tensor();
// [0, side]^2 x {0}, counterclockwise about +e3, Burgers b on all four sides
PolyhedralMeasure square_loop(const Vector3d& b = Vector3d::UnitX(), double side = 1);
Box square_loop_box();
ScaleSchedule gamma_schedule();  // H = 1, A = 0.5, a = c = 0.05
}  // namespace fixtures

struct AcceptanceOptions {
  std::string suite = "all";  // identities | convergence | all | a single id "1".."9"
  int threads = 1;
  std::uint64_t seed = 0;
  // Breaks the minor symmetry of the fixture tensor (fault injection).
  bool break_minor_symmetry = false;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  Json metrics;           // deterministic
  std::string detail;     // first failing check, empty on pass
  double seconds = 0;     // not part of the payload
};

struct AcceptanceReport {
  std::vector<CriterionResult> results;
  bool all_pass() const;
  Json payload() const;   // id, name, pass, metrics, detail; no timings
  // one line per criterion: "[PASS] 3 growth bounds (12.3 s) ..."
  std::string lines() const;
};

std::vector<int> suite_criteria(const std::string& suite);
AcceptanceReport run_acceptance(const AcceptanceOptions& opt = {});

}  // namespace linetension
