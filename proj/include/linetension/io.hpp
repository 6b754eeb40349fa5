#pragma once

// JSON inputs (tensors, measures, smooth strains), CSV tables with a fixed
// column schema, and the result envelope written around every payload.

#include "linetension/common.hpp"
#include "linetension/dislocations.hpp"
#include "linetension/elasticity.hpp"
#include "linetension/fields.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace linetension {

using Json = nlohmann::json;

// Parse text; syntax errors become ValidationError naming line and column.
Json parse_json(const std::string& text, const std::string& what = "input");
Json load_json(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// {"voigt": 6x6, "convention": "strain-engineering-off"} or {"mu": .., "lambda": ..}
ElasticTensord tensor_from_json(const Json& j);
Json tensor_to_json(const ElasticTensord& c);

// {"lattice": [g1, g2, g3], "unit": "normalized", "segments": [{"start", "end",
// "burgers": lattice coordinates}, ...]}; a bare segment array means the cubic lattice.
PolyhedralMeasure measure_from_json(const Json& j);
Json measure_to_json(const PolyhedralMeasure& m);

// {"constant": 3x3, "linear": [D1, D2, D3]}: beta(x) = constant + sum_k x_k D_k
AffineStrain beta_from_json(const Json& j);
Json beta_to_json(const AffineStrain& b);

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

namespace schema {
extern const std::vector<std::string> selfenergy;
extern const std::vector<std::string> envelope;
extern const std::vector<std::string> cell_scan;
extern const std::vector<std::string> gamma_scan;
extern const std::vector<std::string> acceptance;
}  // namespace schema

// shortest round-trip decimal form
std::string format_number(double v);
std::string write_csv(const CsvTable& t);
// Header must equal `columns` when given. ValidationError on malformed input.
CsvTable parse_csv(const std::string& text, const std::vector<std::string>& columns = {});
// rows as an array of objects keyed by column
Json csv_to_json(const CsvTable& t);

// ---------------------------------------------------------------------------
// result envelope

std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

struct ResultEnvelope {
  std::string tool = "linetension";
  std::string version;
  std::string subcommand;
  Json config;
  std::string timestamp;  // excluded from the checksum
  std::string payload_format;  // "csv" or "json"
  std::string payload;
  Json to_json() const;  // checksum: fnv1a64 of the payload bytes
};

}  // namespace linetension
