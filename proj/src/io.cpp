#include "linetension/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace linetension {

namespace schema {
const std::vector<std::string> selfenergy{"bx", "by", "bz", "tx", "ty", "tz", "ntheta",
                                          "psi0", "constraint_residual", "equilibrium_residual"};
const std::vector<std::string> envelope{"bx", "by", "bz", "tx", "ty", "tz", "psi0", "psi_tilde",
                                        "cert_depth"};
const std::vector<std::string> cell_scan{"r_over_R", "h_over_R", "lambda", "value", "gap_to_psi0",
                                         "constraint_residual", "iterations"};
const std::vector<std::string> gamma_scan{"eps", "F_eps", "gap"};
const std::vector<std::string> acceptance{"criterion", "pass"};
}  // namespace schema

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // position is the byte offset; report line and column as well
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream msg;
    msg << what << ": JSON parse error at line " << line << ", column " << col << " (byte "
        << e.byte << "): " << e.what();
    throw ValidationError(msg.str());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
}

Json load_json(const std::string& path) { return parse_json(read_file(path), path); }

namespace {

double number(const Json& j, const std::string& what) {
  if (!j.is_number()) throw ValidationError(what + " must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ValidationError(what + " must be finite");
  return v;
}

Vector3d vec3(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw ValidationError(what + " must be an array of 3 numbers");
  return Vector3d(number(j[0], what), number(j[1], what), number(j[2], what));
}

template <int N>
Eigen::Matrix<double, N, N> square(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != N)
    throw ValidationError(what + " must be a " + std::to_string(N) + "x" + std::to_string(N) + " array");
  Eigen::Matrix<double, N, N> m;
  for (int r = 0; r < N; ++r) {
    if (!j[r].is_array() || j[r].size() != N)
      throw ValidationError(what + " row " + std::to_string(r) + " has the wrong length");
    for (int c = 0; c < N; ++c) m(r, c) = number(j[r][c], what);
  }
  return m;
}

template <typename M>
Json rows(const M& m) {
  Json out = Json::array();
  for (int r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace

ElasticTensord tensor_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("tensor must be a JSON object");
  if (j.contains("voigt")) {
    if (j.contains("convention") && j["convention"] != "strain-engineering-off")
      throw ValidationError("unsupported Voigt convention (expected strain-engineering-off)");
    return ElasticTensord::from_voigt(square<6>(j["voigt"], "voigt"));
  }
  if (j.contains("mu") && j.contains("lambda"))
    return ElasticTensord::isotropic(number(j["mu"], "mu"), number(j["lambda"], "lambda"));
  throw ValidationError("tensor needs \"voigt\" or \"mu\" and \"lambda\"");
}

Json tensor_to_json(const ElasticTensord& c) {
  return Json{{"voigt", rows(c.voigt())}, {"convention", "strain-engineering-off"}};
}

PolyhedralMeasure measure_from_json(const Json& j) {
  Matrix3d g = Matrix3d::Identity();
  const Json* segs = &j;
  double tol = 0;
  if (j.is_object()) {
    if (j.contains("unit") && j["unit"] != "normalized")
      throw ValidationError("measure unit must be \"normalized\"");
    if (j.contains("lattice")) {
      const Json& l = j["lattice"];
      if (!l.is_array() || l.size() != 3) throw ValidationError("lattice must list 3 generators");
      for (int c = 0; c < 3; ++c) g.col(c) = vec3(l[c], "lattice generator");
    }
    if (j.contains("node_tolerance")) tol = number(j["node_tolerance"], "node_tolerance");
    if (!j.contains("segments")) throw ValidationError("measure object needs \"segments\"");
    segs = &j["segments"];
  }
  if (!segs->is_array()) throw ValidationError("segments must be an array");
  PolyhedralMeasure m(BurgersLattice(g), {}, tol);
  std::size_t k = 0;
  for (const auto& s : *segs) {
    const std::string where = "segment " + std::to_string(k++);
    if (!s.is_object() || !s.contains("start") || !s.contains("end") || !s.contains("burgers"))
      throw ValidationError(where + " needs start, end and burgers");
    const Vector3d coords = vec3(s["burgers"], where + " burgers");
    if ((coords - coords.array().round().matrix()).cwiseAbs().maxCoeff() > 1e-9)
      throw ValidationError(where + " burgers must be integer lattice coordinates");
    m.add({vec3(s["start"], where + " start"), vec3(s["end"], where + " end"), g * coords});
  }
  return m;
}

Json measure_to_json(const PolyhedralMeasure& m) {
  const Matrix3d& g = m.lattice().generators();
  Json segs = Json::array();
  for (const auto& s : m.segments()) {
    const auto c = m.lattice().coordinates(s.burgers);
    if (!c) throw ValidationError("Burgers vector is not a lattice member");
    segs.push_back({{"start", {s.start(0), s.start(1), s.start(2)}},
                    {"end", {s.end(0), s.end(1), s.end(2)}},
                    {"burgers", {(*c)(0), (*c)(1), (*c)(2)}}});
  }
  Json lat = Json::array();
  for (int c = 0; c < 3; ++c) lat.push_back({g(0, c), g(1, c), g(2, c)});
  return Json{{"lattice", lat}, {"unit", "normalized"}, {"segments", segs}};
}

AffineStrain beta_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("beta must be a JSON object");
  AffineStrain a;
  if (j.contains("constant")) a.constant = square<3>(j["constant"], "beta constant");
  if (j.contains("linear")) {
    const Json& l = j["linear"];
    if (!l.is_array() || l.size() != 3) throw ValidationError("beta linear must hold 3 matrices");
    for (int k = 0; k < 3; ++k) a.slope[k] = square<3>(l[k], "beta linear");
  }
  return a;
}

Json beta_to_json(const AffineStrain& b) {
  return Json{{"constant", rows(b.constant)},
              {"linear", {rows(b.slope[0]), rows(b.slope[1]), rows(b.slope[2])}}};
}

// ---------------------------------------------------------------- CSV

std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string write_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw ValidationError("CSV row width does not match the header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_number(row[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {
std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace

CsvTable parse_csv(const std::string& text, const std::vector<std::string>& columns) {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  if (!std::getline(in, line)) throw ValidationError("CSV input is empty");
  t.columns = split(line);
  if (!columns.empty() && t.columns != columns) {
    std::string want;
    for (const auto& c : columns) want += (want.empty() ? "" : ",") + c;
    throw ValidationError("CSV header does not match the schema: expected " + want);
  }
  int ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size())
      throw ValidationError("CSV line " + std::to_string(ln) + ": expected " +
                            std::to_string(t.columns.size()) + " fields");
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0;
      const auto r = std::from_chars(c.data(), c.data() + c.size(), v);
      if (r.ec != std::errc() || r.ptr != c.data() + c.size())
        throw ValidationError("CSV line " + std::to_string(ln) + ": bad number '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

Json csv_to_json(const CsvTable& t) {
  Json out = Json::array();
  for (const auto& row : t.rows) {
    Json o = Json::object();
    for (std::size_t i = 0; i < t.columns.size(); ++i) o[t.columns[i]] = row[i];
    out.push_back(o);
  }
  return out;
}

// ---------------------------------------------------------------- envelope

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json ResultEnvelope::to_json() const {
  Json j{{"tool", tool},
         {"version", version},
         {"subcommand", subcommand},
         {"config", config},
         {"timestamp", timestamp},
         {"payload_format", payload_format},
         {"checksum", {{"fnv1a64", hex64(fnv1a64(payload))}}}};
  if (payload_format == "json") {
    j["payload"] = Json::parse(payload);
  } else {
    j["payload"] = payload;
  }
  return j;
}

}  // namespace linetension
