#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bogoliubov.hpp"
#include "edgeworth.hpp"

namespace bose_edgeworth {

using json = nlohmann::json;

inline json to_json_matrix(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline json to_json_vector(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Mat matrix_from_json(const json& j) {
  require(j.is_array() && !j.empty(), "ConfigError", "matrix must be a nonempty array of rows");
  const auto rows = j.size();
  const auto cols = j[0].size();
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    require(j[i].is_array() && j[i].size() == cols, "ConfigError", "ragged matrix");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

inline Vec vector_from_json(const json& j) {
  require(j.is_array(), "ConfigError", "vector must be an array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

inline json to_json(const ModelConfig& c) {
  json j;
  j["M"] = c.M;
  j["x_min"] = c.x_min;
  j["x_max"] = c.x_max;
  j["boundary"] = c.boundary == Boundary::Dirichlet ? "dirichlet" : "periodic";
  j["trap"] = c.trap ? json(*c.trap) : json("harmonic");
  j["kernel"] = {{"type", "gaussian"}, {"width", c.kernel_width}};
  j["coupling"] = c.coupling;
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  require(j.is_object(), "ConfigError", "model must be an object");
  ModelConfig c;
  try {
    c.M = j.value("M", c.M);
    c.x_min = j.value("x_min", c.x_min);
    c.x_max = j.value("x_max", c.x_max);
    const std::string b = j.value("boundary", std::string("dirichlet"));
    require(b == "dirichlet" || b == "periodic", "ConfigError", "boundary must be dirichlet or periodic");
    c.boundary = b == "dirichlet" ? Boundary::Dirichlet : Boundary::Periodic;
    if (j.contains("trap")) {
      if (j["trap"].is_string()) {
        require(j["trap"] == "harmonic", "ConfigError", "trap must be \"harmonic\" or an array");
      } else {
        c.trap = j["trap"].get<std::vector<double>>();
      }
    }
    if (j.contains("kernel")) {
      const json& k = j["kernel"];
      require(k.value("type", std::string("gaussian")) == "gaussian", "ConfigError", "only gaussian kernels");
      c.kernel_width = k.value("width", c.kernel_width);
    }
    c.coupling = j.value("coupling", c.coupling);
  } catch (const json::exception& e) {
    throw Error("ConfigError", e.what());
  }
  return c;
}

inline json to_json(const BogoliubovSolution& b) {
  json j;
  j["U0"] = to_json_matrix(b.U0);
  j["V0"] = to_json_matrix(b.V0);
  j["D"] = to_json_vector(b.D);
  j["xi"] = to_json_matrix(b.xi);
  j["ground_energy_shift"] = b.ground_energy_shift;
  j["perp"] = to_json_matrix(b.perp);
  return j;
}

inline BogoliubovSolution bogoliubov_from_json(const json& j) {
  BogoliubovSolution b;
  b.U0 = matrix_from_json(j.at("U0"));
  b.V0 = matrix_from_json(j.at("V0"));
  b.D = vector_from_json(j.at("D"));
  b.xi = matrix_from_json(j.at("xi"));
  b.ground_energy_shift = j.at("ground_energy_shift").get<double>();
  b.perp = matrix_from_json(j.at("perp"));
  return b;
}

inline const char* kind_name(SeriesKind k) {
  switch (k) {
    case SeriesKind::Iid: return "iid";
    case SeriesKind::Ground: return "ground";
    case SeriesKind::Excited: return "excited";
  }
  return "ground";
}

inline json to_json(const EdgeworthSeries& s) {
  json j;
  j["sigma"] = s.sigma;
  j["kind"] = kind_name(s.kind);
  j["eta"] = s.eta;
  json polys = json::array();
  for (const Polynomial& p : s.polys) polys.push_back(p.c);
  j["polys"] = polys;
  return j;
}

inline EdgeworthSeries series_from_json(const json& j) {
  EdgeworthSeries s;
  s.sigma = j.at("sigma").get<double>();
  const std::string k = j.at("kind").get<std::string>();
  s.kind = k == "iid" ? SeriesKind::Iid : k == "excited" ? SeriesKind::Excited : SeriesKind::Ground;
  s.eta = j.value("eta", 0);
  for (const auto& p : j.at("polys")) s.polys.emplace_back(p.get<std::vector<double>>());
  return s;
}

// FNV-1a over the canonical dump (object keys are sorted by nlohmann::json).
inline std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// %.17g round-trips every double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  return line + "\r\n";
}

// Minimal RFC-4180 reader (quoted fields, doubled quotes, CRLF or LF).
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (any) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), "IOError", "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temporary and rename, so readers never see a torn file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), "IOError", "cannot write " + tmp);
    out << content;
    require(static_cast<bool>(out), "IOError", "write failed for " + tmp);
  }
  std::filesystem::rename(tmp, p);
}

} // namespace bose_edgeworth
