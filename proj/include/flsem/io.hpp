#pragma once

// Headerless CSV matrices, one-value-per-line vectors, key=value configs.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flsem/numerics.hpp"

namespace flsem {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& tok, const std::string& what) {
  std::string t = trim(tok);
  try {
    size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("malformed number '" + t + "' in " + what);
  }
}

inline long long parse_int(const std::string& tok, const std::string& what) {
  std::string t = trim(tok);
  try {
    size_t pos = 0;
    long long v = std::stoll(t, &pos);
    if (pos != t.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ValidationError("malformed integer '" + t + "' in " + what);
  }
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> r;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) r.push_back(parse_double(tok, path));
    if (!rows.empty() && r.size() != rows.front().size())
      throw ValidationError("ragged rows in '" + path + "'");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError("empty file '" + path + "'");
  Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  return M;
}

inline Vector read_vector_csv(const std::string& path) {
  Matrix M = read_matrix_csv(path);
  if (M.cols() == 1) return M.col(0);
  if (M.rows() == 1) return M.row(0).transpose();
  throw ValidationError("'" + path + "' is not a vector");
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_csv(const std::string& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index j = 0; j < M.cols(); ++j) {
      if (j) out << ',';
      out << fmt(M(i, j));
    }
    out << '\n';
  }
}

inline void write_vector_csv(const std::string& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  for (Index i = 0; i < v.size(); ++i) out << fmt(v(i)) << '\n';
}

// Indices are written 1-based.
inline void write_index_csv(const std::string& path, const std::vector<int>& idx) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  for (int i : idx) out << (i + 1) << '\n';
}

inline std::vector<int> read_index_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    long long v = parse_int(line, path);
    if (v < 1) throw ValidationError("indices in '" + path + "' must be >= 1");
    out.push_back(static_cast<int>(v - 1));
  }
  return out;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// FNV-1a 64-bit.
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// key=value lines; '#' starts a comment. Duplicate keys: last wins, with a warning.
inline std::map<std::string, std::string> parse_kv(const std::string& text, std::vector<std::string>* warnings) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k.empty()) throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(k) && warnings) warnings->push_back("duplicate key '" + k + "' (last value wins)");
    kv[k] = v;
  }
  return kv;
}

// Grid from a CSV with 1 or 2 columns; rectangle weight 1/m. Tensor 2-D grids
// keep their shape when detectable.
inline Grid read_grid_csv(const std::string& path) {
  Grid g = Grid::from_points(read_matrix_csv(path));
  if (g.dim() == 2) {
    Index m2 = 0;
    while (m2 < g.size() && g.points(m2, 0) == g.points(0, 0)) ++m2;
    if (m2 > 0 && g.size() % m2 == 0) {
      g.m1 = static_cast<int>(g.size() / m2);
      g.m2 = static_cast<int>(m2);
    }
  }
  return g;
}

}  // namespace flsem
