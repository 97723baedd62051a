#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spsurv {

struct TextTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    return -1;
  }

  int col_required(const std::string& name) const {
    const int j = col(name);
    if (j < 0) throw std::runtime_error("missing column: " + name);
    return j;
  }
};

namespace io {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {  // any-whitespace mode
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline char detect_delim(const std::string& header_line) {
  for (char d : {'\t', ',', ';'})
    if (header_line.find(d) != std::string::npos) return d;
  return ' ';
}

// Delimited text with a header row. delim = 0 auto-detects.
inline TextTable read_delim(const std::string& path, char delim = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  TextTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (first) {
      if (delim == 0) delim = detect_delim(line);
      t.header = split(line, delim);
      first = false;
    } else {
      auto tok = split(line, delim);
      if (tok.size() != t.header.size())
        throw std::runtime_error("row " + std::to_string(t.rows.size() + 1) +
                                 " has " + std::to_string(tok.size()) +
                                 " fields, expected " + std::to_string(t.header.size()) +
                                 " in " + path);
      t.rows.push_back(std::move(tok));
    }
  }
  if (first) throw std::runtime_error("empty file: " + path);
  return t;
}

// Nonnegative time field; empty, NA, Inf all mean +infinity.
inline double parse_time(const std::string& s, bool allow_inf = true) {
  const std::string v = trim(s);
  if (v.empty() || v == "NA" || v == "Inf" || v == "inf" || v == "INF") {
    if (!allow_inf) throw std::runtime_error("unexpected missing value");
    return std::numeric_limits<double>::infinity();
  }
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::runtime_error("cannot parse number: " + v);
  return x;
}

inline double parse_double(const std::string& s) {
  const std::string v = trim(s);
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::runtime_error("cannot parse number: " + v);
  return x;
}

}  // namespace io
}  // namespace spsurv
