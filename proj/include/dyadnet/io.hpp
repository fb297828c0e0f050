#pragma once

// Long-format CSV ingestion and text output. Input rows carry
// layer,sender,receiver,y,<covariates...>; the layer column may be omitted
// for single-layer data. Actor and layer labels map to indices in order of
// first appearance. Ingestion validates completeness (every ordered pair per
// layer for directed data; each unordered pair once — or twice with matching
// values — for undirected data) and rejects missing values outright.

#include "dyadnet/relational.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <tuple>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dyadnet {

struct ParseError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

struct LongFormatRecord {
  std::string layer;
  std::string sender;
  std::string receiver;
  double y = 0.0;
  std::vector<double> x;
};

struct IngestResult {
  RelationalDataset data;
  std::vector<std::string> actor_labels;  // index -> label, first appearance
  std::vector<std::string> layer_labels;
  std::vector<std::string> covariate_names;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool is_missing(const std::string& s) {
  if (s.empty()) return true;
  std::string u;
  for (char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return u == "NA" || u == "NAN" || u == "N/A" || u == "NULL";
}

inline double parse_number(const std::string& s, int line_no,
                           const std::string& column) {
  if (is_missing(s))
    throw ParseError("line " + std::to_string(line_no) + ": missing value in '" +
                     column + "'");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw ParseError("line " + std::to_string(line_no) + ": '" + s +
                     "' is not a number in '" + column + "'");
  if (!std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) +
                     ": non-finite value in '" + column + "'");
  return v;
}

inline bool values_match(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace detail

// Parse a long-format CSV stream into records plus the covariate names.
inline std::pair<std::vector<LongFormatRecord>, std::vector<std::string>>
read_long_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  size_t col = 0;
  const bool has_layer = !header.empty() && header[0] == "layer";
  if (has_layer) ++col;
  if (header.size() < col + 3 || header[col] != "sender" ||
      header[col + 1] != "receiver" || header[col + 2] != "y")
    throw ParseError(
        "header must be [layer,]sender,receiver,y,<covariates...>");
  std::vector<std::string> covariates(header.begin() + col + 3, header.end());
  for (const auto& c : covariates)
    if (c.empty()) throw ParseError("empty covariate name in header");

  std::vector<LongFormatRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    LongFormatRecord rec;
    size_t f = 0;
    rec.layer = has_layer ? fields[f++] : "1";
    rec.sender = fields[f++];
    rec.receiver = fields[f++];
    if (detail::is_missing(rec.layer) || detail::is_missing(rec.sender) ||
        detail::is_missing(rec.receiver))
      throw ParseError("line " + std::to_string(line_no) +
                       ": missing identifier");
    rec.y = detail::parse_number(fields[f++], line_no, "y");
    rec.x.reserve(covariates.size());
    for (size_t c = 0; c < covariates.size(); ++c)
      rec.x.push_back(detail::parse_number(fields[f++], line_no, covariates[c]));
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw ParseError("no data rows");
  return {std::move(records), std::move(covariates)};
}

// Assemble records into a complete stacked dataset.
inline IngestResult ingest_records(const std::vector<LongFormatRecord>& records,
                                   std::vector<std::string> covariate_names,
                                   bool directed) {
  IngestResult out;
  out.covariate_names = std::move(covariate_names);
  std::unordered_map<std::string, int> actor_ix, layer_ix;
  const auto actor_of = [&](const std::string& label) {
    auto it = actor_ix.find(label);
    if (it != actor_ix.end()) return it->second;
    const int id = static_cast<int>(out.actor_labels.size());
    actor_ix.emplace(label, id);
    out.actor_labels.push_back(label);
    return id;
  };
  const auto layer_of = [&](const std::string& label) {
    auto it = layer_ix.find(label);
    if (it != layer_ix.end()) return it->second;
    const int id = static_cast<int>(out.layer_labels.size());
    layer_ix.emplace(label, id);
    out.layer_labels.push_back(label);
    return id;
  };

  struct Cell {
    double y;
    std::vector<double> x;
  };
  std::map<std::tuple<int, int, int>, Cell> cells;  // (layer, i, j)
  for (const auto& rec : records) {
    const int r = layer_of(rec.layer);
    int i = actor_of(rec.sender);
    int j = actor_of(rec.receiver);
    if (i == j)
      throw ParseError("self relation for actor '" + rec.sender + "'");
    if (!directed && i > j) std::swap(i, j);
    const auto key = std::make_tuple(r, i, j);
    const auto it = cells.find(key);
    if (it == cells.end()) {
      cells.emplace(key, Cell{rec.y, rec.x});
      continue;
    }
    if (directed)
      throw ParseError("duplicate relation " + rec.sender + "->" +
                       rec.receiver + " in layer '" + rec.layer + "'");
    // Undirected pairs may appear in both orientations when the values agree.
    bool same = detail::values_match(it->second.y, rec.y);
    for (size_t c = 0; same && c < rec.x.size(); ++c)
      same = detail::values_match(it->second.x[c], rec.x[c]);
    if (!same)
      throw ParseError("conflicting rows for pair {" + rec.sender + "," +
                       rec.receiver + "} in layer '" + rec.layer + "'");
  }

  const int n = static_cast<int>(out.actor_labels.size());
  const int R = static_cast<int>(out.layer_labels.size());
  if (n < 2) throw IncompleteDataError("need at least two actors");
  RelationalDataset ds;
  ds.n = n;
  ds.R = R;
  ds.directed = directed;
  const int total = ds.num_obs();
  if (static_cast<int>(cells.size()) != total)
    throw IncompleteDataError(
        "incomplete data: found " + std::to_string(cells.size()) +
        " distinct relations, expected " + std::to_string(total) + " (" +
        std::to_string(n) + " actors, " + std::to_string(R) + " layer" +
        (R == 1 ? "" : "s") + ")");
  const int p = static_cast<int>(out.covariate_names.size());
  ds.y.resize(total);
  ds.X.resize(total, p);
  for (const auto& [key, cell] : cells) {
    const auto [r, i, j] = key;
    const int pos = ds.position(i, j, r);
    ds.y[pos] = cell.y;
    for (int c = 0; c < p; ++c) ds.X(pos, c) = cell.x[c];
  }
  ds.validate();
  out.data = std::move(ds);
  return out;
}

inline IngestResult read_long_csv(const std::string& path, bool directed) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  auto [records, covariates] = read_long_records(in);
  return ingest_records(records, std::move(covariates), directed);
}

// ---- output -----------------------------------------------------------------

inline void write_coefficients_csv(std::ostream& os,
                                   const std::vector<std::string>& terms,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& se, double z) {
  os << "term,estimate,se,ci_lo,ci_hi\n";
  for (int c = 0; c < beta.size(); ++c)
    os << terms[c] << ',' << format_double(beta[c]) << ','
       << format_double(se[c]) << ',' << format_double(beta[c] - z * se[c])
       << ',' << format_double(beta[c] + z * se[c]) << '\n';
}

// ---- config files -----------------------------------------------------------

// `key = value` lines; '#' starts a comment; keys must be unique.
inline std::vector<std::pair<std::string, std::string>> read_config(
    std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    for (const auto& [k, v] : out)
      if (k == key)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": duplicate key '" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

inline std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return read_config(in);
}

}  // namespace dyadnet
