#pragma once

#include "spsurv/io.hpp"
#include "spsurv/math/special.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace spsurv {

// Subject-episode survival interval (a, b): exact event iff a == b (finite),
// right-censored iff b = +inf, left-censored iff a equals the truncation
// time (0 without truncation).
struct CensoredInterval {
  double a = 0.0;
  double b = kInf;

  bool exact() const { return a == b && std::isfinite(a); }
  bool right_censored() const { return std::isinf(b); }
};

struct Observation {
  double u = 0.0;  // left-truncation time
  CensoredInterval interval;
  int unit = 0;
  std::string subject;
};

enum class SpatialKind { None, Areal, Geo, Clustered };

struct SpatialStructure {
  SpatialKind kind = SpatialKind::None;
  Eigen::MatrixXd adjacency;  // Areal: m x m, symmetric 0/1, zero diagonal
  Eigen::MatrixXd coords;     // Geo: m x d, d in {1,2,3}
  std::vector<std::string> unit_labels;

  int m() const { return static_cast<int>(unit_labels.size()); }
};

inline void validate_spatial(const SpatialStructure& sp) {
  const int m = sp.m();
  if (sp.kind == SpatialKind::Areal) {
    const auto& E = sp.adjacency;
    if (E.rows() != m || E.cols() != m)
      throw std::runtime_error("adjacency dimension does not match unit count");
    for (int i = 0; i < m; ++i) {
      if (E(i, i) != 0.0) throw std::runtime_error("adjacency has nonzero diagonal");
      double rowsum = 0.0;
      for (int j = 0; j < m; ++j) {
        if (E(i, j) != 0.0 && E(i, j) != 1.0)
          throw std::runtime_error("adjacency must be binary");
        if (E(i, j) != E(j, i)) throw std::runtime_error("adjacency must be symmetric");
        rowsum += E(i, j);
      }
      if (rowsum < 1.0)
        throw std::runtime_error("region '" + sp.unit_labels[i] + "' has no neighbors");
    }
  } else if (sp.kind == SpatialKind::Geo) {
    if (!sp.coords.allFinite()) throw std::runtime_error("coordinates must be finite");
    if (sp.coords.rows() != m) throw std::runtime_error("coordinate rows != unit count");
  }
}

// Observations grouped (sorted) by spatial unit, plus the regression design
// and per-column scaling metadata so results can be mapped back to the
// original covariate scale.
struct SurvDataset {
  std::vector<Observation> obs;
  Eigen::MatrixXd X;        // n x p regression covariates
  Eigen::MatrixXd Zb;       // n x q baseline covariates (GAFT), may be empty
  std::vector<std::string> xnames, znames;
  Eigen::VectorXd x_mean, x_sd;  // identity metadata (0, 1) when unscaled
  bool standardized = false;
  SpatialStructure spatial;
  std::vector<int> unit_start, unit_count;

  int n() const { return static_cast<int>(obs.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  int q() const { return static_cast<int>(Zb.cols()); }
  int m() const { return spatial.m(); }

  void rebuild_unit_index() {
    const int mm = std::max(m(), 1);
    unit_start.assign(mm, 0);
    unit_count.assign(mm, 0);
    for (const auto& o : obs) ++unit_count[o.unit];
    int acc = 0;
    for (int i = 0; i < mm; ++i) {
      unit_start[i] = acc;
      acc += unit_count[i];
    }
  }
};

// Column mapping for load_dataset. censoring selects the row convention:
//   right:     columns (time, cens), cens = 1 exact event, 0 right-censored
//   interval2: columns (tleft, tright); empty/NA/Inf tright = right-censored,
//              empty tleft = left-censored, equal = exact
//   counting:  columns (tstart, tstop, event) per subject-episode; rows are
//              expanded into left-truncated observations
struct DataSchema {
  char delim = 0;  // 0 = auto-detect
  std::string censoring = "right";
  std::string time = "time", time2 = "", cens = "cens";
  std::string tstart = "tstart", tstop = "tstop", event = "event";
  std::string truncation = "";
  std::string unit = "";
  std::string subject = "";
  std::string coord_x = "", coord_y = "";
  std::vector<std::string> covariates;           // regression covariates
  std::vector<std::string> baseline_covariates;  // GAFT z covariates
};

struct EpisodeRow {
  std::string subject;
  double tstart = 0.0, tstop = 0.0;
  bool event = false;
  Eigen::VectorXd x;
};

// Expands counting-process rows into left-truncated observations: each
// non-final row of a subject contributes survival past its tstop, so it
// becomes (u = tstart, interval = (tstop, inf)); the final row keeps the
// subject's own censoring status. The product of the per-row likelihood
// contributions telescopes to the subject's conditional survival.
inline std::vector<std::pair<Observation, Eigen::VectorXd>> episode_expand(
    const std::vector<EpisodeRow>& records) {
  std::vector<std::pair<Observation, Eigen::VectorXd>> out;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    while (j + 1 < records.size() && records[j + 1].subject == records[i].subject) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      const auto& r = records[k];
      if (!(r.tstart < r.tstop))
        throw std::runtime_error("subject " + r.subject + ": tstart >= tstop");
      if (k > i && records[k - 1].tstop != r.tstart)
        throw std::runtime_error("subject " + r.subject +
                                 ": episodes not contiguous at t=" + std::to_string(r.tstart));
      if (r.event && k != j)
        throw std::runtime_error("subject " + r.subject + ": event flag on non-final episode");
      Observation o;
      o.subject = r.subject;
      o.u = r.tstart;
      if (k == j && r.event) {
        o.interval = {r.tstop, r.tstop};
      } else {
        o.interval = {r.tstop, kInf};
      }
      out.emplace_back(o, r.x);
    }
    i = j + 1;
  }
  return out;
}

inline std::pair<std::vector<std::string>, Eigen::MatrixXd> load_adjacency(
    const std::string& path, char delim = 0) {
  TextTable t = io::read_delim(path, delim);
  const int m = static_cast<int>(t.header.size());
  if (static_cast<int>(t.rows.size()) != m)
    throw std::runtime_error("adjacency file must be square: " + std::to_string(t.rows.size()) +
                             " rows for " + std::to_string(m) + " labels");
  Eigen::MatrixXd E(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) E(i, j) = io::parse_double(t.rows[i][j]);
  return {t.header, E};
}

namespace detail {

inline CensoredInterval interval_from_row(const TextTable& t, const DataSchema& schema,
                                          std::size_t r, double u) {
  const auto& row = t.rows[r];
  CensoredInterval iv;
  if (schema.censoring == "right") {
    const double tt = io::parse_time(row[t.col_required(schema.time)], false);
    const double c = io::parse_double(row[t.col_required(schema.cens)]);
    if (c == 1.0) iv = {tt, tt};
    else if (c == 0.0) iv = {tt, kInf};
    else throw std::runtime_error("row " + std::to_string(r + 1) + ": censoring code must be 0/1");
  } else if (schema.censoring == "interval2") {
    const std::string t2name = schema.time2.empty() ? "tright" : schema.time2;
    const std::string t1name = schema.time.empty() || schema.time == "time" ? "tleft" : schema.time;
    const std::string lraw = io::trim(row[t.col_required(t1name)]);
    const double b = io::parse_time(row[t.col_required(t2name)]);
    if (lraw.empty() || lraw == "NA") {
      iv = {u, b};  // left-censored at b
      if (std::isinf(b)) throw std::runtime_error("row " + std::to_string(r + 1) +
                                                  ": both interval endpoints missing");
    } else {
      const double a = io::parse_time(lraw, false);
      iv = {a, b};
    }
  } else {
    throw std::runtime_error("unknown censoring convention: " + schema.censoring);
  }
  if (iv.a < 0.0 || iv.a > iv.b)
    throw std::runtime_error("row " + std::to_string(r + 1) + ": invalid interval [" +
                             std::to_string(iv.a) + ", " + std::to_string(iv.b) + "]");
  return iv;
}

}  // namespace detail

// Loads a delimited dataset per the schema. adjacency_labels, when
// nonempty, fixes the unit index order (spatial join); otherwise distinct
// unit labels are sorted and indexed in that order.
inline SurvDataset load_dataset(const std::string& path, const DataSchema& schema,
                                const std::vector<std::string>& adjacency_labels = {}) {
  TextTable t = io::read_delim(path, schema.delim);
  const bool counting = schema.censoring == "counting";
  const std::size_t nrow = t.rows.size();

  // covariate columns
  std::vector<int> xcols, zcols;
  for (const auto& name : schema.covariates) xcols.push_back(t.col_required(name));
  for (const auto& name : schema.baseline_covariates) zcols.push_back(t.col_required(name));

  // raw per-row observations
  std::vector<Observation> raw(nrow);
  Eigen::MatrixXd Xraw(nrow, static_cast<int>(xcols.size()));
  Eigen::MatrixXd Zraw(nrow, static_cast<int>(zcols.size()));
  std::vector<std::string> unit_raw(nrow);

  const int ucol = schema.unit.empty() ? -1 : t.col_required(schema.unit);
  const int scol = schema.subject.empty() ? -1 : t.col_required(schema.subject);
  const int trcol = schema.truncation.empty() ? -1 : t.col_required(schema.truncation);
  // coordinate columns are used when present (canonical files carry them
  // only for geo-referenced data)
  const int cxcol = schema.coord_x.empty() ? -1 : t.col(schema.coord_x);
  const int cycol = schema.coord_y.empty() ? -1 : t.col(schema.coord_y);

  if (counting) {
    std::vector<EpisodeRow> eps(nrow);
    for (std::size_t r = 0; r < nrow; ++r) {
      eps[r].subject = scol >= 0 ? t.rows[r][scol] : std::to_string(r);
      eps[r].tstart = io::parse_time(t.rows[r][t.col_required(schema.tstart)], false);
      eps[r].tstop = io::parse_time(t.rows[r][t.col_required(schema.tstop)], false);
      eps[r].event = io::parse_double(t.rows[r][t.col_required(schema.event)]) != 0.0;
      Eigen::VectorXd x(xcols.size());
      for (std::size_t j = 0; j < xcols.size(); ++j)
        x[j] = io::parse_double(t.rows[r][xcols[j]]);
      eps[r].x = x;
    }
    auto expanded = episode_expand(eps);
    for (std::size_t r = 0; r < nrow; ++r) {
      raw[r] = expanded[r].first;
      Xraw.row(r) = expanded[r].second.transpose();
      unit_raw[r] = ucol >= 0 ? t.rows[r][ucol] : "0";
      for (std::size_t j = 0; j < zcols.size(); ++j)
        Zraw(r, j) = io::parse_double(t.rows[r][zcols[j]]);
    }
  } else {
    for (std::size_t r = 0; r < nrow; ++r) {
      raw[r].u = trcol >= 0 ? io::parse_time(t.rows[r][trcol], false) : 0.0;
      raw[r].interval = detail::interval_from_row(t, schema, r, raw[r].u);
      raw[r].subject = scol >= 0 ? t.rows[r][scol] : std::to_string(r);
      unit_raw[r] = ucol >= 0 ? t.rows[r][ucol] : std::to_string(r);
      if (raw[r].u > raw[r].interval.a)
        throw std::runtime_error("row " + std::to_string(r + 1) +
                                 ": truncation time exceeds interval start");
      for (std::size_t j = 0; j < xcols.size(); ++j)
        Xraw(r, j) = io::parse_double(t.rows[r][xcols[j]]);
      for (std::size_t j = 0; j < zcols.size(); ++j)
        Zraw(r, j) = io::parse_double(t.rows[r][zcols[j]]);
    }
  }

  // unit label -> dense index
  std::vector<std::string> labels;
  if (!adjacency_labels.empty()) {
    labels = adjacency_labels;
  } else {
    std::set<std::string> uniq(unit_raw.begin(), unit_raw.end());
    labels.assign(uniq.begin(), uniq.end());
  }
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
  for (std::size_t r = 0; r < nrow; ++r) {
    auto it = index.find(unit_raw[r]);
    if (it == index.end())
      throw std::runtime_error("row " + std::to_string(r + 1) + ": unit label '" + unit_raw[r] +
                               "' not present in the spatial structure");
    raw[r].unit = it->second;
  }

  // stable sort by unit
  std::vector<std::size_t> order(nrow);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return raw[i].unit < raw[j].unit; });

  SurvDataset ds;
  ds.obs.resize(nrow);
  ds.X.resize(nrow, Xraw.cols());
  ds.Zb.resize(nrow, Zraw.cols());
  for (std::size_t r = 0; r < nrow; ++r) {
    ds.obs[r] = raw[order[r]];
    ds.X.row(r) = Xraw.row(order[r]);
    if (Zraw.cols() > 0) ds.Zb.row(r) = Zraw.row(order[r]);
  }
  ds.xnames = schema.covariates;
  ds.znames = schema.baseline_covariates;
  ds.x_mean = Eigen::VectorXd::Zero(ds.p());
  ds.x_sd = Eigen::VectorXd::Ones(ds.p());

  ds.spatial.unit_labels = labels;
  if (cxcol >= 0) {
    const int d = cycol >= 0 ? 2 : 1;
    ds.spatial.kind = SpatialKind::Geo;
    ds.spatial.coords.resize(labels.size(), d);
    std::vector<bool> seen(labels.size(), false);
    for (std::size_t k = 0; k < nrow; ++k) {
      const std::size_t r = order[k];
      const int u = raw[r].unit;
      Eigen::VectorXd c(d);
      c[0] = io::parse_double(t.rows[r][cxcol]);
      if (d == 2) c[1] = io::parse_double(t.rows[r][cycol]);
      if (!seen[u]) {
        ds.spatial.coords.row(u) = c.transpose();
        seen[u] = true;
      } else if ((ds.spatial.coords.row(u).transpose() - c).norm() > 0.0) {
        throw std::runtime_error("unit '" + labels[u] + "' has inconsistent coordinates");
      }
    }
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (!seen[i]) throw std::runtime_error("unit '" + labels[i] + "' has no coordinates");
  } else if (ucol >= 0) {
    ds.spatial.kind = SpatialKind::Clustered;
  }
  validate_spatial(ds.spatial);
  ds.rebuild_unit_index();
  return ds;
}

inline void attach_adjacency(SurvDataset& ds, const Eigen::MatrixXd& E) {
  ds.spatial.kind = SpatialKind::Areal;
  ds.spatial.adjacency = E;
  validate_spatial(ds.spatial);
}

// Centers and scales each covariate column to mean 0 / unit sample sd
// (n-1 denominator); metadata keeps the original-scale mapping. Disabled
// mode is the identity transform with metadata (0, 1).
inline SurvDataset standardize_covariates(const SurvDataset& input, bool enabled) {
  SurvDataset ds = input;
  if (!enabled || ds.p() == 0) return ds;
  if (ds.n() < 2) throw std::runtime_error("standardization needs at least two rows");
  for (int j = 0; j < ds.p(); ++j) {
    const double mu = ds.X.col(j).mean();
    const double ss = (ds.X.col(j).array() - mu).square().sum() / (ds.n() - 1.0);
    if (!(ss > 0.0))
      throw std::runtime_error("covariate '" + ds.xnames[j] + "' has zero variance");
    const double sd = std::sqrt(ss);
    ds.X.col(j) = (ds.X.col(j).array() - mu) / sd;
    ds.x_mean[j] = mu;
    ds.x_sd[j] = sd;
  }
  ds.standardized = true;
  return ds;
}

// Canonical on-disk format: tab-delimited interval2 with truncation, unit
// and subject columns (plus coordinates for geo-referenced structures).
inline void write_dataset(const SurvDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << std::setprecision(17);
  out << "subject\tunit\ttrunc\ttleft\ttright";
  for (const auto& nm : ds.xnames) out << '\t' << nm;
  for (const auto& nm : ds.znames) out << '\t' << nm;
  const bool geo = ds.spatial.kind == SpatialKind::Geo;
  if (geo) {
    out << "\tcoordx";
    if (ds.spatial.coords.cols() > 1) out << "\tcoordy";
  }
  out << '\n';
  for (int i = 0; i < ds.n(); ++i) {
    const auto& o = ds.obs[i];
    out << o.subject << '\t';
    out << (ds.spatial.unit_labels.empty() ? std::to_string(o.unit)
                                           : ds.spatial.unit_labels[o.unit]);
    out << '\t' << o.u << '\t' << o.interval.a << '\t';
    if (std::isinf(o.interval.b)) out << "Inf";
    else out << o.interval.b;
    for (int j = 0; j < ds.p(); ++j)
      out << '\t' << (ds.X(i, j) * ds.x_sd[j] + ds.x_mean[j]);
    for (int j = 0; j < ds.q(); ++j) out << '\t' << ds.Zb(i, j);
    if (geo) {
      out << '\t' << ds.spatial.coords(o.unit, 0);
      if (ds.spatial.coords.cols() > 1) out << '\t' << ds.spatial.coords(o.unit, 1);
    }
    out << '\n';
  }
}

inline DataSchema canonical_schema(const std::vector<std::string>& covariates,
                                   const std::vector<std::string>& baseline = {}) {
  DataSchema s;
  s.delim = '\t';
  s.censoring = "interval2";
  s.time = "tleft";
  s.time2 = "tright";
  s.truncation = "trunc";
  s.unit = "unit";
  s.subject = "subject";
  s.coord_x = "coordx";
  s.coord_y = "coordy";
  s.covariates = covariates;
  s.baseline_covariates = baseline;
  return s;
}

}  // namespace spsurv
