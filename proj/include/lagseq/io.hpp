#pragma once

// File formats.
//
//   subjects.csv      id,entry_time,arm,T,Y,x1,...,xp
//   longitudinal.csv  id,u,l1,...,lq
//   design.json       n_max, T_F, E_max, alpha, sidedness, spending,
//                     analysis_times, model, basis
//   snapshot export   subject columns plus C,U,delta; Y blank when delta = 0

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "design.hpp"
#include "errors.hpp"
#include "trial_data.hpp"

namespace lagseq {

namespace csv {

// Splits one CSV line. Double-quoted fields may contain commas and "".
inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw ValidationError("unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw ValidationError(where + ": '" + s + "' is not a number");
  return v;
}

// Shortest representation that reads back to the same double.
inline std::string exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline Table read(std::istream& in, const std::string& name) {
  Table t;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError(name + " line " + std::to_string(ln) + ": expected " + std::to_string(t.header.size()) +
                            " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(ln);
  }
  if (t.header.empty()) throw ValidationError(name + ": empty file");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read(in, path);
}

}  // namespace csv

// Numbered trailing columns: prefix1, prefix2, ... starting at index first.
inline std::size_t numbered_columns(const std::vector<std::string>& header, std::size_t first, const std::string& prefix,
                                    const std::string& name) {
  for (std::size_t k = first; k < header.size(); ++k)
    if (header[k] != prefix + std::to_string(k - first + 1))
      throw ValidationError(name + ": column " + std::to_string(k + 1) + " should be '" + prefix +
                            std::to_string(k - first + 1) + "', found '" + header[k] + "'");
  return header.size() - first;
}

inline std::vector<SubjectRecord> read_subjects(std::istream& in, const std::string& name, OutcomeKind kind,
                                                double T_F) {
  const auto t = csv::read(in, name);
  const std::vector<std::string> fixed = {"id", "entry_time", "arm", "T", "Y"};
  if (t.header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), t.header.begin()))
    throw ValidationError(name + ": header must start with id,entry_time,arm,T,Y");
  const std::size_t p = numbered_columns(t.header, fixed.size(), "x", name);
  std::vector<SubjectRecord> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const std::string where = name + " line " + std::to_string(t.line_numbers[r]);
    SubjectRecord s;
    s.id = f[0];
    if (s.id.empty()) throw ValidationError(where + ": empty id");
    if (!seen.emplace(s.id, r).second) throw ValidationError(where + ": duplicate id '" + s.id + "'");
    s.entry = csv::to_double(f[1], where + " entry_time");
    const double arm = csv::to_double(f[2], where + " arm");
    if (arm != 0.0 && arm != 1.0) throw ValidationError(where + ": arm must be 0 or 1");
    s.arm = static_cast<int>(arm);
    s.lag = csv::to_double(f[3], where + " T");
    if (f[4].empty()) throw ValidationError(where + ": Y is required in full-data input");
    try {
      s.y = Outcome::parse(kind, csv::to_double(f[4], where + " Y"));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    for (std::size_t k = 0; k < p; ++k) s.x.push_back(csv::to_double(f[5 + k], where + " x" + std::to_string(k + 1)));
    try {
      validate_record(s, T_F);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Joins longitudinal rows onto records by id. Rows may come in any order.
inline void read_longitudinal(std::istream& in, const std::string& name, std::vector<SubjectRecord>& records) {
  const auto t = csv::read(in, name);
  if (t.header.size() < 2 || t.header[0] != "id" || t.header[1] != "u")
    throw ValidationError(name + ": header must start with id,u");
  const std::size_t q = numbered_columns(t.header, 2, "l", name);
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) index.emplace(records[i].id, i);
  std::vector<std::vector<std::pair<double, std::size_t>>> rows(records.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& f = t.rows[r];
    const std::string where = name + " line " + std::to_string(t.line_numbers[r]);
    auto it = index.find(f[0]);
    if (it == index.end()) throw ValidationError(where + ": unknown subject id '" + f[0] + "'");
    const double u = csv::to_double(f[1], where + " u");
    const auto& rec = records[it->second];
    if (u < 0.0) throw ValidationError(where + ": u must be >= 0");
    if (u > rec.lag) throw ValidationError(where + ": rejected row, u exceeds T for subject '" + rec.id + "'");
    rows[it->second].emplace_back(u, r);
  }
  std::vector<double> v(q);
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& rr = rows[i];
    std::sort(rr.begin(), rr.end());
    records[i].path = CovariatePath(q);
    for (std::size_t k = 0; k < rr.size(); ++k) {
      const auto& f = t.rows[rr[k].second];
      const std::string where = name + " line " + std::to_string(t.line_numbers[rr[k].second]);
      if (k > 0 && rr[k].first == rr[k - 1].first)
        throw ValidationError(where + ": repeated time for subject '" + records[i].id + "'");
      for (std::size_t l = 0; l < q; ++l) v[l] = csv::to_double(f[2 + l], where + " l" + std::to_string(l + 1));
      records[i].path.append(rr[k].first, v);
    }
  }
}

inline TrialDesign parse_design(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ValidationError(std::string("design: missing key '") + key + "'");
    return j.at(key);
  };
  TrialDesign d;
  try {
    d.n_max = need("n_max").get<std::size_t>();
    d.T_F = need("T_F").get<double>();
    d.E_max = need("E_max").get<double>();
    d.alpha = need("alpha").get<double>();
    const auto& sd = need("sidedness");
    d.sidedness = parse_sidedness(sd.is_number() ? std::to_string(sd.get<int>()) : sd.get<std::string>());
    d.spending = parse_spending(need("spending").get<std::string>());
    d.analysis_times = need("analysis_times").get<std::vector<double>>();
    const auto& m = need("model");
    const auto kind = parse_model_kind(m.at("kind").get<std::string>());
    d.model = kind == ModelKind::proportional_odds ? ModelSpec::proportional_odds(m.at("levels").get<int>())
                                                   : ModelSpec{kind, 0};
    const auto& b = need("basis");
    if (b.is_string()) {
      if (b.get<std::string>() != "linear") throw ValidationError("design: basis must be \"linear\" or an object");
    } else {
      d.basis_given = true;
      d.f_basis = b.value("f", std::vector<std::string>{});
      d.h_basis = b.value("h", std::vector<std::string>{});
    }
    if (j.contains("direction")) {
      const auto dir = j.at("direction").get<std::string>();
      if (dir == "upper") d.direction = Direction::upper;
      else if (dir == "lower") d.direction = Direction::lower;
      else throw ValidationError("design: direction must be upper or lower");
    }
    if (j.contains("l_default")) d.l_default = j.at("l_default").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("design: ") + e.what());
  }
  d.validate();
  return d;
}

inline TrialDesign read_design(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return parse_design(j);
}

inline nlohmann::json design_to_json(const TrialDesign& d) {
  nlohmann::json j;
  j["n_max"] = d.n_max;
  j["T_F"] = d.T_F;
  j["E_max"] = d.E_max;
  j["alpha"] = d.alpha;
  j["sidedness"] = to_string(d.sidedness);
  j["direction"] = d.direction == Direction::upper ? "upper" : "lower";
  j["spending"] = to_string(d.spending);
  j["analysis_times"] = d.analysis_times;
  j["model"] = {{"kind", to_string(d.model.kind)}};
  if (d.model.kind == ModelKind::proportional_odds) j["model"]["levels"] = d.model.levels;
  if (d.basis_given)
    j["basis"] = {{"f", d.f_basis}, {"h", d.h_basis}};
  else
    j["basis"] = "linear";
  if (!d.l_default.empty()) j["l_default"] = d.l_default;
  return j;
}

struct TrialData {
  std::vector<SubjectRecord> records;
  TrialDesign design;
};

inline TrialData load_trial(const std::string& subject_file, const std::string& longitudinal_file,
                            const std::string& design_file) {
  TrialData d;
  d.design = read_design(design_file);
  {
    std::ifstream in(subject_file);
    if (!in) throw ValidationError("cannot open " + subject_file);
    d.records = read_subjects(in, subject_file, d.design.model.outcome_kind(), d.design.T_F);
  }
  if (!longitudinal_file.empty()) {
    std::ifstream in(longitudinal_file);
    if (!in) throw ValidationError("cannot open " + longitudinal_file);
    read_longitudinal(in, longitudinal_file, d.records);
  }
  if (d.records.size() > d.design.n_max)
    throw ValidationError("subject file has more rows than n_max");
  return d;
}

inline void write_subjects(std::ostream& os, const std::vector<SubjectRecord>& recs) {
  const std::size_t p = recs.empty() ? 0 : recs.front().x.size();
  os << "id,entry_time,arm,T,Y";
  for (std::size_t k = 1; k <= p; ++k) os << ",x" << k;
  os << '\n';
  for (const auto& r : recs) {
    os << csv::quote(r.id) << ',' << csv::exact(r.entry) << ',' << r.arm << ',' << csv::exact(r.lag) << ','
       << csv::exact(r.y.value());
    for (double v : r.x) os << ',' << csv::exact(v);
    os << '\n';
  }
}

inline void write_longitudinal(std::ostream& os, const std::vector<SubjectRecord>& recs) {
  std::size_t q = 0;
  for (const auto& r : recs) q = std::max(q, r.path.dim());
  os << "id,u";
  for (std::size_t k = 1; k <= q; ++k) os << ",l" << k;
  os << '\n';
  for (const auto& r : recs)
    for (std::size_t k = 0; k < r.path.size(); ++k) {
      os << csv::quote(r.id) << ',' << csv::exact(r.path.time(k));
      for (double v : r.path.row(k)) os << ',' << csv::exact(v);
      os << '\n';
    }
}

inline void write_snapshot(std::ostream& os, const InterimSnapshot& s) {
  const std::size_t p = s.p_x();
  os << "id,entry_time,arm,T,Y";
  for (std::size_t k = 1; k <= p; ++k) os << ",x" << k;
  os << ",C,U,delta\n";
  for (const auto& o : s.subjects) {
    os << csv::quote(o.id()) << ',' << csv::exact(o.entry()) << ',' << o.arm() << ',';
    if (o.delta()) os << csv::exact(o.U());
    os << ',';
    if (o.has_outcome()) os << csv::exact(o.outcome().value());
    for (double v : o.x()) os << ',' << csv::exact(v);
    os << ',' << csv::exact(o.C()) << ',' << csv::exact(o.U()) << ',' << (o.delta() ? 1 : 0) << '\n';
  }
}

}  // namespace lagseq
