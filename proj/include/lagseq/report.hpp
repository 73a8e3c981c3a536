#pragma once

// JSON serialisation of results and the run manifest embedded in every
// report.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "boundaries.hpp"
#include "errors.hpp"
#include "estimators.hpp"
#include "information.hpp"
#include "simulation.hpp"

namespace lagseq {

inline constexpr const char* version = "1.0.0";

using json = nlohmann::json;

// Non-finite values become null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  json config = json::object();
  std::vector<std::pair<std::string, std::string>> inputs;  // path, sha256
  std::uint64_t seed = 0;
  bool has_seed = false;

  void add_input(const std::string& path) {
    if (!path.empty()) inputs.emplace_back(path, file_sha256(path));
  }

  json to_json() const {
    json j;
    j["tool"] = "lagseq";
    j["version"] = version;
    j["command"] = command;
    j["config"] = config;
    json in = json::array();
    for (const auto& [p, d] : inputs) in.push_back({{"path", p}, {"sha256", d}});
    j["inputs"] = in;
    j["seed"] = has_seed ? json(seed) : json(nullptr);
    j["timestamp"] = utc_timestamp();
    return j;
  }
};

inline json to_json(const AnalysisResult& r) {
  return {{"estimator", to_string(r.kind)},
          {"t", r.t},
          {"beta", number(r.beta)},
          {"se", number(r.se)},
          {"wald", number(r.wald)},
          {"n", r.n_t},
          {"nA", r.n_A_t},
          {"var_full", number(r.var_full)},
          {"n_ess", number(r.n_ess)},
          {"p_info", number(r.p_info)},
          {"diagnostics",
           {{"iterations", r.diag.iterations},
            {"root_residual", number(r.diag.root_residual)},
            {"g_condition", number(r.diag.g_condition)},
            {"ls_condition", number(r.diag.ls_condition)},
            {"ls_rank", r.diag.ls_rank},
            {"r_squared", number(r.diag.r_squared)}}}};
}

inline json to_json(const BoundaryPlan& p) {
  json rows = json::array();
  for (std::size_t j = 0; j < p.fractions.size(); ++j)
    rows.push_back({{"j", j + 1},
                    {"t", p.fractions[j]},
                    {"spend", number(p.spend[j])},
                    {"increment", number(p.increments[j])},
                    {"boundary", number(p.boundaries[j])}});
  return {{"alpha", p.alpha},
          {"sided", to_string(p.sided)},
          {"spending", to_string(p.spending)},
          {"grid_points", p.grid_points},
          {"looks", rows}};
}

inline json to_json(const SequentialDecision& d) {
  return {{"look", d.j + 1}, {"statistic", number(d.statistic)}, {"boundary", number(d.boundary)},
          {"decision", to_string(d.decision)}};
}

inline json to_json(const ScenarioConfig& c) {
  json est = json::array(), sp = json::array();
  for (auto k : c.estimators) est.push_back(to_string(k));
  for (auto k : c.spendings) sp.push_back(to_string(k));
  return {{"scenario", c.scenario},   {"hypothesis", to_string(c.hypothesis)},
          {"n_max", c.n_max},         {"E_max", c.E_max},
          {"T_F", c.T_F},             {"analysis_times", c.analysis_times},
          {"reps", c.reps},           {"seed", c.seed},
          {"estimators", est},        {"spending", sp},
          {"alpha", c.alpha},         {"grid_points", c.grid_points},
          {"true_beta", c.true_beta()}, {"direction", c.direction() == Direction::upper ? "upper" : "lower"}};
}

inline json to_json(const AggregateStats& a) {
  json ests = json::array();
  for (const auto& e : a.estimators) {
    json times = json::array();
    for (const auto& t : e.times)
      times.push_back({{"t", t.t},
                       {"mean", number(t.mean)},
                       {"sd", number(t.sd)},
                       {"mean_se", number(t.mean_se)},
                       {"mse", number(t.mse)},
                       {"mse_ratio", number(t.mse_ratio)},
                       {"mean_p", number(t.mean_p)},
                       {"median_p", number(t.median_p)},
                       {"mean_n", number(t.mean_n)},
                       {"mean_nA", number(t.mean_nA)}});
    json cov = json::array();
    for (Eigen::Index r = 0; r < e.cov.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < e.cov.cols(); ++c) row.push_back(number(e.cov(r, c)));
      cov.push_back(row);
    }
    json stops = json::array();
    for (const auto& s : e.stopping)
      stops.push_back({{"spending", to_string(s.spending)},
                       {"p_reject", s.p_reject},
                       {"p_reject_se", s.p_reject_se},
                       {"expected_sample_size", s.e_ss},
                       {"sd_sample_size", s.sd_ss},
                       {"expected_sample_size_se", s.sd_ss / std::sqrt(static_cast<double>(e.n_ok))},
                       {"expected_stop_time", s.e_stop},
                       {"sd_stop_time", s.sd_stop},
                       {"expected_stop_time_se", s.sd_stop / std::sqrt(static_cast<double>(e.n_ok))},
                       {"reject_at_look", s.reject_at_look}});
    ests.push_back({{"estimator", to_string(e.kind)},
                    {"n_ok", e.n_ok},
                    {"n_failed", e.n_failed},
                    {"failures", e.failures},
                    {"times", times},
                    {"covariance", cov},
                    {"independent_increments", number(e.ii_diagnostic)},
                    {"stopping", stops}});
  }
  return {{"reps", a.reps},
          {"true_beta", a.true_beta},
          {"failures", a.failures},
          {"failure_rate", a.failure_rate},
          {"estimators", ests}};
}

// One row per (replication, estimator, look) for the optional dump.
inline void write_replications_csv(std::ostream& os, const ScenarioConfig& cfg,
                                   const std::vector<ReplicationResult>& reps) {
  os << "rep,estimator,look,t,ok,beta,se,wald,p_info,n,nA";
  for (auto s : cfg.spendings) os << ',' << to_string(s) << "_fraction," << to_string(s) << "_boundary";
  os << '\n';
  os << std::setprecision(17);
  for (const auto& r : reps)
    for (const auto& tr : r.traces)
      for (std::size_t j = 0; j < tr.looks.size(); ++j) {
        const auto& lk = tr.looks[j];
        os << r.rep << ',' << to_string(tr.kind) << ',' << j + 1 << ',' << cfg.analysis_times[j] << ','
           << (tr.ok ? 1 : 0) << ',' << lk.beta << ',' << lk.se << ',' << lk.wald << ',' << lk.p_info << ','
           << lk.n_t << ',' << lk.n_A;
        for (std::size_t s = 0; s < cfg.spendings.size(); ++s) {
          os << ',';
          if (tr.ok && j < tr.stops[s].fractions.size()) os << tr.stops[s].fractions[j];
          os << ',';
          if (tr.ok && j < tr.stops[s].boundaries.size()) os << tr.stops[s].boundaries[j];
        }
        os << '\n';
      }
}

}  // namespace lagseq
