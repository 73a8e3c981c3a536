// lagseq command-line front end: analyze, boundary, simulate, snapshot,
// generate.

#include <CLI11.hpp>
#include <lagseq/lagseq.hpp>
#include <lagseq/report.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace lagseq;

enum Exit { exit_ok = 0, exit_validation = 1, exit_numerical = 2, exit_stop = 3 };

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(csv::to_double(csv::trim(item), what));
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

std::string g6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
  std::string subjects, longitudinal, design, out, dump_curves, estimator = "aipw2", mode = "fixed", prior;
  double time = 0.0;
  double beta_alt = 0.0, power = 0.9, inflation = 1.0;
  std::size_t grid = 4001;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const EstimatorKind kind = parse_estimator(a.estimator);
  const bool info_mode = a.mode == "information";
  if (!info_mode && a.mode != "fixed") throw ValidationError("--mode must be fixed or information");
  if (info_mode && a.beta_alt == 0.0) throw ValidationError("information-based mode needs a nonzero --beta-alt");
  const TrialData data = load_trial(a.subjects, a.longitudinal, a.design);
  const TrialDesign& d = data.design;
  if (a.time < d.T_F)
    throw ValidationError("analysis time " + g6(a.time) + " precedes T_F = " + g6(d.T_F) +
                          "; the first analysis must occur at or after T_F");
  const std::vector<double> prior = parse_list(a.prior, "--prior-fractions");

  const auto snap = snapshot_at(data.records, a.time, d.T_F, d.l_default);
  AnalysisConfig cfg;
  cfg.model = d.model;
  cfg.basis = d.basis(snap.p_x(), snap.q());
  cfg.n_max = static_cast<double>(d.n_max);
  InterimAnalyzer an(snap, cfg);
  const AnalysisResult r = an.estimate(kind);

  json info = {{"mode", info_mode ? "information" : "fixed"}, {"n_ess", number(r.n_ess)}, {"p_fixed", number(r.p_info)}};
  double p = r.p_info;
  if (info_mode) {
    const double inf_t = 1.0 / (r.se * r.se);
    const double mi = max_information(d.alpha, d.sidedness, 1.0 - a.power, a.beta_alt, a.inflation);
    p = inf_t / mi;
    info["inf_t"] = inf_t;
    info["mi"] = mi;
  }
  info["p"] = number(p);

  // Boundary for this look given the fractions already used.
  const bool final_look = a.time >= d.t_end();
  std::size_t looks_after = 0;
  for (double t : d.analysis_times)
    if (t > a.time) ++looks_after;
  const double prev = prior.empty() ? 0.0 : prior.back();
  const double f = final_look ? 1.0 : monotone_fraction(prev, p, std::max<std::size_t>(looks_after, 1));
  info["fraction_used"] = f;
  info["fraction_adjusted"] = f != p;
  BoundaryEngine eng(d.alpha, d.sidedness, d.spending, a.grid);
  for (double t : prior) eng.next(t);
  eng.next(f);
  const SequentialDecision dec = decide(eng.plan(), prior.size(), r.wald, final_look, d.direction);

  if (!a.dump_curves.empty()) {
    std::ofstream out(a.dump_curves);
    if (!out) throw ValidationError("cannot write " + a.dump_curves);
    const auto& curves = an.curves();
    out << "arm,";
    std::ostringstream c0, c1;
    write_curve_csv(c0, curves.by_arm[0]);
    write_curve_csv(c1, curves.by_arm[1]);
    std::string line;
    std::istringstream s0(c0.str()), s1(c1.str());
    std::getline(s0, line);
    out << line << '\n';
    std::getline(s1, line);
    while (std::getline(s0, line)) out << "0," << line << '\n';
    while (std::getline(s1, line)) out << "1," << line << '\n';
  }

  RunManifest man;
  man.command = "analyze";
  man.config = {{"time", a.time},        {"estimator", to_string(kind)}, {"mode", info["mode"]},
                {"prior_fractions", prior}, {"design", design_to_json(d)}, {"grid_points", a.grid}};
  if (info_mode) {
    man.config["beta_alt"] = a.beta_alt;
    man.config["power"] = a.power;
    man.config["inflation"] = a.inflation;
  }
  man.add_input(a.subjects);
  man.add_input(a.longitudinal);
  man.add_input(a.design);

  json rep;
  rep["manifest"] = man.to_json();
  rep["result"] = to_json(r);
  rep["information"] = info;
  rep["boundary"] = to_json(eng.plan());
  rep["decision"] = to_json(dec);
  write_text(a.out, rep.dump(2) + "\n");
  if (!a.out.empty() && a.out != "-") {
    std::cout << "estimator " << to_string(kind) << "  t " << g6(a.time) << "  n " << r.n_t << "  nA " << r.n_A_t << '\n'
              << "beta " << g6(r.beta) << "  se " << g6(r.se) << "  wald " << g6(r.wald) << "  p " << g6(f)
              << "  boundary " << g6(dec.boundary) << "  decision " << to_string(dec.decision) << '\n';
  }
  return dec.decision == Decision::stop_reject ? exit_stop : exit_ok;
}

// ---------------------------------------------------------------------------
// boundary

struct BoundaryArgs {
  std::string fractions, spending = "obf", sided = "1", format = "csv", out;
  double alpha = 0.025;
  std::size_t grid = 4001;
};

int cmd_boundary(const BoundaryArgs& a) {
  const auto fr = parse_list(a.fractions, "--fractions");
  if (fr.empty()) throw ValidationError("--fractions is empty");
  const auto plan = compute_boundaries(fr, a.alpha, parse_sidedness(a.sided), parse_spending(a.spending), a.grid);
  if (a.format == "json") {
    RunManifest man;
    man.command = "boundary";
    man.config = {{"fractions", fr}, {"alpha", a.alpha}, {"sided", a.sided}, {"spending", a.spending}, {"grid_points", a.grid}};
    json j = {{"manifest", man.to_json()}, {"plan", to_json(plan)}};
    write_text(a.out, j.dump(2) + "\n");
  } else if (a.format == "csv") {
    std::ostringstream os;
    os << "j,t,spend,boundary\n";
    for (std::size_t j = 0; j < fr.size(); ++j)
      os << j + 1 << ',' << g6(plan.fractions[j]) << ',' << g6(plan.spend[j]) << ',' << g6(plan.boundaries[j]) << '\n';
    write_text(a.out, os.str());
  } else {
    throw ValidationError("--format must be csv or json");
  }
  return exit_ok;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  int scenario = 1;
  std::string hypothesis = "null", spending = "both", estimators, out, reps_csv;
  std::size_t reps = 2000, grid = 401;
  std::uint64_t seed = 42;
  std::size_t jobs = 0;
  bool quiet = false;
};

std::size_t default_jobs() {
  if (const char* e = std::getenv("LAGSEQ_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (end != e && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    throw ValidationError("LAGSEQ_JOBS must be a positive integer");
  }
  return 1;
}

int cmd_simulate(const SimulateArgs& a) {
  ScenarioConfig cfg = ScenarioConfig::standard(a.scenario, parse_hypothesis(a.hypothesis));
  cfg.reps = a.reps;
  cfg.seed = a.seed;
  cfg.grid_points = a.grid;
  if (a.spending == "both") {
    cfg.spendings = {SpendingKind::obrien_fleming, SpendingKind::pocock};
  } else {
    cfg.spendings = {parse_spending(a.spending)};
  }
  if (!a.estimators.empty()) {
    cfg.estimators.clear();
    std::stringstream ss(a.estimators);
    std::string item;
    while (std::getline(ss, item, ',')) cfg.estimators.push_back(parse_estimator(csv::trim(item)));
  }
  const std::size_t jobs = a.jobs > 0 ? a.jobs : default_jobs();
  std::function<void(std::size_t)> progress;
  if (!a.quiet) {
    const std::size_t step = std::max<std::size_t>(1, cfg.reps / 10);
    progress = [&](std::size_t done) {
      if (done % step == 0 || done == cfg.reps) std::cerr << "\r" << done << "/" << cfg.reps << " replications" << std::flush;
    };
  }
  const auto reps = run_replications(cfg, jobs, progress);
  if (!a.quiet) std::cerr << '\n';
  const auto agg = aggregate(cfg, reps);

  RunManifest man;
  man.command = "simulate";
  man.config = to_json(cfg);
  man.seed = cfg.seed;
  man.has_seed = true;
  json j = {{"manifest", man.to_json()}, {"config", to_json(cfg)}, {"aggregate", to_json(agg)}};
  write_text(a.out, j.dump(2) + "\n");
  if (!a.reps_csv.empty()) {
    std::ofstream out(a.reps_csv);
    if (!out) throw ValidationError("cannot write " + a.reps_csv);
    write_replications_csv(out, cfg, reps);
  }
  if (!a.out.empty() && a.out != "-") {
    std::cout << "scenario " << cfg.scenario << " " << to_string(cfg.hypothesis) << ", " << cfg.reps << " replications\n";
    for (const auto& e : agg.estimators) {
      std::cout << std::left << std::setw(6) << to_string(e.kind) << " sd(t1) " << g6(e.times.front().sd) << "  mse ratio(t1) "
                << g6(e.times.front().mse_ratio) << "  increments " << g6(e.ii_diagnostic);
      for (const auto& s : e.stopping)
        std::cout << "  " << to_string(s.spending) << ": P(reject) " << g6(s.p_reject) << " E(SS) " << g6(s.e_ss)
                  << " E(stop) " << g6(s.e_stop);
      std::cout << '\n';
    }
  }
  if (agg.failure_rate >= 1e-3) {
    std::cerr << "estimator failure rate " << g6(agg.failure_rate) << " is at or above 0.1%\n";
    for (const auto& e : agg.estimators)
      for (const auto& f : e.failures) std::cerr << "  " << to_string(e.kind) << ": " << f << '\n';
    return exit_numerical;
  }
  return exit_ok;
}

// ---------------------------------------------------------------------------
// snapshot / generate

struct SnapshotArgs {
  std::string subjects, longitudinal, design, out;
  double time = 0.0;
};

int cmd_snapshot(const SnapshotArgs& a) {
  const TrialData data = load_trial(a.subjects, a.longitudinal, a.design);
  const auto snap = snapshot_at(data.records, a.time, data.design.T_F, data.design.l_default);
  std::ostringstream os;
  write_snapshot(os, snap);
  write_text(a.out, os.str());
  return exit_ok;
}

struct GenerateArgs {
  int scenario = 1;
  std::string hypothesis = "alt", out_dir;
  std::uint64_t seed = 2024;
  std::size_t rep = 113;
};

int cmd_generate(const GenerateArgs& a) {
  ScenarioConfig cfg = ScenarioConfig::standard(a.scenario, parse_hypothesis(a.hypothesis));
  cfg.seed = a.seed;
  cfg.spendings = {SpendingKind::obrien_fleming};
  const auto recs = cfg.generate(a.rep);
  namespace fs = std::filesystem;
  fs::create_directories(a.out_dir);
  {
    std::ofstream out(fs::path(a.out_dir) / "subjects.csv");
    write_subjects(out, recs);
  }
  {
    std::ofstream out(fs::path(a.out_dir) / "longitudinal.csv");
    write_longitudinal(out, recs);
  }
  {
    std::ofstream out(fs::path(a.out_dir) / "design.json");
    out << design_to_json(cfg.design()).dump(2) << '\n';
  }
  std::cout << "wrote " << recs.size() << " subjects to " << a.out_dir << '\n';
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-sequential monitoring with time-lagged outcomes"};
  app.set_version_flag("--version", std::string(lagseq::version));
  app.require_subcommand(1);

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Interim analysis at one calendar time");
  c_an->add_option("--subjects", an.subjects, "Subject CSV")->required();
  c_an->add_option("--longitudinal", an.longitudinal, "Longitudinal covariate CSV");
  c_an->add_option("--design", an.design, "Design JSON")->required();
  c_an->add_option("--time", an.time, "Calendar time of the analysis")->required();
  c_an->add_option("--estimator", an.estimator, "tf, ipw, aipw1 or aipw2");
  c_an->add_option("--prior-fractions", an.prior, "Comma-separated information fractions of earlier looks");
  c_an->add_option("--mode", an.mode, "fixed (effective sample size) or information");
  c_an->add_option("--beta-alt", an.beta_alt, "Alternative for information-based monitoring");
  c_an->add_option("--power", an.power, "Target power for information-based monitoring");
  c_an->add_option("--inflation", an.inflation, "Inflation factor for the maximum information");
  c_an->add_option("--grid", an.grid, "Boundary integration grid points");
  c_an->add_option("--dump-curves", an.dump_curves, "Write censoring curves to this CSV");
  c_an->add_option("--out", an.out, "Report path (default stdout)");

  BoundaryArgs bd;
  auto* c_bd = app.add_subcommand("boundary", "Lan-DeMets stopping boundaries");
  c_bd->add_option("--fractions", bd.fractions, "Comma-separated information fractions")->required();
  c_bd->add_option("--alpha", bd.alpha, "Overall significance level");
  c_bd->add_option("--sided", bd.sided, "1 or 2");
  c_bd->add_option("--spending", bd.spending, "obf or pocock");
  c_bd->add_option("--format", bd.format, "csv or json");
  c_bd->add_option("--grid", bd.grid, "Integration grid points");
  c_bd->add_option("--out", bd.out, "Output path (default stdout)");

  SimulateArgs sm;
  auto* c_sm = app.add_subcommand("simulate", "Monte Carlo operating characteristics");
  c_sm->add_option("--scenario", sm.scenario, "1, 2 or 3")->required();
  c_sm->add_option("--hypothesis", sm.hypothesis, "null or alt");
  c_sm->add_option("--reps", sm.reps, "Replications");
  c_sm->add_option("--seed", sm.seed, "Master seed");
  c_sm->add_option("--spending", sm.spending, "obf, pocock or both");
  c_sm->add_option("--estimators", sm.estimators, "Comma-separated subset of tf,ipw,aipw1,aipw2");
  c_sm->add_option("--grid", sm.grid, "Boundary grid points per replication");
  c_sm->add_option("--jobs", sm.jobs, "Worker threads (default LAGSEQ_JOBS or 1)");
  c_sm->add_option("--out", sm.out, "results.json path (default stdout)");
  c_sm->add_option("--reps-csv", sm.reps_csv, "Per-replication CSV dump");
  c_sm->add_flag("--quiet", sm.quiet, "No progress output");

  SnapshotArgs sn;
  auto* c_sn = app.add_subcommand("snapshot", "Export the observed data at time t");
  c_sn->add_option("--subjects", sn.subjects, "Subject CSV")->required();
  c_sn->add_option("--longitudinal", sn.longitudinal, "Longitudinal covariate CSV");
  c_sn->add_option("--design", sn.design, "Design JSON")->required();
  c_sn->add_option("--time", sn.time, "Calendar time")->required();
  c_sn->add_option("--out", sn.out, "Output CSV (default stdout)");

  GenerateArgs gn;
  auto* c_gn = app.add_subcommand("generate", "Write one simulated trial as data files");
  c_gn->add_option("--scenario", gn.scenario, "1, 2 or 3");
  c_gn->add_option("--hypothesis", gn.hypothesis, "null or alt");
  c_gn->add_option("--seed", gn.seed, "Master seed");
  c_gn->add_option("--rep", gn.rep, "Replication index");
  c_gn->add_option("--out-dir", gn.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_validation;
  }

  try {
    if (*c_an) return cmd_analyze(an);
    if (*c_bd) return cmd_boundary(bd);
    if (*c_sm) return cmd_simulate(sm);
    if (*c_sn) return cmd_snapshot(sn);
    if (*c_gn) return cmd_generate(gn);
  } catch (const lagseq::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_numerical;
  }
  return exit_validation;
}
