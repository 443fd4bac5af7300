#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "exactdiag.hpp"
#include "extrapolate.hpp"
#include "io.hpp"

namespace bose_edgeworth {

namespace fs = std::filesystem;

struct ExperimentConfig {
  ModelConfig model = sweep_config();
  std::string observable = "halfline"; // "position", "halfline" or "matrix"
  std::optional<Mat> observable_matrix;
  std::vector<int> sweep{8, 12, 16, 20, 24, 28, 32};
  std::vector<int> iid_sweep{16, 24, 32, 48, 64, 96, 128, 192, 256};
  int k_max = 10;
  int eta = 1;
  int order = 1;
  unsigned seed = 12345;
  std::string output_dir = "runs";
};

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = to_json(c.model);
  j["observable"] = c.observable_matrix ? to_json_matrix(*c.observable_matrix) : json(c.observable);
  j["sweep"] = c.sweep;
  j["iid_sweep"] = c.iid_sweep;
  j["k_max"] = c.k_max;
  j["eta"] = c.eta;
  j["order"] = c.order;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

inline void validate(const ExperimentConfig& c) {
  const auto check_sweep = [](const std::vector<int>& s, int lo, const char* name) {
    require(!s.empty(), "ConfigError", std::string(name) + " must be nonempty");
    for (std::size_t i = 0; i < s.size(); ++i) {
      require(s[i] >= lo, "ConfigError", std::string(name) + " entries must be at least " + std::to_string(lo));
      require(i == 0 || s[i] > s[i - 1], "ConfigError", std::string(name) + " must be strictly increasing");
    }
  };
  check_sweep(c.sweep, 2, "sweep");
  check_sweep(c.iid_sweep, 1, "iid_sweep");
  require(c.k_max >= 5 && c.k_max <= 40, "ConfigError", "k_max must lie in 5..40");
  require(c.eta >= 0 && c.eta <= std::min(3, c.model.M - 1), "ConfigError", "eta must lie in 0..min(3, M-1)");
  require(c.order == 0 || c.order == 1, "ConfigError", "order must be 0 or 1");
  if (c.observable_matrix) {
    const Mat& B = *c.observable_matrix;
    require(B.rows() == c.model.M && B.cols() == c.model.M, "ConfigError", "observable must be M x M");
    require(max_asymmetry(B) <= 1e-12, "ConfigError", "observable must be symmetric");
  } else {
    require(c.observable == "position" || c.observable == "halfline", "ConfigError",
            "observable must be position, halfline or a matrix");
  }
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
  require(j.is_object(), "ConfigError", "config must be a JSON object");
  ExperimentConfig c;
  try {
    if (j.contains("model")) c.model = model_config_from_json(j["model"]);
    if (j.contains("observable")) {
      if (j["observable"].is_string()) {
        c.observable = j["observable"].get<std::string>();
      } else {
        c.observable = "matrix";
        c.observable_matrix = matrix_from_json(j["observable"]);
      }
    }
    if (j.contains("sweep")) c.sweep = j["sweep"].get<std::vector<int>>();
    if (j.contains("iid_sweep")) c.iid_sweep = j["iid_sweep"].get<std::vector<int>>();
    c.k_max = j.value("k_max", c.k_max);
    c.eta = j.value("eta", c.eta);
    c.order = j.value("order", c.order);
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw Error("ConfigError", e.what());
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const fs::path& p) {
  require(fs::is_regular_file(p), "ConfigError", "cannot read config " + p.string());
  json j;
  try {
    j = json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw Error("ConfigError", e.what());
  }
  return experiment_config_from_json(j);
}

// The run identity excludes where the output goes.
inline std::string run_hash(const ExperimentConfig& c) {
  json j = to_json(c);
  j.erase("output_dir");
  return config_hash(j);
}

inline Mat observable_for(const ExperimentConfig& c, const ModelSpec& spec) {
  if (c.observable_matrix) return *c.observable_matrix;
  if (c.observable == "position") return position_operator(spec.basis);
  return halfline_operator(spec.basis);
}

// Smooth test functions for weak comparisons, scaled with sigma.
struct TestFunction {
  std::string name;
  std::function<double(double)> g;
};

inline std::vector<TestFunction> test_functions(double sigma) {
  return {
      {"bump", [sigma](double t) {
         const double z = (t - 0.5 * sigma) / (0.7 * sigma);
         return std::exp(-0.5 * z * z);
       }},
      {"cosine", [sigma](double t) { return std::cos((t - 0.3 * sigma) / sigma) * std::exp(-t * t / (8.0 * sigma * sigma)); }},
  };
}

struct Pipeline {
  ExperimentConfig cfg;
  ModelSpec spec;
  HartreeSolution sol;
  QuadraticHamiltonian qh;
  BogoliubovSolution bog;
  Mat B;
  NuSigma ns;
};

inline Pipeline prepare(const ExperimentConfig& cfg) {
  Pipeline p;
  p.cfg = cfg;
  p.spec = build_model(cfg.model);
  p.sol = solve_hartree(p.spec, 1e-11, 200000, cfg.seed);
  p.qh = assemble_quadratic(p.sol, p.spec);
  p.bog = diagonalize(p.qh);
  p.B = observable_for(cfg, p.spec);
  p.ns = nu_sigma(p.bog, p.B, p.sol);
  return p;
}

inline double sup_clt_error(const ObservableSpectrum& sp, double sigma, int points = 801) {
  const Vec s = Vec::LinSpaced(points, -4.0 / sigma, 4.0 / sigma);
  const CVec phi = characteristic_function(sp, s);
  double sup = 0.0;
  for (int i = 0; i < points; ++i) sup = std::max(sup, std::abs(phi(i) - std::exp(-0.5 * sigma * sigma * s(i) * s(i))));
  return sup;
}

struct SweepPoint {
  int N = 0;
  int dim = 0;
  double energy = 0.0;
  double gap = 0.0;
  double mean = 0.0;
  Vec kappa; // kappa_0..kappa_6 of the rescaled fluctuation
  double covariance = 0.0;
  double clt_sup = 0.0;
  double depletion = 0.0;
  Vec chi;                // ground state excitation vector
  ObservableSpectrum ground;
  std::optional<ObservableSpectrum> excited;
  double excited_overlap = 0.0;
};

// Predicted excited state b^dag(xi_0) ... b^dag(xi_{eta-1}) Omega_b, normalized.
inline Vec predicted_excited(const Pipeline& p, const FockBasis& fock, const QuasiFreeGround& ground) {
  Vec v = ground.state;
  for (int j = 0; j < p.cfg.eta; ++j) v = quasiparticle_creation(fock, p.bog, p.bog.xi.col(j)) * v;
  return v.normalized();
}

inline SweepPoint sweep_point(const Pipeline& p, int N, const FockBasis& fock, const Vec* excited_target) {
  SweepPoint pt;
  pt.N = N;
  const SectorHamiltonian H = assemble_hamiltonian(N, p.spec);
  pt.dim = H.basis.size();
  const int want = excited_target ? std::min(pt.dim, 6) : std::min(pt.dim, 2);
  const SpectralData sd = eigenstates(H, want);
  const Vec psi = sd.states.col(0);
  pt.energy = sd.energies(0);
  pt.gap = sd.gap;
  pt.ground = observable_spectrum(H.basis, psi, p.B);
  pt.mean = pt.ground.mean;
  pt.kappa = cumulants(pt.ground, 6);
  pt.covariance = covariance(H.basis, psi, p.B);
  pt.clt_sup = sup_clt_error(pt.ground, p.ns.sigma);
  const Mat gamma = reduced_density(H.basis, psi);
  pt.depletion = 1.0 - p.sol.phi.dot(gamma * p.sol.phi);
  pt.chi = excitation_map(H.basis, psi, p.sol.phi, fock).amplitudes;
  if (excited_target) {
    int best = -1;
    for (int j = 1; j < want; ++j) {
      const Vec chi = excitation_map(H.basis, sd.states.col(j), p.sol.phi, fock).amplitudes;
      const double ov = std::abs(chi.dot(*excited_target));
      if (ov > pt.excited_overlap) {
        pt.excited_overlap = ov;
        best = j;
      }
    }
    if (best > 0 && pt.excited_overlap > 0.9) pt.excited = observable_spectrum(H.basis, sd.states.col(best), p.B);
  }
  return pt;
}

// Bounded pool: items are claimed in order, results land at their own index.
template <class R>
std::vector<std::optional<R>> parallel_map(int n, int jobs, const std::function<R(int)>& work,
                                           std::vector<std::exception_ptr>& errors) {
  std::vector<std::optional<R>> out(n);
  errors.assign(n, nullptr);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int i = next++; i < n; i = next++) {
      try {
        out[i] = work(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int k = std::max(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

inline int default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

// Run directory: out/<command>, with a marker present while a run is in flight.
class RunDir {
 public:
  RunDir(const fs::path& out, const std::string& command, const std::string& hash, bool resume)
      : dir_(out / command), hash_(hash) {
    fs::create_directories(out);
    if (fs::exists(dir_)) {
      const bool partial = fs::exists(dir_ / ".incomplete");
      const bool same = fs::exists(dir_ / "run.hash") && read_file(dir_ / "run.hash") == hash;
      if (resume && same) {
        resumed_ = true;
      } else if (partial || !same) {
        quarantine(out, command);
      } else {
        fs::remove_all(dir_); // finished run of the same config, recomputed from scratch
      }
    }
    fs::create_directories(dir_ / "rows");
    write_file_atomic(dir_ / "run.hash", hash);
    write_file_atomic(dir_ / ".incomplete", hash);
  }
  const fs::path& path() const { return dir_; }
  bool resumed() const { return resumed_; }
  std::optional<fs::path> quarantined() const { return quarantined_; }

  std::optional<json> load_row(const std::string& key) const {
    const fs::path p = dir_ / "rows" / (key + ".json");
    if (!resumed_ || !fs::exists(p)) return std::nullopt;
    json j = json::parse(read_file(p), nullptr, false);
    if (j.is_discarded() || j.value("hash", "") != hash_ || j.value("status", "") != "ok") return std::nullopt;
    return j;
  }

  void store_row(const std::string& key, json row) {
    std::lock_guard<std::mutex> lock(mu_);
    row["hash"] = hash_;
    write_file_atomic(dir_ / "rows" / (key + ".json"), row.dump());
  }

  void write(const std::string& name, const std::string& content) {
    std::lock_guard<std::mutex> lock(mu_);
    write_file_atomic(dir_ / name, content);
  }

  void finish() { fs::remove(dir_ / ".incomplete"); }

 private:
  void quarantine(const fs::path& out, const std::string& command) {
    const fs::path qdir = out / "quarantine";
    fs::create_directories(qdir);
    int k = 0;
    while (fs::exists(qdir / (command + "." + std::to_string(k)))) ++k;
    const fs::path target = qdir / (command + "." + std::to_string(k));
    fs::rename(dir_, target);
    quarantined_ = target;
    std::cerr << "note: moved previous " << command << " run to " << target.string() << "\n";
  }

  fs::path dir_;
  std::string hash_;
  bool resumed_ = false;
  std::optional<fs::path> quarantined_;
  std::mutex mu_;
};

struct CheckResult {
  std::string name;
  double value = 0.0;
  std::string target;
  bool pass = false;
};

inline json fit_json(const PowerLawFit& f) {
  return {{"exponent", f.exponent}, {"amplitude", f.amplitude}, {"r_squared", f.r_squared}, {"points", f.points}};
}

struct RunReport {
  std::string command;
  std::string hash;
  json body = json::object();
  std::vector<CheckResult> checks;
  double wall_time = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
  }

  json to_json() const {
    json j = body;
    j["command"] = command;
    j["config_hash"] = hash;
    json cs = json::array();
    for (const auto& c : checks) cs.push_back({{"name", c.name}, {"value", c.value}, {"target", c.target}, {"pass", c.pass}});
    j["checks"] = cs;
    j["wall_time_s"] = wall_time;
    return j;
  }
};

inline CheckResult exponent_check(const std::string& name, double value, double target, double tol) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g +- %g", target, tol);
  return {name, value, buf, std::abs(value - target) <= tol};
}

struct RunOptions {
  fs::path out = "runs";
  int jobs = default_jobs();
  bool resume = false;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::vector<double> as_doubles(const std::vector<int>& v) { return {v.begin(), v.end()}; }

inline void finalize(RunDir& dir, RunReport& rep, std::chrono::steady_clock::time_point t0) {
  rep.wall_time = seconds_since(t0);
  dir.write("report.json", rep.to_json().dump(2) + "\n");
  dir.finish();
}

} // namespace detail

inline RunReport cmd_hartree(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep{"hartree", run_hash(cfg)};
  RunDir dir(opt.out, rep.command, rep.hash, opt.resume);
  const ModelSpec spec = build_model(cfg.model);
  const HartreeSolution sol = solve_hartree(spec, 1e-11, 200000, cfg.seed);
  json h;
  h["phi"] = to_json_vector(sol.phi);
  h["mu_H"] = sol.mu_H;
  h["e_H"] = sol.e_H;
  h["residual"] = sol.residual;
  h["iterations"] = sol.iterations;
  h["multiple_minima_suspected"] = sol.multiple_minima_suspected;
  dir.write("hartree.json", h.dump(2) + "\n");
  rep.body["hartree"] = h;
  rep.checks.push_back({"hartree_residual", sol.residual, "<= 1e-10", sol.residual <= 1e-10});
  detail::finalize(dir, rep, t0);
  return rep;
}

inline RunReport cmd_bogoliubov(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep{"bogoliubov", run_hash(cfg)};
  RunDir dir(opt.out, rep.command, rep.hash, opt.resume);
  const Pipeline p = prepare(cfg);
  json b = to_json(p.bog);
  b["nu"] = to_json_vector(p.ns.nu);
  b["sigma"] = p.ns.sigma;
  b["sigma_degenerate"] = p.ns.degenerate;
  dir.write("bogoliubov.json", b.dump(2) + "\n");
  const Mat sympl = p.bog.U0.transpose() * p.bog.U0 - p.bog.V0.transpose() * p.bog.V0 -
                    Mat::Identity(p.bog.D.size(), p.bog.D.size());
  const double defect = std::max(sympl.cwiseAbs().maxCoeff(), max_asymmetry(p.bog.U0.transpose() * p.bog.V0));
  rep.body["sigma"] = p.ns.sigma;
  rep.body["D"] = to_json_vector(p.bog.D);
  rep.checks.push_back({"symplectic_defect", defect, "<= 1e-10", defect <= 1e-10});
  detail::finalize(dir, rep, t0);
  return rep;
}

inline const std::vector<std::string>& clt_columns() {
  static const std::vector<std::string> cols{
      "N",      "dim",    "E0",     "gap",    "depletion",    "mean",       "kappa1",        "kappa2",
      "kappa3", "kappa4", "kappa5", "kappa6", "sqrtN_kappa3", "covariance", "clt_sup_error", "status"};
  return cols;
}

inline RunReport cmd_clt_sweep(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep{"clt-sweep", run_hash(cfg)};
  RunDir dir(opt.out, rep.command, rep.hash, opt.resume);
  const Pipeline p = prepare(cfg);
  require(!p.ns.degenerate, "SigmaDegenerate", "sigma vanishes for this observable");
  const FockBasis fock(cfg.model.M - 1, cfg.k_max);
  const int n = static_cast<int>(cfg.sweep.size());

  std::vector<std::exception_ptr> errors;
  auto rows = parallel_map<json>(n, opt.jobs, [&](int i) -> json {
    const int N = cfg.sweep[i];
    const std::string key = "N" + std::to_string(N);
    if (auto cached = dir.load_row(key)) return *cached;
    const SweepPoint pt = sweep_point(p, N, fock, nullptr);
    json r;
    r["N"] = N;
    r["dim"] = pt.dim;
    r["E0"] = pt.energy;
    r["gap"] = pt.gap;
    r["depletion"] = pt.depletion;
    r["mean"] = pt.mean;
    for (int l = 1; l <= 6; ++l) r["kappa" + std::to_string(l)] = pt.kappa(l);
    r["sqrtN_kappa3"] = std::sqrt(double(N)) * pt.kappa(3);
    r["covariance"] = pt.covariance;
    r["clt_sup_error"] = pt.clt_sup;
    r["chi"] = to_json_vector(pt.chi);
    r["status"] = "ok";
    dir.store_row(key, r);
    return r;
  }, errors);

  std::string csv = csv_line(clt_columns());
  std::exception_ptr first_error;
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> fields;
    if (!rows[i]) {
      std::string kind = "error";
      try {
        std::rethrow_exception(errors[i]);
      } catch (const Error& e) {
        kind = e.kind();
      } catch (...) {
      }
      if (!first_error) first_error = errors[i];
      fields.push_back(std::to_string(cfg.sweep[i]));
      for (std::size_t c = 1; c + 1 < clt_columns().size(); ++c) fields.push_back("nan");
      fields.push_back("failed:" + kind);
      dir.store_row("N" + std::to_string(cfg.sweep[i]), {{"N", cfg.sweep[i]}, {"status", "failed:" + kind}});
    } else {
      const json& r = *rows[i];
      fields.push_back(std::to_string(r["N"].get<int>()));
      fields.push_back(std::to_string(r["dim"].get<int>()));
      for (std::size_t c = 2; c + 1 < clt_columns().size(); ++c)
        fields.push_back(format_number(r[clt_columns()[c]].get<double>()));
      fields.push_back("ok");
    }
    csv += csv_line(fields);
  }
  dir.write("clt_sweep.csv", csv);
  if (first_error) std::rethrow_exception(first_error); // marker stays: the run is partial

  const std::vector<double> Ns = detail::as_doubles(cfg.sweep);
  std::vector<double> cov, sup, k2, a3;
  std::vector<Vec> chis;
  for (const auto& r : rows) {
    cov.push_back((*r)["covariance"].get<double>());
    sup.push_back((*r)["clt_sup_error"].get<double>());
    k2.push_back((*r)["kappa2"].get<double>());
    a3.push_back((*r)["sqrtN_kappa3"].get<double>());
    chis.push_back(vector_from_json((*r)["chi"]));
  }
  const double sigma = p.ns.sigma;
  rep.body["sigma"] = {{"bogoliubov", sigma}};
  const PowerLawFit fcov = fit_power_law(Ns, cov);
  const PowerLawFit fsup = fit_power_law(Ns, sup);
  rep.body["fits"] = {{"covariance", fit_json(fcov)}, {"clt_sup_error", fit_json(fsup)}};
  rep.checks.push_back(exponent_check("covariance_exponent", fcov.exponent, -1.0, 0.2));
  rep.checks.push_back(exponent_check("clt_exponent", fsup.exponent, -0.5, 0.15));

  if (n >= 3) {
    const int k = std::min(3, n - 2);
    const RichardsonResult rk2 = richardson(Ns, k2, 2.0, k);
    const double rel = std::abs(rk2.coeffs(0) - sigma * sigma) / (sigma * sigma);
    rep.body["sigma"]["richardson_kappa2"] = rk2.coeffs(0);
    rep.body["sigma"]["richardson_sigma"] = std::sqrt(std::max(0.0, rk2.coeffs(0)));
    rep.checks.push_back({"kappa2_vs_sigma2", rel, "<= 0.02", rel <= 0.02});
    const RichardsonResult ra3 = richardson(Ns, a3, 2.0, k);
    rep.body["alpha3"] = {{"oracle", ra3.coeffs(0)}, {"oracle_stability_gap", ra3.stability_gap}};
    if (n >= 4) {
      const ChiExpansion ce = chi_expansion(Ns, chis, fock);
      const QuasiFreeGround g = quasifree_ground_state(fock, p.qh);
      const ThetaOverlap th = theta13_overlap(ce.chi1, p.ns.nu, p.bog, fock, g);
      const Mat Bq = centered_perp_block(p.B, p.sol, p.bog.perp);
      const double analytic = alpha3_analytic(p.ns.nu, p.bog.U0, p.bog.V0, Bq, th.value);
      const double gap = std::abs(analytic - ra3.coeffs(0)) / std::max(std::abs(analytic), 1e-300);
      rep.body["alpha3"]["analytic"] = analytic;
      rep.body["alpha3"]["theta13"] = th.value;
      rep.body["alpha3"]["theta_truncation_warning"] = th.truncation_warning;
      rep.body["alpha3"]["relative_gap"] = gap;
      rep.body["fits"]["chi_remainder"] = fit_json(ce.residual_fit);
      rep.checks.push_back({"alpha3_routes_agree", gap, "<= 0.05", gap <= 0.05});
    }
  }
  const double dmin = p.bog.D.minCoeff();
  const double gap_rel = std::abs(rows.back()->at("gap").get<double>() - dmin) / dmin;
  rep.body["gap_vs_Dmin"] = gap_rel;
  detail::finalize(dir, rep, t0);
  return rep;
}

inline RunReport cmd_edgeworth(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep{"edgeworth", run_hash(cfg)};
  RunDir dir(opt.out, rep.command, rep.hash, opt.resume);
  const Pipeline p = prepare(cfg);
  require(!p.ns.degenerate, "SigmaDegenerate", "sigma vanishes for this observable");
  require(cfg.sweep.size() >= 4, "ConfigError", "edgeworth needs at least four sweep points");
  const double sigma = p.ns.sigma;
  const FockBasis fock(cfg.model.M - 1, cfg.k_max);
  const QuasiFreeGround ground = quasifree_ground_state(fock, p.qh);
  std::optional<Vec> target;
  if (cfg.eta > 0) target = predicted_excited(p, fock, ground);
  const int n = static_cast<int>(cfg.sweep.size());

  std::vector<std::exception_ptr> errors;
  auto pts = parallel_map<SweepPoint>(n, opt.jobs, [&](int i) {
    return sweep_point(p, cfg.sweep[i], fock, target ? &*target : nullptr);
  }, errors);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  const std::vector<double> Ns = detail::as_doubles(cfg.sweep);
  std::vector<double> a3;
  std::vector<Vec> chis;
  for (const auto& pt : pts) {
    a3.push_back(std::sqrt(double(pt->N)) * pt->kappa(3));
    chis.push_back(pt->chi);
  }
  const double oracle = richardson(Ns, a3, 2.0, std::min(3, n - 2)).coeffs(0);
  const ChiExpansion ce = chi_expansion(Ns, chis, fock);
  const ThetaOverlap th = theta13_overlap(ce.chi1, p.ns.nu, p.bog, fock, ground);
  const double analytic =
      alpha3_analytic(p.ns.nu, p.bog.U0, p.bog.V0, centered_perp_block(p.B, p.sol, p.bog.perp), th.value);
  rep.body["alpha3"] = {{"analytic", analytic}, {"oracle", oracle}};
  rep.body["sigma"] = {{"bogoliubov", sigma}};

  const EdgeworthSeries s0 = ground_series(sigma, analytic, 0);
  const EdgeworthSeries s1 = ground_series(sigma, analytic, 1);
  const EdgeworthSeries s1o = ground_series(sigma, oracle, 1);
  std::optional<EdgeworthSeries> sx;
  std::vector<Vec> xi;
  for (int j = 0; j < cfg.eta; ++j) xi.push_back(p.bog.xi.col(j));
  if (cfg.eta > 0) sx = excited_series(xi, p.ns.nu, sigma);
  rep.body["series"] = {{"order0", to_json(s0)}, {"order1", to_json(s1)}};
  if (sx) rep.body["series"]["excited"] = to_json(*sx);

  const auto tfs = test_functions(sigma);
  std::vector<std::string> header{"N"};
  for (const auto& tf : tfs)
    for (const char* col : {"_err_order0", "_err_order1", "_err_order1_oracle", "_err_excited"})
      header.push_back(tf.name + col);
  header.push_back("excited_overlap");
  std::string csv = csv_line(header);
  std::map<std::string, std::vector<double>> errs;
  bool quad_warning = false;
  const auto exact = [](const ObservableSpectrum& sp, const std::function<double(double)>& g) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < sp.lambda.size(); ++i) acc += sp.weights(i) * g(sp.lambda(i));
    return acc;
  };
  for (const auto& pt : pts) {
    std::vector<std::string> f{std::to_string(pt->N)};
    for (const auto& tf : tfs) {
      const double ex = exact(pt->ground, tf.g);
      const EdgeworthSeries* ser[] = {&s0, &s1, &s1o};
      const char* tag[] = {"order0", "order1", "order1_oracle"};
      for (int k = 0; k < 3; ++k) {
        const WeakResult w = weak_expectation(*ser[k], pt->N, tf.g);
        quad_warning = quad_warning || w.quadrature_warning;
        const double e = std::abs(ex - w.value);
        errs[tf.name + "_" + tag[k]].push_back(e);
        f.push_back(format_number(e));
      }
      if (sx && pt->excited) {
        const double e = std::abs(exact(*pt->excited, tf.g) - weak_expectation(*sx, pt->N, tf.g).value);
        errs[tf.name + "_excited"].push_back(e);
        f.push_back(format_number(e));
      } else {
        f.push_back("nan");
      }
    }
    f.push_back(format_number(pt->excited_overlap));
    csv += csv_line(f);
  }
  dir.write("edgeworth.csv", csv);

  // Density tables at the largest N.
  const double Nmax = Ns.back();
  const Vec x = Vec::LinSpaced(161, -4.0 * sigma, 4.0 * sigma);
  const Vec d0 = density_eval(s0, Nmax, x), d1 = density_eval(s1, Nmax, x);
  std::optional<Vec> dx;
  if (sx) dx = density_eval(*sx, Nmax, x);
  std::string dens = csv_line({"x", "order0", "order1", "excited"});
  for (Eigen::Index i = 0; i < x.size(); ++i)
    dens += csv_line({format_number(x(i)), format_number(d0(i)), format_number(d1(i)), dx ? format_number((*dx)(i)) : "nan"});
  dir.write("density.csv", dens);

  json fits = json::object();
  for (const auto& tf : tfs) {
    const PowerLawFit f0 = fit_power_law(Ns, errs[tf.name + "_order0"]);
    const PowerLawFit f1 = fit_power_law(Ns, errs[tf.name + "_order1"]);
    const PowerLawFit f1o = fit_power_law(Ns, errs[tf.name + "_order1_oracle"]);
    fits[tf.name] = {{"order0", fit_json(f0)}, {"order1", fit_json(f1)}, {"order1_oracle", fit_json(f1o)}};
    rep.checks.push_back(exponent_check(tf.name + "_order1_exponent", f1.exponent, -1.0, 0.2));
    rep.checks.push_back({tf.name + "_order1_steeper", f1.exponent - f0.exponent, "< 0", f1.exponent < f0.exponent});
    const auto& ex = errs[tf.name + "_excited"];
    if (ex.size() == Ns.size()) fits[tf.name]["excited"] = fit_json(fit_power_law(Ns, ex));
  }
  rep.body["fits"] = fits;
  rep.body["quadrature_warning"] = quad_warning;
  rep.body["negative_mass_order1"] = negative_mass(s1, Nmax);
  detail::finalize(dir, rep, t0);
  return rep;
}

// E[g((S_N - N mean)/sqrt N)] for S_N a sum of N i.i.d. draws, by summing over
// occupation counts of the atoms with multinomial weights.
inline double iid_exact_expectation(const IidLaw& law, int N, const std::function<double(double)>& g) {
  const int m = static_cast<int>(law.law.support.size());
  const Vec logp = law.law.weights.array().log();
  double acc = 0.0;
  const double sq = std::sqrt(double(N));
  for (const Occupation& n : detail::compositions(N, m)) {
    double lw = std::lgamma(N + 1.0), s = 0.0;
    bool zero = false;
    for (int i = 0; i < m; ++i) {
      if (n[i] == 0) continue;
      if (law.law.weights(i) == 0.0) {
        zero = true;
        break;
      }
      lw += n[i] * logp(i) - std::lgamma(n[i] + 1.0);
      s += n[i] * law.law.support(i);
    }
    if (zero) continue;
    acc += std::exp(lw) * g((s - N * law.mean) / sq);
  }
  return acc;
}

inline RunReport cmd_iid_demo(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep{"iid-demo", run_hash(cfg)};
  RunDir dir(opt.out, rep.command, rep.hash, opt.resume);
  const ModelSpec spec = build_model(cfg.model);
  const HartreeSolution sol = solve_hartree(spec, 1e-11, 200000, cfg.seed);
  const IidLaw law = iid_single_particle_law(observable_for(cfg, spec), sol.phi, 8);
  require(law.law.support.size() >= 2, "ConfigError", "observable needs two distinct eigenvalues in phi");
  std::cerr << "note: the single-particle law is a lattice law; its Edgeworth expansion holds only in weak form\n";
  if (std::abs(law.cumulants(3)) < 1e-12) std::cerr << "note: kappa3 = 0, the order-1 term vanishes\n";

  const int orders = 4;
  std::vector<EdgeworthSeries> series;
  for (int a = 0; a < orders; ++a) series.push_back(iid_series(law, a));
  const double sigma = law.sigma_iid;
  const auto tfs = test_functions(sigma);
  const int n = static_cast<int>(cfg.iid_sweep.size());

  std::vector<std::exception_ptr> errors;
  auto rows = parallel_map<std::vector<double>>(n, opt.jobs, [&](int i) {
    const int N = cfg.iid_sweep[i];
    std::vector<double> e;
    for (const auto& tf : tfs) {
      const double ex = iid_exact_expectation(law, N, tf.g);
      for (int a = 0; a < orders; ++a) e.push_back(std::abs(ex - weak_expectation(series[a], N, tf.g).value));
    }
    return e;
  }, errors);
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::string> header{"N"};
  for (const auto& tf : tfs)
    for (int a = 0; a < orders; ++a) header.push_back(tf.name + "_err_order" + std::to_string(a));
  std::string csv = csv_line(header);
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> f{std::to_string(cfg.iid_sweep[i])};
    for (double v : *rows[i]) f.push_back(format_number(v));
    csv += csv_line(f);
  }
  dir.write("iid_demo.csv", csv);

  const std::vector<double> Ns = detail::as_doubles(cfg.iid_sweep);
  json fits = json::object();
  for (std::size_t t = 0; t < tfs.size(); ++t)
    for (int a = 0; a < orders; ++a) {
      std::vector<double> y;
      for (int i = 0; i < n; ++i) y.push_back((*rows[i])[t * orders + a]);
      const PowerLawFit f = fit_power_law(Ns, y);
      fits[tfs[t].name]["order" + std::to_string(a)] = fit_json(f);
      if (a <= 2 && t == 0)
        rep.checks.push_back(exponent_check("iid_order" + std::to_string(a) + "_exponent", f.exponent,
                                            -(a + 1) / 2.0, 0.2));
    }
  rep.body["fits"] = fits;
  rep.body["law"] = {{"values", to_json_vector(law.law.support)},
                     {"probs", to_json_vector(law.law.weights)},
                     {"mean", law.mean},
                     {"sigma_iid", law.sigma_iid},
                     {"cumulants", to_json_vector(law.cumulants)}};
  detail::finalize(dir, rep, t0);
  return rep;
}

// Collects every report.json under the output directory.
inline RunReport cmd_report(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep{"report", run_hash(cfg)};
  json runs = json::object();
  if (fs::exists(opt.out)) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(opt.out))
      if (e.is_directory() && e.path().filename() != "quarantine" && e.path().filename() != "report") dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) {
      const fs::path rj = d / "report.json";
      if (!fs::exists(rj)) continue;
      const bool partial = fs::exists(d / ".incomplete");
      json j = json::parse(read_file(rj), nullptr, false);
      if (j.is_discarded()) continue;
      runs[d.filename().string()] = j;
      for (const auto& c : j.value("checks", json::array()))
        rep.checks.push_back({d.filename().string() + "/" + c.value("name", ""), c.value("value", 0.0),
                              c.value("target", ""), c.value("pass", false) && !partial});
    }
  }
  rep.body["runs"] = runs;
  RunDir dir(opt.out, rep.command, rep.hash, false);
  detail::finalize(dir, rep, t0);
  return rep;
}

} // namespace bose_edgeworth
