#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hemalimit/config.hpp"
#include "hemalimit/empirical.hpp"
#include "hemalimit/flow.hpp"
#include "hemalimit/io.hpp"
#include "hemalimit/limit.hpp"
#include "hemalimit/metrics.hpp"
#include "hemalimit/numerics.hpp"
#include "hemalimit/parallel.hpp"
#include "hemalimit/ssa.hpp"

namespace fs = std::filesystem;
using namespace hemalimit;
using nlohmann::json;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, numerical_error = 3, io_error = 4 };

struct Common {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

// Collects outputs so the manifest can list their hashes.
class Run {
 public:
  Run(std::string command, const Common& common, ModelConfig config)
      : command_(std::move(command)), out_(common.out_dir), config_(std::move(config)),
        start_(std::chrono::steady_clock::now()) {
    if (out_.empty()) out_ = fs::path("out") / command_;
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) throw IoError("cannot create output directory " + out_.string() + ": " + ec.message());
  }

  const ModelConfig& config() const { return config_; }

  void write(const std::string& name, const std::string& content) {
    write_file_atomic(out_ / name, content);
    outputs_.push_back({{"file", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
  }

  void finish(json parameters) {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string rendered = render_config(config_);
    json manifest{{"tool", "hemalimit"},
                  {"version", HEMALIMIT_VERSION},
                  {"command", command_},
                  {"parameters", std::move(parameters)},
                  {"seed", config_.seed},
                  {"workers", default_workers()},
                  {"config", rendered},
                  {"config_sha256", sha256_hex(rendered)},
                  {"outputs", outputs_},
                  {"wall_seconds", seconds}};
    write_file_atomic(out_ / "manifest.json", manifest.dump(2) + "\n");
    std::cout << command_ << ": wrote " << outputs_.size() << " files to " << out_.string() << "\n";
  }

 private:
  std::string command_;
  fs::path out_;
  ModelConfig config_;
  std::chrono::steady_clock::time_point start_;
  json outputs_ = json::array();
};

ModelConfig resolve_config(const Common& common) {
  ModelConfig c = common.config_path.empty() ? reference_config() : load_config(common.config_path);
  if (common.seed) c.seed = *common.seed;
  c.validate();
  return c;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config_path, "Configuration file (defaults to the reference model)");
  cmd->add_option("--out", common.out_dir, "Output directory (default out/<command>)");
  cmd->add_option("--seed", common.seed, "Override the configured seed");
}

std::vector<std::string> x_header(const std::vector<double>& x) {
  std::vector<std::string> h{"t"};
  for (double v : x) h.push_back("x=" + format_double(v));
  return h;
}

int cmd_simulate(const Common& common, int replicates) {
  if (replicates < 1) throw ConfigError("--replicates must be >= 1");
  Run run("simulate", common, resolve_config(common));
  const ModelConfig& c = run.config();
  const int n = c.n_compartments;
  std::vector<double> times;
  std::vector<MomentTable> per_sample;
  ordered_map_reduce(
      static_cast<std::size_t>(replicates), 0, [&](std::size_t k) { return simulate(c, k); },
      [&](std::size_t k, Trajectory&& traj) {
        if (per_sample.empty()) {
          times = traj.times;
          per_sample.assign(times.size(), MomentTable(static_cast<std::size_t>(n)));
        }
        CsvTable t({"t", "stem", "mature", "immature_mass"});
        std::vector<double> counts(static_cast<std::size_t>(n));
        for (std::size_t s = 0; s < traj.times.size(); ++s) {
          const CompartmentState st = traj.state(s);
          t.add_row(std::vector<double>{st.t, st.scaled_stem(), st.scaled_mature(), st.immature_mass()});
          std::transform(st.counts.begin(), st.counts.end(), counts.begin(),
                         [](std::int64_t v) { return static_cast<double>(v); });
          per_sample[s].add(counts);
        }
        run.write("trajectory_" + std::to_string(k) + ".csv", t.str());
      });
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= n; ++i) header.push_back("X" + std::to_string(i));
  CsvTable mean(header), sd(header);
  for (std::size_t s = 0; s < times.size(); ++s) {
    std::vector<double> mrow{times[s]}, srow{times[s]};
    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      mrow.push_back(per_sample[s].mean(i));
      srow.push_back(std::sqrt(per_sample[s].variance(i)));
    }
    mean.add_row(mrow);
    sd.add_row(srow);
  }
  run.write("ensemble_mean.csv", mean.str());
  run.write("ensemble_sd.csv", sd.str());
  run.finish({{"replicates", replicates}});
  return ok;
}

int cmd_diagnose(const Common& common, const std::string& testfn, int replicate) {
  Run run("diagnose", common, resolve_config(common));
  TestFunction f = [&] {
    try {
      return TestFunction::by_name(testfn);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  const Trajectory traj = simulate(run.config(), static_cast<std::uint64_t>(replicate));
  const SemimartingalePanel p = semimartingale_panel(traj, f);
  CsvTable t({"t", "A1", "Af", "AN", "M1", "Mf", "MN", "QV_1", "QV_f", "QV_N", "QV_1f", "QV_1N", "QV_fN",
              "identity_rel_error"});
  for (std::size_t s = 0; s < p.times.size(); ++s) {
    const double identity = run.config().n_compartments >= 3 ? pathwise_identity(traj, s).relative_error() : 0.0;
    t.add_row(std::vector<double>{p.times[s], p.a1[s], p.af[s], p.an[s], p.m1[s], p.mf[s], p.mn[s], p.qv_1[s],
                                  p.qv_f[s], p.qv_n[s], p.qv_1f[s], p.qv_1n[s], p.qv_fn[s], identity});
  }
  run.write("panel.csv", t.str());
  run.finish({{"testfn", testfn}, {"replicate", replicate}});
  return ok;
}

int cmd_limit(const Common& common, const std::string& solver) {
  Run run("limit", common, resolve_config(common));
  const LimitProblem problem = limit_problem(run.config());
  CsvTable boundary({"t", "a", "z"});
  MassSeries mass;
  std::vector<double> x;
  std::vector<std::vector<double>> rows;
  std::vector<double> times;
  if (solver == "upwind") {
    const DensityGrid g = solve_upwind(problem);
    x = g.x;
    for (std::size_t k = 0; k < g.times.size(); ++k) {
      boundary.add_row(std::vector<double>{g.times[k], g.a[k], g.z[k]});
      rows.push_back(g.u[k]);
    }
    times = g.times;
    mass = g.mass;
  } else {
    const MeasureTrajectory mt = solve_mild(problem);
    x = linspace(0.0, 1.0, static_cast<std::size_t>(problem.cells) + 1);
    for (std::size_t k = 0; k < mt.times.size(); ++k) {
      boundary.add_row(std::vector<double>{mt.times[k], mt.a[k], mt.z[k]});
      std::vector<double> u{mt.a[k]};
      for (std::size_t j = 1; j < x.size(); ++j) u.push_back(mt.density(k, x[j]));
      rows.push_back(std::move(u));
    }
    times = mt.times;
    mass = mt.mass;
  }
  CsvTable density(x_header(x));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::vector<double> row{times[k]};
    row.insert(row.end(), rows[k].begin(), rows[k].end());
    density.add_row(row);
  }
  CsvTable balance({"t", "residual"});
  const std::vector<double> res = limit_mass_balance(mass);
  for (std::size_t k = 0; k < res.size(); ++k) balance.add_row(std::vector<double>{mass.times[k + 1], res[k]});
  run.write("boundary.csv", boundary.str());
  run.write("density.csv", density.str());
  run.write("mass_balance.csv", balance.str());
  run.finish({{"solver", solver}});
  return ok;
}

std::vector<int> parse_n_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 3) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--n-list entries must be integers >= 3, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--n-list is empty");
  return out;
}

int cmd_compare(const Common& common, const std::string& n_list, int replicates, int batches, int cells) {
  Run run("compare", common, resolve_config(common));
  ConvergenceOptions opt;
  opt.n_list = parse_n_list(n_list);
  opt.replicates = replicates;
  opt.batches = batches;
  opt.limit_cells = cells;
  if (replicates < 1 || batches < 1 || cells < 1) throw ConfigError("replicates, batches and cells must be >= 1");
  const ConvergenceReport report = convergence_study(run.config(), opt);
  CsvTable t({"N", "replicates", "time", "distance", "distance_se", "stem_error", "stem_se", "mature_error",
              "mature_se"});
  for (const ConvergenceRow& r : report.rows)
    t.add_row(std::vector<double>{double(r.n), double(r.replicates), report.time, r.distance, r.distance_se,
                                  r.stem_error, r.stem_se, r.mature_error, r.mature_se});
  CsvTable summary({"slope", "monotone", "boundary_monotone", "halved"});
  summary.add_row(std::vector<std::string>{format_double(report.slope), report.monotone ? "true" : "false",
                                           report.boundary_monotone ? "true" : "false",
                                           report.halved ? "true" : "false"});
  std::vector<std::string> wh{"x"};
  for (const ConvergenceRow& r : report.rows) wh.push_back("g_N" + std::to_string(r.n));
  CsvTable witness(wh);
  const std::vector<double>& nodes = report.rows.front().witness.nodes;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    std::vector<double> row{nodes[j]};
    for (const ConvergenceRow& r : report.rows) row.push_back(r.witness.values[j]);
    witness.add_row(row);
  }
  run.write("convergence.csv", t.str());
  run.write("summary.csv", summary.str());
  run.write("witness.csv", witness.str());
  run.finish({{"n_list", opt.n_list}, {"replicates", replicates}, {"batches", batches}, {"limit_cells", cells}});
  return ok;
}

int cmd_flow_test(const Common& common, int cases) {
  if (cases < 1) throw ConfigError("--cases must be >= 1");
  Run run("flow-test", common, resolve_config(common));
  const ModelConfig& c = run.config();
  const DensityGrid g = solve_upwind(limit_problem(c));
  const ZTrajectory z(g.mass.times, g.step_z);
  std::vector<double> perturbed = g.step_z;
  for (std::size_t k = 0; k < perturbed.size(); ++k) perturbed[k] *= 1.0 + 0.1 * std::sin(0.37 * static_cast<double>(k));
  const FlowField flow(c.rates, z), other(c.rates, ZTrajectory(g.mass.times, perturbed));
  const double horizon = c.horizon;

  std::mt19937_64 rng(mix_seed(c.seed, 0xF10));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  CsvTable t({"check", "t1", "t2", "t3", "x", "error", "tolerance", "pass"});
  int failed = 0;
  auto record = [&](const std::string& name, double t1, double t2, double t3, double x, double err, double tol) {
    const bool pass = err <= tol;
    failed += pass ? 0 : 1;
    t.add_row(std::vector<std::string>{name, format_double(t1), format_double(t2), format_double(t3),
                                       format_double(x), format_double(err), format_double(tol),
                                       pass ? "true" : "false"});
  };
  for (int i = 0; i < cases; ++i) {
    const double t1 = horizon * unit(rng), t2 = horizon * unit(rng), t3 = horizon * unit(rng), x = unit(rng);
    record("composition", t1, t2, t3, x, std::abs(flow.flow(t1, t3, x) - flow.flow(t1, t2, flow.flow(t2, t3, x))),
           1e-8);
    const double t = std::max(t1, 1e-3), h0 = unit(rng);
    record("h_round_trip", t, 0.0, 0.0, h0, std::abs(flow.inverse_space(t, flow.flow(t, 0.0, h0)) - h0), 1e-8);
    const double kappa = t * unit(rng), xk = 0.5 * unit(rng);
    const double y = flow.flow(t, kappa, xk);
    if (y <= 1.0) record("kappa_round_trip", t, kappa, 0.0, xk, std::abs(flow.inverse_time_kappa(t, y, xk) - kappa), 1e-8);
    const StabilityGap sg = stability_gap(flow, other, t1, t2, x);
    record("stability", t1, t2, 0.0, x, sg.gap, sg.bound);
  }
  run.write("flow_checks.csv", t.str());
  run.finish({{"cases", cases}, {"failed", failed}});
  if (failed) {
    std::cerr << "flow-test: " << failed << " property checks failed\n";
    return numerical_error;
  }
  return ok;
}

// gnuplot "matrix nonuniform" layout: first row is the column count and x
// values, then one row per time.
std::string nonuniform_matrix(const std::vector<double>& x, const std::vector<double>& times,
                              const std::vector<std::vector<double>>& values) {
  std::string out = std::to_string(x.size());
  for (double v : x) out += " " + format_double(v);
  out += "\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    out += format_double(times[k]);
    for (double v : values[k]) out += " " + format_double(v);
    out += "\n";
  }
  return out;
}

int cmd_heatmap(const Common& common, const std::string& source, int replicates) {
  Run run("heatmap", common, resolve_config(common));
  const ModelConfig& c = run.config();
  std::vector<double> x, times;
  std::vector<std::vector<double>> values;
  if (source == "limit") {
    const DensityGrid g = solve_upwind(limit_problem(c));
    x = g.x;
    times = g.times;
    values = g.u;
  } else {
    if (replicates < 1) throw ConfigError("--replicates must be >= 1");
    const EnsembleStats stats = ensemble(c, replicates);
    for (int i = 1; i <= c.n_compartments; ++i) x.push_back(static_cast<double>(i) / c.n_compartments);
    times = stats.times;
    for (std::size_t s = 0; s < times.size(); ++s) {
      std::vector<double> row;
      for (int i = 1; i <= c.n_compartments; ++i) row.push_back(stats.mean_count(s, i - 1));
      values.push_back(std::move(row));
    }
  }
  run.write("heatmap.dat", nonuniform_matrix(x, times, values));
  run.write("heatmap.gp",
            "set xlabel 'maturity x'\nset ylabel 'time t'\nset view map\n"
            "plot 'heatmap.dat' matrix nonuniform with image notitle\n");
  run.finish({{"source", source}, {"replicates", replicates}});
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic compartment model, its deterministic limit, and convergence diagnostics"};
  app.set_version_flag("--version", std::string(HEMALIMIT_VERSION));
  app.require_subcommand(1);
  Common common;

  auto* sim = app.add_subcommand("simulate", "Exact stochastic simulation and ensemble means");
  add_common(sim, common);
  int replicates = 1;
  sim->add_option("--replicates", replicates, "Number of replicates")->capture_default_str();

  auto* diag = app.add_subcommand("diagnose", "Semimartingale decomposition panel for one trajectory");
  add_common(diag, common);
  std::string testfn = "x";
  int replicate = 0;
  diag->add_option("--testfn", testfn, "Test function: one, x, x2 or hat:<eps>")->capture_default_str();
  diag->add_option("--replicate", replicate, "Replicate index")->capture_default_str();

  auto* lim = app.add_subcommand("limit", "Deterministic limit solvers");
  add_common(lim, common);
  std::string solver = "upwind";
  lim->add_option("--solver", solver, "upwind or mild")
      ->check(CLI::IsMember({"upwind", "mild"}))
      ->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "Ensemble versus limit convergence study");
  add_common(cmp, common);
  std::string n_list = "50,100,200,400";
  int cmp_replicates = 200, batches = 10, cells = 1600;
  cmp->add_option("--n-list", n_list, "Comma-separated compartment counts")->capture_default_str();
  cmp->add_option("--replicates", cmp_replicates, "Replicates per N")->capture_default_str();
  cmp->add_option("--batches", batches, "Batches for standard errors")->capture_default_str();
  cmp->add_option("--limit-cells", cells, "Cells of the reference limit grid")->capture_default_str();

  auto* ft = app.add_subcommand("flow-test", "Property checks of the maturation flow");
  add_common(ft, common);
  int cases = 100;
  ft->add_option("--cases", cases, "Random cases per property")->capture_default_str();

  auto* hm = app.add_subcommand("heatmap", "gnuplot matrix of the ensemble mean or limit density");
  add_common(hm, common);
  std::string source = "ensemble";
  int hm_replicates = 50;
  hm->add_option("--source", source, "ensemble or limit")
      ->check(CLI::IsMember({"ensemble", "limit"}))
      ->capture_default_str();
  hm->add_option("--replicates", hm_replicates, "Replicates for the ensemble source")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code == 0 ? ok : config_error;
  }

  try {
    if (*sim) return cmd_simulate(common, replicates);
    if (*diag) return cmd_diagnose(common, testfn, replicate);
    if (*lim) return cmd_limit(common, solver);
    if (*cmp) return cmd_compare(common, n_list, cmp_replicates, batches, cells);
    if (*ft) return cmd_flow_test(common, cases);
    if (*hm) return cmd_heatmap(common, source, hm_replicates);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return config_error;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return numerical_error;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return io_error;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return io_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
  return failure;
}
