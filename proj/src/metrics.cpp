#include "hemalimit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hemalimit/limit.hpp"
#include "hemalimit/numerics.hpp"
#include "hemalimit/parallel.hpp"
#include "hemalimit/ssa.hpp"

namespace hemalimit {

namespace {

struct Knot {
  double g;
  double v;
};

std::size_t argmax(const std::vector<Knot>& f) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < f.size(); ++i)
    if (f[i].v > f[best].v) best = i;
  return best;
}

// Restriction of a piecewise-linear function to [lo, hi].
std::vector<Knot> clip(const std::vector<Knot>& f, double lo, double hi) {
  auto at = [&](double g) {
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
      if (g >= f[i].g && g <= f[i + 1].g) {
        const double span = f[i + 1].g - f[i].g;
        if (span <= 0.0) return f[i].v;
        const double w = (g - f[i].g) / span;
        return (1.0 - w) * f[i].v + w * f[i + 1].v;
      }
    }
    return g < f.front().g ? f.front().v : f.back().v;
  };
  std::vector<Knot> out;
  out.push_back({lo, at(lo)});
  for (const Knot& k : f)
    if (k.g > lo && k.g < hi && k.g > out.back().g) out.push_back(k);
  if (hi > out.back().g) out.push_back({hi, at(hi)});
  return out;
}

}  // namespace

double chain_optimum(const std::vector<double>& w, double sup_bound, double step_bound, std::vector<double>* g) {
  if (w.empty()) throw std::invalid_argument("chain_optimum: empty weights");
  const std::size_t n = w.size();
  const double s = std::max(0.0, sup_bound);
  const double l = std::max(0.0, step_bound);
  if (s == 0.0) {
    if (g) g->assign(n, 0.0);
    return 0.0;
  }
  std::vector<Knot> f{{-s, -w[0] * s}, {s, w[0] * s}};
  std::vector<double> peak(n, 0.0);
  for (std::size_t j = 1; j < n; ++j) {
    const std::size_t p = argmax(f);
    peak[j - 1] = f[p].g;
    // Window maximum of a concave function: flatten around the peak.
    std::vector<Knot> h;
    h.reserve(f.size() + 1);
    for (std::size_t i = 0; i < p; ++i) h.push_back({f[i].g - l, f[i].v});
    h.push_back({f[p].g - l, f[p].v});
    if (l > 0.0) h.push_back({f[p].g + l, f[p].v});
    for (std::size_t i = p + 1; i < f.size(); ++i) h.push_back({f[i].g + l, f[i].v});
    f = clip(h, -s, s);
    for (Knot& k : f) k.v += w[j] * k.g;
  }
  const std::size_t p = argmax(f);
  peak[n - 1] = f[p].g;
  if (g) {
    g->assign(n, 0.0);
    (*g)[n - 1] = peak[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) (*g)[j] = std::clamp(peak[j], (*g)[j + 1] - l, (*g)[j + 1] + l);
  }
  return f[p].v;
}

std::vector<double> grid_masses(const AtomicMeasure& mu, int nodes) {
  if (nodes < 2) throw std::invalid_argument("grid_masses: need at least 2 nodes");
  const double h = 1.0 / (nodes - 1);
  std::vector<double> out(static_cast<std::size_t>(nodes), 0.0);
  for (const Atom& at : mu.atoms) {
    if (!(at.x >= -1e-12 && at.x <= 1.0 + 1e-12))
      throw std::domain_error("bl_distance: atom at " + std::to_string(at.x) + " outside [0,1]");
    const double pos = std::clamp(at.x, 0.0, 1.0) / h;
    const auto i = std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(nodes - 2));
    const double theta = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    out[i] += at.w * (1.0 - theta);
    out[i + 1] += at.w * theta;
  }
  return out;
}

BLResult bl_distance_grid(const std::vector<double>& signed_masses) {
  if (signed_masses.size() < 2) throw std::invalid_argument("bl_distance: need at least 2 nodes");
  // The problem is symmetric under w -> -w; solve with the first nonzero entry
  // positive so both orientations give bit-identical results.
  std::vector<double> w = signed_masses;
  const auto lead = std::find_if(w.begin(), w.end(), [](double v) { return v != 0.0; });
  const bool flipped = lead != w.end() && *lead < 0.0;
  if (flipped)
    for (double& v : w) v = -v;
  const double dx = 1.0 / static_cast<double>(w.size() - 1);
  auto value = [&](double lip) { return chain_optimum(w, 1.0 - lip, lip * dx); };

  // The optimum is concave in the split between sup and Lipschitz budgets.
  double best_lip = 0.0, best = value(0.0);
  auto consider = [&](double lip, double v) {
    if (v > best) {
      best = v;
      best_lip = lip;
    }
    return v;
  };
  const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
  double lo = 0.0, hi = 1.0;
  double c = hi - ratio * (hi - lo), d = lo + ratio * (hi - lo);
  double fc = consider(c, value(c)), fd = consider(d, value(d));
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - ratio * (hi - lo);
      fc = consider(c, value(c));
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + ratio * (hi - lo);
      fd = consider(d, value(d));
    }
  }

  BLResult out;
  std::vector<double> g;
  chain_optimum(w, 1.0 - best_lip, best_lip * dx, &g);
  out.witness.nodes = linspace(0.0, 1.0, w.size());
  CompensatedSum pairing;
  double sup = 0.0, lip = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    pairing.add(g[j] * w[j]);
    sup = std::max(sup, std::abs(g[j]));
    if (j) lip = std::max(lip, std::abs(g[j] - g[j - 1]) / dx);
  }
  if (flipped) {
    for (double& v : g) v = -v;
    pairing = CompensatedSum();
    for (std::size_t j = 0; j < w.size(); ++j) pairing.add(-g[j] * w[j]);
  }
  out.witness.values = std::move(g);
  out.witness.sup_bound = sup;
  out.witness.lipschitz = lip;
  out.witness.value = pairing.value();
  out.distance = std::max(best, out.witness.value);
  return out;
}

BLResult bl_distance(const AtomicMeasure& nu1, const AtomicMeasure& nu2, int nodes) {
  std::vector<double> w = grid_masses(nu1, nodes);
  const std::vector<double> w2 = grid_masses(nu2, nodes);
  for (std::size_t j = 0; j < w.size(); ++j) w[j] -= w2[j];
  return bl_distance_grid(w);
}

ModelConfig study_config(const ModelConfig& base, int n) {
  ModelConfig c = base;
  if (c.initial.kind == InitialSpec::Kind::stem_raw) {
    c.initial.kind = InitialSpec::Kind::stem_scaled;
    c.initial.stem_scaled = static_cast<double>(base.initial.stem_count) / base.n_compartments;
  }
  return c.with_compartments(n);
}

ConvergenceReport convergence_study(const ModelConfig& base, const ConvergenceOptions& options) {
  if (options.n_list.empty()) throw std::invalid_argument("convergence_study: empty N list");
  if (options.replicates < 1) throw std::invalid_argument("convergence_study: replicates must be >= 1");
  ModelConfig ref = base;
  if (ref.sample_times.empty()) ref.sample_times = uniform_samples(ref.horizon, 101);
  const std::vector<double>& samples = ref.sample_times;
  const double t_end = samples.back();

  LimitProblem problem = limit_problem(study_config(ref, ref.n_compartments));
  problem.cells = options.limit_cells;
  problem.dt.reset();
  problem.horizon = t_end;
  const DensityGrid limit = solve_upwind(problem);
  const AtomicMeasure limit_measure = limit.measure(limit.snapshot_at(t_end));

  ConvergenceReport report;
  report.time = t_end;
  const std::size_t last = samples.size() - 1;
  const int batches = std::clamp(options.batches, 1, options.replicates);

  for (int n : options.n_list) {
    const ModelConfig cfg = study_config(ref, n);
    const std::size_t immature = static_cast<std::size_t>(std::max(0, n - 2));
    const std::size_t width = immature + 2 * samples.size();
    MomentTable all(width);
    std::vector<MomentTable> batch(static_cast<std::size_t>(batches), MomentTable(immature));
    ordered_map_reduce(
        static_cast<std::size_t>(options.replicates), options.workers,
        [&](std::size_t k) {
          const Trajectory traj = simulate(cfg, k);
          std::vector<double> row(width);
          for (std::size_t i = 0; i < immature; ++i) row[i] = static_cast<double>(traj.counts[last][i + 1]) / n;
          for (std::size_t s = 0; s < samples.size(); ++s) {
            row[immature + s] = static_cast<double>(traj.counts[s].front()) / n;
            row[immature + samples.size() + s] = static_cast<double>(traj.counts[s].back()) / n;
          }
          return row;
        },
        [&](std::size_t k, std::vector<double>&& row) {
          all.add(row);
          const std::size_t b = k * static_cast<std::size_t>(batches) / static_cast<std::size_t>(options.replicates);
          batch[b].add(std::span<const double>(row.data(), immature));
        });

    auto immature_measure = [&](const std::vector<double>& means) {
      AtomicMeasure mu;
      for (std::size_t i = 0; i < immature; ++i) mu.atoms.push_back({static_cast<double>(i + 2) / n, means[i]});
      return mu;
    };
    ConvergenceRow row;
    row.n = n;
    row.replicates = options.replicates;
    const BLResult bl = bl_distance(immature_measure(all.means()), limit_measure, ref.metric_nodes);
    row.distance = bl.distance;
    row.witness = bl.witness;
    if (batches > 1) {
      MomentTable spread(1);
      for (const MomentTable& b : batch) {
        const double d = bl_distance(immature_measure(b.means()), limit_measure, ref.metric_nodes).distance;
        spread.add(std::span<const double>(&d, 1));
      }
      row.distance_se = spread.standard_error(0);
    }
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const double stem = std::abs(all.mean(immature + s) - limit.a_at(samples[s]));
      if (stem > row.stem_error) {
        row.stem_error = stem;
        row.stem_se = all.standard_error(immature + s);
      }
      const std::size_t mc = immature + samples.size() + s;
      const double mature = std::abs(all.mean(mc) - limit.z_at(samples[s]));
      if (mature > row.mature_error) {
        row.mature_error = mature;
        row.mature_se = all.standard_error(mc);
      }
    }
    report.rows.push_back(std::move(row));
  }

  report.monotone = report.boundary_monotone = true;
  std::vector<double> log_n, log_d;
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const ConvergenceRow& r = report.rows[i];
    if (r.distance > 0.0) {
      log_n.push_back(std::log(static_cast<double>(r.n)));
      log_d.push_back(std::log(r.distance));
    }
    if (i) {
      const ConvergenceRow& p = report.rows[i - 1];
      report.monotone = report.monotone && r.distance < p.distance;
      report.boundary_monotone =
          report.boundary_monotone && r.stem_error < p.stem_error && r.mature_error < p.mature_error;
    }
  }
  if (log_n.size() >= 2) report.slope = ols_slope(log_n, log_d);
  report.halved = report.rows.back().distance <= 0.5 * report.rows.front().distance;
  return report;
}

}  // namespace hemalimit
