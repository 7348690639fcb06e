#include "hemalimit/limit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hemalimit/numerics.hpp"

namespace hemalimit {

namespace {

// (e^x - 1) / x without cancellation.
double phi1(double x) { return std::abs(x) < 1e-8 ? 1.0 + 0.5 * x : std::expm1(x) / x; }

std::size_t nearest_index(const std::vector<double>& times, double t) {
  if (times.empty()) throw std::out_of_range("no snapshots");
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.end()) return times.size() - 1;
  const auto k = static_cast<std::size_t>(it - times.begin());
  if (k > 0 && std::abs(times[k - 1] - t) <= std::abs(*it - t)) return k - 1;
  return k;
}

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto k = static_cast<std::size_t>(it - xs.begin()) - 1;
  const double w = (x - xs[k]) / (xs[k + 1] - xs[k]);
  return (1.0 - w) * ys[k] + w * ys[k + 1];
}

}  // namespace

double LimitProblem::time_step() const {
  double step = 0.0;
  if (dt) {
    step = *dt;
  } else if (rates.bounds.m_hat > 0.0) {
    step = cfl * dx() / rates.bounds.m_hat;
  } else {
    step = std::min(output_interval, horizon) / 10.0;
  }
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("limit: time step must be positive");
  if (horizon <= 0.0) return step;
  const double steps = std::ceil(horizon / step - 1e-9);
  return horizon / steps;
}

LimitProblem limit_problem(const ModelConfig& config) {
  LimitProblem p;
  p.rates = config.rates;
  p.horizon = config.horizon;
  const int n = config.n_compartments;
  const std::vector<std::int64_t> counts =
      config.initial_counts.empty() ? config.initial.counts_for(n) : config.initial_counts;
  p.a0 = config.limit.a0.value_or(static_cast<double>(counts.front()) / n);
  p.z0 = config.limit.z0.value_or(static_cast<double>(counts.back()) / n);
  bool immature = false;
  for (int i = 1; i + 1 < n; ++i) immature = immature || counts[static_cast<std::size_t>(i)] != 0;
  if (immature) {
    p.u0 = [counts, n](double x) {
      if (x <= 1.0 / n || x > (n - 1.0) / n) return 0.0;
      const int i = std::clamp(static_cast<int>(std::ceil(x * n - 1e-12)), 2, n - 1);
      return static_cast<double>(counts[static_cast<std::size_t>(i - 1)]);
    };
  }
  p.cells = config.limit.cells;
  p.dt = config.limit.dt;
  p.cfl = config.limit.cfl;
  p.output_interval = config.limit.output_interval;
  p.hold_stem = config.limit.hold_stem;
  return p;
}

std::vector<double> limit_mass_balance(const MassSeries& series) {
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < series.times.size(); ++k) {
    const double h = series.times[k + 1] - series.times[k];
    out.push_back((series.total[k + 1] - series.total[k]) / h - 0.5 * (series.rhs[k] + series.rhs[k + 1]));
  }
  return out;
}

AtomicMeasure DensityGrid::measure(std::size_t k) const {
  AtomicMeasure mu;
  for (std::size_t j = 1; j < x.size(); ++j) mu.atoms.push_back({x[j], u[k][j] * dx});
  return mu;
}

std::size_t DensityGrid::snapshot_at(double t) const { return nearest_index(times, t); }

double DensityGrid::a_at(double t) const { return interpolate(mass.times, step_a, t); }

double DensityGrid::z_at(double t) const { return interpolate(mass.times, step_z, t); }

DensityGrid solve_upwind(const LimitProblem& problem) {
  if (problem.cells < 1) throw ConfigError("limit: cells must be >= 1");
  const RateModel& rates = problem.rates;
  const auto cells = static_cast<std::size_t>(problem.cells);
  const double dx = problem.dx();
  const double dt = problem.time_step();
  const double courant = rates.bounds.m_hat * dt / dx;
  if (courant > 1.0 + 1e-12)
    throw NumericalError("upwind: CFL violated, m_hat * dt / dx = " + std::to_string(courant));
  const double d = rates.death_rate;

  DensityGrid g;
  g.dx = dx;
  g.dt = dt;
  g.x.resize(cells + 1);
  for (std::size_t j = 0; j <= cells; ++j) g.x[j] = static_cast<double>(j) * dx;
  g.x[cells] = 1.0;

  std::vector<double> u(cells + 1, 0.0), next(cells + 1, 0.0);
  if (problem.u0)
    for (std::size_t j = 1; j <= cells; ++j) u[j] = problem.u0(g.x[j]);
  double a = problem.a0;
  double z = problem.z0;

  std::vector<double> r(cells + 1), m(cells + 1);
  auto refresh = [&](double zv) {
    for (std::size_t j = 0; j <= cells; ++j) {
      r[j] = rates.r(g.x[j], zv);
      m[j] = rates.m(g.x[j], zv);
    }
  };
  refresh(z);
  const bool regulated = rates.regulated();

  auto interior = [&](const std::vector<double>& v) {
    CompensatedSum s;
    for (std::size_t j = 1; j <= cells; ++j) s.add(v[j]);
    return s.value() * dx;
  };
  auto division = [&](const std::vector<double>& v) {
    CompensatedSum s;
    for (std::size_t j = 1; j <= cells; ++j) s.add(r[j] * v[j]);
    return s.value() * dx;
  };
  auto stem_source = [&](double av) { return (problem.hold_stem ? m[0] : r[0]) * av; };

  const auto steps = static_cast<std::size_t>(std::llround(problem.horizon / dt));
  const std::size_t stride =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(problem.output_interval / dt)));

  auto snapshot = [&](double t) {
    g.times.push_back(t);
    g.a.push_back(a);
    g.z.push_back(z);
    u[0] = a;
    g.u.push_back(u);
  };
  auto record = [&](double t) {
    g.step_a.push_back(a);
    g.step_z.push_back(z);
    g.mass.times.push_back(t);
    g.mass.total.push_back(a + interior(u) + z);
    g.mass.rhs.push_back(stem_source(a) + division(u) - d * z);
  };
  snapshot(0.0);
  record(0.0);

  for (std::size_t k = 0; k < steps; ++k) {
    const double t_next = static_cast<double>(k + 1) * dt;
    const double mass_before = interior(u);
    const double total_before = a + mass_before + z;

    double a_next = a, mean_a = a;
    if (!problem.hold_stem) {
      const double lambda = r[0] - m[0];
      mean_a = a * phi1(lambda * dt);
      a_next = a * std::exp(lambda * dt);
    }
    const double inflow = m[0] * mean_a;
    const double sources = stem_source(mean_a) + division(u) - d * z;

    double peak = 0.0;
    double upstream = inflow;
    for (std::size_t j = 1; j <= cells; ++j) {
      const double flux = m[j] * u[j];
      next[j] = u[j] + dt / dx * (upstream - flux) + dt * r[j] * u[j];
      upstream = flux;
      peak = std::max(peak, next[j]);
    }
    const double outflow = m[cells] * u[cells];
    const double z_next = z + dt * (outflow - d * z);
    for (std::size_t j = 1; j <= cells; ++j) {
      if (next[j] >= 0.0) continue;
      if (next[j] < -1e-8 * std::max(peak, 1e-300))
        throw NumericalError("upwind: negative density " + std::to_string(next[j]) + " at x = " +
                             std::to_string(g.x[j]) + ", t = " + std::to_string(t_next));
      next[j] = 0.0;
      ++g.clipped;
    }

    const double mass_after = interior(next);
    if (m[cells] > 0.0) {
      const double boundary = (inflow + division(u) - (mass_after - mass_before) / dt) / m[cells];
      g.boundary_gap.push_back(boundary - u[cells]);
    } else {
      g.boundary_gap.push_back(0.0);
    }

    std::swap(u, next);
    a = a_next;
    z = z_next;
    const double total_after = a + mass_after + z;
    g.ledger_residual.push_back(std::abs(total_after - total_before - dt * sources) /
                                std::max({std::abs(total_before), std::abs(total_after), 1e-300}));

    if (regulated) refresh(z);
    record(t_next);
    if ((k + 1) % stride == 0 || k + 1 == steps) snapshot(t_next);
  }
  return g;
}

double MeasureTrajectory::density(std::size_t k, double x) const {
  const auto& atoms = measures.at(k).atoms;
  const std::size_t n = atoms.size();
  if (n < 2) return 0.0;
  // Cell boundaries at midpoints; the outer cells mirror their inner half.
  auto left = [&](std::size_t i) {
    if (i == 0) return std::max(0.0, atoms[0].x - 0.5 * (atoms[1].x - atoms[0].x));
    return 0.5 * (atoms[i - 1].x + atoms[i].x);
  };
  auto right = [&](std::size_t i) {
    if (i + 1 == n) return std::min(1.0, atoms[i].x + 0.5 * (atoms[i].x - atoms[i - 1].x));
    return 0.5 * (atoms[i].x + atoms[i + 1].x);
  };
  auto value = [&](std::size_t i) {
    const double width = right(i) - left(i);
    return width > 0.0 ? atoms[i].w / width : 0.0;
  };
  if (x < left(0) || x > right(n - 1)) return 0.0;
  if (x <= atoms[0].x) return value(0);
  if (x >= atoms[n - 1].x) return value(n - 1);
  const auto it = std::upper_bound(atoms.begin(), atoms.end(), x, [](double v, const Atom& at) { return v < at.x; });
  const auto i = static_cast<std::size_t>(it - atoms.begin()) - 1;
  const double span = atoms[i + 1].x - atoms[i].x;
  if (span <= 0.0) return value(i);
  const double w = (x - atoms[i].x) / span;
  return (1.0 - w) * value(i) + w * value(i + 1);
}

double MeasureTrajectory::density_at(double s, double x) const {
  if (s <= times.front()) return density(0, x);
  if (s >= times.back()) return density(times.size() - 1, x);
  const auto it = std::upper_bound(times.begin(), times.end(), s);
  const auto k = static_cast<std::size_t>(it - times.begin()) - 1;
  const double w = (s - times[k]) / (times[k + 1] - times[k]);
  return (1.0 - w) * density(k, x) + w * density(k + 1, x);
}

ZTrajectory MeasureTrajectory::z_trajectory() const { return ZTrajectory(step_times, step_z); }

double MeasureTrajectory::a_at(double s) const { return interpolate(step_times, step_a, s); }

std::size_t MeasureTrajectory::snapshot_at(double t) const { return nearest_index(times, t); }

MeasureTrajectory solve_mild(const LimitProblem& problem, MildOptions options) {
  const RateModel rates = extend_clamped(problem.rates);
  const double dt = problem.time_step();
  const double d = rates.death_rate;
  if (rates.bounds.m_hat * dt >= 1.0) throw NumericalError("mild: step moves cells across the whole domain");

  // Atoms are kept in decreasing position: oldest (most mature) first.
  std::vector<Atom> atoms;
  if (problem.initial_atoms) {
    atoms = problem.initial_atoms->atoms;
  } else if (problem.u0) {
    const double dx = problem.dx();
    for (int j = 0; j < problem.cells; ++j) {
      const double mid = (j + 0.5) * dx;
      atoms.push_back({mid, problem.u0(mid) * dx});
    }
  }
  for (const Atom& at : atoms)
    if (!(at.x >= 0.0 && at.x < 1.0) || at.w < 0.0)
      throw ConfigError("mild: initial atoms need positions in [0,1) and weights >= 0");
  std::sort(atoms.begin(), atoms.end(), [](const Atom& l, const Atom& r) { return l.x > r.x; });

  double a = problem.a0;
  double z = problem.z0;
  const bool regulated = rates.regulated();

  MeasureTrajectory out;
  out.dt = dt;
  const auto steps = static_cast<std::size_t>(std::llround(problem.horizon / dt));
  const std::size_t stride =
      options.snapshot_stride > 0
          ? static_cast<std::size_t>(options.snapshot_stride)
          : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(problem.output_interval / dt)));

  auto ordered = [&](auto&& fn) {
    if (options.reverse_order) {
      for (std::size_t i = atoms.size(); i-- > 0;) fn(i);
    } else {
      for (std::size_t i = 0; i < atoms.size(); ++i) fn(i);
    }
  };
  auto snapshot = [&](double t) {
    out.times.push_back(t);
    out.a.push_back(a);
    out.z.push_back(z);
    AtomicMeasure mu;
    mu.atoms.assign(atoms.rbegin(), atoms.rend());
    out.measures.push_back(std::move(mu));
  };
  auto record = [&](double t) {
    out.step_times.push_back(t);
    out.step_a.push_back(a);
    out.step_z.push_back(z);
    double mass = 0.0, div = 0.0;
    ordered([&](std::size_t i) {
      mass += atoms[i].w;
      div += atoms[i].w * rates.r(atoms[i].x, z);
    });
    const double stem = (problem.hold_stem ? rates.m(0.0, z) : rates.r(0.0, z)) * a;
    out.mass.times.push_back(t);
    out.mass.total.push_back(a + mass + z);
    out.mass.rhs.push_back(stem + div - d * z);
  };
  snapshot(0.0);
  record(0.0);

  std::vector<double> moved, grown;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t_next = static_cast<double>(k + 1) * dt;
    const double z0 = z;
    double z1 = z;
    std::size_t crossed = 0;
    double a1 = a;
    Atom source{0.0, 0.0};

    for (int it = 0;; ++it) {
      if (it >= options.max_picard)
        throw NumericalError("mild: Picard iteration for z did not converge at t = " + std::to_string(t_next));
      const double zm = 0.5 * (z0 + z1);
      auto advance = [&](double x) {
        const double k1 = rates.m(x, z0);
        const double k2 = rates.m(x + 0.5 * dt * k1, zm);
        const double k3 = rates.m(x + 0.5 * dt * k2, zm);
        const double k4 = rates.m(x + dt * k3, z1);
        return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      };

      moved.assign(atoms.size(), 0.0);
      grown.assign(atoms.size(), 0.0);
      crossed = 0;
      double into_mature = 0.0;
      ordered([&](std::size_t i) {
        const double x0 = atoms[i].x;
        const double x1 = advance(x0);
        moved[i] = x1;
        if (x1 < 1.0) {
          grown[i] = atoms[i].w * std::exp(0.5 * dt * (rates.r(x0, z0) + rates.r(x1, z1)));
          return;
        }
        ++crossed;
        const double theta = x1 > x0 ? std::clamp((1.0 - x0) / (x1 - x0), 0.0, 1.0) : 1.0;
        const double z_cross = z0 + theta * (z1 - z0);
        const double e = atoms[i].w * std::exp(0.5 * theta * dt * (rates.r(x0, z0) + rates.r(1.0, z_cross)));
        into_mature += e * std::exp(-d * (1.0 - theta) * dt);
      });

      if (!problem.hold_stem)
        a1 = a * std::exp(0.5 * dt * (rates.r(0.0, z0) - rates.m(0.0, z0) + rates.r(0.0, z1) - rates.m(0.0, z1)));
      const double entry = advance(0.0);
      const double rho0 = rates.m(0.0, z0) * a * std::exp(0.5 * dt * (rates.r(0.0, z0) + rates.r(entry, z1)));
      const double rho1 = rates.m(0.0, z1) * a1;
      source.w = 0.5 * dt * (rho0 + rho1);
      source.x = rho0 + rho1 > 0.0 ? entry * (2.0 * rho0 + rho1) / (3.0 * (rho0 + rho1)) : 0.5 * entry;

      const double z_new = z0 * std::exp(-d * dt) + into_mature;
      const bool done =
          !regulated || std::abs(z_new - z1) <= options.picard_tolerance * std::max(1.0, std::abs(z_new));
      z1 = z_new;
      if (done) break;
    }

    // Flow preserves order, so the crossed atoms are a prefix.
    std::vector<Atom> kept;
    kept.reserve(atoms.size() - crossed + 1);
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (moved[i] < 1.0) kept.push_back({moved[i], grown[i]});
    kept.push_back(source);
    atoms = std::move(kept);
    a = a1;
    z = z1;
    record(t_next);
    if ((k + 1) % stride == 0 || k + 1 == steps) snapshot(t_next);
  }
  return out;
}

std::vector<double> density_reconstruct(const MeasureTrajectory& traj, const LimitProblem& problem, double t,
                                        const std::vector<double>& y) {
  if (traj.step_times.empty() || t > traj.step_times.back() + 1e-9 || t <= 0.0)
    throw std::out_of_range("density_reconstruct: t outside the stored history");
  const FlowField flow(problem.rates, traj.z_trajectory());
  const RateModel& rates = flow.model();
  const ZTrajectory& z = flow.z();

  std::vector<double> out;
  out.reserve(y.size());
  for (double yv : y) {
    if (yv <= 0.0) {
      out.push_back(traj.a_at(t));
      continue;
    }
    const double delta = std::min(1e-5, 0.5 * yv);
    const CharacteristicPath path = flow.backward_path(t, yv, 0.0);
    const CharacteristicPath upper = flow.backward_path(t, yv + delta, 0.0);
    const CharacteristicPath lower = flow.backward_path(t, yv - delta, 0.0);
    // d/dy of the backward characteristic position at time s.
    auto jac = [&](double s) { return (upper.position(s) - lower.position(s)) / (2.0 * delta); };

    double value = 0.0;
    double start = 0.0;
    const double h = path.positions.back();
    if (h > 0.0) {
      if (h < 1.0) {
        const double u0 = problem.u0 ? problem.u0(h) : traj.density(0, h);
        value += u0 * jac(0.0);
      }
    } else {
      start = path.time_at(0.0);
      value += traj.a_at(start) * jac(start);
    }

    // Division memory along the characteristic, Simpson on each path segment.
    auto integrand = [&](double s) {
      const double x = path.position(s);
      return rates.r(x, z(s)) * jac(s) * traj.density_at(s, x);
    };
    std::vector<double> knots{start};
    for (auto it = path.times.rbegin(); it != path.times.rend(); ++it)
      if (*it > start) knots.push_back(*it);
    double memory = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
      const double s0 = knots[i], s1 = knots[i + 1];
      memory += (s1 - s0) / 6.0 * (integrand(s0) + 4.0 * integrand(0.5 * (s0 + s1)) + integrand(s1));
    }
    out.push_back(value + memory);
  }
  return out;
}

double l1_gap(const DensityGrid& grid, std::size_t k, const std::vector<double>& reference) {
  const auto& u = grid.u.at(k);
  if (reference.size() + 1 != u.size()) throw std::invalid_argument("l1_gap: reference size must equal the cell count");
  CompensatedSum s;
  for (std::size_t j = 1; j < u.size(); ++j) s.add(std::abs(u[j] - reference[j - 1]));
  return s.value() * grid.dx;
}

}  // namespace hemalimit
