#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hemalimit/config.hpp"
#include "hemalimit/empirical.hpp"
#include "hemalimit/flow.hpp"
#include "hemalimit/rates.hpp"

namespace hemalimit {

/// Deterministic limit problem: stem value a, immature density u on [0,1],
/// mature value z.
struct LimitProblem {
  RateModel rates;
  double horizon = 100.0;
  double a0 = 1.0;
  double z0 = 0.0;
  std::function<double(double)> u0;          // empty means u0 = 0
  std::optional<AtomicMeasure> initial_atoms;  // mild solver only; overrides u0
  int cells = 200;
  std::optional<double> dt;
  double cfl = 0.5;
  double output_interval = 1.0;
  bool hold_stem = false;

  double dx() const { return 1.0 / cells; }
  /// Requested step (cfl * dx / m_hat unless given), shrunk so it divides the horizon.
  double time_step() const;
};

/// Problem matching a model configuration; a0 and z0 default to X_1(0)/N and
/// X_N(0)/N, and immature initial counts become a piecewise-constant u0.
LimitProblem limit_problem(const ModelConfig& config);

/// Scalar per-step series used for the mass balance.
struct MassSeries {
  std::vector<double> times;
  std::vector<double> total;  // a + <mu, 1> + z
  std::vector<double> rhs;    // stem division source + <mu, r> - d z
};

/// Residual (total_{k+1} - total_k)/dt - (rhs_k + rhs_{k+1})/2 per step.
std::vector<double> limit_mass_balance(const MassSeries& series);

struct DensityGrid {
  double dx = 0.0;
  double dt = 0.0;
  std::vector<double> x;                // nodes j dx, j = 0..J
  std::vector<double> times;            // snapshot times
  std::vector<double> a;                // per snapshot
  std::vector<double> z;                // per snapshot
  std::vector<std::vector<double>> u;   // per snapshot, u[k][0] = a
  MassSeries mass;                      // per step
  std::vector<double> step_a;           // per step, aligned with mass.times
  std::vector<double> step_z;
  std::vector<double> ledger_residual;  // per step, relative to the total
  std::vector<double> boundary_gap;     // per step, integral boundary value minus last-cell value
  std::size_t clipped = 0;              // negative undershoots set to zero

  /// Immature measure at snapshot k as atoms (x_j, u_j dx), j = 1..J.
  AtomicMeasure measure(std::size_t k) const;
  std::size_t snapshot_at(double t) const;
  /// a and z interpolated linearly between steps.
  double a_at(double t) const;
  double z_at(double t) const;
};

/// First-order upwind scheme for the density system. The stem value is
/// advanced by its exact exponential update and the inflow flux is the
/// matching average stem efflux, so the discrete ledger
/// a + dx sum u + z closes exactly. Throws NumericalError on a CFL violation
/// or a negative density beyond 1e-8 of the peak.
DensityGrid solve_upwind(const LimitProblem& problem);

struct MildOptions {
  int snapshot_stride = 0;      // 0: derive from output_interval
  bool reverse_order = false;   // reverse the atom order in every reduction
  int max_picard = 50;
  double picard_tolerance = 1e-13;
};

struct MeasureTrajectory {
  double dt = 0.0;
  std::vector<double> times;            // snapshot times
  std::vector<AtomicMeasure> measures;  // per snapshot, atoms sorted by position
  std::vector<double> a;                // per snapshot
  std::vector<double> z;                // per snapshot
  std::vector<double> step_times;       // every step
  std::vector<double> step_a;
  std::vector<double> step_z;
  MassSeries mass;

  /// Density estimate at snapshot k: atom weight over the half-distance to
  /// its neighbours, interpolated linearly in x.
  double density(std::size_t k, double x) const;
  /// Same, interpolated linearly in time between snapshots.
  double density_at(double s, double x) const;
  ZTrajectory z_trajectory() const;
  double a_at(double s) const;
  std::size_t snapshot_at(double t) const;
};

/// Lagrangian solution of the mild equation for omega = mu + z delta_1.
/// Atoms move along characteristics and grow at rate r; the stem efflux
/// m(0,z) a enters as one atom per step; atoms that cross x = 1 feed z.
/// The end-of-step z is found by Picard iteration (NumericalError after
/// max_picard iterations).
MeasureTrajectory solve_mild(const LimitProblem& problem, MildOptions options = {});

/// u(t, y) at each y from the characteristic formula: pushed-forward initial
/// density, stem source term and division memory along the backward
/// characteristic through (t, y). History is read from `traj`. Throws
/// std::out_of_range when t exceeds the stored history.
std::vector<double> density_reconstruct(const MeasureTrajectory& traj, const LimitProblem& problem, double t,
                                        const std::vector<double>& y);

/// L1 distance on [0,1] between upwind nodal values u[k][j], j = 1..J, and
/// reference values at the same nodes (right-endpoint rule).
double l1_gap(const DensityGrid& grid, std::size_t k, const std::vector<double>& reference);

}  // namespace hemalimit
