#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hemalimit/ssa.hpp"

namespace hemalimit {

struct Atom {
  double x;
  double w;
};

/// Finite non-negative measure on [0,1] made of weighted atoms.
struct AtomicMeasure {
  std::vector<Atom> atoms;

  double mass() const;
  std::size_t size() const { return atoms.size(); }
};

/// Test function with declared sup-norm and Lipschitz bounds.
struct TestFunction {
  std::string name;
  std::function<double(double)> value;
  std::optional<std::function<double(double)>> derivative;
  double sup_bound = 0.0;
  double lipschitz_bound = 0.0;

  double operator()(double x) const { return value(x); }

  static TestFunction constant(double c);
  static TestFunction identity();
  static TestFunction square();
  /// 1 at 0, decreasing linearly to 0 at eps.
  static TestFunction hat_at_zero(double eps);
  /// Built-in by name: one, x, x2, hat:<eps>.
  static TestFunction by_name(const std::string& name);
};

/// Atoms (i/N, X_i/N), i = 2..N-1; zero weights are kept.
AtomicMeasure empirical_measure(const CompartmentState& state);

/// Average empirical measure of an ensemble at sample s.
AtomicMeasure mean_empirical_measure(const EnsembleStats& stats, std::size_t s);

double pair(const AtomicMeasure& mu, const std::function<double(double)>& f);
double pair(const AtomicMeasure& mu, const TestFunction& f);

/// Delta_h f(x) = (f(x+h) - f(x)) / h
std::function<double(double)> discrete_derivative(std::function<double(double)> f, double h);

/// Time integrals along a trajectory at one sample, in the scaled variables.
struct PathIntegrals {
  double stem_efflux = 0.0;    // int m(1/N, z) X_1^N ds
  double stem_division = 0.0;  // int r(1/N, z) X_1^N ds
  double immature_r = 0.0;     // int <mu_s, r> ds
  double mature = 0.0;         // int X_N^N ds
  double last_efflux = 0.0;    // int m((N-1)/N, z) X_{N-1} ds (raw X_{N-1})
};

PathIntegrals path_integrals(const Trajectory& traj, std::size_t s);

/// Drift terms, martingale residuals and predicted brackets per sample time.
struct SemimartingalePanel {
  std::vector<double> times;
  std::vector<double> a1, af, an;
  std::vector<double> m1, mf, mn;
  std::vector<double> qv_1, qv_f, qv_n;
  std::vector<double> qv_1f, qv_1n, qv_fn;
};

/// Fills times and the A-terms. Throws std::invalid_argument when f(1) is not finite.
SemimartingalePanel drift_terms(const Trajectory& traj, const TestFunction& f);

/// Fills the A-terms and the residuals M = observable - initial value - A.
SemimartingalePanel martingale_residual(const Trajectory& traj, const TestFunction& f);

/// Fills the predicted brackets from the exact integrals.
SemimartingalePanel qv_predicted(const Trajectory& traj, const TestFunction& f);

/// All of the above.
SemimartingalePanel semimartingale_panel(const Trajectory& traj, const TestFunction& f);

/// Per-compartment martingales M_i^N(t), i = 2..N-1, rebuilt from event counts
/// minus their compensators. Element [i-2].
std::vector<double> compartment_martingales(const Trajectory& traj, std::size_t s);

/// Both sides of the X_{N-1} elimination identity at sample s.
struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double scale = 0.0;  // magnitude used for the relative error
  double relative_error() const;
};

IdentityCheck pathwise_identity(const Trajectory& traj, std::size_t s);

/// Y^N = X_1^N + <mu^N, 1> + X_N^N
double scaled_total(const CompartmentState& state);

/// E[Y(0)] * exp(r_hat T)
double sup_total_bound(double mean_y0, double r_hat, double horizon);

/// Bound on int_0^T E[X_i^N] ds for 2 <= i <= N-1:
/// (1/m_min) [E Y(0) + (m_hat/r_hat) E X_1^N(0)] exp(r_hat T), with
/// m_hat T E X_1^N(0) in place of the ratio term when r_hat = 0.
double compartment_integral_bound(double mean_y0, double mean_stem0, const RateBounds& bounds, double horizon);

}  // namespace hemalimit
