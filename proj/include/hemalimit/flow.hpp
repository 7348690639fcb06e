#pragma once

#include <memory>
#include <vector>

#include "hemalimit/rates.hpp"

namespace hemalimit {

/// Sampled mature-population trajectory, interpolated linearly and held
/// constant outside its time span.
class ZTrajectory {
 public:
  ZTrajectory() = default;
  ZTrajectory(std::vector<double> times, std::vector<double> values);
  static ZTrajectory constant(double value);

  double operator()(double t) const;
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& values() const { return values_; }

  /// Exact int_a^b |z(u) - other(u)| du for the two piecewise-linear interpolants.
  double l1_distance(const ZTrajectory& other, double a, double b) const;

 private:
  std::vector<double> times_;
  std::vector<double> values_;
};

struct FlowOptions {
  double max_step = 1e-2;
  double inverse_tolerance = 1e-10;
};

/// Characteristic through (t, y) sampled backwards in time: positions[k] is
/// M^z(times[k], t, y), with times decreasing from t to `until`.
struct CharacteristicPath {
  double t = 0.0;
  double y = 0.0;
  std::vector<double> times;
  std::vector<double> positions;
  std::vector<double> speeds;  // m(position, z(time))

  /// Position at time s (cubic Hermite between nodes).
  double position(double s) const;
  /// Time at which the path passes through x (the path is increasing in time).
  double time_at(double x) const;
  double earliest_time() const { return times.back(); }
};

/// Maturation flow M^z(s, t, x): the maturity at time s of a cell whose
/// maturity at time t is x. The rate model is extended by clamping so the
/// flow is defined for every real x.
class FlowField {
 public:
  FlowField(const RateModel& model, ZTrajectory z, FlowOptions options = {});

  const RateModel& model() const { return model_; }
  const ZTrajectory& z() const { return *z_; }
  double speed(double x, double s) const { return model_.m(x, (*z_)(s)); }

  /// Fixed-step RK4 with step min(max_step, |s-t|/10), restarted at every z knot.
  double flow(double s, double t, double x) const;
  /// Same integration with half the step; the difference is a Richardson error estimate.
  double flow_error_estimate(double s, double t, double x) const;

  /// h(t, y) with M^z(t, 0, h) = y. Throws std::out_of_range unless
  /// M^z(t,0,0) <= y <= M^z(t,0,1).
  double inverse_space(double t, double y) const;

  /// kappa(t, y, x) in [0, t] with M^z(t, kappa, x) = y. Throws
  /// std::out_of_range unless x <= y <= M^z(t, 0, x).
  double inverse_time_kappa(double t, double y, double x) const;

  /// Backward characteristic through (t, y) down to time `until` (< t).
  CharacteristicPath backward_path(double t, double y, double until = 0.0) const;

 private:
  double integrate(double s, double t, double x, double step_cap) const;

  RateModel model_;
  std::shared_ptr<const ZTrajectory> z_;
  FlowOptions options_;
};

struct StabilityGap {
  double gap = 0.0;
  /// exp(L_m T) int |z - z_hat|, T = max(s, t).
  double bound = 0.0;
  /// L_m exp(L_m |t - s|) int |z - z_hat|, the Gronwall estimate with its L_m factor.
  double gronwall_bound = 0.0;
};

StabilityGap stability_gap(const FlowField& f1, const FlowField& f2, double s, double t, double x);

}  // namespace hemalimit
