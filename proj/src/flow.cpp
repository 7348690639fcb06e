#include "hemalimit/flow.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace hemalimit {

ZTrajectory::ZTrajectory(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
  if (times_.empty() || times_.size() != values_.size())
    throw std::invalid_argument("ZTrajectory: need matching, non-empty times and values");
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (!std::isfinite(values_[k]) || values_[k] < -1e-12) throw std::invalid_argument("ZTrajectory: values must be >= 0");
    if (k && !(times_[k] > times_[k - 1])) throw std::invalid_argument("ZTrajectory: times must be strictly increasing");
  }
}

ZTrajectory ZTrajectory::constant(double value) { return ZTrajectory({0.0}, {value}); }

double ZTrajectory::operator()(double t) const {
  if (t <= times_.front()) return values_.front();
  if (t >= times_.back()) return values_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times_.begin()) - 1;
  const double w = (t - times_[k]) / (times_[k + 1] - times_[k]);
  return (1.0 - w) * values_[k] + w * values_[k + 1];
}

double ZTrajectory::l1_distance(const ZTrajectory& other, double a, double b) const {
  if (b < a) std::swap(a, b);
  std::vector<double> knots{a, b};
  for (double t : times_)
    if (t > a && t < b) knots.push_back(t);
  for (double t : other.times_)
    if (t > a && t < b) knots.push_back(t);
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double len = knots[k + 1] - knots[k];
    const double d0 = (*this)(knots[k]) - other(knots[k]);
    const double d1 = (*this)(knots[k + 1]) - other(knots[k + 1]);
    if (d0 * d1 >= 0.0) {
      total += 0.5 * (std::abs(d0) + std::abs(d1)) * len;
    } else {
      total += 0.5 * (d0 * d0 + d1 * d1) / (std::abs(d0) + std::abs(d1)) * len;
    }
  }
  return total;
}

namespace {

// Segment boundaries between from and to (either direction), including the
// z knots that lie strictly inside.
std::vector<double> segment_points(const ZTrajectory& z, double from, double to) {
  std::vector<double> pts{from};
  const double lo = std::min(from, to), hi = std::max(from, to);
  std::vector<double> inner;
  for (double k : z.times())
    if (k > lo && k < hi) inner.push_back(k);
  if (to < from) std::reverse(inner.begin(), inner.end());
  pts.insert(pts.end(), inner.begin(), inner.end());
  pts.push_back(to);
  return pts;
}

// Safeguarded Newton/secant on a monotone function with a sign change on [lo, hi].
double solve_bracketed(const std::function<double(double)>& f, double lo, double hi, double guess, double tol) {
  double flo = f(lo), fhi = f(hi);
  if (std::abs(flo) <= tol) return lo;
  if (std::abs(fhi) <= tol) return hi;
  if (flo * fhi > 0.0) throw std::out_of_range("root is not bracketed");
  double x = std::clamp(guess, lo, hi);
  double fx = f(x);
  double x_prev = flo * fx < 0.0 ? lo : hi;
  double f_prev = flo * fx < 0.0 ? flo : fhi;
  for (int it = 0; it < 200; ++it) {
    if (std::abs(fx) <= tol) return x;
    if (flo * fx < 0.0) {
      hi = x;
      fhi = fx;
    } else {
      lo = x;
      flo = fx;
    }
    double next = x - fx * (x - x_prev) / (fx - f_prev);
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) return x;
    x_prev = x;
    f_prev = fx;
    x = next;
    fx = f(x);
  }
  throw std::runtime_error("flow inverse did not converge");
}

}  // namespace

double CharacteristicPath::position(double s) const {
  if (s >= times.front()) return positions.front();
  if (s <= times.back()) return positions.back();
  // times are decreasing.
  const auto it = std::upper_bound(times.begin(), times.end(), s, std::greater<double>());
  const std::size_t k = static_cast<std::size_t>(it - times.begin()) - 1;
  const double t0 = times[k + 1], t1 = times[k];
  const double h = t1 - t0;
  const double w = (s - t0) / h;
  const double w2 = w * w, w3 = w2 * w;
  return (2 * w3 - 3 * w2 + 1) * positions[k + 1] + (w3 - 2 * w2 + w) * h * speeds[k + 1] +
         (-2 * w3 + 3 * w2) * positions[k] + (w3 - w2) * h * speeds[k];
}

double CharacteristicPath::time_at(double x) const {
  if (x > positions.front() || x < positions.back()) throw std::out_of_range("CharacteristicPath::time_at: x not on path");
  // positions decrease with k.
  const auto it = std::upper_bound(positions.begin(), positions.end(), x, std::greater<double>());
  std::size_t k = static_cast<std::size_t>(it - positions.begin());
  if (k == 0) return times.front();
  if (k >= positions.size()) return times.back();
  --k;
  double lo = times[k + 1], hi = times[k];
  const double p_lo = positions[k + 1], p_hi = positions[k];
  double s = p_hi > p_lo ? lo + (x - p_lo) / (p_hi - p_lo) * (hi - lo) : hi;
  for (int it2 = 0; it2 < 50; ++it2) {
    const double r = position(s) - x;
    if (r > 0.0) hi = s; else lo = s;
    const double h = times[k] - times[k + 1];
    const double w = (s - times[k + 1]) / h;
    // Derivative of the Hermite interpolant.
    const double dp = (6 * w * w - 6 * w) / h * positions[k + 1] + (3 * w * w - 4 * w + 1) * speeds[k + 1] +
                      (-6 * w * w + 6 * w) / h * positions[k] + (3 * w * w - 2 * w) * speeds[k];
    double next = dp > 0.0 ? s - r / dp : 0.5 * (lo + hi);
    if (!(next >= lo && next <= hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-15 * std::max(1.0, std::abs(s))) return next;
    s = next;
  }
  return s;
}

FlowField::FlowField(const RateModel& model, ZTrajectory z, FlowOptions options)
    : model_(extend_clamped(model)), z_(std::make_shared<const ZTrajectory>(std::move(z))), options_(options) {
  if (!(options_.max_step > 0.0)) throw std::invalid_argument("FlowField: max_step must be > 0");
}

double FlowField::integrate(double s, double t, double x, double step) const {
  if (s == t) return x;
  const ZTrajectory& z = *z_;
  const std::vector<double> pts = segment_points(z, t, s);
  double y = x;
  for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
    const double u0 = pts[seg], u1 = pts[seg + 1];
    const auto n = static_cast<long>(std::ceil(std::abs(u1 - u0) / step - 1e-9));
    const long steps = std::max<long>(1, n);
    const double h = (u1 - u0) / static_cast<double>(steps);
    for (long i = 0; i < steps; ++i) {
      const double u = u0 + h * static_cast<double>(i);
      const double zm = z(u + 0.5 * h);
      const double k1 = model_.m(y, z(u));
      const double k2 = model_.m(y + 0.5 * h * k1, zm);
      const double k3 = model_.m(y + 0.5 * h * k2, zm);
      const double k4 = model_.m(y + h * k3, z(u + h));
      y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return y;
}

double FlowField::flow(double s, double t, double x) const {
  if (s == t) return x;
  return integrate(s, t, x, std::min(options_.max_step, std::abs(s - t) / 10.0));
}

double FlowField::flow_error_estimate(double s, double t, double x) const {
  if (s == t) return 0.0;
  const double h = std::min(options_.max_step, std::abs(s - t) / 10.0);
  return std::abs(integrate(s, t, x, h) - integrate(s, t, x, 0.5 * h)) / 15.0;
}

double FlowField::inverse_space(double t, double y) const {
  const double tol = options_.inverse_tolerance;
  const double lo = flow(t, 0.0, 0.0), hi = flow(t, 0.0, 1.0);
  if (y < lo - tol || y > hi + tol) throw std::out_of_range("inverse_space: y outside [M(t,0,0), M(t,0,1)]");
  if (t == 0.0) return y;
  return solve_bracketed([&](double h) { return flow(t, 0.0, h) - y; }, 0.0, 1.0, flow(0.0, t, y), tol);
}

double FlowField::inverse_time_kappa(double t, double y, double x) const {
  const double tol = options_.inverse_tolerance;
  if (y == x) return t;
  const double top = flow(t, 0.0, x);
  if (y < x - tol || y > top + tol) throw std::out_of_range("inverse_time_kappa: y outside [x, M(t,0,x)]");
  // Initial guess from the backward characteristic through (t, y).
  double guess = 0.5 * t;
  const CharacteristicPath path = backward_path(t, y, 0.0);
  if (x >= path.positions.back() && x <= path.positions.front()) guess = path.time_at(x);
  return solve_bracketed([&](double k) { return flow(t, k, x) - y; }, 0.0, t, guess, tol);
}

CharacteristicPath FlowField::backward_path(double t, double y, double until) const {
  if (!(until < t)) throw std::invalid_argument("backward_path: until must be < t");
  const ZTrajectory& z = *z_;
  CharacteristicPath path;
  path.t = t;
  path.y = y;
  const double step = std::min(options_.max_step, (t - until) / 10.0);
  const std::vector<double> pts = segment_points(z, t, until);
  double pos = y;
  path.times.push_back(t);
  path.positions.push_back(pos);
  path.speeds.push_back(model_.m(pos, z(t)));
  for (std::size_t seg = 0; seg + 1 < pts.size(); ++seg) {
    const double u0 = pts[seg], u1 = pts[seg + 1];
    const auto n = static_cast<long>(std::ceil(std::abs(u1 - u0) / step - 1e-9));
    const long steps = std::max<long>(1, n);
    const double h = (u1 - u0) / static_cast<double>(steps);
    for (long i = 0; i < steps; ++i) {
      const double u = u0 + h * static_cast<double>(i);
      const double zm = z(u + 0.5 * h);
      const double k1 = model_.m(pos, z(u));
      const double k2 = model_.m(pos + 0.5 * h * k1, zm);
      const double k3 = model_.m(pos + 0.5 * h * k2, zm);
      const double k4 = model_.m(pos + h * k3, z(u + h));
      pos += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      const double un = (i + 1 == steps) ? u1 : u + h;
      path.times.push_back(un);
      path.positions.push_back(pos);
      path.speeds.push_back(model_.m(pos, z(un)));
    }
  }
  return path;
}

StabilityGap stability_gap(const FlowField& f1, const FlowField& f2, double s, double t, double x) {
  StabilityGap out;
  out.gap = std::abs(f1.flow(s, t, x) - f2.flow(s, t, x));
  const double integral = f1.z().l1_distance(f2.z(), std::min(s, t), std::max(s, t));
  const double lm = f1.model().bounds.lipschitz_m;
  out.bound = std::exp(lm * std::max(s, t)) * integral;
  out.gronwall_bound = lm * std::exp(lm * std::abs(t - s)) * integral;
  return out;
}

}  // namespace hemalimit
