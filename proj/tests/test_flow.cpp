#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "hemalimit/flow.hpp"

using namespace hemalimit;

namespace {

RateModel model_with_m(RateFunction m) {
  RateModel model;
  model.division = RateFunction::constant(0.015);
  model.differentiation = std::move(m);
  model.death_rate = 0.005;
  model.bounds = RateModel::derive_bounds(model.division, model.differentiation);
  return model;
}

ZTrajectory wavy_z() {
  std::vector<double> t, v;
  for (int k = 0; k <= 40; ++k) {
    t.push_back(2.5 * k);
    v.push_back(0.6 + 0.5 * std::sin(0.3 * k));
  }
  return ZTrajectory(t, v);
}

FlowField regulated_field() {
  return FlowField(model_with_m(RateFunction(RegulatedRate{0.02, 0.02, 1.0, 0.008})), wavy_z());
}

// Bisection oracle for M(t, kappa, x) = y, decreasing in kappa.
double kappa_by_bisection(const FlowField& f, double t, double y, double x) {
  double lo = 0.0, hi = t;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f.flow(t, mid, x) > y) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("constant speed flow") {
  const FlowField f(model_with_m(RateFunction::constant(0.02)), ZTrajectory::constant(0.3));
  CHECK(f.flow(5.0, 0.0, 0.1) == doctest::Approx(0.2).epsilon(1e-13));
  CHECK(f.flow(3.7, 3.7, 0.42) == 0.42);
  CHECK(f.flow(0.0, 10.0, 0.5) == doctest::Approx(0.3).epsilon(1e-13));
  CHECK(f.inverse_space(10.0, 0.5) == doctest::Approx(0.5 - 0.2).epsilon(1e-12));
  CHECK(f.inverse_time_kappa(30.0, 0.7, 0.3) == doctest::Approx(30.0 - 0.4 / 0.02).epsilon(1e-12));
  CHECK(f.inverse_time_kappa(30.0, 0.3, 0.3) == 30.0);
}

TEST_CASE("linear speed flow matches the closed form") {
  const FlowField f(model_with_m(RateFunction(AffineRate{0.02, 0.02, 0.0})), ZTrajectory::constant(5.0));
  CHECK(f.flow(10.0, 0.0, 0.0) == doctest::Approx(std::exp(0.2) - 1.0).epsilon(1e-12));
  CHECK(std::abs(f.flow(10.0, 0.0, 0.0) - 0.2214) < 1e-4);
  CHECK(f.flow_error_estimate(10.0, 0.0, 0.0) < 1e-12);
}

TEST_CASE("composition in the non-autonomous form") {
  const FlowField f = regulated_field();
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> time(0.0, 100.0), pos(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double t1 = time(gen), t2 = time(gen), t3 = time(gen), x = pos(gen);
    CHECK(std::abs(f.flow(t1, t3, x) - f.flow(t1, t2, f.flow(t2, t3, x))) <= 1e-8);
  }
}

TEST_CASE("space inverse round trips and is monotone") {
  const FlowField f = regulated_field();
  const double t = 40.0;
  const double y = f.flow(t, 0.0, 0.37);
  const double h = f.inverse_space(t, y);
  CHECK(std::abs(h - 0.37) <= 1e-8);
  CHECK(std::abs(f.flow(t, 0.0, h) - y) <= 1e-10);
  std::mt19937_64 gen(2);
  const double lo = f.flow(t, 0.0, 0.0), hi = f.flow(t, 0.0, 1.0);
  std::uniform_real_distribution<double> ys(lo, hi);
  for (int k = 0; k < 50; ++k) {
    double a = ys(gen), b = ys(gen);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-9) continue;
    CHECK(f.inverse_space(t, a) < f.inverse_space(t, b));
  }
  CHECK_THROWS_AS(f.inverse_space(t, lo - 0.1), std::out_of_range);
}

TEST_CASE("kappa round trips against a bisection oracle") {
  const FlowField f = regulated_field();
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const double t = 5.0 + 95.0 * unit(gen);
    const double x = 0.8 * unit(gen);
    const double y = x + unit(gen) * (f.flow(t, 0.0, x) - x);
    const double kappa = f.inverse_time_kappa(t, y, x);
    CHECK(kappa >= 0.0);
    CHECK(kappa <= t);
    CHECK(std::abs(f.flow(t, kappa, x) - y) <= 1e-10);
    CHECK(std::abs(kappa - kappa_by_bisection(f, t, y, x)) <= 1e-8);
  }
  CHECK_THROWS_AS(f.inverse_time_kappa(50.0, 0.1, 0.2), std::out_of_range);
}

TEST_CASE("flow decreases in the start time and respects the speed bounds") {
  const FlowField f = regulated_field();
  const RateBounds& b = f.model().bounds;
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> time(0.0, 100.0), pos(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    double t1 = time(gen), t2 = time(gen);
    if (t1 > t2) std::swap(t1, t2);
    const double s = time(gen), x = pos(gen);
    if (t2 - t1 > 1e-6) CHECK(f.flow(s, t1, x) > f.flow(s, t2, x));
    double lo = std::min(s, t1), hi = std::max(s, t1);
    const double moved = f.flow(hi, lo, x) - x;
    CHECK(moved >= b.m_min * (hi - lo) - 1e-12);
    CHECK(moved <= b.m_hat * (hi - lo) + 1e-12);
  }
}

TEST_CASE("transport identity in the start-time variable") {
  const FlowField f = regulated_field();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> time(1.0, 99.0), pos(0.05, 0.95);
  const double dt = 1e-3, dx = 1e-4;
  for (int k = 0; k < 100; ++k) {
    const double s = time(gen), t = time(gen), x = pos(gen);
    const double d_t = (f.flow(s, t + dt, x) - f.flow(s, t - dt, x)) / (2 * dt);
    const double d_x = (f.flow(s, t, x + dx) - f.flow(s, t, x - dx)) / (2 * dx);
    CHECK(std::abs(d_t + f.speed(x, t) * d_x) <= 1e-5);
  }
}

TEST_CASE("backward characteristic paths") {
  const FlowField f = regulated_field();
  const CharacteristicPath p = f.backward_path(60.0, 0.8);
  CHECK(p.position(60.0) == 0.8);
  CHECK(p.position(0.0) == doctest::Approx(f.flow(0.0, 60.0, 0.8)).epsilon(1e-12));
  CHECK(p.position(23.4) == doctest::Approx(f.flow(23.4, 60.0, 0.8)).epsilon(1e-9));
  const double x = p.position(17.0);
  CHECK(p.time_at(x) == doctest::Approx(17.0).epsilon(1e-9));
}

TEST_CASE("piecewise-linear L1 distance is exact") {
  const ZTrajectory a({0.0, 1.0, 3.0}, {0.0, 2.0, 0.0});
  const ZTrajectory b = ZTrajectory::constant(1.0);
  double riemann = 0.0;
  const int n = 300000;
  for (int k = 0; k < n; ++k) {
    const double u = 3.0 * (k + 0.5) / n;
    riemann += std::abs(a(u) - b(u)) * 3.0 / n;
  }
  CHECK(a.l1_distance(b, 0.0, 3.0) == doctest::Approx(riemann).epsilon(1e-8));
  CHECK(a.l1_distance(a, 0.0, 3.0) == 0.0);
}

TEST_CASE("stability gap examples") {
  const RateModel sat = model_with_m(RateFunction(AffineRate{0.02, 0.0, 0.001, 1.0}));
  const FlowField z0(sat, ZTrajectory::constant(0.0));
  const FlowField z1(sat, ZTrajectory::constant(1.0));
  const StabilityGap g = stability_gap(z0, z1, 0.0, 10.0, 0.5);
  CHECK(g.gap == doctest::Approx(0.001 * 10.0).epsilon(1e-10));
  CHECK(g.gap <= g.bound);
  CHECK(g.gap <= g.gronwall_bound + 1e-14);

  const StabilityGap same = stability_gap(z0, z0, 0.0, 10.0, 0.5);
  CHECK(same.gap == 0.0);
  CHECK(same.bound == 0.0);

  const RateModel flat = model_with_m(RateFunction::constant(0.02));
  const StabilityGap indep =
      stability_gap(FlowField(flat, ZTrajectory::constant(0.0)), FlowField(flat, wavy_z()), 0.0, 50.0, 0.1);
  CHECK(indep.gap == 0.0);
}
