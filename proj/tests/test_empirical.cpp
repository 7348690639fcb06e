#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "hemalimit/empirical.hpp"

using namespace hemalimit;

namespace {

RateModel constant_model(double r, double m, double d) {
  RateModel model;
  model.division = RateFunction::constant(r);
  model.differentiation = RateFunction::constant(m);
  model.death_rate = d;
  model.bounds = RateModel::derive_bounds(model.division, model.differentiation);
  return model;
}

ModelConfig regulated_config(int n) {
  ModelConfig c = reference_config(n, 80.0, 9);
  c.rates.division = RateFunction(RegulatedRate{0.03, 0.0, 0.5, 0.005});
  c.rates.differentiation = RateFunction(RegulatedRate{0.02, 0.02, 1.0, 0.01});
  c.rates.bounds = RateModel::derive_bounds(c.rates.division, c.rates.differentiation);
  c.initial_counts.assign(static_cast<std::size_t>(n), 2);
  c.initial_counts[0] = 40;
  c.initial.kind = InitialSpec::Kind::explicit_counts;
  c.initial.counts = c.initial_counts;
  return c;
}

}  // namespace

TEST_CASE("empirical measure of a small state") {
  const AtomicMeasure mu = empirical_measure({0.0, {7, 3, 5, 2}});
  REQUIRE(mu.size() == 2);
  CHECK(mu.atoms[0].x == 0.5);
  CHECK(mu.atoms[0].w == 0.75);
  CHECK(mu.atoms[1].x == 0.75);
  CHECK(mu.atoms[1].w == 1.25);
  CHECK(pair(mu, TestFunction::constant(1.0)) == doctest::Approx(2.0));

  const AtomicMeasure zero = empirical_measure({0.0, {9, 0, 0, 0, 0, 4}});
  CHECK(zero.size() == 4);
  CHECK(zero.mass() == 0.0);
}

TEST_CASE("pairings") {
  CHECK(pair(AtomicMeasure{{{0.5, 2.0}}}, TestFunction::identity()) == 1.0);
  CHECK(pair(AtomicMeasure{}, TestFunction::identity()) == 0.0);
  AtomicMeasure uniform;
  for (int i = 1; i <= 100; ++i) uniform.atoms.push_back({i / 100.0, 1.0 / 100.0});
  CHECK(std::abs(pair(uniform, TestFunction::square()) - 1.0 / 3.0) <= 1e-2);
  // Riemann-sum oracle: the right-endpoint sum is 1/3 + 1/(2N) + 1/(6N^2).
  CHECK(pair(uniform, TestFunction::square()) == doctest::Approx(1.0 / 3.0 + 0.005 + 1.0 / 60000.0).epsilon(1e-13));
}

TEST_CASE("discrete derivative") {
  const auto d_lin = discrete_derivative([](double x) { return x; }, 0.37);
  CHECK(d_lin(0.2) == doctest::Approx(1.0));
  const auto d_const = discrete_derivative([](double) { return 4.0; }, 0.1);
  CHECK(d_const(0.9) == 0.0);
  const auto d_sq = discrete_derivative([](double x) { return x * x; }, 0.01);
  CHECK(d_sq(0.3) == doctest::Approx(0.61).epsilon(1e-12));
  CHECK_THROWS(discrete_derivative([](double x) { return x; }, 0.0));
}

TEST_CASE("constant test function has an identically zero martingale") {
  const Trajectory t = simulate(reference_config(30, 80.0, 17));
  const SemimartingalePanel p = semimartingale_panel(t, TestFunction::constant(1.0));
  for (std::size_t s = 0; s < p.times.size(); ++s) {
    CHECK(std::abs(p.mf[s]) <= 1e-12);
    CHECK(p.qv_f[s] == 0.0);
  }
}

TEST_CASE("all rates zero gives zero drift and zero residuals") {
  ModelConfig c = reference_config(12, 10.0, 5);
  c.rates = constant_model(0.0, 0.0, 0.0);
  c.initial_counts = {5, 1, 2, 0, 0, 3, 0, 0, 0, 0, 1, 7};
  const Trajectory t = simulate(c);
  const SemimartingalePanel p = semimartingale_panel(t, TestFunction::square());
  for (std::size_t s = 0; s < p.times.size(); ++s) {
    CHECK(p.a1[s] == 0.0);
    CHECK(p.af[s] == 0.0);
    CHECK(p.an[s] == 0.0);
    CHECK(p.m1[s] == 0.0);
    CHECK(p.mf[s] == 0.0);
    CHECK(p.mn[s] == 0.0);
    CHECK(p.qv_1[s] == 0.0);
    CHECK(p.qv_f[s] == 0.0);
    CHECK(p.qv_n[s] == 0.0);
  }
}

TEST_CASE("residuals start at zero and brackets are consistent") {
  const Trajectory t = simulate(regulated_config(25));
  const SemimartingalePanel p = semimartingale_panel(t, TestFunction::identity());
  CHECK(p.m1[0] == 0.0);
  CHECK(p.mf[0] == 0.0);
  CHECK(p.mn[0] == 0.0);
  for (std::size_t s = 0; s < p.times.size(); ++s) {
    CHECK(p.qv_1[s] >= 0.0);
    CHECK(p.qv_f[s] >= 0.0);
    CHECK(p.qv_n[s] >= 0.0);
    const double n = t.n;
    CHECK(p.qv_1n[s] == doctest::Approx(-t.logs[s].differentiation_integral[0] / n / n).epsilon(1e-14));
  }
}

TEST_CASE("test function without a finite value at 1 is rejected") {
  const Trajectory t = simulate(reference_config(10, 5.0, 3));
  TestFunction f{"pole", [](double x) { return 1.0 / (1.0 - x); }, std::nullopt, 0.0, 0.0};
  CHECK_THROWS_AS(drift_terms(t, f), std::invalid_argument);
}

TEST_CASE("pathwise identity holds to rounding") {
  for (int n : {10, 40}) {
    const ModelConfig c = regulated_config(n);
    for (std::uint64_t k = 0; k < 5; ++k) {
      const Trajectory t = simulate(c, k);
      for (std::size_t s = 0; s < t.times.size(); ++s) CHECK(pathwise_identity(t, s).relative_error() <= 1e-9);
    }
  }
}

TEST_CASE("martingale residuals have zero mean and the predicted variance") {
  const ModelConfig c = reference_config(50, 100.0, 5);
  const TestFunction f = TestFunction::identity();
  // Columns: M1, Mf, MN at T, predicted <M1>, <Mf>, <MN>, <Mf,MN>, Mf*MN.
  const MomentTable table = ensemble_observe(c, 500, [&](const Trajectory& t) {
    const SemimartingalePanel p = semimartingale_panel(t, f);
    const std::size_t s = p.times.size() - 1;
    return std::vector<double>{p.m1[s], p.mf[s], p.mn[s], p.qv_1[s], p.qv_f[s], p.qv_n[s], p.qv_fn[s],
                               p.mf[s] * p.mn[s]};
  });
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(table.mean(i)) <= 3.0 * table.standard_error(i));
  CHECK(table.variance(0) == doctest::Approx(table.mean(3)).epsilon(0.2));
  CHECK(table.variance(1) == doctest::Approx(table.mean(4)).epsilon(0.2));
  CHECK(table.variance(2) == doctest::Approx(table.mean(5)).epsilon(0.2));
  // The cross bracket is negative for f(x) = x; the sample covariance agrees in sign and size.
  CHECK(table.mean(6) < 0.0);
  CHECK(std::abs(table.mean(7) - table.mean(6)) <= 3.0 * table.standard_error(7) + 0.1 * std::abs(table.mean(6)));
}

TEST_CASE("moment bound helpers") {
  CHECK(sup_total_bound(2.0, 0.0, 10.0) == 2.0);
  CHECK(sup_total_bound(1.0, 0.1, 10.0) == doctest::Approx(std::exp(1.0)));
  RateBounds b{0.015, 0.02, 0.02, 0.0, 0.0};
  CHECK(compartment_integral_bound(1.0, 1.0, b, 100.0) ==
        doctest::Approx((1.0 + 0.02 / 0.015) * std::exp(1.5) / 0.02));
  b.r_hat = 0.0;
  CHECK(compartment_integral_bound(1.0, 1.0, b, 100.0) == doctest::Approx((1.0 + 2.0) / 0.02));
}
