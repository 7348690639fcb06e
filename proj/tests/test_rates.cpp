#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "hemalimit/rates.hpp"

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

RateModel regulated_model() {
  RateModel model;
  model.division = RateFunction(RegulatedRate{0.02, 0.0, 0.5, 0.005});
  model.differentiation = RateFunction(RegulatedRate{0.03, 0.01, 1.0, 0.01});
  model.death_rate = 0.005;
  model.bounds = RateModel::derive_bounds(model.division, model.differentiation);
  return model;
}

}  // namespace

TEST_CASE("reference constant model has no violations") {
  RateModel model = constant_model(0.015, 0.02, 0.005);
  CHECK(model.bounds.r_hat == 0.015);
  CHECK(model.bounds.m_min == 0.02);
  CHECK(model.bounds.m_hat == 0.02);
  CHECK(validate(model, 1000).ok());
}

TEST_CASE("zero division rate with zero bound is valid") {
  RateModel model = constant_model(0.0, 0.02, 0.0);
  model.bounds.r_hat = 0.0;
  CHECK(validate(model, 500).ok());
}

TEST_CASE("differentiation below declared minimum is flagged at every sample") {
  RateModel model = constant_model(0.015, 0.01, 0.005);
  model.bounds.m_min = 0.02;
  model.bounds.m_hat = 0.02;
  const int samples = 250;
  const ValidationReport report = validate(model, samples);
  int below = 0;
  for (const auto& v : report.violations) {
    if (v.kind == Violation::Kind::differentiation_below_min) {
      ++below;
      CHECK(v.value == 0.01);
      CHECK(v.bound == 0.02);
      CHECK(v.x >= 0.0);
      CHECK(v.x <= 1.0);
    }
  }
  CHECK(below == samples);
}

TEST_CASE("understated Lipschitz constant is caught") {
  RateModel model = regulated_model();
  model.bounds.lipschitz_m = 0.1 * model.bounds.lipschitz_m;
  bool found = false;
  for (const auto& v : validate(model, 2000).violations)
    found = found || v.kind == Violation::Kind::differentiation_lipschitz;
  CHECK(found);
}

TEST_CASE("derived bounds of regulated families pass validation") {
  CHECK(validate(regulated_model(), 5000).ok());
}

TEST_CASE("validation is deterministic in the seed") {
  RateModel model = constant_model(0.015, 0.01, 0.005);
  model.bounds.m_min = 0.015;
  const auto a = validate(model, 50, 7);
  const auto b = validate(model, 50, 7);
  REQUIRE(a.violations.size() == b.violations.size());
  for (std::size_t k = 0; k < a.violations.size(); ++k) {
    CHECK(a.violations[k].x == b.violations[k].x);
    CHECK(a.violations[k].z == b.violations[k].z);
  }
}

TEST_CASE("domain checks and clamped extension") {
  const RateModel model = regulated_model();
  CHECK_THROWS_AS(model.m(-0.5, 0.0), std::domain_error);
  CHECK_THROWS_AS(model.m(0.5, -1.0), std::domain_error);

  const RateModel ext = extend_clamped(model);
  CHECK(ext.m(-0.5, 0.3) == model.m(0.0, 0.3));
  CHECK(ext.m(1.7, 0.3) == model.m(1.0, 0.3));
  CHECK(ext.r(0.4, -1.0) == model.r(0.4, 0.0));
  CHECK(ext.m(0.4, -1.0) == model.m(0.4, 0.0));
  for (double x : {0.0, 0.25, 0.9, 1.0})
    for (double z : {0.0, 0.5, 3.0}) CHECK(ext.m(x, z) == model.m(x, z));

  const RateModel flat = extend_clamped(constant_model(0.015, 0.02, 0.005));
  for (double x : {-3.0, -0.5, 0.0, 0.5, 2.0})
    for (double z : {-5.0, 0.0, 100.0}) CHECK(flat.m(x, z) == 0.02);
}

TEST_CASE("clamped extension stays within bounds and Lipschitz globally") {
  const RateModel ext = extend_clamped(regulated_model());
  const RateBounds& b = ext.bounds;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> wide(-3.0, 4.0);
  std::uniform_real_distribution<double> step(-0.1, 0.1);
  for (int k = 0; k < 5000; ++k) {
    const double x = wide(gen), z = wide(gen);
    const double m = ext.m(x, z);
    CHECK(m >= b.m_min - 1e-15);
    CHECK(m <= b.m_hat + 1e-15);
    const double x2 = x + step(gen), z2 = z + step(gen);
    const double dist = std::abs(x2 - x) + std::abs(z2 - z);
    if (dist > 0.0) CHECK(std::abs(ext.m(x2, z2) - m) <= b.lipschitz_m * dist * (1.0 + 1e-9) + 1e-15);
  }
}

TEST_CASE("tabulated rates interpolate bilinearly") {
  const RateFunction f(TabulatedRate{{0.0, 1.0}, {0.0, 2.0}, {1.0, 3.0, 2.0, 6.0}});
  CHECK(f(0.0, 0.0) == doctest::Approx(1.0));
  CHECK(f(1.0, 2.0) == doctest::Approx(6.0));
  CHECK(f(0.5, 1.0) == doctest::Approx(0.25 * (1.0 + 3.0 + 2.0 + 6.0)));
  CHECK(f(0.5, 10.0) == doctest::Approx(4.5));
  CHECK(f.depends_on_z());
  CHECK_THROWS(RateFunction(TabulatedRate{{0.0, 1.0}, {0.0}, {1.0}}));
}
