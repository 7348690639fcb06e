#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hemalimit/ssa.hpp"

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
  model.division = RateFunction(RegulatedRate{0.03, 0.0, 0.5, 0.005});
  model.differentiation = RateFunction(RegulatedRate{0.02, 0.02, 1.0, 0.01});
  model.death_rate = 0.01;
  model.bounds = RateModel::derive_bounds(model.division, model.differentiation);
  return model;
}

struct Transition {
  std::vector<std::int64_t> delta;
  double rate;
};

// Every transition of the jump process written out from its definition.
std::vector<Transition> enumerate(const std::vector<std::int64_t>& x, const RateModel& model) {
  const int n = static_cast<int>(x.size());
  const double z = static_cast<double>(x.back()) / n;
  std::vector<Transition> out;
  auto unit = [&](int i, std::int64_t v) {
    std::vector<std::int64_t> d(x.size(), 0);
    d[static_cast<std::size_t>(i - 1)] = v;
    return d;
  };
  for (int i = 1; i <= n - 1; ++i)
    out.push_back({unit(i, 1), model.r(static_cast<double>(i) / n, z) * static_cast<double>(x[i - 1])});
  out.push_back({[&] {
                   auto d = unit(1, -1);
                   d[1] = 1;
                   return d;
                 }(),
                 model.m(1.0 / n, z) * static_cast<double>(x[0])});
  for (int i = 2; i <= n - 1; ++i) {
    auto d = unit(i, -1);
    d[static_cast<std::size_t>(i)] = 1;
    out.push_back({d, n * model.m(static_cast<double>(i) / n, z) * static_cast<double>(x[i - 1])});
  }
  out.push_back({unit(n, -1), model.death_rate * static_cast<double>(x.back())});
  return out;
}

double enumerated_total(const std::vector<std::int64_t>& x, const RateModel& model) {
  double s = 0.0;
  for (const auto& t : enumerate(x, model)) s += t.rate;
  return s;
}

ModelConfig small_config(const RateModel& rates, int n, double horizon, std::vector<std::int64_t> counts) {
  ModelConfig c;
  c.n_compartments = n;
  c.horizon = horizon;
  c.rates = rates;
  c.initial.kind = InitialSpec::Kind::explicit_counts;
  c.initial.counts = counts;
  c.initial_counts = counts;
  c.sample_times = uniform_samples(horizon, 21);
  c.seed = 99;
  return c;
}

}  // namespace

TEST_CASE("total rate examples") {
  const RateModel model = constant_model(0.015, 0.02, 0.005);
  std::vector<std::int64_t> single(10, 0);
  single[0] = 1;
  CHECK(total_rate({0.0, single}, model) == doctest::Approx(0.035).epsilon(1e-14));
  CHECK(total_rate({0.0, std::vector<std::int64_t>(10, 0)}, model) == 0.0);
  const std::vector<std::int64_t> four{0, 3, 0, 0};
  CHECK(total_rate({0.0, four}, model) == doctest::Approx(0.285).epsilon(1e-14));
  CHECK(enumerated_total(four, model) == doctest::Approx(0.285).epsilon(1e-14));
}

TEST_CASE("total rate agrees with the transition enumerator on random states") {
  const RateModel model = regulated_model();
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<std::int64_t> count(0, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + static_cast<int>(gen() % 30);
    std::vector<std::int64_t> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = count(gen);
    const double oracle = enumerated_total(x, model);
    CHECK(total_rate({0.0, x}, model) == doctest::Approx(oracle).epsilon(1e-12));
    Simulator sim(model, {0.0, x}, 1);
    CHECK(sim.total_rate() == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("channel probabilities for a single stem cell") {
  std::vector<std::int64_t> x(8, 0);
  x[0] = 1;
  Simulator sim(constant_model(0.015, 0.02, 0.005), {0.0, x}, 1);
  CHECK(sim.channel_rate(Event::Kind::division, 0) / sim.total_rate() == doctest::Approx(3.0 / 7.0));
  CHECK(sim.channel_rate(Event::Kind::differentiation, 0) / sim.total_rate() == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("death changes only the mature compartment") {
  std::vector<std::int64_t> x{0, 0, 0, 4};
  Simulator sim(constant_model(0.015, 0.02, 0.5), {0.0, x}, 5);
  const auto ev = sim.step();
  REQUIRE(ev);
  CHECK(ev->kind == Event::Kind::death);
  CHECK(sim.state().counts == std::vector<std::int64_t>{0, 0, 0, 3});
  CHECK(sim.state().t > 0.0);
}

TEST_CASE("empty population is absorbed") {
  Simulator sim(constant_model(0.015, 0.02, 0.005), {0.0, std::vector<std::int64_t>(5, 0)}, 1);
  CHECK_FALSE(sim.step());
  REQUIRE(sim.absorption_time());
  CHECK(*sim.absorption_time() == 0.0);
}

TEST_CASE("event frequencies match rate ratios") {
  const RateModel model = regulated_model();
  const std::vector<std::int64_t> x{3, 2, 0, 5, 1, 4};
  const auto transitions = enumerate(x, model);
  const double total = enumerated_total(x, model);
  std::vector<std::int64_t> hits(transitions.size(), 0);
  const int steps = 100000;
  for (int k = 0; k < steps; ++k) {
    Simulator sim(model, {0.0, x}, mix_seed(17, static_cast<std::uint64_t>(k)));
    sim.step();
    std::vector<std::int64_t> delta(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) delta[i] = sim.state().counts[i] - x[i];
    bool matched = false;
    for (std::size_t j = 0; j < transitions.size(); ++j)
      if (transitions[j].rate > 0.0 && transitions[j].delta == delta) {
        ++hits[j];
        matched = true;
        break;
      }
    CHECK(matched);
  }
  for (std::size_t j = 0; j < transitions.size(); ++j) {
    const double p = transitions[j].rate / total;
    const double se = std::sqrt(p * (1.0 - p) / steps);
    CHECK(std::abs(static_cast<double>(hits[j]) / steps - p) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("waiting time is exponential with the total rate") {
  const RateModel model = constant_model(0.015, 0.02, 0.005);
  const std::vector<std::int64_t> x{2, 1, 0, 3};
  const double lambda = total_rate({0.0, x}, model);
  double sum = 0.0;
  const int steps = 20000;
  for (int k = 0; k < steps; ++k) {
    Simulator sim(model, {0.0, x}, mix_seed(3, static_cast<std::uint64_t>(k)));
    sum += sim.step()->time;
  }
  const double mean = sum / steps;
  CHECK(std::abs(mean - 1.0 / lambda) <= 3.0 / lambda / std::sqrt(static_cast<double>(steps)));
}

TEST_CASE("integer ledger and exact integrals along a path") {
  const ModelConfig c = small_config(regulated_model(), 12, 200.0, {30, 2, 0, 0, 5, 0, 0, 0, 1, 0, 0, 4});
  const Trajectory traj = simulate(c);
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const EventLog& log = traj.logs[s];
    const std::int64_t born = std::accumulate(log.divisions.begin(), log.divisions.end(), std::int64_t{0});
    const CompartmentState st = traj.state(s);
    CHECK(born - log.deaths == st.total() - traj.state(0).total());
    CHECK(traj.running_max_total[s] >= st.total());
    // Per compartment: divisions + inflow - outflow equals the change in count.
    for (int k = 0; k < traj.n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      std::int64_t change = 0;
      if (k < traj.n - 1) change += log.divisions[ku] - log.differentiations[ku];
      if (k > 0) change += log.differentiations[ku - 1];
      if (k == traj.n - 1) change -= log.deaths;
      CHECK(change == st.counts[ku] - traj.counts[0][ku]);
    }
  }
}

TEST_CASE("integrals for constant rates are rate times occupancy") {
  const ModelConfig c = small_config(constant_model(0.015, 0.02, 0.005), 10, 300.0, {40, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const EventLog& log = simulate(c).final_log();
  for (std::size_t k = 0; k + 1 < 10; ++k) {
    CHECK(log.division_integral[k] == doctest::Approx(0.015 * log.occupancy_integral[k]).epsilon(1e-13));
    CHECK(log.differentiation_integral[k] == doctest::Approx(0.02 * log.occupancy_integral[k]).epsilon(1e-13));
  }
}

TEST_CASE("sampling grid does not perturb the path") {
  ModelConfig coarse = small_config(regulated_model(), 15, 150.0, std::vector<std::int64_t>(15, 3));
  ModelConfig fine = coarse;
  fine.sample_times = uniform_samples(150.0, 1001);
  const Trajectory a = simulate(coarse);
  const Trajectory b = simulate(fine);
  CHECK(a.counts.back() == b.counts.back());
  CHECK(a.final_log().divisions == b.final_log().divisions);
  CHECK(a.final_log().division_integral.back() ==
        doctest::Approx(b.final_log().division_integral.back()).epsilon(1e-12));
}

TEST_CASE("simulation is deterministic in the seed") {
  const ModelConfig c = reference_config(30, 60.0, 13);
  const Trajectory a = simulate(c, 4);
  const Trajectory b = simulate(c, 4);
  CHECK(a.counts == b.counts);
  CHECK(simulate(c, 5).counts != a.counts);
}

TEST_CASE("ensemble of one equals the single trajectory") {
  const ModelConfig c = reference_config(20, 50.0, 11);
  const EnsembleStats stats = ensemble(c, 1, 1);
  const Trajectory t = simulate(c, 0);
  for (std::size_t s = 0; s < t.times.size(); ++s) {
    CHECK(stats.mean_stem(s) == t.state(s).scaled_stem());
    for (int k = 0; k < 20; ++k) CHECK(stats.mean_count(s, k) == static_cast<double>(t.counts[s][static_cast<std::size_t>(k)]));
  }
}

TEST_CASE("ensemble statistics do not depend on the worker count") {
  const ModelConfig c = reference_config(25, 40.0, 9);
  const EnsembleStats one = ensemble(c, 24, 1);
  const EnsembleStats many = ensemble(c, 24, 5);
  for (std::size_t s = 0; s < one.times.size(); ++s)
    for (std::size_t i = 0; i < one.per_sample[s].width(); ++i) {
      CHECK(one.per_sample[s].mean(i) == many.per_sample[s].mean(i));
      CHECK(one.per_sample[s].variance(i) == many.per_sample[s].variance(i));
    }
}

TEST_CASE("front traversal time for pure maturation") {
  const int n = 200;
  const double m = 0.02;
  const RateModel model = constant_model(0.0, m, 0.0);
  std::vector<std::int64_t> x(static_cast<std::size_t>(n), 0);
  x[0] = 1;
  double sum = 0.0;
  const int replicates = 1000;
  for (int k = 0; k < replicates; ++k) {
    Simulator sim(model, {0.0, x}, mix_seed(2024, static_cast<std::uint64_t>(k)));
    double entered = 0.0;
    while (auto ev = sim.step()) {
      if (ev->compartment == 0) entered = ev->time;
      if (ev->compartment == n - 2) {
        sum += ev->time - entered;
        break;
      }
    }
  }
  const double expected = (n - 2.0) / (n * m);
  CHECK(std::abs(sum / replicates - expected) <= 0.05 * expected);
}

TEST_CASE("tau leaping keeps counts non-negative") {
  const ModelConfig c = reference_config(20, 100.0, 11);
  const Trajectory t = simulate_tau_leap(c, 0.05);
  for (const auto& counts : t.counts)
    for (auto v : counts) CHECK(v >= 0);
  CHECK(t.times == c.sample_times);
}
