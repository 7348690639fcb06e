#include "hemalimit/ssa.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hemalimit {

double CompartmentState::immature_mass() const {
  std::int64_t s = 0;
  for (int i = 1; i + 1 < n(); ++i) s += counts[static_cast<std::size_t>(i)];
  return static_cast<double>(s) / n();
}

std::int64_t CompartmentState::total() const {
  std::int64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate) { return mix_seed(seed, replicate); }

double total_rate(const CompartmentState& state, const RateModel& model) {
  const int n = state.n();
  if (n < 3) throw std::invalid_argument("total_rate: need N >= 3");
  const double z = state.scaled_mature();
  double total = 0.0;
  for (int i = 1; i <= n - 1; ++i) {
    const double x = static_cast<double>(i) / n;
    const double xi = static_cast<double>(state.counts[static_cast<std::size_t>(i - 1)]);
    total += model.r(x, z) * xi;
    total += (i == 1 ? 1.0 : static_cast<double>(n)) * model.m(x, z) * xi;
  }
  return total + model.death_rate * static_cast<double>(state.counts.back());
}

Simulator::Simulator(const RateModel& model, CompartmentState initial, std::uint64_t seed)
    : model_(model), state_(std::move(initial)), rng_(seed), n_(state_.n()), regulated_(model.regulated()) {
  if (n_ < 3) throw std::invalid_argument("Simulator: need N >= 3");
  for (auto c : state_.counts)
    if (c < 0) throw std::invalid_argument("Simulator: negative count");
  const auto nu = static_cast<std::size_t>(n_);
  r_.resize(nu - 1);
  m_.resize(nu - 1);
  const std::size_t channels = 2 * (nu - 1) + 1;
  leaves_ = std::bit_ceil(channels);
  tree_.assign(2 * leaves_, 0.0);

  log_.divisions.assign(nu - 1, 0);
  log_.differentiations.assign(nu - 1, 0);
  log_.division_integral.assign(nu - 1, 0.0);
  log_.differentiation_integral.assign(nu - 1, 0.0);
  log_.occupancy_integral.assign(nu, 0.0);
  last_flush_.assign(nu, state_.t);
  div_acc_.assign(nu - 1, {});
  diff_acc_.assign(nu - 1, {});
  occ_acc_.assign(nu, {});

  total_ = state_.total();
  max_total_ = total_;
  refresh_rates();
  rebuild_tree();
}

void Simulator::refresh_rates() {
  const double z = state_.scaled_mature();
  for (int k = 0; k + 1 < n_; ++k) {
    const double x = static_cast<double>(k + 1) / n_;
    r_[static_cast<std::size_t>(k)] = model_.r(x, z);
    m_[static_cast<std::size_t>(k)] = model_.m(x, z);
  }
}

void Simulator::rebuild_tree() {
  std::fill(tree_.begin(), tree_.end(), 0.0);
  for (int k = 0; k + 1 < n_; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const double xk = static_cast<double>(state_.counts[ku]);
    tree_[leaves_ + 2 * ku] = r_[ku] * xk;
    tree_[leaves_ + 2 * ku + 1] = (k == 0 ? 1.0 : static_cast<double>(n_)) * m_[ku] * xk;
  }
  tree_[leaves_ + 2 * static_cast<std::size_t>(n_ - 1)] = model_.death_rate * static_cast<double>(state_.counts.back());
  for (std::size_t i = leaves_ - 1; i >= 1; --i) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

void Simulator::set_channel(std::size_t channel, double rate) {
  std::size_t i = leaves_ + channel;
  tree_[i] = rate;
  for (i /= 2; i >= 1; i /= 2) tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
}

void Simulator::refresh_compartment(int k) {
  const auto ku = static_cast<std::size_t>(k);
  const double xk = static_cast<double>(state_.counts[ku]);
  if (k == n_ - 1) {
    set_channel(2 * ku, model_.death_rate * xk);
    return;
  }
  set_channel(2 * ku, r_[ku] * xk);
  set_channel(2 * ku + 1, (k == 0 ? 1.0 : static_cast<double>(n_)) * m_[ku] * xk);
}

double Simulator::channel_rate(Event::Kind kind, int compartment) const {
  const auto ku = static_cast<std::size_t>(compartment);
  switch (kind) {
    case Event::Kind::division:
      return compartment < n_ - 1 ? tree_[leaves_ + 2 * ku] : 0.0;
    case Event::Kind::differentiation:
      return compartment < n_ - 1 ? tree_[leaves_ + 2 * ku + 1] : 0.0;
    case Event::Kind::death:
      return compartment == n_ - 1 ? tree_[leaves_ + 2 * ku] : 0.0;
  }
  return 0.0;
}

void Simulator::flush(int k, double t) {
  const auto ku = static_cast<std::size_t>(k);
  const double dt = t - last_flush_[ku];
  if (dt <= 0.0) return;
  const double xk = static_cast<double>(state_.counts[ku]);
  if (xk != 0.0) {
    occ_acc_[ku].add(xk * dt);
    if (k < n_ - 1) {
      div_acc_[ku].add(r_[ku] * xk * dt);
      diff_acc_[ku].add(m_[ku] * xk * dt);
    }
  }
  last_flush_[ku] = t;
}

void Simulator::flush_all(double t) {
  for (int k = 0; k < n_; ++k) flush(k, t);
}

std::size_t Simulator::select(double u) const {
  std::size_t i = 1;
  while (i < leaves_) {
    const double left = tree_[2 * i];
    if (u < left) {
      i = 2 * i;
    } else {
      u -= left;
      i = 2 * i + 1;
    }
  }
  std::size_t channel = i - leaves_;
  if (tree_[i] > 0.0) return channel;
  // Rounding pushed u past the last positive leaf: take the nearest one below.
  while (channel > 0 && tree_[leaves_ + channel] <= 0.0) --channel;
  return channel;
}

void Simulator::apply(std::size_t channel) {
  const double t = state_.t;
  const std::size_t death_channel = 2 * static_cast<std::size_t>(n_ - 1);
  const int k = static_cast<int>(channel / 2);
  const auto ku = static_cast<std::size_t>(k);
  auto& c = state_.counts;

  bool mature_changed = false;
  if (channel == death_channel) {
    flush(n_ - 1, t);
    --c.back();
    ++log_.deaths;
    mature_changed = true;
  } else if (channel % 2 == 0) {
    flush(k, t);
    ++c[ku];
    ++log_.divisions[ku];
  } else {
    flush(k, t);
    flush(k + 1, t);
    --c[ku];
    ++c[ku + 1];
    ++log_.differentiations[ku];
    mature_changed = (k + 1 == n_ - 1);
  }

  if (channel == death_channel) {
    --total_;
  } else if (channel % 2 == 0) {
    max_total_ = std::max(max_total_, ++total_);
  }

  if (mature_changed && regulated_) {
    // The integrals of every compartment were accumulated with the old z.
    flush_all(t);
    refresh_rates();
    rebuild_tree();
    return;
  }
  if (channel == death_channel) {
    refresh_compartment(n_ - 1);
  } else if (channel % 2 == 0) {
    refresh_compartment(k);
  } else {
    refresh_compartment(k);
    refresh_compartment(k + 1);
  }
}

std::optional<Event> Simulator::step() {
  if (absorption_time_) return std::nullopt;
  const double lambda = total_rate();
  if (!(lambda > 0.0)) {
    absorption_time_ = state_.t;
    return std::nullopt;
  }
  if (!next_event_time_) next_event_time_ = state_.t + std::exponential_distribution<double>(lambda)(rng_);
  state_.t = *next_event_time_;
  next_event_time_.reset();
  const double u = std::uniform_real_distribution<double>(0.0, lambda)(rng_);
  const std::size_t channel = select(u);
  apply(channel);

  const std::size_t death_channel = 2 * static_cast<std::size_t>(n_ - 1);
  if (channel == death_channel) return Event{Event::Kind::death, n_ - 1, state_.t};
  const int k = static_cast<int>(channel / 2);
  return Event{channel % 2 == 0 ? Event::Kind::division : Event::Kind::differentiation, k, state_.t};
}

bool Simulator::advance(double t_target) {
  if (t_target < state_.t) throw std::invalid_argument("Simulator::advance: target time is in the past");
  while (!absorption_time_) {
    const double lambda = total_rate();
    if (!(lambda > 0.0)) {
      absorption_time_ = state_.t;
      break;
    }
    if (!next_event_time_) next_event_time_ = state_.t + std::exponential_distribution<double>(lambda)(rng_);
    if (*next_event_time_ > t_target) break;
    step();
  }
  state_.t = t_target;
  return !absorption_time_ || *absorption_time_ >= t_target;
}

EventLog Simulator::log() {
  flush_all(state_.t);
  EventLog out = log_;
  for (std::size_t k = 0; k + 1 < static_cast<std::size_t>(n_); ++k) {
    out.division_integral[k] = div_acc_[k].value();
    out.differentiation_integral[k] = diff_acc_[k].value();
  }
  for (std::size_t k = 0; k < static_cast<std::size_t>(n_); ++k) out.occupancy_integral[k] = occ_acc_[k].value();
  return out;
}

namespace {

Trajectory make_trajectory(const ModelConfig& config) {
  config.validate();
  Trajectory traj;
  traj.n = config.n_compartments;
  traj.death_rate = config.rates.death_rate;
  traj.times = config.sample_times;
  traj.counts.reserve(traj.times.size());
  traj.logs.reserve(traj.times.size());
  traj.running_max_total.reserve(traj.times.size());
  return traj;
}

}  // namespace

Trajectory simulate(const ModelConfig& config, std::uint64_t replicate) {
  Trajectory traj = make_trajectory(config);
  Simulator sim(config.rates, CompartmentState{0.0, config.initial_counts}, replicate_seed(config.seed, replicate));
  for (double t : traj.times) {
    sim.advance(t);
    traj.counts.push_back(sim.state().counts);
    traj.logs.push_back(sim.log());
    traj.running_max_total.push_back(sim.max_total());
  }
  traj.absorption_time = sim.absorption_time();
  return traj;
}

Trajectory simulate_tau_leap(const ModelConfig& config, double tau, std::uint64_t replicate) {
  if (!(tau > 0.0)) throw std::invalid_argument("simulate_tau_leap: tau must be > 0");
  Trajectory traj = make_trajectory(config);
  const RateModel& model = config.rates;
  const int n = config.n_compartments;
  const auto nu = static_cast<std::size_t>(n);
  std::mt19937_64 rng(replicate_seed(config.seed, replicate));

  std::vector<std::int64_t> x = config.initial_counts;
  EventLog log;
  log.divisions.assign(nu - 1, 0);
  log.differentiations.assign(nu - 1, 0);
  log.division_integral.assign(nu - 1, 0.0);
  log.differentiation_integral.assign(nu - 1, 0.0);
  log.occupancy_integral.assign(nu, 0.0);
  std::int64_t total = std::accumulate(x.begin(), x.end(), std::int64_t{0});
  std::int64_t max_total = total;

  auto poisson = [&](double mean) -> std::int64_t {
    if (!(mean > 0.0)) return 0;
    return std::poisson_distribution<std::int64_t>(mean)(rng);
  };

  double t = 0.0;
  for (double target : traj.times) {
    while (t < target) {
      const double h = std::min(tau, target - t);
      const double z = static_cast<double>(x.back()) / n;
      std::vector<std::int64_t> next = x;
      for (std::size_t k = 0; k + 1 < nu; ++k) {
        const double xk = static_cast<double>(x[k]);
        const double pos = static_cast<double>(k + 1) / n;
        const double r = model.r(pos, z);
        const double m = model.m(pos, z);
        log.division_integral[k] += r * xk * h;
        log.differentiation_integral[k] += m * xk * h;
        log.occupancy_integral[k] += xk * h;
        const std::int64_t births = poisson(r * xk * h);
        const std::int64_t moves = std::min(x[k], poisson((k == 0 ? 1.0 : n) * m * xk * h));
        next[k] += births - moves;
        next[k + 1] += moves;
        log.divisions[k] += births;
        log.differentiations[k] += moves;
        total += births;
      }
      log.occupancy_integral[nu - 1] += static_cast<double>(x.back()) * h;
      const std::int64_t deaths = std::min(x.back(), poisson(model.death_rate * static_cast<double>(x.back()) * h));
      next.back() -= deaths;
      log.deaths += deaths;
      total -= deaths;
      max_total = std::max(max_total, total);
      x = std::move(next);
      t += h;
    }
    traj.counts.push_back(x);
    traj.logs.push_back(log);
    traj.running_max_total.push_back(max_total);
  }
  return traj;
}

EnsembleStats ensemble(const ModelConfig& config, int replicates, int workers) {
  if (replicates < 1) throw std::invalid_argument("ensemble: replicates must be >= 1");
  config.validate();
  EnsembleStats stats;
  stats.n = config.n_compartments;
  stats.replicates = replicates;
  stats.times = config.sample_times;
  const std::size_t width = 3 + static_cast<std::size_t>(stats.n);
  stats.per_sample.assign(stats.times.size(), MomentTable(width));

  ordered_map_reduce(
      static_cast<std::size_t>(replicates), workers,
      [&](std::size_t k) {
        const Trajectory traj = simulate(config, k);
        std::vector<double> rows;
        rows.reserve(traj.times.size() * width);
        for (std::size_t s = 0; s < traj.times.size(); ++s) {
          const CompartmentState st = traj.state(s);
          rows.push_back(st.scaled_stem());
          rows.push_back(st.scaled_mature());
          rows.push_back(st.immature_mass());
          for (auto c : st.counts) rows.push_back(static_cast<double>(c));
        }
        return rows;
      },
      [&](std::size_t, std::vector<double>&& rows) {
        for (std::size_t s = 0; s < stats.per_sample.size(); ++s)
          stats.per_sample[s].add(std::span<const double>(rows.data() + s * width, width));
      });
  return stats;
}

}  // namespace hemalimit
