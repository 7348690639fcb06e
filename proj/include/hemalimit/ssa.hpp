#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "hemalimit/config.hpp"
#include "hemalimit/numerics.hpp"
#include "hemalimit/rates.hpp"

namespace hemalimit {

/// Raw cell counts X_1..X_N at time t. counts[k] holds compartment k+1, so
/// counts.front() is the stem compartment and counts.back() the mature one.
struct CompartmentState {
  double t = 0.0;
  std::vector<std::int64_t> counts;

  int n() const { return static_cast<int>(counts.size()); }
  double scaled_stem() const { return static_cast<double>(counts.front()) / n(); }
  double scaled_mature() const { return static_cast<double>(counts.back()) / n(); }
  /// <mu^N, 1> = (1/N) * sum_{i=2}^{N-1} X_i
  double immature_mass() const;
  std::int64_t total() const;
};

/// Event counters and exact time integrals along one path. Vectors indexed by
/// k refer to compartment k+1; the integrals are the compensators of the
/// corresponding counters and are exact up to rounding because the state is
/// piecewise constant.
struct EventLog {
  std::vector<std::int64_t> divisions;        // k = 0..N-2
  std::vector<std::int64_t> differentiations; // out of compartment k, k = 0..N-2
  std::int64_t deaths = 0;
  std::vector<double> division_integral;        // int r((k+1)/N, X_N/N) X_{k+1} ds
  std::vector<double> differentiation_integral; // int m((k+1)/N, X_N/N) X_{k+1} ds (no factor N)
  std::vector<double> occupancy_integral;       // int X_{k+1} ds, k = 0..N-1
};

struct Event {
  enum class Kind { division, differentiation, death };
  Kind kind;
  int compartment;  // 0-based
  double time;
};

/// Exact direct-method simulator of the N-compartment jump process.
///
/// Propensities are cached per channel in a binary sum tree, so selecting an
/// event costs O(log N). Only the channels of the compartments touched by an
/// event are refreshed, except when the mature count changes under a
/// regulated model: then every r and m is re-evaluated at the new z.
class Simulator {
 public:
  Simulator(const RateModel& model, CompartmentState initial, std::uint64_t seed);

  double total_rate() const { return tree_.empty() ? 0.0 : tree_[1]; }
  double channel_rate(Event::Kind kind, int compartment) const;

  /// Draws the next event and applies it; nullopt when the total rate is 0.
  std::optional<Event> step();

  /// Runs events up to (not past) `t_target` and moves the clock there.
  /// Returns false if the process is absorbed before t_target.
  bool advance(double t_target);

  const CompartmentState& state() const { return state_; }
  /// Log with every integral brought up to the current clock.
  EventLog log();
  /// sup over the path so far of sum_i X_i.
  std::int64_t max_total() const { return max_total_; }
  std::optional<double> absorption_time() const { return absorption_time_; }

 private:
  void refresh_rates();
  void set_channel(std::size_t channel, double rate);
  void rebuild_tree();
  void refresh_compartment(int k);
  void flush(int k, double t);
  void flush_all(double t);
  std::size_t select(double u) const;
  void apply(std::size_t channel);

  RateModel model_;
  CompartmentState state_;
  std::mt19937_64 rng_;
  int n_;
  bool regulated_;

  std::vector<double> r_;  // r((k+1)/N, z)
  std::vector<double> m_;  // m((k+1)/N, z)
  std::size_t leaves_ = 1;
  std::vector<double> tree_;

  std::optional<double> next_event_time_;
  std::optional<double> absorption_time_;
  std::int64_t total_ = 0;
  std::int64_t max_total_ = 0;

  EventLog log_;
  std::vector<double> last_flush_;
  std::vector<CompensatedSum> div_acc_, diff_acc_, occ_acc_;
};

/// Sampled path. counts[s] and logs[s] are taken at times[s].
struct Trajectory {
  int n = 0;
  double death_rate = 0.0;
  std::vector<double> times;
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<EventLog> logs;
  std::vector<std::int64_t> running_max_total;  // sup_{u <= times[s]} sum_i X_i(u)
  std::optional<double> absorption_time;

  CompartmentState state(std::size_t sample) const { return {times[sample], counts[sample]}; }
  const EventLog& final_log() const { return logs.back(); }
};

/// Seed used for replicate k of a run with base seed `seed`.
std::uint64_t replicate_seed(std::uint64_t seed, std::uint64_t replicate);

/// Total propensity; the brute-force counterpart lives in the tests.
double total_rate(const CompartmentState& state, const RateModel& model);

Trajectory simulate(const ModelConfig& config, std::uint64_t replicate = 0);

/// Approximate fixed-step tau-leaping; not used by any correctness check.
Trajectory simulate_tau_leap(const ModelConfig& config, double tau, std::uint64_t replicate = 0);

/// Per-sample ensemble statistics over replicates.
struct EnsembleStats {
  int n = 0;
  int replicates = 0;
  std::vector<double> times;
  /// Columns per sample: X_1/N, X_N/N, <mu,1>, then raw X_1..X_N.
  std::vector<MomentTable> per_sample;

  double mean_stem(std::size_t s) const { return per_sample[s].mean(0); }
  double mean_mature(std::size_t s) const { return per_sample[s].mean(1); }
  double mean_immature_mass(std::size_t s) const { return per_sample[s].mean(2); }
  double mean_count(std::size_t s, int k) const { return per_sample[s].mean(3 + static_cast<std::size_t>(k)); }
  double var_count(std::size_t s, int k) const { return per_sample[s].variance(3 + static_cast<std::size_t>(k)); }
};

EnsembleStats ensemble(const ModelConfig& config, int replicates, int workers = 0);

/// Runs `replicates` trajectories and accumulates observe(trajectory) (a
/// fixed-width vector) in replicate order, independent of the worker count.
template <class Observe>
MomentTable ensemble_observe(const ModelConfig& config, int replicates, Observe&& observe, int workers = 0);

}  // namespace hemalimit

#include "hemalimit/parallel.hpp"

namespace hemalimit {

template <class Observe>
MomentTable ensemble_observe(const ModelConfig& config, int replicates, Observe&& observe, int workers) {
  if (replicates < 1) throw std::invalid_argument("ensemble: replicates must be >= 1");
  MomentTable table;
  bool first = true;
  ordered_map_reduce(
      static_cast<std::size_t>(replicates), workers,
      [&](std::size_t k) {
        const Trajectory traj = simulate(config, k);
        return std::vector<double>(observe(traj));
      },
      [&](std::size_t, std::vector<double>&& row) {
        if (first) {
          table = MomentTable(row.size());
          first = false;
        }
        table.add(row);
      });
  return table;
}

}  // namespace hemalimit
