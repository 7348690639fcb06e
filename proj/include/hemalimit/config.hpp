#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hemalimit/rates.hpp"

namespace hemalimit {

/// Malformed or inconsistent configuration (CLI exit status 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver failure: CFL violation, negative density, non-convergence (exit status 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How initial counts are generated for a given compartment count N.
struct InitialSpec {
  enum class Kind { explicit_counts, stem_raw, stem_scaled };
  Kind kind = Kind::stem_raw;
  std::vector<std::int64_t> counts;  // explicit_counts
  std::int64_t stem_count = 50;      // stem_raw: X_1(0) regardless of N
  double stem_scaled = 1.0;          // stem_scaled: X_1(0) = round(stem_scaled * N)

  std::vector<std::int64_t> counts_for(int n_compartments) const;
};

struct LimitSettings {
  int cells = 200;
  double cfl = 0.5;               // dt = cfl * dx / m_hat unless dt is given
  std::optional<double> dt;
  std::optional<double> a0;       // defaults to X_1(0)/N
  std::optional<double> z0;       // defaults to X_N(0)/N
  double output_interval = 1.0;
  bool hold_stem = false;         // freeze a(t) = a0 (steady-shape studies)
};

struct ModelConfig {
  int n_compartments = 50;
  double horizon = 100.0;
  RateModel rates;
  InitialSpec initial;
  std::vector<std::int64_t> initial_counts;
  std::vector<double> sample_times;
  std::uint64_t seed = 1;
  LimitSettings limit;
  int metric_nodes = 512;

  /// Throws ConfigError if any invariant is violated.
  void validate() const;

  /// Same model with N compartments; initial counts regenerated from `initial`.
  ModelConfig with_compartments(int n) const;
};

/// Uniform sample grid of `samples` points on [0, horizon].
std::vector<double> uniform_samples(double horizon, std::size_t samples);

/// Model with the reference constant rates m = 0.02, r = 0.015, d = 0.005
/// and 50 stem cells.
ModelConfig reference_config(int n_compartments = 50, double horizon = 100.0, std::size_t samples = 101);

ModelConfig parse_config(const std::string& text);
ModelConfig load_config(const std::filesystem::path& path);

/// Resolved configuration rendered back to the key/value format.
std::string render_config(const ModelConfig& config);

}  // namespace hemalimit
