#pragma once

#include <vector>

#include "hemalimit/config.hpp"
#include "hemalimit/empirical.hpp"

namespace hemalimit {

/// Optimal test function of the grid-restricted bounded-Lipschitz problem.
struct BLWitness {
  std::vector<double> nodes;
  std::vector<double> values;
  double sup_bound = 0.0;   // max |g|
  double lipschitz = 0.0;   // max slope between neighbouring nodes
  double value = 0.0;       // sum_j g_j w_j
};

struct BLResult {
  double distance = 0.0;
  BLWitness witness;
};

/// Atom masses split linearly onto `nodes` equispaced nodes on [0,1]; total
/// mass and first moment are preserved. Throws std::domain_error for atoms
/// outside [0,1].
std::vector<double> grid_masses(const AtomicMeasure& mu, int nodes);

/// Exact optimum of max sum_j g_j w_j over node values with
/// sup|g| + Lip(g) <= 1, where w is the signed difference of the grid masses.
/// The unit ball is {g : sup|g| + Lip(g) <= 1}; for fixed (sup, Lip) the chain
/// problem is solved by a dynamic program over concave piecewise-linear value
/// functions, and the concave dependence on the split is maximised by
/// golden-section search.
BLResult bl_distance(const AtomicMeasure& nu1, const AtomicMeasure& nu2, int nodes = 512);

/// Same problem on pre-aggregated signed node masses.
BLResult bl_distance_grid(const std::vector<double>& signed_masses);

/// Value of the chain problem max sum g_j w_j, |g_j| <= sup_bound,
/// |g_{j+1} - g_j| <= step_bound, with an optimal g.
double chain_optimum(const std::vector<double>& w, double sup_bound, double step_bound, std::vector<double>* g = nullptr);

struct ConvergenceOptions {
  std::vector<int> n_list{50, 100, 200, 400};
  int replicates = 200;
  int batches = 10;
  int limit_cells = 1600;
  int workers = 0;
};

struct ConvergenceRow {
  int n = 0;
  int replicates = 0;
  double distance = 0.0;       // d_BL(mean empirical immature measure at T, limit at T)
  double distance_se = 0.0;    // batch-means standard error
  double stem_error = 0.0;     // max over samples |mean X_1/N - a(t)|
  double stem_se = 0.0;        // standard error at the maximising sample
  double mature_error = 0.0;   // max over samples |mean X_N/N - z(t)|
  double mature_se = 0.0;
  BLWitness witness;
};

struct ConvergenceReport {
  double time = 0.0;
  std::vector<ConvergenceRow> rows;
  double slope = 0.0;              // OLS slope of log distance against log N
  bool monotone = false;           // distances strictly decrease in N
  bool boundary_monotone = false;  // stem and mature errors strictly decrease in N
  bool halved = false;             // last distance <= 0.5 * first
};

/// Configuration at N compartments for the study. Stem-only raw initial
/// data is rescaled to round(a0 N) stem cells with a0 = X_1(0)/N of `base`.
ModelConfig study_config(const ModelConfig& base, int n);

/// Ensemble-versus-limit comparison at the final sample time of `base`.
ConvergenceReport convergence_study(const ModelConfig& base, const ConvergenceOptions& options);

}  // namespace hemalimit
