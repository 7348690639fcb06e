#include "hemalimit/empirical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hemalimit/numerics.hpp"

namespace hemalimit {

double AtomicMeasure::mass() const {
  CompensatedSum s;
  for (const auto& a : atoms) s.add(a.w);
  return s.value();
}

TestFunction TestFunction::constant(double c) {
  return {"const", [c](double) { return c; }, std::function<double(double)>([](double) { return 0.0; }), std::abs(c),
          0.0};
}

TestFunction TestFunction::identity() {
  return {"x", [](double x) { return x; }, std::function<double(double)>([](double) { return 1.0; }), 1.0, 1.0};
}

TestFunction TestFunction::square() {
  return {"x2", [](double x) { return x * x; }, std::function<double(double)>([](double x) { return 2.0 * x; }), 1.0,
          2.0};
}

TestFunction TestFunction::hat_at_zero(double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("hat_at_zero: eps must be > 0");
  return {"hat:" + std::to_string(eps), [eps](double x) { return std::max(0.0, 1.0 - std::abs(x) / eps); },
          std::nullopt, 1.0, 1.0 / eps};
}

TestFunction TestFunction::by_name(const std::string& name) {
  if (name == "one") return constant(1.0);
  if (name == "x") return identity();
  if (name == "x2") return square();
  if (name.rfind("hat:", 0) == 0) {
    try {
      return hat_at_zero(std::stod(name.substr(4)));
    } catch (const std::logic_error&) {
    }
  }
  throw std::invalid_argument("unknown test function '" + name + "' (expected one, x, x2 or hat:<eps>)");
}

AtomicMeasure empirical_measure(const CompartmentState& state) {
  const int n = state.n();
  AtomicMeasure mu;
  mu.atoms.reserve(static_cast<std::size_t>(std::max(0, n - 2)));
  for (int i = 2; i <= n - 1; ++i)
    mu.atoms.push_back({static_cast<double>(i) / n, static_cast<double>(state.counts[static_cast<std::size_t>(i - 1)]) / n});
  return mu;
}

AtomicMeasure mean_empirical_measure(const EnsembleStats& stats, std::size_t s) {
  const int n = stats.n;
  AtomicMeasure mu;
  for (int i = 2; i <= n - 1; ++i) mu.atoms.push_back({static_cast<double>(i) / n, stats.mean_count(s, i - 1) / n});
  return mu;
}

double pair(const AtomicMeasure& mu, const std::function<double(double)>& f) {
  CompensatedSum s;
  for (const auto& a : mu.atoms) s.add(a.w * f(a.x));
  return s.value();
}

double pair(const AtomicMeasure& mu, const TestFunction& f) { return pair(mu, f.value); }

std::function<double(double)> discrete_derivative(std::function<double(double)> f, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("discrete_derivative: h must be > 0");
  return [f = std::move(f), h](double x) { return (f(x + h) - f(x)) / h; };
}

PathIntegrals path_integrals(const Trajectory& traj, std::size_t s) {
  const EventLog& log = traj.logs[s];
  const double n = traj.n;
  PathIntegrals p;
  p.stem_efflux = log.differentiation_integral.front() / n;
  p.stem_division = log.division_integral.front() / n;
  CompensatedSum r;
  for (std::size_t k = 1; k < log.division_integral.size(); ++k) r.add(log.division_integral[k]);
  p.immature_r = r.value() / n;
  p.mature = log.occupancy_integral.back() / n;
  p.last_efflux = log.differentiation_integral.back();
  return p;
}

namespace {

struct Grid {
  int n;
  std::vector<double> f;   // f(i/N), index i = 0..N
  std::vector<double> df;  // Delta_{1/N} f(i/N)
  double f1;
};

Grid make_grid(int n, const TestFunction& tf) {
  Grid g{n, {}, {}, tf(1.0)};
  if (!std::isfinite(g.f1)) throw std::invalid_argument("test function '" + tf.name + "' has no finite value at 1");
  g.f.resize(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) g.f[static_cast<std::size_t>(i)] = tf(static_cast<double>(i) / n);
  g.df.resize(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    g.df[static_cast<std::size_t>(i)] = (g.f[static_cast<std::size_t>(i) + 1] - g.f[static_cast<std::size_t>(i)]) * n;
  return g;
}

double pair_grid(const Grid& g, const std::vector<std::int64_t>& counts) {
  CompensatedSum s;
  for (int i = 2; i <= g.n - 1; ++i)
    s.add(g.f[static_cast<std::size_t>(i)] * static_cast<double>(counts[static_cast<std::size_t>(i - 1)]));
  return s.value() / g.n;
}

void fill_drift(SemimartingalePanel& p, const Trajectory& traj, const Grid& g) {
  const double n = traj.n;
  const double mu0 = traj.state(0).immature_mass();
  p.times = traj.times;
  p.a1.clear();
  p.af.clear();
  p.an.clear();
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const EventLog& log = traj.logs[s];
    const PathIntegrals pi = path_integrals(traj, s);
    CompensatedSum fr, dfm;
    for (int i = 2; i <= traj.n - 1; ++i) {
      const auto k = static_cast<std::size_t>(i - 1);
      fr.add(g.f[static_cast<std::size_t>(i)] * log.division_integral[k]);
      dfm.add(g.df[static_cast<std::size_t>(i)] * log.differentiation_integral[k]);
    }
    const double mut = traj.state(s).immature_mass();
    const double bracket = mu0 - mut + pi.immature_r + pi.stem_efflux;
    p.a1.push_back(pi.stem_division - pi.stem_efflux);
    p.af.push_back(g.f[2] * pi.stem_efflux + fr.value() / n + dfm.value() / n - g.f1 * bracket);
    p.an.push_back(bracket - traj.death_rate * pi.mature);
  }
}

void fill_residuals(SemimartingalePanel& p, const Trajectory& traj, const Grid& g) {
  const CompartmentState s0 = traj.state(0);
  const double pf0 = pair_grid(g, s0.counts);
  p.m1.clear();
  p.mf.clear();
  p.mn.clear();
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const CompartmentState st = traj.state(s);
    p.m1.push_back(st.scaled_stem() - s0.scaled_stem() - p.a1[s]);
    p.mf.push_back(pair_grid(g, st.counts) - pf0 - p.af[s]);
    p.mn.push_back(st.scaled_mature() - s0.scaled_mature() - p.an[s]);
  }
}

void fill_brackets(SemimartingalePanel& p, const Trajectory& traj, const Grid& g) {
  const double n = traj.n;
  p.times = traj.times;
  p.qv_1.clear();
  p.qv_f.clear();
  p.qv_n.clear();
  p.qv_1f.clear();
  p.qv_1n.clear();
  p.qv_fn.clear();
  const double f2 = g.f[2];
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const EventLog& log = traj.logs[s];
    const PathIntegrals pi = path_integrals(traj, s);
    CompensatedSum sq_r, sq_m, lin_r;
    for (int i = 2; i <= traj.n - 1; ++i) {
      const auto k = static_cast<std::size_t>(i - 1);
      const double centred = g.f[static_cast<std::size_t>(i)] - g.f1;
      const double df = g.df[static_cast<std::size_t>(i)];
      sq_r.add(centred * centred * log.division_integral[k]);
      sq_m.add(df * df * log.differentiation_integral[k]);
      lin_r.add(centred * log.division_integral[k]);
    }
    p.qv_1.push_back((pi.stem_division + pi.stem_efflux) / n);
    p.qv_f.push_back((sq_r.value() / n + sq_m.value() / (n * n) + (f2 - g.f1) * (f2 - g.f1) * pi.stem_efflux) / n);
    p.qv_n.push_back((pi.immature_r + pi.stem_efflux + traj.death_rate * pi.mature) / n);
    p.qv_1f.push_back((g.f1 - f2) * pi.stem_efflux / n);
    p.qv_1n.push_back(-pi.stem_efflux / n);
    // A division in compartment i moves M^{N,f} by (f(i/N) - f(1))/N and M^N by 1/N;
    // a 1 -> 2 transition moves them by (f(2/N) - f(1))/N and 1/N.
    p.qv_fn.push_back((lin_r.value() / n + (f2 - g.f1) * pi.stem_efflux) / n);
  }
}

}  // namespace

SemimartingalePanel drift_terms(const Trajectory& traj, const TestFunction& f) {
  const Grid g = make_grid(traj.n, f);
  SemimartingalePanel p;
  fill_drift(p, traj, g);
  return p;
}

SemimartingalePanel martingale_residual(const Trajectory& traj, const TestFunction& f) {
  const Grid g = make_grid(traj.n, f);
  SemimartingalePanel p;
  fill_drift(p, traj, g);
  fill_residuals(p, traj, g);
  return p;
}

SemimartingalePanel qv_predicted(const Trajectory& traj, const TestFunction& f) {
  const Grid g = make_grid(traj.n, f);
  SemimartingalePanel p;
  fill_brackets(p, traj, g);
  return p;
}

SemimartingalePanel semimartingale_panel(const Trajectory& traj, const TestFunction& f) {
  const Grid g = make_grid(traj.n, f);
  SemimartingalePanel p;
  fill_drift(p, traj, g);
  fill_residuals(p, traj, g);
  fill_brackets(p, traj, g);
  return p;
}

std::vector<double> compartment_martingales(const Trajectory& traj, std::size_t s) {
  const EventLog& log = traj.logs[s];
  const int n = traj.n;
  const double nd = n;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n - 2));
  for (int i = 2; i <= n - 1; ++i) {
    const auto k = static_cast<std::size_t>(i - 1);
    const double jumps = static_cast<double>(log.divisions[k] + log.differentiations[k - 1] - log.differentiations[k]);
    const double inflow = (i == 2) ? log.differentiation_integral[0] : nd * log.differentiation_integral[k - 1];
    const double compensator = log.division_integral[k] + inflow - nd * log.differentiation_integral[k];
    out.push_back(jumps - compensator);
  }
  return out;
}

double IdentityCheck::relative_error() const {
  const double diff = std::abs(lhs - rhs);
  if (scale == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / scale;
}

IdentityCheck pathwise_identity(const Trajectory& traj, std::size_t s) {
  const PathIntegrals pi = path_integrals(traj, s);
  const double mu0 = traj.state(0).immature_mass();
  const double mut = traj.state(s).immature_mass();
  CompensatedSum mart;
  for (double m : compartment_martingales(traj, s)) mart.add(m);
  IdentityCheck c;
  c.lhs = pi.last_efflux;
  c.rhs = mu0 - mut + pi.stem_efflux + pi.immature_r + mart.value() / traj.n;
  c.scale = std::max(std::abs(c.lhs), std::abs(mu0) + std::abs(mut) + std::abs(pi.stem_efflux) + std::abs(pi.immature_r));
  return c;
}

double scaled_total(const CompartmentState& state) {
  return state.scaled_stem() + state.immature_mass() + state.scaled_mature();
}

double sup_total_bound(double mean_y0, double r_hat, double horizon) { return mean_y0 * std::exp(r_hat * horizon); }

double compartment_integral_bound(double mean_y0, double mean_stem0, const RateBounds& bounds, double horizon) {
  if (!(bounds.m_min > 0.0)) throw std::invalid_argument("compartment_integral_bound: m_min must be > 0");
  const double stem_term =
      bounds.r_hat > 0.0 ? bounds.m_hat / bounds.r_hat * mean_stem0 : bounds.m_hat * horizon * mean_stem0;
  return (mean_y0 + stem_term) * std::exp(bounds.r_hat * horizon) / bounds.m_min;
}

}  // namespace hemalimit
