#include "hemalimit/rates.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hemalimit {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kDomainSlack = 1e-12;

// Index of the cell [nodes[k], nodes[k+1]] containing v and the local
// coordinate in [0,1]; values beyond the ends are clamped.
std::pair<std::size_t, double> locate(const std::vector<double>& nodes, double v) {
  if (nodes.size() == 1 || v <= nodes.front()) return {0, 0.0};
  if (v >= nodes.back()) return {nodes.size() - 2, 1.0};
  auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
  std::size_t k = static_cast<std::size_t>(it - nodes.begin()) - 1;
  return {k, (v - nodes[k]) / (nodes[k + 1] - nodes[k])};
}

double evaluate(const TabulatedRate& t, double x, double z) {
  const std::size_t nz = t.z_nodes.size();
  auto [ix, fx] = locate(t.x_nodes, x);
  auto [iz, fz] = locate(t.z_nodes, z);
  auto at = [&](std::size_t i, std::size_t j) {
    i = std::min(i, t.x_nodes.size() - 1);
    j = std::min(j, nz - 1);
    return t.values[i * nz + j];
  };
  const double lo = (1.0 - fz) * at(ix, iz) + fz * at(ix, iz + 1);
  const double hi = (1.0 - fz) * at(ix + 1, iz) + fz * at(ix + 1, iz + 1);
  return (1.0 - fx) * lo + fx * hi;
}

void check_sorted(const std::vector<double>& nodes, const char* what) {
  if (nodes.empty()) throw std::invalid_argument(std::string("tabulated rate: empty ") + what);
  for (std::size_t k = 1; k < nodes.size(); ++k)
    if (!(nodes[k] > nodes[k - 1]))
      throw std::invalid_argument(std::string("tabulated rate: ") + what + " must be strictly increasing");
}

}  // namespace

RateFunction::RateFunction(Family family) : family_(std::move(family)) {
  if (const auto* t = std::get_if<TabulatedRate>(&family_)) {
    check_sorted(t->x_nodes, "x_nodes");
    check_sorted(t->z_nodes, "z_nodes");
    if (t->values.size() != t->x_nodes.size() * t->z_nodes.size())
      throw std::invalid_argument("tabulated rate: values must have |x_nodes|*|z_nodes| entries");
  }
  if (const auto* g = std::get_if<RegulatedRate>(&family_)) {
    if (g->feedback < 0.0) throw std::invalid_argument("regulated rate: feedback must be >= 0");
    if (g->floor > g->ceiling) throw std::invalid_argument("regulated rate: floor > ceiling");
  }
  if (const auto* a = std::get_if<AffineRate>(&family_)) {
    if (!(a->z_saturation >= 0.0)) throw std::invalid_argument("affine rate: z_saturation must be >= 0");
  }
}

double RateFunction::operator()(double x, double z) const {
  return std::visit(
      overloaded{
          [](const ConstantRate& c) { return c.value; },
          [&](const AffineRate& a) { return a.base + a.slope_x * x + a.slope_z * std::min(z, a.z_saturation); },
          [&](const RegulatedRate& g) {
            return std::clamp((g.base + g.slope_x * x) / (1.0 + g.feedback * z), g.floor, g.ceiling);
          },
          [&](const TabulatedRate& t) { return evaluate(t, x, z); },
      },
      family_);
}

bool RateFunction::depends_on_z() const {
  return std::visit(overloaded{
                        [](const ConstantRate&) { return false; },
                        [](const AffineRate& a) { return a.slope_z != 0.0 && a.z_saturation > 0.0; },
                        [](const RegulatedRate& g) { return g.feedback != 0.0; },
                        [](const TabulatedRate& t) { return t.z_nodes.size() > 1; },
                    },
                    family_);
}

std::string RateFunction::family_name() const {
  return std::visit(overloaded{
                        [](const ConstantRate&) { return std::string("constant"); },
                        [](const AffineRate&) { return std::string("affine"); },
                        [](const RegulatedRate&) { return std::string("regulated"); },
                        [](const TabulatedRate&) { return std::string("tabulated"); },
                    },
                    family_);
}

std::pair<double, double> RateFunction::range() const {
  return std::visit(
      overloaded{
          [](const ConstantRate& c) { return std::pair{c.value, c.value}; },
          [&](const AffineRate& a) {
            const double x_lo = a.base + std::min(0.0, a.slope_x);
            const double x_hi = a.base + std::max(0.0, a.slope_x);
            const double z_span = a.slope_z * a.z_saturation;  // may be +-inf
            if (a.slope_z == 0.0) return std::pair{x_lo, x_hi};
            return std::pair{x_lo + std::min(0.0, z_span), x_hi + std::max(0.0, z_span)};
          },
          [&](const RegulatedRate& g) {
            double lo = std::min(g.base, g.base + g.slope_x);
            double hi = std::max(g.base, g.base + g.slope_x);
            if (g.feedback > 0.0) {
              lo = std::min(lo, 0.0);
              hi = std::max(hi, 0.0);
            }
            return std::pair{std::clamp(lo, g.floor, g.ceiling), std::clamp(hi, g.floor, g.ceiling)};
          },
          [&](const TabulatedRate& t) {
            auto [lo, hi] = std::minmax_element(t.values.begin(), t.values.end());
            return std::pair{*lo, *hi};
          },
      },
      family_);
}

double RateFunction::lipschitz() const {
  return std::visit(
      overloaded{
          [](const ConstantRate&) { return 0.0; },
          [](const AffineRate& a) {
            return std::max(std::abs(a.slope_x), a.z_saturation > 0.0 ? std::abs(a.slope_z) : 0.0);
          },
          [](const RegulatedRate& g) {
            const double numerator = std::max(std::abs(g.base), std::abs(g.base + g.slope_x));
            return std::max(std::abs(g.slope_x), g.feedback * numerator);
          },
          [](const TabulatedRate& t) {
            const std::size_t nx = t.x_nodes.size(), nz = t.z_nodes.size();
            double lip = 0.0;
            for (std::size_t i = 0; i < nx; ++i)
              for (std::size_t j = 0; j < nz; ++j) {
                const double v = t.values[i * nz + j];
                if (i + 1 < nx)
                  lip = std::max(lip, std::abs(t.values[(i + 1) * nz + j] - v) / (t.x_nodes[i + 1] - t.x_nodes[i]));
                if (j + 1 < nz)
                  lip = std::max(lip, std::abs(t.values[i * nz + j + 1] - v) / (t.z_nodes[j + 1] - t.z_nodes[j]));
              }
            return lip;
          },
      },
      family_);
}

namespace {
void check_domain(double x, double z) {
  if (x < -kDomainSlack || x > 1.0 + kDomainSlack || z < -kDomainSlack || std::isnan(x) || std::isnan(z))
    throw std::domain_error("rate query outside [0,1] x [0,inf); extend the model first");
}
}  // namespace

double RateModel::r(double x, double z) const {
  if (extended) return division(std::clamp(x, 0.0, 1.0), std::max(z, 0.0));
  check_domain(x, z);
  return division(x, z);
}

double RateModel::m(double x, double z) const {
  if (extended) return differentiation(std::clamp(x, 0.0, 1.0), std::max(z, 0.0));
  check_domain(x, z);
  return differentiation(x, z);
}

bool RateModel::regulated() const { return division.depends_on_z() || differentiation.depends_on_z(); }

RateBounds RateModel::derive_bounds(const RateFunction& division, const RateFunction& differentiation) {
  RateBounds b;
  b.r_hat = division.range().second;
  auto [m_lo, m_hi] = differentiation.range();
  b.m_min = m_lo;
  b.m_hat = m_hi;
  b.lipschitz_r = division.lipschitz();
  b.lipschitz_m = differentiation.lipschitz();
  return b;
}

std::string to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::division_negative: return "division_negative";
    case Violation::Kind::division_above_bound: return "division_above_r_hat";
    case Violation::Kind::differentiation_below_min: return "differentiation_below_m_min";
    case Violation::Kind::differentiation_above_max: return "differentiation_above_m_hat";
    case Violation::Kind::division_lipschitz: return "division_lipschitz";
    case Violation::Kind::differentiation_lipschitz: return "differentiation_lipschitz";
    case Violation::Kind::nonpositive_m_min: return "nonpositive_m_min";
  }
  return "unknown";
}

ValidationReport validate(const RateModel& model, int samples, std::uint64_t seed, double z_max) {
  if (samples < 1) throw std::invalid_argument("validate: samples must be >= 1");
  ValidationReport report;
  const RateBounds& b = model.bounds;
  if (!(b.m_min > 0.0)) report.violations.push_back({Violation::Kind::nonpositive_m_min, 0.0, 0.0, b.m_min, 0.0});

  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  // Relative slack so that declared bounds equal to exact extremes pass.
  auto above = [](double v, double bound) { return v > bound + 1e-12 * (1.0 + std::abs(bound)); };

  for (int s = 0; s < samples; ++s) {
    const double x = unit(gen);
    const double z = z_max * unit(gen);
    const double r = model.division(x, z);
    const double m = model.differentiation(x, z);
    if (r < -1e-15) report.violations.push_back({Violation::Kind::division_negative, x, z, r, 0.0});
    if (above(r, b.r_hat)) report.violations.push_back({Violation::Kind::division_above_bound, x, z, r, b.r_hat});
    if (above(b.m_min, m))
      report.violations.push_back({Violation::Kind::differentiation_below_min, x, z, m, b.m_min});
    if (above(m, b.m_hat))
      report.violations.push_back({Violation::Kind::differentiation_above_max, x, z, m, b.m_hat});

    // Difference quotient against a nearby point, step sizes spread over decades.
    const double scale = std::pow(10.0, -4.0 + 3.0 * unit(gen));
    const double x2 = std::clamp(x + scale * (2.0 * unit(gen) - 1.0), 0.0, 1.0);
    const double z2 = std::clamp(z + scale * (2.0 * unit(gen) - 1.0), 0.0, z_max);
    const double dist = std::abs(x2 - x) + std::abs(z2 - z);
    if (dist > 0.0) {
      const double qr = std::abs(model.division(x2, z2) - r) / dist;
      const double qm = std::abs(model.differentiation(x2, z2) - m) / dist;
      if (above(qr, b.lipschitz_r * (1.0 + 1e-9)))
        report.violations.push_back({Violation::Kind::division_lipschitz, x, z, qr, b.lipschitz_r});
      if (above(qm, b.lipschitz_m * (1.0 + 1e-9)))
        report.violations.push_back({Violation::Kind::differentiation_lipschitz, x, z, qm, b.lipschitz_m});
    }
  }
  return report;
}

RateModel extend_clamped(const RateModel& model) {
  RateModel out = model;
  out.extended = true;
  return out;
}

}  // namespace hemalimit
