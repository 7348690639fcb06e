#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace hemalimit {

/// value ≡ c
struct ConstantRate {
  double value = 0.0;
};

/// base + slope_x·x + slope_z·min(z, z_saturation)
struct AffineRate {
  double base = 0.0;
  double slope_x = 0.0;
  double slope_z = 0.0;
  double z_saturation = std::numeric_limits<double>::infinity();
};

/// clamp((base + slope_x·x) / (1 + feedback·z), floor, ceiling)
///
/// The usual negative-feedback form: the rate drops as the mature
/// population grows and saturates at `floor`.
struct RegulatedRate {
  double base = 0.0;
  double slope_x = 0.0;
  double feedback = 0.0;
  double floor = 0.0;
  double ceiling = std::numeric_limits<double>::infinity();
};

/// Bilinear interpolation of `values` (row-major, x outer, z inner) on the
/// node grid; constant extension beyond the outermost nodes.
struct TabulatedRate {
  std::vector<double> x_nodes;
  std::vector<double> z_nodes;
  std::vector<double> values;
};

class RateFunction {
 public:
  using Family = std::variant<ConstantRate, AffineRate, RegulatedRate, TabulatedRate>;

  RateFunction() = default;
  explicit RateFunction(Family family);

  static RateFunction constant(double value) { return RateFunction(ConstantRate{value}); }

  double operator()(double x, double z) const;

  bool depends_on_z() const;
  std::string family_name() const;
  const Family& family() const { return family_; }

  /// Exact [inf, sup] of the function over [0,1] x [0,inf).
  std::pair<double, double> range() const;
  /// Lipschitz constant w.r.t. |dx| + |dz| over [0,1] x [0,inf).
  double lipschitz() const;

 private:
  Family family_ = ConstantRate{};
};

/// Declared constants: 0 <= r <= r_hat, m_min <= m <= m_hat, Lipschitz L_r, L_m.
struct RateBounds {
  double r_hat = 0.0;
  double m_hat = 0.0;
  double m_min = 0.0;
  double lipschitz_r = 0.0;
  double lipschitz_m = 0.0;
};

/// Division rate r(x, z), differentiation rate m(x, z), death rate d.
///
/// Queries outside [0,1] x [0,inf) throw unless the model has been passed
/// through extend_clamped(). Immutable after construction and safe to share
/// across threads.
struct RateModel {
  RateFunction division;
  RateFunction differentiation;
  double death_rate = 0.0;
  RateBounds bounds;
  bool extended = false;

  double r(double x, double z) const;
  double m(double x, double z) const;

  /// True when r or m reads the mature population.
  bool regulated() const;

  /// Bounds computed from the rate families themselves.
  static RateBounds derive_bounds(const RateFunction& division, const RateFunction& differentiation);
};

struct Violation {
  enum class Kind {
    division_negative,
    division_above_bound,
    differentiation_below_min,
    differentiation_above_max,
    division_lipschitz,
    differentiation_lipschitz,
    nonpositive_m_min,
  };
  Kind kind;
  double x;
  double z;
  double value;
  double bound;
};

std::string to_string(Violation::Kind kind);

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

/// Spot-checks the declared bounds and Lipschitz constants at `samples`
/// random points of [0,1] x [0, z_max]; deterministic in `seed`.
ValidationReport validate(const RateModel& model, int samples, std::uint64_t seed = 0x5eed,
                          double z_max = 10.0);

/// Extension to R x R by clamping x into [0,1] and z into [0,inf).
RateModel extend_clamped(const RateModel& model);

}  // namespace hemalimit
