#pragma once

// Parametric scaling-law families, their analytic parameter Jacobians, and
// the per-task cost proxies used to price candidate experiments.

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace activesl {

/// A training configuration, e.g. (model size N, token count D).
struct ConfigPoint {
  std::vector<double> coords;

  ConfigPoint() = default;
  ConfigPoint(std::initializer_list<double> c) : coords(c) {}
  explicit ConfigPoint(std::vector<double> c) : coords(std::move(c)) {}

  std::size_t dim() const { return coords.size(); }
  double operator[](std::size_t i) const { return coords[i]; }
  std::span<const double> view() const { return coords; }

  friend bool operator==(const ConfigPoint&, const ConfigPoint&) = default;
};

/// Law parameters theta, one entry per declared parameter.
using ParamVector = Eigen::VectorXd;

struct ParamBound {
  double lo;
  double hi;
  friend bool operator==(const ParamBound&, const ParamBound&) = default;
};

enum class ParamRole {
  Offset,       // additive constants, unconstrained sign
  Amplitude,    // positive multiplicative coefficients
  Exponent,     // positive decay exponents
  Coefficient,  // signed regression coefficients
};

struct ParamInfo {
  std::string name;
  ParamRole role;
};

/// One registered law family. Implementations are stateless apart from the
/// input dimension they were built for.
class LawFamily {
 public:
  virtual ~LawFamily() = default;

  virtual std::string_view id() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::vector<ParamInfo> params() const = 0;

  /// Evaluates f(x; theta) and, when `jac` is non-empty, df/dtheta into it.
  /// Returns false when the formula leaves its domain (power or log of a
  /// non-positive base) or overflows.
  virtual bool eval(std::span<const double> theta, std::span<const double> x, double& value,
                    std::span<double> jac) const = 0;
};

using FamilyFactory = std::shared_ptr<const LawFamily> (*)(std::size_t input_dim);

/// Registers a family constructor under `family_id`. Shipped families:
/// "sum_power", "log_quadratic", "saturating_power", "linear".
void register_family(std::string family_id, FamilyFactory factory);
std::shared_ptr<const LawFamily> make_family(std::string_view family_id, std::size_t input_dim);
std::vector<std::string> registered_families();

ParamBound default_bound(ParamRole role);
bool default_positive(ParamRole role);

/// A law family instantiated for a concrete input dimension, together with
/// the box bounds and log-scale flags used for fitting.
class LawSpec {
 public:
  LawSpec(std::string family_id, std::size_t input_dim);
  LawSpec(std::string family_id, std::size_t input_dim, std::vector<ParamBound> bounds,
          std::vector<bool> positive);

  const std::string& family_id() const { return family_id_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_params() const { return names_.size(); }
  const std::vector<std::string>& param_names() const { return names_; }
  const std::vector<ParamBound>& bounds() const { return bounds_; }
  const std::vector<bool>& positive() const { return positive_; }
  const LawFamily& family() const { return *family_; }

  void set_bounds(std::vector<ParamBound> bounds);
  void set_positive(std::vector<bool> positive);

  /// Throws ValidationError unless theta has p entries, all within bounds,
  /// with flagged entries strictly positive.
  void check_params(const ParamVector& theta) const;
  void check_point(const ConfigPoint& x) const;
  bool within_bounds(const ParamVector& theta) const;

  friend bool operator==(const LawSpec& a, const LawSpec& b) {
    return a.family_id_ == b.family_id_ && a.input_dim_ == b.input_dim_ && a.bounds_ == b.bounds_ &&
           a.positive_ == b.positive_;
  }

 private:
  void validate() const;

  std::string family_id_;
  std::size_t input_dim_;
  std::shared_ptr<const LawFamily> family_;
  std::vector<std::string> names_;
  std::vector<ParamBound> bounds_;
  std::vector<bool> positive_;
};

double evaluate(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x);
Eigen::VectorXd param_jacobian(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x);

/// Jacobian with positive-flagged columns multiplied by theta_i, i.e. the
/// sensitivity with respect to log(theta_i) for those parameters.
Eigen::VectorXd scaled_jacobian(const LawSpec& spec, const ParamVector& theta, const ConfigPoint& x);

/// Non-throwing hot-path variant: value and (optionally scaled) Jacobian.
bool try_evaluate(const LawSpec& spec, std::span<const double> theta, std::span<const double> x,
                  double& value, std::span<double> jac, bool scaled);

enum class CostKind { Product6ND, ProductNE, SingleN, DualSparse, Unit };

std::string_view to_string(CostKind kind);
CostKind cost_kind_from_string(std::string_view name);

struct CostModel {
  CostKind kind = CostKind::Unit;
  std::vector<std::size_t> indices;

  /// Number of coordinate indices the formula consumes.
  static std::size_t arity(CostKind kind);
  void validate(std::size_t input_dim) const;

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

/// 6ND, NE, N, 6 N1 D1 + 6 N2 D2 or 1, depending on the model kind.
double cost(const CostModel& model, const ConfigPoint& x);

}  // namespace activesl
